//! Reference-triangle Lagrange bases in barycentric coordinates.
//!
//! Local P2 node order: the three vertices, then the midpoints of edges
//! `(v0,v1)`, `(v1,v2)`, `(v2,v0)`. Gradients are taken with respect to the
//! reference coordinates `(ξ, η) = (λ1, λ2)`.

use super::QuadratureRule;

pub const P2_LOCAL: usize = 6;

/// Local vertex pairs spanned by the three P2 edge nodes.
pub const P2_EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

pub fn p2_values(l: [f64; 3]) -> [f64; P2_LOCAL] {
    let [l0, l1, l2] = l;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

pub fn p2_ref_gradients(l: [f64; 3]) -> [[f64; 2]; P2_LOCAL] {
    let [l0, l1, l2] = l;
    let a = 4.0 * l0 - 1.0;
    [
        [-a, -a],
        [4.0 * l1 - 1.0, 0.0],
        [0.0, 4.0 * l2 - 1.0],
        [4.0 * (l0 - l1), -4.0 * l1],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
    ]
}

/// P1 values are the barycentric coordinates themselves.
pub fn p1_values(l: [f64; 3]) -> [f64; 3] {
    l
}

pub const P1_REF_GRADIENTS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Basis values and reference gradients at every point of a rule.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub p2: Vec<[f64; P2_LOCAL]>,
    pub p2_grad: Vec<[[f64; 2]; P2_LOCAL]>,
    pub p1: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new(rule: QuadratureRule) -> Self {
        let p2 = rule.points.iter().map(|&l| p2_values(l)).collect();
        let p2_grad = rule.points.iter().map(|&l| p2_ref_gradients(l)).collect();
        let p1 = rule.points.iter().map(|&l| p1_values(l)).collect();
        Self {
            rule,
            p2,
            p2_grad,
            p1,
        }
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }
}
