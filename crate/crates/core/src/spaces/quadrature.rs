//! Symmetric quadrature rules on the reference triangle `(0,0), (1,0), (0,1)`.

use super::SpaceError;

/// Points in barycentric coordinates `(λ0, λ1, λ2)` with weights summing to
/// the reference area 1/2.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Default degree for bilinear and trilinear forms: the EMAC form with three
/// P2 arguments has a degree-5 integrand.
pub const DEFAULT_DEGREE: usize = 5;

/// Orbit of type `(a, a, 1-2a)`.
fn s21(a: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a, b], [a, b, a], [b, a, a]] {
        points.push(p);
        weights.push(0.5 * w);
    }
}

/// Orbit of type `(a, b, 1-a-b)` with all six permutations.
fn s111(a: f64, b: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(p);
        weights.push(0.5 * w);
    }
}

/// Rule exact for all bivariate polynomials up to `degree` (1 to 6).
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule, SpaceError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match degree {
        1 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(0.5);
        }
        2 => s21(1.0 / 6.0, 1.0 / 3.0, &mut points, &mut weights),
        3 | 4 => {
            s21(
                0.445_948_490_915_964_886_318_329_3,
                0.223_381_589_678_011_465_695_007,
                &mut points,
                &mut weights,
            );
            s21(
                0.091_576_213_509_770_743_459_571_46,
                0.109_951_743_655_321_867_638_326_3,
                &mut points,
                &mut weights,
            );
        }
        5 => {
            let r15 = 15f64.sqrt();
            points.push([1.0 / 3.0; 3]);
            weights.push(0.5 * 9.0 / 40.0);
            s21((6.0 - r15) / 21.0, (155.0 - r15) / 1200.0, &mut points, &mut weights);
            s21((6.0 + r15) / 21.0, (155.0 + r15) / 1200.0, &mut points, &mut weights);
        }
        6 => {
            s21(
                0.249_286_745_170_910_421_291_638_6,
                0.116_786_275_726_379_366_025_289_6,
                &mut points,
                &mut weights,
            );
            s21(
                0.063_089_014_491_502_228_340_331_6,
                0.050_844_906_370_206_816_920_936_81,
                &mut points,
                &mut weights,
            );
            s111(
                0.053_145_049_844_816_947_353_249_67,
                0.310_352_451_033_784_405_416_607_7,
                0.082_851_075_618_373_575_193_553_46,
                &mut points,
                &mut weights,
            );
        }
        other => {
            return Err(SpaceError::InvalidParameter(format!(
                "no quadrature rule of degree {other} (supported: 1..=6)"
            )))
        }
    }
    Ok(QuadratureRule {
        degree,
        points,
        weights,
    })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// Collapsed tensor-product rule with `n × n` points, exact for polynomials
/// of total degree `2n − 2`.
pub fn conical_rule(n: usize) -> Result<QuadratureRule, SpaceError> {
    if n == 0 {
        return Err(SpaceError::InvalidParameter("conical rule needs at least one point".into()));
    }
    let gl = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for &(s, ws) in &gl {
        for &(r, wr) in &gl {
            let xi = s;
            let eta = r * (1.0 - s);
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(ws * wr * (1.0 - s));
        }
    }
    Ok(QuadratureRule {
        degree: 2 * n - 2,
        points,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ x^p y^q over the reference triangle = p! q! / (p+q+2)!.
    fn monomial_integral(p: u32, q: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(p) * fact(q) / fact(p + q + 2)
    }

    fn apply(rule: &QuadratureRule, p: i32, q: i32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| w * l[1].powi(p) * l[2].powi(q))
            .sum()
    }

    #[test]
    fn midpoint_rule() {
        let r = quadrature_rule(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights[0], 0.5);
    }

    #[test]
    fn exact_on_all_monomials_up_to_degree() {
        for degree in 1..=6 {
            let rule = quadrature_rule(degree).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-15);
            for p in 0..=degree as u32 {
                for q in 0..=(degree as u32 - p) {
                    let exact = monomial_integral(p, q);
                    let got = apply(&rule, p as i32, q as i32);
                    assert!(
                        (got - exact).abs() <= 2e-16 * exact.max(1e-2) * 10.0,
                        "degree {degree} x^{p} y^{q}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn seven_point_rule_on_x2y2() {
        let rule = quadrature_rule(5).unwrap();
        assert_eq!(rule.len(), 7);
        assert!((apply(&rule, 2, 2) - 1.0 / 180.0).abs() <= 1e-15);
    }

    #[test]
    fn twelve_point_rule_on_x3y3() {
        let rule = quadrature_rule(6).unwrap();
        assert_eq!(rule.len(), 12);
        assert!((apply(&rule, 3, 3) - monomial_integral(3, 3)).abs() <= 1e-16);
    }

    #[test]
    fn unsupported_degree() {
        assert!(quadrature_rule(0).is_err());
        assert!(quadrature_rule(7).is_err());
    }

    #[test]
    fn conical_rule_exactness() {
        for n in [1, 3, 8] {
            let rule = conical_rule(n).unwrap();
            assert_eq!(rule.len(), n * n);
            let d = rule.degree as u32;
            for p in 0..=d {
                for q in 0..=(d - p) {
                    let exact = monomial_integral(p, q);
                    let got = apply(&rule, p as i32, q as i32);
                    assert!((got - exact).abs() <= 1e-15, "n {n} x^{p} y^{q}: {got} vs {exact}");
                }
            }
        }
        assert!(conical_rule(0).is_err());
    }
}
