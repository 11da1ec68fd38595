//! Benchmark problems, the discrete L²(0,T;H¹) error norm, and observed
//! convergence rates.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{Assembler, AssemblyError, DirichletConditions, SharedField, VectorField};
use crate::spaces::{SpaceError, State, TaylorHoodSpace};
use crate::Point;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("rate {index} is undefined: errors and parameters must be positive and parameters strictly decreasing")]
    UndefinedRate { index: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Everything a time integrator needs beyond the mesh.
#[derive(Clone)]
pub struct Scenario {
    pub nu: f64,
    pub initial_velocity: SharedField,
    pub dirichlet: DirichletConditions,
    pub forcing: Option<SharedField>,
    /// Reference velocity for error columns.
    pub reference_velocity: Option<SharedField>,
    /// Boundary marker on which drag and lift are measured.
    pub force_marker: Option<String>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("nu", &self.nu)
            .field("dirichlet", &self.dirichlet)
            .field("forcing", &self.forcing.is_some())
            .field("reference_velocity", &self.reference_velocity.is_some())
            .field("force_marker", &self.force_marker)
            .finish()
    }
}

/// `u = (cos y, sin x)eᵗ`, `p = (x − y)(1 + t)` on the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedProblem {
    pub nu: f64,
}

impl Default for ManufacturedProblem {
    fn default() -> Self {
        Self { nu: 1.0 }
    }
}

impl ManufacturedProblem {
    pub fn exact_u(x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = t.exp();
        [y.cos() * e, x.sin() * e]
    }

    pub fn exact_p(x: f64, y: f64, t: f64) -> f64 {
        (x - y) * (1.0 + t)
    }

    /// `u_t − νΔu + (u·∇)u + ∇p` for the exact pair.
    pub fn forcing(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let e = t.exp();
        let u = Self::exact_u(x, y, t);
        let s = 1.0 + self.nu;
        [
            s * u[0] - x.sin() * y.sin() * e * e + (1.0 + t),
            s * u[1] + x.cos() * y.cos() * e * e - (1.0 + t),
        ]
    }

    /// Exact data on every boundary edge.
    pub fn scenario(&self) -> Scenario {
        let exact: SharedField = Arc::new(|x: Point, t| Self::exact_u(x[0], x[1], t));
        let me = *self;
        Scenario {
            nu: self.nu,
            initial_velocity: exact.clone(),
            dirichlet: DirichletConditions::new().with(crate::mesh::ALL_MARKER, exact.clone()),
            forcing: Some(Arc::new(move |x: Point, t| me.forcing(x[0], x[1], t))),
            reference_velocity: Some(exact),
            force_marker: None,
        }
    }
}

/// Forcing of the manufactured problem at `ν = 1`.
pub fn manufactured_forcing(x: f64, y: f64, t: f64) -> [f64; 2] {
    ManufacturedProblem { nu: 1.0 }.forcing(x, y, t)
}

/// Standing vortex on `(−0.5, 0.5)²` with compactly supported velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GreshoProblem;

impl GreshoProblem {
    pub const INNER: f64 = 0.2;
    pub const OUTER: f64 = 0.4;
    pub const DT: f64 = 0.025;
    pub const T_END: f64 = 8.0;
    pub const BOUNDS: [f64; 4] = [-0.5, 0.5, -0.5, 0.5];

    /// Pressure constant of the middle band.
    pub fn c2() -> f64 {
        6.0 - 4.0 * 0.4f64.ln()
    }

    /// Pressure constant of the inner disc.
    pub fn c1() -> f64 {
        Self::c2() - 4.0 + 4.0 * 0.2f64.ln()
    }

    /// Tangential speed as a function of radius.
    pub fn swirl(r: f64) -> f64 {
        if r < Self::INNER {
            5.0 * r
        } else if r <= Self::OUTER {
            2.0 - 5.0 * r
        } else {
            0.0
        }
    }

    pub fn velocity(x: f64, y: f64) -> [f64; 2] {
        let r = x.hypot(y);
        if r < Self::INNER {
            [-5.0 * y, 5.0 * x]
        } else if r <= Self::OUTER {
            [-2.0 * y / r + 5.0 * y, 2.0 * x / r - 5.0 * x]
        } else {
            [0.0, 0.0]
        }
    }

    pub fn pressure(x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        if r < Self::INNER {
            12.5 * r * r + Self::c1()
        } else if r <= Self::OUTER {
            12.5 * r * r - 20.0 * r + 4.0 * r.ln() + Self::c2()
        } else {
            0.0
        }
    }

    pub fn scenario(&self) -> Scenario {
        let u0: SharedField = Arc::new(|x: Point, _| Self::velocity(x[0], x[1]));
        Scenario {
            nu: 0.0,
            initial_velocity: u0.clone(),
            dirichlet: DirichletConditions::homogeneous(&[crate::mesh::ALL_MARKER]),
            forcing: None,
            reference_velocity: Some(u0),
            force_marker: None,
        }
    }
}

/// Initial velocity and kinematic pressure of the standing vortex.
pub fn gresho_initial(x: f64, y: f64) -> ([f64; 2], f64) {
    (GreshoProblem::velocity(x, y), GreshoProblem::pressure(x, y))
}

/// Channel `[0, 2.2] × [0, 0.41]` with a cylinder of radius 0.05 at `(0.2, 0.2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderProblem {
    pub nu: f64,
}

impl Default for CylinderProblem {
    fn default() -> Self {
        Self { nu: 1e-3 }
    }
}

impl CylinderProblem {
    pub const HEIGHT: f64 = 0.41;
    pub const LENGTH: f64 = 2.2;
    pub const CENTER: Point = [0.2, 0.2];
    pub const RADIUS: f64 = 0.05;
    pub const DT: f64 = 0.01;
    pub const T_END: f64 = 8.0;
    pub const INFLOW: &'static str = "inflow";
    pub const OUTFLOW: &'static str = "outflow";
    pub const WALLS: &'static str = "walls";
    pub const CYLINDER: &'static str = "cylinder";

    pub fn scenario(&self) -> Scenario {
        let profile: SharedField =
            Arc::new(|x: Point, t| cylinder_inflow(t, x[1].clamp(0.0, Self::HEIGHT)).unwrap_or([0.0; 2]));
        let zero: SharedField = Arc::new(|_, _| [0.0, 0.0]);
        Scenario {
            nu: self.nu,
            initial_velocity: zero.clone(),
            dirichlet: DirichletConditions::new()
                .with(Self::INFLOW, profile.clone())
                .with(Self::OUTFLOW, profile)
                .with(Self::WALLS, zero.clone())
                .with(Self::CYLINDER, zero),
            forcing: None,
            reference_velocity: None,
            force_marker: Some(Self::CYLINDER.to_string()),
        }
    }
}

/// Parabolic in- and outflow profile with amplitude `1.5 sin(πt/8)`.
pub fn cylinder_inflow(t: f64, y: f64) -> Result<[f64; 2], BenchmarkError> {
    let h = CylinderProblem::HEIGHT;
    if !(-1e-9..=h + 1e-9).contains(&y) {
        return Err(BenchmarkError::InvalidParameter(format!(
            "inflow height y = {y} outside [0, {h}]"
        )));
    }
    Ok([6.0 / (h * h) * (PI * t / 8.0).sin() * y * (h - y), 0.0])
}

/// Central fourth-order difference step for exact-field gradients.
const GRADIENT_STEP: f64 = 1e-3;

/// `∂_d u_c` of a closed-form field by a five-point central difference.
fn field_gradient(f: &VectorField, x: Point, t: f64) -> [[f64; 2]; 2] {
    let h = GRADIENT_STEP;
    let mut g = [[0.0; 2]; 2];
    for d in 0..2 {
        let at = |s: f64| {
            let mut y = x;
            y[d] += s * h;
            f(y, t)
        };
        let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
        for c in 0..2 {
            g[c][d] = (8.0 * (p1[c] - m1[c]) - (p2[c] - m2[c])) / (12.0 * h);
        }
    }
    g
}

/// Squared errors `(‖u(t) − u_h‖², ‖∇(u(t) − u_h)‖²)` against the exact
/// field, integrated with the assembler's quadrature rule.
pub fn exact_error_sq(
    asm: &Assembler<'_>,
    u_h: &[f64],
    exact: &VectorField,
    t: f64,
) -> Result<(f64, f64), BenchmarkError> {
    asm.space().check_velocity(u_h)?;
    let (mut l2, mut h1) = (0.0, 0.0);
    let mut bad = None;
    asm.for_each_point(u_h, |qp| {
        let u = exact(qp.x, t);
        let g = field_gradient(exact, qp.x, t);
        if !(u.iter().chain(g.iter().flatten()).all(|v| v.is_finite())) {
            bad.get_or_insert(qp.x);
            return;
        }
        for c in 0..2 {
            l2 += qp.jxw * (u[c] - qp.u[c]).powi(2);
            for d in 0..2 {
                h1 += qp.jxw * (g[c][d] - qp.grad_u[c][d]).powi(2);
            }
        }
    });
    match bad {
        Some(x) => Err(AssemblyError::Evaluation { x: x[0], y: x[1], t }.into()),
        None => Ok((l2, h1)),
    }
}

/// `{Δt Σ_{n≥1} ‖∇(u(tⁿ) − u_hⁿ)‖²}^{1/2}` over a uniformly spaced
/// trajectory whose first entry is the initial level.
pub fn error_norm_2_1(
    trajectory: &[State],
    exact: &crate::assembly::VectorField,
    space: &TaylorHoodSpace,
) -> Result<f64, BenchmarkError> {
    if trajectory.len() < 2 {
        return Err(BenchmarkError::Usage(format!(
            "error norm needs at least two time levels, got {}",
            trajectory.len()
        )));
    }
    let dt = trajectory[1].t - trajectory[0].t;
    if !(dt > 0.0) {
        return Err(BenchmarkError::Usage("time levels must increase".into()));
    }
    for w in trajectory.windows(2) {
        if ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.max(w[1].t.abs()) {
            return Err(BenchmarkError::Usage("time levels must be uniformly spaced".into()));
        }
    }
    let asm = Assembler::new(space);
    let mut sum = 0.0;
    for s in &trajectory[1..] {
        sum += exact_error_sq(&asm, &s.u, exact, s.t)?.1;
    }
    Ok((dt * sum).sqrt())
}

/// `rate_k = ln(e_{k−1}/e_k) / ln(p_{k−1}/p_k)`.
pub fn convergence_rate(errors: &[f64], params: &[f64]) -> Result<Vec<f64>, BenchmarkError> {
    if errors.len() != params.len() || errors.len() < 2 {
        return Err(BenchmarkError::Usage(format!(
            "need matching lists of length ≥ 2, got {} errors and {} parameters",
            errors.len(),
            params.len()
        )));
    }
    (1..errors.len())
        .map(|k| {
            let ok = errors[k - 1] > 0.0 && errors[k] > 0.0 && params[k] > 0.0 && params[k - 1] > params[k];
            if ok {
                Ok((errors[k - 1] / errors[k]).ln() / (params[k - 1] / params[k]).ln())
            } else {
                Err(BenchmarkError::UndefinedRate { index: k })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::interpolate_velocity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Strong residual of the momentum equation by central differences.
    fn strong_residual(x: f64, y: f64, t: f64) -> [f64; 2] {
        let h = 1e-4;
        let u = |x, y, t| ManufacturedProblem::exact_u(x, y, t);
        let p = |x, y, t| ManufacturedProblem::exact_p(x, y, t);
        let u0 = u(x, y, t);
        let ut = [(u(x, y, t + h)[0] - u(x, y, t - h)[0]) / (2.0 * h), (u(x, y, t + h)[1] - u(x, y, t - h)[1]) / (2.0 * h)];
        let dx = |c: usize| (u(x + h, y, t)[c] - u(x - h, y, t)[c]) / (2.0 * h);
        let dy = |c: usize| (u(x, y + h, t)[c] - u(x, y - h, t)[c]) / (2.0 * h);
        let lap = |c: usize| {
            (u(x + h, y, t)[c] + u(x - h, y, t)[c] + u(x, y + h, t)[c] + u(x, y - h, t)[c] - 4.0 * u0[c]) / (h * h)
        };
        let px = (p(x + h, y, t) - p(x - h, y, t)) / (2.0 * h);
        let py = (p(x, y + h, t) - p(x, y - h, t)) / (2.0 * h);
        let f = manufactured_forcing(x, y, t);
        [
            ut[0] - lap(0) + u0[0] * dx(0) + u0[1] * dy(0) + px - f[0],
            ut[1] - lap(1) + u0[0] * dx(1) + u0[1] * dy(1) + py - f[1],
        ]
    }

    #[test]
    fn manufactured_forcing_at_origin() {
        assert_eq!(manufactured_forcing(0.0, 0.0, 0.0), [3.0, 0.0]);
    }

    #[test]
    fn manufactured_solution_solves_the_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (x, y, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let r = strong_residual(x, y, t);
            assert!(r[0].abs() < 1e-5 && r[1].abs() < 1e-5, "{r:?}");
            // ∂x u1 + ∂y u2 vanishes identically for this pair.
            let h = 1e-6;
            let u = ManufacturedProblem::exact_u;
            let div = (u(x + h, y, t)[0] - u(x - h, y, t)[0] + u(x, y + h, t)[1] - u(x, y - h, t)[1]) / (2.0 * h);
            assert_eq!(div, 0.0);
        }
    }

    #[test]
    fn gresho_pointwise_values() {
        assert_eq!(GreshoProblem::velocity(0.0, 0.1), [-0.5, 0.0]);
        let v = GreshoProblem::velocity(0.4, 0.0);
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        assert_eq!(GreshoProblem::velocity(0.45, 0.0), [0.0, 0.0]);
        for theta in [0.0, 0.3, 1.7, 4.0] {
            let (c, s) = (f64::cos(theta), f64::sin(theta));
            let r = 0.2;
            let inner = [-5.0 * r * s, 5.0 * r * c];
            let outer = GreshoProblem::velocity(r * c, r * s);
            assert!((inner[0] - outer[0]).abs() < 1e-14 && (inner[1] - outer[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn gresho_pressure_is_continuous() {
        for r in [GreshoProblem::INNER, GreshoProblem::OUTER] {
            let below = GreshoProblem::pressure(r - 1e-12, 0.0);
            let above = GreshoProblem::pressure(r + 1e-12, 0.0);
            assert!((below - above).abs() < 1e-9, "r = {r}: {below} vs {above}");
        }
    }

    #[test]
    fn gresho_velocity_is_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for _ in 0..200 {
            let (x, y) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let r = f64::hypot(x, y);
            if (r - 0.2).abs() < 1e-4 || (r - 0.4).abs() < 1e-4 || r < 1e-4 {
                continue;
            }
            let u = GreshoProblem::velocity;
            let div = (u(x + h, y)[0] - u(x - h, y)[0] + u(x, y + h)[1] - u(x, y - h)[1]) / (2.0 * h);
            assert!(div.abs() <= 1e-6, "div {div} at r = {r}");
        }
    }

    #[test]
    fn inflow_profile() {
        assert_eq!(cylinder_inflow(3.0, 0.0).unwrap(), [0.0, 0.0]);
        assert!(cylinder_inflow(3.0, 0.41).unwrap()[0].abs() < 1e-15);
        let v = cylinder_inflow(4.0, 0.205).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-14 && v[1] == 0.0);
        assert_eq!(cylinder_inflow(0.0, 0.1).unwrap(), [0.0, 0.0]);
        assert!(cylinder_inflow(1.0, 0.5).is_err());
        assert!(cylinder_inflow(1.0, -0.01).is_err());
    }

    #[test]
    fn rates() {
        assert_eq!(convergence_rate(&[4.0, 1.0], &[2.0, 1.0]).unwrap(), vec![2.0]);
        let r = convergence_rate(&[2.32618e-6, 5.80867e-7], &[0.25, 0.125]).unwrap();
        // A reference rate of 2.00209 is quoted for this pair; the pair itself
        // gives log2(4.00466) = 2.00168.
        assert!((r[0] - 2.0016829615).abs() < 1e-9);
        assert!((r[0] - 2.00209).abs() < 1e-3);
        let r = convergence_rate(&[0.0281784, 0.00693954], &[0.25, 0.125]).unwrap();
        assert!((r[0] - 2.02165).abs() < 1e-4);
        assert!(matches!(
            convergence_rate(&[1.0, 0.0], &[2.0, 1.0]),
            Err(BenchmarkError::UndefinedRate { index: 1 })
        ));
        assert!(convergence_rate(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn error_norm_of_interpolant_is_the_interpolation_floor() {
        let space = crate::spaces::build_taylor_hood(
            crate::mesh::generate_rectangle(4, 4, [0.0, 1.0, 0.0, 1.0]).unwrap(),
        );
        let exact = |x: Point, t: f64| ManufacturedProblem::exact_u(x[0], x[1], t);
        let traj: Vec<State> = (0..3)
            .map(|k| {
                let t = 0.1 * k as f64;
                State { u: interpolate_velocity(&space, t, exact).unwrap(), p: vec![0.0; space.n_pressure()], t }
            })
            .collect();
        let floor = error_norm_2_1(&traj, &exact, &space).unwrap();
        // Independent quadrature of ‖∇(u − I_h u)‖ at t = 0 on this mesh.
        let per_level = 0.0023272344520743793;
        let expect = (0.1 * per_level * per_level * ((0.2f64).exp() + (0.4f64).exp())).sqrt();
        assert!((floor - expect).abs() < 1e-4 * expect, "{floor} vs {expect}");
        let zeros: Vec<State> = traj.iter().map(|s| State::zeros(&space, s.t)).collect();
        assert!(error_norm_2_1(&zeros, &exact, &space).unwrap() > 100.0 * floor);
        assert_eq!(error_norm_2_1(&zeros, &|_, _| [0.0, 0.0], &space).unwrap(), 0.0);
        assert!(error_norm_2_1(&zeros[..1], &exact, &space).is_err());
    }

    #[test]
    fn field_gradient_matches_closed_form() {
        let f = |x: Point, t: f64| ManufacturedProblem::exact_u(x[0], x[1], t);
        for (x, t) in [([0.3, 0.7], 0.0), ([1.0, 0.0], 1.0), ([-2.0, 5.0], 0.5)] {
            let g = field_gradient(&f, x, t);
            let e = f64::exp(t);
            let exact = [[0.0, -x[1].sin() * e], [x[0].cos() * e, 0.0]];
            for c in 0..2 {
                for d in 0..2 {
                    assert!((g[c][d] - exact[c][d]).abs() < 1e-11);
                }
            }
        }
    }
}
