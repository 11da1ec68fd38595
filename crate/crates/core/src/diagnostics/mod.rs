//! Monitored quantities: kinetic energy, linear and angular momentum, the G-
//! and F-norms of the filtered scheme, its modified energy balance, the split
//! of dissipation, and drag/lift coefficients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{dot, Assembler, AssemblyError, SparseMatrix, VectorField};
use crate::spaces::{SpaceError, State, TaylorHoodSpace, P2_LOCAL};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("boundary marker `{0}` is not defined on this mesh")]
    MissingMarker(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Per-step diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `½‖u‖²`.
    pub energy: f64,
    pub momentum: [f64; 2],
    pub angular_momentum: f64,
    /// G-norm² of the pair `(uⁿ⁺¹, uⁿ)`.
    pub g_norm_sq: f64,
    pub numerical_dissipation: f64,
    pub physical_dissipation: f64,
    pub drag: Option<f64>,
    pub lift: Option<f64>,
    pub newton_iters: usize,
    /// `‖u(t) − u_h‖` against the reference velocity, when one is known.
    pub l2_error: Option<f64>,
    /// `‖∇(u(t) − u_h)‖`, the per-step term of the L²(0,T;H¹) norm.
    pub h1_error: Option<f64>,
}

/// Cached operators for repeated evaluation of diagnostics on one space.
#[derive(Clone, Debug)]
pub struct Monitor {
    mass: SparseMatrix,
    /// Stiffness at `ν = 1`.
    stiffness: SparseMatrix,
    /// `M e₁`, `M e₂`, `M φ` with `φ = (y, −x)`.
    moment_x: Vec<f64>,
    moment_y: Vec<f64>,
    moment_rot: Vec<f64>,
}

impl Monitor {
    pub fn new(asm: &Assembler<'_>) -> Self {
        let space = asm.space();
        let mass = asm.mass();
        let n = space.n_velocity();
        let mut ex = vec![0.0; n];
        let mut ey = vec![0.0; n];
        let mut rot = vec![0.0; n];
        for (i, x) in space.node_coords().iter().enumerate() {
            ex[2 * i] = 1.0;
            ey[2 * i + 1] = 1.0;
            rot[2 * i] = x[1];
            rot[2 * i + 1] = -x[0];
        }
        Self {
            moment_x: mass.mul_vec(&ex),
            moment_y: mass.mul_vec(&ey),
            moment_rot: mass.mul_vec(&rot),
            stiffness: asm.stiffness(1.0),
            mass,
        }
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn l2_sq(&self, u: &[f64]) -> f64 {
        self.mass.bilinear(u, u)
    }

    pub fn l2_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.mass.bilinear(a, b)
    }

    pub fn grad_sq(&self, u: &[f64]) -> f64 {
        self.stiffness.bilinear(u, u)
    }

    pub fn kinetic_energy(&self, u: &[f64]) -> f64 {
        0.5 * self.l2_sq(u)
    }

    pub fn momentum(&self, u: &[f64]) -> [f64; 2] {
        [dot(&self.moment_x, u), dot(&self.moment_y, u)]
    }

    pub fn angular_momentum(&self, u: &[f64]) -> f64 {
        dot(&self.moment_rot, u)
    }

    /// `(3/2)‖a‖² − (3/2)(a,b) + (1/2)‖b‖²`.
    pub fn g_norm_sq_pair(&self, a: &[f64], b: &[f64]) -> f64 {
        1.5 * self.l2_sq(a) - 1.5 * self.l2_inner(a, b) + 0.5 * self.l2_sq(b)
    }

    /// `3‖u‖²`, the squared F-norm.
    pub fn f_norm_sq(&self, u: &[f64]) -> f64 {
        3.0 * self.l2_sq(u)
    }

    /// `((3/4)‖uⁿ⁺¹ − 2uⁿ + uⁿ⁻¹‖², νΔt‖∇F[uⁿ⁺¹]‖²)`.
    pub fn dissipation_split(&self, u_next: &[f64], u_n: &[f64], u_nm1: &[f64], nu: f64, dt: f64) -> (f64, f64) {
        let curv = second_difference(u_next, u_n, u_nm1);
        let f = crate::solver::f_extrapolant(u_next, u_n, u_nm1);
        (0.25 * self.f_norm_sq(&curv), nu * dt * self.grad_sq(&f))
    }
}

pub(crate) fn second_difference(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    assert!(a.len() == b.len() && b.len() == c.len(), "vector lengths differ");
    a.iter().zip(b).zip(c).map(|((x, y), z)| x - 2.0 * y + z).collect()
}

pub fn kinetic_energy(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    0.5 * crate::assembly::assemble_mass(space).bilinear(u, u)
}

pub fn momentum(space: &TaylorHoodSpace, u: &[f64]) -> [f64; 2] {
    Monitor::new(&Assembler::new(space)).momentum(u)
}

/// `∫ u · (y, −x)`.
pub fn angular_momentum(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    Monitor::new(&Assembler::new(space)).angular_momentum(u)
}

pub fn g_norm_sq_pair(space: &TaylorHoodSpace, a: &[f64], b: &[f64]) -> f64 {
    let m = crate::assembly::assemble_mass(space);
    1.5 * m.bilinear(a, a) - 1.5 * m.bilinear(a, b) + 0.5 * m.bilinear(b, b)
}

pub fn f_norm_sq(space: &TaylorHoodSpace, u: &[f64]) -> f64 {
    3.0 * crate::assembly::assemble_mass(space).bilinear(u, u)
}

pub fn dissipation_split(
    space: &TaylorHoodSpace,
    u_next: &[f64],
    u_n: &[f64],
    u_nm1: &[f64],
    nu: f64,
    dt: f64,
) -> (f64, f64) {
    Monitor::new(&Assembler::new(space)).dissipation_split(u_next, u_n, u_nm1, nu, dt)
}

/// Online accumulator of the modified energy balance
/// `G(u^N, u^{N−1}) + Σ νΔt‖∇F[u]‖² + Σ ¼‖u^{n+1} − 2uⁿ + u^{n−1}‖²_F
///  − G(u^1, u^0) − Σ Δt (f, F[u])`, which vanishes for the filtered scheme
/// with homogeneous Dirichlet data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyBalance {
    initial: f64,
    current: f64,
    dissipation: f64,
    filter_loss: f64,
    work: f64,
    steps: usize,
}

impl EnergyBalance {
    /// Starts from the pair `(uⁿ, uⁿ⁻¹)`.
    pub fn new(monitor: &Monitor, u_n: &[f64], u_nm1: &[f64]) -> Self {
        let g = monitor.g_norm_sq_pair(u_n, u_nm1);
        Self { initial: g, current: g, ..Self::default() }
    }

    /// Adds the step producing `u_next`; `load` is the assembled forcing at
    /// the new time level.
    pub fn record(
        &mut self,
        monitor: &Monitor,
        levels: [&[f64]; 3],
        dt: f64,
        nu: f64,
        load: Option<&[f64]>,
    ) {
        let [u_next, u_n, u_nm1] = levels;
        let (num, phys) = monitor.dissipation_split(u_next, u_n, u_nm1, nu, dt);
        self.filter_loss += num;
        self.dissipation += phys;
        if let Some(load) = load {
            let f = crate::solver::f_extrapolant(u_next, u_n, u_nm1);
            self.work += dt * dot(load, &f);
        }
        self.current = monitor.g_norm_sq_pair(u_next, u_n);
        self.steps += 1;
    }

    pub fn residual(&self) -> f64 {
        self.current + self.dissipation + self.filter_loss - self.initial - self.work
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Balance residual over stored levels `u⁰, u¹, …, u^N` at times
/// `t0 + k·dt`, starting from the pair `(u¹, u⁰)`.
pub fn energy_balance_residual(
    space: &TaylorHoodSpace,
    levels: &[Vec<f64>],
    dt: f64,
    nu: f64,
    forcing: Option<&VectorField>,
    t0: f64,
) -> Result<f64, DiagnosticsError> {
    if levels.len() < 2 {
        return Err(DiagnosticsError::Usage(format!(
            "energy balance needs at least two time levels, got {}",
            levels.len()
        )));
    }
    for u in levels {
        space.check_velocity(u)?;
    }
    let asm = Assembler::new(space);
    let monitor = Monitor::new(&asm);
    let mut bal = EnergyBalance::new(&monitor, &levels[1], &levels[0]);
    for k in 2..levels.len() {
        let load = match forcing {
            Some(f) => Some(asm.forcing(f, t0 + k as f64 * dt)?),
            None => None,
        };
        bal.record(&monitor, [&levels[k], &levels[k - 1], &levels[k - 2]], dt, nu, load.as_deref());
    }
    Ok(bal.residual())
}

/// FE test fields equal to `e_x` and `e_y` at the velocity nodes of a
/// boundary part and zero elsewhere.
#[derive(Clone, Debug)]
pub struct ForceFunctional {
    tests: [Vec<f64>; 2],
}

/// `2 / (ρ L U²)` with `ρ = 1`, `L = 0.1`, `U = 1`.
pub const FORCE_SCALE: f64 = 20.0;

impl ForceFunctional {
    pub fn new(space: &TaylorHoodSpace, marker: &str) -> Result<Self, DiagnosticsError> {
        if !space.mesh().has_marker(marker) {
            return Err(DiagnosticsError::MissingMarker(marker.to_string()));
        }
        let nodes = space.boundary_nodes(marker)?;
        let mut tests = [vec![0.0; space.n_velocity()], vec![0.0; space.n_velocity()]];
        for n in nodes {
            tests[0][2 * n] = 1.0;
            tests[1][2 * n + 1] = 1.0;
        }
        Ok(Self { tests })
    }

    /// `(c_d, c_l)` from the momentum residual tested against the boundary
    /// fields, with kinematic pressure `p = P + ½|u|²` at quadrature points.
    pub fn evaluate(
        &self,
        asm: &Assembler<'_>,
        monitor: &Monitor,
        u: &[f64],
        p_emac: &[f64],
        rate: Option<&[f64]>,
        nu: f64,
    ) -> (f64, f64) {
        let space = asm.space();
        let mut volume = [0.0; 2];
        asm.for_each_point(u, |qp| {
            let conv = [
                qp.u[0] * qp.grad_u[0][0] + qp.u[1] * qp.grad_u[0][1],
                qp.u[0] * qp.grad_u[1][0] + qp.u[1] * qp.grad_u[1][1],
            ];
            let verts = space.cell_pressure_dofs(qp.cell);
            let p_kin = (0..3).map(|i| qp.psi[i] * p_emac[verts[i]]).sum::<f64>()
                + 0.5 * (qp.u[0] * qp.u[0] + qp.u[1] * qp.u[1]);
            for (d, test) in self.tests.iter().enumerate() {
                let mut v = [0.0; 2];
                let mut div = 0.0;
                for a in 0..P2_LOCAL {
                    let (vx, vy) = (test[qp.dofs[2 * a]], test[qp.dofs[2 * a + 1]]);
                    v[0] += qp.phi[a] * vx;
                    v[1] += qp.phi[a] * vy;
                    div += qp.grad_phi[a][0] * vx + qp.grad_phi[a][1] * vy;
                }
                volume[d] += qp.jxw * (conv[0] * v[0] + conv[1] * v[1] - p_kin * div);
            }
        });
        let coeff = |d: usize| {
            let t = &self.tests[d];
            let inertia = rate.map_or(0.0, |r| monitor.mass().bilinear(r, t));
            let viscous = nu * monitor.stiffness().bilinear(u, t);
            -FORCE_SCALE * (inertia + viscous + volume[d])
        };
        (coeff(0), coeff(1))
    }
}

/// Drag and lift coefficients on a marked boundary part. `rate` is the
/// discrete time derivative of the velocity, omitted for steady states.
pub fn drag_lift(
    space: &TaylorHoodSpace,
    state: &State,
    nu: f64,
    marker: &str,
    rate: Option<&[f64]>,
) -> Result<(f64, f64), DiagnosticsError> {
    state.validate(space)?;
    if let Some(r) = rate {
        space.check_velocity(r)?;
    }
    let functional = ForceFunctional::new(space, marker)?;
    let asm = Assembler::new(space);
    let monitor = Monitor::new(&asm);
    Ok(functional.evaluate(&asm, &monitor, &state.u, &state.p, rate, nu))
}

#[cfg(test)]
mod tests;
