//! Time stepping: a backward Euler step with the EMAC convection term, solved
//! by Newton's method on the saddle system, followed by the three-level
//! time filter `u^{n+1} = ũ − (ũ − 2uⁿ + uⁿ⁻¹)/3`.
//!
//! The first step from the initial data is left unfiltered: with
//! `u⁻¹ = u⁰` the filter would inject an `O(Δt)` error that persists and
//! caps the scheme at first order.
//!
//! The theory behind the filtered scheme asks for a step restriction of the
//! form `Δt ≤ C / ‖∇F[u]‖_∞` with an unknown constant; it is not enforced.

mod linear;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    apply_constraint_values, dot, Assembler, AssemblyError, DirichletConditions, SaddleSystem, SharedField,
    SparseMatrix, VectorField,
};
use crate::benchmarks::{exact_error_sq, BenchmarkError, Scenario};
use crate::diagnostics::{DiagnosticsError, DiagnosticsRecord, EnergyBalance, ForceFunctional, Monitor};
use crate::spaces::{interpolate_velocity, SpaceError, State, TaylorHoodSpace};

pub use linear::{linear_solve, LinearSolver, DEFAULT_LINEAR_TOL};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton iteration did not converge at t = {t} after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { t: f64, iterations: usize, residual: f64 },
    #[error("singular matrix: no pivot available at elimination step {pivot}")]
    Singular { pivot: usize },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    LinearResidual { residual: f64, tol: f64 },
    #[error("time {t} lies beyond the end time {t_end}")]
    PastEndTime { t: f64, t_end: f64 },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
}

/// Parameters of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub nu: f64,
    pub newton_abs_tol: f64,
    pub newton_rel_tol: f64,
    pub newton_max_iter: usize,
    /// Off gives plain backward Euler.
    pub filter_enabled: bool,
    pub linear_solver_tol: f64,
}

impl SolverConfig {
    pub const DEFAULT_NEWTON_ABS_TOL: f64 = 1e-10;
    pub const DEFAULT_NEWTON_REL_TOL: f64 = 1e-8;
    pub const DEFAULT_NEWTON_MAX_ITER: usize = 20;

    pub fn new(dt: f64, t_end: f64, nu: f64) -> Self {
        Self {
            dt,
            t_end,
            nu,
            newton_abs_tol: Self::DEFAULT_NEWTON_ABS_TOL,
            newton_rel_tol: Self::DEFAULT_NEWTON_REL_TOL,
            newton_max_iter: Self::DEFAULT_NEWTON_MAX_ITER,
            filter_enabled: true,
            linear_solver_tol: DEFAULT_LINEAR_TOL,
        }
    }

    pub fn with_filter(mut self, enabled: bool) -> Self {
        self.filter_enabled = enabled;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= self.dt * (1.0 - 1e-12)) || !self.t_end.is_finite() {
            return bad("end time must be at least one step");
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad("viscosity must be non-negative");
        }
        if !(self.newton_abs_tol > 0.0 && self.newton_rel_tol > 0.0 && self.linear_solver_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("at least one Newton iteration is required");
        }
        let ratio = self.t_end / self.dt;
        if (ratio - ratio.round()).abs() > 1e-8 * ratio.max(1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "end time {} is not a whole number of steps of {}",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    /// `N = T / Δt`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// The two most recent velocity levels.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    /// `uⁿ`.
    pub u_prev: Vec<f64>,
    /// `uⁿ⁻¹`.
    pub u_prev2: Vec<f64>,
    /// `tⁿ`.
    pub t: f64,
    /// Set at startup, where `uⁿ⁻¹` is a copy of `uⁿ` rather than a computed
    /// level. The step taken from such a history is not filtered.
    pub startup: bool,
}

impl History {
    /// `u⁰ = u⁻¹ = I_h u₀`.
    pub fn start(space: &TaylorHoodSpace, u0: &VectorField, t0: f64) -> Result<Self, SolverError> {
        let u = interpolate_velocity(space, t0, u0)?;
        Ok(Self { u_prev: u.clone(), u_prev2: u, t: t0, startup: true })
    }

    /// History from two computed levels `uⁿ`, `uⁿ⁻¹`.
    pub fn from_levels(u_prev: Vec<f64>, u_prev2: Vec<f64>, t: f64) -> Self {
        Self { u_prev, u_prev2, t, startup: false }
    }

    fn check(&self, space: &TaylorHoodSpace) -> Result<(), SolverError> {
        space.check_velocity(&self.u_prev)?;
        space.check_velocity(&self.u_prev2)?;
        Ok(())
    }
}

/// `ũ − (ũ − 2uⁿ + uⁿ⁻¹)/3`. Pressure is never filtered.
pub fn apply_time_filter(u_tilde: &[f64], history: &History) -> Vec<f64> {
    filter(u_tilde, &history.u_prev, &history.u_prev2)
}

fn filter(u_tilde: &[f64], u_n: &[f64], u_nm1: &[f64]) -> Vec<f64> {
    assert!(u_tilde.len() == u_n.len() && u_n.len() == u_nm1.len(), "vector lengths differ");
    u_tilde
        .iter()
        .zip(u_n)
        .zip(u_nm1)
        .map(|((t, a), b)| t - (t - 2.0 * a + b) / 3.0)
        .collect()
}

/// `F[w^{n+1}] = (3/2)w^{n+1} − wⁿ + (1/2)wⁿ⁻¹`.
pub fn f_extrapolant(u_next: &[f64], u_prev: &[f64], u_prev2: &[f64]) -> Vec<f64> {
    assert!(u_next.len() == u_prev.len() && u_prev.len() == u_prev2.len(), "vector lengths differ");
    u_next
        .iter()
        .zip(u_prev)
        .zip(u_prev2)
        .map(|((a, b), c)| 1.5 * a - b + 0.5 * c)
        .collect()
}

/// Result of the backward Euler stage.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// `ũ^{n+1}`.
    pub u_tilde: Vec<f64>,
    /// EMAC pressure `P^{n+1}`.
    pub p: Vec<f64>,
    pub t: f64,
    pub newton_iters: usize,
    /// Residual norm before each Newton update and after the last one.
    pub residuals: Vec<f64>,
    /// Forcing load at the new time level, when a forcing is set.
    pub load: Option<Vec<f64>>,
}

/// Preassembled operators and solver state for one space and configuration.
pub struct Integrator<'a> {
    space: &'a TaylorHoodSpace,
    asm: Assembler<'a>,
    monitor: Monitor,
    config: SolverConfig,
    /// `M/Δt + νK`.
    base: SparseMatrix,
    divergence: SparseMatrix,
    divergence_t: SparseMatrix,
    mean: Vec<f64>,
    dirichlet: DirichletConditions,
    forcing: Option<SharedField>,
    reference: Option<SharedField>,
    force: Option<ForceFunctional>,
    linear: LinearSolver,
    pressure: Vec<f64>,
    multiplier: f64,
    balance: Option<EnergyBalance>,
}

impl<'a> Integrator<'a> {
    pub fn new(
        space: &'a TaylorHoodSpace,
        config: SolverConfig,
        dirichlet: DirichletConditions,
        forcing: Option<SharedField>,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        let asm = Assembler::new(space);
        let monitor = Monitor::new(&asm);
        let mut base = monitor.mass().clone();
        base.scale(1.0 / config.dt);
        base.add_scaled_same_pattern(config.nu, monitor.stiffness())?;
        // Boundary markers are checked once here rather than at the first step.
        dirichlet.evaluate(space, 0.0)?;
        let divergence = asm.divergence();
        Ok(Self {
            space,
            divergence_t: divergence.transpose(),
            divergence,
            mean: asm.pressure_mean(),
            asm,
            monitor,
            linear: LinearSolver::new(config.linear_solver_tol),
            config,
            base,
            dirichlet,
            forcing,
            reference: None,
            force: None,
            pressure: vec![0.0; space.n_pressure()],
            multiplier: 0.0,
            balance: None,
        })
    }

    /// Integrator for a benchmark scenario. The scenario's viscosity replaces
    /// the configured one.
    pub fn for_scenario(
        space: &'a TaylorHoodSpace,
        mut config: SolverConfig,
        scenario: &Scenario,
    ) -> Result<Self, SolverError> {
        config.nu = scenario.nu;
        let mut me = Self::new(space, config, scenario.dirichlet.clone(), scenario.forcing.clone())?;
        me.reference = scenario.reference_velocity.clone();
        if let Some(marker) = &scenario.force_marker {
            me.set_force_marker(marker)?;
        }
        Ok(me)
    }

    pub fn set_reference(&mut self, reference: Option<SharedField>) {
        self.reference = reference;
    }

    pub fn set_force_marker(&mut self, marker: &str) -> Result<(), SolverError> {
        self.force = Some(ForceFunctional::new(self.space, marker)?);
        Ok(())
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn space(&self) -> &'a TaylorHoodSpace {
        self.space
    }

    pub fn assembler(&self) -> &Assembler<'a> {
        &self.asm
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn mean_vector(&self) -> &[f64] {
        &self.mean
    }

    /// Current EMAC pressure, used as the next Newton initial guess.
    pub fn pressure(&self) -> &[f64] {
        &self.pressure
    }

    /// Modified energy balance residual accumulated since [`Self::start`].
    pub fn energy_balance(&self) -> Option<&EnergyBalance> {
        self.balance.as_ref()
    }

    /// Initial history `u⁰ = u⁻¹ = I_h u₀` and the diagnostics of level 0.
    pub fn start(&mut self, u0: &VectorField, t0: f64) -> Result<(History, DiagnosticsRecord), SolverError> {
        let history = History::start(self.space, u0, t0)?;
        let record = self.initial_record(&history)?;
        Ok((history, record))
    }

    /// Diagnostics of the level `uⁿ` held in `history`; also resets the
    /// energy balance to start from this pair.
    pub fn initial_record(&mut self, history: &History) -> Result<DiagnosticsRecord, SolverError> {
        history.check(self.space)?;
        self.balance = Some(EnergyBalance::new(&self.monitor, &history.u_prev, &history.u_prev2));
        let mut rec = self.level_record(&history.u_prev, &history.u_prev2, history.t)?;
        rec.numerical_dissipation = 0.0;
        rec.physical_dissipation = 0.0;
        Ok(rec)
    }

    fn level_record(&self, u: &[f64], u_prev: &[f64], t: f64) -> Result<DiagnosticsRecord, SolverError> {
        let mon = &self.monitor;
        let mut rec = DiagnosticsRecord {
            t,
            energy: mon.kinetic_energy(u),
            momentum: mon.momentum(u),
            angular_momentum: mon.angular_momentum(u),
            g_norm_sq: mon.g_norm_sq_pair(u, u_prev),
            ..DiagnosticsRecord::default()
        };
        if let Some(reference) = &self.reference {
            let (l2, h1) = exact_error_sq(&self.asm, u, reference.as_ref(), t)?;
            rec.l2_error = Some(l2.sqrt());
            rec.h1_error = Some(h1.sqrt());
        }
        Ok(rec)
    }

    /// Momentum residual `R_u`, divergence residual `R_p`, and multiplier
    /// residual, with constrained rows zeroed.
    fn residual(
        &self,
        u: &[f64],
        p: &[f64],
        lambda: f64,
        u_n: &[f64],
        load: Option<&[f64]>,
        fixed: &[bool],
    ) -> Vec<f64> {
        let nv = self.space.n_velocity();
        let mut r = vec![0.0; nv + self.space.n_pressure() + 1];
        let au = self.base.mul_vec(u);
        let mun = self.monitor.mass().mul_vec(u_n);
        let conv = self.asm.emac_residual(u);
        let btp = self.divergence_t.mul_vec(p);
        for i in 0..nv {
            if !fixed[i] {
                r[i] = au[i] - mun[i] / self.config.dt + conv[i] - btp[i] - load.map_or(0.0, |f| f[i]);
            }
        }
        let bu = self.divergence.mul_vec(u);
        for (k, bk) in bu.iter().enumerate() {
            r[nv + k] = -bk + self.mean[k] * lambda;
        }
        r[nv + self.space.n_pressure()] = dot(&self.mean, p);
        r
    }

    /// Backward Euler EMAC step from `history` to `tⁿ + Δt`.
    pub fn be_emac_step(&mut self, history: &History) -> Result<StepOutcome, SolverError> {
        history.check(self.space)?;
        let dt = self.config.dt;
        let t = history.t + dt;
        let t_end = self.config.t_end;
        if t > t_end + 1e-9 * dt.max(t_end) {
            return Err(SolverError::PastEndTime { t, t_end });
        }
        let nv = self.space.n_velocity();
        let np = self.space.n_pressure();
        let values = self.dirichlet.evaluate(self.space, t)?;
        let mut fixed = vec![false; nv];
        let mut u = history.u_prev.clone();
        for (&dof, &g) in &values {
            fixed[dof] = true;
            u[dof] = g;
        }
        let zero_values = values.keys().map(|&d| (d, 0.0)).collect();
        let load = match &self.forcing {
            Some(f) => Some(self.asm.forcing(f.as_ref(), t)?),
            None => None,
        };
        let mut p = self.pressure.clone();
        let mut lambda = self.multiplier;
        let mut residuals = Vec::new();
        let mut iters = 0;
        loop {
            let r = self.residual(&u, &p, lambda, &history.u_prev, load.as_deref(), &fixed);
            let rn = linear::norm(&r);
            residuals.push(rn);
            let target = self.config.newton_abs_tol.max(self.config.newton_rel_tol * residuals[0]);
            if rn <= target {
                break;
            }
            if iters == self.config.newton_max_iter || !rn.is_finite() {
                return Err(SolverError::NewtonDiverged { t, iterations: iters, residual: rn });
            }
            let mut jac = self.base.clone();
            self.asm.add_emac_jacobian(&u, 1.0, &mut jac)?;
            let system = SaddleSystem {
                a: jac,
                b: self.divergence.clone(),
                m: self.mean.clone(),
                rhs_u: r[..nv].iter().map(|v| -v).collect(),
                rhs_p: r[nv..nv + np].iter().map(|v| -v).collect(),
            };
            let mut cs = apply_constraint_values(&system, &zero_values);
            cs.rhs[nv + np] = -r[nv + np];
            let delta = self.linear.solve(&cs)?;
            for (ui, di) in u.iter_mut().zip(&delta[..nv]) {
                *ui += di;
            }
            for (pi, di) in p.iter_mut().zip(&delta[nv..nv + np]) {
                *pi += di;
            }
            lambda += delta[nv + np];
            iters += 1;
        }
        self.pressure.clone_from(&p);
        self.multiplier = lambda;
        Ok(StepOutcome { u_tilde: u, p, t, newton_iters: iters, residuals, load })
    }

    /// Step 1, then the filter when enabled and the history holds two
    /// computed levels; returns the new level, the
    /// shifted history, and its diagnostics.
    pub fn advance(&mut self, history: &History) -> Result<(State, History, DiagnosticsRecord), SolverError> {
        let step = self.be_emac_step(history)?;
        let filtered = self.config.filter_enabled && !history.startup;
        let u_next = if filtered {
            apply_time_filter(&step.u_tilde, history)
        } else {
            step.u_tilde.clone()
        };
        let mut rec = self.level_record(&u_next, &history.u_prev, step.t)?;
        let (num, phys) = self.monitor.dissipation_split(
            &u_next,
            &history.u_prev,
            &history.u_prev2,
            self.config.nu,
            self.config.dt,
        );
        rec.numerical_dissipation = num;
        rec.physical_dissipation = phys;
        rec.newton_iters = step.newton_iters;
        if let Some(force) = &self.force {
            let rate: Vec<f64> = step
                .u_tilde
                .iter()
                .zip(&history.u_prev)
                .map(|(a, b)| (a - b) / self.config.dt)
                .collect();
            let (cd, cl) = force.evaluate(&self.asm, &self.monitor, &step.u_tilde, &step.p, Some(&rate), self.config.nu);
            rec.drag = Some(cd);
            rec.lift = Some(cl);
        }
        if self.config.filter_enabled && history.startup {
            // The balance holds for filtered steps, so it starts from (u¹, u⁰).
            self.balance = Some(EnergyBalance::new(&self.monitor, &u_next, &history.u_prev));
        } else {
            let balance = self
                .balance
                .get_or_insert_with(|| EnergyBalance::new(&self.monitor, &history.u_prev, &history.u_prev2));
            balance.record(
                &self.monitor,
                [&u_next, &history.u_prev, &history.u_prev2],
                self.config.dt,
                self.config.nu,
                step.load.as_deref(),
            );
        }
        let state = State { u: u_next.clone(), p: step.p, t: step.t };
        let next = History::from_levels(u_next, history.u_prev.clone(), step.t);
        Ok((state, next, rec))
    }

    /// Runs from `history` to the end time, calling `observe` after each step.
    pub fn run(
        &mut self,
        mut history: History,
        mut observe: impl FnMut(&State, &DiagnosticsRecord),
    ) -> Result<History, SolverError> {
        let remaining = ((self.config.t_end - history.t) / self.config.dt).round().max(0.0) as usize;
        for _ in 0..remaining {
            let (state, next, rec) = self.advance(&history)?;
            observe(&state, &rec);
            history = next;
        }
        Ok(history)
    }
}

/// One backward Euler EMAC step with a fresh integrator.
pub fn be_emac_step(
    space: &TaylorHoodSpace,
    history: &History,
    config: &SolverConfig,
    dirichlet: &DirichletConditions,
    forcing: Option<SharedField>,
) -> Result<State, SolverError> {
    let mut it = Integrator::new(space, config.clone(), dirichlet.clone(), forcing)?;
    let out = it.be_emac_step(history)?;
    Ok(State { u: out.u_tilde, p: out.p, t: out.t })
}

/// One full step (Step 1 and, if enabled, the filter) with a fresh integrator.
pub fn advance(
    space: &TaylorHoodSpace,
    history: &History,
    config: &SolverConfig,
    dirichlet: &DirichletConditions,
    forcing: Option<SharedField>,
) -> Result<(State, History, DiagnosticsRecord), SolverError> {
    Integrator::new(space, config.clone(), dirichlet.clone(), forcing)?.advance(history)
}
