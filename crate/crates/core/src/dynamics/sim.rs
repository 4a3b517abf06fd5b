use std::borrow::Cow;
use std::fmt;

use crate::analysis::{energy, grad_laplacian_l2, EnergyRecord};
use crate::config::SimulationConfig;
use crate::error::{BtnError, Result};
use crate::grid::{grad_sq, gradient, norm_suite, Grid, ScalarField, VectorField2};
use crate::linalg::{default_max_iter, pcg_jacobi, CsrMatrix};
use crate::pressure::{
    assemble_pressure_operator, dirichlet_laplacian_operator, solve_pressure_from,
};

use super::terms::{activation, reaction};

/// Most halvings a single step may take before giving up.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    pub m: VectorField2,
    pub p: ScalarField,
    pub step_index: usize,
}

impl SimulationState {
    /// Relative residual `‖A(m) p − S‖ / ‖S‖` of the stored pressure.
    pub fn pressure_residual(&self, source: &ScalarField) -> Result<f64> {
        let op = assemble_pressure_operator(&self.m)?;
        let ap = op.apply(&self.p)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (a, s) in ap.interior_values().iter().zip(source.interior_values()) {
            num += (a - s) * (a - s);
            den += s * s;
        }
        Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
    }
}

/// What one call to [`Simulator::step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `‖(mⁿ⁺¹ − mⁿ)/dt‖²_{L²}` over the full step.
    pub mt_l2sq: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub substeps: usize,
    pub energy_flag: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Vec<EnergyRecord>,
    pub final_state: SimulationState,
}

/// A run that stopped early, with everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub trajectory: Vec<EnergyRecord>,
    pub error: BtnError,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} records)", self.error, self.trajectory.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<RunFailure> for BtnError {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

/// Energy increase tolerated in one step before it is flagged.
pub fn energy_tolerance(dt: f64, mt_l2sq: f64, cg_tol: f64) -> f64 {
    10.0 * dt * dt * mt_l2sq.max(1.0) + 10.0 * cg_tol
}

/// IMEX integrator for one configuration. Holds the source, the semi-trivial
/// pressure and the diffusion matrix for the configured step.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimulationConfig,
    grid: Grid,
    source: ScalarField,
    p_star: ScalarField,
    laplacian: CsrMatrix,
    implicit_dt: CsrMatrix,
}

impl Simulator {
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let source = cfg.source.evaluate(grid)?;
        let p_star = solve_pressure_from(&VectorField2::zeros(grid), &source, cfg.cg_tol, None)?.p;
        let laplacian = dirichlet_laplacian_operator(grid).into_matrix();
        let implicit_dt = laplacian.scaled_plus_identity(cfg.dt * cfg.kappa, 1.0);
        Ok(Self { cfg: cfg.clone(), grid, source, p_star, laplacian, implicit_dt })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn source(&self) -> &ScalarField {
        &self.source
    }

    /// `p*∞`, the pressure of `m = 0`.
    pub fn semi_trivial_pressure(&self) -> &ScalarField {
        &self.p_star
    }

    pub fn initial_state(&self) -> Result<SimulationState> {
        self.state_from(self.cfg.initial.evaluate(self.grid)?)
    }

    /// State at `t = 0` with conductance `m` and its pressure.
    pub fn state_from(&self, m: VectorField2) -> Result<SimulationState> {
        if !m.grid().same_as(&self.grid) {
            return Err(BtnError::GridMismatch);
        }
        if !m.is_boundary_zero() {
            return Err(BtnError::NotBoundaryZero("initial conductance"));
        }
        let p = solve_pressure_from(&m, &self.source, self.cfg.cg_tol, None)?.p;
        Ok(SimulationState { t: 0.0, m, p, step_index: 0 })
    }

    /// `0.5 / (1 + ‖∇p‖²_∞ + ‖m‖^{2(γ−1)}_∞)`.
    pub fn explicit_dt_bound(&self, state: &SimulationState) -> Result<f64> {
        let g = gradient(&state.p)?;
        let grad_sq_max = (0..self.grid.len())
            .map(|k| {
                let (a, b) = g.at(k);
                a * a + b * b
            })
            .fold(0.0, f64::max);
        let gamma = self.cfg.gamma;
        let pref = if gamma == 1.0 { 1.0 } else { state.m.linf().powf(2.0 * (gamma - 1.0)) };
        Ok(0.5 / (1.0 + grad_sq_max + pref))
    }

    /// Splits a step of length `dt` into `2^k` equal substeps that respect
    /// `bound`.
    pub fn substeps_for(&self, dt: f64, bound: f64) -> Result<(f64, usize)> {
        if dt <= bound {
            return Ok((dt, 1));
        }
        if !self.cfg.adaptive_dt {
            return Err(BtnError::TimeStep { dt, bound });
        }
        let (mut h, mut n) = (dt, 1usize);
        for _ in 0..MAX_HALVINGS {
            h *= 0.5;
            n *= 2;
            if h <= bound {
                return Ok((h, n));
            }
        }
        Err(BtnError::TimeStep { dt: h, bound })
    }

    fn implicit_matrix(&self, h: f64) -> Cow<'_, CsrMatrix> {
        if h == self.cfg.dt {
            Cow::Borrowed(&self.implicit_dt)
        } else {
            Cow::Owned(self.laplacian.scaled_plus_identity(h * self.cfg.kappa, 1.0))
        }
    }

    /// One backward-Euler diffusion step of length `h` with explicit
    /// reaction and activation, followed by a warm-started pressure solve.
    /// Does not touch `t` or `step_index`.
    pub fn advance(&self, state: &SimulationState, h: f64) -> Result<SimulationState> {
        let act = activation(&state.m, &state.p)?;
        let rea = reaction(&state.m, self.cfg.gamma)?;
        let a = self.implicit_matrix(h);
        let n = self.grid.interior_len();
        let solve = |m: &ScalarField, act: &ScalarField, rea: &ScalarField| -> Result<ScalarField> {
            let rhs: Vec<f64> = m
                .interior_values()
                .iter()
                .zip(act.interior_values())
                .zip(rea.interior_values())
                .map(|((m, a), r)| m + h * (a - r))
                .collect();
            let x0 = m.interior_values();
            let sol = pcg_jacobi(&a, &rhs, Some(&x0), self.cfg.cg_tol, default_max_iter(n))?;
            ScalarField::from_interior(self.grid, &sol.x)
                .map_err(|_| BtnError::NonFinite("conductance update"))
        };
        let m1 = solve(state.m.c1(), act.c1(), rea.c1())?;
        let m2 = solve(state.m.c2(), act.c2(), rea.c2())?;
        let m = VectorField2::new(m1, m2)?;
        let p = solve_pressure_from(&m, &self.source, self.cfg.cg_tol, Some(&state.p))?.p;
        Ok(SimulationState { t: state.t, m, p, step_index: state.step_index })
    }

    pub fn energy(&self, state: &SimulationState) -> Result<f64> {
        energy(&state.m, &state.p, self.cfg.kappa, self.cfg.gamma)
    }

    /// One step of the configured `dt`, halved into substeps when the
    /// explicit-term bound requires it.
    pub fn step(&self, state: &SimulationState) -> Result<(SimulationState, StepReport)> {
        let dt = self.cfg.dt;
        let (h, n) = self.substeps_for(dt, self.explicit_dt_bound(state)?)?;
        let mut next = Cow::Borrowed(state);
        for _ in 0..n {
            next = Cow::Owned(self.advance(&next, h)?);
        }
        let mut next = next.into_owned();
        next.step_index = state.step_index + 1;
        next.t = next.step_index as f64 * dt;

        let mt_l2sq = next.m.sub(&state.m)?.l2_sq() / (dt * dt);
        let energy_before = self.energy(state)?;
        let energy_after = self.energy(&next)?;
        let energy_flag =
            energy_after - energy_before > energy_tolerance(dt, mt_l2sq, self.cfg.cg_tol);
        Ok((next, StepReport { mt_l2sq, energy_before, energy_after, substeps: n, energy_flag }))
    }

    /// Trajectory sample for `state`. `mt_l2sq` and `de_dt_est` describe the
    /// interval since the previous record.
    pub fn record(
        &self,
        state: &SimulationState,
        mt_l2sq: f64,
        de_dt_est: f64,
        energy_flag: bool,
    ) -> Result<EnergyRecord> {
        let norms = norm_suite(&state.m, &state.p, &self.source, self.cfg.gamma)?;
        let energy = crate::analysis::energy_from_norms(&norms, self.cfg.kappa, self.cfg.gamma);
        let dp = state.p.sub(&self.p_star)?;
        Ok(EnergyRecord {
            t: state.t,
            energy,
            de_dt_est,
            mt_l2sq,
            norms,
            dp_semitrivial_h1: grad_sq(&dp).sqrt(),
            grad_lap_p_l2: grad_laplacian_l2(&state.p)?,
            energy_flag,
        })
    }

    pub fn run(&self) -> Result<RunOutput, RunFailure> {
        self.run_with(|_, _| {})
    }

    /// Runs from the configured initial data, calling `observer` on every
    /// recorded state.
    pub fn run_with(
        &self,
        observer: impl FnMut(&SimulationState, &EnergyRecord),
    ) -> Result<RunOutput, RunFailure> {
        let state = self
            .initial_state()
            .map_err(|error| RunFailure { trajectory: Vec::new(), error })?;
        self.run_from(state, observer)
    }

    /// Runs `n_steps` from an arbitrary starting state.
    ///
    /// A record is taken at the start and after every `record_every` steps.
    /// Its `mt_l2sq` is the mean of the per-step values since the previous
    /// record, so `(E_k − E_{k−1}) / Δt ≈ −mt_l2sq` sample by sample.
    pub fn run_from(
        &self,
        mut state: SimulationState,
        mut observer: impl FnMut(&SimulationState, &EnergyRecord),
    ) -> Result<RunOutput, RunFailure> {
        let mut trajectory = Vec::new();
        let every = self.cfg.record_every;
        let record_dt = every as f64 * self.cfg.dt;
        let steps = self.cfg.n_steps();

        macro_rules! attempt {
            ($e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(error) => return Err(RunFailure { trajectory, error }),
                }
            };
        }

        let first = attempt!(self.record(&state, 0.0, 0.0, false));
        observer(&state, &first);
        trajectory.push(first);

        let (mut mt_sum, mut flagged) = (0.0, false);
        for n in 1..=steps {
            let (next, report) = attempt!(self.step(&state));
            state = next;
            mt_sum += report.mt_l2sq;
            flagged |= report.energy_flag;
            if n % every == 0 {
                let prev = trajectory.last().expect("initial record").energy;
                let mut rec = attempt!(self.record(&state, mt_sum / every as f64, 0.0, flagged));
                rec.de_dt_est = (rec.energy - prev) / record_dt;
                observer(&state, &rec);
                trajectory.push(rec);
                mt_sum = 0.0;
                flagged = false;
            }
        }
        Ok(RunOutput { trajectory, final_state: state })
    }
}

/// One step of `cfg` from `state`.
pub fn step(state: &SimulationState, cfg: &SimulationConfig) -> Result<SimulationState> {
    Ok(Simulator::new(cfg)?.step(state)?.0)
}

/// Full run of `cfg` from its configured initial data.
pub fn run(cfg: &SimulationConfig) -> Result<RunOutput, RunFailure> {
    Simulator::new(cfg)
        .map_err(|error| RunFailure { trajectory: Vec::new(), error })?
        .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::dissipation_check;
    use crate::config::{GaussianTerm, InitialCondition, SourceSpec};
    use crate::grid::random_smooth_vector_field;
    use crate::pressure::solve_semi_trivial;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SimulationConfig {
        SimulationConfig {
            nx: 17,
            ny: 17,
            t_end: 0.05,
            dt: 1e-3,
            record_every: 1,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn zero_conductance_is_invariant() {
        let cfg = SimulationConfig { initial: InitialCondition::zero(), ..small_cfg() };
        let sim = Simulator::new(&cfg).unwrap();
        let p_star = solve_semi_trivial(sim.source(), cfg.cg_tol).unwrap();
        let out = sim
            .run_with(|s, _| {
                assert_eq!(s.m.linf(), 0.0);
                assert_eq!(s.p, p_star);
            })
            .unwrap();
        let e0 = out.trajectory[0].energy;
        assert!(out.trajectory.iter().all(|r| r.energy == e0));
        assert!((e0 - 0.5 * grad_sq(&p_star)).abs() < 1e-12 * e0);
    }

    #[test]
    fn t_end_zero_gives_one_record() {
        let cfg = SimulationConfig { t_end: 0.0, ..small_cfg() };
        let out = run(&cfg).unwrap();
        assert_eq!(out.trajectory.len(), 1);
        assert_eq!(out.final_state.step_index, 0);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let cfg = small_cfg();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn boundary_stays_zero_and_pressure_consistent() {
        let cfg = small_cfg();
        let sim = Simulator::new(&cfg).unwrap();
        let mut state = sim.initial_state().unwrap();
        for _ in 0..10 {
            state = sim.step(&state).unwrap().0;
            assert!(state.m.is_boundary_zero());
            assert!(state.p.is_boundary_zero());
            assert!(state.pressure_residual(sim.source()).unwrap() <= cfg.cg_tol);
        }
        assert_eq!(state.step_index, 10);
        assert_eq!(state.t, 10.0 * cfg.dt);
    }

    #[test]
    fn energy_dissipates_on_default_scenario() {
        let out = run(&small_cfg()).unwrap();
        assert!(out.trajectory.iter().all(|r| !r.energy_flag));
        let report = dissipation_check(&out.trajectory).unwrap();
        assert!(report.max_energy_increase <= 0.0, "{report:?}");
    }

    fn heat_reaction_cfg(dt: f64) -> SimulationConfig {
        SimulationConfig {
            nx: 17,
            ny: 17,
            kappa: 1.0,
            dt,
            t_end: 0.1,
            record_every: 1,
            source: SourceSpec::new(vec![GaussianTerm { cx: 0.5, cy: 0.5, amplitude: 0.0, sigma: 0.1 }])
                .unwrap(),
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn zero_source_decays_at_heat_reaction_rate() {
        let cfg = heat_reaction_cfg(1e-3);
        let out = run(&cfg).unwrap();
        let first = &out.trajectory[0];
        let last = out.trajectory.last().unwrap();
        let l2 = |r: &EnergyRecord| r.norms.m_l2gamma.sqrt();
        // Smallest discrete Laplacian eigenvalue plus the linear reaction.
        let g = sim_grid(&cfg);
        let lam = 4.0 / (g.hx() * g.hx()) * (std::f64::consts::PI * g.hx() / 2.0).sin().powi(2) * 2.0;
        let factor = (1.0 / (1.0 + cfg.dt * cfg.kappa * lam) * (1.0 - cfg.dt)).powi(cfg.n_steps() as i32);
        assert!(l2(last) <= l2(first) * factor * (1.0 + 1e-8));
    }

    fn sim_grid(cfg: &SimulationConfig) -> Grid {
        cfg.grid().unwrap()
    }

    #[test]
    fn step_halving_converges_at_first_order() {
        let finals: Vec<VectorField2> = [2e-3, 1e-3, 5e-4]
            .iter()
            .map(|&dt| run(&heat_reaction_cfg(dt)).unwrap().final_state.m)
            .collect();
        let e1 = finals[0].sub(&finals[1]).unwrap().l2_sq().sqrt();
        let e2 = finals[1].sub(&finals[2]).unwrap().l2_sq().sqrt();
        let ratio = e1 / e2;
        assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn oversize_step_is_halved_or_rejected() {
        let cfg = SimulationConfig { dt: 0.05, t_end: 0.05, ..small_cfg() };
        let sim = Simulator::new(&cfg).unwrap();
        let state = sim.initial_state().unwrap();
        let bound = sim.explicit_dt_bound(&state).unwrap();
        assert!(bound < cfg.dt);
        let (_, report) = sim.step(&state).unwrap();
        assert!(report.substeps > 1);

        let strict = SimulationConfig { adaptive_dt: false, ..cfg };
        let sim = Simulator::new(&strict).unwrap();
        let err = sim.step(&state).unwrap_err();
        assert!(matches!(err, BtnError::TimeStep { .. }));
    }

    #[test]
    fn state_from_rejects_nonzero_boundary() {
        let cfg = small_cfg();
        let sim = Simulator::new(&cfg).unwrap();
        let g = sim.grid();
        let c = ScalarField::constant(g, 1.0).unwrap();
        let m = VectorField2::new(c.clone(), c).unwrap();
        assert!(matches!(sim.state_from(m), Err(BtnError::NotBoundaryZero(_))));
    }

    #[test]
    fn random_initial_data_dissipates_energy() {
        let cfg = SimulationConfig { gamma: 2.0, ..small_cfg() };
        let sim = Simulator::new(&cfg).unwrap();
        let m0 = random_smooth_vector_field(sim.grid(), &mut ChaCha8Rng::seed_from_u64(5), 3, 1.0);
        let out = sim.run_from(sim.state_from(m0).unwrap(), |_, _| {}).unwrap();
        for w in out.trajectory.windows(2) {
            let tol = energy_tolerance(cfg.dt, w[1].mt_l2sq, cfg.cg_tol);
            assert!(w[1].energy - w[0].energy <= tol);
        }
    }
}
