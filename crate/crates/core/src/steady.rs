//! Stationary states, decay-rate fits, the contraction test and κ sweeps.

use std::io::Write;

use rayon::prelude::*;

use crate::analysis::EnergyRecord;
use crate::config::SimulationConfig;
use crate::dynamics::{activation, reaction, SimulationState, Simulator};
use crate::error::{BtnError, Result};
use crate::grid::{laplacian_interior, ScalarField, VectorField2};
use crate::pressure::assemble_pressure_operator;

pub const SWEEP_HEADER: &str = "kappa,m_inf_linf,mu_hat,r_squared,converged,steps";

/// Below this `‖m∞‖_∞` a stationary state counts as semi-trivial.
pub const TRIVIAL_LINF: f64 = 1e-6;
/// Above this `‖m∞‖_∞` a stationary state counts as a non-trivial pattern.
pub const PATTERN_LINF: f64 = 1e-3;

/// Largest multiple of the explicit bound the polish may reach.
const MAX_BOOST: f64 = 64.0;
/// Consecutive residual decreases before the pseudo-time step is doubled.
const BOOST_STREAK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyResult {
    pub m_inf: VectorField2,
    pub p_inf: ScalarField,
    /// `sqrt(r_m² + r_p²)`: discrete `L²` norms of the stationary residuals
    /// of the conductance and pressure equations.
    pub residual: f64,
    /// Pseudo-time steps attempted, rejected ones included.
    pub iterations: usize,
    pub converged: bool,
    /// Pseudo-time reached.
    pub pseudo_time: f64,
}

fn interior_l2(values: impl Iterator<Item = f64>, cell: f64) -> f64 {
    (values.map(|v| v * v).sum::<f64>() * cell).sqrt()
}

/// Stationary residual of both equations at `state`.
pub fn stationary_residual(sim: &Simulator, state: &SimulationState) -> Result<f64> {
    let cfg = sim.config();
    let g = sim.grid();
    let act = activation(&state.m, &state.p)?;
    let rea = reaction(&state.m, cfg.gamma)?;
    let cell = g.hx() * g.hy();
    let mut r_m = 0.0;
    for (c, (a, r)) in [
        (state.m.c1(), (act.c1(), rea.c1())),
        (state.m.c2(), (act.c2(), rea.c2())),
    ] {
        let lap = laplacian_interior(c);
        let res = lap
            .interior_values()
            .into_iter()
            .zip(a.interior_values())
            .zip(r.interior_values())
            .map(|((l, a), r)| -cfg.kappa * l + r - a);
        r_m += interior_l2(res, cell).powi(2);
    }
    let ap = assemble_pressure_operator(&state.m)?.apply(&state.p)?;
    let r_p = interior_l2(
        ap.interior_values()
            .into_iter()
            .zip(sim.source().interior_values())
            .map(|(a, s)| a - s),
        cell,
    );
    Ok((r_m + r_p * r_p).sqrt())
}

/// Pseudo-time continuation to a stationary pair.
///
/// Steps start at 0.9 of the explicit-term bound. Once the residual has
/// fallen for several consecutive steps the step is doubled (up to 64x the
/// bound); a step that raises the residual while boosted is rejected and the
/// boost halved. Stops when the residual reaches `tol` or after
/// `cfg.steady_max_iters` attempts, returning the last accepted iterate.
pub fn solve_steady(cfg: &SimulationConfig, init: VectorField2, tol: f64) -> Result<SteadyResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(BtnError::validation("steady_tol", format!("must be positive, got {tol}")));
    }
    let sim = Simulator::new(cfg)?;
    let mut state = sim.state_from(init)?;
    let mut res = stationary_residual(&sim, &state)?;
    let (mut boost, mut streak, mut iterations) = (1.0f64, 0usize, 0usize);
    let mut pseudo_time = 0.0;

    while res > tol && iterations < cfg.steady_max_iters {
        iterations += 1;
        let h = 0.9 * boost * sim.explicit_dt_bound(&state)?;
        let next = sim.advance(&state, h)?;
        let next_res = stationary_residual(&sim, &next)?;
        if next_res < res {
            streak += 1;
            if streak >= BOOST_STREAK && boost < MAX_BOOST {
                boost *= 2.0;
                streak = 0;
            }
        } else {
            streak = 0;
            if boost > 1.0 {
                boost *= 0.5;
                continue;
            }
        }
        pseudo_time += h;
        state = next;
        res = next_res;
    }
    Ok(SteadyResult {
        converged: res <= tol,
        m_inf: state.m,
        p_inf: state.p,
        residual: res,
        iterations,
        pseudo_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `‖m‖_∞`.
    MLinf,
    /// `‖∇(p − p*∞)‖_{L²}`.
    DpH1,
}

impl Quantity {
    pub fn of(&self, r: &EnergyRecord) -> f64 {
        match self {
            Quantity::MLinf => r.m_linf(),
            Quantity::DpH1 => r.dp_semitrivial_h1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub mu_hat: f64,
    pub r_squared: f64,
    /// First and last sample times used.
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares line through `(t, ln q)`; returns `(−slope, r²)`.
pub fn log_linear_fit(t: &[f64], q: &[f64]) -> Result<(f64, f64)> {
    if t.len() != q.len() || t.len() < 2 {
        return Err(BtnError::Fit("need at least two samples".into()));
    }
    if q.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(BtnError::Fit("quantity must be positive".into()));
    }
    let n = t.len() as f64;
    let y: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        stt += (ti - tm) * (ti - tm);
        sty += (ti - tm) * (yi - ym);
        syy += (yi - ym) * (yi - ym);
    }
    if stt == 0.0 {
        return Err(BtnError::Fit("all samples at one time".into()));
    }
    let slope = sty / stt;
    let ss_res: f64 = t
        .iter()
        .zip(&y)
        .map(|(ti, yi)| {
            let e = yi - (ym + slope * (ti - tm));
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok((-slope, r2))
}

/// Fits `q(t) ≈ C e^{−μ t}` on a window of the trajectory.
///
/// Without an explicit window the first 20% of the horizon is discarded and
/// the next 60% used. The window ends early at the first sample below
/// `floor` or at the first zero. At least ten samples must remain.
pub fn fit_decay_rate(
    trajectory: &[EnergyRecord],
    quantity: Quantity,
    window: Option<(f64, f64)>,
    floor: f64,
) -> Result<DecayFit> {
    let (first, last) = match (trajectory.first(), trajectory.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(BtnError::Fit("empty trajectory".into())),
    };
    let (t0, t1) = window.unwrap_or_else(|| {
        let span = last - first;
        (first + 0.2 * span, first + 0.8 * span)
    });
    if !(t0 < t1) || t0 < first || t1 > last {
        return Err(BtnError::Fit(format!(
            "window ({t0}, {t1}) outside trajectory ({first}, {last})"
        )));
    }
    let (mut ts, mut qs) = (Vec::new(), Vec::new());
    for r in trajectory.iter().filter(|r| r.t >= t0 && r.t <= t1) {
        let q = quantity.of(r);
        if q <= 0.0 || q < floor {
            break;
        }
        ts.push(r.t);
        qs.push(q);
    }
    if ts.len() < 10 {
        return Err(BtnError::Fit(format!(
            "only {} usable samples in ({t0}, {t1}); need 10",
            ts.len()
        )));
    }
    let (mu_hat, r_squared) = log_linear_fit(&ts, &qs)?;
    Ok(DecayFit {
        mu_hat,
        r_squared,
        window: (ts[0], *ts.last().expect("non-empty")),
        samples: ts.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTrace {
    pub t: Vec<f64>,
    /// `‖m_a − m_b‖_{L²}` at each recorded time.
    pub delta_l2: Vec<f64>,
}

impl ContractionTrace {
    /// Largest increase of `‖δm‖` between consecutive records at or after
    /// `t0`; zero or negative means non-increasing.
    pub fn max_increase_after(&self, t0: f64) -> f64 {
        self.t
            .iter()
            .zip(self.delta_l2.windows(2))
            .filter(|(t, _)| **t >= t0)
            .map(|(_, w)| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs two solutions in lockstep (same substep schedule) and records the
/// `L²` distance of their conductances every `record_every` steps.
pub fn contraction_test(
    cfg: &SimulationConfig,
    m0_a: VectorField2,
    m0_b: VectorField2,
) -> Result<ContractionTrace> {
    let sim = Simulator::new(cfg)?;
    let mut a = sim.state_from(m0_a)?;
    let mut b = sim.state_from(m0_b)?;
    let dist = |a: &SimulationState, b: &SimulationState| -> Result<f64> {
        Ok(a.m.sub(&b.m)?.l2_sq().sqrt())
    };
    let mut trace = ContractionTrace { t: vec![0.0], delta_l2: vec![dist(&a, &b)?] };
    for n in 1..=cfg.n_steps() {
        let bound = sim.explicit_dt_bound(&a)?.min(sim.explicit_dt_bound(&b)?);
        let (h, k) = sim.substeps_for(cfg.dt, bound)?;
        for _ in 0..k {
            a = sim.advance(&a, h)?;
            b = sim.advance(&b, h)?;
        }
        if n % cfg.record_every == 0 {
            trace.t.push(n as f64 * cfg.dt);
            trace.delta_l2.push(dist(&a, &b)?);
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    /// `NaN` when the steady solve failed.
    pub m_inf_linf: f64,
    pub mu_hat: Option<f64>,
    pub r_squared: Option<f64>,
    pub converged: bool,
    pub steps: usize,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{}",
            self.kappa,
            self.m_inf_linf,
            opt(self.mu_hat),
            opt(self.r_squared),
            self.converged,
            self.steps
        )
    }

    pub fn is_trivial(&self) -> bool {
        self.m_inf_linf < TRIVIAL_LINF
    }
}

/// Steady solve from the configured initial data plus a decay fit of
/// `‖m‖_∞` from a run of the configured horizon.
pub fn sweep_point(base: &SimulationConfig, kappa: f64) -> SweepRow {
    let cfg = SimulationConfig { kappa, ..base.clone() };
    let mut row = SweepRow {
        kappa,
        m_inf_linf: f64::NAN,
        mu_hat: None,
        r_squared: None,
        converged: false,
        steps: 0,
        error: None,
    };
    let steady = cfg
        .grid()
        .and_then(|g| cfg.initial.evaluate(g))
        .and_then(|m0| solve_steady(&cfg, m0, cfg.steady_tol));
    match steady {
        Ok(s) => {
            row.m_inf_linf = s.m_inf.linf();
            row.converged = s.converged;
            row.steps = s.iterations;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    let fit = crate::dynamics::run(&cfg)
        .map_err(BtnError::from)
        .and_then(|out| fit_decay_rate(&out.trajectory, Quantity::MLinf, None, 100.0 * cfg.cg_tol));
    match fit {
        Ok(f) => {
            row.mu_hat = Some(f.mu_hat);
            row.r_squared = Some(f.r_squared);
        }
        Err(e) => {
            row.error.get_or_insert(e.to_string());
        }
    }
    row
}

/// Independent sweep points, computed in parallel and returned in κ order.
pub fn kappa_sweep(base: &SimulationConfig, kappas: &[f64]) -> Result<Vec<SweepRow>> {
    base.validate()?;
    if kappas.is_empty() {
        return Err(BtnError::validation("kappas", "list is empty"));
    }
    if kappas.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(BtnError::validation("kappas", "every κ must be positive"));
    }
    if kappas.windows(2).any(|w| w[1] < w[0]) {
        return Err(BtnError::validation("kappas", "must be sorted ascending"));
    }
    Ok(kappas.par_iter().map(|&k| sweep_point(base, k)).collect())
}

/// Bracket `(lo, hi)` of adjacent sweep rows where `‖m∞‖_∞` drops from a
/// pattern (> 1e-3) to semi-trivial (< 1e-6), with every later row
/// semi-trivial as well.
pub fn crossover(rows: &[SweepRow]) -> Option<(f64, f64)> {
    let first_trivial = rows.iter().rposition(|r| !r.is_trivial()).map_or(0, |i| i + 1);
    if first_trivial == 0 || first_trivial >= rows.len() {
        return None;
    }
    let below = &rows[first_trivial - 1];
    (below.m_inf_linf > PATTERN_LINF).then(|| (below.kappa, rows[first_trivial].kappa))
}

/// Geometric bisection of the threshold inside `(lo, hi)` until
/// `hi / lo ≤ ratio`. A κ counts as above threshold when its steady solve
/// from the configured initial data ends below [`TRIVIAL_LINF`].
pub fn bisect_threshold(base: &SimulationConfig, lo: f64, hi: f64, ratio: f64) -> Result<(f64, f64)> {
    if !(0.0 < lo && lo < hi && ratio > 1.0) {
        return Err(BtnError::validation("bisection", format!("bad bracket ({lo}, {hi}) / {ratio}")));
    }
    let grid = base.grid()?;
    let m0 = base.initial.evaluate(grid)?;
    let (mut lo, mut hi) = (lo, hi);
    while hi / lo > ratio {
        let mid = (lo * hi).sqrt();
        let cfg = SimulationConfig { kappa: mid, ..base.clone() };
        let s = solve_steady(&cfg, m0.clone(), cfg.steady_tol)?;
        if s.m_inf.linf() < TRIVIAL_LINF {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}
