//! The verification suite: eight numbered checks, each with its own
//! tolerance and wall-clock budget. Used by the `acceptance` test target and
//! by `btn-sim verify`.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::dissipation_check;
use crate::config::{InitialCondition, SimulationConfig};
use crate::dynamics::{convexity_constant, energy_tolerance, monotonicity_lhs, Simulator};
use crate::error::Result;
use crate::grid::{laplacian_dirichlet, random_smooth_vector_field, Grid, ScalarField, VectorField2};
use crate::pressure::{pressure_identity_residual, solve_pressure, solve_semi_trivial};
use crate::steady::{
    bisect_threshold, contraction_test, crossover, fit_decay_rate, kappa_sweep, solve_steady,
    Quantity, PATTERN_LINF,
};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {} ({:.1}s of {}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

fn timed(
    id: u8,
    name: &'static str,
    budget_secs: u64,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> Criterion {
    let start = Instant::now();
    let (ok, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let detail = if elapsed > budget { format!("{detail}; over budget") } else { detail };
    Criterion { id, name, passed: ok && elapsed <= budget, detail, elapsed, budget }
}

/// Weak-form identity of the pressure solve over random conductances.
pub fn weak_form_identity() -> Criterion {
    timed(1, "weak-form identity", 10, || {
        let cfg = SimulationConfig { nx: 33, ny: 33, ..SimulationConfig::default() };
        let g = cfg.grid()?;
        let s = cfg.source.evaluate(g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let m = random_smooth_vector_field(g, &mut rng, 4, 2.0);
            let p = solve_pressure(&m, &s, 1e-10)?;
            worst = worst.max(pressure_identity_residual(&m, &p, &s)?);
        }
        Ok((worst <= 1e-8, format!("max residual {worst:.2e} over 20 fields (limit 1e-8)")))
    })
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn max_abs_diff(a: &ScalarField, f: impl Fn(f64, f64) -> f64) -> f64 {
    let g = a.grid();
    let mut e: f64 = 0.0;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            e = e.max((a.get(i, j) - f(g.x(i), g.y(j))).abs());
        }
    }
    e
}

/// Manufactured solutions for the anisotropic pressure solve and the
/// Laplacian on 17², 33² and 65² grids.
pub fn manufactured_convergence() -> Criterion {
    timed(2, "manufactured-solution convergence", 30, || {
        let phi = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let phi_x = |x: f64, y: f64| PI * (PI * x).cos() * (PI * y).sin();
        // p = φ with m = (φ/2, 0):
        // S = 2π²φ + π²φ³/4 − φ φ_x² / 2.
        let source = |x: f64, y: f64| {
            let f = phi(x, y);
            2.0 * PI * PI * f + PI * PI * f.powi(3) / 4.0 - f * phi_x(x, y).powi(2) / 2.0
        };
        let (mut ep, mut el) = (Vec::new(), Vec::new());
        for n in [17, 33, 65] {
            let g = Grid::unit_square(n)?;
            let m = VectorField2::new(
                ScalarField::from_fn_dirichlet(g, |x, y| 0.5 * phi(x, y))?,
                ScalarField::zeros(g),
            )?;
            let p = solve_pressure(&m, &ScalarField::from_fn(g, source)?, 1e-13)?;
            ep.push(max_abs_diff(&p, phi));
            let lap = laplacian_dirichlet(&ScalarField::from_fn_dirichlet(g, phi)?)?;
            // Compare at interior nodes only; the boundary of the output is 0.
            let inner = lap.zip_map(&ScalarField::from_fn_dirichlet(g, phi)?, |l, f| l + 2.0 * PI * PI * f)?;
            el.push(inner.linf());
        }
        let (op, ol) = (orders(&ep), orders(&el));
        let ok = op.iter().chain(&ol).all(|o| (1.8..=2.2).contains(o));
        Ok((
            ok,
            format!(
                "pressure orders {:.3}/{:.3}, laplacian orders {:.3}/{:.3} (need [1.8, 2.2])",
                op[0], op[1], ol[0], ol[1]
            ),
        ))
    })
}

/// Energy dissipation on the default scenario at κ = 5, and its behaviour
/// under step halving.
pub fn energy_dissipation() -> Criterion {
    timed(3, "energy dissipation", 120, || {
        let base = SimulationConfig { kappa: 5.0, gamma: 1.0, dt: 1e-3, t_end: 2.0, record_every: 1, ..SimulationConfig::default() };
        let run = |cfg: &SimulationConfig| -> Result<_> {
            let out = Simulator::new(cfg)?.run()?;
            let flagged = out.trajectory.iter().filter(|r| r.energy_flag).count();
            let excess = out
                .trajectory
                .windows(2)
                .map(|w| w[1].energy - w[0].energy - energy_tolerance(cfg.dt, w[1].mt_l2sq, cfg.cg_tol))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((dissipation_check(&out.trajectory)?, flagged, excess))
        };
        let (full, flagged, excess) = run(&base)?;
        let halved_cfg = SimulationConfig { dt: 5e-4, ..base };
        let (half, _, _) = run(&halved_cfg)?;
        let corr = full.correlation.unwrap_or(f64::NAN);
        let shrink = full.max_abs_discrepancy / half.max_abs_discrepancy;
        let ok = flagged == 0 && excess <= 0.0 && corr >= 0.99 && shrink >= 1.5;
        Ok((
            ok,
            format!(
                "{} steps, {flagged} flagged, max ΔE − ε_E = {excess:.2e}, corr {corr:.6}, discrepancy {:.3e} -> {:.3e} under dt/2 (factor {shrink:.2}, need 1.5)",
                full.intervals, full.max_abs_discrepancy, half.max_abs_discrepancy
            ),
        ))
    })
}

/// Exponential decay to the semi-trivial state at κ = 5 and κ = 10 for
/// γ = 1 and γ = 2.
pub fn exponential_stability() -> Criterion {
    timed(4, "exponential stability", 300, || {
        let mut ok = true;
        let mut parts = Vec::new();
        for gamma in [1.0, 2.0] {
            let mut rates = Vec::new();
            for kappa in [5.0, 10.0] {
                let cfg = SimulationConfig {
                    kappa,
                    gamma,
                    t_end: 3.0 / kappa,
                    record_every: 1,
                    ..SimulationConfig::default()
                };
                let out = Simulator::new(&cfg)?.run()?;
                let fit = fit_decay_rate(&out.trajectory, Quantity::MLinf, None, 100.0 * cfg.cg_tol)?;
                let dp = out.trajectory.last().expect("records").dp_semitrivial_h1;
                ok &= fit.r_squared >= 0.99 && dp < 1e-6;
                parts.push(format!(
                    "γ={gamma} κ={kappa}: μ̂={:.2} r²={:.5} |∇(p−p*)|={dp:.1e}",
                    fit.mu_hat, fit.r_squared
                ));
                rates.push(fit.mu_hat);
            }
            let ratio = rates[1] / rates[0];
            ok &= ratio >= 1.5;
            parts.push(format!("γ={gamma} rate ratio {ratio:.2}"));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// Two solutions from distinct initial data approach each other.
pub fn contraction() -> Criterion {
    timed(5, "contraction", 180, || {
        let mut ok = true;
        let mut parts = Vec::new();
        for gamma in [1.0, 2.0] {
            let cfg = SimulationConfig { kappa: 5.0, gamma, t_end: 0.6, record_every: 1, ..SimulationConfig::default() };
            let g = cfg.grid()?;
            let a = cfg.initial.evaluate(g)?;
            let b = InitialCondition { amplitude: 1.0, angle: 1.0, mode_x: 2, mode_y: 1 }.evaluate(g)?;
            let tr = contraction_test(&cfg, a, b)?;
            let t0 = 1.0 / cfg.kappa;
            let inc = tr.max_increase_after(t0);
            let last = *tr.delta_l2.last().expect("records");
            ok &= inc <= 0.0 && last < 1e-6;
            parts.push(format!(
                "γ={gamma}: ‖δm‖ {:.3e} -> {last:.2e}, max rise after t={t0} is {inc:.1e}",
                tr.delta_l2[0]
            ));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// `m ≡ 0` stays zero and the pressure stays `p*∞`.
pub fn semi_trivial_fixed_point() -> Criterion {
    timed(6, "semi-trivial fixed point", 60, || {
        let cfg = SimulationConfig {
            initial: InitialCondition::zero(),
            t_end: 0.5,
            record_every: 1,
            ..SimulationConfig::default()
        };
        let sim = Simulator::new(&cfg)?;
        let p_star = solve_semi_trivial(sim.source(), cfg.cg_tol)?;
        let scale = p_star.linf();
        let (mut m_max, mut p_dev): (f64, f64) = (0.0, 0.0);
        let out = sim.run_with(|s, _| {
            m_max = m_max.max(s.m.linf());
            p_dev = p_dev.max(s.p.sub(&p_star).expect("same grid").linf() / scale);
        })?;
        let steps = out.final_state.step_index;
        let ok = steps == 500 && m_max <= 1e-12 && p_dev <= cfg.cg_tol;
        Ok((ok, format!("{steps} steps, max ‖m‖∞ {m_max:.1e}, max relative |p − p*∞| {p_dev:.1e}")))
    })
}

/// Non-trivial stationary state at small κ, and a grid-stable crossover
/// to the semi-trivial state across a κ sweep.
pub fn small_kappa_exploration() -> Criterion {
    timed(7, "small-κ exploration", 600, || {
        let kappas = [0.01, 0.02, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
        let base = |n: usize| SimulationConfig { nx: n, ny: n, t_end: 0.5, ..SimulationConfig::default() };

        let cfg = SimulationConfig { kappa: 0.05, ..base(65) };
        let steady = solve_steady(&cfg, cfg.initial.evaluate(cfg.grid()?)?, cfg.steady_tol)?;
        let pattern = steady.m_inf.linf();
        let mut ok = steady.converged && pattern > PATTERN_LINF;
        let mut parts = vec![format!(
            "κ=0.05 steady ‖m∞‖∞={pattern:.3} (residual {:.1e}, converged {})",
            steady.residual, steady.converged
        )];

        let mut estimates = Vec::new();
        for n in [33, 65] {
            let rows = kappa_sweep(&base(n), &kappas)?;
            match crossover(&rows) {
                Some((lo, hi)) => {
                    let (blo, bhi) = bisect_threshold(&base(n), lo, hi, 1.2)?;
                    let est = (blo * bhi).sqrt();
                    estimates.push(est);
                    parts.push(format!(
                        "{n}²: crossover in ({lo}, {hi}], bisected to ({blo:.3}, {bhi:.3}), κ≈{est:.3}"
                    ));
                }
                None => {
                    ok = false;
                    parts.push(format!("{n}²: no crossover"));
                }
            }
        }
        if let [a, b] = estimates[..] {
            let ratio = a.max(b) / a.min(b);
            ok &= ratio <= 1.5;
            parts.push(format!("refinement ratio {ratio:.3} (limit 1.5)"));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// Monotonicity of `|x|^{2(γ−1)}x` against the brute-force constant.
pub fn convexity_inequality() -> Criterion {
    timed(8, "convexity inequality", 5, || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ok = true;
        let mut parts = Vec::new();
        for gamma in [1.0, 1.5, 2.0] {
            let c = if gamma == 1.0 { 1.0 } else { convexity_constant(gamma, 2.0, 81) };
            let closed = 2f64.powf(2.0 - 2.0 * gamma);
            let mut violations = 0;
            for _ in 0..100_000 {
                let mut point = || {
                    let r = 10f64.powf(rng.gen_range(-3.0..1.0));
                    let th = rng.gen_range(0.0..2.0 * PI);
                    [r * th.cos(), r * th.sin()]
                };
                let (x, y) = (point(), point());
                let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                let lhs = monotonicity_lhs(x, y, gamma);
                let rhs = c * d2.powf(gamma);
                // γ = 1 compares identical arithmetic; otherwise allow rounding.
                let slack = if gamma == 1.0 { 0.0 } else { 1e-12 * rhs };
                if lhs < rhs - slack {
                    violations += 1;
                }
            }
            ok &= violations == 0 && (c - closed).abs() <= 1e-9 * closed;
            parts.push(format!("γ={gamma}: c={c:.9} (2^(2−2γ)={closed:.9}), {violations} violations"));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// All eight checks in order.
pub fn run_all() -> Vec<Criterion> {
    run_with(|_| {})
}

/// All eight checks, reporting each as it finishes.
pub fn run_with(mut report: impl FnMut(&Criterion)) -> Vec<Criterion> {
    let checks: [fn() -> Criterion; 8] = [
        weak_form_identity,
        manufactured_convergence,
        energy_dissipation,
        exponential_stability,
        contraction,
        semi_trivial_fixed_point,
        small_kappa_exploration,
        convexity_inequality,
    ];
    checks
        .iter()
        .map(|c| {
            let r = c();
            report(&r);
            r
        })
        .collect()
}
