//! Energy functional, dissipation accounting and the lemma-ratio ledger.

use std::io::Write;

use crate::error::{BtnError, Result};
use crate::grid::{
    directional_grad_sq, grad_sq, gradient, integrate, NormSample, ScalarField, VectorField2,
};

pub const TRAJECTORY_HEADER: &str =
    "t,E,dE_dt_est,mt_l2sq,grad_m_l2sq,m_l2gamma,grad_p_l2sq,mgradp_l2sq,m_linf,dp_to_semitrivial_h1";

pub const LEDGER_HEADER: &str =
    "t,lap_p_l2,lap_m_l2,grad_lap_p_l2,ratio_ph2,ratio_h2in,max_ratio_ph2,max_ratio_h2in";

/// One trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub energy: f64,
    /// Backward difference of `energy` against the previous record.
    pub de_dt_est: f64,
    /// `‖(mⁿ⁺¹ − mⁿ)/dt‖²` of the step that produced this record.
    pub mt_l2sq: f64,
    pub norms: NormSample,
    /// `‖∇(p − p*∞)‖_{L²}`.
    pub dp_semitrivial_h1: f64,
    /// `‖∇Δp‖_{L²}` away from the boundary ring; qualitative only.
    pub grad_lap_p_l2: f64,
    /// Some step since the previous record raised the energy beyond tolerance.
    pub energy_flag: bool,
}

impl EnergyRecord {
    pub fn m_linf(&self) -> f64 {
        self.norms.m_linf
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.energy,
            self.de_dt_est,
            self.mt_l2sq,
            self.norms.grad_m_l2sq,
            self.norms.m_l2gamma,
            self.norms.grad_p_l2sq,
            self.norms.mgradp_l2sq,
            self.norms.m_linf,
            self.dp_semitrivial_h1
        )
    }
}

fn check_params(kappa: f64, gamma: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(BtnError::validation("kappa", format!("must be positive, got {kappa}")));
    }
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(BtnError::validation(
            "gamma",
            format!("metabolic exponent must satisfy γ ≥ 1, got {gamma}"),
        ));
    }
    Ok(())
}

/// `E = κ/2 ‖∇m‖² + 1/(2γ) ∫|m|^{2γ} + ½‖∇p‖² + ½‖m·∇p‖²`.
pub fn energy(m: &VectorField2, p: &ScalarField, kappa: f64, gamma: f64) -> Result<f64> {
    check_params(kappa, gamma)?;
    let m_pow = m.c1().zip_map(m.c2(), |a, b| (a * a + b * b).powf(gamma))?;
    Ok(0.5 * kappa * (grad_sq(m.c1()) + grad_sq(m.c2()))
        + integrate(&m_pow) / (2.0 * gamma)
        + 0.5 * grad_sq(p)
        + 0.5 * directional_grad_sq(m, p)?)
}

/// Same value as [`energy`], from an already computed norm suite.
pub fn energy_from_norms(n: &NormSample, kappa: f64, gamma: f64) -> f64 {
    0.5 * kappa * n.grad_m_l2sq + n.m_l2gamma / (2.0 * gamma) + 0.5 * n.grad_p_l2sq + 0.5 * n.mgradp_l2sq
}

/// `‖∇Δp‖_{L²}` from nested central differences, integrated over nodes at
/// least two cells from the boundary where both stencils are interior.
pub fn grad_laplacian_l2(p: &ScalarField) -> Result<f64> {
    let lap = crate::grid::laplacian_interior(p);
    let d = gradient(&lap)?;
    let g = p.grid();
    let mut sum = 0.0;
    for j in 2..g.ny().saturating_sub(2) {
        for i in 2..g.nx().saturating_sub(2) {
            let (a, b) = d.at(g.idx(i, j));
            sum += a * a + b * b;
        }
    }
    Ok((sum * g.hx() * g.hy()).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub intervals: usize,
    /// `max_k [(E_{k+1} − E_k)/Δt + ‖m_t‖²_{k+1}]`; positive means the energy
    /// fell by less than the dissipation predicts.
    pub max_signed_violation: f64,
    /// `max_k |(E_{k+1} − E_k)/Δt + ‖m_t‖²_{k+1}|`.
    pub max_abs_discrepancy: f64,
    /// `max_k (E_{k+1} − E_k)`.
    pub max_energy_increase: f64,
    /// Pearson correlation of the two rate series; `None` when either is
    /// constant (e.g. a stationary orbit).
    pub correlation: Option<f64>,
    pub de_dt: Vec<f64>,
    pub minus_mt_sq: Vec<f64>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Compares the discrete energy rate with `−‖m_t‖²` interval by interval.
/// Records must be equally spaced in time.
pub fn dissipation_check(records: &[EnergyRecord]) -> Result<DissipationReport> {
    if records.len() < 2 {
        return Err(BtnError::validation("records", "need at least two records"));
    }
    let dt0 = records[1].t - records[0].t;
    if !(dt0 > 0.0) {
        return Err(BtnError::validation("records", "times must increase"));
    }
    let mut de_dt = Vec::with_capacity(records.len() - 1);
    let mut minus_mt = Vec::with_capacity(records.len() - 1);
    let mut max_signed = f64::NEG_INFINITY;
    let mut max_abs: f64 = 0.0;
    let mut max_inc = f64::NEG_INFINITY;
    for w in records.windows(2) {
        let dt = w[1].t - w[0].t;
        if (dt - dt0).abs() > 1e-9 * dt0 {
            return Err(BtnError::validation(
                "records",
                format!("non-uniform spacing: {dt} vs {dt0}"),
            ));
        }
        let de = w[1].energy - w[0].energy;
        let rate = de / dt;
        let v = rate + w[1].mt_l2sq;
        max_signed = max_signed.max(v);
        max_abs = max_abs.max(v.abs());
        max_inc = max_inc.max(de);
        de_dt.push(rate);
        minus_mt.push(-w[1].mt_l2sq);
    }
    Ok(DissipationReport {
        intervals: de_dt.len(),
        max_signed_violation: max_signed,
        max_abs_discrepancy: max_abs,
        max_energy_increase: max_inc,
        correlation: pearson(&de_dt, &minus_mt),
        de_dt,
        minus_mt_sq: minus_mt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub lap_p_l2: f64,
    pub lap_m_l2: f64,
    pub grad_lap_p_l2: f64,
    /// `‖Δp‖ / (1 + (1 + κ^{−1/2}) ‖Δm‖)`.
    pub ratio_ph2: f64,
    /// `‖Δm‖ / (1 + κ^{−1/2})`.
    pub ratio_h2in: f64,
    pub max_ratio_ph2: f64,
    pub max_ratio_h2in: f64,
}

impl LedgerRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            self.lap_p_l2,
            self.lap_m_l2,
            self.grad_lap_p_l2,
            self.ratio_ph2,
            self.ratio_h2in,
            self.max_ratio_ph2,
            self.max_ratio_h2in
        )
    }
}

/// Empirical ratios shaped like the second-order a-priori bounds, with their
/// running maxima. Informational: nothing here is compared against a
/// constant.
pub fn lemma_ratio_ledger(records: &[EnergyRecord], kappa: f64) -> Vec<LedgerRow> {
    let c = 1.0 + kappa.powf(-0.5);
    let (mut max_a, mut max_b) = (0.0f64, 0.0f64);
    records
        .iter()
        .map(|r| {
            let lap_p = r.norms.lap_p_l2sq.sqrt();
            let lap_m = r.norms.lap_m_l2sq.sqrt();
            let ratio_ph2 = lap_p / (1.0 + c * lap_m);
            let ratio_h2in = lap_m / c;
            max_a = max_a.max(ratio_ph2);
            max_b = max_b.max(ratio_h2in);
            LedgerRow {
                t: r.t,
                lap_p_l2: lap_p,
                lap_m_l2: lap_m,
                grad_lap_p_l2: r.grad_lap_p_l2,
                ratio_ph2,
                ratio_h2in,
                max_ratio_ph2: max_a,
                max_ratio_h2in: max_b,
            }
        })
        .collect()
}

/// `max over the run ≤ 2 × max over the first 10 % of the horizon` for one
/// monitored quantity. Returns `(early_max, overall_max)`.
pub fn boundedness_ratio(records: &[EnergyRecord], quantity: impl Fn(&EnergyRecord) -> f64) -> (f64, f64) {
    let Some(last) = records.last() else {
        return (0.0, 0.0);
    };
    let t0 = records[0].t;
    let cutoff = t0 + 0.1 * (last.t - t0);
    let early = records
        .iter()
        .filter(|r| r.t <= cutoff)
        .map(&quantity)
        .fold(0.0f64, f64::max);
    let overall = records.iter().map(&quantity).fold(0.0f64, f64::max);
    (early, overall)
}

pub fn write_trajectory_csv<W: Write>(records: &[EnergyRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ledger_csv<W: Write>(rows: &[LedgerRow], mut out: W) -> Result<()> {
    writeln!(out, "{LEDGER_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}
