use super::ops::{directional_grad_sq, grad_sq, integrate, laplacian_interior};
use super::{ScalarField, VectorField2};
use crate::error::{BtnError, Result};

/// The quantities bounded uniformly in time by the a-priori estimates, in
/// their discrete form. Squared norms unless the name says otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormSample {
    pub grad_p_l2sq: f64,
    pub mgradp_l2sq: f64,
    pub grad_m_l2sq: f64,
    /// `∫ |m|^{2γ}`.
    pub m_l2gamma: f64,
    pub lap_m_l2sq: f64,
    pub lap_p_l2sq: f64,
    pub m_linf: f64,
    /// `∫ p S`, the right-hand side of the pressure testing identity.
    pub p_source: f64,
}

pub fn norm_suite(
    m: &VectorField2,
    p: &ScalarField,
    source: &ScalarField,
    gamma: f64,
) -> Result<NormSample> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(BtnError::validation(
            "gamma",
            format!("metabolic exponent must satisfy γ ≥ 1, got {gamma}"),
        ));
    }
    if !m.grid().same_as(p.grid()) || !p.grid().same_as(source.grid()) {
        return Err(BtnError::GridMismatch);
    }
    if !m.is_boundary_zero() {
        return Err(BtnError::NotBoundaryZero("conductance"));
    }
    if !p.is_boundary_zero() {
        return Err(BtnError::NotBoundaryZero("pressure"));
    }

    let sq = |f: &ScalarField| integrate(&f.map(|v| v * v).expect("finite"));
    let m_pow = m
        .c1()
        .zip_map(m.c2(), |a, b| (a * a + b * b).powf(gamma))?;

    Ok(NormSample {
        grad_p_l2sq: grad_sq(p),
        mgradp_l2sq: directional_grad_sq(m, p)?,
        grad_m_l2sq: grad_sq(m.c1()) + grad_sq(m.c2()),
        m_l2gamma: integrate(&m_pow),
        lap_m_l2sq: sq(&laplacian_interior(m.c1())) + sq(&laplacian_interior(m.c2())),
        lap_p_l2sq: sq(&laplacian_interior(p)),
        m_linf: m.linf(),
        p_source: integrate(&p.zip_map(source, |a, b| a * b)?),
    })
}
