//! Reference energies and eigenvectors for the benchmark models.
//!
//! Closed forms for the displaced oscillators, low-order perturbation theory for
//! the tilted box, and dense symmetric diagonalization for anything that fits in
//! memory. None of these touch the network or the sampler.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Result, VmcError};
use crate::hamiltonian::Model;

/// Second-order shift of the box ground level per unit slope squared.
pub const BOX_SECOND_ORDER_COEFF: f64 = -0.002194;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    ClosedForm,
    Perturbation1,
    Perturbation2,
    DenseDiag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub energy: f64,
    pub eigenvector: Option<Vec<f64>>,
    pub method: OracleMethod,
    /// Distance from the lowest to the next eigenvalue, dense results only.
    pub gap: Option<f64>,
}

/// Overlap of the displaced-oscillator ground state with the unperturbed level `n`.
///
/// The field displaces the Gaussian, which gives a coherent state with amplitudes
/// `E^n exp(-E^2/4) / sqrt(2^n n!)` in the phase convention of
/// [`crate::hamiltonian::ho_position_element`].
pub fn ho1d_overlaps(field: f64, n_terms: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_terms);
    let mut v = (-field * field / 4.0).exp();
    for n in 0..n_terms {
        if n > 0 {
            v *= field / (2.0 * n as f64).sqrt();
        }
        out.push(v);
    }
    out
}

/// Ground state of `H0 + E x`: energy `(1 - E^2)/2` and the first `n_terms` overlaps.
pub fn ho1d_exact(field: f64, n_terms: usize) -> OracleResult {
    OracleResult {
        energy: 0.5 * (1.0 - field * field),
        eigenvector: Some(ho1d_overlaps(field, n_terms)),
        method: OracleMethod::ClosedForm,
        gap: Some(1.0),
    }
}

/// Two-dimensional analogue; overlaps are flattened row-major over `(n_x, n_y)`.
pub fn ho2d_exact(field_x: f64, field_y: f64, n_terms: usize) -> OracleResult {
    let px = ho1d_overlaps(field_x, n_terms);
    let py = ho1d_overlaps(field_y, n_terms);
    let overlaps = px.iter().flat_map(|x| py.iter().map(move |y| x * y)).collect();
    OracleResult {
        energy: 1.0 - 0.5 * (field_x * field_x + field_y * field_y),
        eigenvector: Some(overlaps),
        method: OracleMethod::ClosedForm,
        gap: Some(1.0),
    }
}

/// Box ground energy to first or second order in the slope.
pub fn box_perturbation(slope: f64, order: u32) -> Result<OracleResult> {
    let base = PI * PI / 2.0 + slope / 2.0;
    let (energy, method) = match order {
        1 => (base, OracleMethod::Perturbation1),
        2 => (
            base + BOX_SECOND_ORDER_COEFF * slope * slope,
            OracleMethod::Perturbation2,
        ),
        other => {
            return Err(VmcError::InvalidParameters(format!(
                "perturbation order must be 1 or 2, got {other}"
            )))
        }
    };
    Ok(OracleResult {
        energy,
        eigenvector: None,
        method,
        gap: None,
    })
}

/// Lowest eigenpair of the truncated model matrix.
pub fn dense_lowest_eig(model: &Model, cap: usize) -> Result<OracleResult> {
    let h = model.dense_matrix(cap)?;
    let size = h.nrows();
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 1000 + 200 * size)
        .ok_or_else(|| VmcError::OracleFailure(format!("eigensolver did not converge for {model}")))?;

    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lowest = order[0];
    let energy = eig.eigenvalues[lowest];
    if !energy.is_finite() {
        return Err(VmcError::OracleFailure("non-finite eigenvalue".into()));
    }
    let gap = order.get(1).map(|&i| eig.eigenvalues[i] - energy);

    let mut v: Vec<f64> = eig.eigenvectors.column(lowest).iter().copied().collect();
    normalize_sign(&mut v);
    Ok(OracleResult {
        energy,
        eigenvector: Some(v),
        method: OracleMethod::DenseDiag,
        gap,
    })
}

/// Scale to unit norm with the first non-negligible component positive.
pub fn normalize_sign(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let sign = v.iter().find(|x| x.abs() > 1e-12 * scale).map_or(1.0, |x| x.signum());
    v.iter_mut().for_each(|x| *x *= sign / norm);
}
