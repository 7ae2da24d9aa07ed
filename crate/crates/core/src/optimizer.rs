//! Stochastic reconfiguration.
//!
//! Each iteration samples the current network, forms the covariance `S` of the
//! log-derivatives and the force `F`, shifts the diagonal of `S` by the
//! schedule `r(k) = max(r0 * decay^k, floor)`, solves `S' x = F` and moves the
//! parameters by `-alpha x`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, VmcError};
use crate::hamiltonian::Model;
use crate::sampler::{run_sampling, SampleEstimates, SamplerConfig};
use crate::wavefunction::RbfNetwork;

/// Retries of a failed solve, each with ten times the diagonal shift.
pub const SOLVE_RETRIES: usize = 3;

/// Consecutive failed iterations that abort a run.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

/// Absolute damping of the first spike retry, relative to the largest `S_ii`.
const RETRY_DAMPING: f64 = 1e-4;
/// A window whose error bar exceeds this multiple of the tolerance cannot count
/// as converged, however close its mean is to the previous one.
const CONVERGENCE_NOISE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SrConfig {
    pub alpha: f64,
    pub max_iter: usize,
    pub reg_floor: f64,
    pub reg_init: f64,
    pub reg_decay: f64,
    /// Relative pivot size below which the solve switches to a pseudo-inverse.
    pub solver_pivot_tol: f64,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    /// Relative energy rise, on top of five combined error bars, that rejects
    /// the previous update.
    pub spike_tol: f64,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            alpha: 0.01,
            max_iter: 500,
            reg_floor: 1e-4,
            reg_init: 100.0,
            reg_decay: 0.9,
            solver_pivot_tol: 1e-12,
            convergence_window: 20,
            convergence_tol: 1e-7,
            spike_tol: 0.05,
        }
    }
}

impl SrConfig {
    pub fn with_rate(alpha: f64, max_iter: usize) -> Self {
        SrConfig {
            alpha,
            max_iter,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(VmcError::Config(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("sr.alpha must be positive");
        }
        if !(self.reg_decay > 0.0 && self.reg_decay < 1.0) {
            return bad("sr.reg_decay must lie in (0, 1)");
        }
        if self.reg_floor.is_nan() || self.reg_floor <= 0.0 || self.reg_init.is_nan() || self.reg_init < 0.0 {
            return bad("sr.reg_floor must be positive and sr.reg_init non-negative");
        }
        if [self.solver_pivot_tol, self.convergence_tol]
            .iter()
            .any(|t| t.is_nan() || *t < 0.0)
            || self.spike_tol.is_nan()
            || self.spike_tol <= 0.0
        {
            return bad("tolerances must be non-negative");
        }
        if self.max_iter == 0 || self.convergence_window == 0 {
            return bad("sr.max_iter and sr.convergence_window must be positive");
        }
        Ok(())
    }

    /// Diagonal shift at iteration `k`.
    pub fn regularization(&self, k: usize) -> f64 {
        let k = i32::try_from(k).unwrap_or(i32::MAX);
        (self.reg_init * self.reg_decay.powi(k)).max(self.reg_floor)
    }
}

/// `S_ij = <O_i O_j> - <O_i><O_j>` and `F_i = <E O_i> - <E><O_i>` for real parameters.
pub fn build_sr(est: &SampleEstimates) -> (DMatrix<f64>, DVector<f64>) {
    let s = &est.oo_mean - &est.o_mean * est.o_mean.transpose();
    // symmetrize away rounding in the outer-product difference
    let s = (&s + s.transpose()) * 0.5;
    let f = &est.eo_mean - &est.o_mean * est.e_mean;
    (s, f)
}

/// `S'_ii = S_ii (1 + shift)`, off-diagonal entries untouched.
pub fn regularize_with(s: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut out = s.clone();
    for i in 0..out.nrows() {
        out[(i, i)] *= 1.0 + shift;
    }
    out
}

/// Diagonal shift plus `level` times the largest diagonal entry, which also
/// damps directions the sampled configurations barely see.
fn damped(s: &DMatrix<f64>, shift: f64, level: f64) -> DMatrix<f64> {
    let top = s.diagonal().max().max(0.0);
    let mut out = regularize_with(s, shift);
    for i in 0..out.nrows() {
        out[(i, i)] += level * top;
    }
    out
}

pub fn regularize(s: &DMatrix<f64>, k: usize, cfg: &SrConfig) -> DMatrix<f64> {
    regularize_with(s, cfg.regularization(k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// `alpha x` with `S' x = F`.
    pub delta: DVector<f64>,
    /// The pseudo-inverse fallback was used.
    pub flagged: bool,
    /// `||S' x - F||`.
    pub residual: f64,
}

/// Solves `S' x = F` by fully pivoted LU and returns `alpha x`.
///
/// When the smallest pivot is below `pivot_tol` times the largest, the system is
/// treated as rank deficient and solved in the least-squares sense with an SVD
/// pseudo-inverse instead.
pub fn solve_update(s_reg: &DMatrix<f64>, f: &DVector<f64>, alpha: f64, pivot_tol: f64) -> Result<SolveOutcome> {
    let n = s_reg.nrows();
    if s_reg.ncols() != n || f.len() != n {
        return Err(VmcError::DimensionMismatch {
            expected: n,
            got: f.len(),
        });
    }
    if f.iter().all(|&v| v == 0.0) {
        return Ok(SolveOutcome {
            delta: DVector::zeros(n),
            flagged: false,
            residual: 0.0,
        });
    }

    let lu = s_reg.clone().full_piv_lu();
    let u = lu.u();
    let pivots = u.diagonal().map(f64::abs);
    let (pmin, pmax) = (pivots.min(), pivots.max());
    let rank_deficient = pmax.is_nan() || pmax <= 0.0 || pmin <= pivot_tol * pmax;

    let (mut x, flagged) = if rank_deficient {
        let svd = s_reg.clone().svd(true, true);
        let eps = pivot_tol * svd.singular_values.max();
        let x = svd
            .solve(f, eps)
            .map_err(|e| VmcError::NumericalFailure(format!("pseudo-inverse failed: {e}")))?;
        (x, true)
    } else {
        let x = lu
            .solve(f)
            .ok_or_else(|| VmcError::NumericalFailure("singular SR matrix".into()))?;
        // two rounds of iterative refinement
        let mut x = x;
        for _ in 0..2 {
            let r = f - s_reg * &x;
            match lu.solve(&r) {
                Some(dx) if dx.iter().all(|v| v.is_finite()) => x += dx,
                _ => break,
            }
        }
        (x, false)
    };
    if !x.iter().all(|v| v.is_finite()) {
        return Err(VmcError::NumericalFailure("non-finite SR solution".into()));
    }
    let residual = (s_reg * &x - f).norm();
    x *= alpha;
    Ok(SolveOutcome {
        delta: x,
        flagged,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub error: f64,
    pub acceptance: f64,
    pub param_norm: f64,
    pub r_k: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Mean energy over the final convergence window.
    pub final_energy: f64,
    pub final_error: f64,
    /// Lowest `energy + error` seen during the run.
    pub best_energy: f64,
    pub best_error: f64,
    pub best_params: Vec<f64>,
    pub final_params: Vec<f64>,
    /// Updates undone because the energy jumped afterwards.
    pub rejected_updates: usize,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn aborted(&self) -> bool {
        matches!(self.status, RunStatus::Aborted(_))
    }

    /// CSV with columns `iter,energy,error,acceptance,r_k,flagged`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.iterations, out)
    }
}

/// Writes iteration records in the [`RunRecord::write_csv`] format.
pub fn write_trace_csv<W: Write>(iterations: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "energy", "error", "acceptance", "r_k", "flagged"])?;
    for it in iterations {
        w.write_record([
            it.iter.to_string(),
            it.energy.to_string(),
            it.error.to_string(),
            it.acceptance.to_string(),
            it.r_k.to_string(),
            u8::from(it.flagged).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn mix_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn window_mean(xs: &[IterationRecord]) -> f64 {
    xs.iter().map(|r| r.energy).sum::<f64>() / xs.len() as f64
}

fn window_error(xs: &[IterationRecord]) -> f64 {
    xs.iter().map(|r| r.error * r.error).sum::<f64>().sqrt() / xs.len() as f64
}

/// Runs stochastic reconfiguration on `net` in place.
pub fn optimize(net: &mut RbfNetwork, model: &Model, sampler: &SamplerConfig, sr: &SrConfig) -> Result<RunRecord> {
    optimize_with(net, model, sampler, sr, |_| {})
}

/// [`optimize`] with a callback after every recorded iteration.
pub fn optimize_with<F>(
    net: &mut RbfNetwork,
    model: &Model,
    sampler: &SamplerConfig,
    sr: &SrConfig,
    mut on_iteration: F,
) -> Result<RunRecord>
where
    F: FnMut(&IterationRecord),
{
    sr.validate()?;
    sampler.validate()?;
    model.validate()?;
    if net.input_dim() != model.input_dim() {
        return Err(VmcError::DimensionMismatch {
            expected: model.input_dim(),
            got: net.input_dim(),
        });
    }
    if !net.activation().is_differentiable() {
        return Err(VmcError::UnsupportedActivation(net.activation().name()));
    }

    let w = sr.convergence_window;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut anchor: Option<Anchor> = None;
    let mut failures = 0usize;
    let mut spike_retries = 0usize;
    // parameters equal the anchor's, so the next sample cannot be a spike
    let mut at_anchor = false;
    let mut rejected_updates = 0usize;
    let mut last_failure = String::new();
    let mut status = RunStatus::MaxIterations;

    for k in 0..sr.max_iter {
        let mut cfg = sampler.clone();
        cfg.seed = mix_seed(sampler.seed, k as u64);

        let est = match run_sampling(net, model, &cfg) {
            Ok(est) => est,
            Err(e) => {
                failures += 1;
                last_failure = e.to_string();
                if let Some(a) = &anchor {
                    net.set_params(&a.params)?;
                }
                if failures >= MAX_CONSECUTIVE_FAILURES {
                    status = RunStatus::Aborted(last_failure.clone());
                    break;
                }
                continue;
            }
        };

        // An energy jump after the last update is undone and the step retried
        // with a larger diagonal shift.
        if let Some(a) = anchor.as_ref().filter(|_| !at_anchor) {
            if a.is_spike(&est, sr.spike_tol) {
                rejected_updates += 1;
                net.set_params(&a.params)?;
                at_anchor = true;
                if spike_retries < SOLVE_RETRIES {
                    spike_retries += 1;
                    let boost = 10f64.powi(spike_retries as i32);
                    let s_retry = damped(&a.s, a.shift * boost, RETRY_DAMPING * boost);
                    if let Ok(sol) = solve_update(&s_retry, &a.f, sr.alpha, sr.solver_pivot_tol) {
                        let step = descent_step(&sol.delta);
                        if net.apply_update(&step).is_ok() {
                            at_anchor = false;
                        } else {
                            net.set_params(&a.params)?;
                        }
                    }
                }
                continue;
            }
        }
        spike_retries = 0;
        at_anchor = false;

        let params = net.params();
        let (s, f) = build_sr(&est);
        let mut shift = sr.regularization(k);
        let mut solved = None;
        for attempt in 0..=SOLVE_RETRIES {
            if let Ok(sol) = solve_update(&regularize_with(&s, shift), &f, sr.alpha, sr.solver_pivot_tol) {
                solved = Some((sol, attempt > 0));
                break;
            }
            shift *= 10.0;
        }

        let record = IterationRecord {
            iter: k,
            energy: est.e_mean,
            error: est.e_err,
            acceptance: est.acceptance_rate,
            param_norm: net.param_norm(),
            r_k: sr.regularization(k),
            flagged: est.mixing_warning || solved.as_ref().is_none_or(|(sol, retried)| sol.flagged || *retried),
        };
        on_iteration(&record);
        if best.as_ref().is_none_or(|(e, err, _)| est.e_mean + est.e_err < e + err) {
            best = Some((est.e_mean, est.e_err, params.clone()));
        }
        records.push(record);

        let applied = match solved {
            Some((sol, _)) => {
                let step = descent_step(&sol.delta);
                net.apply_update(&step).map_err(|e| e.to_string())
            }
            None => Err(format!(
                "SR solve failed after {SOLVE_RETRIES} retries at iteration {k}"
            )),
        };
        match applied {
            Ok(()) => failures = 0,
            Err(msg) => {
                failures += 1;
                last_failure = msg;
                net.set_params(&params)?;
            }
        }
        anchor = Some(Anchor {
            params,
            energy: est.e_mean,
            error: est.e_err,
            s,
            f,
            shift,
        });
        if failures >= MAX_CONSECUTIVE_FAILURES {
            status = RunStatus::Aborted(last_failure.clone());
            break;
        }

        if records.len() >= 2 * w {
            let n = records.len();
            let recent = window_mean(&records[n - w..]);
            let previous = window_mean(&records[n - 2 * w..n - w]);
            if (recent - previous).abs() < sr.convergence_tol
                && window_error(&records[n - w..]) < CONVERGENCE_NOISE_FACTOR * sr.convergence_tol
            {
                status = RunStatus::Converged;
                break;
            }
        }
    }

    let Some((best_energy, best_error, best_params)) = best else {
        return Ok(RunRecord {
            iterations: records,
            status: RunStatus::Aborted(last_failure),
            final_energy: f64::NAN,
            final_error: f64::NAN,
            best_energy: f64::NAN,
            best_error: f64::NAN,
            best_params: net.params(),
            final_params: net.params(),
            rejected_updates,
        });
    };

    let tail = &records[records.len().saturating_sub(w)..];
    let final_energy = window_mean(tail);
    let final_error = window_error(tail);
    Ok(RunRecord {
        iterations: records,
        status,
        final_energy,
        final_error,
        best_energy,
        best_error,
        best_params,
        final_params: net.params(),
        rejected_updates,
    })
}

fn descent_step(delta: &DVector<f64>) -> Vec<f64> {
    delta.iter().map(|d| -d).collect()
}

/// Last accepted state and the SR system its update came from.
struct Anchor {
    params: Vec<f64>,
    energy: f64,
    error: f64,
    s: DMatrix<f64>,
    f: DVector<f64>,
    shift: f64,
}

impl Anchor {
    fn is_spike(&self, est: &SampleEstimates, spike_tol: f64) -> bool {
        let allowed = spike_tol * self.energy.abs().max(1.0) + 5.0 * self.error.hypot(est.e_err);
        est.e_mean > self.energy + allowed
    }
}
