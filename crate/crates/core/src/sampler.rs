//! Metropolis sampling of `|psi(n)|^2` over the truncated basis.
//!
//! A chain only records which configurations it visits. Local energies and
//! log-derivatives are then computed once per distinct configuration and
//! weighted by visit counts, which gives the same averages as accumulating
//! sample by sample at a fraction of the cost on these small bases.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, VmcError};
use crate::hamiltonian::Model;
use crate::wavefunction::{Configuration, RbfNetwork, DEFAULT_PSI_FLOOR};

/// Minimum number of blocks kept by the blocking analysis.
pub const MIN_BLOCKS: usize = 32;

/// Below this acceptance rate the estimates carry a mixing warning.
/// Share of proposals that jump to a uniformly random configuration.
pub const DEFAULT_JUMP_PROB: f64 = 0.2;
pub const MIXING_WARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Recorded samples, pooled over all chains.
    pub n_samples: usize,
    /// Steps discarded at the start of each chain.
    pub n_therm: usize,
    /// Steps between recorded samples.
    pub stride: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub psi_floor: f64,
    /// Probability of proposing a uniformly random configuration instead of a
    /// +-1 step.
    pub jump_prob: f64,
}

impl SamplerConfig {
    /// 50000 samples, `1000 p` thermalization steps, a stride of `p` and
    /// uniform jumps at [`DEFAULT_JUMP_PROB`].
    ///
    /// With +-1 steps alone a chain cannot cross a near-node of the amplitude, and
    /// the local energy on one side then depends on amplitudes the chain never
    /// weighs.
    pub fn for_model(model: &Model, seed: u64) -> Self {
        let p = model.input_dim();
        SamplerConfig {
            n_samples: 50_000,
            n_therm: 1000 * p,
            stride: p,
            seed,
            n_chains: 4,
            psi_floor: DEFAULT_PSI_FLOOR,
            jump_prob: DEFAULT_JUMP_PROB,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.stride == 0 || self.n_chains == 0 {
            return Err(VmcError::Config(
                "sampler needs n_samples > 0, stride >= 1 and n_chains >= 1".into(),
            ));
        }
        if self.n_chains > self.n_samples {
            return Err(VmcError::Config(format!(
                "{} chains cannot share {} samples",
                self.n_chains, self.n_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return Err(VmcError::Config("jump probability must lie in [0, 1]".into()));
        }
        if self.psi_floor.is_nan() || self.psi_floor < 0.0 {
            return Err(VmcError::Config("psi floor must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEstimates {
    pub e_mean: f64,
    pub e_err: f64,
    pub o_mean: DVector<f64>,
    pub eo_mean: DVector<f64>,
    pub oo_mean: DMatrix<f64>,
    pub acceptance_rate: f64,
    pub n_samples: usize,
    pub mixing_warning: bool,
}

/// Flip one coordinate by +-1; steps off either edge land back on the current value.
pub fn propose<R: Rng + ?Sized>(n: &Configuration, extent: usize, rng: &mut R) -> Configuration {
    let mut out = n.clone();
    let axis = rng.random_range(0..n.dim());
    let up = rng.random_bool(0.5);
    let x = &mut out.as_mut_slice()[axis];
    if up {
        if *x + 1 < extent {
            *x += 1;
        }
    } else if *x > 0 {
        *x -= 1;
    }
    out
}

/// With probability `jump_prob` a uniformly random configuration, otherwise
/// [`propose`]. Both kernels are symmetric, so the mixture is too.
pub fn propose_mixed<R: Rng + ?Sized>(n: &Configuration, extent: usize, jump_prob: f64, rng: &mut R) -> Configuration {
    if jump_prob > 0.0 && rng.random_bool(jump_prob) {
        Configuration::new((0..n.dim()).map(|_| rng.random_range(0..extent)).collect())
    } else {
        propose(n, extent, rng)
    }
}

/// Accept `proposed` with probability `min(1, (psi_new / psi_old)^2)`.
fn accept<R: Rng + ?Sized>(psi_old: f64, psi_new: f64, floor: f64, rng: &mut R) -> bool {
    if psi_new.abs() < floor {
        return false;
    }
    let ratio = psi_new / psi_old;
    let p = ratio * ratio;
    p >= 1.0 || rng.random::<f64>() < p
}

/// One Metropolis update from `n`. Fails if `psi(n)` is below `floor`.
pub fn metropolis_step<R: Rng + ?Sized>(
    net: &RbfNetwork,
    model: &Model,
    n: &Configuration,
    floor: f64,
    jump_prob: f64,
    rng: &mut R,
) -> Result<(Configuration, bool)> {
    let psi = net.evaluate(n)?;
    if psi.abs() < floor {
        return Err(VmcError::DivisionHazard {
            amplitude: psi,
            floor,
            config: n.as_slice().to_vec(),
        });
    }
    let proposed = propose_mixed(n, model.extent(), jump_prob, rng);
    let psi_new = net.evaluate(&proposed)?;
    if accept(psi, psi_new, floor, rng) {
        Ok((proposed, true))
    } else {
        Ok((n.clone(), false))
    }
}

/// Memoized network amplitudes keyed by flat basis index.
struct AmplitudeCache<'a> {
    net: &'a RbfNetwork,
    values: HashMap<usize, f64>,
}

impl<'a> AmplitudeCache<'a> {
    fn new(net: &'a RbfNetwork) -> Self {
        AmplitudeCache {
            net,
            values: HashMap::new(),
        }
    }

    fn get(&mut self, index: usize, n: &Configuration) -> Result<f64> {
        if let Some(&v) = self.values.get(&index) {
            return Ok(v);
        }
        let v = self.net.evaluate(n)?;
        self.values.insert(index, v);
        Ok(v)
    }
}

struct ChainTrace {
    visits: Vec<usize>,
    accepted: u64,
    proposed: u64,
}

pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_chain(
    net: &RbfNetwork,
    model: &Model,
    cfg: &SamplerConfig,
    chain: usize,
    n_record: usize,
) -> Result<ChainTrace> {
    let mut rng = chain_rng(cfg.seed, chain);
    let mut cache = AmplitudeCache::new(net);
    let extent = model.extent();
    let floor = cfg.psi_floor;

    // Start from the largest amplitude among the neuron centers and a few random draws.
    let mut candidates: Vec<Configuration> = (0..net.hidden())
        .map(|i| {
            Configuration::new(
                net.center(i)
                    .iter()
                    .map(|&c| c.round().clamp(0.0, (extent - 1) as f64) as usize)
                    .collect(),
            )
        })
        .collect();
    for _ in 0..16 {
        candidates.push(Configuration::new(
            (0..model.input_dim()).map(|_| rng.random_range(0..extent)).collect(),
        ));
    }
    let mut best: Option<(f64, Configuration)> = None;
    for c in candidates {
        let v = cache.get(model.index_of(&c), &c)?.abs();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, c));
        }
    }
    let (mut best_amp, mut current) = best.expect("at least one start candidate");
    if best_amp < floor {
        return Err(VmcError::NumericalFailure(
            "network amplitude vanishes at every start candidate".into(),
        ));
    }
    let mut best_config = current.clone();
    let mut current_index = model.index_of(&current);
    let mut psi = cache.get(current_index, &current)?;

    let mut visits = Vec::with_capacity(n_record);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let total_steps = cfg.n_therm + n_record * cfg.stride;
    for step in 0..total_steps {
        if psi.abs() < floor {
            current = best_config.clone();
            current_index = model.index_of(&current);
            psi = cache.get(current_index, &current)?;
        }
        let next = propose_mixed(&current, extent, cfg.jump_prob, &mut rng);
        let next_index = model.index_of(&next);
        let psi_next = cache.get(next_index, &next)?;
        let ok = accept(psi, psi_next, floor, &mut rng);
        if ok {
            current = next;
            current_index = next_index;
            psi = psi_next;
            if psi.abs() > best_amp {
                best_amp = psi.abs();
                best_config = current.clone();
            }
        }
        if step >= cfg.n_therm {
            proposed += 1;
            accepted += ok as u64;
            if (step - cfg.n_therm + 1).is_multiple_of(cfg.stride) {
                visits.push(current_index);
            }
        }
    }
    Ok(ChainTrace {
        visits,
        accepted,
        proposed,
    })
}

/// Standard error of the mean of a correlated series.
///
/// Consecutive pairs are averaged repeatedly; the largest naive error over all
/// levels that still have at least [`MIN_BLOCKS`] blocks is returned. Short
/// series fall back to the naive error.
pub fn blocking_error(series: &[f64]) -> f64 {
    let naive = |xs: &[f64]| -> f64 {
        let n = xs.len();
        if n < 2 {
            return 0.0;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    let mut level: Vec<f64> = series.to_vec();
    let mut err = naive(&level);
    while level.len() / 2 >= MIN_BLOCKS {
        level = level.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        err = err.max(naive(&level));
    }
    err
}

/// Samples the network and returns the averages that stochastic reconfiguration needs.
pub fn run_sampling(net: &RbfNetwork, model: &Model, cfg: &SamplerConfig) -> Result<SampleEstimates> {
    cfg.validate()?;
    model.validate()?;
    if net.input_dim() != model.input_dim() {
        return Err(VmcError::DimensionMismatch {
            expected: model.input_dim(),
            got: net.input_dim(),
        });
    }

    let per_chain = cfg.n_samples / cfg.n_chains;
    let extra = cfg.n_samples % cfg.n_chains;
    let traces: Vec<ChainTrace> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(net, model, cfg, c, per_chain + usize::from(c < extra)))
        .collect::<Result<_>>()?;

    // Local energy and log-derivatives once per distinct visited configuration.
    let mut distinct: Vec<usize> = traces.iter().flat_map(|t| t.visits.iter().copied()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let floor = cfg.psi_floor;
    let per_config: Vec<(f64, Vec<f64>)> = distinct
        .par_iter()
        .map(|&i| {
            let n = model.config_at(i);
            let e = model.local_energy(net, &n, floor)?;
            let o = net.log_derivatives(&n, floor)?;
            Ok((e, o))
        })
        .collect::<Result<_>>()?;
    let slot: HashMap<usize, usize> = distinct.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    let mut counts = vec![0u64; distinct.len()];
    for t in &traces {
        for v in &t.visits {
            counts[slot[v]] += 1;
        }
    }

    let np = net.n_params();
    let total = cfg.n_samples as f64;
    let mut e_sum = 0.0;
    let mut o_sum = DVector::zeros(np);
    let mut eo_sum = DVector::zeros(np);
    let mut oo_sum = DMatrix::zeros(np, np);
    for (k, (e, o)) in per_config.iter().enumerate() {
        let w = counts[k] as f64;
        if w == 0.0 {
            continue;
        }
        let o = DVector::from_column_slice(o);
        e_sum += w * e;
        o_sum.axpy(w, &o, 1.0);
        eo_sum.axpy(w * e, &o, 1.0);
        oo_sum.ger(w, &o, &o, 1.0);
    }

    // Error bar: blocking per chain, then combined as independent means.
    let mut var = 0.0;
    for t in &traces {
        let series: Vec<f64> = t.visits.iter().map(|v| per_config[slot[v]].0).collect();
        let err = blocking_error(&series);
        let weight = series.len() as f64 / total;
        var += (weight * err).powi(2);
    }

    let accepted: u64 = traces.iter().map(|t| t.accepted).sum();
    let proposed: u64 = traces.iter().map(|t| t.proposed).sum();
    let acceptance_rate = if proposed == 0 {
        0.0
    } else {
        accepted as f64 / proposed as f64
    };

    // rank-one updates round the two triangles differently
    let oo_sum = (&oo_sum + oo_sum.transpose()) * 0.5;
    let est = SampleEstimates {
        e_mean: e_sum / total,
        e_err: var.sqrt(),
        o_mean: o_sum / total,
        eo_mean: eo_sum / total,
        oo_mean: oo_sum / total,
        acceptance_rate,
        n_samples: cfg.n_samples,
        mixing_warning: acceptance_rate < MIXING_WARNING_RATE,
    };
    let finite = est.e_mean.is_finite()
        && est.e_err.is_finite()
        && est.o_mean.iter().all(|v| v.is_finite())
        && est.eo_mean.iter().all(|v| v.is_finite())
        && est.oo_mean.iter().all(|v| v.is_finite());
    if !finite {
        return Err(VmcError::NumericalFailure("non-finite sample accumulator".into()));
    }
    Ok(est)
}
