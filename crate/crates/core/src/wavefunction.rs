//! RBF-network amplitude over integer quantum numbers.
//!
//! The network has one output neuron:
//!
//! ```text
//! psi(n) = sum_i a_i * rho(|b_i|, ||n - c_i||)
//! ```
//!
//! The spread enters only through `|b_i|`, so the sign of `b_i` is free and the
//! optimizer may move it through zero without the activation changing shape.
//! Parameters are flattened as all weights, then all spreads, then the centers
//! row-major; that order indexes the SR matrix and force vector.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};

/// Amplitudes smaller than this in magnitude are never divided by.
pub const DEFAULT_PSI_FLOOR: f64 = 1e-300;

/// Smallest |b| produced by [`RbfNetwork::random`].
pub const MIN_INIT_SPREAD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `exp(-|b| r^2)`
    Gaussian,
    /// `exp(-|b| r)`
    ExpAbs,
    /// `sqrt(r^2 + b^2)`, evaluation only.
    Multiquadric,
    /// `1 / sqrt(r^2 + b^2)`, evaluation only.
    InverseMultiquadric,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Gaussian => "gaussian",
            Activation::ExpAbs => "exp-abs",
            Activation::Multiquadric => "multiquadric",
            Activation::InverseMultiquadric => "inverse-multiquadric",
        }
    }

    /// Whether log-derivatives are available, i.e. the activation can be optimized.
    pub fn is_differentiable(self) -> bool {
        matches!(self, Activation::Gaussian | Activation::ExpAbs)
    }

    /// Activation value given the squared distance and the spread parameter.
    #[inline]
    fn apply(self, dist2: f64, spread: f64) -> f64 {
        let s = spread.abs();
        match self {
            Activation::Gaussian => (-s * dist2).exp(),
            Activation::ExpAbs => (-s * dist2.sqrt()).exp(),
            Activation::Multiquadric => (dist2 + s * s).sqrt(),
            Activation::InverseMultiquadric => 1.0 / (dist2 + s * s).sqrt(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = VmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Activation::Gaussian),
            "exp-abs" | "expabs" | "exp_abs" => Ok(Activation::ExpAbs),
            "multiquadric" => Ok(Activation::Multiquadric),
            "inverse-multiquadric" | "inverse_multiquadric" => Ok(Activation::InverseMultiquadric),
            other => Err(VmcError::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// A point of the truncated basis: one non-negative quantum number per input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(Vec<usize>);

impl Configuration {
    pub fn new(n: Vec<usize>) -> Self {
        Configuration(n)
    }

    pub fn zeros(dim: usize) -> Self {
        Configuration(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Configuration {
    fn from(n: Vec<usize>) -> Self {
        Configuration(n)
    }
}

impl std::ops::Index<usize> for Configuration {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfNetwork {
    activation: Activation,
    input_dim: usize,
    weights: Vec<f64>,
    spreads: Vec<f64>,
    /// Row-major, `hidden * input_dim`.
    centers: Vec<f64>,
}

impl RbfNetwork {
    pub fn new(weights: Vec<f64>, spreads: Vec<f64>, centers: Vec<Vec<f64>>, activation: Activation) -> Result<Self> {
        let hidden = weights.len();
        if hidden == 0 {
            return Err(VmcError::InvalidParameters(
                "network needs at least one hidden neuron".into(),
            ));
        }
        if spreads.len() != hidden || centers.len() != hidden {
            return Err(VmcError::InvalidParameters(format!(
                "{} weights, {} spreads and {} centers do not match",
                hidden,
                spreads.len(),
                centers.len()
            )));
        }
        let input_dim = centers[0].len();
        if input_dim == 0 || centers.iter().any(|c| c.len() != input_dim) {
            return Err(VmcError::InvalidParameters(
                "centers must share a positive dimension".into(),
            ));
        }
        let net = RbfNetwork {
            activation,
            input_dim,
            weights,
            spreads,
            centers: centers.into_iter().flatten().collect(),
        };
        if !net.params().iter().all(|v| v.is_finite()) {
            return Err(VmcError::InvalidParameters("all parameters must be finite".into()));
        }
        Ok(net)
    }

    /// Random network, deterministic in `seed`.
    ///
    /// Weights and spreads are uniform in `[-scale, scale]`, spreads redrawn until
    /// `|b| >= 0.01`; centers are uniform in `[0, center_max]` so that every
    /// neuron starts near some part of the truncated basis.
    pub fn random(
        hidden: usize,
        input_dim: usize,
        center_max: f64,
        scale: f64,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if hidden == 0 || input_dim == 0 {
            return Err(VmcError::InvalidParameters(
                "hidden and input dimensions must be positive".into(),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) || !(center_max >= 0.0 && center_max.is_finite()) {
            return Err(VmcError::InvalidParameters(format!(
                "bad init scale {scale} or center range {center_max}"
            )));
        }
        if scale < MIN_INIT_SPREAD {
            return Err(VmcError::InvalidParameters(format!(
                "init scale {scale} cannot produce |b| >= {MIN_INIT_SPREAD}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..hidden).map(|_| rng.random_range(-scale..=scale)).collect();
        let spreads = (0..hidden)
            .map(|_| loop {
                let b: f64 = rng.random_range(-scale..=scale);
                if b.abs() >= MIN_INIT_SPREAD {
                    break b;
                }
            })
            .collect();
        let centers = (0..hidden * input_dim)
            .map(|_| rng.random_range(0.0..=center_max))
            .collect();
        Ok(RbfNetwork {
            activation,
            input_dim,
            weights,
            spreads,
            centers,
        })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spreads(&self) -> &[f64] {
        &self.spreads
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Total number of variational parameters, `M (p + 2)`.
    pub fn n_params(&self) -> usize {
        self.hidden() * (self.input_dim + 2)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.spreads);
        out.extend_from_slice(&self.centers);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(VmcError::DimensionMismatch {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(VmcError::NumericalFailure("non-finite parameter update".into()));
        }
        let m = self.hidden();
        self.weights.copy_from_slice(&params[..m]);
        self.spreads.copy_from_slice(&params[m..2 * m]);
        self.centers.copy_from_slice(&params[2 * m..]);
        Ok(())
    }

    /// `params += delta`.
    pub fn apply_update(&mut self, delta: &[f64]) -> Result<()> {
        let mut p = self.params();
        if delta.len() != p.len() {
            return Err(VmcError::DimensionMismatch {
                expected: p.len(),
                got: delta.len(),
            });
        }
        p.iter_mut().zip(delta).for_each(|(x, d)| *x += d);
        self.set_params(&p)
    }

    pub fn param_norm(&self) -> f64 {
        self.params().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_dim(&self, n: &Configuration) -> Result<()> {
        if n.dim() != self.input_dim {
            return Err(VmcError::DimensionMismatch {
                expected: self.input_dim,
                got: n.dim(),
            });
        }
        Ok(())
    }

    #[inline]
    fn dist2(&self, i: usize, n: &[usize]) -> f64 {
        self.center(i)
            .iter()
            .zip(n)
            .map(|(c, &x)| {
                let d = x as f64 - c;
                d * d
            })
            .sum()
    }

    /// Network output at `n`.
    pub fn evaluate(&self, n: &Configuration) -> Result<f64> {
        self.check_dim(n)?;
        let psi: f64 = (0..self.hidden())
            .map(|i| self.weights[i] * self.activation.apply(self.dist2(i, n.as_slice()), self.spreads[i]))
            .sum();
        if !psi.is_finite() {
            return Err(VmcError::NumericalFailure(format!(
                "non-finite amplitude at {:?}",
                n.as_slice()
            )));
        }
        Ok(psi)
    }

    /// `d log psi / d lambda` for every parameter, in flattening order.
    ///
    /// Only the Gaussian and exp-abs activations are supported. `floor` guards the
    /// division by psi.
    pub fn log_derivatives(&self, n: &Configuration, floor: f64) -> Result<Vec<f64>> {
        if !self.activation.is_differentiable() {
            return Err(VmcError::UnsupportedActivation(self.activation.name()));
        }
        if let Some(i) = self.spreads.iter().position(|&b| b == 0.0) {
            return Err(VmcError::DerivativeSingularity { neuron: i });
        }
        let psi = self.evaluate(n)?;
        if psi.abs() < floor {
            return Err(VmcError::DivisionHazard {
                amplitude: psi,
                floor,
                config: n.as_slice().to_vec(),
            });
        }

        let m = self.hidden();
        let p = self.input_dim;
        let mut out = vec![0.0; self.n_params()];
        let (o_a, rest) = out.split_at_mut(m);
        let (o_b, o_c) = rest.split_at_mut(m);
        let x = n.as_slice();

        for i in 0..m {
            let a = self.weights[i];
            let b = self.spreads[i];
            let s = b.abs();
            let d2 = self.dist2(i, x);
            let rho = self.activation.apply(d2, b);
            let c = self.center(i);
            o_a[i] = rho / psi;
            match self.activation {
                Activation::Gaussian => {
                    o_b[i] = -a * b.signum() * d2 * rho / psi;
                    for j in 0..p {
                        o_c[i * p + j] = 2.0 * a * s * (x[j] as f64 - c[j]) * rho / psi;
                    }
                }
                Activation::ExpAbs => {
                    let r = d2.sqrt();
                    o_b[i] = -a * b.signum() * r * rho / psi;
                    // The norm has no gradient at r = 0; take the zero subgradient.
                    if r > 0.0 {
                        for j in 0..p {
                            o_c[i * p + j] = a * s * (x[j] as f64 - c[j]) / r * rho / psi;
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(VmcError::NumericalFailure(format!(
                "non-finite log-derivative at {:?}",
                x
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(a: f64, b: f64, c: f64, act: Activation) -> RbfNetwork {
        RbfNetwork::new(vec![a], vec![b], vec![vec![c]], act).unwrap()
    }

    fn cfg(n: &[usize]) -> Configuration {
        Configuration::new(n.to_vec())
    }

    #[test]
    fn gaussian_at_center_is_one() {
        let net = single(1.0, 1.0, 0.0, Activation::Gaussian);
        assert_eq!(net.evaluate(&cfg(&[0])).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_two_away() {
        let net = single(1.0, 1.0, 0.0, Activation::Gaussian);
        let v = net.evaluate(&cfg(&[2])).unwrap();
        assert!((v - (-4.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.018316).abs() < 1e-6);
    }

    #[test]
    fn exp_abs_sum_of_two() {
        let net = RbfNetwork::new(
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            vec![vec![0.0], vec![0.0]],
            Activation::ExpAbs,
        )
        .unwrap();
        let v = net.evaluate(&cfg(&[1])).unwrap();
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn log_derivatives_at_center() {
        let net = single(1.0, 1.0, 0.0, Activation::Gaussian);
        let o = net.log_derivatives(&cfg(&[0]), DEFAULT_PSI_FLOOR).unwrap();
        assert_eq!(o, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn log_derivatives_hand_values() {
        let net = single(2.0, 1.0, 0.0, Activation::Gaussian);
        let o = net.log_derivatives(&cfg(&[1]), DEFAULT_PSI_FLOOR).unwrap();
        assert!((o[0] - 0.5).abs() < 1e-14);
        assert!((o[1] + 1.0).abs() < 1e-14);
        assert!((o[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_spread_is_singular() {
        let net = single(1.0, 0.0, 0.0, Activation::Gaussian);
        assert_eq!(
            net.log_derivatives(&cfg(&[1]), DEFAULT_PSI_FLOOR),
            Err(VmcError::DerivativeSingularity { neuron: 0 })
        );
    }

    #[test]
    fn tiny_amplitude_is_a_division_hazard() {
        let net = single(1.0, 50.0, 0.0, Activation::Gaussian);
        // exp(-50 * 400) underflows to zero
        let err = net.log_derivatives(&cfg(&[20]), DEFAULT_PSI_FLOOR).unwrap_err();
        assert!(matches!(err, VmcError::DivisionHazard { .. }));
    }

    #[test]
    fn multiquadric_is_evaluation_only() {
        let net = single(1.0, 3.0, 0.0, Activation::Multiquadric);
        assert!((net.evaluate(&cfg(&[4])).unwrap() - 5.0).abs() < 1e-14);
        let inv = single(1.0, 3.0, 0.0, Activation::InverseMultiquadric);
        assert!((inv.evaluate(&cfg(&[4])).unwrap() - 0.2).abs() < 1e-14);
        assert_eq!(
            net.log_derivatives(&cfg(&[4]), DEFAULT_PSI_FLOOR),
            Err(VmcError::UnsupportedActivation("multiquadric"))
        );
    }

    #[test]
    fn multiquadric_overflow_is_reported() {
        let net = single(f64::MAX, 1.0, 0.0, Activation::Multiquadric);
        assert!(matches!(net.evaluate(&cfg(&[5])), Err(VmcError::NumericalFailure(_))));
    }

    #[test]
    fn random_init_is_seeded() {
        let a = RbfNetwork::random(3, 1, 19.0, 1.0, Activation::Gaussian, 42).unwrap();
        let b = RbfNetwork::random(3, 1, 19.0, 1.0, Activation::Gaussian, 42).unwrap();
        let c = RbfNetwork::random(3, 1, 19.0, 1.0, Activation::Gaussian, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn random_init_keeps_spreads_away_from_zero() {
        for seed in 0..200 {
            let net = RbfNetwork::random(8, 2, 9.0, 1.0, Activation::Gaussian, seed).unwrap();
            assert!(net.spreads().iter().all(|b| b.abs() >= MIN_INIT_SPREAD));
            assert!(net.params().iter().all(|v| v.is_finite()));
            for i in 0..net.hidden() {
                assert!(net.center(i).iter().all(|&c| (0.0..=9.0).contains(&c)));
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = single(1.0, 1.0, 0.0, Activation::Gaussian);
        assert_eq!(
            net.evaluate(&cfg(&[0, 1])),
            Err(VmcError::DimensionMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn params_round_trip() {
        let mut net = RbfNetwork::random(4, 2, 5.0, 1.0, Activation::ExpAbs, 7).unwrap();
        let mut p = net.params();
        assert_eq!(p.len(), 16);
        p[3] = 0.25;
        p[15] = 2.5;
        net.set_params(&p).unwrap();
        assert_eq!(net.weights()[3], 0.25);
        assert_eq!(net.center(3)[1], 2.5);
    }
}
