#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbf_vmc::hamiltonian::DEFAULT_DENSE_CAP;
use rbf_vmc::optimizer::solve_update;
use rbf_vmc::sampler::metropolis_step;
use rbf_vmc::wavefunction::DEFAULT_PSI_FLOOR;
use rbf_vmc::{Activation, Configuration, HermitianMatrix, Model, RbfNetwork};

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-5;
pub const FD_ABS_TOL: f64 = 1e-8;

/// Central difference of `log|psi|` in every parameter against the analytic
/// log-derivatives.
pub fn check_log_derivatives(net: &RbfNetwork, n: &Configuration) -> Result<(), String> {
    let analytic = net.log_derivatives(n, DEFAULT_PSI_FLOOR).map_err(|e| e.to_string())?;
    let base = net.params();
    let mut probe = net.clone();
    for (k, &o) in analytic.iter().enumerate() {
        let mut shifted = |h: f64| {
            let mut p = base.clone();
            p[k] += h;
            probe.set_params(&p).unwrap();
            probe.evaluate(n).unwrap().abs().ln()
        };
        let fd = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
        let diff = (fd - o).abs();
        if diff > FD_ABS_TOL && diff > FD_REL_TOL * o.abs() {
            return Err(format!("component {k}: analytic {o:e}, finite difference {fd:e}"));
        }
    }
    Ok(())
}

/// A random network and configuration for the derivative check. Weights keep one
/// sign so that `psi` is not a near-cancellation.
pub fn random_case(rng: &mut ChaCha8Rng, activation: Activation) -> (RbfNetwork, Configuration) {
    let m = rng.random_range(1..=5);
    let p = rng.random_range(1..=2);
    let extent = 8;
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let weights = (0..m).map(|_| sign * rng.random_range(0.1..2.0)).collect();
    let spreads = (0..m)
        .map(|_| {
            let b: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                b
            } else {
                -b
            }
        })
        .collect();
    let centers = (0..m)
        .map(|_| (0..p).map(|_| rng.random_range(0.0..(extent - 1) as f64)).collect())
        .collect();
    let net = RbfNetwork::new(weights, spreads, centers, activation).unwrap();
    let n = Configuration::new((0..p).map(|_| rng.random_range(0..extent)).collect());
    (net, n)
}

/// `(psi' H psi / psi' psi, psi' psi)` over the whole truncated basis.
pub fn exact_energy(net: &RbfNetwork, model: &Model) -> f64 {
    let h = model.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
    let psi = amplitudes(net, model);
    psi.dot(&(&h * &psi)) / psi.dot(&psi)
}

pub fn amplitudes(net: &RbfNetwork, model: &Model) -> DVector<f64> {
    DVector::from_iterator(
        model.basis_size(),
        (0..model.basis_size()).map(|i| net.evaluate(&model.config_at(i)).unwrap()),
    )
}

/// `|psi|^2` normalized over the basis.
pub fn exact_distribution(net: &RbfNetwork, model: &Model) -> Vec<f64> {
    let psi = amplitudes(net, model);
    let total = psi.norm_squared();
    psi.iter().map(|x| x * x / total).collect()
}

/// Total-variation distance of a long Metropolis chain's histogram from `|psi|^2`.
pub fn stationary_tv(net: &RbfNetwork, model: &Model, steps: usize, jump_prob: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; model.basis_size()];
    let mut n = model.config_at(0);
    for _ in 0..1000 {
        n = metropolis_step(net, model, &n, DEFAULT_PSI_FLOOR, jump_prob, &mut rng)
            .unwrap()
            .0;
    }
    for _ in 0..steps {
        n = metropolis_step(net, model, &n, DEFAULT_PSI_FLOOR, jump_prob, &mut rng)
            .unwrap()
            .0;
        counts[model.index_of(&n)] += 1;
    }
    let exact = exact_distribution(net, model);
    0.5 * counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| (c as f64 / steps as f64 - p).abs())
        .sum::<f64>()
}

/// Proposal probabilities of the +-1 kernel mixed with uniform jumps, from the
/// kernel's definition: pick an axis, pick a direction, stay put at an edge.
pub fn analytic_kernel(model: &Model, jump_prob: f64) -> DMatrix<f64> {
    let size = model.basis_size();
    let extent = model.extent();
    let dim = model.input_dim();
    let mut k = DMatrix::from_element(size, size, jump_prob / size as f64);
    let step = (1.0 - jump_prob) / (2 * dim) as f64;
    for i in 0..size {
        let n = model.config_at(i);
        for axis in 0..dim {
            for up in [false, true] {
                let mut m = n.clone().into_inner();
                if up && m[axis] + 1 < extent {
                    m[axis] += 1;
                } else if !up && m[axis] > 0 {
                    m[axis] -= 1;
                }
                k[(i, model.index_of(&Configuration::new(m)))] += step;
            }
        }
    }
    k
}

/// Proposal frequencies measured by drawing `draws` proposals from every state.
pub fn empirical_kernel(model: &Model, jump_prob: f64, draws: usize, seed: u64) -> DMatrix<f64> {
    let size = model.basis_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = DMatrix::zeros(size, size);
    for i in 0..size {
        let n = model.config_at(i);
        for _ in 0..draws {
            let m = rbf_vmc::sampler::propose_mixed(&n, model.extent(), jump_prob, &mut rng);
            k[(i, model.index_of(&m))] += 1.0 / draws as f64;
        }
    }
    k
}

/// Every model family at truncation `n_max`.
pub fn all_models(n_max: usize) -> Vec<Model> {
    vec![
        Model::Ho1d { field: 1.3, n_max },
        Model::Ho2d {
            field_x: -0.7,
            field_y: 2.1,
            n_max,
        },
        Model::ParticleBox { slope: -3.5, n_max },
        Model::Matrix(HermitianMatrix::generator(n_max).unwrap()),
    ]
}

/// Dense matrix is symmetric and every sparse row matches it.
pub fn check_model_rows(model: &Model) -> Result<(), String> {
    let h = model.dense_matrix(DEFAULT_DENSE_CAP).map_err(|e| e.to_string())?;
    let asym = (&h - h.transpose()).amax();
    if asym > 1e-12 {
        return Err(format!("{model}: asymmetry {asym:e}"));
    }
    for i in 0..model.basis_size() {
        let row = model.connected_row(&model.config_at(i)).map_err(|e| e.to_string())?;
        let mut dense_row = DVector::zeros(model.basis_size());
        for (m, v) in &row.entries {
            dense_row[model.index_of(m)] += v;
        }
        let diff = (dense_row - h.row(i).transpose()).amax();
        if diff > 1e-12 {
            return Err(format!("{model}: row {i} differs by {diff:e}"));
        }
    }
    Ok(())
}

/// Random symmetric positive-definite matrix `A A' + eps I` and vector.
pub fn random_spd(size: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(size, size, |_, _| rng.random_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(size, size) * 1e-3;
    let f = DVector::from_fn(size, |_, _| rng.random_range(-10.0..10.0));
    (s, f)
}

/// `||S x - F||` relative to `max(1, ||F||)` for the solver's `x`.
pub fn sr_relative_residual(s: &DMatrix<f64>, f: &DVector<f64>) -> f64 {
    let out = solve_update(s, f, 1.0, 1e-12).unwrap();
    (s * &out.delta - f).norm() / f.norm().max(1.0)
}

/// Two narrow neurons on the two levels of a 2x2 matrix, weighted by its lowest
/// eigenvector: an exact eigenstate.
pub fn eigenstate_network() -> (RbfNetwork, Model, f64) {
    let model = Model::Matrix(HermitianMatrix::generator(2).unwrap());
    let oracle = rbf_vmc::oracle::dense_lowest_eig(&model, DEFAULT_DENSE_CAP).unwrap();
    let v = oracle.eigenvector.unwrap();
    let net = RbfNetwork::new(
        v.clone(),
        vec![200.0, 200.0],
        vec![vec![0.0], vec![1.0]],
        Activation::Gaussian,
    )
    .unwrap();
    (net, model, oracle.energy)
}
