//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbf_vmc::hamiltonian::DEFAULT_DENSE_CAP;
use rbf_vmc::harness::{reproduce, Report, RowStatus};
use rbf_vmc::oracle::dense_lowest_eig;
use rbf_vmc::sampler::DEFAULT_JUMP_PROB;
use rbf_vmc::{Activation, Model, Preset, RbfNetwork, SrConfig};

const SEED: u64 = 1;
const TABLE2_BUDGET: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn from_report(report: &Report, rows: impl Fn(&str) -> bool) -> Outcome {
    let failed: Vec<String> = report
        .rows
        .iter()
        .filter(|r| rows(&r.label) && r.status != RowStatus::Pass)
        .map(|r| {
            let got = r.reproduced.map_or("-".to_string(), |x| format!("{x:.6}"));
            format!("{} got {got} ({})", r.label, r.tolerance)
        })
        .collect();
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} rows", report.rows.iter().filter(|r| rows(&r.label)).count())
        } else {
            failed.join("; ")
        },
    }
}

fn check(pass: bool, what: &str, failures: &mut Vec<String>) {
    if !pass {
        failures.push(what.to_string());
    }
}

fn property_suite(reports: &[&Report]) -> Outcome {
    let mut failures = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let fd_ok = (0..100).all(|i| {
        let act = if i % 2 == 0 {
            Activation::Gaussian
        } else {
            Activation::ExpAbs
        };
        let (net, n) = common::random_case(&mut rng, act);
        common::check_log_derivatives(&net, &n).is_ok()
    });
    check(fd_ok, "finite differences", &mut failures);

    let model = Model::Ho1d { field: 0.4, n_max: 4 };
    let net = RbfNetwork::random(2, 1, 3.0, 1.0, Activation::Gaussian, 11).unwrap();
    let tv = common::stationary_tv(&net, &model, 1_000_000, DEFAULT_JUMP_PROB, 3);
    check(tv < 0.01, &format!("stationary tv {tv:.4}"), &mut failures);

    for model in [
        Model::Ho1d { field: 0.0, n_max: 3 },
        Model::Ho2d {
            field_x: 0.0,
            field_y: 0.0,
            n_max: 3,
        },
    ] {
        for jump in [0.0, DEFAULT_JUMP_PROB] {
            let k = common::analytic_kernel(&model, jump);
            let measured = common::empirical_kernel(&model, jump, 200_000, 5);
            let ok = (&k - k.transpose()).amax() < 1e-15 && (&measured - &k).amax() < 0.005;
            check(ok, &format!("kernel {model} jump {jump}"), &mut failures);
        }
    }

    for n_max in 2..=8 {
        for model in common::all_models(n_max) {
            if let Err(msg) = common::check_model_rows(&model) {
                failures.push(msg);
            }
        }
    }

    let sr = SrConfig::default();
    let schedule_ok = (0..2000).all(|k| sr.regularization(k) == (100.0 * 0.9f64.powi(k as i32)).max(1e-4));
    check(schedule_ok, "schedule", &mut failures);

    let worst_sr = (0..100u64)
        .map(|seed| {
            let (s, f) = common::random_spd(1 + seed as usize % 12, seed);
            common::sr_relative_residual(&s, &f)
        })
        .fold(0.0, f64::max);
    check(worst_sr < 1e-8, &format!("sr residual {worst_sr:e}"), &mut failures);

    let mut worst_eig: f64 = 0.0;
    let mut oracle_models = common::all_models(8);
    oracle_models.push(Model::Ho1d { field: 2.0, n_max: 60 });
    oracle_models.push(Model::ParticleBox { slope: 8.0, n_max: 200 });
    for model in &oracle_models {
        let h = model.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        let o = dense_lowest_eig(model, DEFAULT_DENSE_CAP).unwrap();
        let v = nalgebra::DVector::from_vec(o.eigenvector.unwrap());
        worst_eig = worst_eig.max((&h * &v - &v * o.energy).norm());
    }
    check(
        worst_eig < 1e-9,
        &format!("eigen residual {worst_eig:e}"),
        &mut failures,
    );

    let below: Vec<String> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(move |row| (r, row)))
        .filter(|(_, row)| row.variational_bound == Some(false))
        .map(|(r, row)| format!("{} {}", r.preset, row.label))
        .collect();
    let bound_checked = reports
        .iter()
        .flat_map(|r| &r.rows)
        .filter(|row| row.variational_bound.is_some())
        .count();
    check(
        below.is_empty(),
        &format!("below bound: {}", below.join(", ")),
        &mut failures,
    );

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "tv {tv:.4}, sr residual {worst_sr:.1e}, eigen residual {worst_eig:.1e}, {bound_checked} bounded runs"
            )
        } else {
            failures.join("; ")
        },
    }
}

fn oracle_consistency() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_ho: f64 = 0.0;
    for i in 0..=40 {
        let field = -2.0 + 0.1 * i as f64;
        let e = dense_lowest_eig(&Model::Ho1d { field, n_max: 60 }, DEFAULT_DENSE_CAP)
            .unwrap()
            .energy;
        worst_ho = worst_ho.max((e - 0.5 * (1.0 - field * field)).abs());
    }
    check(worst_ho < 1e-6, &format!("oscillator {worst_ho:e}"), &mut failures);

    let mut worst_box: f64 = 0.0;
    for (slope, exact) in [
        (0.0, 4.93481),
        (2.0, 5.92603),
        (4.0, 6.89974),
        (8.0, 8.79508),
        (-8.0, 0.795078),
    ] {
        let e = dense_lowest_eig(&Model::ParticleBox { slope, n_max: 200 }, DEFAULT_DENSE_CAP)
            .unwrap()
            .energy;
        worst_box = worst_box.max(((e - exact) / exact).abs());
    }
    check(worst_box <= 1e-5, &format!("box relative {worst_box:e}"), &mut failures);

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("oscillator {worst_ho:.1e}, box relative {worst_box:.1e}")
        } else {
            failures.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let timed = |preset| {
        let start = Instant::now();
        let report = reproduce(preset, SEED, None).unwrap();
        (report, start.elapsed())
    };
    let (table2, t2) = timed(Preset::Table2);
    let (table3, _) = timed(Preset::Table3);
    let (table1, _) = timed(Preset::Table1);
    let (efield, _) = timed(Preset::Efield);
    let (overlaps, _) = timed(Preset::Overlaps);

    let mut c1 = from_report(&table2, |_| true);
    c1.pass &= t2 < TABLE2_BUDGET;
    c1.detail = format!("{}, {:.1} s", c1.detail, t2.as_secs_f64());

    let criteria = [
        ("table 2 box energies", c1),
        (
            "table 3 matrix eigenvalues and d=10 vector",
            from_report(&table3, |_| true),
        ),
        ("table 1 trend and n_max=40 limit", from_report(&table1, |_| true)),
        ("field series", from_report(&efield, |_| true)),
        ("1d overlaps at E=1", from_report(&overlaps, |l| l.starts_with("psi("))),
        (
            "property suite",
            property_suite(&[&table1, &table2, &table3, &efield, &overlaps]),
        ),
        ("oracle self-consistency", oracle_consistency()),
    ];

    let mut all = true;
    for (i, (name, outcome)) in criteria.iter().enumerate() {
        all &= outcome.pass;
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name}: {}", i + 1, outcome.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
