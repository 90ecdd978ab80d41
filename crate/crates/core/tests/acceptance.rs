//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use shapecov::baselines::{cae_neg_log_likelihood, tyler, tyler_map, TylerOptions};
use shapecov::bench::{
    banded_theta0, run_experiment, toeplitz_theta0, Estimator, ExperimentConfig, ExperimentContext, Scenario,
};
use shapecov::coca::{coca_solve, coca_unconstrained, schur_check, schur_scalar_check, CocaOptions, CocaProblem};
use shapecov::crb::{default_step, fim, ScoreOracle};
use shapecov::hermitian::{quad_form, CVector, HermitianMatrix, NormKind, C64};
use shapecov::sampling::{normalized_moment, sample_cae, sample_cae_trial};
use shapecov::structures::{banded_structure, scale_fix, toeplitz_structure};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn complex_gaussian(p: usize, rng: &mut ChaCha8Rng) -> CVector {
    CVector::from_fn(p, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

fn random_pd(p: usize, rng: &mut ChaCha8Rng, floor: f64) -> HermitianMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) / (p as f64).sqrt()
    });
    let m = &a * a.adjoint() + DMatrix::identity(p, p) * C64::new(floor, 0.0);
    HermitianMatrix::new((&m + m.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

fn random_hermitian(p: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    HermitianMatrix::new((&a + a.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

fn rel_frobenius(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm()
}

/// 1. Unconstrained COCA reproduces Tyler's estimator.
fn unconstrained_matches_tyler() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut details = Vec::new();
    let mut pass = true;
    for p in [2usize, 3, 5] {
        let theta0 = random_pd(p, &mut rng, 0.2).with_trace(p as f64);
        let n = 2 * p + 2;
        let mut good = 0;
        let mut worst = 0.0_f64;
        for trial in 0..20 {
            let set = sample_cae_trial(&theta0, n, 7, trial).unwrap();
            let t = tyler(&set, &TylerOptions::default()).unwrap();
            let rel = match coca_unconstrained(&set, &CocaOptions::default()) {
                Ok(c) if t.existed => {
                    rel_frobenius(&c.theta_hat.with_trace(p as f64), &t.theta_hat.with_trace(p as f64))
                }
                _ => f64::INFINITY,
            };
            worst = worst.max(rel);
            if rel < 1e-4 {
                good += 1;
            }
        }
        pass &= good >= 19;
        details.push(format!("p={p}: {good}/20 (max rel {worst:.1e})"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    outcome(pass, format!("{}; {secs:.1} s", details.join(", ")))
}

/// 2. Mean of p·xxᴴ/(xᴴΘ₀⁻¹x) recovers Θ₀.
fn moment_identity() -> Outcome {
    let theta0 = HermitianMatrix::from_fn(3, |i, h| match h as i64 - i as i64 {
        0 => C64::new([2.0, 0.7, 0.3][i], 0.0),
        1 => C64::new(0.3, 0.2),
        -1 => C64::new(0.3, -0.2),
        _ => C64::new(0.05, 0.0),
    })
    .unwrap();
    let set = sample_cae(&theta0, 100_000, 2024).unwrap();
    let err = (&normalized_moment(&set, &theta0).unwrap() - &theta0).frobenius_norm();
    outcome(err < 0.05, format!("error {err:.4} (limit 0.05)"))
}

/// 3. LMI and scalar forms of the sample constraint agree.
fn schur_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let p = 5;
    let mut mismatches = 0;
    let mut compared = 0;
    for case in 0..10_000 {
        let theta = random_pd(p, &mut rng, 0.5);
        let x = complex_gaussian(p, &mut rng);
        let bound = p as f64 / quad_form(&theta.inverse_pd().unwrap(), &x).unwrap();
        let delta = if case % 10 == 0 {
            // Near the boundary, on either side.
            let mag = 10f64.powf(rng.gen_range(-6.0..-3.0));
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        } else {
            rng.gen_range(-1.0..1.0)
        };
        let d = bound * (1.0 + delta);
        if (d - bound).abs() <= 1e-10 * bound {
            continue;
        }
        compared += 1;
        if schur_check(&theta, &x, d).unwrap() != schur_scalar_check(&theta, &x, d).unwrap() {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches in {compared} cases"))
}

/// 4. Tyler is a fixed point of its map and minimizes the CAE likelihood.
fn tyler_fixed_point_and_mle() -> Outcome {
    let p = 3;
    let mut worst_residual = 0.0_f64;
    let mut violations = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let theta0 = random_pd(p, &mut rng, 0.2).with_trace(p as f64);
        let set = sample_cae(&theta0, 30, 500 + seed).unwrap();
        let t = tyler(&set, &TylerOptions::default()).unwrap();
        let fixed = tyler_map(&set, &t.theta_hat).unwrap().unwrap();
        worst_residual = worst_residual.max((&t.theta_hat - &fixed).frobenius_norm());
        let best = cae_neg_log_likelihood(&t.theta_hat, &set).unwrap();
        let mut tried = 0;
        while tried < 50 {
            let scale = 10f64.powf(rng.gen_range(-3.0..-0.5));
            let mut candidate = t.theta_hat.clone();
            candidate.axpy(scale, &random_hermitian(p, &mut rng));
            if !candidate.is_positive_definite() {
                continue;
            }
            tried += 1;
            let candidate = candidate.with_trace(p as f64);
            if cae_neg_log_likelihood(&candidate, &set).unwrap() < best - 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(
        worst_residual < 1e-8 && violations == 0,
        format!("max ‖Θ − f(Θ)‖ {worst_residual:.1e}; {violations} of 500 perturbations beat Tyler"),
    )
}

/// 5. Closed-form FIM against the covariance of finite-difference scores.
fn fim_monte_carlo() -> Outcome {
    let p = 3;
    let theta0 = toeplitz_theta0(p).unwrap();
    let structure = scale_fix(&toeplitz_structure(p).unwrap(), p as f64).unwrap();
    let report = fim(&structure, &theta0).unwrap();
    let oracle = ScoreOracle::new(&structure, &theta0, default_step(&theta0).unwrap()).unwrap();
    let n = 1_000_000;
    let set = sample_cae(&theta0, n, 505).unwrap();
    let k = structure.dim();
    let mut sum = DMatrix::<f64>::zeros(k, k);
    let mut sq = DMatrix::<f64>::zeros(k, k);
    for x in set.samples() {
        let g: DVector<f64> = oracle.score(x).unwrap();
        let outer = &g * g.transpose();
        sq += outer.component_mul(&outer);
        sum += outer;
    }
    let mut worst = 0.0_f64;
    for h in 0..k {
        for m in 0..k {
            let mean = sum[(h, m)] / n as f64;
            let var = sq[(h, m)] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            worst = worst.max((mean - report.fim[(h, m)]).abs() / se);
        }
    }
    outcome(
        worst <= 3.0,
        format!("max deviation {worst:.2} SE over {k}×{k} entries"),
    )
}

fn toeplitz_desk_config(estimators: Vec<Estimator>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Scenario::Toeplitz, 6);
    cfg.n_grid = vec![12, 24, 48, 96, 192];
    cfg.trials = 200;
    cfg.seed = 6;
    cfg.estimators = estimators;
    cfg
}

/// 6 and 7 share one experiment.
fn consistency_and_ordering() -> (Outcome, Outcome) {
    let start = Instant::now();
    let cfg = toeplitz_desk_config(vec![Estimator::Tyler, Estimator::Proj, Estimator::Coca]);
    let table = match run_experiment(&cfg) {
        Ok(t) => t,
        Err(e) => {
            let o = outcome(false, format!("experiment failed: {e}"));
            return (o, outcome(false, "experiment failed"));
        }
    };
    let secs = start.elapsed().as_secs_f64();
    let coca: Vec<_> = cfg.n_grid.iter().map(|&n| table.row("coca", n).unwrap()).collect();
    let mut monotone = true;
    for w in coca.windows(2) {
        let slack = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        monotone &= w[1].mse <= w[0].mse + slack;
    }
    let ratio = coca.last().unwrap().mse / coca[0].mse;
    let curve: Vec<String> = coca.iter().map(|r| format!("{:.4}", r.mse)).collect();
    let six = outcome(
        monotone && ratio < 0.25,
        format!(
            "COCA MSE [{}], final/initial {ratio:.3}, monotone {monotone}; {secs:.0} s",
            curve.join(", ")
        ),
    );

    let mut ordered = true;
    let mut parts = Vec::new();
    for &n in &cfg.n_grid[..2] {
        let (c, pr, t) = (
            table.row("coca", n).unwrap(),
            table.row("proj", n).unwrap(),
            table.row("tyler", n).unwrap(),
        );
        let cp = c.mse <= pr.mse + (c.stderr.powi(2) + pr.stderr.powi(2)).sqrt();
        let pt = pr.mse <= t.mse + (pr.stderr.powi(2) + t.stderr.powi(2)).sqrt();
        ordered &= cp && pt;
        parts.push(format!(
            "n={n}: coca {:.4}±{:.4}, proj {:.4}±{:.4}, tyler {:.4}±{:.4} ({} trials)",
            c.mse, c.stderr, pr.mse, pr.stderr, t.mse, t.stderr, t.trials
        ));
    }
    (six, outcome(ordered, parts.join("; ")))
}

/// 8. The three norms give close estimates on the banded scenario.
fn norm_robustness() -> Outcome {
    let p = 6;
    let theta0 = banded_theta0(p, 2).unwrap();
    let structure = scale_fix(&banded_structure(p, 2).unwrap(), p as f64).unwrap();
    let set = sample_cae(&theta0, 4 * p, 808).unwrap();
    let mut estimates = Vec::new();
    for norm in NormKind::ALL {
        let problem = CocaProblem::new(&set, &structure, norm).unwrap();
        match coca_solve(&problem, &CocaOptions::default()) {
            Ok(r) => estimates.push(r.theta_hat),
            Err(e) => return outcome(false, format!("{norm:?} failed: {e}")),
        }
    }
    let mut worst = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                worst = worst.max(rel_frobenius(&estimates[i], &estimates[j]));
            }
        }
    }
    outcome(worst < 0.10, format!("max pairwise relative difference {worst:.4}"))
}

/// 9. Projection never moves the estimate away from a member Θ₀.
fn projection_contraction() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    for scenario in [Scenario::Toeplitz, Scenario::Banded, Scenario::Doa] {
        let mut cfg = toeplitz_desk_config(vec![Estimator::Proj]);
        cfg.scenario = scenario;
        let ctx = ExperimentContext::new(&cfg).unwrap();
        for &n in &cfg.n_grid {
            for t in 0..cfg.trials {
                let o = ctx.run_trial(n, t).unwrap();
                let after = o.errors[0].unwrap().sqrt();
                let before = o.projection_input_error.unwrap().sqrt();
                checked += 1;
                margin = margin.min(before - after);
                if after > before + 1e-9 {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {checked} trials (min gain {margin:.2e})"),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_shapecov"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

/// 10. Repeated CLI runs produce identical bytes.
fn cli_determinism() -> Outcome {
    let config = "scenario = toeplitz\np = 4\nn_grid = 8, 16\ntrials = 6\nseed = 10\nestimators = sc,tyler,proj,coca\n";
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("exp.cfg"), config).unwrap();
        let steps: [&[&str]; 4] = [
            &["simulate", "--config", "exp.cfg", "--out", "run"],
            &["sample", "--p", "4", "--n", "20", "--seed", "3", "--out", "samples.csv"],
            &[
                "estimate",
                "--method",
                "coca",
                "--input",
                "samples.csv",
                "--structure",
                "toeplitz",
                "--out",
                "coca.csv",
            ],
            &[
                "crb",
                "--structure",
                "toeplitz",
                "--p",
                "4",
                "--n-grid",
                "8,16",
                "--out",
                "crb.csv",
            ],
        ];
        for args in steps {
            if let Err(e) = run_cli(args, dir.path()) {
                return outcome(false, format!("{args:?} failed: {e}"));
            }
        }
        let files: Vec<Vec<u8>> = ["run_mse.csv", "run_plot.gp", "samples.csv", "coca.csv", "crb.csv"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    let identical = outputs[0] == outputs[1];
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    outcome(
        identical,
        format!("5 output files, {bytes} bytes, identical {identical}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |id: usize, name: &'static str, o: Outcome| {
        println!(
            "criterion {id:>2} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    record(1, "unconstrained COCA matches Tyler", unconstrained_matches_tyler());
    record(2, "normalized moment identity", moment_identity());
    record(3, "Schur complement equivalence", schur_equivalence());
    record(
        4,
        "Tyler fixed point and likelihood minimum",
        tyler_fixed_point_and_mle(),
    );
    record(5, "FIM matches score covariance", fim_monte_carlo());
    let (six, seven) = consistency_and_ordering();
    record(6, "COCA consistency on Toeplitz p=6", six);
    record(7, "estimator ordering at small n", seven);
    record(8, "norm robustness on banded p=6", norm_robustness());
    record(9, "projection contraction", projection_contraction());
    record(10, "CLI determinism", cli_determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
