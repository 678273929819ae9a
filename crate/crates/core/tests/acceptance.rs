//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Run with `cargo test -p kernel-anchor --test acceptance`.

use std::time::Instant;

use kernel_anchor::estimators::{Kar2Config, KarConfig, LinearMethod, SplitPlan};
use kernel_anchor::evaluation::{
    gamma_sweep, median, run_benchmark, shift_eval, sweep_label, GridSpec, Method, Orientation, ShiftOptions,
    SweepOptions, TrialConfig,
};
use kernel_anchor::kernel::{gram, gram_self};
use kernel_anchor::sem_lab::{
    bias_norms, bias_operator, generate, generate_sem, population_h_gamma, random_spec, true_do, DesignTag,
    GeneratorDesign, IdentifiabilityCase, SemDims, SemSpec,
};
use kernel_anchor::{fit_kar, fit_kar2, fit_kpa, fit_kreg, fit_linear, random_split, CausalModel, Dataset, KernelPolicies};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

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

fn benchmark_config(design: DesignTag) -> TrialConfig {
    TrialConfig {
        design,
        base_seed: 2024,
        ..TrialConfig::main_benchmark()
    }
}

/// Kernel ridge regression on the regression-stage rows, solved by LU.
fn ridge_oracle(x: &DMatrix<f64>, y: &DVector<f64>, model_kernel: &kernel_anchor::KernelSpec<f64>, xi: f64, grid: &[f64]) -> Vec<f64> {
    let m = x.nrows();
    let ybar = y.mean();
    let k = gram_self(model_kernel, x).unwrap() + DMatrix::identity(m, m) * (m as f64 * xi);
    let dual = k.lu().solve(&y.add_scalar(-ybar)).unwrap();
    let q = DMatrix::from_column_slice(grid.len(), 1, grid);
    let kq = gram(model_kernel, &q, x).unwrap();
    (kq * dual).add_scalar(ybar).as_slice().to_vec()
}

fn criterion_1() -> Outcome {
    let cfg = benchmark_config(DesignTag::Main);
    let data = generate(&GeneratorDesign::main(), cfg.n, 1).unwrap();
    let grid = GridSpec::default().values();
    let q = DMatrix::from_column_slice(grid.len(), 1, &grid);
    let params = TrialConfig { gamma: 1.0, ..cfg }.fit_params();
    let seed = 99;
    let start = Instant::now();

    let kar_cfg: KarConfig<f64> = params.kar_config();
    let kar = fit_kar(&data, &kar_cfg, seed).unwrap();
    let kar_pred = kar.predict_many(&q).unwrap();
    let reg = &random_split(cfg.n, &cfg.splits, seed).unwrap()[2];
    let reg_data = data.select(reg);
    let oracle = ridge_oracle(reg_data.x(), reg_data.y(), kar.kernel_x(), kar_cfg.xi, &grid);
    let gap_kar = kar_pred.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let kar2_cfg: Kar2Config<f64> = params.kar2_config();
    let kar2 = fit_kar2(&data, &kar2_cfg, seed).unwrap();
    let kar2_pred = kar2.predict_many(&q).unwrap();
    let reg2 = &random_split(cfg.n, &[500, 200], seed).unwrap()[1];
    let reg2_data = data.select(reg2);
    let oracle2 = ridge_oracle(reg2_data.x(), reg2_data.y(), kar2.kernel_x(), kar2_cfg.xi, &grid);
    let gap_kar2 = kar2_pred.iter().zip(&oracle2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();

    outcome(
        gap_kar < 1e-8 && gap_kar2 < 1e-8 && secs < 1.0,
        format!("max |KAR − KRR| = {gap_kar:.2e}, max |KAR.2 − KRR| = {gap_kar2:.2e} (tol 1e-8), {secs:.2} s (< 1 s)"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = benchmark_config(DesignTag::Main);
    let grid = GridSpec::default().values();
    let q = DMatrix::from_column_slice(grid.len(), 1, &grid);
    let (mut bitwise, mut gap) = (true, 0.0f64);
    for seed in 0..5 {
        let data = generate(&GeneratorDesign::main(), cfg.n, 100 + seed).unwrap();
        let kc = cfg.fit_params().kar_config();
        let kpa = fit_kpa(&data, &kc, seed).unwrap().predict_many(&q).unwrap();
        let kar0 = fit_kar(&data, &KarConfig { gamma: 0.0, ..kc }, seed).unwrap().predict_many(&q).unwrap();
        bitwise &= kpa.iter().zip(kar0.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        let kreg = fit_kreg(&data, &kc, seed).unwrap().predict_many(&q).unwrap();
        let kar1 = fit_kar(&data, &KarConfig { gamma: 1.0, ..kc }, seed).unwrap().predict_many(&q).unwrap();
        gap = gap.max((kreg - kar1).amax());
    }
    outcome(
        bitwise && gap < 1e-10,
        format!("KPA ≡ KAR(γ=0) bitwise: {bitwise}; max |KReg − KAR(γ=1)| = {gap:.2e} (tol 1e-10)"),
    )
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = SemDims { z: 2, c: 1, x: 1, y: 1 };
    let mut spec: SemSpec = random_spec(&mut rng, dims);
    spec.sigma_y = DMatrix::zeros(1, 1);
    let sample = generate_sem(&spec, 2000, 4).unwrap();
    let d = &sample.data;
    let yc = d.y().add_scalar(-d.y().mean());
    let data = Dataset::new(centered(d.x()), yc, centered(d.z())).unwrap();

    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for gamma in [0.0, 1.0, 2.0, 10.0] {
        let cfg = KarConfig {
            split: SplitPlan::Shared,
            gamma,
            alpha_x: 1e-10,
            alpha_y: 1e-10,
            xi: 1e-10,
            kernels: KernelPolicies::linear(),
        };
        let model = fit_kar(&data, &cfg, 0).unwrap();
        let slope = model.predict(&[1.0]) - model.predict(&[0.0]);
        let lin = fit_linear(&data, LinearMethod::Anchor { gamma }).unwrap();
        let gap = (slope - lin.coefficients()[0]).abs();
        worst = worst.max(gap);
        lines.push(format!("γ={gamma}: {gap:.1e}"));
    }
    outcome(worst < 1e-3, format!("|β_KAR − β_AR| {} (tol 1e-3)", lines.join(", ")))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = true;
    let mut worst = Vec::new();
    for case in [
        IdentifiabilityCase::NoConfounder,
        IdentifiabilityCase::ValidInstrument,
        IdentifiabilityCase::Unconfounded,
        IdentifiabilityCase::Balanced,
    ] {
        let mut max_norm = 0.0f64;
        for _ in 0..20 {
            let (spec, gammas) = case.construct(&mut rng, SemDims::default()).unwrap();
            for norm in bias_norms(&spec, &gammas).unwrap() {
                max_norm = max_norm.max(norm);
            }
        }
        ok &= max_norm < case.tolerance();
        worst.push(format!("{case} {max_norm:.1e}<{:.0e}", case.tolerance()));
    }
    let mut equiv = 0.0f64;
    for _ in 0..100 {
        let dims = SemDims {
            z: rng.random_range(1..5),
            c: rng.random_range(1..4),
            x: 1,
            y: rng.random_range(1..3),
        };
        let dims = SemDims { x: rng.random_range(1..=dims.z), ..dims };
        let spec = random_spec(&mut rng, dims);
        let gamma = rng.random_range(0.0..20.0);
        let via_h = population_h_gamma(&spec, gamma).unwrap() - &spec.b_yx;
        equiv = equiv.max((via_h - bias_operator(&spec, gamma).unwrap()).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= equiv < 1e-10 && secs < 5.0;
    outcome(
        ok,
        format!("{}; bias ≡ H−B_YX gap {equiv:.1e} (tol 1e-10); {secs:.2} s (< 5 s)", worst.join(", ")),
    )
}

/// Median log₁₀ MSE per method and whether both KAR variants beat all others.
fn ordering(report: &kernel_anchor::evaluation::TrialReport, kar: &[String], others: &[String]) -> (bool, String) {
    let med = |m: &str| median(&report.values(m, "mse").iter().map(|v| v.log10()).collect::<Vec<_>>());
    let best_other = others.iter().map(|m| (m, med(m))).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in kar {
        let v = med(k);
        ok &= v < best_other.1;
        parts.push(format!("{k} {v:.3}"));
    }
    let all: Vec<String> = others.iter().map(|m| format!("{m} {:.3}", med(m))).collect();
    (
        ok,
        format!("median log10 MSE: {} vs {}; best other {}", parts.join(", "), all.join(", "), best_other.0),
    )
}

fn benchmark_ordering(design: DesignTag) -> Outcome {
    let cfg = benchmark_config(design);
    let start = Instant::now();
    let report = run_benchmark(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    if let Err(e) = report.verdict() {
        return outcome(false, e.to_string());
    }
    let kar: Vec<String> = vec!["KAR".into(), "KAR.2".into()];
    let others: Vec<String> = ["KIV", "KPA", "KReg", "AR", "IV", "PA", "OLS"].iter().map(|s| s.to_string()).collect();
    let (ok, detail) = ordering(&report, &kar, &others);
    outcome(ok && secs < 300.0, format!("{detail}; {secs:.1} s (< 300 s)"))
}

fn criterion_6() -> Outcome {
    let cfg = TrialConfig {
        base_seed: 2024,
        ..TrialConfig::kiv_sweep()
    };
    let report = gamma_sweep(&cfg, &SweepOptions::with_selection(vec![2.0])).unwrap();
    if let Err(e) = report.verdict() {
        return outcome(false, e.to_string());
    }
    let med = |m: &str| median(&report.values(m, "mse"));
    let kar = med(&sweep_label(Method::Kar, 2.0));
    let kar2 = med(&sweep_label(Method::Kar2, 2.0));
    let kiv = med("KIV");
    outcome(
        kar < kiv && kar2 < kiv,
        format!(
            "median MSE KAR(γ=2) {kar:.4e}, KAR.2(γ=2) {kar2:.4e}, KIV {kiv:.4e}; c_α {}",
            report.config["selected_alpha_const"]
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = benchmark_config(DesignTag::Main);
    let report = shift_eval(&cfg, &ShiftOptions::default()).unwrap();
    if let Err(e) = report.verdict() {
        return outcome(false, e.to_string());
    }
    let mut ok = true;
    let mut parts = Vec::new();
    let mut gaps = Vec::new();
    for m in ["KAR", "AR"] {
        let below = report.median_of(m, Orientation::TrainBelow.metric()).unwrap();
        let above = report.median_of(m, Orientation::TrainAbove.metric()).unwrap();
        gaps.push((below - above).abs());
    }
    for o in [Orientation::TrainBelow, Orientation::TrainAbove] {
        let kar = report.median_of("KAR", o.metric()).unwrap();
        let worse: Vec<&str> = Method::ALL
            .iter()
            .map(|m| m.name())
            .filter(|&m| m != "KAR" && report.median_of(m, o.metric()).unwrap() < kar)
            .collect();
        ok &= worse.is_empty();
        parts.push(format!("{}: KAR {kar:.4e}, beaten by {:?}", o.metric(), worse));
    }
    ok &= gaps[0] < gaps[1];
    outcome(
        ok,
        format!("{}; orientation gap KAR {:.4e} vs AR {:.4e}", parts.join("; "), gaps[0], gaps[1]),
    )
}

fn criterion_8() -> Outcome {
    let small = TrialConfig {
        methods: vec![Method::Kar],
        ..benchmark_config(DesignTag::Main)
    };
    let large = TrialConfig {
        n: 1400,
        splits: [500, 500, 400],
        ..small.clone()
    };
    let a = median(&run_benchmark(&small).unwrap().values("KAR", "mse"));
    let b = median(&run_benchmark(&large).unwrap().values("KAR", "mse"));
    outcome(b <= a, format!("median MSE N=1400 {b:.4e} vs N=700 {a:.4e}"))
}

fn criterion_10() -> Outcome {
    // independent sampler: (C, V, W) ~ N(0, Σ) via our own Cholesky factor
    let design = GeneratorDesign::variant();
    let sigma = Matrix3::new(1.0, 0.3, 0.2, 0.3, 1.0, 0.0, 0.2, 0.0, 1.0);
    let l = sigma.cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 1_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let e = nalgebra::Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let cvw = l * e;
        let w = cvw[2];
        let phi = 0.5 * libm::erfc(-w.abs() / std::f64::consts::SQRT_2);
        let noise = 0.75 * cvw[0] - 0.25 * (phi - 0.5);
        sum += noise;
        sum_sq += noise * noise;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    let mut ok = true;
    let mut parts = Vec::new();
    for x in [0.1, 0.5, 0.9] {
        let g = (16.0f64 * x - 8.0).abs().ln_1p() * if x == 0.5 { 0.0 } else { (x - 0.5f64).signum() };
        let mc = g + mean;
        let truth = true_do(&design, x);
        let z = (truth - mc).abs() / se;
        ok &= z < 3.0;
        parts.push(format!("x={x}: {truth:.5} vs MC {mc:.5} ({z:.2} SE)"));
    }
    outcome(ok, parts.join(", "))
}

fn main() {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "KAR/KAR.2 at γ=1 equal stage-3 kernel ridge", criterion_1),
        (2, "KPA ≡ KAR(γ=0), KReg ≡ KAR(γ=1)", criterion_2),
        (3, "linear-kernel reduction to anchor regression", criterion_3),
        (4, "identifiability cases", criterion_4),
        (5, "benchmark ordering, main design", || benchmark_ordering(DesignTag::Main)),
        (6, "γ-sweep: KAR(γ=2), KAR.2(γ=2) beat KIV", criterion_6),
        (7, "shift robustness", criterion_7),
        (8, "empirical rate N=1400 vs N=700", criterion_8),
        (9, "benchmark ordering, variant design", || benchmark_ordering(DesignTag::Variant)),
        (10, "variant do-response vs Monte Carlo", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} [{verdict}] {name}: {} ({:.1} s)",
            out.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
