//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use anderson_lab::experiment::{run, Command, ExperimentConfig, RunOptions};
use anderson_lab::feynman_kac::{
    estimate_mass_variance, estimate_trace_mean, estimate_trace_variance, EpsRule, FkConfig, MomentEstimate,
};
use anderson_lab::geometry::minkowski_fit;
use anderson_lab::local_times::{approx_silt, silt_mean_asymptotic, silt_mean_exact, TimeRegion};
use anderson_lab::paths::{sample_bridge, sample_motion, PathKind};
use anderson_lab::recovery::{recover_area, recover_kappa2, recover_minkowski, recover_perimeter, SeriesPoint};
use anderson_lab::spectral::{corner_constant, rectangle_model_for_t, smooth_trace_asymptotic};
use anderson_lab::stats::mean_and_se;
use anderson_lab::{PlanarDomain, Point2, RandomStream};
use rayon::prelude::*;

use common::{silt_mean_oracle, INVARIANTS};

type Outcome = (bool, String);
type Criterion = (u32, &'static str, fn() -> Outcome);

fn within_budget(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

fn c1_heat_trace() -> Outcome {
    let t = 1e-3;
    let start = Instant::now();
    let model = rectangle_model_for_t(1.0, 1.0, t).unwrap();
    let exact = model.heat_trace(t).unwrap();
    let elapsed = start.elapsed();
    let corner = corner_constant(&[PI / 2.0; 4]);
    let asym = smooth_trace_asymptotic(1.0, 4.0, t) + corner;
    let rel = (exact - asym).abs() / asym;
    let fast = within_budget(elapsed, Duration::from_secs(1));
    (
        rel <= 5e-3 && fast && (corner - 0.25).abs() < 1e-15,
        format!("T0={exact:.6} asymptotic={asym:.6} rel_gap={rel:.1e} (tol 5e-3) time={elapsed:.2?} (limit 1s)"),
    )
}

fn c2_survival() -> Outcome {
    let t = 0.01;
    let cfg = FkConfig {
        eps: EpsRule::Resolution,
        n_steps: 512,
        n_outer: 200_000,
        exit_correction: true,
        control_variate: false,
        seed: 2024,
        ..FkConfig::default()
    };
    let est = estimate_trace_mean(&PlanarDomain::unit_square(), 0.0, t, &cfg, None).unwrap();
    let exact = rectangle_model_for_t(1.0, 1.0, t).unwrap().heat_trace(t).unwrap();
    let gap = (est.value - exact).abs();
    let rel = gap / exact;
    (
        rel <= 0.02 && gap <= 3.0 * est.std_error,
        format!(
            "estimate={:.4}±{:.4} exact={exact:.4} rel_gap={rel:.2e} (tol 2e-2) z={:.2} (tol 3)",
            est.value,
            est.std_error,
            gap / est.std_error
        ),
    )
}

fn silt_mc(kind: PathKind, t: f64, eps: f64, n: usize, n_paths: usize, seed: u64) -> (f64, f64) {
    let vals: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomStream::derive(seed, kind as u64, i as u64);
            let p = match kind {
                PathKind::Motion => sample_motion(Point2::ORIGIN, t, n, &mut rng).unwrap(),
                PathKind::Bridge => sample_bridge(Point2::ORIGIN, t, n, &mut rng).unwrap(),
            };
            approx_silt(&p, eps, TimeRegion::Triangle).unwrap()
        })
        .collect();
    let m = mean_and_se(&vals);
    (m.mean, m.std_error)
}

fn c3_silt_mean() -> Outcome {
    let (t, eps, n, n_paths): (f64, f64, usize, usize) = (0.05, 1e-3, 512, 10_000);
    let closed = ((t + eps) * (1.0 + t / eps).ln() - t) / (2.0 * PI);
    let closed_ok = (closed / 0.023_956_6 - 1.0).abs() < 1e-5;
    let (mm, ms) = silt_mc(PathKind::Motion, t, eps, n, n_paths, 31);
    let bridge_oracle = silt_mean_oracle(PathKind::Bridge, t, eps, TimeRegion::Triangle);
    let (bm, bs) = silt_mc(PathKind::Bridge, t, eps, n, n_paths, 32);
    let zm = (mm - closed).abs() / ms;
    let zb = (bm - bridge_oracle).abs() / bs;
    (
        closed_ok && zm <= 3.0 && zb <= 3.0,
        format!(
            "motion mc={mm:.6}±{ms:.1e} closed={closed:.7} z={zm:.2}; bridge mc={bm:.6}±{bs:.1e} oracle={bridge_oracle:.7} z={zb:.2} (tol 3)"
        ),
    )
}

fn c4_smoothed_expectation() -> Outcome {
    let t = 0.1;
    let start = Instant::now();
    let cases = [
        ("bridge diag", PathKind::Bridge, TimeRegion::DiagBlock { a: 0.0, b: 0.05 }),
        ("motion diag", PathKind::Motion, TimeRegion::DiagBlock { a: 0.0, b: 0.05 }),
        ("bridge rect", PathKind::Bridge, TimeRegion::Rect { a: 0.01, b: 0.04, c: 0.06, d: 0.09 }),
        ("bridge triangle", PathKind::Bridge, TimeRegion::Triangle),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, kind, region) in cases {
        let mut gaps = Vec::new();
        let mut last_exact = 0.0;
        for eps in [1e-2, 1e-3, 1e-4] {
            let exact = silt_mean_exact(kind, t, eps, region, None).unwrap();
            let oracle = silt_mean_oracle(kind, t, eps, region);
            ok &= (exact - oracle).abs() <= 1e-8 * oracle.abs();
            gaps.push((silt_mean_asymptotic(t, eps, kind, region).unwrap() - exact).abs());
            last_exact = exact;
        }
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        let final_rel = gaps[2] / last_exact.abs();
        ok &= decreasing && final_rel < 0.01;
        parts.push(format!("{name}: gaps {:.1e}/{:.1e}/{:.1e} final {final_rel:.1e}", gaps[0], gaps[1], gaps[2]));
    }
    // Where a rectangle corner meets the diagonal or the point (0, t) the
    // increment variance vanishes and convergence is only ε ln(1/ε);
    // reported, not gated.
    let touching = TimeRegion::Rect { a: 0.0, b: 0.05, c: 0.05, d: 0.1 };
    let exact = silt_mean_exact(PathKind::Bridge, t, 1e-4, touching, None).unwrap();
    let gap = (silt_mean_asymptotic(t, 1e-4, PathKind::Bridge, touching).unwrap() - exact).abs();
    let elapsed = start.elapsed();
    ok &= within_budget(elapsed, Duration::from_secs(1));
    (
        ok,
        format!(
            "{} (tol 1e-2); corner-touching rect final {:.1e} (info) time={elapsed:.2?} (limit 1s)",
            parts.join("; "),
            gap / exact
        ),
    )
}

fn c5_area_perimeter() -> Outcome {
    let start = Instant::now();
    let ts = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5];
    let model = rectangle_model_for_t(1.0, 1.0, 1e-5).unwrap();
    let series: Vec<SeriesPoint> = ts.iter().map(|&t| SeriesPoint::exact(t, model.heat_trace(t).unwrap())).collect();
    let area = recover_area(&series).unwrap().estimate;
    let perimeter = recover_perimeter(&series, 1.0).unwrap().estimate;
    let elapsed = start.elapsed();
    (
        (area - 1.0).abs() <= 0.01 && (perimeter - 4.0).abs() <= 0.04 && within_budget(elapsed, Duration::from_secs(1)),
        format!("area={area:.6} (1±1%) perimeter={perimeter:.6} (4±1%) time={elapsed:.2?} (limit 1s)"),
    )
}

fn c6_kappa2() -> Outcome {
    let square = PlanarDomain::unit_square();
    let cfg = FkConfig { eps: EpsRule::Resolution, n_steps: 512, n_outer: 20_000, seed: 606, ..FkConfig::default() };
    let ts = [0.04, 0.01];
    let model = rectangle_model_for_t(1.0, 1.0, 0.01).unwrap();
    let mut kappa = Vec::new();
    let mut zero = Vec::new();
    for &t in &ts {
        let e = estimate_trace_mean(&square, 1.0, t, &cfg, Some(&model)).unwrap();
        kappa.push(SeriesPoint::new(t, e.value, e.std_error));
        zero.push(SeriesPoint::exact(t, model.heat_trace(t).unwrap()));
    }
    let rec = recover_kappa2(&kappa, &zero, 1.0).unwrap();
    let head = rec.headline;
    let headline_ok = (head.estimate - 1.0).abs() <= 0.25;
    let ratios: Vec<(f64, f64)> =
        kappa.iter().zip(&zero).map(|(k, z)| ((k.value - z.value) / k.t.ln(), k.std_error / k.t.ln().abs())).collect();
    let sign_ok = kappa.iter().zip(&zero).all(|(k, z)| k.value < z.value);
    let spread = (ratios[0].0 - ratios[1].0).abs();
    let spread_se = ratios[0].1.hypot(ratios[1].1);
    let constancy_ok = spread <= 2.0 * spread_se;
    (
        headline_ok && sign_ok && constancy_ok,
        format!(
            "kappa2(t=0.01)={:.4}±{:.4} (1±25%) [{}]; sign {}; (T-T0)/ln t: t=0.04 {:.5}±{:.1e}, t=0.01 {:.5}±{:.1e}, gap/SE={:.1} (tol 2) [{}]",
            head.estimate,
            head.std_error,
            if headline_ok { "ok" } else { "fail" },
            if sign_ok { "ok" } else { "fail" },
            ratios[0].0,
            ratios[0].1,
            ratios[1].0,
            ratios[1].1,
            spread / spread_se,
            if constancy_ok { "ok" } else { "fail" },
        ),
    )
}

fn c7_variance_order() -> Outcome {
    let square = PlanarDomain::unit_square();
    let cfg = FkConfig { eps: EpsRule::Resolution, n_steps: 512, n_outer: 8_000, seed: 707, ..FkConfig::default() };
    let ts = [0.04, 0.02, 0.01];
    let trace: Vec<MomentEstimate> = ts.iter().map(|&t| estimate_trace_variance(&square, 1.0, t, &cfg).unwrap()).collect();
    let mass: Vec<MomentEstimate> = ts.iter().map(|&t| estimate_mass_variance(&square, 1.0, t, &cfg).unwrap()).collect();
    let mut ok = true;
    let mut ratio_text = Vec::new();
    for w in trace.windows(2) {
        let r = w[1].value / w[0].value;
        let se = r * (w[1].std_error / w[1].value).hypot(w[0].std_error / w[0].value);
        ok &= r < 1.5 + 2.0 * se;
        ratio_text.push(format!("{r:.3}±{se:.3}"));
    }
    let scaled: Vec<f64> = mass.iter().map(|e| e.value / (e.t * e.t)).collect();
    let hi = scaled.iter().copied().fold(f64::MIN, f64::max);
    let lo = scaled.iter().copied().fold(f64::MAX, f64::min);
    ok &= lo > 0.0 && hi / lo <= 3.0;
    (
        ok,
        format!(
            "trace var {:.4}/{:.4}/{:.4} ratios {} (< 1.5); mass var/t² {:.3}/{:.3}/{:.3} spread {:.2} (<= 3)",
            trace[0].value,
            trace[1].value,
            trace[2].value,
            ratio_text.join(", "),
            scaled[0],
            scaled[1],
            scaled[2],
            hi / lo
        ),
    )
}

fn tube_dimension(domain: &PlanarDomain, rs: &[f64], seed: u64) -> f64 {
    let tubes: Vec<_> = rs
        .iter()
        .enumerate()
        .map(|(k, &r)| domain.boundary_neighborhood_area_seeded(r, 400_000, seed, k as u64).unwrap())
        .collect();
    minkowski_fit(&tubes).unwrap()
}

fn c8_minkowski() -> Outcome {
    let koch_d = 4f64.ln() / 3f64.ln();
    let koch = tube_dimension(&PlanarDomain::koch(5, 1.0).unwrap(), &[0.02, 0.014, 0.01, 0.007, 0.005], 5);
    let square = tube_dimension(&PlanarDomain::unit_square(), &[0.02, 0.01, 0.005, 0.0025], 5);
    let mut synth_err: f64 = 0.0;
    for &d in &[1.0, 1.1, koch_d, 1.5, 1.9] {
        for &c in &[0.1, 1.0, 7.0] {
            let area = 2.0;
            let series: Vec<SeriesPoint> = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
                .iter()
                .map(|&t| SeriesPoint::exact(t, area - c * t.powf(1.0 - d / 2.0)))
                .collect();
            synth_err = synth_err.max((recover_minkowski(&series, area).unwrap().slope_fit - d).abs());
        }
    }
    (
        (koch - koch_d).abs() <= 0.05 && (square - 1.0).abs() <= 0.02 && synth_err <= 1e-10,
        format!("koch level 5 d={koch:.4} (1.26186±0.05); square d={square:.4} (1±0.02); synthetic max error {synth_err:.1e} (tol 1e-10)"),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 99

[domain]
kind = "rectangle"
width = 1.0
height = 1.0

[silt_validate]
t = [0.05]
eps = [1e-3]
regions = ["triangle", "rect:0:0.025:0.025:0.05"]
n_paths = 400
n_steps = 128

[trace]
t = [0.04, 0.02]
kappa = [0.0, 1.0]
eps_rule = "resolution"
n_steps = 128
n_outer = 1000
variance = true

[mass]
t = [0.04, 0.02]
kappa = [0.0, 1.0]
eps_rule = "resolution"
n_steps = 128
n_outer = 1000

[recover]
source = "spectral"
estimators = ["area", "perimeter", "minkowski"]
t = [1e-3, 1e-4]

[minkowski]
r = [0.02, 0.01, 0.005]
n_samples = 50000
via_mass = true
mass_t = [0.04, 0.02]
mass_n_outer = 1000
mass_n_steps = 64
"#;

fn run_all(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for command in [Command::SiltValidate, Command::Trace, Command::Mass, Command::Recover, Command::Minkowski] {
        let opts = RunOptions { out_dir: Some(out.to_path_buf()), workers: Some(workers), seed: None };
        let outcome = run(command, cfg, &opts).unwrap();
        for f in outcome.files {
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&f).unwrap()));
        }
    }
    files
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(DETERMINISM_CONFIG, dir.path()).unwrap();
    let reference = run_all(&cfg, &dir.path().join("w1"), 1);
    let mut ok = reference.len() >= 7;
    for workers in [4, 8] {
        let other = run_all(&cfg, &dir.path().join(format!("w{workers}")), workers);
        ok &= other == reference;
    }
    let names: Vec<&str> = reference.iter().map(|(n, _)| n.as_str()).collect();
    (ok, format!("{} CSVs byte-identical across workers 1/4/8: {}", reference.len(), names.join(" ")))
}

fn c10_invariants() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, check) in INVARIANTS {
        match check() {
            Ok(_) => parts.push(format!("{name} ok")),
            Err(e) => {
                ok = false;
                parts.push(format!("{name} FAILED ({e})"));
            }
        }
    }
    let elapsed = start.elapsed();
    ok &= within_budget(elapsed, Duration::from_secs(60));
    (ok, format!("{}; time={elapsed:.2?} (limit 60s)", parts.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "heat trace vs asymptotic", c1_heat_trace),
        (2, "survival Feynman-Kac at kappa=0", c2_survival),
        (3, "SILT mean oracle", c3_silt_mean),
        (4, "smoothed SILT expectation", c4_smoothed_expectation),
        (5, "area and perimeter recovery", c5_area_perimeter),
        (6, "kappa^2 recovery", c6_kappa2),
        (7, "variance order", c7_variance_order),
        (8, "Minkowski dimension", c8_minkowski),
        (9, "determinism across worker counts", c9_determinism),
        (10, "invariant suite", c10_invariants),
    ];
    // Numeric arguments select criteria: `cargo test --test zz_acceptance -- 4 5`.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {n} ({name}): {detail} [{:.1?}]", start.elapsed());
        if !ok {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
