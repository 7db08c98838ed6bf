//! Shared oracles and invariant checks for the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use anderson_lab::feynman_kac::{estimate_trace_mean, moment_prefactor, EpsRule, FkConfig};
use anderson_lab::local_times::{
    approx_milt_with, approx_silt, approx_silt_with, silt_mean_exact, KernelSum, SiltRenormalizer, TimeRegion,
};
use anderson_lab::paths::{sample_bridge, sample_motion, DiscretePath, PathKind};
use anderson_lab::spectral::rectangle_model_for_t;
use anderson_lab::stats::mean_and_se;
use anderson_lab::{PlanarDomain, Point2, RandomStream};

pub type Check = Result<String, String>;

/// Composite Simpson on `[a, b]` with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Integral over `[lo, hi]` with panels that shrink geometrically towards
/// both ends (down to `scale`) and split at `breaks`.
pub fn graded_integral<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, scale: f64, breaks: &[f64]) -> f64 {
    let mut knots = vec![lo, hi];
    knots.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    let mut h = scale / 8.0;
    while h < hi - lo {
        knots.push(lo + h);
        knots.push(hi - h);
        h *= 2.0;
    }
    knots.retain(|&k| k >= lo && k <= hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots.windows(2).map(|w| simpson(&f, w[0], w[1], 256)).sum()
}

/// Variance per coordinate of the increment over lag `u`.
pub fn lag_variance(kind: PathKind, t: f64, u: f64) -> f64 {
    match kind {
        PathKind::Motion => u,
        PathKind::Bridge => u * (t - u) / t,
    }
}

/// Length of `{r₁ : (r₁, r₁ + u) ∈ region}`.
pub fn lag_weight(region: TimeRegion, t: f64, u: f64) -> f64 {
    let (a, b, c, d) = match region {
        TimeRegion::Triangle => (0.0, t, 0.0, t),
        TimeRegion::DiagBlock { a, b } => (a, b, a, b),
        TimeRegion::Rect { a, b, c, d } => (a, b, c, d),
    };
    (b.min(d - u) - a.max(c - u)).max(0.0)
}

/// Continuum SILT mean `∫ w(u) / (2π(ε + σ²(u))) du`, computed without the
/// library's closed forms.
pub fn silt_mean_oracle(kind: PathKind, t: f64, eps: f64, region: TimeRegion) -> f64 {
    let (lo, hi, breaks) = match region {
        TimeRegion::Triangle => (0.0, t, vec![]),
        TimeRegion::DiagBlock { a, b } => (0.0, b - a, vec![]),
        TimeRegion::Rect { a, b, c, d } => ((c - b).max(0.0), d - a, vec![c - a, d - b]),
    };
    graded_integral(
        |u| lag_weight(region, t, u) / (2.0 * PI * (eps + lag_variance(kind, t, u))),
        lo,
        hi,
        eps.min(hi - lo),
        &breaks,
    )
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn path(kind: PathKind, x: Point2, t: f64, n: usize, rng: &mut RandomStream) -> DiscretePath {
    match kind {
        PathKind::Motion => sample_motion(x, t, n, rng).unwrap(),
        PathKind::Bridge => sample_bridge(x, t, n, rng).unwrap(),
    }
}

pub fn shift_invariance() -> Check {
    let mut rng = RandomStream::new(101);
    let shifts = [Point2::new(0.5, -0.25), Point2::new(-3.0, 7.75), Point2::new(0.125, 0.0625)];
    for k in 0..6 {
        let kind = if k % 2 == 0 { PathKind::Motion } else { PathKind::Bridge };
        let p = path(kind, Point2::ORIGIN, 0.05, 128, &mut rng);
        let q = path(kind, Point2::new(0.01, 0.0), 0.05, 128, &mut rng);
        for v in shifts {
            for mode in [KernelSum::Exact, KernelSum::Truncated] {
                let a = approx_silt_with(&p, 1e-3, TimeRegion::Triangle, mode).unwrap();
                let b = approx_silt_with(&p.shifted(v), 1e-3, TimeRegion::Triangle, mode).unwrap();
                ensure(rel_close(a, b, 1e-12), || format!("SILT changed under shift {v:?}: {a} vs {b}"))?;
                let m1 = approx_milt_with(&p, &q, 1e-3, mode).unwrap();
                let m2 = approx_milt_with(&p.shifted(v), &q.shifted(v), 1e-3, mode).unwrap();
                ensure(rel_close(m1, m2, 1e-12), || format!("MILT changed under shift {v:?}: {m1} vs {m2}"))?;
            }
        }
    }
    Ok("SILT and MILT agree to 1e-12 under 3 shifts".into())
}

pub fn scaling_coupling() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..8u64 {
        for &(t, eps) in &[(0.04, 1e-4), (0.3, 5e-3), (2.0, 0.1)] {
            let b1 = sample_bridge(Point2::ORIGIN, 1.0, 256, &mut RandomStream::new(seed)).unwrap();
            let bt = sample_bridge(Point2::new(0.3, 0.6), t, 256, &mut RandomStream::new(seed)).unwrap();
            for (i, (&p1, &pt)) in b1.positions().iter().zip(bt.positions()).enumerate() {
                let expect = Point2::new(0.3, 0.6) + p1 * t.sqrt();
                ensure(pt == expect, || format!("coupled positions differ at step {i}"))?;
            }
            let lhs = approx_silt(&bt, eps, TimeRegion::Triangle).unwrap();
            let rhs = t * approx_silt(&b1, eps / t, TimeRegion::Triangle).unwrap();
            worst = worst.max((lhs - rhs).abs() / lhs);
            ensure(rel_close(lhs, rhs, 1e-12), || format!("t={t} eps={eps}: {lhs} vs {rhs}"))?;
        }
    }
    Ok(format!("24 coupled pairs, max relative gap {worst:.1e}"))
}

pub fn milt_symmetry() -> Check {
    let mut rng = RandomStream::new(103);
    for _ in 0..20 {
        let a = sample_bridge(Point2::new(0.5, 0.5), 0.05, 128, &mut rng).unwrap();
        let b = sample_motion(Point2::new(0.52, 0.49), 0.05, 128, &mut rng).unwrap();
        for mode in [KernelSum::Exact, KernelSum::Truncated] {
            let ab = approx_milt_with(&a, &b, 1e-3, mode).unwrap();
            let ba = approx_milt_with(&b, &a, 1e-3, mode).unwrap();
            ensure(ab.to_bits() == ba.to_bits(), || format!("{ab} vs {ba}"))?;
        }
    }
    Ok("40 pairs bitwise symmetric".into())
}

pub fn separated_kernel_bound() -> Check {
    let mut rng = RandomStream::new(104);
    let (t, eps, n) = (0.01, 1e-3, 64);
    for _ in 0..50 {
        let a = sample_motion(Point2::ORIGIN, t, n, &mut rng).unwrap();
        let b = sample_motion(Point2::new(1.0, 0.0), t, n, &mut rng).unwrap();
        let gap = a
            .positions()
            .iter()
            .flat_map(|p| b.positions().iter().map(move |q| (*p - *q).norm()))
            .fold(f64::INFINITY, f64::min);
        let bound = t * t * (-gap * gap / (2.0 * eps)).exp() / (2.0 * PI * eps);
        for mode in [KernelSum::Exact, KernelSum::Truncated] {
            let v = approx_milt_with(&a, &b, eps, mode).unwrap();
            ensure(v >= 0.0 && v <= bound, || format!("MILT {v} exceeds bound {bound} (gap {gap})"))?;
        }
    }
    Ok("50 separated pairs within t²·p_ε(gap)".into())
}

pub fn renormalized_zero_mean() -> Check {
    let mut details = Vec::new();
    for (kind, seed) in [(PathKind::Bridge, 105), (PathKind::Motion, 106)] {
        let (t, eps, n) = (0.02, 2e-4, 128);
        let ren = SiltRenormalizer::new(kind, t, n, eps, KernelSum::Truncated).unwrap();
        let grid_mean = silt_mean_exact(kind, t, eps, TimeRegion::Triangle, Some(n)).unwrap();
        ensure(ren.exact_mean() == grid_mean, || format!("{kind:?}: renormalizer mean is not the grid mean"))?;
        let mut rng = RandomStream::new(seed);
        let mut vals = Vec::with_capacity(4000);
        for _ in 0..4000 {
            let v = ren.apply(&path(kind, Point2::ORIGIN, t, n, &mut rng)).unwrap();
            ensure(v.renormalized == v.raw - v.exact_mean && v.raw >= 0.0, || format!("{v:?}"))?;
            vals.push(v.renormalized);
        }
        let m = mean_and_se(&vals);
        ensure(m.mean.abs() <= 3.0 * m.std_error, || format!("{kind:?}: mean {} ± {}", m.mean, m.std_error))?;
        details.push(format!("{}: {:.2e} ± {:.1e}", kind.as_str(), m.mean, m.std_error));
    }
    Ok(details.join("; "))
}

pub fn kappa_zero_collapse() -> Check {
    let square = PlanarDomain::unit_square();
    let t = 0.02;
    let model = rectangle_model_for_t(1.0, 1.0, t).unwrap();
    for kind in [PathKind::Motion, PathKind::Bridge] {
        for m in 1..=2 {
            let p = moment_prefactor(0.0, t, m, kind);
            ensure(p == 1.0, || format!("prefactor at κ=0 is {p}"))?;
        }
    }
    let cfg = FkConfig { eps: EpsRule::Resolution, n_steps: 64, n_outer: 500, seed: 9, ..FkConfig::default() };
    let with_cv = estimate_trace_mean(&square, 0.0, t, &cfg, Some(&model)).unwrap();
    let exact = model.heat_trace(t).unwrap();
    ensure(with_cv.value == exact && with_cv.std_error == 0.0, || format!("CV estimate {with_cv:?} vs {exact}"))?;
    let plain = FkConfig { control_variate: false, ..cfg };
    let e = estimate_trace_mean(&square, 0.0, t, &plain, None).unwrap();
    let survival = e.value * 2.0 * PI * t;
    ensure(e.correction == 0.0 && e.prefactor == 1.0, || format!("{e:?}"))?;
    ensure(rel_close(survival, e.survival_fraction, 1e-12), || format!("{survival} vs {}", e.survival_fraction))?;
    Ok("prefactor 1, CV value equals T₀, plain value equals survival".into())
}

pub type NamedCheck = (&'static str, fn() -> Check);

pub const INVARIANTS: [NamedCheck; 6] = [
    ("shift invariance", shift_invariance),
    ("scaling coupling", scaling_coupling),
    ("MILT symmetry", milt_symmetry),
    ("separated-path kernel bound", separated_kernel_bound),
    ("renormalized SILT zero mean", renormalized_zero_mean),
    ("kappa = 0 collapse", kappa_zero_collapse),
];
