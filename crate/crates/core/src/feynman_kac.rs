//! Monte Carlo evaluation of the averaged Feynman-Kac formulas
//!
//! ```text
//! E[T_κ(t)]   = e^{κ² t ln t/2π} / (2πt)  ∫_D E[1{τ>t} e^{κ²γ_t(B^{x,x}_t)}] dx
//! E[M_κ(t)]   = e^{κ²(t ln t − t)/2π}      ∫_D E[1{τ>t} e^{κ²γ_t(B^x)}] dx
//! Var[T_κ(t)] = e^{κ² t ln t/π} / (2πt)²   ∫_{D²} E[1·1·e^{κ²(γ¹+γ²)} (e^{κ²α_t} − 1)] dx
//! Var[M_κ(t)] = e^{κ²(t ln t − t)/π}       ∫_{D²} E[  …  same with motions  …  ] dx
//! ```
//!
//! with `γ_t` the grid-renormalized SILT and `α_t` the MILT at a finite `ε`.
//!
//! Each outer sample `i` draws its point(s) and paths from its own stream
//! `RandomStream::derive(seed, label, i)`; the label depends on the target
//! and `t` but not on `κ`, so runs at different `κ` share random numbers.
//! Samples are collected in index order and reduced with compensated sums,
//! which makes every estimate bit-identical for any number of workers.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::geometry::PlanarDomain;
use crate::local_times::{approx_milt_with, KernelSum, SiltRenormalizer, RESOLUTION_RATIO};
use crate::paths::{sample_bridge, sample_motion, survives, DiscretePath, PathKind};
use crate::rng::{mix_words, RandomStream};
use crate::spectral::SpectralModel;
use crate::stats::mean_and_se;

/// How `ε` is chosen from `t` and the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsRule {
    Fixed(f64),
    /// `ε = f · t`.
    TimeFraction(f64),
    /// `ε = 10 Δt`, the smallest value the resolution rule allows.
    Resolution,
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::TimeFraction(1e-3)
    }
}

impl EpsRule {
    pub fn eps(&self, t: f64, n_steps: usize) -> f64 {
        match *self {
            EpsRule::Fixed(e) => e,
            EpsRule::TimeFraction(f) => f * t,
            EpsRule::Resolution => RESOLUTION_RATIO * t / n_steps as f64,
        }
    }

    fn words(&self) -> [u64; 2] {
        match *self {
            EpsRule::Fixed(e) => [1, e.to_bits()],
            EpsRule::TimeFraction(f) => [2, f.to_bits()],
            EpsRule::Resolution => [3, 0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FkConfig {
    pub eps: EpsRule,
    pub n_steps: usize,
    pub n_outer: usize,
    pub n_paths_per_x: usize,
    pub exit_correction: bool,
    pub kernel_truncation: bool,
    /// Use the exact `κ = 0` reference for the survival part when a
    /// spectral model is supplied.
    pub control_variate: bool,
    /// Exponents `κ²γ` above this are counted as overflow events.
    pub overflow_cap: f64,
    pub seed: u64,
}

impl Default for FkConfig {
    fn default() -> Self {
        Self {
            eps: EpsRule::default(),
            n_steps: 512,
            n_outer: 10_000,
            n_paths_per_x: 1,
            exit_correction: true,
            kernel_truncation: true,
            control_variate: true,
            overflow_cap: 30.0,
            seed: 0,
        }
    }
}

impl FkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_outer < 2 || self.n_paths_per_x == 0 {
            return Err(LabError::arg("n_steps, n_paths_per_x must be ≥ 1 and n_outer ≥ 2"));
        }
        match self.eps {
            EpsRule::Fixed(e) | EpsRule::TimeFraction(e) if !(e > 0.0 && e.is_finite()) => {
                return Err(LabError::arg(format!("eps parameter must be positive, got {e}")));
            }
            _ => {}
        }
        if !(self.overflow_cap > 0.0) {
            return Err(LabError::arg("overflow_cap must be positive"));
        }
        Ok(())
    }

    fn kernel_sum(&self) -> KernelSum {
        if self.kernel_truncation {
            KernelSum::Truncated
        } else {
            KernelSum::Exact
        }
    }

    /// Stable 64-bit digest of every field.
    pub fn fingerprint(&self) -> u64 {
        let [e0, e1] = self.eps.words();
        mix_words(&[
            e0,
            e1,
            self.n_steps as u64,
            self.n_outer as u64,
            self.n_paths_per_x as u64,
            self.exit_correction as u64,
            self.kernel_truncation as u64,
            self.control_variate as u64,
            self.overflow_cap.to_bits(),
            self.seed,
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MomentTarget {
    TraceMean,
    MassMean,
    TraceVar,
    MassVar,
}

impl MomentTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            MomentTarget::TraceMean => "trace_mean",
            MomentTarget::MassMean => "mass_mean",
            MomentTarget::TraceVar => "trace_var",
            MomentTarget::MassVar => "mass_var",
        }
    }

    fn path_kind(self) -> PathKind {
        match self {
            MomentTarget::TraceMean | MomentTarget::TraceVar => PathKind::Bridge,
            MomentTarget::MassMean | MomentTarget::MassVar => PathKind::Motion,
        }
    }

    /// Moment order `m` in the prefactor.
    fn order(self) -> u32 {
        match self {
            MomentTarget::TraceMean | MomentTarget::MassMean => 1,
            MomentTarget::TraceVar | MomentTarget::MassVar => 2,
        }
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub target: MomentTarget,
    pub t: f64,
    pub kappa: f64,
    pub value: f64,
    pub std_error: f64,
    pub n_outer: usize,
    pub n_paths_per_x: usize,
    pub eps: f64,
    pub n_steps: usize,
    pub prefactor: f64,
    /// `value / prefactor`: the domain integral of the path expectation.
    pub integral: f64,
    /// Monte Carlo mean of the survival indicator (pairs: both survive).
    pub survival_fraction: f64,
    /// Monte Carlo mean of `1{survived}(e^{κ²γ} − 1)`; zero for variances.
    pub correction: f64,
    pub correction_se: f64,
    /// Exact `κ = 0` value used as control variate, if any.
    pub reference: Option<f64>,
    pub overflow_count: usize,
    pub config_fingerprint: u64,
}

impl MomentEstimate {
    /// Fraction of path samples whose exponent exceeded the cap.
    pub fn overflow_rate(&self) -> f64 {
        self.overflow_count as f64 / (self.n_outer * self.n_paths_per_x) as f64
    }
}

/// `e^{mκ² t ln t/2π}` for bridges and `e^{mκ²(t ln t − t)/2π}` for motions.
pub fn moment_prefactor(kappa: f64, t: f64, m: u32, kind: PathKind) -> f64 {
    let k2 = kappa * kappa;
    let base = match kind {
        PathKind::Bridge => t * t.ln(),
        PathKind::Motion => t * t.ln() - t,
    };
    (m as f64 * k2 * base / (2.0 * PI)).exp()
}

#[derive(Clone, Copy, Default)]
struct Sample {
    survival: f64,
    correction: f64,
    overflow: usize,
}

struct Setup<'a> {
    domain: &'a PlanarDomain,
    target: MomentTarget,
    t: f64,
    k2: f64,
    eps: f64,
    cfg: &'a FkConfig,
    renorm: Option<SiltRenormalizer>,
    label: u64,
}

impl Setup<'_> {
    fn new<'a>(domain: &'a PlanarDomain, target: MomentTarget, kappa: f64, t: f64, cfg: &'a FkConfig) -> Result<Setup<'a>> {
        cfg.validate()?;
        if !(t > 0.0 && t.is_finite()) || !kappa.is_finite() {
            return Err(LabError::arg(format!("need t > 0 and finite κ, got t={t}, κ={kappa}")));
        }
        let eps = cfg.eps.eps(t, cfg.n_steps);
        let k2 = kappa * kappa;
        let renorm = if k2 > 0.0 {
            Some(SiltRenormalizer::new(target.path_kind(), t, cfg.n_steps, eps, cfg.kernel_sum())?)
        } else {
            None
        };
        let label = mix_words(&[target.code(), t.to_bits(), cfg.n_steps as u64]);
        Ok(Setup { domain, target, t, k2, eps, cfg, renorm, label })
    }

    fn path(&self, x: crate::Point2, rng: &mut RandomStream) -> Result<DiscretePath> {
        match self.target.path_kind() {
            PathKind::Bridge => sample_bridge(x, self.t, self.cfg.n_steps, rng),
            PathKind::Motion => sample_motion(x, self.t, self.cfg.n_steps, rng),
        }
    }

    /// κ²γ for a surviving path, with the overflow flag.
    fn exponent(&self, path: &DiscretePath) -> Result<(f64, bool)> {
        match &self.renorm {
            None => Ok((0.0, false)),
            Some(r) => {
                let e = self.k2 * r.apply(path)?.renormalized;
                Ok((e, e > self.cfg.overflow_cap))
            }
        }
    }

    fn mean_sample(&self, i: usize) -> Result<Sample> {
        let mut rng = RandomStream::derive(self.cfg.seed, self.label, i as u64);
        let x = self.domain.sample_uniform(&mut rng)?;
        let mut s = Sample::default();
        for _ in 0..self.cfg.n_paths_per_x {
            let path = self.path(x, &mut rng)?;
            if !survives(&path, self.domain, self.cfg.exit_correction, &mut rng).survived {
                continue;
            }
            let (e, over) = self.exponent(&path)?;
            s.survival += 1.0;
            s.correction += e.exp_m1();
            s.overflow += over as usize;
        }
        let w = 1.0 / self.cfg.n_paths_per_x as f64;
        s.survival *= w;
        s.correction *= w;
        Ok(s)
    }

    fn pair_sample(&self, i: usize) -> Result<Sample> {
        let mut rng = RandomStream::derive(self.cfg.seed, self.label, i as u64);
        let x1 = self.domain.sample_uniform(&mut rng)?;
        let x2 = self.domain.sample_uniform(&mut rng)?;
        let mut s = Sample::default();
        for _ in 0..self.cfg.n_paths_per_x {
            let p1 = self.path(x1, &mut rng)?;
            let p2 = self.path(x2, &mut rng)?;
            let alive1 = survives(&p1, self.domain, self.cfg.exit_correction, &mut rng).survived;
            let alive2 = survives(&p2, self.domain, self.cfg.exit_correction, &mut rng).survived;
            if !(alive1 && alive2) {
                continue;
            }
            s.survival += 1.0;
            if self.k2 == 0.0 {
                continue;
            }
            let (e1, o1) = self.exponent(&p1)?;
            let (e2, o2) = self.exponent(&p2)?;
            let alpha = approx_milt_with(&p1, &p2, self.eps, self.cfg.kernel_sum())?;
            s.correction += (e1 + e2).exp() * (self.k2 * alpha).exp_m1();
            s.overflow += o1 as usize + o2 as usize;
        }
        let w = 1.0 / self.cfg.n_paths_per_x as f64;
        s.survival *= w;
        s.correction *= w;
        Ok(s)
    }

    fn collect(&self, pairs: bool) -> Result<Vec<Sample>> {
        (0..self.cfg.n_outer)
            .into_par_iter()
            .map(|i| if pairs { self.pair_sample(i) } else { self.mean_sample(i) })
            .collect()
    }
}

fn finish(
    setup: &Setup<'_>,
    kappa: f64,
    samples: &[Sample],
    scale: f64,
    reference: Option<f64>,
) -> Result<MomentEstimate> {
    let target = setup.target;
    let prefactor = moment_prefactor(kappa, setup.t, target.order(), target.path_kind());
    let surv: Vec<f64> = samples.iter().map(|s| s.survival).collect();
    let corr: Vec<f64> = samples.iter().map(|s| s.correction).collect();
    let mut overflow = 0;
    for s in samples {
        overflow += s.overflow;
    }
    let surv_m = mean_and_se(&surv);
    let corr_m = mean_and_se(&corr);
    let (integral, integral_se) = match (target, reference) {
        (MomentTarget::TraceVar | MomentTarget::MassVar, _) => (scale * corr_m.mean, scale * corr_m.std_error),
        // Control variate: exact survival part plus the MC correction.
        (_, Some(r)) => (r + scale * corr_m.mean, scale * corr_m.std_error),
        (_, None) => {
            let total: Vec<f64> = samples.iter().map(|s| s.survival + s.correction).collect();
            let m = mean_and_se(&total);
            (scale * m.mean, scale * m.std_error)
        }
    };
    let value = prefactor * integral;
    if !value.is_finite() {
        return Err(LabError::arg(format!(
            "{} at t={}, κ={kappa} is not finite ({overflow} overflow events); t is likely beyond the exponential-moment range",
            target.as_str(),
            setup.t
        )));
    }
    Ok(MomentEstimate {
        target,
        t: setup.t,
        kappa,
        value,
        std_error: prefactor * integral_se,
        n_outer: setup.cfg.n_outer,
        n_paths_per_x: setup.cfg.n_paths_per_x,
        eps: setup.eps,
        n_steps: setup.cfg.n_steps,
        prefactor,
        integral,
        survival_fraction: surv_m.mean,
        correction: corr_m.mean,
        correction_se: corr_m.std_error,
        reference,
        overflow_count: overflow,
        config_fingerprint: mix_words(&[
            setup.cfg.fingerprint(),
            target.code(),
            setup.t.to_bits(),
            kappa.to_bits(),
            mix_words(&setup.domain.describe().bytes().map(u64::from).collect::<Vec<_>>()),
        ]),
    })
}

fn reference_value(model: Option<&SpectralModel>, cfg: &FkConfig, t: f64, trace: bool) -> Result<Option<f64>> {
    match model {
        Some(m) if cfg.control_variate => Ok(Some(if trace { m.heat_trace(t)? } else { m.heat_content(t)? })),
        _ => Ok(None),
    }
}

/// Estimate of `E[T_κ(t)]` from bridges started uniformly in `domain`.
///
/// With a spectral model (and `control_variate` on) the survival part is
/// replaced by the exact `T₀(t)`, so that at `κ = 0` the estimate equals
/// `T₀(t)` with zero standard error.
pub fn estimate_trace_mean(
    domain: &PlanarDomain,
    kappa: f64,
    t: f64,
    cfg: &FkConfig,
    model: Option<&SpectralModel>,
) -> Result<MomentEstimate> {
    let setup = Setup::new(domain, MomentTarget::TraceMean, kappa, t, cfg)?;
    let reference = reference_value(model, cfg, t, true)?;
    if let (Some(r), 0.0) = (reference, kappa) {
        // Every correction sample is e^0 − 1 = 0: skip the sampling.
        let zeros = vec![Sample { survival: 0.0, correction: 0.0, overflow: 0 }; cfg.n_outer];
        let mut est = finish(&setup, kappa, &zeros, 0.0, Some(r))?;
        est.survival_fraction = 2.0 * PI * t * r / domain.area();
        return Ok(est);
    }
    let samples = setup.collect(false)?;
    finish(&setup, kappa, &samples, domain.area() / (2.0 * PI * t), reference)
}

/// Estimate of `E[M_κ(t)]` from motions started uniformly in `domain`.
pub fn estimate_mass_mean(
    domain: &PlanarDomain,
    kappa: f64,
    t: f64,
    cfg: &FkConfig,
    model: Option<&SpectralModel>,
) -> Result<MomentEstimate> {
    let setup = Setup::new(domain, MomentTarget::MassMean, kappa, t, cfg)?;
    let reference = reference_value(model, cfg, t, false)?;
    if let (Some(r), 0.0) = (reference, kappa) {
        let zeros = vec![Sample::default(); cfg.n_outer];
        let mut est = finish(&setup, kappa, &zeros, 0.0, Some(r))?;
        est.survival_fraction = r / domain.area();
        return Ok(est);
    }
    let samples = setup.collect(false)?;
    finish(&setup, kappa, &samples, domain.area(), reference)
}

/// Estimate of `Var[T_κ(t)]` from independent bridge pairs.
pub fn estimate_trace_variance(domain: &PlanarDomain, kappa: f64, t: f64, cfg: &FkConfig) -> Result<MomentEstimate> {
    let setup = Setup::new(domain, MomentTarget::TraceVar, kappa, t, cfg)?;
    let samples = setup.collect(true)?;
    let a = domain.area();
    finish(&setup, kappa, &samples, a * a / (2.0 * PI * t).powi(2), None)
}

/// Estimate of `Var[M_κ(t)]` from independent motion pairs.
pub fn estimate_mass_variance(domain: &PlanarDomain, kappa: f64, t: f64, cfg: &FkConfig) -> Result<MomentEstimate> {
    let setup = Setup::new(domain, MomentTarget::MassVar, kappa, t, cfg)?;
    let samples = setup.collect(true)?;
    let a = domain.area();
    finish(&setup, kappa, &samples, a * a, None)
}

pub fn estimate(
    target: MomentTarget,
    domain: &PlanarDomain,
    kappa: f64,
    t: f64,
    cfg: &FkConfig,
    model: Option<&SpectralModel>,
) -> Result<MomentEstimate> {
    match target {
        MomentTarget::TraceMean => estimate_trace_mean(domain, kappa, t, cfg, model),
        MomentTarget::MassMean => estimate_mass_mean(domain, kappa, t, cfg, model),
        MomentTarget::TraceVar => estimate_trace_variance(domain, kappa, t, cfg),
        MomentTarget::MassVar => estimate_mass_variance(domain, kappa, t, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::rectangle_model_for_t;
    use approx::assert_relative_eq;

    fn small_cfg(n_outer: usize) -> FkConfig {
        FkConfig { n_steps: 64, n_outer, eps: EpsRule::Resolution, seed: 7, ..FkConfig::default() }
    }

    #[test]
    fn prefactor_examples() {
        for kind in [PathKind::Bridge, PathKind::Motion] {
            assert_eq!(moment_prefactor(0.0, 0.3, 1, kind), 1.0);
            assert_eq!(moment_prefactor(0.0, 0.01, 2, kind), 1.0);
            let one = moment_prefactor(1.3, 0.02, 1, kind);
            assert_relative_eq!(moment_prefactor(1.3, 0.02, 2, kind), one * one, max_relative = 1e-14);
        }
        let t = (-1.0f64).exp();
        let v = moment_prefactor(1.0, t, 1, PathKind::Bridge);
        assert_relative_eq!(v, (-1.0 / (2.0 * PI * std::f64::consts::E)).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.943_131, max_relative = 1e-6);
    }

    #[test]
    fn eps_rules() {
        assert_eq!(EpsRule::Fixed(0.1).eps(5.0, 10), 0.1);
        assert_relative_eq!(EpsRule::default().eps(0.02, 10), 2e-5);
        assert_relative_eq!(EpsRule::Resolution.eps(0.01, 512), 10.0 * 0.01 / 512.0);
        assert!(FkConfig { eps: EpsRule::Fixed(-1.0), ..FkConfig::default() }.validate().is_err());
        assert!(FkConfig { n_outer: 1, ..FkConfig::default() }.validate().is_err());
    }

    #[test]
    fn kappa_zero_collapse() {
        let d = PlanarDomain::unit_square();
        let model = rectangle_model_for_t(1.0, 1.0, 1e-3).unwrap();
        let cfg = small_cfg(200);
        let tr = estimate_trace_mean(&d, 0.0, 0.01, &cfg, Some(&model)).unwrap();
        assert_eq!(tr.value, model.heat_trace(0.01).unwrap());
        assert_eq!(tr.std_error, 0.0);
        assert_eq!(tr.prefactor, 1.0);
        let ms = estimate_mass_mean(&d, 0.0, 0.01, &cfg, Some(&model)).unwrap();
        assert_eq!(ms.value, model.heat_content(0.01).unwrap());
        assert_eq!(ms.std_error, 0.0);
        for target in [MomentTarget::TraceVar, MomentTarget::MassVar] {
            let v = estimate(target, &d, 0.0, 0.01, &cfg, None).unwrap();
            assert_eq!(v.value, 0.0);
            assert_eq!(v.std_error, 0.0);
            assert!(v.survival_fraction > 0.0);
        }
        // Without the control variate κ = 0 is a pure survival estimate.
        let plain = estimate_trace_mean(&d, 0.0, 0.01, &cfg, None).unwrap();
        assert_eq!(plain.correction, 0.0);
        assert_relative_eq!(plain.value, plain.survival_fraction / (2.0 * PI * 0.01), max_relative = 1e-12);
    }

    #[test]
    fn prefactor_factorization() {
        let d = PlanarDomain::unit_square();
        let cfg = small_cfg(100);
        for target in [MomentTarget::TraceMean, MomentTarget::MassMean, MomentTarget::TraceVar] {
            let e = estimate(target, &d, 1.0, 0.01, &cfg, None).unwrap();
            assert_eq!(e.prefactor, moment_prefactor(1.0, 0.01, target.order(), target.path_kind()));
            assert_eq!(e.value, e.prefactor * e.integral);
            assert!(e.std_error >= 0.0);
        }
    }

    #[test]
    fn survival_factor_bounded_and_mass_below_area() {
        let d = PlanarDomain::unit_square();
        let cfg = small_cfg(300);
        let e = estimate_mass_mean(&d, 0.0, 0.01, &cfg, None).unwrap();
        assert!(e.survival_fraction <= 1.0);
        assert!(e.value <= e.prefactor * d.area());
    }

    #[test]
    fn deterministic_across_pools() {
        let d = PlanarDomain::unit_square();
        let cfg = small_cfg(64);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_trace_variance(&d, 1.0, 0.01, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn kappa_runs_share_paths() {
        let d = PlanarDomain::unit_square();
        let cfg = FkConfig { control_variate: false, ..small_cfg(100) };
        let a = estimate_trace_mean(&d, 0.0, 0.01, &cfg, None).unwrap();
        let b = estimate_trace_mean(&d, 0.5, 0.01, &cfg, None).unwrap();
        assert_eq!(a.survival_fraction, b.survival_fraction);
    }
}
