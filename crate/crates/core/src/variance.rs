//! Standard errors and intervals: plain bootstrap for complete cases,
//! MI-Boot (impute, bootstrap each completed dataset, Rubin's rules) and
//! Boot-MI (bootstrap, impute each resample, one-way ANOVA moments).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CellTable, Dataset};
use crate::impute::{complete_cases, impute, ImputeError, MethodKind, MissingMethod};
use crate::math::{mean_var, sqrt};
use crate::mediation::{AnalysisSpec, EstimatorKind, MediationError};
use crate::rng::{SimRng, StreamSeed};

/// Normal quantile for 95% Wald intervals.
pub const Z_95: f64 = 1.959963984540054;
/// Fresh resamples tried for a failing bootstrap replicate before it is skipped.
pub const MAX_REDRAWS: usize = 10;
/// Largest tolerated fraction of skipped bootstrap replicates.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VarianceError {
    #[error("need at least 2 {what}, got {got}")]
    TooFew { what: &'static str, got: usize },
    #[error("{skipped} of {b} bootstrap replicates failed after redraws (last error: {last})")]
    TooManyFailures { skipped: usize, b: usize, last: String },
    #[error("{approach} does not apply to {method}")]
    InvalidApproach { approach: VarianceApproach, method: MethodKind },
    #[error("length mismatch: {0} estimates, {1} variances")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Mediation(#[from] MediationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    Indirect,
    Direct,
    Total,
}

impl Estimand {
    pub const ALL: [Estimand; 3] = [Estimand::Indirect, Estimand::Direct, Estimand::Total];

    pub fn name(self) -> &'static str {
        match self {
            Estimand::Indirect => "indirect",
            Estimand::Direct => "direct",
            Estimand::Total => "total",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Estimand::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| format!("unknown estimand '{s}'"))
    }
}

/// How standard errors are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceApproach {
    /// Bootstrap of the complete cases.
    Boot,
    MiBoot,
    BootMi,
}

impl VarianceApproach {
    pub fn name(self) -> &'static str {
        match self {
            VarianceApproach::Boot => "boot",
            VarianceApproach::MiBoot => "miboot",
            VarianceApproach::BootMi => "bootmi",
        }
    }

    pub fn applies_to(self, method: MethodKind) -> bool {
        (self == VarianceApproach::Boot) != method.is_imputation()
    }
}

impl fmt::Display for VarianceApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VarianceApproach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "boot" => Ok(VarianceApproach::Boot),
            "miboot" | "mi-boot" => Ok(VarianceApproach::MiBoot),
            "bootmi" | "boot-mi" => Ok(VarianceApproach::BootMi),
            _ => Err(format!("unknown variance approach '{s}' (expected miboot or bootmi)")),
        }
    }
}

/// Variance components behind a pooled standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Components {
    /// `se^2 = variance`.
    Bootstrap { variance: f64, b: usize },
    /// `se^2 = within + (1 + 1/m) between`.
    Rubin { within: f64, between: f64, m: usize },
    /// `se^2 = (1 + 1/b) sigma2_inf + sigma2_wb / (b m)`.
    BootMi { sigma2_inf: f64, sigma2_wb: f64, msb: f64, msw: f64, b: usize, m: usize },
}

impl Components {
    pub fn variance(&self) -> f64 {
        match *self {
            Components::Bootstrap { variance, .. } => variance,
            Components::Rubin { within, between, m } => within + (1.0 + 1.0 / m as f64) * between,
            Components::BootMi { sigma2_inf, sigma2_wb, b, m, .. } => {
                (1.0 + 1.0 / b as f64) * sigma2_inf + sigma2_wb / (b * m) as f64
            }
        }
    }
}

/// Point estimate, standard error and Wald interval for one estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledResult {
    pub estimand: Estimand,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub components: Components,
    /// Bootstrap replicates skipped after exhausting redraws.
    pub failed: usize,
}

impl PooledResult {
    pub fn new(estimand: Estimand, point: f64, components: Components, failed: usize) -> Self {
        let se = sqrt(components.variance().max(0.0));
        PooledResult { estimand, point, se, ci_low: point - Z_95 * se, ci_high: point + Z_95 * se, components, failed }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Bootstrap replicate statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BootReplicates {
    /// One statistic vector per successful replicate.
    pub estimates: Vec<Vec<f64>>,
    pub skipped: usize,
    pub redraws: usize,
}

impl BootReplicates {
    /// Sample variance of each statistic.
    pub fn variances(&self) -> Vec<f64> {
        let k = self.estimates.first().map_or(0, |e| e.len());
        (0..k)
            .map(|j| {
                let col: Vec<f64> = self.estimates.iter().map(|e| e[j]).collect();
                mean_var(&col).1
            })
            .collect()
    }
}

fn check_skipped(skipped: usize, b: usize, last: Option<String>) -> Result<(), VarianceError> {
    if skipped as f64 > MAX_SKIPPED_FRACTION * b as f64 || b - skipped < 2 {
        return Err(VarianceError::TooManyFailures { skipped, b, last: last.unwrap_or_default() });
    }
    Ok(())
}

/// Nonparametric bootstrap of a statistic of a cell table.
///
/// Replicate `i` draws from its own substream; a failing replicate is redrawn
/// up to [`MAX_REDRAWS`] times and then skipped.
pub fn boot_variance<R, F, E>(table: &CellTable, mut estimator: F, b: usize, rng: &mut R) -> Result<BootReplicates, VarianceError>
where
    R: Rng + ?Sized,
    F: FnMut(&CellTable, &mut SimRng) -> Result<Vec<f64>, E>,
    E: fmt::Display,
{
    if b < 2 {
        return Err(VarianceError::TooFew { what: "bootstrap samples", got: b });
    }
    let seed = StreamSeed::split(rng);
    let n = table.total() as u64;
    let mut out = BootReplicates { estimates: Vec::with_capacity(b), skipped: 0, redraws: 0 };
    let mut last = None;
    for i in 0..b {
        let mut stream = seed.stream(i as u64);
        let mut ok = false;
        for attempt in 0..=MAX_REDRAWS {
            let sample = table.resample(n, &mut stream);
            match estimator(&sample, &mut stream) {
                Ok(v) => {
                    out.estimates.push(v);
                    out.redraws += attempt;
                    ok = true;
                    break;
                }
                Err(e) => last = Some(e.to_string()),
            }
        }
        if !ok {
            out.skipped += 1;
            out.redraws += MAX_REDRAWS;
        }
    }
    check_skipped(out.skipped, b, last)?;
    Ok(out)
}

/// Rubin's rules for one estimand.
pub fn rubin_pool(estimand: Estimand, estimates: &[f64], variances: &[f64]) -> Result<PooledResult, VarianceError> {
    if estimates.len() != variances.len() {
        return Err(VarianceError::LengthMismatch(estimates.len(), variances.len()));
    }
    let m = estimates.len();
    if m < 2 {
        return Err(VarianceError::TooFew { what: "imputations", got: m });
    }
    let (point, between) = mean_var(estimates);
    let within = variances.iter().sum::<f64>() / m as f64;
    Ok(PooledResult::new(estimand, point, Components::Rubin { within, between, m }, 0))
}

/// One-way ANOVA over `groups` of equal size `m` (bootstrap samples ×
/// imputations). Returns the grand mean and the Boot-MI components.
pub fn boot_mi_anova(groups: &[Vec<f64>]) -> Result<(f64, Components), VarianceError> {
    let b = groups.len();
    if b < 2 {
        return Err(VarianceError::TooFew { what: "bootstrap samples", got: b });
    }
    let m = groups[0].len();
    if m < 2 {
        return Err(VarianceError::TooFew { what: "imputations per bootstrap sample", got: m });
    }
    if let Some(g) = groups.iter().find(|g| g.len() != m) {
        return Err(VarianceError::LengthMismatch(m, g.len()));
    }
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / m as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let ssb: f64 = means.iter().map(|mb| (mb - grand) * (mb - grand)).sum::<f64>() * m as f64;
    let ssw: f64 = groups.iter().zip(&means).map(|(g, mb)| g.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>()).sum();
    let msb = ssb / (b - 1) as f64;
    let msw = ssw / (b * (m - 1)) as f64;
    let sigma2_inf = ((msb - msw) / m as f64).max(0.0);
    Ok((grand, Components::BootMi { sigma2_inf, sigma2_wb: msw, msb, msw, b, m }))
}

/// Replicate counts for each approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceSettings {
    /// Bootstrap samples for complete-case analysis.
    pub boot_b: usize,
    pub miboot_m: usize,
    pub miboot_b: usize,
    pub bootmi_b: usize,
    pub bootmi_m: usize,
}

impl Default for VarianceSettings {
    fn default() -> Self {
        VarianceSettings { boot_b: 200, miboot_m: 50, miboot_b: 200, bootmi_b: 200, bootmi_m: 2 }
    }
}

/// Diagnostics gathered while producing one set of pooled results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub skipped: usize,
    pub redraws: usize,
    pub fallbacks: u64,
    pub restarts: u64,
}

/// Pooled results for indirect, direct and total effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub results: [PooledResult; 3],
    pub diagnostics: Diagnostics,
}

impl Analysis {
    pub fn get(&self, e: Estimand) -> &PooledResult {
        &self.results[e.index()]
    }
}

fn effects(
    table: &CellTable,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    rng: &mut SimRng,
) -> Result<Vec<f64>, MediationError> {
    Ok(estimator.estimate(table, spec, rng)?.effects().to_vec())
}

fn per_estimand(f: impl Fn(Estimand) -> Result<PooledResult, VarianceError>) -> Result<[PooledResult; 3], VarianceError> {
    Ok([f(Estimand::Indirect)?, f(Estimand::Direct)?, f(Estimand::Total)?])
}

/// Complete-case analysis with a bootstrap of the complete cases.
pub fn cca_boot<R: Rng + ?Sized>(
    data: &Dataset,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    b: usize,
    rng: &mut R,
) -> Result<Analysis, VarianceError> {
    let seed = StreamSeed::split(rng);
    let table = CellTable::from_dataset(&complete_cases(data)?).map_err(ImputeError::from)?;
    let point = effects(&table, estimator, spec, &mut seed.stream(0))?;
    let reps = boot_variance(&table, |t, r| effects(t, estimator, spec, r), b, &mut seed.stream(1))?;
    let var = reps.variances();
    let results = per_estimand(|e| {
        Ok(PooledResult::new(e, point[e.index()], Components::Bootstrap { variance: var[e.index()], b }, reps.skipped))
    })?;
    Ok(Analysis { results, diagnostics: Diagnostics { skipped: reps.skipped, redraws: reps.redraws, ..Default::default() } })
}

/// MI-Boot: impute `m` times, bootstrap each completed dataset `b` times,
/// pool with Rubin's rules.
#[allow(clippy::too_many_arguments)]
pub fn mi_boot<R: Rng + ?Sized>(
    data: &Dataset,
    method: &MissingMethod,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    m: usize,
    b: usize,
    rng: &mut R,
) -> Result<Analysis, VarianceError> {
    if m < 2 {
        return Err(VarianceError::TooFew { what: "imputations", got: m });
    }
    let seed = StreamSeed::split(rng);
    let method = method.clone().with_m(m);
    let set = impute(data, &method, estimator, &spec.outcome, &mut seed.stream(0))?;
    let mut diag = Diagnostics { fallbacks: set.fallbacks, restarts: set.restarts, ..Default::default() };
    let mut points = Vec::with_capacity(m);
    let mut vars = Vec::with_capacity(m);
    for j in 0..m {
        let table = set.table(j);
        points.push(effects(&table, estimator, spec, &mut seed.child(1).stream(j as u64))?);
        let reps =
            boot_variance(&table, |t, r| effects(t, estimator, spec, r), b, &mut seed.child(2).stream(j as u64))?;
        diag.skipped += reps.skipped;
        diag.redraws += reps.redraws;
        vars.push(reps.variances());
    }
    let results = per_estimand(|e| {
        let est: Vec<f64> = points.iter().map(|p| p[e.index()]).collect();
        let var: Vec<f64> = vars.iter().map(|v| v[e.index()]).collect();
        let mut r = rubin_pool(e, &est, &var)?;
        r.failed = diag.skipped;
        Ok(r)
    })?;
    Ok(Analysis { results, diagnostics: diag })
}

fn boot_mi_replicate(
    sample: &Dataset,
    method: &MissingMethod,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    seed: StreamSeed,
) -> Result<([Vec<f64>; 3], u64), VarianceError> {
    let set = impute(sample, method, estimator, &spec.outcome, &mut seed.stream(0))?;
    let mut g: [Vec<f64>; 3] = Default::default();
    for j in 0..set.m() {
        let e = effects(&set.table(j), estimator, spec, &mut seed.child(1).stream(j as u64))?;
        for (k, gk) in g.iter_mut().enumerate() {
            gk.push(e[k]);
        }
    }
    Ok((g, set.fallbacks))
}

/// Boot-MI: draw `b` bootstrap samples of the incomplete data, impute each
/// `m` times, pool by one-way ANOVA.
#[allow(clippy::too_many_arguments)]
pub fn boot_mi<R: Rng + ?Sized>(
    data: &Dataset,
    method: &MissingMethod,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    b: usize,
    m: usize,
    rng: &mut R,
) -> Result<Analysis, VarianceError> {
    if b < 2 {
        return Err(VarianceError::TooFew { what: "bootstrap samples", got: b });
    }
    if m < 2 {
        return Err(VarianceError::TooFew { what: "imputations per bootstrap sample", got: m });
    }
    let seed = StreamSeed::split(rng);
    let method = method.clone().with_m(m);
    let n = data.n();
    let mut groups: Vec<[Vec<f64>; 3]> = Vec::with_capacity(b);
    let mut diag = Diagnostics::default();
    let mut last = None;
    let mut idx = Vec::with_capacity(n);
    for i in 0..b {
        let mut stream = seed.stream(i as u64);
        let mut done = false;
        for attempt in 0..=MAX_REDRAWS {
            idx.clear();
            idx.extend((0..n).map(|_| stream.random_range(0..n)));
            let sample = data.select(&idx);
            let s = StreamSeed::split(&mut stream);
            match boot_mi_replicate(&sample, &method, estimator, spec, s) {
                Ok((g, fb)) => {
                    groups.push(g);
                    diag.fallbacks += fb;
                    diag.redraws += attempt;
                    done = true;
                    break;
                }
                Err(e) => last = Some(e.to_string()),
            }
        }
        if !done {
            diag.skipped += 1;
            diag.redraws += MAX_REDRAWS;
        }
    }
    check_skipped(diag.skipped, b, last)?;
    let results = per_estimand(|e| {
        let g: Vec<Vec<f64>> = groups.iter().map(|g| g[e.index()].clone()).collect();
        let (point, comp) = boot_mi_anova(&g)?;
        Ok(PooledResult::new(e, point, comp, diag.skipped))
    })?;
    Ok(Analysis { results, diagnostics: diag })
}

/// Point estimates without standard errors: the complete-case estimate, or
/// the mean over `m` imputations.
pub fn point_estimates<R: Rng + ?Sized>(
    data: &Dataset,
    method: &MissingMethod,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    m: usize,
    rng: &mut R,
) -> Result<[f64; 3], VarianceError> {
    let seed = StreamSeed::split(rng);
    if !method.kind.is_imputation() {
        let table = CellTable::from_dataset(&complete_cases(data)?).map_err(ImputeError::from)?;
        let e = effects(&table, estimator, spec, &mut seed.stream(0))?;
        return Ok([e[0], e[1], e[2]]);
    }
    let set = impute(data, &method.clone().with_m(m), estimator, &spec.outcome, &mut seed.stream(0))?;
    let mut acc = [0.0; 3];
    for j in 0..m {
        let e = effects(&set.table(j), estimator, spec, &mut seed.child(1).stream(j as u64))?;
        for k in 0..3 {
            acc[k] += e[k] / m as f64;
        }
    }
    Ok(acc)
}

/// Dispatch on the variance approach.
pub fn analyze<R: Rng + ?Sized>(
    data: &Dataset,
    method: &MissingMethod,
    estimator: EstimatorKind,
    spec: &AnalysisSpec,
    approach: VarianceApproach,
    settings: &VarianceSettings,
    rng: &mut R,
) -> Result<Analysis, VarianceError> {
    if !approach.applies_to(method.kind) {
        return Err(VarianceError::InvalidApproach { approach, method: method.kind });
    }
    if !method.kind.supports(estimator) {
        return Err(ImputeError::InvalidPairing { method: method.kind, estimator }.into());
    }
    match approach {
        VarianceApproach::Boot => cca_boot(data, estimator, spec, settings.boot_b, rng),
        VarianceApproach::MiBoot => mi_boot(data, method, estimator, spec, settings.miboot_m, settings.miboot_b, rng),
        VarianceApproach::BootMi => boot_mi(data, method, estimator, spec, settings.bootmi_b, settings.bootmi_m, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rubin_hand_values() {
        let r = rubin_pool(Estimand::Indirect, &[0.05, 0.05], &[0.01, 0.01]).unwrap();
        assert_eq!(r.point, 0.05);
        assert!((r.se * r.se - 0.01).abs() < 1e-15);
        let r = rubin_pool(Estimand::Indirect, &[0.04, 0.06], &[0.01, 0.01]).unwrap();
        match r.components {
            Components::Rubin { within, between, .. } => {
                assert!((within - 0.01).abs() < 1e-15);
                assert!((between - 0.0002).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        assert!((r.se * r.se - 0.0103).abs() < 1e-12);
        assert!(rubin_pool(Estimand::Direct, &[0.1], &[0.1]).is_err());
    }

    #[test]
    fn anova_hand_example() {
        let (grand, c) = boot_mi_anova(&[vec![1.0, 3.0], vec![5.0, 7.0]]).unwrap();
        assert_eq!(grand, 4.0);
        assert_eq!(c, Components::BootMi { sigma2_inf: 7.0, sigma2_wb: 2.0, msb: 16.0, msw: 2.0, b: 2, m: 2 });
        assert_eq!(c.variance(), 11.0);
    }

    #[test]
    fn anova_truncates_negative_between_component() {
        let (_, c) = boot_mi_anova(&[vec![0.0, 2.0], vec![0.5, 1.5]]).unwrap();
        let Components::BootMi { sigma2_inf, msw, .. } = c else { unreachable!() };
        assert_eq!(sigma2_inf, 0.0);
        assert!((c.variance() - msw / 4.0).abs() < 1e-15);
    }

    #[test]
    fn constant_estimator_has_zero_bootstrap_variance() {
        let t = CellTable::from_rows(&[0, 2, 4, 8, 16]);
        let reps = boot_variance(&t, |_, _| Ok::<_, &str>(vec![3.0]), 50, &mut StreamSeed(1).stream(0)).unwrap();
        assert_eq!(reps.variances(), vec![0.0]);
    }

    #[test]
    fn failing_estimator_is_an_error() {
        let t = CellTable::from_rows(&[0, 2]);
        let err = boot_variance(&t, |_, _| Err::<Vec<f64>, _>("boom"), 10, &mut StreamSeed(1).stream(0)).unwrap_err();
        assert!(matches!(err, VarianceError::TooManyFailures { skipped: 10, b: 10, .. }));
    }

    #[test]
    fn approach_applicability() {
        assert!(VarianceApproach::Boot.applies_to(MethodKind::Cca));
        assert!(!VarianceApproach::MiBoot.applies_to(MethodKind::Cca));
        assert!(VarianceApproach::BootMi.applies_to(MethodKind::Smcfcs));
        assert!(!VarianceApproach::Boot.applies_to(MethodKind::NoInt));
    }

    #[test]
    fn interval_contains_point() {
        let r = PooledResult::new(Estimand::Total, 0.2, Components::Bootstrap { variance: 0.0004, b: 10 }, 0);
        assert!((r.se - 0.02).abs() < 1e-15);
        assert!(r.ci_low < 0.2 && r.ci_high > 0.2 && r.covers(0.2));
    }
}
