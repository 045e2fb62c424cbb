//! Replications, truth and performance metrics of the simulation study.
//!
//! Everything here is single-threaded and a pure function of its inputs; the
//! std companion crate spreads replications over threads.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::CellTable;
use crate::datagen::{
    calibrate_intercepts, generate_complete, impose_missingness, DatagenError, DgmParams, MdagLabel, MdagSpec,
    MISSINGNESS_TARGETS,
};
use crate::impute::{complete_cases, MethodKind, MissingMethod, DEFAULT_CYCLES};
use crate::math::{mean_var, sqrt};
use crate::mediation::{dr_gcomp, AnalysisSpec, EstimatorKind, MediationError};
use crate::rng::StreamSeed;
use crate::variance::{analyze, point_estimates, Estimand, VarianceApproach, VarianceSettings};

pub const TRUTH_N: usize = 1_000_000;
pub const SCHEMA_VERSION: u32 = 1;
/// Largest fraction of failed replications tolerated per method.
pub const MAX_FAILED_REPS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("{method}/{approach}: {failed} of {reps} replications failed")]
    TooManyFailures { method: MethodKind, approach: String, failed: usize, reps: usize },
    #[error("{0}: fewer than 2 successful replications")]
    InsufficientReps(String),
    #[error("no results to summarize")]
    Empty,
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Mediation(#[from] MediationError),
}

/// True effects estimated on one large complete sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValues {
    pub indirect: f64,
    pub direct: f64,
    pub total: f64,
    pub n: usize,
    pub seed: u64,
}

impl TruthValues {
    pub fn get(&self, e: Estimand) -> f64 {
        match e {
            Estimand::Indirect => self.indirect,
            Estimand::Direct => self.direct,
            Estimand::Total => self.total,
        }
    }
}

/// Correctly specified weighting g-computation on `n` complete rows.
pub fn estimate_truth(params: &DgmParams, n: usize, seed: u64) -> Result<TruthValues, SimError> {
    params.validate()?;
    let data = generate_complete(n, params, &mut StreamSeed(seed).stream(0))?;
    let table = CellTable::from_dataset(&data).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let est = dr_gcomp(&table, &AnalysisSpec::default())?;
    Ok(TruthValues { indirect: est.indirect, direct: est.direct, total: est.total, n, seed })
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub mdag: MdagLabel,
    pub n: usize,
    pub reps: usize,
    pub methods: Vec<MethodKind>,
    pub estimator: EstimatorKind,
    /// Variance approaches for the MI methods; complete-case analysis is
    /// always bootstrapped. Empty means point estimates only.
    pub approaches: Vec<VarianceApproach>,
    pub variance: VarianceSettings,
    pub cycles: usize,
    pub mc_draws: usize,
    pub base_seed: u64,
    /// Worker threads; 0 lets the runner decide.
    pub threads: usize,
    /// Recalibrate the indicator intercepts before running.
    pub calibrate: bool,
    pub calibration_n: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mdag: MdagLabel::A,
            n: 2000,
            reps: 500,
            methods: MethodKind::for_estimator(EstimatorKind::Dr),
            estimator: EstimatorKind::Dr,
            approaches: alloc::vec![VarianceApproach::MiBoot, VarianceApproach::BootMi],
            variance: VarianceSettings::default(),
            cycles: DEFAULT_CYCLES,
            mc_draws: crate::mediation::DEFAULT_MC_DRAWS,
            base_seed: 20_240_101,
            threads: 0,
            calibrate: false,
            calibration_n: 200_000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if let Some(m) = self.methods.iter().find(|m| !m.supports(self.estimator)) {
            return bad(format!("{m} cannot be used with the {} estimator", self.estimator));
        }
        if self.approaches.contains(&VarianceApproach::Boot) {
            return bad("'boot' is implied for complete-case analysis; list miboot and/or bootmi".into());
        }
        if self.cycles == 0 || self.mc_draws == 0 {
            return bad("cycles and mc_draws must be positive".into());
        }
        let v = &self.variance;
        if v.boot_b < 2 || v.miboot_b < 2 || v.bootmi_b < 2 || v.miboot_m < 2 || v.bootmi_m < 2 {
            return bad("bootstrap and imputation counts must be at least 2".into());
        }
        Ok(())
    }

    pub fn analysis_spec(&self) -> AnalysisSpec {
        AnalysisSpec { mc_draws: self.mc_draws, ..AnalysisSpec::default() }
    }

    /// The mechanism used by the scenario, recalibrated if requested.
    pub fn mdag_spec(&self, params: &DgmParams) -> Result<MdagSpec, SimError> {
        let preset = MdagSpec::preset(self.mdag);
        if !self.calibrate {
            return Ok(preset);
        }
        let mut rng = StreamSeed(self.base_seed).child(u64::MAX).stream(0);
        Ok(calibrate_intercepts(&preset, params, &MISSINGNESS_TARGETS, self.calibration_n, &mut rng)?)
    }

    /// `(method, approach)` cells analyzed in every replication, in output order.
    pub fn cells(&self) -> Vec<(MethodKind, Option<VarianceApproach>)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if self.approaches.is_empty() {
                out.push((m, None));
            } else if !m.is_imputation() {
                out.push((m, Some(VarianceApproach::Boot)));
            } else {
                out.extend(self.approaches.iter().map(|&a| (m, Some(a))));
            }
        }
        out
    }
}

/// One analysis result of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub rep: usize,
    pub mdag: MdagLabel,
    pub estimator: EstimatorKind,
    pub method: MethodKind,
    /// `None` for point-estimate-only runs.
    pub approach: Option<VarianceApproach>,
    pub estimand: Estimand,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Rows entering the analysis before imputation.
    pub n_rows: usize,
    pub skipped_bootstrap: usize,
    pub fallbacks: u64,
    pub error: Option<String>,
}

impl RawRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.estimate.is_none_or(|e| !e.is_finite())
    }
}

fn method_code(m: MethodKind) -> u64 {
    MethodKind::ALL.iter().position(|&k| k == m).unwrap() as u64
}

fn approach_code(a: Option<VarianceApproach>) -> u64 {
    match a {
        None => 0,
        Some(VarianceApproach::Boot) => 1,
        Some(VarianceApproach::MiBoot) => 2,
        Some(VarianceApproach::BootMi) => 3,
    }
}

/// Analyze replication `rep` with every configured method.
///
/// The replication's data come from stream `(base_seed, rep)`, and each
/// `(method, approach)` cell has its own child stream, so results do not
/// depend on which other cells are configured or on scheduling.
pub fn run_replication(
    config: &ScenarioConfig,
    params: &DgmParams,
    mdag: &MdagSpec,
    rep: usize,
) -> Result<Vec<RawRecord>, SimError> {
    let seed = StreamSeed(config.base_seed).child(rep as u64);
    let complete = generate_complete(config.n, params, &mut seed.stream(0))?;
    let data = impose_missingness(&complete, mdag, &mut seed.stream(1))?;
    let spec = config.analysis_spec();
    let n_cc = complete_cases(&data).map(|d| d.n()).unwrap_or(0);
    let mut out = Vec::new();
    for (method, approach) in config.cells() {
        let mm = MissingMethod::new(method).with_cycles(config.cycles);
        let mut rng = seed.path(&[2, method_code(method), approach_code(approach)]).stream(0);
        let n_rows = if method.is_imputation() { data.n() } else { n_cc };
        let base = RawRecord {
            rep,
            mdag: config.mdag,
            estimator: config.estimator,
            method,
            approach,
            estimand: Estimand::Indirect,
            estimate: None,
            se: None,
            ci_low: None,
            ci_high: None,
            n_rows,
            skipped_bootstrap: 0,
            fallbacks: 0,
            error: None,
        };
        match approach {
            None => {
                let res = point_estimates(&data, &mm, config.estimator, &spec, config.variance.miboot_m, &mut rng);
                for e in Estimand::ALL {
                    let mut r = RawRecord { estimand: e, ..base.clone() };
                    match &res {
                        Ok(p) => r.estimate = Some(p[e.index()]),
                        Err(err) => r.error = Some(err.to_string()),
                    }
                    out.push(r);
                }
            }
            Some(a) => {
                let res = analyze(&data, &mm, config.estimator, &spec, a, &config.variance, &mut rng);
                for e in Estimand::ALL {
                    let mut r = RawRecord { estimand: e, ..base.clone() };
                    match &res {
                        Ok(an) => {
                            let p = an.get(e);
                            r.estimate = Some(p.point);
                            r.se = Some(p.se);
                            r.ci_low = Some(p.ci_low);
                            r.ci_high = Some(p.ci_high);
                            r.skipped_bootstrap = an.diagnostics.skipped;
                            r.fallbacks = an.diagnostics.fallbacks;
                        }
                        Err(err) => r.error = Some(err.to_string()),
                    }
                    out.push(r);
                }
            }
        }
    }
    Ok(out)
}

/// Deterministic order of raw records.
pub fn sort_records(records: &mut [RawRecord]) {
    records.sort_by(|a, b| {
        (a.mdag, a.estimator, a.rep, a.method, a.approach, a.estimand).cmp(&(
            b.mdag,
            b.estimator,
            b.rep,
            b.method,
            b.approach,
            b.estimand,
        ))
    });
}

/// Error if any `(method, approach)` failed in more than 5% of replications.
pub fn check_failures(records: &[RawRecord], reps: usize) -> Result<(), SimError> {
    let mut failed: BTreeMap<(MethodKind, Option<VarianceApproach>), usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.estimand == Estimand::Indirect) {
        *failed.entry((r.method, r.approach)).or_default() += r.failed() as usize;
    }
    for ((method, approach), f) in failed {
        if f as f64 > MAX_FAILED_REPS * reps as f64 {
            let approach = approach.map_or("point".to_string(), |a| a.to_string());
            return Err(SimError::TooManyFailures { method, approach, failed: f, reps });
        }
    }
    Ok(())
}

/// Performance of one `(estimand, method, approach)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mdag: MdagLabel,
    pub estimator: EstimatorKind,
    pub estimand: Estimand,
    pub method: MethodKind,
    pub approach: Option<VarianceApproach>,
    pub truth: f64,
    pub reps: usize,
    pub failed: usize,
    pub mean: f64,
    pub bias: f64,
    /// Percent.
    pub rel_bias: f64,
    pub emp_se: f64,
    pub model_se: Option<f64>,
    /// Percent error of the mean model SE relative to the empirical SE.
    pub se_error: Option<f64>,
    /// Percent.
    pub coverage: Option<f64>,
    pub mcse_bias: f64,
    pub mcse_rel_bias: f64,
    pub mcse_emp_se: f64,
    pub mcse_se_error: Option<f64>,
    pub mcse_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    pub schema_version: u32,
    pub truth: TruthValues,
    pub rows: Vec<MetricRow>,
}

impl PerformanceMetrics {
    pub fn find(&self, estimand: Estimand, method: MethodKind, approach: Option<VarianceApproach>) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.estimand == estimand && r.method == method && r.approach == approach)
    }
}

type CellKey = (MdagLabel, EstimatorKind, Estimand, MethodKind, Option<VarianceApproach>);

/// Aggregate raw records into performance metrics over successful replications.
pub fn compute_metrics(records: &[RawRecord], truth: &TruthValues) -> Result<PerformanceMetrics, SimError> {
    if records.is_empty() {
        return Err(SimError::Empty);
    }
    let mut cells: BTreeMap<CellKey, Vec<&RawRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.mdag, r.estimator, r.estimand, r.method, r.approach)).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(cells.len());
    for ((mdag, estimator, estimand, method, approach), mut recs) in cells {
        recs.sort_by_key(|r| r.rep);
        let ok: Vec<&RawRecord> = recs.iter().copied().filter(|r| !r.failed()).collect();
        let failed = recs.len() - ok.len();
        let label = format!("{mdag}/{estimator}/{method}/{}/{estimand}", approach.map_or("point", |a| a.name()));
        if ok.len() < 2 {
            return Err(SimError::InsufficientReps(label));
        }
        let truth_v = truth.get(estimand);
        let est: Vec<f64> = ok.iter().map(|r| r.estimate.unwrap()).collect();
        let r = est.len() as f64;
        let (mean, var) = mean_var(&est);
        let emp_se = sqrt(var);
        let bias = mean - truth_v;
        let mcse_bias = emp_se / sqrt(r);
        let ses: Option<Vec<f64>> = ok.iter().map(|r| r.se).collect();
        let (model_se, se_error, mcse_se_error, coverage, mcse_coverage) = match ses {
            Some(ses) => {
                let model_se = ses.iter().sum::<f64>() / r;
                let se_error = 100.0 * (model_se / emp_se - 1.0);
                // Morris et al.: MCSE of the relative error in model SE
                let v2: Vec<f64> = ses.iter().map(|s| s * s).collect();
                let (m2, var2) = mean_var(&v2);
                // m2 is the mean squared model SE, so m2^2 is its RMS to the fourth
                let mcse = 100.0 * (model_se / emp_se) * sqrt(var2 / (4.0 * r * m2 * m2) + 1.0 / (2.0 * (r - 1.0)));
                let hits = ok
                    .iter()
                    .filter(|r| matches!((r.ci_low, r.ci_high), (Some(l), Some(h)) if l <= truth_v && truth_v <= h))
                    .count() as f64;
                let c = hits / r;
                (Some(model_se), Some(se_error), Some(mcse), Some(100.0 * c), Some(100.0 * sqrt(c * (1.0 - c) / r)))
            }
            None => (None, None, None, None, None),
        };
        rows.push(MetricRow {
            mdag,
            estimator,
            estimand,
            method,
            approach,
            truth: truth_v,
            reps: ok.len(),
            failed,
            mean,
            bias,
            rel_bias: 100.0 * bias / truth_v,
            emp_se,
            model_se,
            se_error,
            coverage,
            mcse_bias,
            mcse_rel_bias: 100.0 * mcse_bias / truth_v.abs(),
            mcse_emp_se: emp_se / sqrt(2.0 * (r - 1.0)),
            mcse_se_error,
            mcse_coverage,
        });
    }
    Ok(PerformanceMetrics { schema_version: SCHEMA_VERSION, truth: *truth, rows })
}
