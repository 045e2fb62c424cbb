//! Missing-data handlers: complete cases, chained-equation MI with the
//! predictor-set strategies, and substantive-model-compatible FCS.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::data::{CellTable, DataError, Dataset, Var};
use crate::glm::{bernoulli, draw_coefficients, FittedGlm, GlmError, ModelFormula, Tally, Term};
use crate::math::expit;
use crate::mediation::EstimatorKind;
use crate::rng::StreamSeed;

pub const DEFAULT_CYCLES: usize = 10;
pub const DEFAULT_IMPUTATIONS: usize = 50;
/// Chain restarts allowed after a univariate fit fails before giving up.
pub const MAX_RESTARTS: usize = 5;
/// Proposals per cell before SMC-FCS falls back to the proposal draw.
pub const MAX_PROPOSALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImputeError {
    #[error("{method} cannot be combined with the {estimator} estimator")]
    InvalidPairing { method: MethodKind, estimator: EstimatorKind },
    #[error("{0} does not impute")]
    NotImputation(MethodKind),
    #[error("no complete cases")]
    NoCompleteCases,
    #[error("every value of {0} is missing")]
    AllMissing(Var),
    #[error("{0} has missing values but no imputation model")]
    Unimputable(Var),
    #[error("imputation model for {var} failed in cycle {cycle} after {restarts} restarts: {source}")]
    NotConverged { var: Var, cycle: usize, restarts: usize, source: GlmError },
    #[error("invalid imputation setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Glm(#[from] GlmError),
}

/// Missing-data strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    Cca,
    NoZY,
    NoY,
    NoInt,
    XInt,
    ZInt,
    YInt,
    HigherInt,
    Smcfcs,
}

impl MethodKind {
    pub const ALL: [MethodKind; 9] = [
        MethodKind::Cca,
        MethodKind::NoZY,
        MethodKind::NoY,
        MethodKind::NoInt,
        MethodKind::XInt,
        MethodKind::ZInt,
        MethodKind::YInt,
        MethodKind::HigherInt,
        MethodKind::Smcfcs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Cca => "cca",
            MethodKind::NoZY => "mi-nozy",
            MethodKind::NoY => "mi-noy",
            MethodKind::NoInt => "mi-noint",
            MethodKind::XInt => "mi-xint",
            MethodKind::ZInt => "mi-zint",
            MethodKind::YInt => "mi-yint",
            MethodKind::HigherInt => "mi-higherint",
            MethodKind::Smcfcs => "mi-smcfcs",
        }
    }

    pub fn is_imputation(self) -> bool {
        self != MethodKind::Cca
    }

    /// MI-Xint goes with the weighting estimator only, MI-Zint with the
    /// Monte Carlo estimator only.
    pub fn supports(self, estimator: EstimatorKind) -> bool {
        match self {
            MethodKind::XInt => estimator == EstimatorKind::Dr,
            MethodKind::ZInt => estimator == EstimatorKind::Mc,
            _ => true,
        }
    }

    /// All methods valid with `estimator`, in canonical order.
    pub fn for_estimator(estimator: EstimatorKind) -> Vec<MethodKind> {
        Self::ALL.iter().copied().filter(|m| m.supports(estimator)).collect()
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = ImputeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == lower)
            .ok_or_else(|| ImputeError::InvalidSetting(format!("unknown method '{s}'")))
    }
}

impl Serialize for MethodKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MethodKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A missing-data method with its MI settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingMethod {
    pub kind: MethodKind,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    /// Extra predictors for the C2 and C3 models.
    #[serde(default = "default_aux")]
    pub auxiliary: Vec<Var>,
}

fn default_m() -> usize {
    DEFAULT_IMPUTATIONS
}

fn default_cycles() -> usize {
    DEFAULT_CYCLES
}

fn default_aux() -> Vec<Var> {
    vec![Var::A]
}

impl MissingMethod {
    pub fn new(kind: MethodKind) -> Self {
        MissingMethod { kind, m: DEFAULT_IMPUTATIONS, cycles: DEFAULT_CYCLES, auxiliary: default_aux() }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_cycles(mut self, cycles: usize) -> Self {
        self.cycles = cycles;
        self
    }
}

/// One univariate imputation model per incomplete variable, in visit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationSpec {
    pub models: Vec<ModelFormula>,
}

impl ImputationSpec {
    pub fn visit_order(&self) -> Vec<Var> {
        self.models.iter().map(|m| m.response()).collect()
    }

    pub fn model(&self, var: Var) -> Option<&ModelFormula> {
        self.models.iter().find(|m| m.response() == var)
    }
}

impl fmt::Display for ImputationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.models {
            writeln!(f, "{m}")?;
        }
        Ok(())
    }
}

/// Rows whose analysis variables are all observed. Auxiliary missingness is
/// ignored.
pub fn complete_cases(data: &Dataset) -> Result<Dataset, ImputeError> {
    let mask = Var::ANALYSIS.iter().fold(0, |m, v| m | v.bit());
    let keep: Vec<usize> = (0..data.n()).filter(|&i| data.mask()[i] & mask == 0).collect();
    if keep.is_empty() {
        return Err(ImputeError::NoCompleteCases);
    }
    Ok(data.select(&keep))
}

fn main_effects(vars: &[Var]) -> Vec<Term> {
    vars.iter().map(|&v| Term::Main(v)).collect()
}

fn formula(response: Var, terms: Vec<Term>) -> ModelFormula {
    ModelFormula::new(response, terms).expect("imputation formulas are well formed")
}

/// Main-effect predictors of each strategy before the auxiliary rule.
fn base_predictors(kind: MethodKind, var: Var) -> Vec<Var> {
    let others = |pool: &[Var]| -> Vec<Var> { pool.iter().copied().filter(|&v| v != var).collect() };
    const CX: [Var; 4] = [Var::C1, Var::C2, Var::C3, Var::X];
    const CXZ: [Var; 5] = [Var::C1, Var::C2, Var::C3, Var::X, Var::Z];
    match kind {
        MethodKind::NoZY => others(&CX),
        MethodKind::NoY | MethodKind::Smcfcs => others(&CXZ),
        _ => others(&Var::ANALYSIS),
    }
}

fn extra_interactions(kind: MethodKind) -> Vec<Term> {
    let c12 = Term::interaction(Var::C1, Var::C2);
    let c13 = Term::interaction(Var::C1, Var::C3);
    let xz = Term::interaction(Var::X, Var::Z);
    match kind {
        MethodKind::XInt | MethodKind::ZInt => vec![c12, c13],
        MethodKind::YInt | MethodKind::HigherInt => vec![xz, c12, c13],
        _ => Vec::new(),
    }
}

/// Univariate imputation models for a strategy.
///
/// For SMC-FCS the result holds the covariate proposal models; the outcome
/// enters through the substantive model instead.
pub fn build_spec(method: &MissingMethod, estimator: EstimatorKind) -> Result<ImputationSpec, ImputeError> {
    let kind = method.kind;
    if !kind.is_imputation() {
        return Err(ImputeError::NotImputation(kind));
    }
    if !kind.supports(estimator) {
        return Err(ImputeError::InvalidPairing { method: kind, estimator });
    }
    let targets: &[Var] =
        if kind == MethodKind::Smcfcs { &[Var::C2, Var::C3, Var::X, Var::Z] } else { &Var::INCOMPLETE };
    let models = targets
        .iter()
        .map(|&var| {
            let mut preds = Vec::new();
            if var == Var::C2 || var == Var::C3 {
                preds.extend(method.auxiliary.iter().copied().filter(|&a| a != var));
            }
            preds.extend(base_predictors(kind, var));
            let mut terms = main_effects(&preds);
            terms.extend(extra_interactions(kind).into_iter().filter(|t| !t.involves(var)));
            formula(var, terms)
        })
        .collect();
    Ok(ImputationSpec { models })
}

/// Where an imputed set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `None` for hand-written specifications.
    pub method: Option<MethodKind>,
    pub seed: u64,
    pub cycles: usize,
}

/// `M` completed copies of one masked dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedSet {
    base: Dataset,
    completed: Vec<Vec<u32>>,
    pub provenance: Provenance,
    /// SMC-FCS cells that fell back to the proposal draw.
    pub fallbacks: u64,
    /// Chain restarts after failed univariate fits.
    pub restarts: u64,
}

impl ImputedSet {
    pub fn m(&self) -> usize {
        self.completed.len()
    }

    /// The masked input.
    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn rows(&self, j: usize) -> &[u32] {
        &self.completed[j]
    }

    pub fn dataset(&self, j: usize) -> Dataset {
        self.base.replace_rows(self.completed[j].clone())
    }

    pub fn table(&self, j: usize) -> CellTable {
        CellTable::from_rows(&self.completed[j])
    }

    pub fn tables(&self) -> Vec<CellTable> {
        (0..self.m()).map(|j| self.table(j)).collect()
    }
}

/// State of one imputation chain.
struct Chain<'a> {
    data: &'a Dataset,
    rows: Vec<u32>,
    /// Incomplete variables and their missing row indices, in visit order.
    targets: Vec<(Var, Vec<usize>)>,
    fallbacks: u64,
}

impl<'a> Chain<'a> {
    fn new(data: &'a Dataset, order: &[Var]) -> Result<Self, ImputeError> {
        let covered = order.iter().fold(0u32, |m, v| m | v.bit());
        let any_missing = data.mask().iter().fold(0u32, |m, r| m | r);
        if let Some(v) = data.vars().find(|v| any_missing & v.bit() != 0 && covered & v.bit() == 0) {
            return Err(ImputeError::Unimputable(v));
        }
        let mut targets = Vec::new();
        for &v in order {
            let idx: Vec<usize> = (0..data.n()).filter(|&i| data.mask()[i] & v.bit() != 0).collect();
            if idx.len() == data.n() {
                return Err(ImputeError::AllMissing(v));
            }
            if !idx.is_empty() {
                targets.push((v, idx));
            }
        }
        Ok(Chain { data, rows: data.rows().to_vec(), targets, fallbacks: 0 })
    }

    /// Fill every masked cell by a draw from the variable's observed margin.
    fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.rows.copy_from_slice(self.data.rows());
        for (v, idx) in &self.targets {
            let observed = self.data.n() - idx.len();
            let ones = (0..self.data.n())
                .filter(|&i| self.data.mask()[i] & v.bit() == 0 && v.of(self.data.rows()[i]))
                .count();
            let p = ones as f64 / observed as f64;
            for &i in idx {
                set(&mut self.rows[i], *v, bernoulli(p, rng));
            }
        }
    }

    fn fit(&self, f: &ModelFormula, observed_only: bool, start: Option<&[f64]>) -> Result<FittedGlm, GlmError> {
        let var = f.response();
        let mut tally = Tally::new(f);
        for (row, m) in self.rows.iter().zip(self.data.mask()) {
            if !observed_only || m & var.bit() == 0 {
                tally.add(*row, 1.0);
            }
        }
        tally.fit(start)?.ensure_converged()
    }
}

#[inline]
fn set(row: &mut u32, var: Var, value: bool) {
    if value {
        *row |= var.bit();
    } else {
        *row &= !var.bit();
    }
}

#[derive(Clone, Copy)]
enum Engine<'f> {
    Fcs,
    Smc { outcome: &'f ModelFormula },
}

fn impute_many<R: Rng + ?Sized>(
    data: &Dataset,
    spec: &ImputationSpec,
    engine: Engine<'_>,
    m: usize,
    cycles: usize,
    method: Option<MethodKind>,
    rng: &mut R,
) -> Result<ImputedSet, ImputeError> {
    if m == 0 {
        return Err(ImputeError::InvalidSetting("at least one imputation is required".into()));
    }
    if cycles == 0 {
        return Err(ImputeError::InvalidSetting("at least one cycle is required".into()));
    }
    let seed = StreamSeed::split(rng);
    let mut order = spec.visit_order();
    if let Engine::Smc { outcome } = engine {
        order.push(outcome.response());
    }
    let mut completed = Vec::with_capacity(m);
    let (mut fallbacks, mut restarts) = (0, 0);
    for j in 0..m {
        let mut chain = Chain::new(data, &order)?;
        let mut stream = seed.stream(j as u64);
        let mut attempt = 0;
        loop {
            match run_chain(&mut chain, spec, engine, cycles, &mut stream) {
                Ok(()) => break,
                Err((var, cycle, source)) => {
                    if attempt == MAX_RESTARTS {
                        return Err(ImputeError::NotConverged { var, cycle, restarts: attempt, source });
                    }
                    attempt += 1;
                    restarts += 1;
                }
            }
        }
        fallbacks += chain.fallbacks;
        completed.push(chain.rows);
    }
    Ok(ImputedSet {
        base: data.clone(),
        completed,
        provenance: Provenance { method, seed: seed.0, cycles },
        fallbacks,
        restarts,
    })
}

fn run_chain<R: Rng + ?Sized>(
    chain: &mut Chain<'_>,
    spec: &ImputationSpec,
    engine: Engine<'_>,
    cycles: usize,
    rng: &mut R,
) -> Result<(), (Var, usize, GlmError)> {
    chain.initialize(rng);
    chain.fallbacks = 0;
    if chain.targets.is_empty() {
        return Ok(());
    }
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; chain.targets.len()];
    let mut warm_outcome: Option<Vec<f64>> = None;
    for cycle in 1..=cycles {
        for t in 0..chain.targets.len() {
            let var = chain.targets[t].0;
            let fail = |e: GlmError| (var, cycle, e);
            match engine {
                Engine::Fcs => {
                    let f = spec.model(var).expect("target has a model");
                    let fit = chain.fit(f, true, warm[t].as_deref()).map_err(fail)?;
                    let beta = draw_coefficients(&fit, rng).map_err(fail)?;
                    warm[t] = Some(fit.coefficients);
                    let (_, idx) = &chain.targets[t];
                    for &i in idx {
                        let p = expit(f.eta(&beta, chain.rows[i]));
                        let v = bernoulli(p, rng);
                        set(&mut chain.rows[i], var, v);
                    }
                }
                Engine::Smc { outcome } => {
                    let yfit = chain.fit(outcome, false, warm_outcome.as_deref()).map_err(fail)?;
                    let theta = draw_coefficients(&yfit, rng).map_err(fail)?;
                    warm_outcome = Some(yfit.coefficients);
                    if var == outcome.response() {
                        let (_, idx) = &chain.targets[t];
                        for &i in idx {
                            let p = expit(outcome.eta(&theta, chain.rows[i]));
                            let v = bernoulli(p, rng);
                            set(&mut chain.rows[i], var, v);
                        }
                        continue;
                    }
                    let f = spec.model(var).expect("target has a model");
                    let fit = chain.fit(f, false, warm[t].as_deref()).map_err(fail)?;
                    let beta = draw_coefficients(&fit, rng).map_err(fail)?;
                    warm[t] = Some(fit.coefficients);
                    let y = outcome.response();
                    let mut fallbacks = 0;
                    let (_, idx) = &chain.targets[t];
                    for &i in idx {
                        let row = chain.rows[i];
                        let p = expit(f.eta(&beta, row));
                        let lik = |v: bool| {
                            let mut r = row;
                            set(&mut r, var, v);
                            let q = expit(outcome.eta(&theta, r));
                            if y.of(row) {
                                q
                            } else {
                                1.0 - q
                            }
                        };
                        let (l0, l1) = (lik(false), lik(true));
                        let lmax = l0.max(l1);
                        let mut accepted = None;
                        for _ in 0..MAX_PROPOSALS {
                            let v = bernoulli(p, rng);
                            let l = if v { l1 } else { l0 };
                            if rng.random::<f64>() * lmax < l {
                                accepted = Some(v);
                                break;
                            }
                        }
                        let v = accepted.unwrap_or_else(|| {
                            fallbacks += 1;
                            bernoulli(p, rng)
                        });
                        set(&mut chain.rows[i], var, v);
                    }
                    chain.fallbacks += fallbacks;
                }
            }
        }
    }
    Ok(())
}

/// Multiple imputation by chained equations.
///
/// Each imputation runs its own chain on an independent substream: masked
/// cells start from draws of the observed margins, then `cycles` sweeps fit
/// each univariate model on the rows where its response is observed, draw
/// coefficients from the normal approximation to their posterior and redraw
/// the masked cells.
pub fn mice_fcs<R: Rng + ?Sized>(
    data: &Dataset,
    spec: &ImputationSpec,
    m: usize,
    cycles: usize,
    rng: &mut R,
) -> Result<ImputedSet, ImputeError> {
    let kind = infer_kind(spec);
    impute_many(data, spec, Engine::Fcs, m, cycles, kind, rng)
}

fn infer_kind(spec: &ImputationSpec) -> Option<MethodKind> {
    MethodKind::ALL.into_iter().filter(|k| k.is_imputation() && *k != MethodKind::Smcfcs).find(|&kind| {
        let est = if kind == MethodKind::ZInt { EstimatorKind::Mc } else { EstimatorKind::Dr };
        build_spec(&MissingMethod::new(kind), est).as_ref() == Ok(spec)
    })
}

/// Substantive-model-compatible FCS.
///
/// Covariates are proposed from logistic models on the other covariates
/// (plus `aux` for C2 and C3) and accepted with probability proportional to
/// the outcome-model likelihood of the current Y; masked Y is drawn from the
/// outcome model.
pub fn smcfcs<R: Rng + ?Sized>(
    data: &Dataset,
    outcome: &ModelFormula,
    aux: &[Var],
    m: usize,
    cycles: usize,
    rng: &mut R,
) -> Result<ImputedSet, ImputeError> {
    if outcome.response() != Var::Y {
        return Err(ImputeError::InvalidSetting(format!("substantive model must have Y as response, got {}", outcome.response())));
    }
    let method = MissingMethod { kind: MethodKind::Smcfcs, m, cycles, auxiliary: aux.to_vec() };
    let spec = build_spec(&method, EstimatorKind::Dr)?;
    impute_many(data, &spec, Engine::Smc { outcome }, m, cycles, Some(MethodKind::Smcfcs), rng)
}

/// Impute with any MI strategy; `outcome` is the substantive model for SMC-FCS.
pub fn impute<R: Rng + ?Sized>(
    data: &Dataset,
    method: &MissingMethod,
    estimator: EstimatorKind,
    outcome: &ModelFormula,
    rng: &mut R,
) -> Result<ImputedSet, ImputeError> {
    match method.kind {
        MethodKind::Cca => Err(ImputeError::NotImputation(MethodKind::Cca)),
        MethodKind::Smcfcs => {
            if method.m == 0 {
                return Err(ImputeError::InvalidSetting("at least one imputation is required".into()));
            }
            smcfcs(data, outcome, &method.auxiliary, method.m, method.cycles, rng)
        }
        kind => {
            let spec = build_spec(method, estimator)?;
            impute_many(data, &spec, Engine::Fcs, method.m, method.cycles, Some(kind), rng)
        }
    }
}
