//! Synthetic cohorts generated variable by variable from logistic models, and
//! missingness imposed through m-DAG indicator models.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, PatternIndex, Var};
use crate::glm::{bernoulli, Term};
use crate::math::expit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("invalid generating model: {0}")]
    InvalidParams(String),
    #[error("invalid missingness model: {0}")]
    InvalidMdag(String),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("missingness target {target} for {var} must lie in (0, 1)")]
    TargetOutOfRange { var: Var, target: f64 },
    #[error("cannot bracket target {target} for {var} with intercepts in [-20, 20] (reachable {lo:.4}..{hi:.4})")]
    Unbracketed { var: Var, target: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coef {
    pub term: Term,
    pub coef: f64,
}

/// Logistic generating model for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarModel {
    pub var: Var,
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<Coef>,
}

impl VarModel {
    fn new(var: Var, intercept: f64, terms: &[(Term, f64)]) -> Self {
        VarModel { var, intercept, terms: terms.iter().map(|&(term, coef)| Coef { term, coef }).collect() }
    }

    #[inline]
    fn eta(&self, row: u32) -> f64 {
        self.terms.iter().fold(self.intercept, |e, c| e + c.coef * c.term.eval(row))
    }

    fn parents(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.terms.iter().flat_map(|c| c.term.vars()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Probability for every joint pattern of the parents.
    fn prob_table(&self) -> (PatternIndex, Vec<f64>) {
        let idx = PatternIndex::new(self.parents());
        let probs = (0..idx.len()).map(|k| expit(self.eta(idx.expand(k)))).collect();
        (idx, probs)
    }
}

/// Coefficients of the complete-data generating models, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgmParams {
    pub models: Vec<VarModel>,
}

impl Default for DgmParams {
    fn default() -> Self {
        use Term::{Interaction as I, Main as M};
        use Var as V;
        DgmParams {
            models: vec![
                VarModel::new(V::A, -0.45, &[]),
                VarModel::new(V::C1, 0.10, &[]),
                VarModel::new(V::C2, -1.92, &[(M(V::A), 0.63)]),
                VarModel::new(V::C3, -1.40, &[(M(V::A), 0.59)]),
                VarModel::new(
                    V::X,
                    -2.21,
                    &[(M(V::C1), 1.42), (M(V::C2), 0.28), (M(V::C3), 1.02), (I(V::C1, V::C2), 0.47), (I(V::C1, V::C3), 0.11)],
                ),
                VarModel::new(
                    V::Z,
                    -2.75,
                    &[
                        (M(V::X), 1.56),
                        (M(V::C1), 0.31),
                        (M(V::C2), -0.22),
                        (M(V::C3), -0.16),
                        (I(V::C1, V::C2), 0.22),
                        (I(V::C1, V::C3), 0.95),
                    ],
                ),
                VarModel::new(
                    V::Y,
                    -2.05,
                    &[
                        (M(V::X), 0.54),
                        (M(V::Z), 1.34),
                        (M(V::C1), 0.05),
                        (M(V::C2), 0.18),
                        (M(V::C3), 0.51),
                        (I(V::X, V::Z), -0.04),
                        (I(V::C1, V::C2), 0.17),
                        (I(V::C1, V::C3), -0.76),
                    ],
                ),
            ],
        }
    }
}

impl DgmParams {
    /// Every study variable exactly once, each model using only earlier ones.
    pub fn validate(&self) -> Result<(), DatagenError> {
        let mut seen: Vec<Var> = Vec::new();
        for m in &self.models {
            if m.var.0 as usize >= 7 {
                return Err(DatagenError::InvalidParams(alloc::format!("{} is not a study variable", m.var)));
            }
            if seen.contains(&m.var) {
                return Err(DatagenError::InvalidParams(alloc::format!("{} generated twice", m.var)));
            }
            if let Some(p) = m.parents().into_iter().find(|p| !seen.contains(p)) {
                return Err(DatagenError::InvalidParams(alloc::format!("{} depends on {p}, which is generated later", m.var)));
            }
            if !m.intercept.is_finite() || m.terms.iter().any(|c| !c.coef.is_finite()) {
                return Err(DatagenError::InvalidParams(alloc::format!("non-finite coefficient in model for {}", m.var)));
            }
            seen.push(m.var);
        }
        if seen.len() != 7 {
            return Err(DatagenError::InvalidParams("all seven study variables need a model".into()));
        }
        Ok(())
    }

    pub fn model(&self, var: Var) -> Option<&VarModel> {
        self.models.iter().find(|m| m.var == var)
    }

    pub fn model_mut(&mut self, var: Var) -> Option<&mut VarModel> {
        self.models.iter_mut().find(|m| m.var == var)
    }

    /// Copy with the coefficient on `term` in `var`'s model replaced (added if absent).
    pub fn with_coef(mut self, var: Var, term: Term, coef: f64) -> Self {
        let m = self.model_mut(var).expect("variable has a model");
        match m.terms.iter_mut().find(|c| c.term == term) {
            Some(c) => c.coef = coef,
            None => m.terms.push(Coef { term, coef }),
        }
        self
    }

    /// Every coefficient and intercept set to zero.
    pub fn null() -> Self {
        let mut p = DgmParams::default();
        for m in &mut p.models {
            m.intercept = 0.0;
            m.terms.iter_mut().for_each(|c| c.coef = 0.0);
        }
        p
    }
}

/// Complete data of size `n`, each variable drawn from its model given the
/// previously generated columns.
pub fn generate_complete<R: Rng + ?Sized>(n: usize, params: &DgmParams, rng: &mut R) -> Result<Dataset, DatagenError> {
    if n == 0 {
        return Err(DatagenError::EmptySample);
    }
    params.validate()?;
    let tables: Vec<(u32, PatternIndex, Vec<f64>)> = params
        .models
        .iter()
        .map(|m| {
            let (idx, p) = m.prob_table();
            (m.var.bit(), idx, p)
        })
        .collect();
    let rows = (0..n)
        .map(|_| {
            let mut row = 0u32;
            for (bit, idx, probs) in &tables {
                if bernoulli(probs[idx.index(row)], rng) {
                    row |= bit;
                }
            }
            row
        })
        .collect();
    Ok(Dataset::complete(rows))
}

/// Missingness scenario label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MdagLabel {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl MdagLabel {
    pub const ALL: [MdagLabel; 6] = [MdagLabel::A, MdagLabel::B, MdagLabel::C, MdagLabel::D, MdagLabel::E, MdagLabel::F];
}

impl fmt::Display for MdagLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for MdagLabel {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MdagLabel::ALL
            .iter()
            .copied()
            .find(|l| alloc::format!("{l:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| DatagenError::InvalidMdag(alloc::format!("unknown m-DAG `{s}`")))
    }
}

/// Logistic model for one missingness indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorModel {
    /// Variable whose cells this indicator masks.
    pub target: Var,
    pub intercept: f64,
    #[serde(default)]
    pub edges: Vec<Coef>,
    /// Coefficient on the latent common cause W.
    pub w_coef: f64,
}

impl IndicatorModel {
    #[inline]
    fn eta(&self, row: u32, w: bool) -> f64 {
        let base = if w { self.intercept + self.w_coef } else { self.intercept };
        self.edges.iter().fold(base, |e, c| e + c.coef * c.term.eval(row))
    }

    fn parents(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.edges.iter().flat_map(|c| c.term.vars()).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Log-odds on every present substantive edge.
pub const EDGE_LOG_ODDS: f64 = 0.9;

/// A missingness mechanism: W prevalence plus one indicator model per
/// incomplete variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdagSpec {
    pub label: MdagLabel,
    /// Intercept of the Bernoulli model for W.
    pub w_intercept: f64,
    pub indicators: Vec<IndicatorModel>,
}

/// Expected per-variable missingness of the simulated cohorts.
pub const MISSINGNESS_TARGETS: [(Var, f64); 5] =
    [(Var::C2, 0.31), (Var::C3, 0.26), (Var::X, 0.16), (Var::Z, 0.19), (Var::Y, 0.23)];

impl MdagSpec {
    /// Edge sets of the six mechanisms with their tabulated intercepts and W
    /// coefficients. [`calibrate_intercepts`] can refit the intercepts to
    /// [`MISSINGNESS_TARGETS`].
    ///
    /// `S` below is the covariate self-edge: C2 for M_C2, C3 for M_C3 and both
    /// for the other indicators.
    ///
    /// - A: C1
    /// - B: C1, S, X, Z
    /// - C: C1, S, X
    /// - D: C1, S, X, Z, Y; M_Y without Y
    /// - E: C1, S, X, Z, Y for M_C2, M_C3, M_X; M_Z and M_Y on C1, S, X
    /// - F: C1, S, X; M_Z adds Z and M_Y adds Y
    pub fn preset(label: MdagLabel) -> Self {
        use Var as V;
        #[derive(Clone, Copy)]
        enum E {
            C1,
            S,
            X,
            Z,
            Y,
        }
        let (ints, ws): ([f64; 5], [f64; 5]) = match label {
            MdagLabel::A => ([-2.9, -3.8, -4.6, -2.5, -2.7], [7.5, 6.0, 4.5, 1.5, 2.7]),
            MdagLabel::B => ([-3.7, -4.7, -6.1, -3.4, -3.3], [7.5, 6.5, 5.5, 1.5, 2.0]),
            MdagLabel::C => ([-3.5, -4.5, -5.9, -3.25, -3.15], [7.5, 6.5, 5.3, 1.5, 2.0]),
            MdagLabel::D => ([-4.0, -4.9, -6.3, -3.6, -3.3], [7.5, 6.5, 5.5, 1.4, 2.0]),
            MdagLabel::E => ([-4.0, -4.9, -6.3, -3.2, -3.2], [7.5, 6.5, 5.5, 1.4, 2.2]),
            MdagLabel::F => ([-3.5, -4.5, -5.9, -3.4, -3.4], [7.5, 6.5, 5.3, 1.4, 2.2]),
        };
        let edges_for = |target: Var| -> &'static [E] {
            let covariate_like = matches!(target, V::C2 | V::C3 | V::X);
            match label {
                MdagLabel::A => &[E::C1],
                MdagLabel::B => &[E::C1, E::S, E::X, E::Z],
                MdagLabel::C => &[E::C1, E::S, E::X],
                MdagLabel::D if target == V::Y => &[E::C1, E::S, E::X, E::Z],
                MdagLabel::D => &[E::C1, E::S, E::X, E::Z, E::Y],
                MdagLabel::E if covariate_like => &[E::C1, E::S, E::X, E::Z, E::Y],
                MdagLabel::E => &[E::C1, E::S, E::X],
                MdagLabel::F if target == V::Z => &[E::C1, E::S, E::X, E::Z],
                MdagLabel::F if target == V::Y => &[E::C1, E::S, E::X, E::Y],
                MdagLabel::F => &[E::C1, E::S, E::X],
            }
        };
        let indicators = Var::INCOMPLETE
            .iter()
            .enumerate()
            .map(|(i, &target)| {
                let mut edges = Vec::new();
                for e in edges_for(target) {
                    let vars: &[Var] = match (e, target) {
                        (E::C1, _) => &[V::C1],
                        (E::S, V::C2) => &[V::C2],
                        (E::S, V::C3) => &[V::C3],
                        (E::S, _) => &[V::C2, V::C3],
                        (E::X, _) => &[V::X],
                        (E::Z, _) => &[V::Z],
                        (E::Y, _) => &[V::Y],
                    };
                    edges.extend(vars.iter().map(|&v| Coef { term: Term::Main(v), coef: EDGE_LOG_ODDS }));
                }
                IndicatorModel { target, intercept: ints[i], edges, w_coef: ws[i] }
            })
            .collect();
        MdagSpec { label, w_intercept: -1.1, indicators }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        for (i, ind) in self.indicators.iter().enumerate() {
            if !Var::INCOMPLETE.contains(&ind.target) {
                return Err(DatagenError::InvalidMdag(alloc::format!("{} may not be masked", ind.target)));
            }
            if self.indicators[..i].iter().any(|o| o.target == ind.target) {
                return Err(DatagenError::InvalidMdag(alloc::format!("two indicators for {}", ind.target)));
            }
            if let Some(v) = ind.parents().into_iter().find(|v| v.0 >= 7) {
                return Err(DatagenError::InvalidMdag(alloc::format!("indicator for {} uses unknown {v}", ind.target)));
            }
            if ind.intercept.is_nan() || !ind.w_coef.is_finite() || ind.edges.iter().any(|c| !c.coef.is_finite()) {
                return Err(DatagenError::InvalidMdag(alloc::format!("non-finite coefficient for {}", ind.target)));
            }
        }
        if self.w_intercept.is_nan() {
            return Err(DatagenError::InvalidMdag("W intercept is NaN".into()));
        }
        Ok(())
    }

    pub fn indicator(&self, target: Var) -> Option<&IndicatorModel> {
        self.indicators.iter().find(|m| m.target == target)
    }

    pub fn intercepts(&self) -> Vec<(Var, f64)> {
        self.indicators.iter().map(|m| (m.target, m.intercept)).collect()
    }
}

/// Draw W and the indicators for every row and mask the flagged cells.
/// True values and W stay in the dataset's latent block.
pub fn impose_missingness<R: Rng + ?Sized>(data: &Dataset, mdag: &MdagSpec, rng: &mut R) -> Result<Dataset, DatagenError> {
    mdag.validate()?;
    let p_w = expit(mdag.w_intercept);
    let mut complete = Vec::with_capacity(data.n());
    let mut missing = Vec::with_capacity(data.n());
    let mut ws = Vec::with_capacity(data.n());
    for &row in data.rows() {
        let w = bernoulli(p_w, rng);
        let mut m = 0u32;
        for ind in &mdag.indicators {
            if bernoulli(expit(ind.eta(row, w)), rng) {
                m |= ind.target.bit();
            }
        }
        complete.push(row);
        missing.push(m);
        ws.push(w);
    }
    Ok(Dataset::masked_from(complete, missing, ws))
}

/// Adjust each indicator intercept by bisection so the realized missingness
/// on a calibration sample of size `n_cal` matches its target within 0.005.
///
/// The calibration sample and its uniforms are drawn once, so realized
/// proportions are monotone in the intercept.
pub fn calibrate_intercepts<R: Rng + ?Sized>(
    mdag: &MdagSpec,
    params: &DgmParams,
    targets: &[(Var, f64)],
    n_cal: usize,
    rng: &mut R,
) -> Result<MdagSpec, DatagenError> {
    mdag.validate()?;
    for &(var, target) in targets {
        if !(target > 0.0 && target < 1.0) {
            return Err(DatagenError::TargetOutOfRange { var, target });
        }
    }
    let data = generate_complete(n_cal, params, rng)?;
    let p_w = expit(mdag.w_intercept);
    let ws: Vec<bool> = (0..n_cal).map(|_| bernoulli(p_w, rng)).collect();
    let mut out = mdag.clone();
    for ind in out.indicators.iter_mut() {
        let Some(&(_, target)) = targets.iter().find(|(v, _)| *v == ind.target) else { continue };
        // Rows grouped by the indicator's parent pattern and W; sorted uniforms per group.
        let idx = PatternIndex::new(ind.parents());
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); idx.len() * 2];
        for (r, &row) in data.rows().iter().enumerate() {
            groups[idx.index(row) * 2 + ws[r] as usize].push(rng.random::<f64>());
        }
        let mut offsets = Vec::new();
        for (g, us) in groups.iter_mut().enumerate() {
            if us.is_empty() {
                continue;
            }
            us.sort_by(f64::total_cmp);
            let mut probe = ind.clone();
            probe.intercept = 0.0;
            offsets.push((probe.eta(idx.expand(g / 2), g % 2 == 1), g));
        }
        let realized = |b: f64| -> f64 {
            let hits: usize =
                offsets.iter().map(|&(off, g)| groups[g].partition_point(|&u| u < expit(b + off))).sum();
            hits as f64 / n_cal as f64
        };
        let (mut lo, mut hi) = (-20.0f64, 20.0f64);
        let (r_lo, r_hi) = (realized(lo), realized(hi));
        if r_lo > target || r_hi < target {
            return Err(DatagenError::Unbracketed { var: ind.target, target, lo: r_lo, hi: r_hi });
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if realized(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b = if (realized(lo) - target).abs() <= (realized(hi) - target).abs() { lo } else { hi };
        if (realized(b) - target).abs() > 0.005 {
            return Err(DatagenError::Unbracketed { var: ind.target, target, lo: realized(lo), hi: realized(hi) });
        }
        ind.intercept = b;
    }
    Ok(out)
}

/// Missingness proportions of a masked dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSummary {
    pub n: usize,
    /// Fraction missing per study variable (and auxiliary column), column order.
    pub per_var: Vec<(String, f64)>,
    /// Fraction of rows with at least one masked cell.
    pub any: f64,
}

impl MissingnessSummary {
    pub fn fraction(&self, name: &str) -> Option<f64> {
        self.per_var.iter().find(|(n, _)| n == name).map(|(_, f)| *f)
    }
}

pub fn summarize_missingness(data: &Dataset) -> MissingnessSummary {
    let n = data.n();
    let denom = n.max(1) as f64;
    let per_var = data
        .vars()
        .map(|v| {
            let k = data.mask().iter().filter(|&&m| m & v.bit() != 0).count();
            (data.column_name(v), k as f64 / denom)
        })
        .collect();
    let any = data.mask().iter().filter(|&&m| m != 0).count() as f64 / denom;
    MissingnessSummary { n, per_var, any }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn default_params_are_topological() {
        DgmParams::default().validate().unwrap();
        let mut bad = DgmParams::default();
        bad.models.swap(0, 2);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let p = DgmParams::default();
        let a = generate_complete(500, &p, &mut StreamSeed(3).stream(0)).unwrap();
        let b = generate_complete(500, &p, &mut StreamSeed(3).stream(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_complete(0, &p, &mut StreamSeed(3).stream(0)), Err(DatagenError::EmptySample));
    }

    #[test]
    fn minus_infinity_intercepts_mask_nothing() {
        let p = DgmParams::default();
        let mut rng = StreamSeed(4).stream(0);
        let d = generate_complete(2000, &p, &mut rng).unwrap();
        let mut m = MdagSpec::preset(MdagLabel::D);
        m.indicators.iter_mut().for_each(|i| i.intercept = f64::NEG_INFINITY);
        let masked = impose_missingness(&d, &m, &mut rng).unwrap();
        assert!(!masked.has_missing());
        assert_eq!(summarize_missingness(&masked).any, 0.0);
    }

    #[test]
    fn masking_keeps_truth() {
        let p = DgmParams::default();
        let mut rng = StreamSeed(5).stream(0);
        let d = generate_complete(1000, &p, &mut rng).unwrap();
        let masked = impose_missingness(&d, &MdagSpec::preset(MdagLabel::F), &mut rng).unwrap();
        assert!(masked.has_missing());
        assert_eq!(masked.unmask().unwrap(), d);
    }

    #[test]
    fn target_zero_is_rejected() {
        let err = calibrate_intercepts(
            &MdagSpec::preset(MdagLabel::A),
            &DgmParams::default(),
            &[(Var::C2, 0.0)],
            1000,
            &mut StreamSeed(1).stream(0),
        )
        .unwrap_err();
        assert!(matches!(err, DatagenError::TargetOutOfRange { .. }));
    }

    #[test]
    fn edge_free_indicator_calibrates_to_logit() {
        let mut m = MdagSpec::preset(MdagLabel::A);
        for ind in &mut m.indicators {
            ind.edges.clear();
            ind.w_coef = 0.0;
        }
        let c = calibrate_intercepts(&m, &DgmParams::default(), &[(Var::Y, 0.25)], 200_000, &mut StreamSeed(8).stream(0))
            .unwrap();
        assert!((c.indicator(Var::Y).unwrap().intercept - (-1.0986)).abs() < 0.03);
        // untouched indicators keep their intercepts
        assert_eq!(c.indicator(Var::X).unwrap().intercept, m.indicator(Var::X).unwrap().intercept);
    }

    #[test]
    fn labels_parse() {
        assert_eq!("d".parse::<MdagLabel>().unwrap(), MdagLabel::D);
        assert!("G".parse::<MdagLabel>().is_err());
    }

    #[test]
    fn presets_respect_textual_constraints() {
        let uses = |l: MdagLabel, target: Var, v: Var| {
            MdagSpec::preset(l).indicator(target).unwrap().edges.iter().any(|c| c.term.involves(v))
        };
        for l in [MdagLabel::A, MdagLabel::C] {
            for t in Var::INCOMPLETE {
                assert!(!uses(l, t, Var::Z) && !uses(l, t, Var::Y));
            }
        }
        for t in [Var::Z, Var::Y] {
            assert!(!uses(MdagLabel::E, t, Var::Z) && !uses(MdagLabel::E, t, Var::Y));
        }
        assert!(uses(MdagLabel::B, Var::Z, Var::Z));
        assert!(uses(MdagLabel::D, Var::Z, Var::Z));
        assert!(uses(MdagLabel::F, Var::Z, Var::Z) && uses(MdagLabel::F, Var::Y, Var::Y));
        for l in [MdagLabel::B, MdagLabel::C, MdagLabel::D, MdagLabel::E, MdagLabel::F] {
            assert!(uses(l, Var::C2, Var::C2) && uses(l, Var::C3, Var::C3));
        }
    }
}
