//! Interventional indirect and direct effects on the risk-difference scale.
//!
//! Three potential-outcome means are estimated:
//!
//! - `p10`: exposure set to 1, mediator at its natural law under exposure;
//! - `p00`: exposure set to 0, mediator at its natural law under no exposure;
//! - `p11`: exposure set to 1, mediator shifted to its law under no exposure.
//!
//! indirect = `p10 - p11`, direct = `p11 - p00`, total = indirect + direct.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CellTable, DataError, Var};
use crate::glm::{FittedGlm, GlmError, ModelFormula, Term};

/// Propensity probabilities outside `[POSITIVITY_BOUND, 1 - POSITIVITY_BOUND]` are rejected.
pub const POSITIVITY_BOUND: f64 = 1e-6;
pub const DEFAULT_MC_DRAWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediationError {
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("positivity violation: P(X=1|C) = {prob:e} in stratum C1={c1} C2={c2} C3={c3}")]
    Positivity { c1: u8, c2: u8, c3: u8, prob: f64 },
    #[error("no rows with X={0}")]
    EmptyExposureGroup(u8),
    #[error("probability table sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("invalid analysis specification: {0}")]
    InvalidSpec(String),
}

impl MediationError {
    fn positivity(row: u32, prob: f64) -> Self {
        MediationError::Positivity {
            c1: Var::C1.of(row) as u8,
            c2: Var::C2.of(row) as u8,
            c3: Var::C3.of(row) as u8,
            prob,
        }
    }
}

/// Point estimates of the three potential-outcome means and the effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediationEstimate {
    pub p10: f64,
    pub p00: f64,
    pub p11: f64,
    pub indirect: f64,
    pub direct: f64,
    pub total: f64,
}

impl MediationEstimate {
    pub fn from_means(p10: f64, p00: f64, p11: f64) -> Self {
        let indirect = p10 - p11;
        let direct = p11 - p00;
        MediationEstimate { p10, p00, p11, indirect, direct, total: indirect + direct }
    }

    /// `[indirect, direct, total]`.
    pub fn effects(&self) -> [f64; 3] {
        [self.indirect, self.direct, self.total]
    }
}

/// Model specifications for both estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// X on C.
    pub propensity: ModelFormula,
    /// Y on X, Z, C; must contain the X:Z interaction.
    pub outcome: ModelFormula,
    /// Z on X, C.
    pub mediator: ModelFormula,
    pub mc_draws: usize,
}

impl Default for AnalysisSpec {
    /// Correctly specified models for the default generating process.
    fn default() -> Self {
        AnalysisSpec {
            propensity: ModelFormula::parse("X ~ C1 + C2 + C3 + C1:C2 + C1:C3").unwrap(),
            outcome: ModelFormula::parse("Y ~ X + Z + C1 + C2 + C3 + X:Z + C1:C2 + C1:C3").unwrap(),
            mediator: ModelFormula::parse("Z ~ X + C1 + C2 + C3 + C1:C2 + C1:C3").unwrap(),
            mc_draws: DEFAULT_MC_DRAWS,
        }
    }
}

impl AnalysisSpec {
    pub fn validate(&self) -> Result<(), MediationError> {
        let bad = |m: &str| Err(MediationError::InvalidSpec(m.into()));
        if self.propensity.response() != Var::X || self.propensity.predictors().iter().any(|v| [Var::Z, Var::Y].contains(v))
        {
            return bad("propensity model must regress X on confounders only");
        }
        if self.mediator.response() != Var::Z || self.mediator.predictors().contains(&Var::Y) {
            return bad("mediator model must regress Z on X and confounders");
        }
        if self.outcome.response() != Var::Y {
            return bad("outcome model must have Y as response");
        }
        if !self.outcome.terms().contains(&Term::interaction(Var::X, Var::Z)) {
            return bad("outcome model must contain the X:Z interaction");
        }
        if self.mc_draws == 0 {
            return bad("mc_draws must be at least 1");
        }
        Ok(())
    }
}

fn exposure_prevalence(table: &CellTable) -> Result<f64, MediationError> {
    let p1 = table.prevalence(Var::X);
    if p1 <= 0.0 {
        return Err(MediationError::EmptyExposureGroup(1));
    }
    if p1 >= 1.0 {
        return Err(MediationError::EmptyExposureGroup(0));
    }
    Ok(p1)
}

/// `P(X=x) / P(X=x | C)` for each nonzero cell, at the cell's observed exposure.
pub fn stabilized_weights(table: &CellTable, propensity_fit: &FittedGlm) -> Result<Vec<(u32, f64)>, MediationError> {
    let p1 = exposure_prevalence(table)?;
    table
        .cells()
        .map(|(row, _)| {
            let pi = propensity_fit.prob_at(row);
            if !(POSITIVITY_BOUND..=1.0 - POSITIVITY_BOUND).contains(&pi) {
                return Err(MediationError::positivity(row, pi));
            }
            let w = if Var::X.of(row) { p1 / pi } else { (1.0 - p1) / (1.0 - pi) };
            Ok((row, w))
        })
        .collect()
}

/// Doubly robust (weighting) g-computation.
///
/// Weighted averages are normalized within each exposure stratum.
pub fn dr_gcomp(table: &CellTable, spec: &AnalysisSpec) -> Result<MediationEstimate, MediationError> {
    let propensity = spec.propensity.fit_table(table)?.ensure_converged()?;
    let outcome = spec.outcome.fit_table(table)?.ensure_converged()?;
    dr_from_fits(table, &propensity, &outcome)
}

pub(crate) fn dr_from_fits(
    table: &CellTable,
    propensity: &FittedGlm,
    outcome: &FittedGlm,
) -> Result<MediationEstimate, MediationError> {
    let weights = stabilized_weights(table, propensity)?;
    let (mut num10, mut num00, mut num11, mut den1, mut den0) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (row, sw) in weights {
        let w = table.weight(row) * sw;
        if Var::X.of(row) {
            num10 += w * outcome.prob_at(row);
            den1 += w;
        } else {
            num00 += w * outcome.prob_at(row);
            num11 += w * outcome.prob_at(row | Var::X.bit());
            den0 += w;
        }
    }
    Ok(MediationEstimate::from_means(num10 / den1, num00 / den0, num11 / den0))
}

/// Monte Carlo g-computation with `spec.mc_draws` mediator draws per individual.
///
/// Individuals sharing a confounder pattern are exchangeable here, so the
/// `k * draws` Bernoulli draws of a cell holding `k` individuals are taken as
/// one binomial count. Tables with non-integral weights get `draws` draws per
/// cell.
pub fn mc_gcomp<R: Rng + ?Sized>(
    table: &CellTable,
    spec: &AnalysisSpec,
    rng: &mut R,
) -> Result<MediationEstimate, MediationError> {
    if spec.mc_draws == 0 {
        return Err(MediationError::InvalidSpec("mc_draws must be at least 1".into()));
    }
    let mediator = spec.mediator.fit_table(table)?.ensure_converged()?;
    let outcome = spec.outcome.fit_table(table)?.ensure_converged()?;
    let integral = table.is_integral();
    let draws = spec.mc_draws as u64;
    let x = Var::X.bit();
    let z = Var::Z.bit();
    // (exposure in outcome model, exposure for mediator draw)
    const SETTINGS: [(bool, bool); 3] = [(true, true), (false, false), (true, false)];
    let mut acc = [0.0f64; 3];
    for (row, w) in table.cells() {
        let n_draws = if integral { draws * w as u64 } else { draws };
        for (k, &(x_out, x_med)) in SETTINGS.iter().enumerate() {
            let base = row & !(x | z);
            let med_row = if x_med { base | x } else { base };
            let pz = mediator.prob_at(med_row);
            let ones = Binomial::new(n_draws, pz).map_err(|_| GlmError::ProbabilityOutOfRange(pz))?.sample(rng);
            let out_row = if x_out { base | x } else { base };
            let q1 = outcome.prob_at(out_row | z);
            let q0 = outcome.prob_at(out_row);
            let mean = (ones as f64 * q1 + (n_draws - ones) as f64 * q0) / n_draws as f64;
            acc[k] += w * mean;
        }
    }
    let total = table.total();
    Ok(MediationEstimate::from_means(acc[0] / total, acc[1] / total, acc[2] / total))
}

/// Which g-computation estimator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Doubly robust (weighting) g-computation.
    Dr,
    /// Monte Carlo g-computation.
    Mc,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Dr, EstimatorKind::Mc];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Dr => "dr",
            EstimatorKind::Mc => "mc",
        }
    }

    /// Apply the estimator; `rng` is only used by [`EstimatorKind::Mc`].
    pub fn estimate<R: Rng + ?Sized>(
        self,
        table: &CellTable,
        spec: &AnalysisSpec,
        rng: &mut R,
    ) -> Result<MediationEstimate, MediationError> {
        match self {
            EstimatorKind::Dr => dr_gcomp(table, spec),
            EstimatorKind::Mc => mc_gcomp(table, spec, rng),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = MediationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dr" => Ok(EstimatorKind::Dr),
            "mc" => Ok(EstimatorKind::Mc),
            _ => Err(MediationError::InvalidSpec(format!("unknown estimator '{s}' (expected dr or mc)"))),
        }
    }
}

/// Exact evaluation of the identifying functional on a probability table
/// over the analysis variables, by summation over the finite support.
pub fn exact_oracle(joint: &CellTable) -> Result<MediationEstimate, MediationError> {
    let total = joint.total();
    if (total - 1.0).abs() > 1e-9 {
        return Err(MediationError::NotNormalized(total));
    }
    let cmask = Var::C1.bit() | Var::C2.bit() | Var::C3.bit();
    let mass = |pred: &dyn Fn(u32) -> bool| joint.cells().filter(|(r, _)| pred(*r)).map(|(_, w)| w).sum::<f64>();
    let mut p = [0.0f64; 3];
    for c in (0..CellTable::CELLS as u32).filter(|r| r & !cmask == 0) {
        let pc = mass(&|r| r & cmask == c);
        if pc == 0.0 {
            continue;
        }
        let px = |x: bool| mass(&|r| r & cmask == c && Var::X.of(r) == x);
        let pzx = |z: bool, x: bool| mass(&|r| r & cmask == c && Var::X.of(r) == x && Var::Z.of(r) == z);
        let ey = |x: bool, z: bool| -> Result<f64, MediationError> {
            let d = pzx(z, x);
            if d == 0.0 {
                return Err(MediationError::positivity(c, 0.0));
            }
            Ok(mass(&|r| r & cmask == c && Var::X.of(r) == x && Var::Z.of(r) == z && Var::Y.of(r)) / d)
        };
        let (p1, p0) = (px(true), px(false));
        if p1 == 0.0 || p0 == 0.0 {
            return Err(MediationError::positivity(c, p1 / pc));
        }
        // mediator law under exposure b, outcome mean at exposure x
        let term = |x: bool, b: bool| -> Result<f64, MediationError> {
            let pb = if b { p1 } else { p0 };
            let mut s = 0.0;
            for z in [false, true] {
                let pz = pzx(z, b) / pb;
                if pz > 0.0 {
                    s += pz * ey(x, z)?;
                }
            }
            Ok(s)
        };
        p[0] += pc * term(true, true)?;
        p[1] += pc * term(false, false)?;
        p[2] += pc * term(true, false)?;
    }
    Ok(MediationEstimate::from_means(p[0], p[1], p[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_complete, DgmParams};
    use crate::rng::StreamSeed;

    #[test]
    fn degenerate_y_equals_x() {
        let t = CellTable::from_weights((0..8u32).flat_map(|c| {
            [false, true].into_iter().flat_map(move |x| {
                [false, true].into_iter().map(move |z| {
                    let mut r = c << 1;
                    if x {
                        r |= Var::X.bit() | Var::Y.bit();
                    }
                    if z {
                        r |= Var::Z.bit();
                    }
                    (r, 1.0 / 32.0)
                })
            })
        }));
        let e = exact_oracle(&t).unwrap();
        assert_eq!(e.indirect, 0.0);
        assert_eq!(e.direct, 1.0);
        assert_eq!(e.total, 1.0);
    }

    #[test]
    fn unnormalized_table_is_rejected() {
        let t = CellTable::from_weights([(0, 0.5)]);
        assert_eq!(exact_oracle(&t), Err(MediationError::NotNormalized(0.5)));
    }

    #[test]
    fn intercept_only_propensity_gives_unit_weights() {
        let data = generate_complete(2000, &DgmParams::default(), &mut StreamSeed(11).stream(0)).unwrap();
        let t = CellTable::from_dataset(&data).unwrap();
        let fit = ModelFormula::parse("X ~ 1").unwrap().fit_table(&t).unwrap();
        for (_, w) in stabilized_weights(&t, &fit).unwrap() {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn positivity_violation_is_reported() {
        // X = 1 exactly when C1 = 1
        let rows: Vec<u32> = (0..64u32)
            .map(|i| {
                let r = (i & 0b111) << 1;
                if Var::C1.of(r) {
                    r | Var::X.bit() | ((i >> 3) & 1) << 5
                } else {
                    r | ((i >> 4) & 1) << 6
                }
            })
            .collect();
        let t = CellTable::from_rows(&rows);
        let spec = AnalysisSpec { propensity: ModelFormula::parse("X ~ C1").unwrap(), ..AnalysisSpec::default() };
        let err = dr_gcomp(&t, &spec).unwrap_err();
        assert!(matches!(err, MediationError::Glm(GlmError::NotConverged(_)) | MediationError::Positivity { .. }));
        let mut fit = spec.propensity.fit_table(&t).unwrap();
        fit.coefficients = alloc::vec![-40.0, 80.0];
        assert!(matches!(stabilized_weights(&t, &fit), Err(MediationError::Positivity { .. })));
    }

    #[test]
    fn spec_requires_exposure_mediator_interaction() {
        let mut s = AnalysisSpec::default();
        s.validate().unwrap();
        s.outcome = ModelFormula::parse("Y ~ X + Z + C1").unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn degenerate_mediator_draws() {
        let data = generate_complete(3000, &DgmParams::default(), &mut StreamSeed(12).stream(0)).unwrap();
        // force Z = 0 everywhere
        let rows: Vec<u32> = data.rows().iter().map(|r| r & !Var::Z.bit()).collect();
        let t = CellTable::from_rows(&rows);
        let spec = AnalysisSpec {
            mediator: ModelFormula::parse("Z ~ X + C1").unwrap(),
            outcome: ModelFormula::parse("Y ~ X + C1 + C2 + C3 + X:Z").unwrap(),
            ..AnalysisSpec::default()
        };
        // Z never observed as 1: the X:Z column is all zeros and must be rejected
        assert!(matches!(mc_gcomp(&t, &spec, &mut StreamSeed(1).stream(0)), Err(MediationError::Glm(_))));
    }
}
