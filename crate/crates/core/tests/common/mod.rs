#![allow(dead_code)]

use medmi_core::datagen::DgmParams;
use medmi_core::{CellTable, Var};

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability of the full study-variable pattern `row` (bits A..Y).
pub fn pattern_prob(params: &DgmParams, row: u32) -> f64 {
    let mut p = 1.0;
    for m in &params.models {
        let eta = m.terms.iter().fold(m.intercept, |e, c| e + c.coef * c.term.eval(row));
        let q = expit(eta);
        p *= if m.var.of(row) { q } else { 1.0 - q };
    }
    p
}

/// Population law of the analysis variables, with A summed out.
pub fn population_table(params: &DgmParams) -> CellTable {
    CellTable::from_weights((0..128u32).map(|row| (row, pattern_prob(params, row))))
}

pub fn set(row: u32, v: Var, on: bool) -> u32 {
    if on {
        row | v.bit()
    } else {
        row & !v.bit()
    }
}
