//! Logistic regression: design matrices with pairwise interactions, IRLS
//! fitting, prediction and approximate-posterior coefficient draws.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::data::{CellTable, Dataset, PatternIndex, Var};
use crate::math::{expit, softplus, sqrt};

/// Stop when the largest coefficient update falls below this.
pub const IRLS_TOLERANCE: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 25;
/// |coefficient| above this (log-odds) is treated as separation.
pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("missing value in design: variable {var} at row {row}")]
    MissingInDesign { var: Var, row: usize },
    #[error("variable {0} is not in the dataset")]
    UnknownVariable(Var),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank-deficient information matrix; collinear columns {0:?}")]
    RankDeficient(Vec<usize>),
    #[error("covariance matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("response value {0} is not 0 or 1")]
    NonBinaryResponse(f64),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("invalid formula: {0}")]
    InvalidFormula(String),
    #[error("no observations to fit")]
    NoData,
    #[error("fit did not converge: {0}")]
    NotConverged(Nonconvergence),
}

/// Why IRLS stopped without converging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonconvergence {
    /// A coefficient exceeded [`SEPARATION_BOUND`]; `column` is its index.
    Separation { column: usize },
    /// The information matrix became singular along the path.
    SingularInformation,
    MaxIterations,
}

impl fmt::Display for Nonconvergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonconvergence::Separation { column } => write!(f, "separation (coefficient {column} diverging)"),
            Nonconvergence::SingularInformation => f.write_str("information matrix became singular"),
            Nonconvergence::MaxIterations => write!(f, "no convergence within {IRLS_MAX_ITER} iterations"),
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GlmError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(GlmError::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// One column of a design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Main(Var),
    /// Product of two distinct variables, stored with operands ordered.
    Interaction(Var, Var),
}

impl Term {
    pub fn interaction(a: Var, b: Var) -> Term {
        if a <= b {
            Term::Interaction(a, b)
        } else {
            Term::Interaction(b, a)
        }
    }

    #[inline]
    pub fn eval(&self, row: u32) -> f64 {
        match *self {
            Term::Main(v) => ((row >> v.0) & 1) as f64,
            Term::Interaction(a, b) => ((row >> a.0) & (row >> b.0) & 1) as f64,
        }
    }

    pub fn involves(&self, var: Var) -> bool {
        match *self {
            Term::Main(v) => v == var,
            Term::Interaction(a, b) => a == var || b == var,
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> {
        let (a, b) = match *self {
            Term::Main(v) => (v, None),
            Term::Interaction(a, b) => (a, Some(b)),
        };
        core::iter::once(a).chain(b)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Main(v) => write!(f, "{v}"),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl core::str::FromStr for Term {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let var = |name: &str| {
            Var::from_name(name.trim()).ok_or_else(|| GlmError::InvalidFormula(alloc::format!("unknown variable `{name}`")))
        };
        match s.split_once(':') {
            None => Ok(Term::Main(var(s)?)),
            Some((a, b)) => {
                let (a, b) = (var(a)?, var(b)?);
                if a == b {
                    return Err(GlmError::InvalidFormula(alloc::format!("`{s}` multiplies a variable by itself")));
                }
                Ok(Term::interaction(a, b))
            }
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Logistic model: response plus ordered terms; the intercept is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelFormula {
    response: Var,
    terms: Vec<Term>,
}

impl ModelFormula {
    pub fn new(response: Var, terms: Vec<Term>) -> Result<Self, GlmError> {
        for (i, t) in terms.iter().enumerate() {
            if let Term::Interaction(a, b) = t {
                if a == b {
                    return Err(GlmError::InvalidFormula(alloc::format!("interaction {t} has equal operands")));
                }
            }
            if t.involves(response) {
                return Err(GlmError::InvalidFormula(alloc::format!("term {t} contains the response {response}")));
            }
            if terms[..i].contains(t) {
                return Err(GlmError::InvalidFormula(alloc::format!("duplicate term {t}")));
            }
        }
        Ok(ModelFormula { response, terms })
    }

    /// Parse `"X ~ C1 + C2 + C1:C2"`.
    pub fn parse(s: &str) -> Result<Self, GlmError> {
        let (lhs, rhs) = s.split_once('~').ok_or_else(|| GlmError::InvalidFormula(s.into()))?;
        let response =
            Var::from_name(lhs.trim()).ok_or_else(|| GlmError::InvalidFormula(alloc::format!("unknown response `{lhs}`")))?;
        let terms = rhs
            .split('+')
            .map(str::trim)
            .filter(|t| !t.is_empty() && *t != "1")
            .map(str::parse)
            .collect::<Result<Vec<Term>, _>>()?;
        ModelFormula::new(response, terms)
    }

    pub fn response(&self) -> Var {
        self.response
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        1 + self.terms.len()
    }

    /// Distinct variables appearing in terms, ascending.
    pub fn predictors(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.terms.iter().flat_map(|t| t.vars()).collect();
        v.sort();
        v.dedup();
        v
    }

    #[inline]
    pub fn design_row_into(&self, row: u32, out: &mut [f64]) {
        out[0] = 1.0;
        for (o, t) in out[1..].iter_mut().zip(&self.terms) {
            *o = t.eval(row);
        }
    }

    /// Linear predictor at the row bits `row`.
    #[inline]
    pub fn eta(&self, coef: &[f64], row: u32) -> f64 {
        let mut eta = coef[0];
        for (c, t) in coef[1..].iter().zip(&self.terms) {
            eta += c * t.eval(row);
        }
        eta
    }

    /// Fit to the weighted cells of an analysis table.
    pub fn fit_table(&self, table: &CellTable) -> Result<FittedGlm, GlmError> {
        let mut tally = Tally::new(self);
        for (row, w) in table.cells() {
            tally.add(row, w);
        }
        tally.fit(None)
    }

    /// Fit to the rows of a dataset; every referenced cell must be observed.
    pub fn fit_dataset(&self, data: &Dataset) -> Result<FittedGlm, GlmError> {
        let design = build_design(data, self)?;
        let y: Vec<f64> = data.rows().iter().map(|&r| self.response.of(r) as u8 as f64).collect();
        if data.require_complete(&[self.response]).is_err() {
            let row = (0..data.n()).find(|&r| data.is_missing(r, self.response)).unwrap();
            return Err(GlmError::MissingInDesign { var: self.response, row });
        }
        let mut fit = fit_logistic(&design, &y, None)?;
        fit.formula = Some(self.clone());
        Ok(fit)
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ 1", self.response)?;
        for t in &self.terms {
            write!(f, " + {t}")?;
        }
        Ok(())
    }
}

/// Aggregates rows into binomial groups keyed by the joint pattern of a
/// formula's predictors; with binary predictors this is a lossless
/// compression of the Bernoulli likelihood.
#[derive(Debug, Clone)]
pub struct Tally<'f> {
    formula: &'f ModelFormula,
    index: PatternIndex,
    trials: Vec<f64>,
    successes: Vec<f64>,
}

impl<'f> Tally<'f> {
    pub fn new(formula: &'f ModelFormula) -> Self {
        let index = PatternIndex::new(formula.predictors());
        let len = index.len();
        Tally { formula, index, trials: vec![0.0; len], successes: vec![0.0; len] }
    }

    #[inline]
    pub fn add(&mut self, row: u32, weight: f64) {
        let k = self.index.index(row);
        self.trials[k] += weight;
        if self.formula.response.of(row) {
            self.successes[k] += weight;
        }
    }

    pub fn fit(&self, start: Option<&[f64]>) -> Result<FittedGlm, GlmError> {
        let p = self.formula.n_coef();
        let occupied: Vec<usize> = (0..self.trials.len()).filter(|&k| self.trials[k] > 0.0).collect();
        if occupied.is_empty() {
            return Err(GlmError::NoData);
        }
        let mut design = Matrix::zeros(occupied.len(), p);
        let mut y = Vec::with_capacity(occupied.len());
        let mut w = Vec::with_capacity(occupied.len());
        for (i, &k) in occupied.iter().enumerate() {
            let row = self.index.expand(k);
            self.formula.design_row_into(row, &mut design.data[i * p..(i + 1) * p]);
            y.push(self.successes[k] / self.trials[k]);
            w.push(self.trials[k]);
        }
        let mut fit = irls(&design, &y, &w, start)?;
        fit.formula = Some(self.formula.clone());
        Ok(fit)
    }
}

/// Result of a logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGlm {
    /// Present when fitted through a formula.
    pub formula: Option<ModelFormula>,
    /// `[intercept, terms...]` on the log-odds scale.
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the final coefficients.
    pub covariance: Matrix,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub diagnostic: Option<Nonconvergence>,
}

impl FittedGlm {
    /// Error unless converged.
    pub fn ensure_converged(self) -> Result<Self, GlmError> {
        if self.converged {
            Ok(self)
        } else {
            Err(GlmError::NotConverged(self.diagnostic.unwrap_or(Nonconvergence::MaxIterations)))
        }
    }

    /// Probability at row bits, for formula fits.
    #[inline]
    pub fn prob_at(&self, row: u32) -> f64 {
        let f = self.formula.as_ref().expect("fit has a formula");
        expit(f.eta(&self.coefficients, row))
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|i| sqrt(self.covariance.get(i, i).max(0.0))).collect()
    }
}

/// Design matrix for `formula` over all rows of `data`.
pub fn build_design(data: &Dataset, formula: &ModelFormula) -> Result<Matrix, GlmError> {
    let vars = formula.predictors();
    if let Some(&v) = vars.iter().chain(core::iter::once(&formula.response)).find(|v| v.0 as usize >= data.n_vars()) {
        return Err(GlmError::UnknownVariable(v));
    }
    if let Err(crate::data::DataError::Missing { var, row }) = data.require_complete(&vars) {
        return Err(GlmError::MissingInDesign { var, row });
    }
    let p = formula.n_coef();
    let mut m = Matrix::zeros(data.n(), p);
    for (i, &row) in data.rows().iter().enumerate() {
        formula.design_row_into(row, &mut m.data[i * p..(i + 1) * p]);
    }
    Ok(m)
}

/// Maximum-likelihood logistic regression by IRLS.
///
/// `response` must be 0/1; `weights` are nonnegative (fractional allowed).
/// A fit that hits separation or the iteration cap is returned with
/// `converged == false`; a structurally rank-deficient design is an error.
pub fn fit_logistic(design: &Matrix, response: &[f64], weights: Option<&[f64]>) -> Result<FittedGlm, GlmError> {
    if response.len() != design.rows {
        return Err(GlmError::DimensionMismatch { expected: design.rows, got: response.len() });
    }
    if let Some(&y) = response.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(GlmError::NonBinaryResponse(y));
    }
    let ones;
    let w = match weights {
        Some(w) => {
            if w.len() != design.rows {
                return Err(GlmError::DimensionMismatch { expected: design.rows, got: w.len() });
            }
            if let Some(&x) = w.iter().find(|&&x| !(x >= 0.0)) {
                return Err(GlmError::NegativeWeight(x));
            }
            w
        }
        None => {
            ones = vec![1.0; design.rows];
            &ones
        }
    };
    if design.rows == 0 {
        return Err(GlmError::NoData);
    }
    irls(design, response, w, None)
}

/// Weighted Bernoulli log-likelihood; `y` may be a group proportion.
pub fn log_likelihood(design: &Matrix, y: &[f64], w: &[f64], coef: &[f64]) -> f64 {
    (0..design.rows)
        .map(|i| {
            let eta: f64 = design.row(i).iter().zip(coef).map(|(x, b)| x * b).sum();
            w[i] * (y[i] * eta - softplus(eta))
        })
        .sum()
}

/// Score vector `X'W(y - mu)`.
pub fn score(design: &Matrix, y: &[f64], w: &[f64], coef: &[f64]) -> Vec<f64> {
    let p = design.cols;
    let mut g = vec![0.0; p];
    for i in 0..design.rows {
        let x = design.row(i);
        let eta: f64 = x.iter().zip(coef).map(|(a, b)| a * b).sum();
        let r = w[i] * (y[i] - expit(eta));
        for j in 0..p {
            g[j] += x[j] * r;
        }
    }
    g
}

/// Fills the information `X'VX` and score `X'W(y - mu)` in one pass.
fn information_and_score(design: &Matrix, y: &[f64], w: &[f64], coef: &[f64], h: &mut [f64], g: &mut [f64]) {
    let p = design.cols;
    h.iter_mut().for_each(|x| *x = 0.0);
    g.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..design.rows {
        let x = design.row(i);
        let eta: f64 = x.iter().zip(coef).map(|(a, b)| a * b).sum();
        let mu = expit(eta);
        let r = w[i] * (y[i] - mu);
        let v = w[i] * mu * (1.0 - mu);
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            g[a] += xa * r;
            if v == 0.0 {
                continue;
            }
            let xv = xa * v;
            for (hab, xb) in h[a * p..a * p + a + 1].iter_mut().zip(&x[..=a]) {
                *hab += xv * xb;
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[b * p + a] = h[a * p + b];
        }
    }
}

pub(crate) fn irls(design: &Matrix, y: &[f64], w: &[f64], start: Option<&[f64]>) -> Result<FittedGlm, GlmError> {
    let p = design.cols;
    let mut beta = match start {
        Some(s) if s.len() == p => s.to_vec(),
        _ => {
            let mut b = vec![0.0; p];
            let has_intercept = p > 0 && (0..design.rows).all(|i| design.get(i, 0) == 1.0);
            let (sw, swy) = w.iter().zip(y).fold((0.0, 0.0), |(a, b), (wi, yi)| (a + wi, b + wi * yi));
            if has_intercept && sw > 0.0 {
                let ybar = ((swy + 0.5) / (sw + 1.0)).clamp(1e-6, 1.0 - 1e-6);
                b[0] = libm::log(ybar / (1.0 - ybar));
            }
            b
        }
    };
    let mut h = vec![0.0; p * p];
    let mut g = vec![0.0; p];
    let mut converged = false;
    let mut diagnostic = None;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        information_and_score(design, y, w, &beta, &mut h, &mut g);
        let l = match cholesky(&h, p) {
            Ok(l) => l,
            Err(cols) => {
                if iterations == 1 {
                    return Err(GlmError::RankDeficient(cols));
                }
                diagnostic = Some(Nonconvergence::SingularInformation);
                break;
            }
        };
        let delta = cholesky_solve(&l, p, &g);
        let mut max_step = 0.0f64;
        for (b, d) in beta.iter_mut().zip(&delta) {
            *b += d;
            max_step = max_step.max(d.abs());
        }
        if let Some(column) = beta.iter().position(|b| !(b.abs() <= SEPARATION_BOUND)) {
            diagnostic = Some(Nonconvergence::Separation { column });
            break;
        }
        if max_step < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged && diagnostic.is_none() {
        diagnostic = Some(Nonconvergence::MaxIterations);
    }
    // After a sub-tolerance step the information at the previous iterate
    // matches the final one to working precision.
    if !converged {
        information_and_score(design, y, w, &beta, &mut h, &mut g);
    }
    let covariance = match cholesky(&h, p) {
        Ok(l) => cholesky_inverse(&l, p),
        Err(_) => {
            converged = false;
            diagnostic.get_or_insert(Nonconvergence::SingularInformation);
            Matrix::zeros(p, p)
        }
    };
    let log_likelihood = log_likelihood(design, y, w, &beta);
    Ok(FittedGlm { formula: None, coefficients: beta, covariance, converged, iterations, log_likelihood, diagnostic })
}

/// Lower Cholesky factor of a symmetric positive-definite `p x p` matrix.
/// On failure returns the columns that are linearly dependent on earlier ones.
fn cholesky(a: &[f64], p: usize) -> Result<Vec<f64>, Vec<usize>> {
    let mut l = vec![0.0; p * p];
    let mut dependent = Vec::new();
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > 1e-10 * a[j * p + j].abs().max(f64::MIN_POSITIVE)) {
            dependent.push(j);
            continue;
        }
        let d = sqrt(d);
        l[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / d;
        }
    }
    if dependent.is_empty() {
        Ok(l)
    } else {
        Err(dependent)
    }
}

fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..p {
        let mut s = z[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    z
}

fn cholesky_inverse(l: &[f64], p: usize) -> Matrix {
    let mut inv = Matrix::zeros(p, p);
    let mut e = vec![0.0; p];
    for j in 0..p {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(l, p, &e);
        for i in 0..p {
            inv.set(i, j, col[i]);
        }
    }
    for i in 0..p {
        for j in 0..i {
            let s = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, s);
            inv.set(j, i, s);
        }
    }
    inv
}

/// Cholesky factor of a positive-semidefinite matrix; zero pivots give zero
/// columns.
fn psd_cholesky(a: &Matrix) -> Result<Vec<f64>, GlmError> {
    let p = a.rows;
    if a.cols != p {
        return Err(GlmError::DimensionMismatch { expected: p, got: a.cols });
    }
    let scale = (0..p).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if d < -tol || d.is_nan() {
            return Err(GlmError::NotPositiveSemidefinite);
        }
        if d <= tol {
            for i in j + 1..p {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                if s.abs() > 1e-8 * sqrt(scale) {
                    return Err(GlmError::NotPositiveSemidefinite);
                }
            }
            continue;
        }
        let d = sqrt(d);
        l[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / d;
        }
    }
    Ok(l)
}

/// `expit(design * coefficients)`, clamped into the open unit interval.
pub fn predict_prob(fit: &FittedGlm, design: &Matrix) -> Result<Vec<f64>, GlmError> {
    if design.cols != fit.coefficients.len() {
        return Err(GlmError::DimensionMismatch { expected: fit.coefficients.len(), got: design.cols });
    }
    Ok((0..design.rows)
        .map(|i| {
            let eta: f64 = design.row(i).iter().zip(&fit.coefficients).map(|(x, b)| x * b).sum();
            open_unit(expit(eta))
        })
        .collect())
}

#[inline]
pub(crate) fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// One draw from `Normal(coefficients, covariance)`.
pub fn draw_coefficients<R: Rng + ?Sized>(fit: &FittedGlm, rng: &mut R) -> Result<Vec<f64>, GlmError> {
    let p = fit.coefficients.len();
    if fit.covariance.rows != p {
        return Err(GlmError::DimensionMismatch { expected: p, got: fit.covariance.rows });
    }
    let l = psd_cholesky(&fit.covariance)?;
    let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    Ok((0..p).map(|i| fit.coefficients[i] + (0..=i).map(|k| l[i * p + k] * z[k]).sum::<f64>()).collect())
}

/// Independent Bernoulli draws.
pub fn sample_bernoulli<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<Vec<u8>, GlmError> {
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(GlmError::ProbabilityOutOfRange(p));
    }
    Ok(probs.iter().map(|&p| bernoulli(p, rng) as u8).collect())
}

#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}
