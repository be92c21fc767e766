use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One exponential term `coeff · exp(exponents·y + offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub coeff: f64,
    pub exponents: Vec<f64>,
    pub offset: f64,
}

impl ExpTerm {
    pub fn new(coeff: f64, exponents: Vec<f64>, offset: f64) -> Self {
        Self { coeff, exponents, offset }
    }

    /// `ln coeff + offset`.
    pub fn log_weight(&self) -> f64 {
        self.coeff.ln() + self.offset
    }
}

#[derive(Serialize, Deserialize)]
struct LseRepr {
    n_vars: usize,
    terms: Vec<ExpTerm>,
}

/// `f(y) = ln Σ_k coeff_k · exp(a_k·y + b_k)`, convex in `y`.
///
/// Exponent rows are cached in sparse form; evaluation always subtracts the
/// largest exponent before exponentiating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LseRepr", into = "LseRepr")]
pub struct LseFunction {
    n_vars: usize,
    terms: Vec<ExpTerm>,
    log_w: Vec<f64>,
    sparse: Vec<Vec<(usize, f64)>>,
}

impl TryFrom<LseRepr> for LseFunction {
    type Error = Error;
    fn try_from(r: LseRepr) -> Result<Self> {
        LseFunction::new(r.n_vars, r.terms)
    }
}

impl From<LseFunction> for LseRepr {
    fn from(f: LseFunction) -> Self {
        LseRepr { n_vars: f.n_vars, terms: f.terms }
    }
}

impl LseFunction {
    pub fn new(n_vars: usize, terms: Vec<ExpTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Modeling("log-sum-exp function needs at least one term".into()));
        }
        for t in &terms {
            if t.exponents.len() != n_vars {
                return Err(Error::Dimension { expected: n_vars, got: t.exponents.len() });
            }
            if !(t.coeff > 0.0 && t.coeff.is_finite()) {
                return Err(Error::Modeling(format!("term coefficient must be positive, got {}", t.coeff)));
            }
            if !t.offset.is_finite() || t.exponents.iter().any(|a| !a.is_finite()) {
                return Err(Error::Modeling("non-finite exponent or offset".into()));
            }
        }
        let log_w = terms.iter().map(ExpTerm::log_weight).collect();
        let sparse = terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(i, a)| (i, *a))
                    .collect()
            })
            .collect();
        Ok(Self { n_vars, terms, log_w, sparse })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    /// Single-term functions are affine.
    pub fn is_affine(&self) -> bool {
        self.terms.len() == 1
    }

    fn exponents_into(&self, y: &[f64], z: &mut Vec<f64>) -> f64 {
        z.clear();
        let mut zmax = f64::NEG_INFINITY;
        for (lw, row) in self.log_w.iter().zip(&self.sparse) {
            let v = lw + row.iter().map(|(i, a)| a * y[*i]).sum::<f64>();
            zmax = zmax.max(v);
            z.push(v);
        }
        zmax
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(self.terms.len());
        let zmax = self.exponents_into(y, &mut z);
        zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln()
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_vars];
        self.value_grad_into(y, &mut g, None);
        g
    }

    pub fn hess(&self, y: &[f64]) -> DMatrix<f64> {
        let mut g = vec![0.0; self.n_vars];
        let mut h = DMatrix::zeros(self.n_vars, self.n_vars);
        self.value_grad_into(y, &mut g, Some((&mut h, 1.0)));
        h
    }

    /// Value, gradient written into `grad`, and `scale · ∇²f` accumulated into
    /// `hess` when given.
    pub(crate) fn value_grad_into(
        &self,
        y: &[f64],
        grad: &mut [f64],
        hess: Option<(&mut DMatrix<f64>, f64)>,
    ) -> f64 {
        let mut z = Vec::with_capacity(self.terms.len());
        let zmax = self.exponents_into(y, &mut z);
        let mut total = 0.0;
        for v in z.iter_mut() {
            *v = (*v - zmax).exp();
            total += *v;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (w, row) in z.iter_mut().zip(&self.sparse) {
            *w /= total;
            for (i, a) in row {
                grad[*i] += *w * a;
            }
        }
        if let Some((h, scale)) = hess {
            // Σ w_k a_k a_kᵀ − g gᵀ
            for (w, row) in z.iter().zip(&self.sparse) {
                let sw = scale * w;
                for (i, ai) in row {
                    for (j, aj) in row {
                        h[(*i, *j)] += sw * ai * aj;
                    }
                }
            }
            let nz: Vec<usize> = (0..self.n_vars).filter(|i| grad[*i] != 0.0).collect();
            for &i in &nz {
                for &j in &nz {
                    h[(i, j)] -= scale * grad[i] * grad[j];
                }
            }
        }
        zmax + total.ln()
    }

    /// Adds `c·y + d` inside every exponent: `f(y) + c·y + d` as a new function.
    pub fn plus_affine(&self, c: &[f64], d: f64) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                ExpTerm::new(
                    t.coeff,
                    t.exponents.iter().zip(c).map(|(a, b)| a + b).collect(),
                    t.offset + d,
                )
            })
            .collect();
        Self::new(self.n_vars, terms)
    }

    /// Re-expresses the function in `w` where `y = y_p + Z w`.
    pub(crate) fn reparametrize(&self, y_p: &[f64], z: &DMatrix<f64>) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let exps = (0..z.ncols())
                    .map(|c| t.exponents.iter().enumerate().map(|(r, a)| a * z[(r, c)]).sum())
                    .collect();
                let shift: f64 = t.exponents.iter().zip(y_p).map(|(a, b)| a * b).sum();
                ExpTerm::new(t.coeff, exps, t.offset + shift)
            })
            .collect();
        Self::new(z.ncols(), terms)
    }
}
