use serde::{Deserialize, Serialize};

use super::lse::{ExpTerm, LseFunction};
use super::program::{AffineRow, LseProgram};
use crate::error::{check_len, Error, Result};

/// `coeff · Π x_j^{exponents_j}` over positive variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<f64>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<f64>) -> Self {
        Self { coeff, exponents }
    }

    pub fn constant(n_vars: usize, coeff: f64) -> Self {
        Self { coeff, exponents: vec![0.0; n_vars] }
    }

    /// `coeff · x_var^power`.
    pub fn var(n_vars: usize, var: usize, coeff: f64, power: f64) -> Self {
        let mut exponents = vec![0.0; n_vars];
        exponents[var] = power;
        Self { coeff, exponents }
    }

    pub fn n_vars(&self) -> usize {
        self.exponents.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeff * self.exponents.iter().zip(x).map(|(a, v)| v.powf(*a)).product::<f64>()
    }

    /// `ln m(e^y)`.
    pub fn log_eval(&self, y: &[f64]) -> f64 {
        self.coeff.ln() + self.exponents.iter().zip(y).map(|(a, v)| a * v).sum::<f64>()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial {
            coeff: self.coeff * other.coeff,
            exponents: self.exponents.iter().zip(&other.exponents).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn powf(&self, k: f64) -> Monomial {
        Monomial {
            coeff: self.coeff.powf(k),
            exponents: self.exponents.iter().map(|a| a * k).collect(),
        }
    }

    pub fn recip(&self) -> Monomial {
        self.powf(-1.0)
    }

    /// Replaces `x_var` by a positive constant.
    pub fn fix_variable(&self, var: usize, value: f64) -> Monomial {
        let mut m = self.clone();
        let a = m.exponents[var];
        if a != 0.0 {
            m.coeff *= value.powf(a);
            m.exponents[var] = 0.0;
        }
        m
    }

    /// Drops variables not listed in `keep`; they must have zero exponent.
    pub fn restrict(&self, keep: &[usize]) -> Result<Monomial> {
        let kept: f64 = keep.iter().map(|&k| self.exponents[k].abs()).sum();
        let total: f64 = self.exponents.iter().map(|a| a.abs()).sum();
        if kept != total {
            return Err(Error::Modeling("restricting away a variable that is still present".into()));
        }
        Ok(Monomial { coeff: self.coeff, exponents: keep.iter().map(|&k| self.exponents[k]).collect() })
    }

    fn to_term(&self) -> ExpTerm {
        ExpTerm::new(self.coeff, self.exponents.clone(), 0.0)
    }
}

/// Sum of monomials over a fixed variable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posynomial {
    pub n_vars: usize,
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(n_vars: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            check_len(n_vars, t.n_vars())?;
        }
        Ok(Self { n_vars, terms })
    }

    pub fn empty(n_vars: usize) -> Self {
        Self { n_vars, terms: Vec::new() }
    }

    pub fn push(&mut self, m: Monomial) {
        debug_assert_eq!(m.n_vars(), self.n_vars);
        self.terms.push(m);
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|m| m.eval(x)).sum()
    }

    /// Per-term values at `x`.
    pub fn term_values(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|m| m.eval(x)).collect()
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Posynomial {
        Posynomial { n_vars: self.n_vars, terms: self.terms.iter().map(|t| t.mul(m)).collect() }
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Posynomial { n_vars: self.n_vars, terms }
    }

    pub fn fix_variable(&self, var: usize, value: f64) -> Posynomial {
        Posynomial {
            n_vars: self.n_vars,
            terms: self.terms.iter().map(|m| m.fix_variable(var, value)).collect(),
        }
    }

    /// Replaces `x_var` by the posynomial `q`, expanding products. Every term
    /// must carry `x_var` to a nonnegative integer power.
    pub fn substitute(&self, var: usize, q: &Posynomial) -> Result<Posynomial> {
        let mut out = Posynomial::empty(self.n_vars);
        for m in &self.terms {
            let a = m.exponents[var];
            if a < 0.0 || a.fract() != 0.0 {
                return Err(Error::Modeling(format!(
                    "cannot substitute a posynomial for a variable raised to {a}"
                )));
            }
            let mut base = m.clone();
            base.exponents[var] = 0.0;
            let mut acc = vec![base];
            for _ in 0..a as usize {
                acc = acc.iter().flat_map(|b| q.terms.iter().map(move |t| b.mul(t))).collect();
            }
            out.terms.extend(acc);
        }
        Ok(out)
    }

    pub fn restrict(&self, keep: &[usize]) -> Result<Posynomial> {
        Ok(Posynomial {
            n_vars: keep.len(),
            terms: self.terms.iter().map(|m| m.restrict(keep)).collect::<Result<_>>()?,
        })
    }

    /// `ln f(e^y)` as a log-sum-exp function.
    pub fn to_lse(&self) -> Result<LseFunction> {
        check_coeffs(&self.terms)?;
        LseFunction::new(self.n_vars, self.terms.iter().map(Monomial::to_term).collect())
    }
}

fn check_coeffs(terms: &[Monomial]) -> Result<()> {
    if terms.is_empty() {
        return Err(Error::Modeling("posynomial has no terms".into()));
    }
    for m in terms {
        if !(m.coeff > 0.0) || !m.coeff.is_finite() {
            return Err(Error::Modeling(format!("GP coefficient must be positive, got {}", m.coeff)));
        }
    }
    Ok(())
}

/// ```text
/// minimize    Π_k f_k(x)
/// subject to  g_i(x) ≤ 1,  m_l(x) = 1,  lower ≤ x ≤ upper
/// ```
/// with posynomials `f_k`, `g_i` and monomials `m_l`. The objective is kept
/// as a product of factors so that products of ratios never get expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricProgram {
    pub n_vars: usize,
    pub objective: Vec<Posynomial>,
    pub constraints: Vec<Posynomial>,
    pub equalities: Vec<Monomial>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GeometricProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: Vec::new(),
            constraints: Vec::new(),
            equalities: Vec::new(),
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|f| f.eval(x)).product()
    }

    /// Keeps only the variables in `keep` (in that order).
    pub fn restrict(&self, keep: &[usize]) -> Result<GeometricProgram> {
        let posys = |v: &[Posynomial]| v.iter().map(|f| f.restrict(keep)).collect::<Result<Vec<_>>>();
        Ok(GeometricProgram {
            n_vars: keep.len(),
            objective: posys(&self.objective)?,
            constraints: posys(&self.constraints)?,
            equalities: self.equalities.iter().map(|m| m.restrict(keep)).collect::<Result<_>>()?,
            lower: keep.iter().map(|&k| self.lower[k]).collect(),
            upper: keep.iter().map(|&k| self.upper[k]).collect(),
        })
    }
}

/// Compiles a GP into log variables `y = ln x`.
///
/// Single-term factors and constraints become affine; bounds become log
/// bounds; an empty objective means a pure feasibility problem.
pub fn gp_to_lse(gp: &GeometricProgram) -> Result<LseProgram> {
    let n = gp.n_vars;
    check_len(n, gp.lower.len())?;
    check_len(n, gp.upper.len())?;
    let mut prog = LseProgram::new(n);
    let mut linear = vec![0.0; n];
    let mut constant = 0.0;
    for f in &gp.objective {
        check_len(n, f.n_vars)?;
        check_coeffs(&f.terms)?;
        if f.terms.len() == 1 {
            let m = &f.terms[0];
            linear.iter_mut().zip(&m.exponents).for_each(|(l, a)| *l += a);
            constant += m.coeff.ln();
        } else {
            prog.add_objective_lse(1.0, f.to_lse()?)?;
        }
    }
    prog.set_linear_objective(linear, constant)?;
    for g in &gp.constraints {
        check_len(n, g.n_vars)?;
        check_coeffs(&g.terms)?;
        if g.terms.len() == 1 {
            let m = &g.terms[0];
            prog.add_affine(AffineRow::new(m.exponents.clone(), -m.coeff.ln()))?;
        } else {
            prog.add_lse_constraint(g.to_lse()?)?;
        }
    }
    for m in &gp.equalities {
        check_len(n, m.n_vars())?;
        check_coeffs(std::slice::from_ref(m))?;
        prog.add_equality(AffineRow::new(m.exponents.clone(), -m.coeff.ln()))?;
    }
    for i in 0..n {
        let (lo, hi) = (gp.lower[i], gp.upper[i]);
        if lo < 0.0 || lo.is_nan() || hi.is_nan() || hi <= 0.0 {
            return Err(Error::Modeling(format!("variable {i} bounds [{lo}, {hi}] leave no positive values")));
        }
        let llo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
        prog.set_bounds(i, llo, hi.ln())?;
    }
    Ok(prog)
}
