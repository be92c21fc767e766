use serde::{Deserialize, Serialize};

use super::lse::LseFunction;
use crate::error::{check_len, Error, Result};

/// Linear inequality `coeffs·y ≤ rhs` (or equality when stored as one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl AffineRow {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    /// Row with a single nonzero coefficient.
    pub fn unit(n_vars: usize, var: usize, coeff: f64, rhs: f64) -> Self {
        let mut coeffs = vec![0.0; n_vars];
        coeffs[var] = coeff;
        Self { coeffs, rhs }
    }

    /// `coeffs·y − rhs`; nonpositive when satisfied.
    pub fn residual(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - self.rhs
    }
}

/// `linear·y + constant + Σ weight_k · f_k(y)` with nonnegative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub linear: Vec<f64>,
    pub constant: f64,
    pub lse: Vec<(f64, LseFunction)>,
}

impl Objective {
    pub fn zero(n_vars: usize) -> Self {
        Self { linear: vec![0.0; n_vars], constant: 0.0, lse: Vec::new() }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(y).map(|(a, b)| a * b).sum();
        lin + self.constant + self.lse.iter().map(|(w, f)| w * f.eval(y)).sum::<f64>()
    }
}

/// Convex program in the variables `y`:
///
/// ```text
/// minimize    objective(y)
/// subject to  f(y) ≤ 0        for each LSE constraint
///             a·y ≤ b         for each affine row
///             a·y = b         for each equality row
///             lower ≤ y ≤ upper
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LseProgram {
    n_vars: usize,
    pub(crate) objective: Objective,
    pub(crate) lse_constraints: Vec<LseFunction>,
    pub(crate) affine: Vec<AffineRow>,
    pub(crate) equalities: Vec<AffineRow>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
}

impl LseProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: Objective::zero(n_vars),
            lse_constraints: Vec::new(),
            affine: Vec::new(),
            equalities: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n_vars],
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn lse_constraints(&self) -> &[LseFunction] {
        &self.lse_constraints
    }

    pub fn affine_rows(&self) -> &[AffineRow] {
        &self.affine
    }

    pub fn equalities(&self) -> &[AffineRow] {
        &self.equalities
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    pub fn set_linear_objective(&mut self, linear: Vec<f64>, constant: f64) -> Result<()> {
        check_len(self.n_vars, linear.len())?;
        self.objective.linear = linear;
        self.objective.constant = constant;
        Ok(())
    }

    pub fn add_objective_lse(&mut self, weight: f64, f: LseFunction) -> Result<()> {
        check_len(self.n_vars, f.n_vars())?;
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Modeling(format!("objective weight must be nonnegative, got {weight}")));
        }
        self.objective.lse.push((weight, f));
        Ok(())
    }

    pub fn add_lse_constraint(&mut self, f: LseFunction) -> Result<()> {
        check_len(self.n_vars, f.n_vars())?;
        self.lse_constraints.push(f);
        Ok(())
    }

    pub fn add_affine(&mut self, row: AffineRow) -> Result<()> {
        check_len(self.n_vars, row.coeffs.len())?;
        self.affine.push(row);
        Ok(())
    }

    pub fn add_equality(&mut self, row: AffineRow) -> Result<()> {
        check_len(self.n_vars, row.coeffs.len())?;
        self.equalities.push(row);
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> Result<()> {
        if var >= self.n_vars {
            return Err(Error::Dimension { expected: self.n_vars, got: var + 1 });
        }
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Modeling(format!("invalid bounds [{lower}, {upper}] on variable {var}")));
        }
        self.lower[var] = lower;
        self.upper[var] = upper;
        Ok(())
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.eval(y)
    }

    /// Largest constraint violation at `y` (0 when feasible). Equalities count
    /// by absolute residual.
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for f in &self.lse_constraints {
            worst = worst.max(f.eval(y));
        }
        for r in &self.affine {
            worst = worst.max(r.residual(y));
        }
        for r in &self.equalities {
            worst = worst.max(r.residual(y).abs());
        }
        for (i, v) in y.iter().enumerate() {
            worst = worst.max(self.lower[i] - v).max(v - self.upper[i]);
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProgramRepr::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: ProgramRepr = serde_json::from_str(s)?;
        repr.try_into()
    }
}

// JSON has no infinities, so open bounds are written as null.
#[derive(Serialize, Deserialize)]
struct ProgramRepr {
    n_vars: usize,
    objective: Objective,
    lse_constraints: Vec<LseFunction>,
    affine: Vec<AffineRow>,
    equalities: Vec<AffineRow>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl From<&LseProgram> for ProgramRepr {
    fn from(p: &LseProgram) -> Self {
        let finite = |v: &f64| v.is_finite().then_some(*v);
        Self {
            n_vars: p.n_vars,
            objective: p.objective.clone(),
            lse_constraints: p.lse_constraints.clone(),
            affine: p.affine.clone(),
            equalities: p.equalities.clone(),
            lower: p.lower.iter().map(finite).collect(),
            upper: p.upper.iter().map(finite).collect(),
        }
    }
}

impl TryFrom<ProgramRepr> for LseProgram {
    type Error = Error;
    fn try_from(r: ProgramRepr) -> Result<Self> {
        let mut p = LseProgram::new(r.n_vars);
        p.set_linear_objective(r.objective.linear, r.objective.constant)?;
        for (w, f) in r.objective.lse {
            p.add_objective_lse(w, f)?;
        }
        for f in r.lse_constraints {
            p.add_lse_constraint(f)?;
        }
        for row in r.affine {
            p.add_affine(row)?;
        }
        for row in r.equalities {
            p.add_equality(row)?;
        }
        check_len(r.n_vars, r.lower.len())?;
        check_len(r.n_vars, r.upper.len())?;
        for i in 0..r.n_vars {
            p.set_bounds(
                i,
                r.lower[i].unwrap_or(f64::NEG_INFINITY),
                r.upper[i].unwrap_or(f64::INFINITY),
            )?;
        }
        Ok(p)
    }
}
