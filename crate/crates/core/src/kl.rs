//! Extended Kullback-Leibler divergence between finite non-negative measures
//! on a common finite set of atoms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-negative weights indexed by atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteMeasure {
    weights: Vec<f64>,
}

impl FiniteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not a finite non-negative number")));
        }
        Ok(FiniteMeasure { weights })
    }

    pub fn zero(n: usize) -> Self {
        FiniteMeasure { weights: vec![0.0; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn add(&self, other: &FiniteMeasure) -> Result<FiniteMeasure> {
        same_support(self, other)?;
        FiniteMeasure::new(self.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect())
    }
}

impl TryFrom<Vec<f64>> for FiniteMeasure {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        FiniteMeasure::new(v)
    }
}

impl From<FiniteMeasure> for Vec<f64> {
    fn from(m: FiniteMeasure) -> Self {
        m.weights
    }
}

fn same_support(a: &FiniteMeasure, b: &FiniteMeasure) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidMeasure(format!(
            "measures on {} and {} atoms",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `Σ β·(r ln r + 1 − r)` with `r = α/β`; `+inf` when β does not dominate α.
pub fn extended_kl(alpha: &FiniteMeasure, beta: &FiniteMeasure) -> Result<f64> {
    same_support(alpha, beta)?;
    let mut d = 0.0;
    for (&a, &b) in alpha.weights.iter().zip(&beta.weights) {
        if b == 0.0 {
            if a > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        // β(r ln r + 1 − r) = a ln(a/b) + b − a, with 0 ln 0 = 0.
        let t = if a == 0.0 { 0.0 } else { a * (a / b).ln() };
        d += (t + b - a).max(0.0);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares `D(α, β)` with `D(α + γ, β + γ)`.
pub fn check_shift_lemma(
    alpha: &FiniteMeasure,
    beta: &FiniteMeasure,
    gamma: &FiniteMeasure,
) -> Result<ShiftCheck> {
    let lhs = extended_kl(alpha, beta)?;
    let rhs = extended_kl(&alpha.add(gamma)?, &beta.add(gamma)?)?;
    Ok(ShiftCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - 1e-12,
    })
}
