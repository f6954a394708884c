use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;
const COORD_TOL: f64 = 1e-12;

/// Aggregation weights: every entry in `[0, 1]`, entries sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexAction(Vec<f64>);

impl SimplexAction {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::check(&weights)?;
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "simplex needs at least one coordinate");
        Self(vec![1.0 / k as f64; k])
    }

    pub fn check(w: &[f64]) -> Result<()> {
        if w.is_empty() {
            return Err(Error::Simplex("no weights".into()));
        }
        if let Some((i, v)) = w
            .iter()
            .enumerate()
            .find(|(_, v)| !(-COORD_TOL..=1.0 + COORD_TOL).contains(*v))
        {
            return Err(Error::Simplex(format!("weight {i} = {v} outside [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Simplex(format!("weights sum to {sum}")));
        }
        Ok(())
    }

    /// Softmax of `logits`; always a valid simplex point.
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut w = logits.to_vec();
        crate::nn::softmax_row(&mut w);
        Self(w)
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SimplexAction {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexAction> for Vec<f64> {
    fn from(s: SimplexAction) -> Self {
        s.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SimplexAction::new(vec![0.25, 0.75]).is_ok());
        assert!(SimplexAction::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexAction::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexAction::new(vec![]).is_err());
        assert_eq!(SimplexAction::uniform(4).weights(), &[0.25; 4]);
    }

    #[test]
    fn logits_land_on_simplex() {
        for logits in [vec![0.0, 0.0], vec![800.0, -800.0, 3.0], vec![1e-3; 7]] {
            let a = SimplexAction::from_logits(&logits);
            assert!(SimplexAction::check(a.weights()).is_ok());
        }
    }
}
