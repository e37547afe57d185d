use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized inflation level per actuator, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AirMassVector(Vec<f64>);

impl AirMassVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::validation(format!("airmass[{i}]"), format!("value {v} outside [0, 1]")));
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied()
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.0.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.0.len(),
            });
        }
        Ok(())
    }

    /// Returns a copy with one actuator changed.
    pub fn with(&self, index: usize, value: f64) -> Result<Self> {
        if index >= self.0.len() {
            return Err(Error::InvalidArgument(format!(
                "actuator index {index} out of range (count {})",
                self.0.len()
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument("slider out of range".into()));
        }
        let mut v = self.0.clone();
        v[index] = value;
        Ok(Self(v))
    }

    /// `(1 − s)·a + s·b`, clamped against rounding drift.
    pub fn lerp(a: &Self, b: &Self, s: f64) -> Self {
        Self(a.0.iter().zip(&b.0).map(|(x, y)| ((1.0 - s) * x + s * y).clamp(0.0, 1.0)).collect())
    }
}

impl TryFrom<Vec<f64>> for AirMassVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AirMassVector> for Vec<f64> {
    fn from(a: AirMassVector) -> Self {
        a.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(AirMassVector::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(AirMassVector::new(vec![0.0, 1.2]).is_err());
        assert!(AirMassVector::new(vec![-0.01]).is_err());
        assert!(AirMassVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn lerp_endpoints_exact() {
        let a = AirMassVector::new(vec![0.1, 0.9]).unwrap();
        let b = AirMassVector::new(vec![0.7, 0.3]).unwrap();
        assert_eq!(AirMassVector::lerp(&a, &b, 0.0), a);
        assert_eq!(AirMassVector::lerp(&a, &b, 1.0), b);
    }

    #[test]
    fn serde_validates() {
        let ok: AirMassVector = serde_json::from_str("[0.0, 0.25]").unwrap();
        assert_eq!(ok.values(), &[0.0, 0.25]);
        assert!(serde_json::from_str::<AirMassVector>("[1.5]").is_err());
    }
}
