//! Affine feature scaling between physical units and network inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interval that normalized features are mapped onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetInterval {
    /// `[0, 1]`
    Unit,
    /// `[-1, 1]`
    Symmetric,
}

impl TargetInterval {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            TargetInterval::Unit => (0.0, 1.0),
            TargetInterval::Symmetric => (-1.0, 1.0),
        }
    }

    pub fn midpoint(self) -> f64 {
        let (lo, hi) = self.bounds();
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Per-feature source bounds plus the interval they are mapped onto.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub features: Vec<FeatureBounds>,
    pub target: TargetInterval,
}

impl NormalizationSpec {
    pub fn new(features: Vec<FeatureBounds>, target: TargetInterval) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidParams("normalization needs at least one feature".into()));
        }
        for f in &features {
            if !(f.min < f.max) || !f.min.is_finite() || !f.max.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "feature {} needs finite min < max, got [{}, {}]",
                    f.name, f.min, f.max
                )));
            }
        }
        Ok(Self { features, target })
    }

    /// Bounds taken from the observed per-column minimum and maximum.
    pub fn from_observed<'a>(
        names: &[&str],
        rows: impl IntoIterator<Item = &'a [f64]>,
        target: TargetInterval,
    ) -> Result<Self> {
        let mut mins = vec![f64::INFINITY; names.len()];
        let mut maxs = vec![f64::NEG_INFINITY; names.len()];
        for row in rows {
            if row.len() != names.len() {
                return Err(Error::shape("observed normalization", names.len(), row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        let features = names
            .iter()
            .zip(mins.into_iter().zip(maxs))
            .map(|(name, (min, max))| FeatureBounds {
                name: (*name).to_string(),
                min,
                max,
            })
            .collect();
        Self::new(features, target)
    }

    pub fn arity(&self) -> usize {
        self.features.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn normalize_one(&self, j: usize, x: f64) -> f64 {
        let (lo, hi) = self.target.bounds();
        let f = &self.features[j];
        lo + (x - f.min) / (f.max - f.min) * (hi - lo)
    }

    pub fn denormalize_one(&self, j: usize, y: f64) -> f64 {
        let (lo, hi) = self.target.bounds();
        let f = &self.features[j];
        f.min + (y - lo) / (hi - lo) * (f.max - f.min)
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.check(raw.len())?;
        Ok(raw.iter().enumerate().map(|(j, &x)| self.normalize_one(j, x)).collect())
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Result<Vec<f64>> {
        self.check(normalized.len())?;
        Ok(normalized
            .iter()
            .enumerate()
            .map(|(j, &y)| self.denormalize_one(j, y))
            .collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.arity() {
            return Err(Error::shape("normalization", self.arity(), len));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(target: TargetInterval) -> NormalizationSpec {
        NormalizationSpec::new(
            vec![
                FeatureBounds {
                    name: "theta_deg".into(),
                    min: -70.0,
                    max: 70.0,
                },
                FeatureBounds {
                    name: "n".into(),
                    min: 1.05,
                    max: 3.5,
                },
                FeatureBounds {
                    name: "l_nm".into(),
                    min: 100.0,
                    max: 1000.0,
                },
            ],
            target,
        )
        .unwrap()
    }

    #[test]
    fn maps_bounds_onto_interval() {
        let s = spec(TargetInterval::Unit);
        assert_eq!(s.normalize(&[-70.0, 1.05, 100.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(s.normalize(&[70.0, 3.5, 1000.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        let s = spec(TargetInterval::Symmetric);
        assert_eq!(s.normalize(&[0.0, 1.05, 1000.0]).unwrap(), vec![0.0, -1.0, 1.0]);
    }

    #[test]
    fn rejects_degenerate_bounds_and_wrong_arity() {
        let bad = vec![FeatureBounds {
            name: "x".into(),
            min: 1.0,
            max: 1.0,
        }];
        assert!(NormalizationSpec::new(bad, TargetInterval::Unit).is_err());
        assert!(spec(TargetInterval::Unit).normalize(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(theta in -70.0f64..70.0, n in 1.05f64..3.5, l in 100.0f64..1000.0, sym in any::<bool>()) {
            let s = spec(if sym { TargetInterval::Symmetric } else { TargetInterval::Unit });
            let raw = [theta, n, l];
            let back = s.denormalize(&s.normalize(&raw).unwrap()).unwrap();
            for (a, b) in raw.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
