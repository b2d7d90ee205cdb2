//! Min-max scaling of the context window.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fitted min/max of a context; constant contexts are degenerate and map
/// every value to 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: f64,
    pub max: f64,
}

impl ScalerParams {
    pub fn fit(context: &[f64]) -> Result<Self> {
        if context.is_empty() {
            return Err(Error::input("cannot fit a scaler on an empty context"));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in context {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("context value {v}")));
            }
            min = min.min(*v);
            max = max.max(*v);
        }
        Ok(ScalerParams { min, max })
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    /// Inverse transform; for a degenerate scaler every point maps back to
    /// the constant context level.
    pub fn invert(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }

    pub fn apply_slice(&self, vs: &[f64]) -> Vec<f64> {
        vs.iter().map(|v| self.apply(*v)).collect()
    }

    pub fn invert_slice(&self, vs: &[f64]) -> Vec<f64> {
        vs.iter().map(|v| self.invert(*v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_map_on_known_context() {
        let s = ScalerParams::fit(&[2.0, 4.0]).unwrap();
        assert_eq!(s.apply(2.0), 0.0);
        assert_eq!(s.apply(4.0), 1.0);
        assert_eq!(s.apply(3.0), 0.5);
    }

    #[test]
    fn degenerate_context_maps_to_half() {
        let s = ScalerParams::fit(&[7.0, 7.0, 7.0]).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.apply(7.0), 0.5);
        assert_eq!(s.invert(0.5), 7.0);
    }

    #[test]
    fn round_trip_within_range() {
        let s = ScalerParams::fit(&[-3.0, 11.0]).unwrap();
        for i in 0..100 {
            let v = -3.0 + 14.0 * (i as f64 / 99.0);
            let rt = s.invert(s.apply(v));
            assert!((rt - v).abs() < 1e-12, "v={v} rt={rt}");
        }
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(ScalerParams::fit(&[]).is_err());
        assert!(ScalerParams::fit(&[1.0, f64::INFINITY]).is_err());
    }
}
