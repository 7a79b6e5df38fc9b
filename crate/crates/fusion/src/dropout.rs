use serde::{Deserialize, Serialize};

use crate::feature_map::check_same;
use crate::{FeatureMap, FusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    /// Probability of keeping only RGB (depth zeroed).
    pub p_rgb: f64,
    /// Probability of keeping only depth (RGB zeroed).
    pub p_depth: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self { p_rgb: 0.2, p_depth: 0.2 }
    }
}

/// Which encoder maps reach the fusion stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutCase {
    /// `(f_rgb, 0)`.
    RgbOnly,
    /// `(0, f_depth)`.
    DepthOnly,
    Both,
}

impl DropoutCase {
    pub const ALL: [DropoutCase; 3] = [DropoutCase::RgbOnly, DropoutCase::DepthOnly, DropoutCase::Both];

    pub fn keeps_rgb(self) -> bool {
        self != DropoutCase::DepthOnly
    }

    pub fn keeps_depth(self) -> bool {
        self != DropoutCase::RgbOnly
    }
}

impl DropoutConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.p_rgb >= 0.0 && self.p_depth >= 0.0 && self.p_rgb + self.p_depth <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(FusionError::Config(format!("invalid dropout probabilities {self:?}")))
        }
    }

    /// Case selected by a uniform draw in `[0, 1)`.
    pub fn case_for(&self, draw: f64) -> Result<DropoutCase> {
        self.validate()?;
        Ok(if draw < self.p_rgb {
            DropoutCase::RgbOnly
        } else if draw < self.p_rgb + self.p_depth {
            DropoutCase::DepthOnly
        } else {
            DropoutCase::Both
        })
    }
}

/// Zeroes one of the two encoder maps according to `draw`.
pub fn modality_dropout(
    f_rgb: &FeatureMap,
    f_depth: &FeatureMap,
    config: &DropoutConfig,
    draw: f64,
) -> Result<(FeatureMap, FeatureMap)> {
    check_same(f_rgb, f_depth, "modality maps")?;
    Ok(apply_case(f_rgb, f_depth, config.case_for(draw)?))
}

pub fn apply_case(f_rgb: &FeatureMap, f_depth: &FeatureMap, case: DropoutCase) -> (FeatureMap, FeatureMap) {
    let rgb = if case.keeps_rgb() { f_rgb.clone() } else { f_rgb.zeros_like() };
    let depth = if case.keeps_depth() { f_depth.clone() } else { f_depth.zeros_like() };
    (rgb, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn maps() -> (FeatureMap, FeatureMap) {
        (
            FeatureMap::new(2, 2, DMatrix::from_element(4, 3, 1.5)).unwrap(),
            FeatureMap::new(2, 2, DMatrix::from_element(4, 3, -2.0)).unwrap(),
        )
    }

    #[test]
    fn first_case_zeroes_depth() {
        let (r, d) = maps();
        let (r2, d2) = modality_dropout(&r, &d, &DropoutConfig::default(), 0.1).unwrap();
        assert_eq!(r2, r);
        assert!(d2.is_zero());
        let (r3, d3) = modality_dropout(&r, &d, &DropoutConfig::default(), 0.3).unwrap();
        assert!(r3.is_zero());
        assert_eq!(d3, d);
    }

    #[test]
    fn zero_probabilities_pass_through() {
        let (r, d) = maps();
        let cfg = DropoutConfig { p_rgb: 0.0, p_depth: 0.0 };
        for draw in [0.0, 0.5, 0.999] {
            assert_eq!(modality_dropout(&r, &d, &cfg, draw).unwrap(), (r.clone(), d.clone()));
        }
    }

    #[test]
    fn invalid_probabilities() {
        let (r, d) = maps();
        let cfg = DropoutConfig { p_rgb: 0.7, p_depth: 0.4 };
        assert!(modality_dropout(&r, &d, &cfg, 0.5).is_err());
        assert!(DropoutConfig { p_rgb: -0.1, p_depth: 0.0 }.validate().is_err());
    }
}
