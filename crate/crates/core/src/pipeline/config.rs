use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::DEFAULT_MAX_BATCH;
use crate::error::{Result, SessError};
use crate::pipeline::BASE_SIZE;

pub const MAX_SCALES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub enabled: bool,
    pub kernel: usize,
    pub sigma: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            enabled: true,
            kernel: 11,
            sigma: 5.0,
        }
    }
}

/// Hyperparameters of one enhancement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessConfig {
    pub n_scales: usize,
    pub window_w: usize,
    pub window_h: usize,
    pub step: usize,
    /// Percentage of lowest-scoring patches dropped before extraction.
    pub prefilter_ratio: f64,
    /// Fusion indicator threshold; values must exceed it to be averaged.
    pub theta: f32,
    pub smoothing: SmoothingConfig,
    pub target_class: usize,
    /// Patches per inference call while scoring.
    pub max_batch: usize,
}

impl Default for SessConfig {
    fn default() -> Self {
        SessConfig::qualitative()
    }
}

impl SessConfig {
    /// Visualization settings: 12 scales, no pre-filtering, smoothing on.
    pub fn qualitative() -> Self {
        SessConfig {
            n_scales: 12,
            window_w: BASE_SIZE,
            window_h: BASE_SIZE,
            step: BASE_SIZE,
            prefilter_ratio: 0.0,
            theta: 0.0,
            smoothing: SmoothingConfig::default(),
            target_class: 0,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }

    /// Evaluation settings: 10 scales, 90% pre-filtering, no smoothing.
    pub fn quantitative() -> Self {
        SessConfig {
            n_scales: 10,
            prefilter_ratio: 90.0,
            smoothing: SmoothingConfig {
                enabled: false,
                ..SmoothingConfig::default()
            },
            ..SessConfig::qualitative()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_SCALES).contains(&self.n_scales) {
            return Err(SessError::invalid(format!(
                "number of scales must lie in [1, {MAX_SCALES}], got {}",
                self.n_scales
            )));
        }
        if self.window_w == 0 || self.window_w != self.window_h {
            return Err(SessError::invalid(format!(
                "window must be square and nonempty, got {}x{}",
                self.window_w, self.window_h
            )));
        }
        if self.step == 0 {
            return Err(SessError::invalid("sliding-window step must be at least 1"));
        }
        if !(0.0..100.0).contains(&self.prefilter_ratio) {
            return Err(SessError::invalid(format!(
                "pre-filter ratio must lie in [0, 100), got {}",
                self.prefilter_ratio
            )));
        }
        if !self.theta.is_finite() {
            return Err(SessError::invalid("theta must be finite"));
        }
        if self.smoothing.enabled {
            crate::imgproc::gaussian_kernel(self.smoothing.kernel, self.smoothing.sigma)?;
        }
        if self.max_batch == 0 {
            return Err(SessError::invalid("max batch must be at least 1"));
        }
        Ok(())
    }

    /// Reads a TOML or JSON file, chosen by extension (`.json` means JSON).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SessError::io(path, e))?;
        let cfg: SessConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| SessError::invalid(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| SessError::invalid(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let q = SessConfig::qualitative();
        assert_eq!((q.n_scales, q.prefilter_ratio, q.smoothing.enabled), (12, 0.0, true));
        assert_eq!((q.smoothing.kernel, q.smoothing.sigma), (11, 5.0));
        let e = SessConfig::quantitative();
        assert_eq!((e.n_scales, e.prefilter_ratio, e.smoothing.enabled), (10, 90.0, false));
        q.validate().unwrap();
        e.validate().unwrap();
    }

    #[test]
    fn validation() {
        let bad = [
            SessConfig { n_scales: 0, ..Default::default() },
            SessConfig { n_scales: 13, ..Default::default() },
            SessConfig { step: 0, ..Default::default() },
            SessConfig { prefilter_ratio: 100.0, ..Default::default() },
            SessConfig { window_h: 200, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn load_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("cfg.toml");
        std::fs::write(&t, "n_scales = 4\nprefilter_ratio = 50.0\n[smoothing]\nenabled = false\n")
            .unwrap();
        let cfg = SessConfig::load(&t).unwrap();
        assert_eq!(cfg.n_scales, 4);
        assert_eq!(cfg.prefilter_ratio, 50.0);
        assert!(!cfg.smoothing.enabled);
        assert_eq!(cfg.step, 224);

        let j = dir.path().join("cfg.json");
        std::fs::write(&j, r#"{"n_scales": 2, "step": 112, "target_class": 3}"#).unwrap();
        let cfg = SessConfig::load(&j).unwrap();
        assert_eq!((cfg.n_scales, cfg.step, cfg.target_class), (2, 112, 3));

        std::fs::write(&j, r#"{"n_scales": 20}"#).unwrap();
        assert!(SessConfig::load(&j).is_err());
    }
}
