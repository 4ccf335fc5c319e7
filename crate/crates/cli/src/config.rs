//! Pipeline configuration. A JSON file mirrors every command-line flag;
//! flags given on the command line win over the file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use ventriq::cycle::MetricKind;
use ventriq::fitting::FitMethod;
use ventriq::noise::{NoiseModel, SnrReference};
use ventriq::phantom::PhantomSpec;
use ventriq::stackio::ReportFormat;
use ventriq::volgrid::{Dims, Spacing, DEFAULT_THRESHOLD};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub metric: MetricKind,
    pub fit: FitMethod,
    /// EF from observed volumes at the snapped phases; otherwise from the
    /// fitted curve at the unsnapped extrema.
    pub snap: bool,
    /// Threshold, opening and hole filling for probability-map inputs.
    pub postprocess: bool,
    pub threshold: f64,
    pub seed: u64,
    pub format: ReportFormat,
    pub noise: NoiseConfig,
    pub phantom: PhantomConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::MidSliceArea,
            fit: FitMethod::Gp,
            snap: true,
            postprocess: true,
            threshold: DEFAULT_THRESHOLD,
            seed: DEFAULT_SEED,
            format: ReportFormat::Json,
            noise: NoiseConfig::default(),
            phantom: PhantomConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub model: NoiseModel,
    /// `None` means 20 for the mixed model and 30 otherwise.
    pub snr: Option<f64>,
    pub snr_on: SnrReference,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { model: NoiseModel::Rician, snr: None, snr_on: SnrReference::Raw }
    }
}

impl NoiseConfig {
    pub const DEFAULT_SNR: f64 = 30.0;

    pub fn effective_snr(&self) -> f64 {
        self.snr.unwrap_or(match self.model {
            NoiseModel::Mixed => ventriq::noise::MIXED_SNR,
            _ => Self::DEFAULT_SNR,
        })
    }
}

/// Phantom parameters; the seed comes from [`PipelineConfig::seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: Dims,
    pub spacing: Spacing,
    pub phases: u32,
    pub ef: f64,
    pub ved: f64,
    pub es_fraction: f64,
    pub wall_thickness: f64,
    pub intensities: [f32; 3],
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let s = PhantomSpec::default();
        Self {
            dims: s.dims,
            spacing: s.spacing,
            phases: s.n_phases,
            ef: s.ef_target,
            ved: s.v_ed_target,
            es_fraction: s.es_phase_fraction,
            wall_thickness: s.wall_thickness,
            intensities: s.intensities,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self, seed: u64) -> PhantomSpec {
        PhantomSpec {
            dims: self.dims,
            spacing: self.spacing,
            n_phases: self.phases,
            v_ed_target: self.ved,
            ef_target: self.ef,
            es_phase_fraction: self.es_fraction,
            wall_thickness: self.wall_thickness,
            intensities: self.intensities,
            seed,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.threshold >= 0.0 && self.threshold <= 1.0) {
            return Err(CliError::usage(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if let Some(snr) = self.noise.snr {
            if snr.is_nan() || snr <= 0.0 {
                return Err(CliError::usage(format!("snr must be > 0, got {snr}")));
            }
        }
        self.phantom.spec(self.seed).validate().map_err(|e| CliError::usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = PipelineConfig {
            metric: MetricKind::SurfaceArea,
            fit: FitMethod::Poly4,
            threshold: 0.3,
            format: ReportFormat::Csv,
            ..Default::default()
        };
        cfg.noise.model = NoiseModel::Mixed;
        cfg.noise.snr = Some(12.5);
        cfg.noise.snr_on = SnrReference::Normalized;
        cfg.phantom.ef = 61.25;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        let text = serde_json::to_string(&PipelineConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"metric": "volume", "noise": {"model": "mixed"}}"#).unwrap();
        assert_eq!(cfg.metric, MetricKind::Volume);
        assert_eq!(cfg.fit, FitMethod::Gp);
        assert_eq!(cfg.noise.effective_snr(), 20.0);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"metrc": "volume"}"#).is_err());
    }
}
