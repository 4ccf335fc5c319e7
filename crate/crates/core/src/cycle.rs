//! Per-phase scalar metrics over one cardiac cycle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mesh::{extract_isosurface_with, surface_area, DEFAULT_ISO};
use crate::par::{self, Exec};
use crate::volgrid::{mask_volume, slice_areas, Spacing, StackSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Cavity volume in mm³.
    Volume,
    /// Marching-cubes surface area in mm².
    SurfaceArea,
    /// Area (mm²) of the slice whose area varies most over the cycle.
    #[serde(rename = "slice-area")]
    MidSliceArea,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Volume => "volume",
            MetricKind::SurfaceArea => "surface-area",
            MetricKind::MidSliceArea => "slice-area",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume" => Ok(MetricKind::Volume),
            "surface-area" | "surface" => Ok(MetricKind::SurfaceArea),
            "slice-area" | "mid-slice-area" => Ok(MetricKind::MidSliceArea),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

/// One metric value per acquired phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSeries {
    pub metric: MetricKind,
    pub phases: Vec<u32>,
    pub values: Vec<f64>,
    /// Set iff `metric` is [`MetricKind::MidSliceArea`].
    pub mid_slice_index: Option<usize>,
}

impl CycleSeries {
    pub fn new(metric: MetricKind, phases: Vec<u32>, values: Vec<f64>, mid_slice_index: Option<usize>) -> Result<Self> {
        if phases.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} phases but {} values",
                phases.len(),
                values.len()
            )));
        }
        if phases.len() < 2 {
            return Err(Error::InvalidArgument("a cycle series needs at least 2 phases".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("series value {v} is not finite and non-negative")));
        }
        if (metric == MetricKind::MidSliceArea) != mid_slice_index.is_some() {
            return Err(Error::InvalidArgument("mid_slice_index must be set exactly for slice-area series".into()));
        }
        Ok(Self { metric, phases, values, mid_slice_index })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observed value at phase `t`.
    pub fn value_at(&self, t: u32) -> Option<f64> {
        self.phases.iter().position(|&p| p == t).map(|i| self.values[i])
    }
}

/// Slice index whose area has the largest population variance across
/// phases; ties resolve to the lowest index.
pub fn select_mid_slice(series: &StackSeries) -> usize {
    let per_phase: Vec<Vec<f64>> = series.phases().iter().map(|p| slice_areas(&p.mask)).collect();
    let n = per_phase.len() as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for z in 0..series.dims().nz {
        let mean = per_phase.iter().map(|a| a[z]).sum::<f64>() / n;
        let var = per_phase.iter().map(|a| (a[z] - mean).powi(2)).sum::<f64>() / n;
        if var > best.1 {
            best = (z, var);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SeriesOptions {
    /// Report surface area in voxel units instead of mm².
    pub surface_in_voxels: bool,
    pub exec: Exec,
}

pub fn build_series(series: &StackSeries, metric: MetricKind) -> CycleSeries {
    build_series_with(series, metric, SeriesOptions::default())
}

pub fn build_series_with(series: &StackSeries, metric: MetricKind, opts: SeriesOptions) -> CycleSeries {
    let phases = series.phase_indices();
    let (values, mid) = match metric {
        MetricKind::Volume => (par::map_slice(opts.exec, series.phases(), |p| mask_volume(&p.mask)), None),
        MetricKind::SurfaceArea => {
            let scale = if opts.surface_in_voxels { Spacing::unit() } else { series.spacing() };
            let values = par::map_slice(opts.exec, series.phases(), |p| {
                // Each phase is one task; keep the inner extraction sequential.
                let mesh = extract_isosurface_with(&p.mask, DEFAULT_ISO, scale, Exec::Sequential)
                    .expect("default iso level is valid");
                surface_area(&mesh)
            });
            (values, None)
        }
        MetricKind::MidSliceArea => {
            let z = select_mid_slice(series);
            let values = series.phases().iter().map(|p| slice_areas(&p.mask)[z]).collect();
            (values, Some(z))
        }
    };
    CycleSeries { metric, phases, values, mid_slice_index: mid }
}
