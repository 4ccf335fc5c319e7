//! On-disk datasets and reports.
//!
//! A dataset is a directory holding `manifest.json` and one raw blob per
//! volume. Blobs are z-major and little-endian. `dtype` describes the mask
//! slot: `"u8"` holds binary masks (bytes 0/1), `"f32"` holds probability
//! maps. Intensity blobs are always `f32`.
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "dims": [12, 86, 98],
//!   "spacing_mm": [0.5, 0.5, 1.5],
//!   "dtype": "u8",
//!   "byte_order": "little",
//!   "phases": [{ "t": 0, "mask": "mask_000.raw", "intensity": "int_000.raw" }]
//! }
//! ```
//!
//! `dims` is `[nz, ny, nx]`; `spacing_mm` is `[dx, dy, dz]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agreement::{BlandAltmanReport, MeanAbsDifference, ProportionalBias};
use crate::cycle::CycleSeries;
use crate::fitting::{EfResult, PhaseSelection};
use crate::fmt::format_g;
use crate::metrics::Icc;
use crate::noise::StackNoise;
use crate::phantom::GroundTruth;
use crate::volgrid::{BinaryMask, Dims, IntensityVolume, Phase, ProbabilityMap, Spacing, StackSeries, Volume};
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPhase {
    pub t: u32,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub schema_version: String,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: Dtype,
    pub byte_order: String,
    pub phases: Vec<ManifestPhase>,
}

impl StackManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| not_found_or_io(path, e))?;
        let raw: Value = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        match raw.get("schema_version") {
            Some(Value::String(v)) if v == SCHEMA_VERSION => {}
            Some(v) => return Err(Error::UnknownSchema(v.as_str().map_or_else(|| v.to_string(), str::to_owned))),
            None => return Err(Error::Manifest(format!("{}: missing schema_version", path.display()))),
        }
        let m: StackManifest = serde_json::from_value(raw).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if m.byte_order != "little" {
            return Err(Error::Manifest(format!("unsupported byte_order {:?}", m.byte_order)));
        }
        m.dims()?;
        m.spacing()?;
        if m.phases.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(Error::Manifest("phase t values must be strictly increasing".into()));
        }
        Ok(m)
    }

    pub fn dims(&self) -> Result<Dims> {
        let [nz, ny, nx] = self.dims;
        Dims::new(nz, ny, nx).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn spacing(&self) -> Result<Spacing> {
        let [dx, dy, dz] = self.spacing_mm;
        Spacing::new(dx, dy, dz).map_err(|e| Error::Manifest(e.to_string()))
    }

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

fn not_found_or_io(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io(e)
    }
}

fn read_blob(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| not_found_or_io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch { path: path.to_path_buf(), expected: expected as u64, found: bytes.len() as u64 });
    }
    Ok(bytes)
}

fn read_mask(path: &Path, dims: Dims, spacing: Spacing) -> Result<BinaryMask> {
    let bytes = read_blob(path, dims.len())?;
    if let Some((offset, &value)) = bytes.iter().enumerate().find(|(_, &b)| b > 1) {
        return Err(Error::NonBinary { path: path.to_path_buf(), offset, value });
    }
    BinaryMask::new(dims, spacing, bytes.into_iter().map(|b| b == 1).collect())
}

fn read_f32(path: &Path, dims: Dims) -> Result<Vec<f32>> {
    let bytes = read_blob(path, dims.len() * 4)?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn read_intensity(path: &Path, dims: Dims, spacing: Spacing) -> Result<IntensityVolume> {
    IntensityVolume::new(dims, spacing, read_f32(path, dims)?)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

fn read_probability(path: &Path, dims: Dims, spacing: Spacing) -> Result<ProbabilityMap> {
    ProbabilityMap::new(dims, spacing, read_f32(path, dims)?)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Probability maps with optional intensities, one per phase.
#[derive(Debug, Clone)]
pub struct ProbabilityPhase {
    pub index: u32,
    pub prob: ProbabilityMap,
    pub intensity: Option<IntensityVolume>,
}

/// Contents of a dataset directory.
#[derive(Debug, Clone)]
pub enum Dataset {
    Masks(StackSeries),
    Probabilities(Vec<ProbabilityPhase>),
}

/// Reads either kind of dataset.
pub fn read_dataset(manifest: &Path) -> Result<Dataset> {
    let m = StackManifest::read(manifest)?;
    let (dims, spacing) = (m.dims()?, m.spacing()?);
    let dir = base_dir(manifest);
    let intensity = |p: &ManifestPhase| -> Result<Option<IntensityVolume>> {
        p.intensity.as_ref().map(|f| read_intensity(&dir.join(f), dims, spacing)).transpose()
    };
    match m.dtype {
        Dtype::U8 => {
            let mut phases = Vec::with_capacity(m.phases.len());
            for p in &m.phases {
                let mask = read_mask(&dir.join(&p.mask), dims, spacing)?;
                phases.push(Phase { index: p.t, mask, intensity: intensity(p)? });
            }
            Ok(Dataset::Masks(StackSeries::new(phases).map_err(|e| Error::Manifest(e.to_string()))?))
        }
        Dtype::F32 => {
            if m.phases.len() < 2 {
                return Err(Error::Manifest("a dataset needs at least 2 phases".into()));
            }
            let mut phases = Vec::with_capacity(m.phases.len());
            for p in &m.phases {
                let prob = read_probability(&dir.join(&p.mask), dims, spacing)?;
                phases.push(ProbabilityPhase { index: p.t, prob, intensity: intensity(p)? });
            }
            Ok(Dataset::Probabilities(phases))
        }
    }
}

/// Reads a binary-mask dataset.
pub fn read_stack_series(manifest: &Path) -> Result<StackSeries> {
    match read_dataset(manifest)? {
        Dataset::Masks(s) => Ok(s),
        Dataset::Probabilities(_) => Err(Error::Manifest(format!(
            "{} holds probability maps (dtype f32), not binary masks",
            manifest.display()
        ))),
    }
}

fn mask_name(t: u32) -> String {
    format!("mask_{t:03}.raw")
}

fn intensity_name(t: u32) -> String {
    format!("int_{t:03}.raw")
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn write_manifest(dir: &Path, dims: Dims, spacing: Spacing, dtype: Dtype, phases: Vec<ManifestPhase>) -> Result<PathBuf> {
    let m = StackManifest {
        schema_version: SCHEMA_VERSION.into(),
        dims: dims.as_array(),
        spacing_mm: [spacing.dx, spacing.dy, spacing.dz],
        dtype,
        byte_order: "little".into(),
        phases,
    };
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, m.to_json())?;
    Ok(path)
}

/// Writes `manifest.json`, `mask_%03d.raw` and `int_%03d.raw` (named by
/// phase index) into `dir`, creating it if needed.
pub fn write_stack_series(series: &StackSeries, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(series.len());
    for p in series.phases() {
        let mask = mask_name(p.index);
        fs::write(dir.join(&mask), p.mask.data().iter().map(|&b| b as u8).collect::<Vec<u8>>())?;
        let intensity = match &p.intensity {
            Some(v) => {
                let name = intensity_name(p.index);
                fs::write(dir.join(&name), f32_bytes(v.data()))?;
                Some(name)
            }
            None => None,
        };
        entries.push(ManifestPhase { t: p.index, mask, intensity });
    }
    write_manifest(dir, series.dims(), series.spacing(), Dtype::U8, entries)
}

/// Writes a probability-map dataset (`dtype` `"f32"`).
pub fn write_probability_series(phases: &[ProbabilityPhase], dir: &Path) -> Result<PathBuf> {
    let first = phases.first().ok_or(Error::Empty("probability series"))?;
    if phases.len() < 2 {
        return Err(Error::InvalidArgument("a dataset needs at least 2 phases".into()));
    }
    let (dims, spacing) = (first.prob.dims(), first.prob.spacing());
    if phases.windows(2).any(|w| w[0].index >= w[1].index) {
        return Err(Error::InvalidArgument("phase indices must be strictly increasing".into()));
    }
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(phases.len());
    for p in phases {
        first.prob.check_same_dims(&p.prob)?;
        if p.prob.spacing() != spacing {
            return Err(Error::InvalidArgument("phases differ in spacing".into()));
        }
        let mask = mask_name(p.index);
        fs::write(dir.join(&mask), f32_bytes(p.prob.data()))?;
        let intensity = match &p.intensity {
            Some(v) => {
                first.prob.check_same_dims(v)?;
                let name = intensity_name(p.index);
                fs::write(dir.join(&name), f32_bytes(v.data()))?;
                Some(name)
            }
            None => None,
        };
        entries.push(ManifestPhase { t: p.index, mask, intensity });
    }
    write_manifest(dir, dims, spacing, Dtype::F32, entries)
}

/// Writes one intensity blob per phase next to copies of the masks, for
/// derived datasets such as noise-corrupted series.
pub fn write_series_with_intensities(series: &StackSeries, intensities: &[IntensityVolume], dir: &Path) -> Result<PathBuf> {
    if intensities.len() != series.len() {
        return Err(Error::InvalidArgument(format!("{} intensity volumes for {} phases", intensities.len(), series.len())));
    }
    let phases = series
        .phases()
        .iter()
        .zip(intensities)
        .map(|(p, v)| {
            p.mask.check_same_dims(v)?;
            Ok(Phase { index: p.index, mask: p.mask.clone(), intensity: Some(v.clone()) })
        })
        .collect::<Result<Vec<_>>>()?;
    write_stack_series(&StackSeries::new(phases)?, dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// Header plus rows of preformatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// CSV text with `\n` line endings.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }
}

/// Serializable result with a JSON and a CSV rendering.
pub trait Report: Serialize {
    fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        render_json(&value, 0, &mut out);
        out.push('\n');
        out
    }

    /// One row whose columns are the flattened leaves of the JSON object;
    /// nested keys are joined with `.` and array positions appended as `_i`.
    fn to_table(&self) -> Table {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut cols = Vec::new();
        flatten("", &value, &mut cols);
        let (header, row): (Vec<String>, Vec<String>) = cols.into_iter().unzip();
        Table { header, rows: vec![row] }
    }
}

/// Number rendering used by all reports: C `%.6g`, integers verbatim.
pub fn format_number(n: &serde_json::Number) -> String {
    if let Some(i) = n.as_i64() {
        i.to_string()
    } else if let Some(u) = n.as_u64() {
        u.to_string()
    } else {
        let x = n.as_f64().expect("json number");
        format_g(x, 6)
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("null".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(format_number(n)),
        Value::String(s) => Some(serde_json::to_string(s).expect("string serializes")),
        _ => None,
    }
}

fn render_json(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    if let Some(s) = scalar(v) {
        out.push_str(&s);
        return;
    }
    match v {
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(|i| scalar(i).is_some()) => {
            let parts: Vec<String> = items.iter().filter_map(scalar).collect();
            out.push('[');
            out.push_str(&parts.join(", "));
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                render_json(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                render_json(item, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        _ => unreachable!("scalars handled above"),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, item, out);
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&format!("{prefix}_{i}"), item, out);
            }
        }
        Value::Null => out.push((prefix.to_owned(), String::new())),
        Value::String(s) => out.push((prefix.to_owned(), s.clone())),
        Value::Bool(b) => out.push((prefix.to_owned(), b.to_string())),
        Value::Number(n) => out.push((prefix.to_owned(), format_number(n))),
    }
}

/// Writes `report` to `path` as JSON or CSV.
pub fn write_report<R: Report + ?Sized>(report: &R, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.to_table().to_csv(),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Writes a table as CSV.
pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    fs::write(path, table.to_csv())?;
    Ok(())
}

impl Report for EfResult {}
impl Report for BlandAltmanReport {}
impl Report for MeanAbsDifference {}
impl Report for ProportionalBias {}
impl Report for Icc {}
impl Report for GroundTruth {}
impl Report for Vec<StackNoise> {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["phase", "model", "sigma"]);
        for s in self {
            t.push(vec![s.phase.to_string(), s.model.to_string(), format_g(s.sigma, 6)]);
        }
        t
    }
}

impl Report for CycleSeries {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["phase", "value"]);
        for (p, v) in self.phases.iter().zip(&self.values) {
            t.push(vec![p.to_string(), format_g(*v, 6)]);
        }
        t
    }
}

impl Report for PhaseSelection {
    /// Fitted curve samples.
    fn to_table(&self) -> Table {
        let mut t = Table::new(["phase", "fitted"]);
        for (x, y) in &self.curve_samples {
            t.push(vec![format_g(*x, 6), format_g(*y, 6)]);
        }
        t
    }
}

/// Observed points and fitted samples in one plot-ready table with
/// columns `kind,phase,value` (`kind` is `observed` or `fitted`).
pub fn curve_table(series: &CycleSeries, selection: &PhaseSelection) -> Table {
    let mut t = Table::new(["kind", "phase", "value"]);
    for (p, v) in series.phases.iter().zip(&series.values) {
        t.push(vec!["observed".into(), p.to_string(), format_g(*v, 6)]);
    }
    for (x, y) in &selection.curve_samples {
        t.push(vec!["fitted".into(), format_g(*x, 6), format_g(*y, 6)]);
    }
    t
}

/// Reinterprets voxel data as a different element type of the same grid.
pub fn volume_like<T, U>(like: &Volume<T>, data: Vec<U>) -> Result<Volume<U>> {
    Volume::new(like.dims(), like.spacing(), data)
}
