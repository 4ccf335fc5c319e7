use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ventriq::agreement::{
    bland_altman, mean_abs_difference, proportional_bias_check, BlandAltmanReport, MeanAbsDifference, Pair,
    PairedMeasurements, ProportionalBias,
};
use ventriq::cycle::{build_series, CycleSeries, MetricKind};
use ventriq::fitting::{
    estimate_ef, estimate_ef_interpolated, select_phases_from_fit, CycleFit, EfResult, GpHyper, PhaseSelection,
};
use ventriq::fmt::format_g;
use ventriq::metrics::{dice, hausdorff, icc_2_1, DistanceUnits, Icc};
use ventriq::morph::{postprocess_with, PostprocessConfig};
use ventriq::noise::{corrupt_series, NoiseModel, NoiseSpec, SnrReference, StackNoise};
use ventriq::phantom::generate;
use ventriq::stackio::{
    curve_table, read_dataset, write_report, write_series_with_intensities, write_stack_series, write_table, Dataset,
    Report, Table,
};
use ventriq::volgrid::{mask_volume, threshold, Phase, StackSeries};
use ventriq::{Error, Exec};

use crate::config::PipelineConfig;
use crate::{AgreeArgs, AnalyzeArgs, CliError, MetricsArgs, NoiseArgs, PhantomArgs};

pub const GROUND_TRUTH_NAME: &str = "ground_truth.json";
pub const NOISE_META_NAME: &str = "noise_meta.json";

fn validated(cfg: PipelineConfig) -> Result<PipelineConfig, CliError> {
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

pub fn phantom(mut cfg: PipelineConfig, a: PhantomArgs) -> Result<(), CliError> {
    let p = &mut cfg.phantom;
    p.phases = a.phases.unwrap_or(p.phases);
    p.ef = a.ef.unwrap_or(p.ef);
    p.ved = a.ved.unwrap_or(p.ved);
    p.es_fraction = a.es_fraction.unwrap_or(p.es_fraction);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let cfg = validated(cfg)?;

    let ph = generate(&cfg.phantom.spec(cfg.seed))?;
    write_stack_series(&ph.series, &a.out)?;
    write_report(&ph.truth, &a.out.join(GROUND_TRUTH_NAME), ventriq::stackio::ReportFormat::Json)?;
    Ok(())
}

/// Loads a dataset as binary masks. Probability maps are thresholded and,
/// unless disabled, opened and hole-filled; binary masks are used as stored.
pub fn load_masks(manifest: &Path, cfg: &PipelineConfig) -> Result<StackSeries, CliError> {
    match read_dataset(manifest)? {
        Dataset::Masks(s) => Ok(s),
        Dataset::Probabilities(phases) => {
            let pp = PostprocessConfig { threshold: cfg.threshold, ..Default::default() };
            let mut out = Vec::with_capacity(phases.len());
            for p in phases {
                let mask = if cfg.postprocess { postprocess_with(&p.prob, &pp)? } else { threshold(&p.prob, cfg.threshold)? };
                out.push(Phase { index: p.index, mask, intensity: p.intensity });
            }
            Ok(StackSeries::new(out)?)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub ef: EfResult,
    /// EF taken from observed volumes at acquired phases.
    pub snapped: bool,
    pub series: CycleSeries,
    pub selection: PhaseSelection,
}

impl Report for AnalyzeReport {
    fn to_table(&self) -> Table {
        let mut t = self.ef.to_table();
        t.header.push("snapped".into());
        t.rows[0].push(self.snapped.to_string());
        t
    }
}

/// The `analyze` pipeline as library calls.
pub fn analyze_series(series: &StackSeries, metric: MetricKind, cfg: &PipelineConfig) -> Result<AnalyzeReport, CliError> {
    let cs = build_series(series, metric);
    let init = GpHyper::default();
    let fit = CycleFit::fit(&cs, cfg.fit, &init, Exec::default())?;
    let selection = select_phases_from_fit(&cs, &fit)?;
    let volumes = if metric == MetricKind::Volume { cs.clone() } else { build_series(series, MetricKind::Volume) };
    let ef = if cfg.snap {
        estimate_ef(&volumes, &selection)?
    } else {
        estimate_ef_interpolated(&volumes, &selection, &init)?
    };
    Ok(AnalyzeReport { ef, snapped: cfg.snap, series: cs, selection })
}

pub fn analyze(mut cfg: PipelineConfig, a: AnalyzeArgs) -> Result<(), CliError> {
    cfg.metric = a.metric.unwrap_or(cfg.metric);
    cfg.fit = a.fit.unwrap_or(cfg.fit);
    cfg.threshold = a.threshold.unwrap_or(cfg.threshold);
    cfg.format = a.format.unwrap_or(cfg.format);
    cfg.snap &= !a.interpolate;
    cfg.postprocess &= !a.no_postprocess;
    let cfg = validated(cfg)?;

    let series = load_masks(&a.stacks, &cfg)?;
    let report = analyze_series(&series, cfg.metric, &cfg)?;
    ensure_parent(&a.out)?;
    write_report(&report, &a.out, cfg.format)?;
    if let Some(curve) = &a.curve {
        ensure_parent(curve)?;
        write_table(&curve_table(&report.series, &report.selection), curve)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct PhaseMetrics {
    pub phase: u32,
    pub dice: f64,
    /// `None` when either mask is empty.
    pub hausdorff_mm: Option<f64>,
    pub hausdorff_voxel: Option<f64>,
    pub pred_volume_mm3: f64,
    pub ref_volume_mm3: f64,
}

#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub mean_dice: f64,
    pub phases: Vec<PhaseMetrics>,
}

impl Report for MetricsReport {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["phase", "dice", "hausdorff_mm", "hausdorff_voxel", "pred_volume_mm3", "ref_volume_mm3"]);
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format_g(v, 6));
        for p in &self.phases {
            t.push(vec![
                p.phase.to_string(),
                format_g(p.dice, 6),
                opt(p.hausdorff_mm),
                opt(p.hausdorff_voxel),
                format_g(p.pred_volume_mm3, 6),
                format_g(p.ref_volume_mm3, 6),
            ]);
        }
        t
    }
}

fn hausdorff_or_warn(pred: &Phase, reference: &Phase, units: DistanceUnits) -> Result<Option<f64>, CliError> {
    match hausdorff(&pred.mask, &reference.mask, units) {
        Ok(d) => Ok(Some(d)),
        Err(Error::Empty(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Per-phase segmentation metrics of `pred` against `reference`.
pub fn compare_series(pred: &StackSeries, reference: &StackSeries) -> Result<MetricsReport, CliError> {
    if pred.dims() != reference.dims() {
        return Err(Error::DimensionMismatch { left: pred.dims().as_array(), right: reference.dims().as_array() }.into());
    }
    if pred.phase_indices() != reference.phase_indices() {
        return Err(CliError {
            code: crate::EXIT_DOMAIN,
            message: format!("phase lists differ: {:?} vs {:?}", pred.phase_indices(), reference.phase_indices()),
        });
    }
    let mut phases = Vec::with_capacity(pred.len());
    for (p, r) in pred.phases().iter().zip(reference.phases()) {
        let hausdorff_mm = hausdorff_or_warn(p, r, DistanceUnits::Mm)?;
        if hausdorff_mm.is_none() {
            eprintln!("warning: phase {}: Hausdorff distance undefined for an empty mask; reported as null", p.index);
        }
        phases.push(PhaseMetrics {
            phase: p.index,
            dice: dice(&p.mask, &r.mask)?,
            hausdorff_mm,
            hausdorff_voxel: hausdorff_or_warn(p, r, DistanceUnits::Voxel)?,
            pred_volume_mm3: mask_volume(&p.mask),
            ref_volume_mm3: mask_volume(&r.mask),
        });
    }
    let mean_dice = phases.iter().map(|p| p.dice).sum::<f64>() / phases.len() as f64;
    Ok(MetricsReport { mean_dice, phases })
}

pub fn metrics(mut cfg: PipelineConfig, a: MetricsArgs) -> Result<(), CliError> {
    cfg.threshold = a.threshold.unwrap_or(cfg.threshold);
    cfg.format = a.format.unwrap_or(cfg.format);
    cfg.postprocess &= !a.no_postprocess;
    let cfg = validated(cfg)?;

    let pred = load_masks(&a.pred, &cfg)?;
    let reference = load_masks(&a.reference, &cfg)?;
    let report = compare_series(&pred, &reference)?;
    ensure_parent(&a.out)?;
    write_report(&report, &a.out, cfg.format)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct NoiseMeta {
    pub model: NoiseModel,
    pub snr: f64,
    pub seed: u64,
    pub snr_on: SnrReference,
    pub stacks: Vec<StackNoise>,
}

impl Report for NoiseMeta {}

pub fn noise(mut cfg: PipelineConfig, a: NoiseArgs) -> Result<(), CliError> {
    cfg.noise.model = a.model.unwrap_or(cfg.noise.model);
    cfg.noise.snr = a.snr.or(cfg.noise.snr);
    cfg.noise.snr_on = a.snr_on.unwrap_or(cfg.noise.snr_on);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let cfg = validated(cfg)?;

    let series = load_masks(&a.stacks, &cfg)?;
    let spec = NoiseSpec::new(cfg.noise.model, cfg.noise.effective_snr(), cfg.seed)?;
    let corrupted = corrupt_series(&series, &spec, cfg.noise.snr_on, Exec::default())?;
    write_series_with_intensities(&series, &corrupted.volumes, &a.out)?;
    let meta = NoiseMeta {
        model: spec.model,
        snr: spec.snr,
        seed: spec.seed,
        snr_on: cfg.noise.snr_on,
        stacks: corrupted.stacks,
    };
    write_report(&meta, &a.out.join(NOISE_META_NAME), ventriq::stackio::ReportFormat::Json)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PairRow {
    subject: String,
    reference: f64,
    estimate: f64,
}

/// Parses `subject,reference,estimate` rows. Any structural problem is a
/// usage error.
pub fn read_pairs(path: &Path) -> Result<PairedMeasurements, CliError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::io(format!("missing file {}", path.display())),
        _ => CliError::io(format!("cannot read {}: {e}", path.display())),
    })?;
    if text.trim().is_empty() {
        return Err(CliError::usage(format!("{} is empty", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if header.iter().collect::<Vec<_>>() != ["subject", "reference", "estimate"] {
        return Err(CliError::usage(format!(
            "{}: expected header subject,reference,estimate, found {}",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for row in rdr.deserialize::<PairRow>() {
        let r = row.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        pairs.push(Pair { subject: Some(r.subject), reference: r.reference, estimate: r.estimate });
    }
    PairedMeasurements::new(pairs).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct AgreeReport {
    #[serde(flatten)]
    pub bland_altman: BlandAltmanReport,
    pub mean_abs_difference: MeanAbsDifference,
    /// `None` below three pairs or when all pair means coincide.
    pub proportional_bias: Option<ProportionalBias>,
    /// ICC(2,1) of the reference and estimate columns; `None` below three pairs.
    pub icc: Option<Icc>,
}

impl Report for AgreeReport {}

pub fn agreement_report(pairs: &PairedMeasurements) -> Result<AgreeReport, CliError> {
    let bland_altman = bland_altman(pairs)?;
    let mean_abs_difference = mean_abs_difference(pairs)?;
    let proportional_bias = match proportional_bias_check(pairs) {
        Ok(p) => Some(p),
        Err(Error::InvalidArgument(_)) => None,
        Err(Error::Degenerate(m)) => {
            eprintln!("warning: proportional bias check skipped: {m}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let icc = if pairs.len() >= 3 {
        let table: Vec<Vec<f64>> = pairs.pairs().iter().map(|p| vec![p.reference, p.estimate]).collect();
        Some(icc_2_1(&table)?)
    } else {
        None
    };
    Ok(AgreeReport { bland_altman, mean_abs_difference, proportional_bias, icc })
}

/// `subject,mean,difference` rows for a Bland-Altman plot.
pub fn differences_table(pairs: &PairedMeasurements) -> Table {
    let mut t = Table::new(["subject", "mean", "difference"]);
    for p in pairs.pairs() {
        t.push(vec![p.subject.clone().unwrap_or_default(), format_g(p.mean(), 6), format_g(p.difference(), 6)]);
    }
    t
}

fn default_diffs_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "agreement".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_differences.csv"))
}

pub fn agree(mut cfg: PipelineConfig, a: AgreeArgs) -> Result<(), CliError> {
    cfg.format = a.format.unwrap_or(cfg.format);
    let cfg = validated(cfg)?;

    let pairs = read_pairs(&a.pairs)?;
    let report = agreement_report(&pairs)?;
    ensure_parent(&a.out)?;
    write_report(&report, &a.out, cfg.format)?;
    let diffs = a.diffs.clone().unwrap_or_else(|| default_diffs_path(&a.out));
    ensure_parent(&diffs)?;
    write_table(&differences_table(&pairs), &diffs)?;
    Ok(())
}
