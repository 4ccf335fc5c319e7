//! Cycle-curve fitting and end-diastole / end-systole selection.
//!
//! Two smoothers are available: a least-squares quartic and a Gaussian
//! process with a constant × RBF kernel. Both work on phases mapped affinely
//! to [0, 1]; the GP additionally standardizes its targets. The fitted curve
//! is sampled densely, its global maximum/minimum give ED/ES, and those are
//! snapped to the nearest acquired phase so EF is computed from observed
//! volumes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cycle::{CycleSeries, MetricKind};
use crate::linalg;
use crate::par::{self, Exec};
use crate::{Error, Result};

/// Dense sampling resolution of the fitted curve.
pub const CURVE_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Poly4,
    Gp,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Poly4 => "poly4",
            FitMethod::Gp => "gp",
        }
    }

    fn min_points(self) -> usize {
        match self {
            FitMethod::Poly4 => 5,
            FitMethod::Gp => 3,
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly4" | "poly" => Ok(FitMethod::Poly4),
            "gp" => Ok(FitMethod::Gp),
            other => Err(Error::InvalidArgument(format!("unknown fit method {other:?}"))),
        }
    }
}

/// Affine map of the phase axis onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAxis {
    pub min: f64,
    pub max: f64,
}

impl PhaseAxis {
    fn from_points(x: &[f64]) -> Result<Self> {
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::Degenerate("all phases are equal".into()));
        }
        Ok(Self { min, max })
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

fn distinct_count(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// P(u) = c0 + c1·u + … + c4·u⁴ over normalized phase u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly4Model {
    pub coefficients: [f64; 5],
    pub axis: PhaseAxis,
}

impl Poly4Model {
    pub fn eval_normalized(&self, u: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn eval(&self, phase: f64) -> f64 {
        self.eval_normalized(self.axis.normalize(phase))
    }
}

pub fn fit_poly4(series: &CycleSeries) -> Result<Poly4Model> {
    let x: Vec<f64> = series.phases.iter().map(|&p| p as f64).collect();
    fit_poly4_xy(&x, &series.values)
}

/// Least-squares quartic via Householder QR of the Vandermonde matrix.
pub fn fit_poly4_xy(x: &[f64], y: &[f64]) -> Result<Poly4Model> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    let distinct = distinct_count(x);
    if distinct < 5 {
        return Err(Error::Underdetermined { needed: 5, got: distinct });
    }
    let axis = PhaseAxis::from_points(x)?;
    let design: Vec<f64> = x
        .iter()
        .flat_map(|&xi| {
            let u = axis.normalize(xi);
            [1.0, u, u * u, u * u * u, u * u * u * u]
        })
        .collect();
    let c = linalg::lstsq_qr(&design, x.len(), 5, y)
        .ok_or_else(|| Error::Degenerate("rank-deficient quartic design".into()))?;
    Ok(Poly4Model { coefficients: [c[0], c[1], c[2], c[3], c[4]], axis })
}

/// Constant × RBF kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// Constant-kernel value c.
    pub amplitude: f64,
    /// RBF length scale l, in normalized phase units.
    pub length_scale: f64,
    /// Diagonal jitter α added to the kernel matrix.
    pub jitter: f64,
}

pub const AMPLITUDE_BOUNDS: (f64, f64) = (0.1, 10.0);
pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (0.1, 10.0);

impl Default for GpHyper {
    fn default() -> Self {
        Self { amplitude: 0.1, length_scale: 0.5, jitter: 1e-10 }
    }
}

impl GpHyper {
    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(self.amplitude, AMPLITUDE_BOUNDS) || !within(self.length_scale, LENGTH_SCALE_BOUNDS) {
            return Err(Error::InvalidArgument(format!(
                "GP hyperparameters out of bounds: amplitude {} length_scale {}",
                self.amplitude, self.length_scale
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!("jitter {} must be >= 0", self.jitter)));
        }
        Ok(())
    }
}

/// k(x, x′) = c · exp(−d² / 2l²).
pub fn gp_kernel(x: f64, x2: f64, hyper: &GpHyper) -> f64 {
    let d = x - x2;
    hyper.amplitude * (-(d * d) / (2.0 * hyper.length_scale * hyper.length_scale)).exp()
}

fn gram(x: &[f64], hyper: &GpHyper) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = gp_kernel(x[i], x[j], hyper);
        }
        k[i * n + i] += hyper.jitter;
    }
    k
}

struct Solved {
    gram: Vec<f64>,
    chol: Vec<f64>,
    weights: Vec<f64>,
    lml: f64,
}

/// Log marginal likelihood from a plain Cholesky solve (optimizer inner loop).
fn quick_lml(x: &[f64], y: &[f64], hyper: &GpHyper) -> f64 {
    let n = x.len();
    match linalg::cholesky(&gram(x, hyper), n) {
        Some(l) => {
            let w = linalg::cholesky_solve(&l, n, y);
            let fit: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum();
            -0.5 * fit - 0.5 * linalg::cholesky_log_det(&l, n) - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
        }
        None => f64::NEG_INFINITY,
    }
}

fn solve(x: &[f64], y: &[f64], hyper: &GpHyper) -> Result<Solved> {
    let n = x.len();
    let gram = gram(x, hyper);
    let chol = linalg::cholesky(&gram, n).ok_or(Error::NotPositiveDefinite {
        amplitude: hyper.amplitude,
        length_scale: hyper.length_scale,
        jitter: hyper.jitter,
    })?;
    let weights = linalg::cholesky_solve_refined(&gram, &chol, n, y);
    let fit = linalg::dot2(y, &weights);
    let lml = -0.5 * fit - 0.5 * linalg::cholesky_log_det(&chol, n)
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(Solved { gram, chol, weights, lml })
}

/// log p(y | x) = −½ yᵀ(K+αI)⁻¹y − ½ log|K+αI| − (n/2) log 2π, on `y` as given.
pub fn gp_log_marginal_likelihood(x: &[f64], y: &[f64], hyper: &GpHyper) -> Result<f64> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidArgument("need matching, non-empty x and y".into()));
    }
    Ok(solve(x, y, hyper)?.lml)
}

/// A fitted GP over one cycle series.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub hyper: GpHyper,
    pub axis: PhaseAxis,
    /// Training inputs in [0, 1].
    pub train_x: Vec<f64>,
    pub train_y_standardized: Vec<f64>,
    pub y_mean: f64,
    /// 1 when the targets had zero variance (centering only).
    pub y_std: f64,
    /// Log marginal likelihood of the standardized targets.
    pub log_marginal_likelihood: f64,
    gram: Vec<f64>,
    chol: Vec<f64>,
    weights: Vec<f64>,
}

/// Posterior mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl GpModel {
    /// Posterior at normalized input `u`, in standardized target units.
    pub fn predict_standardized(&self, u: f64) -> Prediction {
        let n = self.train_x.len();
        let ks: Vec<f64> = self.train_x.iter().map(|&xi| gp_kernel(u, xi, &self.hyper)).collect();
        let mean = linalg::dot2(&ks, &self.weights);
        let v = linalg::cholesky_solve_refined(&self.gram, &self.chol, n, &ks);
        let variance = gp_kernel(u, u, &self.hyper) - linalg::dot2(&ks, &v);
        Prediction { mean, variance: variance.max(0.0) }
    }

    /// Posterior at normalized input `u`, in original target units.
    pub fn predict_normalized(&self, u: f64) -> Prediction {
        let p = self.predict_standardized(u);
        Prediction { mean: self.y_mean + self.y_std * p.mean, variance: p.variance * self.y_std * self.y_std }
    }
}

/// Posterior at phase `x` (original phase units), destandardized.
pub fn gp_predict(model: &GpModel, x: f64) -> Prediction {
    model.predict_normalized(model.axis.normalize(x))
}

pub fn gp_fit(series: &CycleSeries, init: &GpHyper) -> Result<GpModel> {
    let x: Vec<f64> = series.phases.iter().map(|&p| p as f64).collect();
    gp_fit_xy(&x, &series.values, init, Exec::default())
}

/// Fits hyperparameters by maximizing the log marginal likelihood inside the
/// bounds. Starts: `init`, then the 8 best points of a 16×16 log-spaced scan;
/// each start is refined with a bounded Nelder–Mead in log space followed by
/// coordinate golden-section polishing. Winner: highest LML, then lowest
/// start index.
pub fn gp_fit_xy(x: &[f64], y: &[f64], init: &GpHyper, exec: Exec) -> Result<GpModel> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    if x.len() < 3 {
        return Err(Error::Underdetermined { needed: 3, got: x.len() });
    }
    init.validate()?;
    let axis = PhaseAxis::from_points(x)?;
    let xs: Vec<f64> = x.iter().map(|&v| axis.normalize(v)).collect();
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
    let y_std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();

    let jitter = init.jitter;
    let objective = |p: [f64; 2]| -> f64 {
        let h = GpHyper { amplitude: p[0].exp(), length_scale: p[1].exp(), jitter };
        quick_lml(&xs, &ys, &h)
    };
    let lo = [AMPLITUDE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.0.ln()];
    let hi = [AMPLITUDE_BOUNDS.1.ln(), LENGTH_SCALE_BOUNDS.1.ln()];

    const SCAN: usize = 16;
    let mut scan: Vec<([f64; 2], f64)> = (0..SCAN * SCAN)
        .map(|k| {
            let t = |i: usize, d: usize| lo[d] + (hi[d] - lo[d]) * i as f64 / (SCAN - 1) as f64;
            let p = [t(k / SCAN, 0), t(k % SCAN, 1)];
            (p, objective(p))
        })
        .collect();
    scan.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut starts = vec![[init.amplitude.ln(), init.length_scale.ln()]];
    starts.extend(scan.iter().take(8).map(|s| s.0));

    let refined = par::map_slice(exec, &starts, |&s| {
        let (p, f) = nelder_mead_bounded(&objective, s, lo, hi);
        polish(&objective, p, f, lo, hi)
    });
    let mut best = 0;
    for (i, r) in refined.iter().enumerate() {
        if r.1 > refined[best].1 {
            best = i;
        }
    }
    let p = refined[best].0;
    let hyper = GpHyper {
        amplitude: p[0].exp().clamp(AMPLITUDE_BOUNDS.0, AMPLITUDE_BOUNDS.1),
        length_scale: p[1].exp().clamp(LENGTH_SCALE_BOUNDS.0, LENGTH_SCALE_BOUNDS.1),
        jitter,
    };
    let solved = solve(&xs, &ys, &hyper)?;
    Ok(GpModel {
        hyper,
        axis,
        train_x: xs,
        train_y_standardized: ys,
        y_mean,
        y_std,
        log_marginal_likelihood: solved.lml,
        gram: solved.gram,
        chol: solved.chol,
        weights: solved.weights,
    })
}

fn clamp2(p: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])]
}

/// Maximizes `f` over the box with a Nelder–Mead simplex whose trial points
/// are clamped into the box.
fn nelder_mead_bounded(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> ([f64; 2], f64) {
    let start = clamp2(start, lo, hi);
    let step = 0.25;
    let mut simplex: Vec<([f64; 2], f64)> = [
        start,
        [start[0] + if start[0] + step <= hi[0] { step } else { -step }, start[1]],
        [start[0], start[1] + if start[1] + step <= hi[1] { step } else { -step }],
    ]
    .into_iter()
    .map(|p| {
        let p = clamp2(p, lo, hi);
        (p, f(p))
    })
    .collect();

    for _ in 0..400 {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let spread = (simplex[0].1 - simplex[2].1).abs();
        let size = (0..2).map(|d| (simplex[0].0[d] - simplex[2].0[d]).abs().max((simplex[0].0[d] - simplex[1].0[d]).abs())).fold(0.0, f64::max);
        if (spread < 1e-13 && size < 1e-9) || size < 1e-12 {
            break;
        }
        let c = [(simplex[0].0[0] + simplex[1].0[0]) / 2.0, (simplex[0].0[1] + simplex[1].0[1]) / 2.0];
        let w = simplex[2];
        let along = |t: f64| clamp2([c[0] + t * (c[0] - w.0[0]), c[1] + t * (c[1] - w.0[1])], lo, hi);
        let r = along(1.0);
        let fr = f(r);
        if fr > simplex[0].1 {
            let e = along(2.0);
            let fe = f(e);
            simplex[2] = if fe > fr { (e, fe) } else { (r, fr) };
        } else if fr > simplex[1].1 {
            simplex[2] = (r, fr);
        } else {
            let (k, fk) = if fr > w.1 { let k = along(0.5); (k, f(k)) } else { let k = along(-0.5); (k, f(k)) };
            if fk > w.1.max(fr) {
                simplex[2] = (k, fk);
            } else {
                let b = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    let p = [(b[0] + s.0[0]) / 2.0, (b[1] + s.0[1]) / 2.0];
                    *s = (p, f(p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    simplex[0]
}

/// Coordinate-wise golden-section refinement; only accepts improvements.
fn polish(f: &impl Fn([f64; 2]) -> f64, mut p: [f64; 2], mut fp: f64, lo: [f64; 2], hi: [f64; 2]) -> ([f64; 2], f64) {
    const G: f64 = 0.618_033_988_749_894_8;
    for _ in 0..3 {
        for d in 0..2 {
            let mut a = (p[d] - 0.5).max(lo[d]);
            let mut b = (p[d] + 0.5).min(hi[d]);
            let base = p;
            let at = |v: f64| {
                let mut q = base;
                q[d] = v;
                q
            };
            let mut x1 = b - G * (b - a);
            let mut x2 = a + G * (b - a);
            let mut f1 = f(at(x1));
            let mut f2 = f(at(x2));
            for _ in 0..60 {
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - G * (b - a);
                    f1 = f(at(x1));
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + G * (b - a);
                    f2 = f(at(x2));
                }
            }
            for v in [x1, x2, lo[d], hi[d]] {
                let q = at(v);
                let fq = f(q);
                if fq > fp {
                    p = q;
                    fp = fq;
                }
            }
        }
    }
    (p, fp)
}

/// A fitted cycle curve of either kind.
#[derive(Debug, Clone)]
pub enum CycleFit {
    Poly4(Poly4Model),
    Gp(GpModel),
}

impl CycleFit {
    pub fn fit(series: &CycleSeries, method: FitMethod, init: &GpHyper, exec: Exec) -> Result<Self> {
        let x: Vec<f64> = series.phases.iter().map(|&p| p as f64).collect();
        if x.len() < method.min_points() {
            return Err(Error::Underdetermined { needed: method.min_points(), got: x.len() });
        }
        Ok(match method {
            FitMethod::Poly4 => CycleFit::Poly4(fit_poly4_xy(&x, &series.values)?),
            FitMethod::Gp => CycleFit::Gp(gp_fit_xy(&x, &series.values, init, exec)?),
        })
    }

    pub fn method(&self) -> FitMethod {
        match self {
            CycleFit::Poly4(_) => FitMethod::Poly4,
            CycleFit::Gp(_) => FitMethod::Gp,
        }
    }

    fn axis(&self) -> PhaseAxis {
        match self {
            CycleFit::Poly4(m) => m.axis,
            CycleFit::Gp(m) => m.axis,
        }
    }

    /// Fitted value at phase `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CycleFit::Poly4(m) => m.eval(x),
            CycleFit::Gp(m) => gp_predict(m, x).mean,
        }
    }

    /// `CURVE_SAMPLES` uniformly spaced (phase, value) pairs over the phase range.
    pub fn sample(&self) -> Vec<(f64, f64)> {
        let axis = self.axis();
        (0..CURVE_SAMPLES)
            .map(|i| {
                let u = i as f64 / (CURVE_SAMPLES - 1) as f64;
                let x = axis.denormalize(u);
                (x, self.eval(x))
            })
            .collect()
    }
}

/// Selected ED/ES phases with the fitted curve that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSelection {
    pub metric: MetricKind,
    pub method: FitMethod,
    pub ed_phase: u32,
    pub es_phase: u32,
    /// Observed series values at the snapped phases.
    pub ed_value: f64,
    pub es_value: f64,
    /// Unsnapped location and value of the fitted maximum.
    pub ed_fitted: (f64, f64),
    /// Unsnapped location and value of the fitted minimum.
    pub es_fitted: (f64, f64),
    pub curve_samples: Vec<(f64, f64)>,
}

/// Nearest acquired phase; ties go to the earlier phase.
fn snap(phases: &[u32], x: f64) -> usize {
    let mut best = 0;
    for (i, &p) in phases.iter().enumerate() {
        if (p as f64 - x).abs() < (phases[best] as f64 - x).abs() {
            best = i;
        }
    }
    best
}

pub fn select_phases(series: &CycleSeries, method: FitMethod) -> Result<PhaseSelection> {
    let fit = CycleFit::fit(series, method, &GpHyper::default(), Exec::default())?;
    select_phases_from_fit(series, &fit)
}

/// ED = sample of the global maximum, ES = global minimum (earliest on ties),
/// each snapped to an acquired phase.
pub fn select_phases_from_fit(series: &CycleSeries, fit: &CycleFit) -> Result<PhaseSelection> {
    let samples = fit.sample();
    let (mut imax, mut imin) = (0, 0);
    for (i, s) in samples.iter().enumerate() {
        if s.1 > samples[imax].1 {
            imax = i;
        }
        if s.1 < samples[imin].1 {
            imin = i;
        }
    }
    let (ed_x, ed_f) = samples[imax];
    let (es_x, es_f) = samples[imin];
    let scale = series.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let ed = snap(&series.phases, ed_x);
    let es = snap(&series.phases, es_x);
    if ed == es || ed_f - es_f <= 1e-9 * scale {
        return Err(Error::DegenerateCycle { phase: series.phases[ed] });
    }
    Ok(PhaseSelection {
        metric: series.metric,
        method: fit.method(),
        ed_phase: series.phases[ed],
        es_phase: series.phases[es],
        ed_value: series.values[ed],
        es_value: series.values[es],
        ed_fitted: (ed_x, ed_f),
        es_fitted: (es_x, es_f),
        curve_samples: samples,
    })
}

/// Ejection fraction and the volumes it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfResult {
    pub ef_percent: f64,
    pub v_ed_mm3: f64,
    pub v_es_mm3: f64,
    pub ed_phase: u32,
    pub es_phase: u32,
    /// Metric used for phase selection.
    pub metric: MetricKind,
    pub method: FitMethod,
}

/// EF = 100·(V_ED − V_ES)/V_ED.
pub fn ejection_fraction(v_ed: f64, v_es: f64) -> Result<f64> {
    if !(v_ed > 0.0) {
        return Err(Error::Degenerate(format!("end-diastolic volume {v_ed} must be > 0")));
    }
    Ok(100.0 * (v_ed - v_es) / v_ed)
}

/// EF from the observed volumes at the selected phases.
pub fn estimate_ef(volume_series: &CycleSeries, selection: &PhaseSelection) -> Result<EfResult> {
    if volume_series.metric != MetricKind::Volume {
        return Err(Error::InvalidArgument(format!(
            "EF needs a volume series, got {}",
            volume_series.metric
        )));
    }
    let lookup = |t: u32| {
        volume_series
            .value_at(t)
            .ok_or_else(|| Error::InvalidArgument(format!("phase {t} not in volume series")))
    };
    let v_ed = lookup(selection.ed_phase)?;
    let v_es = lookup(selection.es_phase)?;
    Ok(EfResult {
        ef_percent: ejection_fraction(v_ed, v_es)?,
        v_ed_mm3: v_ed,
        v_es_mm3: v_es,
        ed_phase: selection.ed_phase,
        es_phase: selection.es_phase,
        metric: selection.metric,
        method: selection.method,
    })
}

/// EF from a fit of the volume series evaluated at the unsnapped ED/ES
/// locations (for comparison with the snapped default).
pub fn estimate_ef_interpolated(volume_series: &CycleSeries, selection: &PhaseSelection, init: &GpHyper) -> Result<EfResult> {
    if volume_series.metric != MetricKind::Volume {
        return Err(Error::InvalidArgument("EF needs a volume series".into()));
    }
    let (v_ed, v_es) = if selection.metric == MetricKind::Volume {
        (selection.ed_fitted.1, selection.es_fitted.1)
    } else {
        let fit = CycleFit::fit(volume_series, selection.method, init, Exec::default())?;
        (fit.eval(selection.ed_fitted.0), fit.eval(selection.es_fitted.0))
    };
    Ok(EfResult {
        ef_percent: ejection_fraction(v_ed, v_es)?,
        v_ed_mm3: v_ed,
        v_es_mm3: v_es,
        ed_phase: selection.ed_phase,
        es_phase: selection.es_phase,
        metric: selection.metric,
        method: selection.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> CycleSeries {
        CycleSeries::new(MetricKind::Volume, (0..values.len() as u32).collect(), values.to_vec(), None).unwrap()
    }

    #[test]
    fn quartic_recovered_exactly() {
        let p = |u: f64| u.powi(4) - 2.0 * u * u + 1.0;
        let y: Vec<f64> = (0..13).map(|t| p(t as f64 / 12.0)).collect();
        let m = fit_poly4(&series(&y)).unwrap();
        let want = [1.0, 0.0, -2.0, 0.0, 1.0];
        for (c, w) in m.coefficients.iter().zip(want) {
            assert!((c - w).abs() < 1e-8, "{:?}", m.coefficients);
        }
    }

    #[test]
    fn quartic_constant_data() {
        let m = fit_poly4(&series(&[7.0; 13])).unwrap();
        assert!((m.coefficients[0] - 7.0).abs() < 1e-9);
        for c in &m.coefficients[1..] {
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn quartic_underdetermined() {
        assert!(matches!(
            fit_poly4(&series(&[1.0, 2.0, 3.0, 4.0])),
            Err(Error::Underdetermined { needed: 5, got: 4 })
        ));
        // Five points but only four distinct phases.
        assert!(fit_poly4_xy(&[0.0, 1.0, 2.0, 3.0, 3.0], &[1.0; 5]).is_err());
    }

    #[test]
    fn kernel_values() {
        let h = GpHyper::default();
        assert_eq!(gp_kernel(0.3, 0.3, &h), 0.1);
        let h1 = GpHyper { amplitude: 1.0, length_scale: 0.7, jitter: 0.0 };
        assert!((gp_kernel(0.0, 0.7, &h1) - (-0.5f64).exp()).abs() < 1e-12);
        let far = 10.0 * 0.7 * (2.0 * 1e12f64.ln()).sqrt();
        assert!(gp_kernel(0.0, far, &h1) < 1e-12);
    }

    #[test]
    fn lml_single_point() {
        let h = GpHyper { amplitude: 1.0, length_scale: 3.0, jitter: 0.0 };
        let lml = gp_log_marginal_likelihood(&[0.4], &[1.0], &h).unwrap();
        assert!((lml - (-0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
        assert!((lml + 1.418_938_533_204_672_7).abs() < 1e-9);
    }

    #[test]
    fn lml_zero_targets() {
        let h = GpHyper { amplitude: 2.0, length_scale: 0.3, jitter: 1e-6 };
        let x = [0.0, 0.5, 1.0];
        let lml = gp_log_marginal_likelihood(&x, &[0.0; 3], &h).unwrap();
        let l = linalg::cholesky(&gram(&x, &h), 3).unwrap();
        let want = -0.5 * linalg::cholesky_log_det(&l, 3) - 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lml - want).abs() < 1e-12);
    }

    #[test]
    fn lml_reports_offending_hyperparameters() {
        let h = GpHyper { amplitude: 1.0, length_scale: 10.0, jitter: 0.0 };
        let err = gp_log_marginal_likelihood(&[0.0, 0.0], &[1.0, 1.0], &h).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { length_scale, .. } if length_scale == 10.0));
    }

    #[test]
    fn gp_far_point_reverts_to_prior() {
        let y = [3.0, 5.0, 4.0, 8.0, 6.0];
        let m = gp_fit(&series(&y), &GpHyper::default()).unwrap();
        let u = 1.0 + 10.0 * m.hyper.length_scale + 1.0;
        let p = m.predict_standardized(u);
        assert!(p.mean.abs() < 1e-6);
        assert!((p.variance - m.hyper.amplitude).abs() < 1e-6);
        let mean = y.iter().sum::<f64>() / 5.0;
        assert!((m.predict_normalized(u).mean - mean).abs() < 1e-6);
    }

    #[test]
    fn gp_symmetric_midpoint() {
        let m = gp_fit_xy(&[0.0, 1.0, 0.5], &[-1.0, 1.0, 0.0], &GpHyper::default(), Exec::Sequential).unwrap();
        assert!(gp_predict(&m, 0.5).mean.abs() < 1e-9);
        let m = gp_fit_xy(&[0.0, 1.0, 2.0], &[-1.0, 0.0, 1.0], &GpHyper::default(), Exec::Sequential).unwrap();
        assert!(gp_predict(&m, 1.0).mean.abs() < 1e-6);
    }

    #[test]
    fn gp_rejects_degenerate_inputs() {
        assert!(gp_fit_xy(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], &GpHyper::default(), Exec::Sequential).is_err());
        assert!(gp_fit_xy(&[1.0, 2.0], &[1.0, 2.0], &GpHyper::default(), Exec::Sequential).is_err());
        let bad = GpHyper { amplitude: 20.0, ..Default::default() };
        assert!(gp_fit_xy(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &bad, Exec::Sequential).is_err());
    }

    #[test]
    fn v_shape_selection() {
        let y = [10.0, 8.0, 6.0, 4.0, 2.0, 4.0, 6.0, 8.0, 9.0];
        for method in [FitMethod::Poly4, FitMethod::Gp] {
            let s = select_phases(&series(&y), method).unwrap();
            assert_eq!(s.es_phase, 4, "{method}");
            assert_eq!(s.ed_phase, 0, "{method}");
            assert_eq!(s.ed_value, 10.0);
            assert_eq!(s.es_value, 2.0);
            assert_eq!(s.curve_samples.len(), CURVE_SAMPLES);
        }
    }

    #[test]
    fn constant_series_is_degenerate() {
        for method in [FitMethod::Poly4, FitMethod::Gp] {
            let err = select_phases(&series(&[5.0; 8]), method).unwrap_err();
            assert!(matches!(err, Error::DegenerateCycle { .. }), "{method}: {err}");
        }
    }

    #[test]
    fn ef_cases() {
        let vs = series(&[500.0, 400.0, 250.0, 300.0, 450.0]);
        let s = select_phases(&vs, FitMethod::Gp).unwrap();
        let ef = estimate_ef(&vs, &s).unwrap();
        assert_eq!((ef.ed_phase, ef.es_phase), (0, 2));
        assert_eq!(ef.ef_percent, 50.0);

        let mut same = s.clone();
        same.es_phase = same.ed_phase;
        assert_eq!(estimate_ef(&vs, &same).unwrap().ef_percent, 0.0);

        let zeros = series(&[0.0, 0.0, 0.0]);
        assert!(estimate_ef(&zeros, &s).is_err());
        assert!(ejection_fraction(0.0, 0.0).is_err());
    }

    #[test]
    fn ef_needs_volume_series() {
        let vs = series(&[500.0, 400.0, 250.0, 300.0, 450.0]);
        let s = select_phases(&vs, FitMethod::Gp).unwrap();
        let mut area = vs.clone();
        area.metric = MetricKind::SurfaceArea;
        assert!(estimate_ef(&area, &s).is_err());
    }

    #[test]
    fn interpolated_ef_uses_fitted_extremes() {
        let vs = series(&[500.0, 430.0, 300.0, 260.0, 320.0, 420.0, 480.0]);
        let s = select_phases(&vs, FitMethod::Gp).unwrap();
        let ef = estimate_ef_interpolated(&vs, &s, &GpHyper::default()).unwrap();
        let want = 100.0 * (s.ed_fitted.1 - s.es_fitted.1) / s.ed_fitted.1;
        assert_eq!(ef.ef_percent, want);
    }

    #[test]
    fn method_names() {
        assert_eq!("poly".parse::<FitMethod>().unwrap(), FitMethod::Poly4);
        assert_eq!("poly4".parse::<FitMethod>().unwrap(), FitMethod::Poly4);
        assert_eq!("gp".parse::<FitMethod>().unwrap(), FitMethod::Gp);
        assert!("spline".parse::<FitMethod>().is_err());
    }
}
