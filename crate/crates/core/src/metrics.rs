//! Segmentation quality metrics: Dice overlap, the soft and border-weighted
//! Dice losses, Hausdorff distances on voxel centres, and the intraclass
//! correlation coefficient.

use std::collections::VecDeque;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::par::{self, Exec};
use crate::volgrid::{BinaryMask, Dims, ProbabilityMap, Spacing, Volume};
use crate::{Error, Result};

/// Constants of the soft Dice loss and its border weight map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub epsilon: f64,
    pub w0: f64,
    pub sigma: f64,
    /// `[background, foreground]` balance weights.
    pub class_weights: [f64; 2],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, w0: 2.0, sigma: 1.0, class_weights: [1.0, 1.0] }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.w0 >= 0.0
            && self.sigma > 0.0
            && self.class_weights.iter().all(|&w| w > 0.0 && w.is_finite());
        if !ok {
            return Err(Error::InvalidArgument(format!("loss config out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Sørensen–Dice overlap. Two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_dims(b)?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Two-class soft Dice loss
/// `1 − (Σtp+ε)/(Σ(t+p)+ε) − (Σ(1−t)(1−p)+ε)/(Σ(2−t−p)+ε)`.
///
/// The loss is negative for near-perfect predictions on small grids because
/// ε is added once to each numerator and denominator; it tends to 0 as the
/// grid grows.
pub fn soft_dice_loss(t: &BinaryMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    t.check_same_dims(p)?;
    cfg.validate()?;
    let (mut tp, mut tpsum, mut bg, mut bgsum) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&ti, &pi) in t.data().iter().zip(p.data()) {
        let ti = ti as u8 as f64;
        let pi = pi as f64;
        tp += ti * pi;
        tpsum += ti + pi;
        bg += (1.0 - ti) * (1.0 - pi);
        bgsum += 2.0 - ti - pi;
    }
    let eps = cfg.epsilon;
    Ok(1.0 - (tp + eps) / (tpsum + eps) - (bg + eps) / (bgsum + eps))
}

/// Per-voxel border weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap(Volume<f64>);

impl Deref for WeightMap {
    type Target = Volume<f64>;
    fn deref(&self) -> &Volume<f64> {
        &self.0
    }
}

impl WeightMap {
    /// Sum of all weights, accumulated in storage order.
    pub fn total(&self) -> f64 {
        self.data().iter().sum()
    }

    pub fn into_volume(self) -> Volume<f64> {
        self.0
    }
}

/// Border-emphasis weights `w_c(t_i) + w0·exp(−(d1+d2)²/2σ²)`.
///
/// `d1` and `d2` are Euclidean distances in voxel units from each voxel to
/// the border of the nearest and second-nearest 26-connected foreground
/// component. Border voxels are foreground voxels with a 6-neighbour that is
/// background or outside the grid. With a single component `d2 = d1`; an
/// empty mask yields `w_c` everywhere.
pub fn weight_map(t: &BinaryMask, cfg: &LossConfig) -> Result<WeightMap> {
    weight_map_with(t, cfg, Exec::default())
}

pub fn weight_map_with(t: &BinaryMask, cfg: &LossConfig, exec: Exec) -> Result<WeightMap> {
    cfg.validate()?;
    let dims = t.dims();
    let n = dims.len();
    let labels = label_components(t);
    let ncomp = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);

    let borders: Vec<Vec<bool>> = (0..ncomp)
        .map(|c| {
            let mut b = vec![false; n];
            for (i, l) in labels.iter().enumerate() {
                if *l == Some(c) && is_border(t, dims, i) {
                    b[i] = true;
                }
            }
            b
        })
        .collect();
    let fields: Vec<Vec<f64>> = par::map_slice(exec, &borders, |b| squared_edt(b, dims));

    let two_sigma_sq = 2.0 * cfg.sigma * cfg.sigma;
    let mut out = vec![0.0f64; n];
    par::fill(exec, &mut out, |i| {
        let wc = cfg.class_weights[t.data()[i] as usize];
        if ncomp == 0 {
            return wc;
        }
        let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
        for f in &fields {
            let d = f[i];
            if d < m1 {
                m2 = m1;
                m1 = d;
            } else if d < m2 {
                m2 = d;
            }
        }
        let d1 = m1.sqrt();
        let d2 = if ncomp == 1 { d1 } else { m2.sqrt() };
        let s = d1 + d2;
        wc + cfg.w0 * (-(s * s) / two_sigma_sq).exp()
    });
    Ok(WeightMap(Volume::new(dims, t.spacing(), out)?))
}

/// Soft Dice loss multiplied by the total weight mass `Σ_i w_map(t_i)`.
pub fn weighted_dice_loss(t: &BinaryMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    let loss = soft_dice_loss(t, p, cfg)?;
    Ok(weight_map(t, cfg)?.total() * loss)
}

fn is_border(t: &BinaryMask, dims: Dims, i: usize) -> bool {
    let (z, y, x) = dims.coords(i);
    let [nz, ny, nx] = dims.as_array();
    let d = t.data();
    z == 0
        || y == 0
        || x == 0
        || z + 1 == nz
        || y + 1 == ny
        || x + 1 == nx
        || !d[i - 1]
        || !d[i + 1]
        || !d[i - nx]
        || !d[i + nx]
        || !d[i - nx * ny]
        || !d[i + nx * ny]
}

/// 26-connected component labels, numbered in storage order of each
/// component's first voxel.
pub(crate) fn label_components(t: &BinaryMask) -> Vec<Option<usize>> {
    let dims = t.dims();
    let [nz, ny, nx] = dims.as_array();
    let data = t.data();
    let mut labels = vec![None; data.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if !data[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (z, y, x) = dims.coords(i);
            for zz in z.saturating_sub(1)..=(z + 1).min(nz - 1) {
                for yy in y.saturating_sub(1)..=(y + 1).min(ny - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(nx - 1) {
                        let j = dims.index(zz, yy, xx);
                        if data[j] && labels[j].is_none() {
                            labels[j] = Some(next);
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Exact squared Euclidean distance (voxel units) to the nearest `true`
/// site, by separable lower-envelope passes along x, y and z.
fn squared_edt(sites: &[bool], dims: Dims) -> Vec<f64> {
    let [nz, ny, nx] = dims.as_array();
    let mut g: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let longest = nz.max(ny).max(nx);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut zb = vec![0.0; longest + 1];

    let mut pass = |g: &mut [f64], len: usize, stride: usize, starts: &mut dyn Iterator<Item = usize>| {
        for s in starts {
            for k in 0..len {
                line[k] = g[s + k * stride];
            }
            edt_1d(&line[..len], &mut out[..len], &mut v, &mut zb);
            for k in 0..len {
                g[s + k * stride] = out[k];
            }
        }
    };
    pass(&mut g, nx, 1, &mut (0..nz * ny).map(|r| r * nx));
    pass(&mut g, ny, nx, &mut (0..nz).flat_map(|z| (0..nx).map(move |x| z * nx * ny + x)));
    pass(&mut g, nz, nx * ny, &mut (0..nx * ny));
    g
}

/// One-dimensional squared distance transform of a sampled function.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        d.fill(f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, dq) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[j + 1] < qf {
            j += 1;
        }
        let p = v[j];
        let diff = qf - p as f64;
        *dq = diff * diff + f[p];
    }
}

/// Unit of Hausdorff distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnits {
    /// Physical distance using the mask spacing.
    #[default]
    Mm,
    /// Index distance, ignoring spacing.
    Voxel,
}

/// Directed Hausdorff distance `max_{a∈A} min_{b∈B} ‖a − b‖` over
/// foreground voxel centres.
pub fn hausdorff_directed(a: &BinaryMask, b: &BinaryMask, units: DistanceUnits) -> Result<f64> {
    hausdorff_directed_with(a, b, units, Exec::default())
}

pub fn hausdorff_directed_with(a: &BinaryMask, b: &BinaryMask, units: DistanceUnits, exec: Exec) -> Result<f64> {
    a.check_same_dims(b)?;
    if a.is_empty_mask() || b.is_empty_mask() {
        return Err(Error::Empty("Hausdorff distance needs nonempty masks"));
    }
    let s = match units {
        DistanceUnits::Mm => a.spacing(),
        DistanceUnits::Voxel => Spacing::unit(),
    };
    let scale = |p: [usize; 3]| [p[0] as f64 * s.dz, p[1] as f64 * s.dy, p[2] as f64 * s.dx];
    let bdata = b.data();
    let dims = a.dims();
    // Points of A inside B contribute 0 and are skipped.
    let pa: Vec<[f64; 3]> = a
        .foreground()
        .into_iter()
        .filter(|p| !bdata[dims.index(p[0], p[1], p[2])])
        .map(scale)
        .collect();
    if pa.is_empty() {
        return Ok(0.0);
    }
    let pb: Vec<[f64; 3]> = b.foreground().into_iter().map(scale).collect();

    const CHUNK: usize = 256;
    let chunks: Vec<&[[f64; 3]]> = pa.chunks(CHUNK).collect();
    let maxima = par::map_slice(exec, &chunks, |chunk| {
        let mut cmax = 0.0f64;
        for p in chunk.iter() {
            let mut cmin = f64::INFINITY;
            for q in &pb {
                let d = sq_dist(p, q);
                if d < cmin {
                    cmin = d;
                    // This point cannot raise the running maximum.
                    if cmin <= cmax {
                        break;
                    }
                }
            }
            cmax = cmax.max(cmin);
        }
        cmax
    });
    Ok(maxima.into_iter().fold(0.0, f64::max).sqrt())
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask, units: DistanceUnits) -> Result<f64> {
    hausdorff_with(a, b, units, Exec::default())
}

pub fn hausdorff_with(a: &BinaryMask, b: &BinaryMask, units: DistanceUnits, exec: Exec) -> Result<f64> {
    let ab = hausdorff_directed_with(a, b, units, exec)?;
    let ba = hausdorff_directed_with(b, a, units, exec)?;
    Ok(ab.max(ba))
}

#[inline]
fn sq_dist(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let (a, b, c) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
    a * a + b * b + c * c
}

/// Intraclass correlation form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IccForm {
    /// ICC(2,1): two-way random effects, absolute agreement, single rater.
    #[default]
    #[serde(rename = "icc21")]
    Agreement,
    /// ICC(3,1): two-way mixed effects, consistency, single rater.
    #[serde(rename = "icc31")]
    Consistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Icc {
    pub form: IccForm,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-way ANOVA mean squares of an `n × k` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSquares {
    pub rows: f64,
    pub columns: f64,
    pub error: f64,
    pub total_ss: f64,
}

fn mean_squares(ratings: &[Vec<f64>]) -> Result<(usize, usize, MeanSquares)> {
    let n = ratings.len();
    let k = ratings.first().map_or(0, Vec::len);
    if n < 3 || k < 2 {
        return Err(Error::InvalidArgument(format!("ICC needs n >= 3 subjects and k >= 2 raters, got {n}x{k}")));
    }
    if ratings.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged ratings table".into()));
    }
    if ratings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite rating".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = ratings.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = ratings.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k).map(|j| ratings.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let ssr = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ssc = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut sse = 0.0;
    let mut sst = 0.0;
    for (i, r) in ratings.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            sse += (v - row_means[i] - col_means[j] + grand).powi(2);
            sst += (v - grand).powi(2);
        }
    }
    Ok((
        n,
        k,
        MeanSquares {
            rows: ssr / (nf - 1.0),
            columns: ssc / (kf - 1.0),
            error: sse / ((nf - 1.0) * (kf - 1.0)),
            total_ss: sst,
        },
    ))
}

fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    match FisherSnedecor::new(d1, d2) {
        Ok(f) if d1.is_finite() && d2.is_finite() => f.inverse_cdf(p),
        _ => f64::NAN,
    }
}

/// ICC(2,1) with its 95% confidence interval.
pub fn icc_2_1(ratings: &[Vec<f64>]) -> Result<Icc> {
    icc(ratings, IccForm::Agreement)
}

/// Single-rater ICC of the chosen form with a 95% F-based confidence
/// interval. A table with no variance at all scores 1 with interval `[1, 1]`.
pub fn icc(ratings: &[Vec<f64>], form: IccForm) -> Result<Icc> {
    let (n, k, ms) = mean_squares(ratings)?;
    let degenerate = Icc { form, value: 1.0, ci_low: 1.0, ci_high: 1.0 };
    if ms.total_ss == 0.0 {
        return Ok(degenerate);
    }
    let (nf, kf) = (n as f64, k as f64);
    let (msr, msc, mse) = (ms.rows, ms.columns, ms.error);
    let q = 0.975;
    match form {
        IccForm::Agreement => {
            let value = (msr - mse) / (msr + (kf - 1.0) * mse + kf * (msc - mse) / nf);
            if mse == 0.0 && msc == 0.0 {
                return Ok(degenerate);
            }
            // Satterthwaite degrees of freedom; as MSE → 0 they tend to k − 1.
            let v = if mse == 0.0 {
                kf - 1.0
            } else {
                let fj = msc / mse;
                let a = kf * value * fj + nf * (1.0 + (kf - 1.0) * value) - kf * value;
                let b = nf * (1.0 + (kf - 1.0) * value) - kf * value;
                (kf - 1.0) * (nf - 1.0) * a * a / ((nf - 1.0) * kf * kf * value * value * fj * fj + b * b)
            };
            let fl = f_quantile(q, nf - 1.0, v);
            let fu = f_quantile(q, v, nf - 1.0);
            let c = kf * msc + (kf * nf - kf - nf) * mse;
            let ci_low = nf * (msr - fl * mse) / (fl * c + nf * msr);
            let ci_high = nf * (fu * msr - mse) / (c + nf * fu * msr);
            Ok(Icc { form, value, ci_low, ci_high })
        }
        IccForm::Consistency => {
            let value = (msr - mse) / (msr + (kf - 1.0) * mse);
            if mse == 0.0 {
                return Ok(degenerate);
            }
            let df_e = (nf - 1.0) * (kf - 1.0);
            let f0 = msr / mse;
            let fl = f0 / f_quantile(q, nf - 1.0, df_e);
            let fu = f0 * f_quantile(q, df_e, nf - 1.0);
            Ok(Icc { form, value, ci_low: (fl - 1.0) / (fl + kf - 1.0), ci_high: (fu - 1.0) / (fu + kf - 1.0) })
        }
    }
}

/// Mean squares exposed for reporting and for checking against other tools.
pub fn anova_mean_squares(ratings: &[Vec<f64>]) -> Result<MeanSquares> {
    mean_squares(ratings).map(|(_, _, ms)| ms)
}
