//! Agreement between a reference method and an estimate: mean absolute
//! difference, Bland–Altman bias and limits of agreement, and a check for
//! proportional bias.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Multiplier of the standard deviation in the limits of agreement.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pair {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub reference: f64,
    pub estimate: f64,
}

impl Pair {
    pub fn new(reference: f64, estimate: f64) -> Self {
        Self { subject: None, reference, estimate }
    }

    /// `estimate − reference`.
    pub fn difference(&self) -> f64 {
        self.estimate - self.reference
    }

    pub fn mean(&self) -> f64 {
        (self.estimate + self.reference) / 2.0
    }
}

/// Paired measurements with finite values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedMeasurements {
    pairs: Vec<Pair>,
}

impl PairedMeasurements {
    pub fn new(pairs: Vec<Pair>) -> Result<Self> {
        if let Some(p) = pairs.iter().find(|p| !p.reference.is_finite() || !p.estimate.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite measurement in pair {p:?}")));
        }
        Ok(Self { pairs })
    }

    pub fn from_values(reference: &[f64], estimate: &[f64]) -> Result<Self> {
        if reference.len() != estimate.len() {
            return Err(Error::InvalidArgument(format!(
                "{} reference values vs {} estimates",
                reference.len(),
                estimate.len()
            )));
        }
        Self::new(reference.iter().zip(estimate).map(|(&r, &e)| Pair::new(r, e)).collect())
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Reference and estimate exchanged.
    pub fn swapped(&self) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|p| Pair { subject: p.subject.clone(), reference: p.estimate, estimate: p.reference })
            .collect();
        Self { pairs }
    }

    pub fn differences(&self) -> Vec<f64> {
        self.pairs.iter().map(Pair::difference).collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn sample_sd(v: &[f64], m: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanAbsDifference {
    pub md: f64,
    pub sd: f64,
    pub n: usize,
}

/// Mean and sample standard deviation of `|estimate − reference|`.
pub fn mean_abs_difference(pairs: &PairedMeasurements) -> Result<MeanAbsDifference> {
    if pairs.is_empty() {
        return Err(Error::Empty("paired measurements"));
    }
    let abs: Vec<f64> = pairs.pairs().iter().map(|p| p.difference().abs()).collect();
    let md = mean(&abs);
    Ok(MeanAbsDifference { md, sd: sample_sd(&abs, md), n: abs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlandAltmanReport {
    pub n: usize,
    pub bias: f64,
    pub sd: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    pub bias_ci: [f64; 2],
    pub loa_lower_ci: [f64; 2],
    pub loa_upper_ci: [f64; 2],
}

impl BlandAltmanReport {
    /// Half-width of the confidence interval of each limit of agreement.
    pub fn loa_ci_half_width(&self) -> f64 {
        (self.loa_upper_ci[1] - self.loa_upper_ci[0]) / 2.0
    }
}

/// Bland–Altman statistics of `d = estimate − reference`.
///
/// Limits are `bias ± 1.96·sd`. The bias interval is
/// `bias ± t·sd/√n` and each limit's interval is `loa ± t·sd·√(3/n)`, with
/// `t` the 0.975 quantile of Student's t on `n − 1` degrees of freedom.
pub fn bland_altman(pairs: &PairedMeasurements) -> Result<BlandAltmanReport> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Bland-Altman needs n >= 2 pairs, got {n}")));
    }
    let d = pairs.differences();
    let bias = mean(&d);
    let sd = sample_sd(&d, bias);
    let nf = n as f64;
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.975);
    let loa_lower = bias - LOA_Z * sd;
    let loa_upper = bias + LOA_Z * sd;
    let hb = t * sd / nf.sqrt();
    let hl = t * sd * (3.0 / nf).sqrt();
    Ok(BlandAltmanReport {
        n,
        bias,
        sd,
        loa_lower,
        loa_upper,
        bias_ci: [bias - hb, bias + hb],
        loa_lower_ci: [loa_lower - hl, loa_lower + hl],
        loa_upper_ci: [loa_upper - hl, loa_upper + hl],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionalBias {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// `|slope| > 2·slope_se`.
    pub flagged: bool,
}

/// Ordinary least squares of the differences on the pair means.
pub fn proportional_bias_check(pairs: &PairedMeasurements) -> Result<ProportionalBias> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("proportional bias check needs n >= 3 pairs, got {n}")));
    }
    let x: Vec<f64> = pairs.pairs().iter().map(Pair::mean).collect();
    let y = pairs.differences();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all pair means are equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = (rss / (n - 2) as f64 / sxx).sqrt();
    Ok(ProportionalBias { slope, intercept, slope_se, flagged: slope.abs() > 2.0 * slope_se })
}
