//! Magnitude-MRI noise synthesis at a target SNR.
//!
//! SNR is the mean intensity over a foreground mask divided by the noise
//! standard deviation σ. All models draw the same pair of standard normals
//! per voxel, so for one seed they share common random numbers.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). Stack `i` of a series
//! uses key `seed ^ i`; within a stack, voxels are processed in blocks of
//! [`BLOCK`] and block `b` draws from ChaCha stream `b`, which makes the
//! output independent of the execution strategy. Normal variates use the
//! ziggurat sampler of `rand_distr::StandardNormal`. Model choices for the
//! mixed scenario come from key `seed` on stream `u64::MAX`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::volgrid::{normalize_minmax, BinaryMask, IntensityVolume, StackSeries, Volume};
use crate::{Error, Result};

/// Voxels per random stream.
pub const BLOCK: usize = 4096;

/// SNR of the mixed-noise scenario.
pub const MIXED_SNR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// `max(0, v + n)`.
    Gaussian,
    /// `√((v + n₁)² + n₂²)`.
    Rician,
    /// `v + σ√(n₁² + n₂²)`: additive Rayleigh magnitude.
    Rayleigh,
    /// One of the three above per stack, chosen uniformly.
    Mixed,
}

impl NoiseModel {
    pub const PURE: [NoiseModel; 3] = [NoiseModel::Gaussian, NoiseModel::Rician, NoiseModel::Rayleigh];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Rician => "rician",
            NoiseModel::Rayleigh => "rayleigh",
            NoiseModel::Mixed => "mixed",
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseModel::Gaussian),
            "rician" => Ok(NoiseModel::Rician),
            "rayleigh" => Ok(NoiseModel::Rayleigh),
            "mixed" => Ok(NoiseModel::Mixed),
            _ => Err(Error::InvalidArgument(format!("unknown noise model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(model: NoiseModel, snr: f64, seed: u64) -> Result<Self> {
        if !(snr > 0.0) {
            return Err(Error::InvalidArgument(format!("snr must be > 0, got {snr}")));
        }
        Ok(Self { model, snr, seed })
    }
}

/// `σ = mean(vol over fg) / snr`.
pub fn sigma_for_snr(vol: &IntensityVolume, fg: &BinaryMask, snr: f64) -> Result<f64> {
    vol.check_same_dims(fg)?;
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be > 0, got {snr}")));
    }
    let (mut sum, mut count) = (0.0f64, 0usize);
    for (&v, &m) in vol.data().iter().zip(fg.data()) {
        if m {
            sum += v as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("SNR foreground mask"));
    }
    Ok(sum / count as f64 / snr)
}

/// Corrupts one volume as stack 0 of `spec.seed`. For [`NoiseModel::Mixed`]
/// the model is the first draw of the selection stream.
pub fn corrupt(vol: &IntensityVolume, spec: &NoiseSpec, sigma: f64) -> Result<IntensityVolume> {
    let model = match spec.model {
        NoiseModel::Mixed => mixed_choices(spec.seed, 1)[0],
        m => m,
    };
    corrupt_stack(vol, model, sigma, spec.seed, Exec::default())
}

/// Corrupts `vol` with a pure noise model using the key `key`.
pub fn corrupt_stack(vol: &IntensityVolume, model: NoiseModel, sigma: f64, key: u64, exec: Exec) -> Result<IntensityVolume> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if model == NoiseModel::Mixed {
        return Err(Error::InvalidArgument("corrupt_stack needs a pure noise model".into()));
    }
    if sigma == 0.0 {
        return Ok(vol.clone());
    }
    let src = vol.data();
    let blocks: Vec<usize> = (0..src.len().div_ceil(BLOCK)).collect();
    let parts = par::map_slice(exec, &blocks, |&b| {
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(b as u64);
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(src.len());
        src[lo..hi]
            .iter()
            .map(|&v| {
                let n1: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                let n2: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                apply(model, v as f64, n1, n2) as f32
            })
            .collect::<Vec<f32>>()
    });
    let data: Vec<f32> = parts.into_iter().flatten().collect();
    IntensityVolume::from_volume(Volume::new(vol.dims(), vol.spacing(), data)?)
}

#[inline]
fn apply(model: NoiseModel, v: f64, n1: f64, n2: f64) -> f64 {
    match model {
        NoiseModel::Gaussian => (v + n1).max(0.0),
        NoiseModel::Rician => ((v + n1) * (v + n1) + n2 * n2).sqrt(),
        NoiseModel::Rayleigh => v + (n1 * n1 + n2 * n2).sqrt(),
        NoiseModel::Mixed => unreachable!("mixed is resolved per stack"),
    }
}

/// Uniform model choices for `count` stacks.
pub fn mixed_choices(seed: u64, count: usize) -> Vec<NoiseModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..count).map(|_| NoiseModel::PURE[rng.random_range(0..3)]).collect()
}

/// Where σ is measured and noise applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    /// Intensities as stored.
    #[default]
    Raw,
    /// After per-stack min-max normalization.
    Normalized,
}

/// Per-stack record of a series corruption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackNoise {
    pub phase: u32,
    pub model: NoiseModel,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct CorruptedSeries {
    pub volumes: Vec<IntensityVolume>,
    pub stacks: Vec<StackNoise>,
}

/// Corrupts every intensity stack of a series. σ is derived per stack from
/// its own mask. Stack `i` uses key `spec.seed ^ i`.
pub fn corrupt_series(series: &StackSeries, spec: &NoiseSpec, reference: SnrReference, exec: Exec) -> Result<CorruptedSeries> {
    if !series.has_intensities() {
        return Err(Error::MissingIntensity);
    }
    let phases = series.phases();
    let models = match spec.model {
        NoiseModel::Mixed => mixed_choices(spec.seed, phases.len()),
        m => vec![m; phases.len()],
    };
    let mut volumes = Vec::with_capacity(phases.len());
    let mut stacks = Vec::with_capacity(phases.len());
    for (i, (phase, &model)) in phases.iter().zip(&models).enumerate() {
        let raw = phase.intensity.as_ref().ok_or(Error::MissingIntensity)?;
        let vol = match reference {
            SnrReference::Raw => raw.clone(),
            SnrReference::Normalized => normalize_minmax(raw),
        };
        let sigma = sigma_for_snr(&vol, &phase.mask, spec.snr)?;
        volumes.push(corrupt_stack(&vol, model, sigma, spec.seed ^ i as u64, exec)?);
        stacks.push(StackNoise { phase: phase.index, model, sigma });
    }
    Ok(CorruptedSeries { volumes, stacks })
}

/// Mixed scenario: each stack gets a uniformly chosen pure model at `snr`.
pub fn corrupt_mixed(series: &StackSeries, snr: f64, seed: u64) -> Result<CorruptedSeries> {
    let spec = NoiseSpec::new(NoiseModel::Mixed, snr, seed)?;
    corrupt_series(series, &spec, SnrReference::Raw, Exec::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::{Dims, Phase, Spacing};

    fn flat(n: usize, v: f32) -> IntensityVolume {
        IntensityVolume::filled(Dims::new(1, 1, n).unwrap(), Spacing::default(), v).unwrap()
    }

    fn stats(v: &IntensityVolume) -> (f64, f64) {
        let n = v.data().len() as f64;
        let m = v.data().iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = v.data().iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn sigma_examples() {
        let v = flat(10, 300.0);
        let fg = BinaryMask::from_fn(v.dims(), v.spacing(), |_, _, x| x < 4);
        assert!((sigma_for_snr(&v, &fg, 30.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((sigma_for_snr(&v, &fg, 20.0).unwrap() - 15.0).abs() < 1e-12);
        let c = flat(6, 7.0);
        let all = BinaryMask::from_fn(c.dims(), c.spacing(), |_, _, _| true);
        assert!((sigma_for_snr(&c, &all, 4.0).unwrap() - 1.75).abs() < 1e-12);
        let none = BinaryMask::empty(c.dims(), c.spacing());
        assert!(matches!(sigma_for_snr(&c, &none, 4.0), Err(Error::Empty(_))));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let v = IntensityVolume::new(Dims::new(1, 2, 3).unwrap(), Spacing::default(), vec![0.0, 1.5, 3.25, 7.0, 0.1, 9.0]).unwrap();
        for m in NoiseModel::PURE {
            assert_eq!(corrupt_stack(&v, m, 0.0, 3, Exec::Sequential).unwrap(), v);
        }
    }

    #[test]
    fn rician_background_mean() {
        let sigma = 10.0;
        let out = corrupt_stack(&flat(100_000, 0.0), NoiseModel::Rician, sigma, 42, Exec::default()).unwrap();
        let (m, _) = stats(&out);
        let want = sigma * (std::f64::consts::PI / 2.0).sqrt();
        assert!((m - want).abs() / want < 0.02, "{m} vs {want}");
    }

    #[test]
    fn gaussian_moments() {
        let out = corrupt_stack(&flat(100_000, 1000.0), NoiseModel::Gaussian, 10.0, 7, Exec::default()).unwrap();
        let (m, s) = stats(&out);
        assert!((m - 1000.0).abs() / 1000.0 < 0.005);
        assert!((s - 10.0).abs() / 10.0 < 0.03, "{s}");
    }

    #[test]
    fn strategies_agree() {
        let v = flat(3 * BLOCK + 17, 50.0);
        for m in NoiseModel::PURE {
            let a = corrupt_stack(&v, m, 5.0, 9, Exec::Sequential).unwrap();
            let b = corrupt_stack(&v, m, 5.0, 9, Exec::Parallel).unwrap();
            assert_eq!(a, b);
        }
    }

    fn series(n: usize) -> StackSeries {
        let d = Dims::new(2, 3, 4).unwrap();
        let phases = (0..n)
            .map(|i| {
                let mask = BinaryMask::from_fn(d, Spacing::default(), |_, y, _| y == 1);
                let intensity = IntensityVolume::new(d, Spacing::default(), (0..24).map(|k| (k * (i + 1)) as f32).collect()).unwrap();
                Phase { index: i as u32, mask, intensity: Some(intensity) }
            })
            .collect();
        StackSeries::new(phases).unwrap()
    }

    #[test]
    fn mixed_is_reproducible_and_reports_choices() {
        let s = series(3);
        let a = corrupt_mixed(&s, MIXED_SNR, 2024).unwrap();
        let b = corrupt_mixed(&s, MIXED_SNR, 2024).unwrap();
        assert_eq!(a.volumes, b.volumes);
        assert_eq!(a.stacks, b.stacks);
        let models: Vec<_> = a.stacks.iter().map(|s| s.model).collect();
        assert_eq!(models, mixed_choices(2024, 3));
    }

    #[test]
    fn vanishing_noise_limit() {
        let s = series(3);
        let out = corrupt_mixed(&s, 1e9, 1).unwrap();
        for (v, p) in out.volumes.iter().zip(s.phases()) {
            for (a, b) in v.data().iter().zip(p.intensity.as_ref().unwrap().data()) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn missing_intensity_is_rejected() {
        let d = Dims::new(1, 2, 2).unwrap();
        let phases = (0..2)
            .map(|i| Phase { index: i, mask: BinaryMask::empty(d, Spacing::default()), intensity: None })
            .collect();
        let s = StackSeries::new(phases).unwrap();
        assert!(matches!(corrupt_mixed(&s, 20.0, 0), Err(Error::MissingIntensity)));
    }

    #[test]
    fn model_names_round_trip() {
        for m in [NoiseModel::Gaussian, NoiseModel::Rician, NoiseModel::Rayleigh, NoiseModel::Mixed] {
            assert_eq!(m.as_str().parse::<NoiseModel>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }
}
