//! Voxel grids with physical spacing, plus the measurements and resampling
//! operations shared by the rest of the crate.
//!
//! All grids store voxels z-major: index = (z·ny + y)·nx + x.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Voxel edge lengths in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        for (name, v) in [("dx", dx), ("dy", dy), ("dz", dz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("spacing {name} must be > 0, got {v}")));
            }
        }
        Ok(Self { dx, dy, dz })
    }

    pub const fn unit() -> Self {
        Self { dx: 1.0, dy: 1.0, dz: 1.0 }
    }

    pub fn voxel_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }
}

impl Default for Spacing {
    /// 0.5 × 0.5 × 1.5 mm, the in-plane/through-plane resolution of the
    /// short-axis CINE stacks this crate targets.
    fn default() -> Self {
        Self { dx: 0.5, dy: 0.5, dz: 1.5 }
    }
}

/// Grid extent as (slices, rows, columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nz: usize,
    pub ny: usize,
    pub nx: usize,
}

impl Dims {
    pub fn new(nz: usize, ny: usize, nx: usize) -> Result<Self> {
        if nz == 0 || ny == 0 || nx == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got {nz}x{ny}x{nx}"
            )));
        }
        Ok(Self { nz, ny, nx })
    }

    /// 12 × 86 × 98, the standard stack size.
    pub const fn standard() -> Self {
        Self { nz: 12, ny: 86, nx: 98 }
    }

    pub fn len(&self) -> usize {
        self.nz * self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.ny * self.nx
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let r = i / self.nx;
        (r / self.ny, r % self.ny, x)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nz, self.ny, self.nx]
    }
}

/// A dense 3D array of voxels with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

impl<T> Volume<T> {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "voxel count {} does not match dims {:?} ({} voxels)",
                data.len(),
                dims.as_array(),
                dims.len()
            )));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(z, y, x));
                }
            }
        }
        Self { dims, spacing, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> &T {
        &self.data[self.dims.index(z, y, x)]
    }

    pub fn slice(&self, z: usize) -> &[T] {
        let n = self.dims.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub(crate) fn check_same_dims<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                left: self.dims.as_array(),
                right: other.dims.as_array(),
            });
        }
        Ok(())
    }
}

macro_rules! newtype_deref {
    ($name:ident, $inner:ty) => {
        impl Deref for $name {
            type Target = Volume<$inner>;
            fn deref(&self) -> &Self::Target {
                &self.0
            }
        }

        impl $name {
            pub fn into_volume(self) -> Volume<$inner> {
                self.0
            }
        }
    };
}

/// Magnitude image: finite, non-negative voxel values.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVolume(Volume<f32>);
newtype_deref!(IntensityVolume, f32);

impl IntensityVolume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        Self::from_volume(Volume::new(dims, spacing, data)?)
    }

    pub fn from_volume(v: Volume<f32>) -> Result<Self> {
        if let Some((i, bad)) = v.data.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "intensity voxel {i} is {bad}; intensities must be finite and >= 0"
            )));
        }
        Ok(Self(v))
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }
}

/// Per-voxel foreground probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap(Volume<f32>);
newtype_deref!(ProbabilityMap, f32);

impl ProbabilityMap {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        Self::from_volume(Volume::new(dims, spacing, data)?)
    }

    pub fn from_volume(v: Volume<f32>) -> Result<Self> {
        if let Some((i, bad)) = v.data.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("probability voxel {i} is {bad}, outside [0, 1]")));
        }
        Ok(Self(v))
    }

    /// Hard 0/1 probabilities from a mask.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let data = mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self(Volume { dims: mask.dims, spacing: mask.spacing, data })
    }
}

/// Foreground/background segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(Volume<bool>);
newtype_deref!(BinaryMask, bool);

impl BinaryMask {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<bool>) -> Result<Self> {
        Ok(Self(Volume::new(dims, spacing, data)?))
    }

    pub fn from_volume(v: Volume<bool>) -> Self {
        Self(v)
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        Self(Volume { dims, spacing, data: vec![false; dims.len()] })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        Self(Volume::from_fn(dims, spacing, f))
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.0.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.0.data.iter().any(|&b| b)
    }

    /// Foreground voxel coordinates as (z, y, x), in storage order.
    pub fn foreground(&self) -> Vec<[usize; 3]> {
        let d = self.0.dims;
        self.0
            .data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| {
                let (z, y, x) = d.coords(i);
                [z, y, x]
            })
            .collect()
    }

    /// True when every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data().iter().zip(other.data()).all(|(&a, &b)| !a || b)
    }

    pub fn with_data(&self, data: Vec<bool>) -> Self {
        debug_assert_eq!(data.len(), self.dims().len());
        Self(Volume { dims: self.dims(), spacing: self.spacing(), data })
    }
}

/// One acquired cardiac phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub index: u32,
    pub mask: BinaryMask,
    pub intensity: Option<IntensityVolume>,
}

/// Time-ordered masks (and optional intensities) covering one cardiac cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSeries {
    phases: Vec<Phase>,
}

impl StackSeries {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        if phases.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a stack series needs at least 2 phases, got {}",
                phases.len()
            )));
        }
        let dims = phases[0].mask.dims();
        let spacing = phases[0].mask.spacing();
        for w in phases.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::InvalidArgument(format!(
                    "phase indices must be strictly increasing ({} then {})",
                    w[0].index, w[1].index
                )));
            }
        }
        for p in &phases {
            if p.mask.dims() != dims {
                return Err(Error::DimensionMismatch { left: dims.as_array(), right: p.mask.dims().as_array() });
            }
            if p.mask.spacing() != spacing {
                return Err(Error::InvalidArgument(format!("phase {} has different spacing", p.index)));
            }
            if let Some(iv) = &p.intensity {
                if iv.dims() != dims {
                    return Err(Error::DimensionMismatch { left: dims.as_array(), right: iv.dims().as_array() });
                }
                if iv.spacing() != spacing {
                    return Err(Error::InvalidArgument(format!("phase {} intensity has different spacing", p.index)));
                }
            }
        }
        Ok(Self { phases })
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.phases[0].mask.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.phases[0].mask.spacing()
    }

    pub fn phase_indices(&self) -> Vec<u32> {
        self.phases.iter().map(|p| p.index).collect()
    }

    pub fn has_intensities(&self) -> bool {
        self.phases.iter().all(|p| p.intensity.is_some())
    }

    pub fn into_phases(self) -> Vec<Phase> {
        self.phases
    }
}

/// Foreground volume in mm³.
pub fn mask_volume(mask: &BinaryMask) -> f64 {
    mask.count() as f64 * mask.spacing().voxel_volume()
}

/// Foreground area of every slice in mm², indexed by z.
pub fn slice_areas(mask: &BinaryMask) -> Vec<f64> {
    let a = mask.spacing().pixel_area();
    (0..mask.dims().nz)
        .map(|z| mask.slice(z).iter().filter(|&&b| b).count() as f64 * a)
        .collect()
}

/// Source coordinate (in voxel-index units) sampled by output index `i`
/// under pixel-center alignment.
#[inline]
fn center_map(i: usize, n_src: usize, n_dst: usize) -> f64 {
    (i as f64 + 0.5) * (n_src as f64 / n_dst as f64) - 0.5
}

fn rescaled_spacing(s: Spacing, from: Dims, to: Dims) -> Spacing {
    Spacing {
        dx: s.dx * from.nx as f64 / to.nx as f64,
        dy: s.dy * from.ny as f64 / to.ny as f64,
        dz: s.dz * from.nz as f64 / to.nz as f64,
    }
}

/// Lower neighbour index and interpolation weight along one axis.
fn axis_weights(n_src: usize, n_dst: usize) -> Vec<(usize, usize, f64)> {
    (0..n_dst)
        .map(|i| {
            let c = center_map(i, n_src, n_dst).clamp(0.0, (n_src - 1) as f64);
            let lo = c.floor() as usize;
            let hi = (lo + 1).min(n_src - 1);
            (lo, hi, c - lo as f64)
        })
        .collect()
}

/// Trilinear resampling to `target`, preserving the physical extent.
pub fn resample_trilinear(vol: &IntensityVolume, target: Dims) -> Result<IntensityVolume> {
    let target = Dims::new(target.nz, target.ny, target.nx)?;
    let src = vol.dims();
    let wz = axis_weights(src.nz, target.nz);
    let wy = axis_weights(src.ny, target.ny);
    let wx = axis_weights(src.nx, target.nx);
    let data = vol.data();
    let at = |z: usize, y: usize, x: usize| data[src.index(z, y, x)] as f64;

    let out = Volume::from_fn(target, rescaled_spacing(vol.spacing(), src, target), |z, y, x| {
        let (z0, z1, tz) = wz[z];
        let (y0, y1, ty) = wy[y];
        let (x0, x1, tx) = wx[x];
        let corners = [
            at(z0, y0, x0),
            at(z0, y0, x1),
            at(z0, y1, x0),
            at(z0, y1, x1),
            at(z1, y0, x0),
            at(z1, y0, x1),
            at(z1, y1, x0),
            at(z1, y1, x1),
        ];
        let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a * (1.0 - t) + b * t };
        let c00 = lerp(corners[0], corners[1], tx);
        let c01 = lerp(corners[2], corners[3], tx);
        let c10 = lerp(corners[4], corners[5], tx);
        let c11 = lerp(corners[6], corners[7], tx);
        let v = lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz);
        let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.clamp(lo, hi) as f32
    });
    IntensityVolume::from_volume(out)
}

/// Nearest-neighbour resampling of a mask; output stays binary.
pub fn resample_mask_nearest(mask: &BinaryMask, target: Dims) -> Result<BinaryMask> {
    let target = Dims::new(target.nz, target.ny, target.nx)?;
    let src = mask.dims();
    let pick = |i: usize, n_src: usize, n_dst: usize| {
        (((i as f64 + 0.5) * n_src as f64 / n_dst as f64).floor() as usize).min(n_src - 1)
    };
    let iz: Vec<usize> = (0..target.nz).map(|i| pick(i, src.nz, target.nz)).collect();
    let iy: Vec<usize> = (0..target.ny).map(|i| pick(i, src.ny, target.ny)).collect();
    let ix: Vec<usize> = (0..target.nx).map(|i| pick(i, src.nx, target.nx)).collect();
    Ok(BinaryMask::from_fn(target, rescaled_spacing(mask.spacing(), src, target), |z, y, x| {
        *mask.get(iz[z], iy[y], ix[x])
    }))
}

/// Min-max normalization of a whole stack to [0, 1]; constant volumes map to 0.
pub fn normalize_minmax(vol: &IntensityVolume) -> IntensityVolume {
    let (lo, hi) = vol
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi as f64 - lo as f64;
    let data = vol
        .data()
        .iter()
        .map(|&v| if range > 0.0 { ((v as f64 - lo as f64) / range) as f32 } else { 0.0 })
        .collect();
    IntensityVolume(Volume { dims: vol.dims(), spacing: vol.spacing(), data })
}

/// Default binarization threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Binarizes `p` with an inclusive threshold: voxel is foreground iff p ≥ t.
pub fn threshold(p: &ProbabilityMap, t: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0, 1]")));
    }
    let data = p.data().iter().map(|&v| v as f64 >= t).collect();
    BinaryMask::new(p.dims(), p.spacing(), data)
}
