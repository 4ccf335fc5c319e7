//! Binary morphology used to clean thresholded segmentations: a single
//! opening removes thin protrusions and isolated voxels, cavity filling
//! closes holes enclosed by the ventricle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::volgrid::{threshold, BinaryMask, Dims, ProbabilityMap, DEFAULT_THRESHOLD};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructuringElement {
    /// Center plus the 6 face neighbours.
    #[default]
    Cross6,
    /// Full 3×3×3 neighbourhood.
    Cube26,
}

const CROSS6: [[isize; 3]; 7] = [[0, 0, 0], [-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

impl StructuringElement {
    /// Offsets as (dz, dy, dx), including the origin.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        match self {
            StructuringElement::Cross6 => CROSS6.to_vec(),
            StructuringElement::Cube26 => {
                let mut v = Vec::with_capacity(27);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            v.push([dz, dy, dx]);
                        }
                    }
                }
                v
            }
        }
    }
}

#[inline]
fn shifted(d: Dims, z: usize, y: usize, x: usize, o: [isize; 3]) -> Option<usize> {
    let z = z as isize + o[0];
    let y = y as isize + o[1];
    let x = x as isize + o[2];
    if z < 0 || y < 0 || x < 0 || z >= d.nz as isize || y >= d.ny as isize || x >= d.nx as isize {
        None
    } else {
        Some(d.index(z as usize, y as usize, x as usize))
    }
}

pub fn erode(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    erode_with(mask, se, Exec::default())
}

/// Out-of-bounds neighbours count as background.
pub fn erode_with(mask: &BinaryMask, se: StructuringElement, exec: Exec) -> BinaryMask {
    let d = mask.dims();
    let src = mask.data();
    let offs = se.offsets();
    let mut out = vec![false; d.len()];
    par::fill(exec, &mut out, |i| {
        if !src[i] {
            return false;
        }
        let (z, y, x) = d.coords(i);
        offs.iter().all(|&o| shifted(d, z, y, x, o).is_some_and(|j| src[j]))
    });
    mask.with_data(out)
}

pub fn dilate(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    dilate_with(mask, se, Exec::default())
}

pub fn dilate_with(mask: &BinaryMask, se: StructuringElement, exec: Exec) -> BinaryMask {
    let d = mask.dims();
    let src = mask.data();
    let offs = se.offsets();
    let mut out = vec![false; d.len()];
    par::fill(exec, &mut out, |i| {
        if src[i] {
            return true;
        }
        let (z, y, x) = d.coords(i);
        // Symmetric element: reflection is the element itself.
        offs.iter().any(|&o| shifted(d, z, y, x, o).is_some_and(|j| src[j]))
    });
    mask.with_data(out)
}

/// Erosion followed by dilation.
pub fn opening(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Dilation followed by erosion.
pub fn closing(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Fills background voxels that are not 6-connected (through background) to
/// the grid boundary.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let d = mask.dims();
    let src = mask.data();
    let mut outside = vec![false; d.len()];
    let mut queue = VecDeque::new();

    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                let border = z == 0 || y == 0 || x == 0 || z + 1 == d.nz || y + 1 == d.ny || x + 1 == d.nx;
                let i = d.index(z, y, x);
                if border && !src[i] && !outside[i] {
                    outside[i] = true;
                    queue.push_back(i);
                }
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (z, y, x) = d.coords(i);
        for &o in &CROSS6[1..] {
            if let Some(j) = shifted(d, z, y, x, o) {
                if !src[j] && !outside[j] {
                    outside[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    mask.with_data(outside.into_iter().map(|o| !o).collect())
}

/// Settings for [`postprocess_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub threshold: f64,
    pub element: StructuringElement,
    /// Erosions (then as many dilations) in the opening step; 0 skips it.
    pub opening_iterations: usize,
    pub fill_holes: bool,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            element: StructuringElement::Cross6,
            opening_iterations: 1,
            fill_holes: true,
        }
    }
}

/// Threshold, open once with a 6-connected cross, then fill cavities.
pub fn postprocess(p: &ProbabilityMap, t: f64) -> Result<BinaryMask> {
    postprocess_with(p, &PostprocessConfig { threshold: t, ..Default::default() })
}

pub fn postprocess_with(p: &ProbabilityMap, cfg: &PostprocessConfig) -> Result<BinaryMask> {
    let mut m = threshold(p, cfg.threshold)?;
    for _ in 0..cfg.opening_iterations {
        m = erode(&m, cfg.element);
    }
    for _ in 0..cfg.opening_iterations {
        m = dilate(&m, cfg.element);
    }
    if cfg.fill_holes {
        m = fill_holes(&m);
    }
    Ok(m)
}
