//! Synthetic beating left ventricle with exact voxel-level ground truth.
//!
//! The cavity is a prolate ellipsoid with semi-axes `(2r, r, r)` along
//! `(z, y, x)`, centred in the grid up to a seeded sub-voxel in-plane offset.
//! Its volume follows a two-piece cosine waveform with the maximum (ED) at
//! phase 0 and the minimum (ES) at `round(P·es_phase_fraction)`:
//!
//! ```text
//! t ≤ t_es:  v = V_ES + ΔV·(1 + cos(π t / t_es)) / 2
//! t > t_es:  v = V_ES + ΔV·(1 − cos(π (t − t_es) / (P − t_es))) / 2
//! ```
//!
//! Ellipsoids of one centre and axis ratio are nested, so voxel counts are
//! monotone in the analytic volume. Ground-truth volumes and EF are taken
//! from the voxelized masks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::volgrid::{mask_volume, BinaryMask, Dims, IntensityVolume, Phase, Spacing, StackSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    pub n_phases: u32,
    pub v_ed_target: f64,
    pub ef_target: f64,
    pub es_phase_fraction: f64,
    /// Myocardial wall thickness in in-plane voxels.
    pub wall_thickness: f64,
    /// Cavity, myocardium and background intensities.
    pub intensities: [f32; 3],
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: Dims::standard(),
            spacing: Spacing::default(),
            n_phases: 13,
            v_ed_target: 500.0,
            ef_target: 55.0,
            es_phase_fraction: 0.4,
            wall_thickness: 3.0,
            intensities: [300.0, 150.0, 30.0],
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        Dims::new(self.dims.nz, self.dims.ny, self.dims.nx)?;
        Spacing::new(self.spacing.dx, self.spacing.dy, self.spacing.dz)?;
        if self.n_phases < 2 {
            return bad(format!("phantom needs at least 2 phases, got {}", self.n_phases));
        }
        if !(self.ef_target > 0.0 && self.ef_target < 100.0) {
            return bad(format!("ef_target must lie in (0, 100), got {}", self.ef_target));
        }
        if !(self.v_ed_target > 0.0 && self.v_ed_target.is_finite()) {
            return bad(format!("v_ed_target must be > 0, got {}", self.v_ed_target));
        }
        if !(self.es_phase_fraction > 0.0 && self.es_phase_fraction < 1.0) {
            return bad(format!("es_phase_fraction must lie in (0, 1), got {}", self.es_phase_fraction));
        }
        if !(self.wall_thickness >= 0.0 && self.wall_thickness.is_finite()) {
            return bad(format!("wall_thickness must be >= 0, got {}", self.wall_thickness));
        }
        if self.intensities.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad(format!("intensities must be finite and >= 0, got {:?}", self.intensities));
        }
        let es = self.es_phase();
        if es == 0 || es >= self.n_phases {
            return bad(format!("end-systolic phase {es} falls outside 1..{}", self.n_phases));
        }
        Ok(())
    }

    pub fn es_phase(&self) -> u32 {
        (self.n_phases as f64 * self.es_phase_fraction).round() as u32
    }

    pub fn v_es_target(&self) -> f64 {
        self.v_ed_target * (1.0 - self.ef_target / 100.0)
    }

    /// Analytic cavity volume at phase `t` in mm³.
    pub fn target_volume(&self, t: u32) -> f64 {
        let (ved, ves) = (self.v_ed_target, self.v_es_target());
        let dv = ved - ves;
        let (t, te, p) = (t as f64, self.es_phase() as f64, self.n_phases as f64);
        if t <= te {
            ves + dv * (1.0 + (PI * t / te).cos()) / 2.0
        } else {
            ves + dv * (1.0 - (PI * (t - te) / (p - te)).cos()) / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub phases: Vec<u32>,
    /// Voxelized cavity volume per phase, mm³.
    pub volumes_mm3: Vec<f64>,
    /// Analytic target volume per phase, mm³.
    pub target_volumes_mm3: Vec<f64>,
    pub ed_phase: u32,
    pub es_phase: u32,
    pub v_ed_mm3: f64,
    pub v_es_mm3: f64,
    pub ef_percent: f64,
    /// Cavity centre in mm, `(z, y, x)`.
    pub center_mm: [f64; 3],
}

/// `100·(V_ED − V_ES)/V_ED` over the voxelized volumes.
pub fn ground_truth_ef(gt: &GroundTruth) -> f64 {
    ef_from_volumes(gt.v_ed_mm3, gt.v_es_mm3)
}

fn ef_from_volumes(ved: f64, ves: f64) -> f64 {
    if ved == ves {
        return 0.0;
    }
    100.0 * (ved - ves) / ved
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub series: StackSeries,
    pub truth: GroundTruth,
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    generate_with(spec, Exec::default())
}

pub fn generate_with(spec: &PhantomSpec, exec: Exec) -> Result<Phantom> {
    spec.validate()?;
    let (dims, s) = (spec.dims, spec.spacing);
    let [nz, ny, nx] = dims.as_array();
    let extent = [nz as f64 * s.dz, ny as f64 * s.dy, nx as f64 * s.dx];

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jy: f64 = rng.random_range(-0.5..0.5);
    let jx: f64 = rng.random_range(-0.5..0.5);
    let center = [extent[0] / 2.0, extent[1] / 2.0 + jy * s.dy, extent[2] / 2.0 + jx * s.dx];

    let radius = |v: f64| (3.0 * v / (8.0 * PI)).cbrt();
    let r_ed = radius(spec.v_ed_target);
    let semi_ed = [2.0 * r_ed, r_ed, r_ed];
    for axis in 0..3 {
        if center[axis] - semi_ed[axis] < 0.0 || center[axis] + semi_ed[axis] > extent[axis] {
            return Err(Error::OutOfBounds(format!(
                "end-diastolic semi-axes {semi_ed:?} mm around centre {center:?} mm exceed grid extent {extent:?} mm"
            )));
        }
    }

    let wall = spec.wall_thickness * s.dx;
    let [ic, im, ib] = spec.intensities;
    let phases: Vec<u32> = (0..spec.n_phases).collect();
    let built: Vec<(BinaryMask, IntensityVolume)> = par::map_slice(exec, &phases, |&t| {
        let r = radius(spec.target_volume(t));
        let semi = [2.0 * r, r, r];
        let outer = [semi[0] + wall, semi[1] + wall, semi[2] + wall];
        let level = |z: usize, y: usize, x: usize, a: &[f64; 3]| {
            let pz = ((z as f64 + 0.5) * s.dz - center[0]) / a[0];
            let py = ((y as f64 + 0.5) * s.dy - center[1]) / a[1];
            let px = ((x as f64 + 0.5) * s.dx - center[2]) / a[2];
            pz * pz + py * py + px * px
        };
        let mask = BinaryMask::from_fn(dims, s, |z, y, x| level(z, y, x, &semi) <= 1.0);
        let data: Vec<f32> = (0..dims.len())
            .map(|i| {
                let (z, y, x) = dims.coords(i);
                if mask.data()[i] {
                    ic
                } else if level(z, y, x, &outer) <= 1.0 {
                    im
                } else {
                    ib
                }
            })
            .collect();
        let intensity = IntensityVolume::new(dims, s, data).expect("phantom intensities are valid");
        (mask, intensity)
    });

    let volumes: Vec<f64> = built.iter().map(|(m, _)| mask_volume(m)).collect();
    let es = spec.es_phase();
    let (ved, ves) = (volumes[0], volumes[es as usize]);
    let ed_unique = volumes[1..].iter().all(|&v| v < ved);
    let es_unique = volumes.iter().enumerate().all(|(i, &v)| i == es as usize || v > ves);
    if !ed_unique || !es_unique {
        return Err(Error::Degenerate(format!(
            "voxelized volumes do not have unique extremes at phases 0 and {es}: {volumes:?}; \
             use a finer grid, larger volume or different seed"
        )));
    }

    let truth = GroundTruth {
        phases: phases.clone(),
        target_volumes_mm3: phases.iter().map(|&t| spec.target_volume(t)).collect(),
        volumes_mm3: volumes,
        ed_phase: 0,
        es_phase: es,
        v_ed_mm3: ved,
        v_es_mm3: ves,
        ef_percent: ef_from_volumes(ved, ves),
        center_mm: center,
    };
    let series = StackSeries::new(
        phases
            .iter()
            .zip(built)
            .map(|(&index, (mask, intensity))| Phase { index, mask, intensity: Some(intensity) })
            .collect(),
    )?;
    Ok(Phantom { series, truth })
}
