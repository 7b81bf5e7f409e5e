use std::collections::HashSet;
use std::io::Write;

use nalgebra::{Isometry3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dh_transform;
use crate::error::{Error, Result};
use crate::model::RobotModel;

/// Voxel edge used for the reference volume figure, m.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct WorkspaceEstimate {
    /// Occupied-voxel volume, m^3.
    pub volume: f64,
    pub voxel_size: f64,
    pub sample_count: usize,
    /// Integer voxel coordinates, in first-hit order.
    pub voxels: Vec<[i32; 3]>,
}

impl WorkspaceEstimate {
    pub fn occupied(&self) -> usize {
        self.voxels.len()
    }

    pub fn voxel_center(&self, v: [i32; 3]) -> Vector3<f64> {
        Vector3::new(
            (f64::from(v[0]) + 0.5) * self.voxel_size,
            (f64::from(v[1]) + 0.5) * self.voxel_size,
            (f64::from(v[2]) + 0.5) * self.voxel_size,
        )
    }

    /// Writes occupied voxel centres as `x,y,z` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,z")?;
        for &v in &self.voxels {
            let c = self.voxel_center(v);
            writeln!(out, "{},{},{}", c.x, c.y, c.z)?;
        }
        Ok(())
    }
}

/// Position-only reachable volume: joint vectors are drawn uniformly inside
/// the joint limits, the end-effector position of each is binned into cubic
/// voxels, and the occupied voxel volume is returned. Sample `k` depends only
/// on the seed and `k`, so a larger `sample_count` extends the same sequence.
pub fn estimate_workspace_volume(
    model: &RobotModel,
    sample_count: usize,
    voxel_size: f64,
    rng_seed: u64,
) -> Result<WorkspaceEstimate> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be > 0".into()));
    }
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidArgument("voxel_size must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = HashSet::new();
    let mut voxels = Vec::new();
    for _ in 0..sample_count {
        let mut t = Isometry3::identity();
        for (row, lim) in model.dh.rows.iter().zip(&model.limits.joints) {
            let q = rng.random_range(lim.position_min..=lim.position_max);
            t *= dh_transform(row, q);
        }
        let p = t.translation.vector / voxel_size;
        let key = [p.x.floor() as i32, p.y.floor() as i32, p.z.floor() as i32];
        if seen.insert(key) {
            voxels.push(key);
        }
    }
    Ok(WorkspaceEstimate {
        volume: voxels.len() as f64 * voxel_size.powi(3),
        voxel_size,
        sample_count,
        voxels,
    })
}
