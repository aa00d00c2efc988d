//! Egocentric observation rendering and frozen target embeddings.
//!
//! A pose sees the world through a 90° frustum partitioned into an
//! `n_v × n_v` grid of bins — rows index depth (near → far over 0–5 m),
//! columns index azimuth (left → right). Each bin carries a `d_v`-channel
//! feature vector: a class-code subspace summing the codes of objects
//! visible in that bin, a free-space indicator, a wall indicator, and a
//! scalar depth coordinate. Target classes are encoded by frozen seeded
//! unit vectors standing in for pretrained word embeddings.

use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gridworld::{in_view, line_of_sight, AgentPose, ObjectClass, Scene, VIEW_RANGE_M};
use crate::tensor::Tensor;

/// Feature grid side length (bins per axis).
pub const N_V: usize = 7;
/// Channels per bin.
pub const D_V: usize = 32;
/// Width of the class-code subspace (channels `0..D_C`).
pub const D_C: usize = 24;
/// Target embedding dimension.
pub const D_G: usize = 32;
/// Global seed for all frozen embeddings; per-class streams derive from it.
pub const EMBED_SEED: u64 = 7;

/// Channel indices following the class-code subspace.
pub const FREE_CHANNEL: usize = D_C;
pub const WALL_CHANNEL: usize = D_C + 1;
pub const DEPTH_CHANNEL: usize = D_C + 2;

const MAX_CODE_PAIR_COS: f64 = 0.35;
/// Frozen property of the target-embedding table, asserted by tests.
#[cfg(test)]
const MAX_TARGET_PAIR_COS: f64 = 0.5;

/// Frozen per-class code vectors spanning the class-code subspace.
///
/// Codes are seeded unit Gaussians, re-drawn per class until every pair
/// satisfies |cos| ≤ 0.35 (quasi-orthogonality), so summing a few codes
/// in one bin stays decodable.
#[derive(Debug, Clone)]
pub struct ClassEmbeddingTable {
    codes: Vec<Tensor>,
}

impl ClassEmbeddingTable {
    pub fn new() -> Self {
        let mut codes: Vec<Tensor> = Vec::with_capacity(ObjectClass::ALL.len());
        for class in ObjectClass::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(EMBED_SEED);
            rng.set_stream(1_000 + class.ordinal() as u64);
            let code = loop {
                let candidate = unit_gaussian(&mut rng, D_C);
                let ok = codes.iter().all(|prev| {
                    let cos: f64 = prev
                        .data()
                        .iter()
                        .zip(candidate.data())
                        .map(|(a, b)| a * b)
                        .sum();
                    cos.abs() <= MAX_CODE_PAIR_COS
                });
                if ok {
                    break candidate;
                }
            };
            codes.push(code);
        }
        Self { codes }
    }

    pub fn code(&self, class: ObjectClass) -> &Tensor {
        &self.codes[class.ordinal()]
    }
}

impl Default for ClassEmbeddingTable {
    fn default() -> Self {
        Self::new()
    }
}

/// The process-wide code table (construction is deterministic).
pub fn class_codes() -> &'static ClassEmbeddingTable {
    static TABLE: OnceLock<ClassEmbeddingTable> = OnceLock::new();
    TABLE.get_or_init(ClassEmbeddingTable::new)
}

/// A frozen unit-norm embedding of a target class.
#[derive(Debug, Clone)]
pub struct TargetEmbedding {
    pub class: ObjectClass,
    pub u_g: Tensor,
}

/// Deterministic stand-in for a pretrained word embedding: seeded Gaussian
/// (global seed 7, stream = class ordinal) normalized to unit length.
pub fn target_embedding(class: ObjectClass) -> TargetEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(EMBED_SEED);
    rng.set_stream(class.ordinal() as u64);
    TargetEmbedding {
        class,
        u_g: unit_gaussian(&mut rng, D_G),
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Tensor {
    loop {
        let data: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return Tensor::vector(data.into_iter().map(|v| v / norm).collect());
        }
    }
}

/// An `n_v × n_v` grid of `d_v`-channel bin vectors, stored row-major as a
/// `[n_v·n_v, d_v]` tensor (flat bin index = `i·n_v + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub n_v: usize,
    pub d_v: usize,
    values: Tensor,
}

impl FeatureMap {
    pub fn bin(&self, i: usize, j: usize) -> &[f64] {
        self.values.row(i * self.n_v + j)
    }

    /// The `[n_v·n_v, d_v]` backing tensor.
    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

/// Depth-row index for a distance in meters (rows span 0–5 m, near → far).
fn depth_row(dist_m: f64) -> usize {
    let i = (dist_m / (VIEW_RANGE_M / N_V as f64)).floor() as isize;
    i.clamp(0, N_V as isize - 1) as usize
}

/// Azimuth-column index for a signed bearing in degrees (positive = right;
/// columns span −45°..+45°, left → right).
fn azimuth_col(bearing_deg: f64) -> usize {
    let j = ((bearing_deg + 45.0) / (90.0 / N_V as f64)).floor() as isize;
    j.clamp(0, N_V as isize - 1) as usize
}

/// Signed bearing of cell offset (dx, dy) relative to the pose heading, in
/// degrees; positive bearings are to the agent's right (the heading+45°
/// side). The zero offset reads as dead ahead.
fn bearing_deg(pose: &AgentPose, dx: i32, dy: i32) -> f64 {
    let (hx, hy) = pose.heading_dir();
    let dot = (hx * dx + hy * dy) as f64;
    let cross = (hx * dy - hy * dx) as f64;
    cross.atan2(dot).to_degrees()
}

/// Bin holding an in-view object at cell offset (dx, dy) from the pose.
fn object_bin(pose: &AgentPose, cell_size_m: f64, dx: i32, dy: i32) -> (usize, usize) {
    let dist_m = cell_size_m * ((dx * dx + dy * dy) as f64).sqrt();
    (depth_row(dist_m), azimuth_col(bearing_deg(pose, dx, dy)))
}

/// The cell a bin's center point falls in.
fn bin_center_cell(pose: &AgentPose, cell_size_m: f64, i: usize, j: usize) -> (i32, i32) {
    let dist_m = (i as f64 + 0.5) * (VIEW_RANGE_M / N_V as f64);
    let bearing = -45.0 + (j as f64 + 0.5) * (90.0 / N_V as f64);
    let (hx, hy) = pose.heading_dir();
    let heading = (hy as f64).atan2(hx as f64);
    let angle = heading + bearing.to_radians();
    let r_cells = dist_m / cell_size_m;
    (
        pose.x + (r_cells * angle.cos()).round() as i32,
        pose.y + (r_cells * angle.sin()).round() as i32,
    )
}

/// Renders the egocentric feature map for a pose.
///
/// Class channels sum the codes of objects visible per the `in_view`
/// geometry, binned by distance row and bearing column. Each bin's center
/// is probed along the sight line: an unobstructed free center sets the
/// free indicator, anything else (wall at the center, center out of
/// bounds, or an occluder in front of it) sets the wall indicator. The
/// depth channel always carries the bin's midpoint distance / 5 m.
pub fn render(scene: &Scene, pose: &AgentPose) -> FeatureMap {
    let table = class_codes();
    let mut values = Tensor::zeros(&[N_V * N_V, D_V]);
    for i in 0..N_V {
        for j in 0..N_V {
            let base = (i * N_V + j) * D_V;
            let (cx, cy) = bin_center_cell(pose, scene.cell_size_m, i, j);
            let open = !scene.is_wall(cx, cy) && line_of_sight(scene, pose.x, pose.y, cx, cy);
            let channel = if open { FREE_CHANNEL } else { WALL_CHANNEL };
            values.data_mut()[base + channel] = 1.0;
            values.data_mut()[base + DEPTH_CHANNEL] =
                (i as f64 + 0.5) * (VIEW_RANGE_M / N_V as f64) / VIEW_RANGE_M;
        }
    }
    for obj in &scene.objects {
        if !in_view(scene, pose, obj) {
            continue;
        }
        let (i, j) = object_bin(pose, scene.cell_size_m, obj.x - pose.x, obj.y - pose.y);
        let base = (i * N_V + j) * D_V;
        let code = table.code(obj.class);
        for (c, v) in code.data().iter().enumerate() {
            values.data_mut()[base + c] += v;
        }
    }
    FeatureMap {
        n_v: N_V,
        d_v: D_V,
        values,
    }
}

/// Row-major `n_v·n_v` mask: true exactly where `render` would place a
/// positive contribution for `class` — i.e. the bins holding in-view
/// instances of it.
pub fn target_visible_mask(scene: &Scene, pose: &AgentPose, class: ObjectClass) -> Vec<bool> {
    let mut mask = vec![false; N_V * N_V];
    for obj in scene.instances_of(class) {
        if in_view(scene, pose, obj) {
            let (i, j) = object_bin(pose, scene.cell_size_m, obj.x - pose.x, obj.y - pose.y);
            mask[i * N_V + j] = true;
        }
    }
    mask
}
