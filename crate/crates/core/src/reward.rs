//! Learned reward `r(o) = -||psi(o) - g||² / c`.
//!
//! `g` is the mean embedding of the demonstrations' final frames and `c`
//! the mean squared embedding distance between each demonstration's first
//! and final frame, so a first frame of a typical demonstration scores
//! about -1 and the goal scores 0.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FrameGraph, TrajectoryDataset};
use crate::encoder::{EncoderCheckpoint, EncoderParams, CHECKPOINT_VERSION};
use crate::error::{Error, Result};
use crate::numcore::{squared_distance, MlpParams};

/// Below this the scale is treated as an embedding collapse.
pub const MIN_SCALE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    encoder: EncoderParams,
    goal: Vec<f64>,
    scale: f64,
}

/// Mean over demonstrations of the final-frame embedding.
pub fn compute_goal_embedding(enc: &EncoderParams, ds: &TrajectoryDataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::contract("goal embedding needs at least one demonstration"));
    }
    let finals: Vec<FrameGraph> = ds.demos.iter().map(|d| d.last().clone()).collect();
    let emb = enc.encode_frames(&finals)?;
    let mut g = vec![0.0; enc.embed_dim()];
    for row in emb.iter_rows() {
        for (a, b) in g.iter_mut().zip(row) {
            *a += *b;
        }
    }
    let n = ds.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok(g)
}

/// Mean squared embedding distance between first and final frames.
pub fn compute_scale(enc: &EncoderParams, ds: &TrajectoryDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::contract("reward scale needs at least one demonstration"));
    }
    let mut total = 0.0;
    for d in &ds.demos {
        if d.len() < 2 {
            return Err(Error::contract(format!("demo {:?} has fewer than 2 frames", d.id)));
        }
        let e = enc.encode_frames(&[d.first().clone(), d.last().clone()])?;
        total += squared_distance(e.row(0), e.row(1));
    }
    let c = total / ds.len() as f64;
    if !(c >= MIN_SCALE) {
        return Err(Error::DegenerateScale(c));
    }
    Ok(c)
}

impl RewardModel {
    pub fn new(encoder: EncoderParams, goal: Vec<f64>, scale: f64) -> Result<Self> {
        if goal.len() != encoder.embed_dim() {
            return Err(Error::shape(format!(
                "goal has width {}, encoder embeds to {}",
                goal.len(),
                encoder.embed_dim()
            )));
        }
        if goal.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("goal embedding must be finite"));
        }
        if !(scale >= MIN_SCALE) || !scale.is_finite() {
            return Err(Error::DegenerateScale(scale));
        }
        Ok(RewardModel { encoder, goal, scale })
    }

    /// Freezes `encoder` and derives `g` and `c` from `ds`.
    pub fn fit(encoder: EncoderParams, ds: &TrajectoryDataset) -> Result<Self> {
        let goal = compute_goal_embedding(&encoder, ds)?;
        let scale = compute_scale(&encoder, ds)?;
        RewardModel::new(encoder, goal, scale)
    }

    pub fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn reward_from_embedding(&self, embedding: &[f64]) -> f64 {
        -squared_distance(embedding, &self.goal) / self.scale
    }

    pub fn reward(&self, fg: &FrameGraph) -> Result<f64> {
        Ok(self.reward_from_embedding(&self.encoder.encode_frame(fg)?))
    }

    /// Rewards for a batch of frames.
    pub fn rewards(&self, frames: &[FrameGraph]) -> Result<Vec<f64>> {
        let e = self.encoder.encode_frames(frames)?;
        Ok(e.iter_rows().map(|r| self.reward_from_embedding(r)).collect())
    }

    pub fn to_file(&self) -> RewardModelFile {
        let ck = self.encoder.to_checkpoint();
        RewardModelFile {
            version: ck.version,
            roster_size: ck.roster_size,
            hidden_dim: ck.hidden_dim,
            embed_dim: ck.embed_dim,
            phi_s: ck.phi_s,
            phi_in: ck.phi_in,
            phi_agg: ck.phi_agg,
            g: self.goal.clone(),
            c: self.scale,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: RewardModelFile = serde_json::from_str(text)?;
        f.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Encoder checkpoint plus `g` and `c`, in one JSON document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardModelFile {
    pub version: u32,
    pub roster_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub phi_s: MlpParams,
    pub phi_in: MlpParams,
    pub phi_agg: MlpParams,
    pub g: Vec<f64>,
    pub c: f64,
}

impl RewardModelFile {
    pub fn into_model(self) -> Result<RewardModel> {
        debug_assert_eq!(CHECKPOINT_VERSION, 1);
        let encoder = EncoderCheckpoint {
            version: self.version,
            roster_size: self.roster_size,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            phi_s: self.phi_s,
            phi_in: self.phi_in,
            phi_agg: self.phi_agg,
        }
        .into_params()?;
        RewardModel::new(encoder, self.g, self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BoundingBox, Demonstration};
    use crate::numcore::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::Map;

    fn random_boxes(rng: &mut ChaCha8Rng) -> Vec<BoundingBox> {
        (0..3)
            .map(|_| {
                let x = rng.random_range(0.0..0.9);
                let y = rng.random_range(0.0..0.9);
                BoundingBox::new(x, y, x + 0.1, y + 0.1).unwrap()
            })
            .collect()
    }

    fn random_dataset(n: usize, seed: u64) -> TrajectoryDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let demos = (0..n)
            .map(|i| {
                let len = rng.random_range(2..6);
                let boxes = (0..len).map(|_| random_boxes(&mut rng)).collect();
                Demonstration::new(format!("d{i}"), boxes, Map::new()).unwrap()
            })
            .collect();
        TrajectoryDataset::new(vec!["a".into(), "o".into(), "g".into()], demos).unwrap()
    }

    /// Two fixed box layouts; every demo starts at `a` and ends at `b`.
    fn homogeneous_dataset(n: usize) -> TrajectoryDataset {
        let a = vec![
            BoundingBox::new(0.0, 0.0, 0.1, 0.1).unwrap(),
            BoundingBox::new(0.4, 0.4, 0.5, 0.5).unwrap(),
            BoundingBox::new(0.8, 0.8, 0.9, 0.9).unwrap(),
        ];
        let b = vec![
            BoundingBox::new(0.6, 0.6, 0.7, 0.7).unwrap(),
            BoundingBox::new(0.75, 0.75, 0.85, 0.85).unwrap(),
            BoundingBox::new(0.8, 0.8, 0.9, 0.9).unwrap(),
        ];
        let demos = (0..n)
            .map(|i| {
                let mut frames = vec![a.clone()];
                frames.extend(std::iter::repeat_n(a.clone(), i));
                frames.push(b.clone());
                Demonstration::new(format!("h{i}"), frames, Map::new()).unwrap()
            })
            .collect();
        TrajectoryDataset::new(vec!["a".into(), "o".into(), "g".into()], demos).unwrap()
    }

    #[test]
    fn goal_of_single_demo_is_last_frame() {
        let ds = random_dataset(1, 1);
        let enc = EncoderParams::init(3, 16, 8, 1).unwrap();
        let g = compute_goal_embedding(&enc, &ds).unwrap();
        assert_eq!(g, enc.encode_frame(ds.demos[0].last()).unwrap());
    }

    #[test]
    fn goal_matches_accumulate_divide() {
        let ds = random_dataset(7, 2);
        let enc = EncoderParams::init(3, 16, 8, 2).unwrap();
        let g = compute_goal_embedding(&enc, &ds).unwrap();
        let mut acc = vec![0.0; 8];
        for d in &ds.demos {
            for (a, v) in acc.iter_mut().zip(enc.encode_frame(d.last()).unwrap()) {
                *a += v;
            }
        }
        for (a, b) in g.iter().zip(&acc) {
            assert!((a - b / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_matches_brute_force() {
        let ds = random_dataset(6, 3);
        let enc = EncoderParams::init(3, 16, 8, 3).unwrap();
        let c = compute_scale(&enc, &ds).unwrap();
        let mut total = 0.0;
        for d in &ds.demos {
            let a = enc.encode_frame(d.first()).unwrap();
            let b = enc.encode_frame(d.last()).unwrap();
            total += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        }
        assert!((c - total / 6.0).abs() < 1e-12 * c.max(1.0));
    }

    #[test]
    fn homogeneous_dataset_calibrates_to_minus_one() {
        let ds = homogeneous_dataset(4);
        let enc = EncoderParams::init(3, 16, 8, 4).unwrap();
        let a = enc.encode_frame(ds.demos[0].first()).unwrap();
        let b = enc.encode_frame(ds.demos[0].last()).unwrap();
        let c = compute_scale(&enc, &ds).unwrap();
        assert!((c - squared_distance(&a, &b)).abs() < 1e-12 * c);
        let rm = RewardModel::fit(enc, &ds).unwrap();
        assert!((rm.reward(ds.demos[2].first()).unwrap() + 1.0).abs() < 1e-9);
        assert_eq!(rm.reward_from_embedding(rm.goal()), 0.0);
    }

    #[test]
    fn collapsed_encoder_is_degenerate() {
        let ds = random_dataset(3, 5);
        let mut enc = EncoderParams::init(3, 8, 4, 5).unwrap();
        for t in enc.tensors_mut() {
            t.scale(0.0);
        }
        enc.phi_agg.b2 = Matrix::row_vector(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(compute_scale(&enc, &ds), Err(Error::DegenerateScale(_))));
        assert!(matches!(RewardModel::fit(enc, &ds), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn empty_dataset_is_contract_error() {
        let ds = TrajectoryDataset::new(vec!["a".into()], vec![]).unwrap();
        let enc = EncoderParams::init(1, 4, 4, 0).unwrap();
        assert!(matches!(compute_goal_embedding(&enc, &ds), Err(Error::Contract(_))));
        assert!(matches!(compute_scale(&enc, &ds), Err(Error::Contract(_))));
    }

    #[test]
    fn rewards_are_nonpositive_and_order_by_distance() {
        let ds = random_dataset(5, 6);
        let rm = RewardModel::fit(EncoderParams::init(3, 16, 8, 6).unwrap(), &ds).unwrap();
        let frames: Vec<FrameGraph> = ds.demos.iter().flat_map(|d| d.frames().to_vec()).collect();
        let r = rm.rewards(&frames).unwrap();
        let e = rm.encoder().encode_frames(&frames).unwrap();
        for (i, ri) in r.iter().enumerate() {
            assert!(*ri <= 0.0);
            for (j, rj) in r.iter().enumerate() {
                let di = squared_distance(e.row(i), rm.goal());
                let dj = squared_distance(e.row(j), rm.goal());
                assert_eq!(ri > rj, di < dj);
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let ds = random_dataset(3, 7);
        let rm = RewardModel::fit(EncoderParams::init(3, 8, 4, 7).unwrap(), &ds).unwrap();
        let back = RewardModel::from_json(&rm.to_json().unwrap()).unwrap();
        assert_eq!(back, rm);
        let v: serde_json::Value = serde_json::from_str(&rm.to_json().unwrap()).unwrap();
        for key in ["version", "roster_size", "hidden_dim", "embed_dim", "phi_s", "phi_in", "phi_agg", "g", "c"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
