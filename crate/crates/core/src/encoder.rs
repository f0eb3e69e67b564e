//! Spatial interaction encoder.
//!
//! For every object `i` of a frame:
//!
//! ```text
//! f_s(o_i)  = phi_s(o_i)
//! f_in(o_i) = sum over j != i of phi_in([o_i, o_j])
//! f_o(o_i)  = phi_agg(f_s(o_i) + f_in(o_i))
//! ```
//!
//! and the frame embedding is the mean of `f_o` over objects. Frames are
//! processed in batches: all objects of all frames form one matrix, all
//! ordered pairs another, and segment sums route rows back to their owners.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Demonstration, FrameGraph};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, MlpParams, MlpVars, Tape, Var};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub phi_s: MlpParams,
    pub phi_in: MlpParams,
    pub phi_agg: MlpParams,
    roster_size: usize,
}

impl EncoderParams {
    /// Seeded fan-in initialization for an `m`-object roster.
    pub fn init(roster_size: usize, hidden_dim: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        if roster_size == 0 || hidden_dim == 0 || embed_dim == 0 {
            return Err(Error::contract("encoder dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = 4 + roster_size;
        Ok(EncoderParams {
            phi_s: MlpParams::init(f, hidden_dim, embed_dim, &mut rng),
            phi_in: MlpParams::init(2 * f, hidden_dim, embed_dim, &mut rng),
            phi_agg: MlpParams::init(embed_dim, hidden_dim, embed_dim, &mut rng),
            roster_size,
        })
    }

    pub fn from_parts(phi_s: MlpParams, phi_in: MlpParams, phi_agg: MlpParams, roster_size: usize) -> Result<Self> {
        let p = EncoderParams { phi_s, phi_in, phi_agg, roster_size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, mlp) in self.named() {
            mlp.validate().map_err(|e| Error::shape(format!("{name}: {e}")))?;
        }
        let f = self.feature_dim();
        let e = self.embed_dim();
        if self.roster_size == 0 {
            return Err(Error::shape("roster size must be positive"));
        }
        if self.phi_s.input_dim() != f || self.phi_in.input_dim() != 2 * f {
            return Err(Error::shape(format!(
                "roster size {} needs phi_s input {f} and phi_in input {}, got {} and {}",
                self.roster_size,
                2 * f,
                self.phi_s.input_dim(),
                self.phi_in.input_dim()
            )));
        }
        if self.phi_in.output_dim() != e || self.phi_agg.input_dim() != e || self.phi_agg.output_dim() != e {
            return Err(Error::shape(format!("phi_s, phi_in and phi_agg must agree on the embedding width {e}")));
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, &MlpParams); 3] {
        [("phi_s", &self.phi_s), ("phi_in", &self.phi_in), ("phi_agg", &self.phi_agg)]
    }

    pub fn roster_size(&self) -> usize {
        self.roster_size
    }

    pub fn feature_dim(&self) -> usize {
        4 + self.roster_size
    }

    pub fn hidden_dim(&self) -> usize {
        self.phi_s.hidden_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.phi_s.output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All twelve tensors in a fixed order (phi_s, phi_in, phi_agg; each
    /// w1, b1, w2, b2).
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = Vec::with_capacity(12);
        v.extend(self.phi_s.tensors());
        v.extend(self.phi_in.tensors());
        v.extend(self.phi_agg.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::with_capacity(12);
        v.extend(self.phi_s.tensors_mut());
        v.extend(self.phi_in.tensors_mut());
        v.extend(self.phi_agg.tensors_mut());
        v
    }

    /// Embeds one frame.
    pub fn encode_frame(&self, fg: &FrameGraph) -> Result<Vec<f64>> {
        Ok(self.encode_frames(std::slice::from_ref(fg))?.into_data())
    }

    /// One embedding per frame, in temporal order.
    pub fn encode_sequence(&self, demo: &Demonstration) -> Result<Vec<Vec<f64>>> {
        Ok(self.encode_frames(demo.frames())?.to_rows())
    }

    /// Embeds a batch of frames into a `frames × embed_dim` matrix.
    pub fn encode_frames(&self, frames: &[FrameGraph]) -> Result<Matrix> {
        let batch = GraphBatch::new(frames, self.roster_size)?;
        let hs = self.phi_s.forward_rows(&batch.objects)?;
        let pairs = batch.pair_inputs();
        let hp = self.phi_in.forward_rows(&pairs)?;
        let mut z = hs;
        for (r, &owner) in batch.pair_owner.iter().enumerate() {
            for (a, b) in z.row_mut(owner).iter_mut().zip(hp.row(r)) {
                *a += *b;
            }
        }
        let fo = self.phi_agg.forward_rows(&z)?;
        let mut psi = Matrix::zeros(batch.frames, self.embed_dim());
        for (r, &frame) in batch.object_frame.iter().enumerate() {
            for (a, b) in psi.row_mut(frame).iter_mut().zip(fo.row(r)) {
                *a += *b;
            }
        }
        psi.scale(1.0 / self.roster_size as f64);
        Ok(psi)
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            phi_s: self.phi_s.register(tape),
            phi_in: self.phi_in.register(tape),
            phi_agg: self.phi_agg.register(tape),
            roster_size: self.roster_size,
        }
    }

    pub fn to_checkpoint(&self) -> EncoderCheckpoint {
        EncoderCheckpoint {
            version: CHECKPOINT_VERSION,
            roster_size: self.roster_size,
            hidden_dim: self.hidden_dim(),
            embed_dim: self.embed_dim(),
            phi_s: self.phi_s.clone(),
            phi_in: self.phi_in.clone(),
            phi_agg: self.phi_agg.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: EncoderCheckpoint = serde_json::from_str(&text)?;
        ck.into_params()
    }
}

/// Tape handles for a registered encoder.
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub phi_s: MlpVars,
    pub phi_in: MlpVars,
    pub phi_agg: MlpVars,
    roster_size: usize,
}

impl EncoderVars {
    /// Same order as [`EncoderParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::with_capacity(12);
        v.extend(self.phi_s.vars());
        v.extend(self.phi_in.vars());
        v.extend(self.phi_agg.vars());
        v
    }

    /// Records the encoder over a batch of frames; the result is a
    /// `frames × embed_dim` node.
    pub fn encode_frames(&self, tape: &mut Tape, frames: &[FrameGraph]) -> Result<Var> {
        let batch = GraphBatch::new(frames, self.roster_size)?;
        let x = tape.constant(batch.objects.clone());
        let hs = self.phi_s.forward(tape, x)?;

        let left = tape.gather_rows(x, batch.pair_owner.clone())?;
        let right = tape.gather_rows(x, batch.pair_other.clone())?;
        let pairs = tape.concat_cols(left, right)?;
        let hp = self.phi_in.forward(tape, pairs)?;
        let hin = tape.segment_sum(hp, batch.pair_owner.clone(), batch.objects.rows())?;

        let z = tape.add(hs, hin)?;
        let fo = self.phi_agg.forward(tape, z)?;
        let total = tape.segment_sum(fo, batch.object_frame.clone(), batch.frames)?;
        Ok(tape.scale(total, 1.0 / self.roster_size as f64))
    }
}

/// Index bookkeeping for a batch of frames.
struct GraphBatch {
    frames: usize,
    /// One row per object of every frame.
    objects: Matrix,
    /// Frame of each object row.
    object_frame: Vec<usize>,
    /// For each ordered pair `(i, j)`, the object rows of `i` and `j`.
    pair_owner: Vec<usize>,
    pair_other: Vec<usize>,
}

impl GraphBatch {
    fn new(frames: &[FrameGraph], m: usize) -> Result<Self> {
        let f = 4 + m;
        let mut data = Vec::with_capacity(frames.len() * m * f);
        let mut object_frame = Vec::with_capacity(frames.len() * m);
        let mut pair_owner = Vec::with_capacity(frames.len() * m * m.saturating_sub(1));
        let mut pair_other = Vec::with_capacity(pair_owner.capacity());
        for (t, fg) in frames.iter().enumerate() {
            if fg.object_count() != m {
                return Err(Error::shape(format!("frame {t} has {} objects, encoder expects {m}", fg.object_count())));
            }
            data.extend_from_slice(fg.features().data());
            let base = t * m;
            for i in 0..m {
                object_frame.push(t);
                for j in (0..m).filter(|&j| j != i) {
                    pair_owner.push(base + i);
                    pair_other.push(base + j);
                }
            }
        }
        Ok(GraphBatch {
            frames: frames.len(),
            objects: Matrix::from_vec(frames.len() * m, f, data)?,
            object_frame,
            pair_owner,
            pair_other,
        })
    }

    fn pair_inputs(&self) -> Matrix {
        let f = self.objects.cols();
        let mut p = Matrix::zeros(self.pair_owner.len(), 2 * f);
        for (r, (&i, &j)) in self.pair_owner.iter().zip(&self.pair_other).enumerate() {
            let row = p.row_mut(r);
            row[..f].copy_from_slice(self.objects.row(i));
            row[f..].copy_from_slice(self.objects.row(j));
        }
        p
    }
}

/// Versioned on-disk form of [`EncoderParams`]. Matrices are nested
/// row arrays; weights are `out × in`, biases single rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderCheckpoint {
    pub version: u32,
    pub roster_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub phi_s: MlpParams,
    pub phi_in: MlpParams,
    pub phi_agg: MlpParams,
}

impl EncoderCheckpoint {
    pub fn into_params(self) -> Result<EncoderParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let p = EncoderParams::from_parts(self.phi_s, self.phi_in, self.phi_agg, self.roster_size)
            .map_err(|e| Error::validation(format!("checkpoint: {e}")))?;
        if p.hidden_dim() != self.hidden_dim || p.embed_dim() != self.embed_dim {
            return Err(Error::validation(format!(
                "checkpoint declares hidden {} / embed {} but tensors are {} / {}",
                self.hidden_dim,
                self.embed_dim,
                p.hidden_dim(),
                p.embed_dim()
            )));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{featurize_frame, BoundingBox};
    use crate::numcore::mlp_forward;
    use rand::Rng;

    fn random_frame(m: usize, rng: &mut ChaCha8Rng) -> FrameGraph {
        let boxes: Vec<BoundingBox> = (0..m)
            .map(|_| {
                let x = rng.random_range(0.0..0.8);
                let y = rng.random_range(0.0..0.8);
                let s = rng.random_range(0.01..0.2);
                BoundingBox::new(x, y, x + s, y + s).unwrap()
            })
            .collect();
        featurize_frame(&boxes).unwrap()
    }

    fn randomize_biases(p: &mut EncoderParams, rng: &mut ChaCha8Rng) {
        for mlp in [&mut p.phi_s, &mut p.phi_in, &mut p.phi_agg] {
            for v in mlp.b1.data_mut().iter_mut().chain(mlp.b2.data_mut()) {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }

    /// Object-by-object, pair-by-pair evaluation with per-vector MLP calls.
    fn naive_psi(p: &EncoderParams, fg: &FrameGraph) -> Vec<f64> {
        let m = fg.object_count();
        let mut psi = vec![0.0; p.embed_dim()];
        for i in 0..m {
            let oi = fg.object(i).as_slice();
            let mut acc = mlp_forward(&p.phi_s, oi).unwrap();
            for j in 0..m {
                if j == i {
                    continue;
                }
                let pair: Vec<f64> = oi.iter().chain(fg.object(j).as_slice()).copied().collect();
                for (a, b) in acc.iter_mut().zip(mlp_forward(&p.phi_in, &pair).unwrap()) {
                    *a += b;
                }
            }
            for (s, v) in psi.iter_mut().zip(mlp_forward(&p.phi_agg, &acc).unwrap()) {
                *s += v;
            }
        }
        psi.iter().map(|v| v / m as f64).collect()
    }

    #[test]
    fn single_object_has_no_interaction_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = EncoderParams::init(1, 16, 8, 1).unwrap();
        randomize_biases(&mut p, &mut rng);
        let fg = random_frame(1, &mut rng);
        let got = p.encode_frame(&fg).unwrap();
        let hs = mlp_forward(&p.phi_s, fg.object(0).as_slice()).unwrap();
        let want = mlp_forward(&p.phi_agg, &hs).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn identical_objects_embed_identically() {
        let p = EncoderParams::init(2, 16, 8, 2).unwrap();
        let row = [0.1, 0.2, 0.3, 0.4, 0.0, 0.0];
        let fg = FrameGraph::from_features(Matrix::from_rows(&[row, row]).unwrap()).unwrap();
        let psi = p.encode_frame(&fg).unwrap();
        let one = {
            let mut acc = mlp_forward(&p.phi_s, &row).unwrap();
            let pair: Vec<f64> = row.iter().chain(&row).copied().collect();
            for (a, b) in acc.iter_mut().zip(mlp_forward(&p.phi_in, &pair).unwrap()) {
                *a += b;
            }
            mlp_forward(&p.phi_agg, &acc).unwrap()
        };
        for (a, b) in psi.iter().zip(&one) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..5 {
            let mut p = EncoderParams::init(3, 32, 24, seed).unwrap();
            randomize_biases(&mut p, &mut rng);
            let fg = random_frame(3, &mut rng);
            let got = p.encode_frame(&fg).unwrap();
            let want = naive_psi(&p, &fg);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = EncoderParams::init(3, 16, 8, 4).unwrap();
        let frames: Vec<FrameGraph> = (0..5).map(|_| random_frame(3, &mut rng)).collect();
        let plain = p.encode_frames(&frames).unwrap();
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let out = vars.encode_frames(&mut tape, &frames).unwrap();
        assert!(tape.value(out).max_abs_diff(&plain) < 1e-13);
    }

    #[test]
    fn sequence_and_shape_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = EncoderParams::init(3, 8, 4, 0).unwrap();
        let fg = random_frame(3, &mut rng);
        assert_eq!(p.encode_frames(&[fg.clone(), fg.clone()]).unwrap().rows(), 2);
        let seq = p.encode_frames(&[fg.clone(), fg]).unwrap();
        assert_eq!(seq.row(0), seq.row(1));
        let wrong = random_frame(2, &mut rng);
        assert!(matches!(p.encode_frame(&wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn zeroing_interaction_changes_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = EncoderParams::init(3, 16, 8, 6).unwrap();
        let fg = random_frame(3, &mut rng);
        let mut ablated = p.clone();
        ablated.phi_in.w1.scale(0.0);
        ablated.phi_in.w2.scale(0.0);
        let a = p.encode_frame(&fg).unwrap();
        let b = ablated.encode_frame(&fg).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let p = EncoderParams::init(3, 8, 4, 9).unwrap();
        let text = serde_json::to_string(&p.to_checkpoint()).unwrap();
        let back: EncoderCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_params().unwrap(), p);

        let mut bad = p.to_checkpoint();
        bad.roster_size = 2;
        assert!(bad.into_params().is_err());
        let mut bad = p.to_checkpoint();
        bad.version = 2;
        assert!(bad.into_params().is_err());
    }
}
