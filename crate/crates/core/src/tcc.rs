//! Temporal cycle-consistency.
//!
//! For frame `n` of sequence `S_i`, its soft nearest neighbour in `S_j` is
//! `nu = Σ_k alpha_k S_j[k]` with `alpha = softmax(-||S_i[n] - S_j[k]||²)`.
//! Cycling back, `beta = softmax(-||nu - S_i[k]||² / temperature)` over the
//! frames of `S_i`, `mu = Σ_k beta_k k`, and the frame loss is `(mu - n)²`.
//! A pair loss averages frames, then the two directions `i→j` and `j→i`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{subsample_indices, FrameGraph, TrajectoryDataset};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::numcore::{adam_step, softmax_in_place, squared_distance, AdamState, Matrix, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TccConfig {
    pub frames_per_seq: usize,
    /// Sequences per batch; the pair loss needs exactly two.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    /// Applied to the cycle-back softmax.
    pub temperature: f64,
    /// Applied to the soft-nearest-neighbour softmax; 1 means untempered.
    pub alpha_temperature: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TccConfig {
    fn default() -> Self {
        TccConfig {
            frames_per_seq: 90,
            batch_size: 2,
            lr: 1e-5,
            weight_decay: 1e-5,
            iterations: 12000,
            temperature: 0.1,
            alpha_temperature: 1.0,
            embed_dim: 128,
            hidden_dim: 128,
            seed: 0,
        }
    }
}

impl TccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !(self.alpha_temperature > 0.0) {
            return Err(Error::contract("softmax temperatures must be positive"));
        }
        if self.frames_per_seq < 2 {
            return Err(Error::contract("frames_per_seq must be at least 2"));
        }
        if self.batch_size != 2 {
            return Err(Error::contract(format!("batch_size must be 2 (one sequence pair), got {}", self.batch_size)));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::contract("lr must be positive and weight_decay non-negative"));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::contract("network widths must be positive"));
        }
        Ok(())
    }

    /// One-line echo of the settings that matter for reproduction.
    pub fn summary(&self) -> String {
        format!(
            "iters={} lr={:e} k={} temp={} embed={}",
            self.iterations, self.lr, self.frames_per_seq, self.temperature, self.embed_dim
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleBack {
    pub beta: Vec<f64>,
    pub mu: f64,
    pub loss: f64,
}

/// Every intermediate of one frame's cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentTerms {
    pub alpha: Vec<f64>,
    pub nu: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: f64,
    pub loss: f64,
}

fn check_sequence<S: AsRef<[f64]>>(s: &[S], what: &str) -> Result<usize> {
    let first = s.first().ok_or_else(|| Error::contract(format!("{what} is empty")))?;
    let d = first.as_ref().len();
    if s.iter().any(|e| e.as_ref().len() != d) {
        return Err(Error::shape(format!("{what} mixes embedding widths")));
    }
    Ok(d)
}

fn neg_sq_dist_softmax<S: AsRef<[f64]>>(query: &[f64], seq: &[S], temperature: f64) -> Vec<f64> {
    let mut w: Vec<f64> = seq.iter().map(|s| -squared_distance(query, s.as_ref())).collect();
    softmax_in_place(&mut w, temperature);
    w
}

/// Soft nearest neighbour of `query` in `s_j` (untempered weights).
/// Returns `(nu, alpha)`.
pub fn soft_nn<S: AsRef<[f64]>>(query: &[f64], s_j: &[S]) -> Result<(Vec<f64>, Vec<f64>)> {
    soft_nn_tempered(query, s_j, 1.0)
}

pub fn soft_nn_tempered<S: AsRef<[f64]>>(query: &[f64], s_j: &[S], temperature: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = check_sequence(s_j, "S_j")?;
    if query.len() != d {
        return Err(Error::shape(format!("query has width {}, S_j has {d}", query.len())));
    }
    if !(temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let alpha = neg_sq_dist_softmax(query, s_j, temperature);
    let mut nu = vec![0.0; d];
    for (a, s) in alpha.iter().zip(s_j) {
        for (v, x) in nu.iter_mut().zip(s.as_ref()) {
            *v += a * x;
        }
    }
    Ok((nu, alpha))
}

/// Maps `nu` back onto `s_i` and scores how far the expected index lands
/// from `n`.
pub fn cycle_back<S: AsRef<[f64]>>(nu: &[f64], s_i: &[S], n: usize, temperature: f64) -> Result<CycleBack> {
    if !(temperature > 0.0) {
        return Err(Error::contract(format!("temperature must be positive, got {temperature}")));
    }
    let d = check_sequence(s_i, "S_i")?;
    if nu.len() != d {
        return Err(Error::shape(format!("nu has width {}, S_i has {d}", nu.len())));
    }
    if n >= s_i.len() {
        return Err(Error::contract(format!("frame index {n} out of {} frames", s_i.len())));
    }
    let beta = neg_sq_dist_softmax(nu, s_i, temperature);
    let mu: f64 = beta.iter().enumerate().map(|(k, b)| b * k as f64).sum();
    let loss = (mu - n as f64).powi(2);
    Ok(CycleBack { beta, mu, loss })
}

/// Full cycle for frame `n` of `s_i` through `s_j`.
pub fn alignment_terms<S: AsRef<[f64]>>(
    s_i: &[S],
    s_j: &[S],
    n: usize,
    temperature: f64,
    alpha_temperature: f64,
) -> Result<AlignmentTerms> {
    let query = s_i.get(n).ok_or_else(|| Error::contract(format!("frame index {n} out of {} frames", s_i.len())))?;
    let (nu, alpha) = soft_nn_tempered(query.as_ref(), s_j, alpha_temperature)?;
    let cb = cycle_back(&nu, s_i, n, temperature)?;
    Ok(AlignmentTerms { alpha, nu, beta: cb.beta, mu: cb.mu, loss: cb.loss })
}

/// Mean cycle loss over the frames of `s_i` when cycling through `s_j`.
pub fn tcc_direction_loss<S: AsRef<[f64]>>(
    s_i: &[S],
    s_j: &[S],
    temperature: f64,
    alpha_temperature: f64,
) -> Result<f64> {
    check_sequence(s_i, "S_i")?;
    check_sequence(s_j, "S_j")?;
    let mut total = 0.0;
    for n in 0..s_i.len() {
        total += alignment_terms(s_i, s_j, n, temperature, alpha_temperature)?.loss;
    }
    Ok(total / s_i.len() as f64)
}

/// Symmetric pair loss with an untempered soft nearest neighbour.
pub fn tcc_pair_loss<S: AsRef<[f64]>>(s_i: &[S], s_j: &[S], temperature: f64) -> Result<f64> {
    tcc_pair_loss_tempered(s_i, s_j, temperature, 1.0)
}

pub fn tcc_pair_loss_tempered<S: AsRef<[f64]>>(
    s_i: &[S],
    s_j: &[S],
    temperature: f64,
    alpha_temperature: f64,
) -> Result<f64> {
    let ij = tcc_direction_loss(s_i, s_j, temperature, alpha_temperature)?;
    let ji = tcc_direction_loss(s_j, s_i, temperature, alpha_temperature)?;
    Ok(0.5 * (ij + ji))
}

fn record_direction(tape: &mut Tape, si: Var, sj: Var, temperature: f64, alpha_temperature: f64) -> Result<Var> {
    let k = tape.value(si).rows();
    let d1 = tape.pairwise_sq_dist(si, sj)?;
    let logits = tape.scale(d1, -1.0);
    let alpha = tape.softmax_rows(logits, alpha_temperature)?;
    let nu = tape.matmul(alpha, sj)?;
    let d2 = tape.pairwise_sq_dist(nu, si)?;
    let logits = tape.scale(d2, -1.0);
    let beta = tape.softmax_rows(logits, temperature)?;
    let idx = tape.constant(Matrix::column_vector((0..k).map(|i| i as f64).collect()));
    let mu = tape.matmul(beta, idx)?;
    let err = tape.sub(mu, idx)?;
    let sq = tape.square(err);
    Ok(tape.mean(sq))
}

/// Records the symmetric pair loss for two `frames × embed` nodes.
pub fn tcc_pair_loss_on_tape(
    tape: &mut Tape,
    si: Var,
    sj: Var,
    temperature: f64,
    alpha_temperature: f64,
) -> Result<Var> {
    if tape.value(si).rows() == 0 || tape.value(sj).rows() == 0 {
        return Err(Error::contract("tcc loss on an empty sequence"));
    }
    let ij = record_direction(tape, si, sj, temperature, alpha_temperature)?;
    let ji = record_direction(tape, sj, si, temperature, alpha_temperature)?;
    let both = tape.add(ij, ji)?;
    Ok(tape.scale(both, 0.5))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingMetrics {
    pub records: Vec<IterationRecord>,
    pub temperature: f64,
    pub alpha_temperature: f64,
}

impl TrainingMetrics {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Mean loss over records `[start, end)`.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.records[range];
        s.iter().map(|r| r.loss).sum::<f64>() / s.len() as f64
    }

    /// CSV with header `iteration,loss,wall_ms`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,loss,wall_ms")?;
        for r in &self.records {
            writeln!(w, "{},{},{:.3}", r.iteration, r.loss, r.wall_ms)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

/// Pair loss of two frame sequences through the encoder (plain path).
pub fn pair_loss(
    params: &EncoderParams,
    frames_i: &[FrameGraph],
    frames_j: &[FrameGraph],
    temperature: f64,
    alpha_temperature: f64,
) -> Result<f64> {
    let si = params.encode_frames(frames_i)?;
    let sj = params.encode_frames(frames_j)?;
    let ri: Vec<&[f64]> = si.iter_rows().collect();
    let rj: Vec<&[f64]> = sj.iter_rows().collect();
    tcc_pair_loss_tempered(&ri, &rj, temperature, alpha_temperature)
}

/// Pair loss and its gradient with respect to every encoder tensor, in
/// `EncoderParams::tensors` order.
pub fn pair_loss_and_gradients(
    params: &EncoderParams,
    frames_i: &[FrameGraph],
    frames_j: &[FrameGraph],
    temperature: f64,
    alpha_temperature: f64,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let si = vars.encode_frames(&mut tape, frames_i)?;
    let sj = vars.encode_frames(&mut tape, frames_j)?;
    let loss = tcc_pair_loss_on_tape(&mut tape, si, sj, temperature, alpha_temperature)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), vars.vars().into_iter().map(|v| grads.wrt(v)).collect()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Zero every phi_in tensor and keep it frozen, leaving an encoder
    /// without object-object interaction.
    pub ablate_interaction: bool,
}

/// Trains a freshly initialized encoder.
pub fn train_reward_model(ds: &TrajectoryDataset, cfg: &TccConfig) -> Result<(EncoderParams, TrainingMetrics)> {
    train_reward_model_with(ds, cfg, TrainOptions::default())
}

pub fn train_reward_model_with(
    ds: &TrajectoryDataset,
    cfg: &TccConfig,
    opts: TrainOptions,
) -> Result<(EncoderParams, TrainingMetrics)> {
    cfg.validate()?;
    let init = EncoderParams::init(ds.object_count(), cfg.hidden_dim, cfg.embed_dim, cfg.seed)?;
    train_from(ds, cfg, init, opts)
}

#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64() * 1e3
}

// No monotonic clock in std on wasm32-unknown-unknown.
#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Continues training from `params`. Each iteration draws two distinct
/// demonstrations, subsamples both, and takes one Adam step on the pair
/// loss.
pub fn train_from(
    ds: &TrajectoryDataset,
    cfg: &TccConfig,
    mut params: EncoderParams,
    opts: TrainOptions,
) -> Result<(EncoderParams, TrainingMetrics)> {
    cfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::contract(format!("training needs at least 2 demonstrations, dataset has {}", ds.len())));
    }
    if params.roster_size() != ds.object_count() {
        return Err(Error::shape(format!(
            "encoder built for {} objects, dataset roster has {}",
            params.roster_size(),
            ds.object_count()
        )));
    }
    if opts.ablate_interaction {
        for t in params.phi_in.tensors_mut() {
            t.scale(0.0);
        }
    }

    // Disjoint from the initialization stream, which also uses cfg.seed.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(params.tensors(), cfg.lr, cfg.weight_decay);
    let mut metrics = TrainingMetrics {
        records: Vec::with_capacity(cfg.iterations),
        temperature: cfg.temperature,
        alpha_temperature: cfg.alpha_temperature,
    };
    let elapsed_ms = stopwatch();

    for it in 0..cfg.iterations {
        let pair = index::sample(&mut rng, ds.len(), 2);
        let (a, b) = (&ds.demos[pair.index(0)], &ds.demos[pair.index(1)]);
        let ia = subsample_indices(a.len(), cfg.frames_per_seq, &mut rng)?;
        let ib = subsample_indices(b.len(), cfg.frames_per_seq, &mut rng)?;
        let fa: Vec<_> = ia.iter().map(|&i| a.frames()[i].clone()).collect();
        let fb: Vec<_> = ib.iter().map(|&i| b.frames()[i].clone()).collect();

        let (value, mut g) = pair_loss_and_gradients(&params, &fa, &fb, cfg.temperature, cfg.alpha_temperature)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {value} at iteration {it}")));
        }
        if opts.ablate_interaction {
            for t in &mut g[4..8] {
                t.scale(0.0);
            }
        }
        {
            let mut tensors = params.tensors_mut();
            adam_step(&mut tensors, &g, &mut adam).map_err(|e| Error::Numeric(format!("iteration {it}: {e}")))?;
        }

        metrics.records.push(IterationRecord { iteration: it, loss: value, wall_ms: elapsed_ms() });
        if (it + 1) % 500 == 0 {
            log::info!("iteration {}: loss {:.5}", it + 1, value);
        }
    }
    Ok((params, metrics))
}
