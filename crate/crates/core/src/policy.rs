//! Cross-entropy policy search and standardized policy evaluation.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::featurize_frame;
use crate::env::{episode_seeds, render_boxes, rollout, Action, Controller, EnvConfig, EnvState, Task, Vec2};
use crate::error::{Error, Result};
use crate::reward::RewardModel;

pub const OBS_DIM: usize = 6;
pub const HIDDEN: usize = 16;
pub const ACT_DIM: usize = 2;
pub const PARAM_COUNT: usize = OBS_DIM * HIDDEN + HIDDEN + HIDDEN * ACT_DIM + ACT_DIM;
pub const POLICY_FILE_VERSION: u32 = 1;

/// Input scale for offsets between entities.
const RELATIVE_GAIN: f64 = 10.0;
/// Input scale for positions relative to the arena centre.
const ABSOLUTE_GAIN: f64 = 0.5;
/// Search distributions never collapse below this spread.
const MIN_STD: f64 = 0.01;
/// Extra variance, as a fraction of `init_std²`, added to the refit and
/// decayed linearly to zero over the run.
const EXTRA_NOISE: f64 = 0.1;

/// Task frame: origin at the manipulated entity (the object for push, the
/// agent for reach), first axis pointing at the goal.
#[derive(Clone, Copy, Debug)]
struct Frame {
    u: Vec2,
    v: Vec2,
}

impl Frame {
    fn new(from: Vec2, goal: Vec2) -> Self {
        let u = (goal - from).unit().unwrap_or(Vec2::new(1.0, 0.0));
        Frame { u, v: u.perp() }
    }

    fn local(&self, p: Vec2) -> (f64, f64) {
        (p.dot(self.u), p.dot(self.v))
    }

    fn world(&self, a: f64, b: f64) -> Vec2 {
        self.u * a + self.v * b
    }
}

/// Single-hidden-layer tanh map from `[agent, object, goal]` to a planar
/// displacement.
///
/// Positions are re-expressed in the task frame before the network sees
/// them, and the two outputs are displacements along the frame axes.
/// Parameter layout: `w1` (16x6, row-major), `b1`, `w2` (2x16), `b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    params: Vec<f64>,
    max_step: f64,
    task: Task,
}

impl Policy {
    pub fn new(params: Vec<f64>, max_step: f64, task: Task) -> Result<Self> {
        if params.len() != PARAM_COUNT {
            return Err(Error::shape(format!("policy expects {PARAM_COUNT} parameters, got {}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("policy parameters must be finite"));
        }
        if !(max_step > 0.0) {
            return Err(Error::validation("max_step must be positive"));
        }
        Ok(Policy { params, max_step, task })
    }

    /// All-zero parameters: the policy never moves.
    pub fn zeros(max_step: f64, task: Task) -> Self {
        Policy { params: vec![0.0; PARAM_COUNT], max_step, task }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn task(&self) -> Task {
        self.task
    }

    fn frame_and_inputs(&self, obs: &[f64; OBS_DIM]) -> (Frame, [f64; OBS_DIM]) {
        let agent = Vec2::new(obs[0], obs[1]);
        let goal = Vec2::new(obs[4], obs[5]);
        let anchor = match self.task {
            Task::Push2d => Vec2::new(obs[2], obs[3]),
            Task::Reach2d => agent,
        };
        let frame = Frame::new(anchor, goal);
        let centre = Vec2::new(0.5, 0.5);
        let (lead, lateral) = frame.local(anchor - agent);
        let (agent_u, agent_v) = frame.local(agent - centre);
        let (anchor_u, _) = frame.local(anchor - centre);
        let inputs = [
            RELATIVE_GAIN * lead,
            RELATIVE_GAIN * lateral,
            ABSOLUTE_GAIN * anchor.dist(goal),
            ABSOLUTE_GAIN * agent_u,
            ABSOLUTE_GAIN * agent_v,
            ABSOLUTE_GAIN * anchor_u,
        ];
        (frame, inputs)
    }

    /// Network output in world coordinates, before per-component clamping.
    pub fn forward(&self, obs: &[f64; OBS_DIM]) -> [f64; ACT_DIM] {
        let (w1, rest) = self.params.split_at(OBS_DIM * HIDDEN);
        let (b1, rest) = rest.split_at(HIDDEN);
        let (w2, b2) = rest.split_at(HIDDEN * ACT_DIM);
        let (frame, x) = self.frame_and_inputs(obs);
        let mut h = [0.0; HIDDEN];
        for (k, hk) in h.iter_mut().enumerate() {
            let row = &w1[k * OBS_DIM..(k + 1) * OBS_DIM];
            *hk = (b1[k] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()).tanh();
        }
        let mut y = [0.0; ACT_DIM];
        for (a, out) in y.iter_mut().enumerate() {
            let row = &w2[a * HIDDEN..(a + 1) * HIDDEN];
            *out = (b2[a] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()).tanh() * self.max_step;
        }
        let d = frame.world(y[0], y[1]);
        [d.x, d.y]
    }
}

impl Controller for Policy {
    fn act(&self, state: &EnvState, cfg: &EnvConfig) -> Action {
        let [dx, dy] = self.forward(&state.observation());
        Action::new(dx, dy, cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub generations: usize,
    pub init_std: f64,
    pub rollouts_per_candidate: usize,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 64,
            elite_frac: 0.125,
            generations: 60,
            init_std: 0.5,
            rollouts_per_candidate: 4,
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::validation("population must be at least 2"));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return Err(Error::validation("elite_frac must lie in (0, 1]"));
        }
        if self.generations == 0 || self.rollouts_per_candidate == 0 {
            return Err(Error::validation("generations and rollouts_per_candidate must be at least 1"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::validation("init_std must be positive"));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_frac).round() as usize).clamp(1, self.population)
    }
}

/// Per-step reward used as the search signal.
#[derive(Clone, Copy, Debug)]
pub enum RewardSource<'a> {
    Learned(&'a RewardModel),
    GroundTruth,
}

impl RewardSource<'_> {
    /// Summed reward over the visited states (initial state excluded).
    pub fn episode_return(&self, states: &[EnvState], cfg: &EnvConfig) -> Result<f64> {
        let visited = states.get(1..).unwrap_or_default();
        match self {
            RewardSource::GroundTruth => Ok(visited.iter().map(|s| crate::env::ground_truth_reward(s, cfg)).sum()),
            RewardSource::Learned(model) => {
                let frames =
                    visited.iter().map(|s| featurize_frame(&render_boxes(s, cfg))).collect::<Result<Vec<_>>>()?;
                Ok(model.rewards(&frames)?.iter().sum())
            }
        }
    }
}

/// Mean episode return over the given env seeds. Episodes end when the
/// environment reports done. Pure in its inputs.
pub fn fitness(policy: &Policy, cfg: &EnvConfig, source: RewardSource<'_>, seeds: &[u64]) -> Result<f64> {
    let mut total = 0.0;
    for &s in seeds {
        total += source.episode_return(&rollout(cfg, policy, s).states, cfg)?;
    }
    Ok(total / seeds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Population mean over finite fitnesses.
    pub mean: f64,
    pub best: f64,
    pub elite_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemOutcome {
    pub policy: Policy,
    pub curve: Vec<GenerationStats>,
}

impl CemOutcome {
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "generation,mean,best")?;
        for g in &self.curve {
            writeln!(w, "{},{},{}", g.generation, g.mean, g.best)?;
        }
        Ok(())
    }

    pub fn save_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_curve_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Worker count: available cores, capped by `GRAPHIRL_THREADS`.
fn worker_count() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("GRAPHIRL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .map_or(cores, |cap| cap.clamp(1, cores.max(1)))
}

fn score_all(candidates: &[Policy], cfg: &EnvConfig, source: RewardSource<'_>, seeds: &[u64]) -> Vec<Result<f64>> {
    let workers = worker_count().min(candidates.len()).max(1);
    if workers == 1 {
        return candidates.iter().map(|p| fitness(p, cfg, source, seeds)).collect();
    }
    let chunk = candidates.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = candidates
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|p| fitness(p, cfg, source, seeds)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("fitness worker panicked")).collect()
    })
}

/// Cross-entropy search over policy parameters.
///
/// Each generation samples `population - 1` candidates from a diagonal
/// Gaussian plus the current mean, scores all of them on a shared set of
/// env seeds and refits the Gaussian to the elites. Returns whichever of
/// the final mean and the last generation's best candidate scores higher.
pub fn train_policy(envcfg: &EnvConfig, source: RewardSource<'_>, cfg: &CemConfig) -> Result<CemOutcome> {
    envcfg.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = vec![0.0; PARAM_COUNT];
    let mut std = vec![cfg.init_std; PARAM_COUNT];
    let n_elite = cfg.elite_count();
    let mut curve = Vec::with_capacity(cfg.generations);
    let mut last_best: Option<(Policy, f64)> = None;
    let mut last_seeds = Vec::new();

    for generation in 0..cfg.generations {
        let seeds: Vec<u64> = (0..cfg.rollouts_per_candidate).map(|_| rng.random()).collect();
        let mut candidates = Vec::with_capacity(cfg.population);
        candidates.push(Policy::new(mean.clone(), envcfg.max_step, envcfg.task)?);
        for _ in 1..cfg.population {
            let params = mean.iter().zip(&std).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
            candidates.push(Policy::new(params, envcfg.max_step, envcfg.task)?);
        }

        let mut scored: Vec<(usize, f64)> = Vec::with_capacity(cfg.population);
        for (i, f) in score_all(&candidates, envcfg, source, &seeds).into_iter().enumerate() {
            match f {
                Ok(f) if f.is_finite() => scored.push((i, f)),
                Ok(f) => log::warn!("generation {generation}: candidate {i} has fitness {f}; discarded"),
                Err(e) => log::warn!("generation {generation}: candidate {i} failed ({e}); discarded"),
            }
        }
        if scored.is_empty() {
            return Err(Error::Numeric(format!("generation {generation}: no candidate has finite fitness")));
        }
        // Stable sort: ties keep candidate-index order.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let elites = &scored[..n_elite.min(scored.len())];

        let extra = EXTRA_NOISE * cfg.init_std.powi(2) * (1.0 - (generation + 1) as f64 / cfg.generations as f64);
        for (k, (m, s)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
            let mu = elites.iter().map(|&(i, _)| candidates[i].params[k]).sum::<f64>() / elites.len() as f64;
            let var =
                elites.iter().map(|&(i, _)| (candidates[i].params[k] - mu).powi(2)).sum::<f64>() / elites.len() as f64;
            *m = mu;
            *s = (var + extra).sqrt().max(MIN_STD);
        }

        let stats = GenerationStats {
            generation,
            mean: scored.iter().map(|x| x.1).sum::<f64>() / scored.len() as f64,
            best: scored[0].1,
            elite_mean: elites.iter().map(|x| x.1).sum::<f64>() / elites.len() as f64,
        };
        log::debug!(
            "generation {generation}: mean {:.4} elite {:.4} best {:.4}",
            stats.mean,
            stats.elite_mean,
            stats.best
        );
        curve.push(stats);
        last_best = Some((candidates[scored[0].0].clone(), scored[0].1));
        last_seeds = seeds;
    }

    let final_mean = Policy::new(mean, envcfg.max_step, envcfg.task)?;
    let mean_fitness = fitness(&final_mean, envcfg, source, &last_seeds)?;
    let policy = match last_best {
        Some((best, f)) if f > mean_fitness => best,
        _ => final_mean,
    };
    Ok(CemOutcome { policy, curve })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub final_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success_rate: f64,
    pub episodes: Vec<EpisodeLog>,
}

/// Success rate over fresh seeded resets, judged by the ground-truth
/// success predicate only.
pub fn evaluate_policy<C: Controller + ?Sized>(
    envcfg: &EnvConfig,
    controller: &C,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    envcfg.validate()?;
    if episodes == 0 {
        return Err(Error::validation("episodes must be at least 1"));
    }
    let logs: Vec<EpisodeLog> = episode_seeds(seed)
        .take(episodes)
        .map(|s| {
            let ep = rollout(envcfg, controller, s);
            EpisodeLog {
                seed: s,
                success: ep.success,
                steps: ep.steps(),
                final_distance: ep.final_state().task_distance(envcfg.task),
            }
        })
        .collect();
    let successes = logs.iter().filter(|l| l.success).count();
    Ok(Evaluation { success_rate: successes as f64 / episodes as f64, episodes: logs })
}

/// On-disk policy: parameters plus the settings that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub version: u32,
    pub task: Task,
    pub hidden: usize,
    pub max_step: f64,
    pub params: Vec<f64>,
    pub cem: CemConfig,
}

impl PolicyFile {
    pub fn new(policy: &Policy, cem: &CemConfig) -> Self {
        PolicyFile {
            version: POLICY_FILE_VERSION,
            task: policy.task,
            hidden: HIDDEN,
            max_step: policy.max_step,
            params: policy.params.clone(),
            cem: cem.clone(),
        }
    }

    pub fn into_policy(self) -> Result<Policy> {
        if self.version != POLICY_FILE_VERSION {
            return Err(Error::validation(format!("unsupported policy file version {}", self.version)));
        }
        if self.hidden != HIDDEN {
            return Err(Error::shape(format!("policy hidden width {} != {HIDDEN}", self.hidden)));
        }
        Policy::new(self.params, self.max_step, self.task)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
