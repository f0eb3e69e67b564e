//! Browser bindings for the pushing/reaching demo.
//!
//! The page drives one [`Demo`]: roll out the scripted expert, train a small
//! reward model in-page, then read the learned reward along the episode or
//! over a grid of object positions.

use graphirl::data::featurize_frame;
use graphirl::env::{
    generate_demos, ground_truth_reward, render_boxes, rollout, EnvConfig, EnvState, Episode, Expert, Task,
};
use graphirl::reward::RewardModel;
use graphirl::tcc::{train_reward_model, TccConfig};
use wasm_bindgen::prelude::*;

/// Values per frame in [`Demo::rollout`]'s output.
pub const FRAME_STRIDE: usize = 9;

#[wasm_bindgen]
pub struct Demo {
    cfg: EnvConfig,
    episode: Episode,
    model: Option<RewardModel>,
}

fn flatten(states: &[EnvState]) -> Vec<f64> {
    states
        .iter()
        .flat_map(|s| {
            [
                s.agent.x,
                s.agent.y,
                s.object.x,
                s.object.y,
                s.goal.x,
                s.goal.y,
                s.agent_radius,
                s.object_radius,
                s.goal_radius,
            ]
        })
        .collect()
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(task: &str) -> Result<Demo, String> {
        let task: Task = task.parse().map_err(|e: graphirl::Error| e.to_string())?;
        let cfg = EnvConfig::for_task(task);
        let episode = rollout(&cfg, &Expert::new(&cfg, 0), 0);
        Ok(Demo { cfg, episode, model: None })
    }

    #[wasm_bindgen(getter)]
    pub fn task(&self) -> String {
        self.cfg.task.to_string()
    }

    #[wasm_bindgen(getter)]
    pub fn stride(&self) -> usize {
        FRAME_STRIDE
    }

    #[wasm_bindgen(getter)]
    pub fn success(&self) -> bool {
        self.episode.success
    }

    #[wasm_bindgen(getter)]
    pub fn trained(&self) -> bool {
        self.model.is_some()
    }

    /// Expert episode from `seed`, flattened as
    /// `[ax, ay, ox, oy, gx, gy, r_agent, r_object, r_goal]` per frame.
    pub fn rollout(&mut self, seed: u64) -> Vec<f64> {
        self.episode = rollout(&self.cfg, &Expert::new(&self.cfg, seed), seed);
        flatten(&self.episode.states)
    }

    /// Trains a small encoder on fresh expert demos; returns a one-line summary.
    pub fn train(&mut self, demos: usize, iterations: usize, seed: u64) -> Result<String, String> {
        let ds = generate_demos(&self.cfg, demos, seed).map_err(|e| e.to_string())?;
        let tcc = TccConfig {
            iterations,
            frames_per_seq: 12,
            hidden_dim: 32,
            embed_dim: 32,
            lr: 1e-3,
            seed,
            ..TccConfig::default()
        };
        let (enc, metrics) = train_reward_model(&ds, &tcc).map_err(|e| e.to_string())?;
        let model = RewardModel::fit(enc, &ds).map_err(|e| e.to_string())?;
        let n = metrics.records.len();
        let head = metrics.mean_loss(0..n.min(50));
        let tail = metrics.mean_loss(n.saturating_sub(50)..n);
        let summary =
            format!("{demos} demos, {iterations} iterations: loss {head:.3} -> {tail:.3}, scale {:.3e}", model.scale());
        self.model = Some(model);
        Ok(summary)
    }

    /// Learned reward of every frame of the current episode.
    pub fn episode_rewards(&self) -> Result<Vec<f64>, String> {
        let model = self.model.as_ref().ok_or("train a reward model first")?;
        let frames = self
            .episode
            .boxes(&self.cfg)
            .iter()
            .map(|b| featurize_frame(b))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        model.rewards(&frames).map_err(|e| e.to_string())
    }

    /// Ground-truth reward of every frame of the current episode.
    pub fn episode_truth(&self) -> Vec<f64> {
        self.episode.states.iter().map(|s| ground_truth_reward(s, &self.cfg)).collect()
    }

    /// Reward over a `resolution`² grid of positions for the pushed object
    /// (push) or the agent (reach), other bodies as at the episode start.
    /// Row-major, row 0 at y = 0. Learned reward when `learned`, else truth.
    pub fn heatmap(&self, resolution: usize, learned: bool) -> Result<Vec<f64>, String> {
        let model = match (learned, &self.model) {
            (true, None) => return Err("train a reward model first".into()),
            (true, Some(m)) => Some(m),
            (false, _) => None,
        };
        let start = self.episode.states[0];
        let mut out = Vec::with_capacity(resolution * resolution);
        for row in 0..resolution {
            for col in 0..resolution {
                let mut s = start;
                let x = (col as f64 + 0.5) / resolution as f64;
                let y = (row as f64 + 0.5) / resolution as f64;
                match self.cfg.task {
                    Task::Push2d => {
                        s.object.x = x;
                        s.object.y = y;
                    }
                    Task::Reach2d => {
                        s.agent.x = x;
                        s.agent.y = y;
                    }
                }
                out.push(match model {
                    Some(m) => {
                        let frame = featurize_frame(&render_boxes(&s, &self.cfg)).map_err(|e| e.to_string())?;
                        m.reward(&frame).map_err(|e| e.to_string())?
                    }
                    None => ground_truth_reward(&s, &self.cfg),
                });
            }
        }
        Ok(out)
    }
}
