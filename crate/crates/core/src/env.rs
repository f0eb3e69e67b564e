//! Deterministic 2D toy manipulation tasks in the unit square.
//!
//! `push2d`: a disc agent pushes a disc object into a goal region.
//! `reach2d`: the agent itself must reach the goal. Contact is resolved
//! geometrically: when the agent overlaps the object, the object is moved
//! along the centre-to-centre direction until the discs just touch.
//!
//! Bounding boxes rendered from states stand in for detector output.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{BoundingBox, Demonstration, TrajectoryDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Unit vector, or `None` for a (near) zero vector.
    pub fn unit(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    /// Rotated a quarter turn counter-clockwise.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    fn clamp_box(self, lo: f64, hi: f64) -> Vec2 {
        Vec2::new(self.x.clamp(lo, hi), self.y.clamp(lo, hi))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "push2d")]
    Push2d,
    #[serde(rename = "reach2d")]
    Reach2d,
}

impl Task {
    pub fn roster(self) -> Vec<String> {
        match self {
            Task::Push2d => vec!["agent".into(), "object".into(), "goal".into()],
            Task::Reach2d => vec!["agent".into(), "goal".into()],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Push2d => "push2d",
            Task::Reach2d => "reach2d",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "push2d" => Ok(Task::Push2d),
            "reach2d" => Ok(Task::Reach2d),
            other => Err(Error::validation(format!("unknown task {other:?} (expected push2d or reach2d)"))),
        }
    }
}

/// Per-episode randomization: geometry, placement and expert style.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Diversity {
    /// Embodiment size range.
    pub agent_radius: [f64; 2],
    pub object_radius: [f64; 2],
    /// Every entity centre starts inside `[lo, hi]²`.
    pub placement: [f64; 2],
    /// Upper bound on the initial task distance.
    pub max_task_distance: f64,
    /// Push only: the agent starts behind the object, within this
    /// half-angle (radians) of the goal-to-object ray.
    pub approach_cone: f64,
    /// Push only: initial agent-to-object gap range.
    pub approach_gap: [f64; 2],
    /// Scale of the expert's lateral waypoint offsets.
    pub jitter: f64,
    /// Expert speed as a fraction of the step limit.
    pub expert_speed: [f64; 2],
}

impl Default for Diversity {
    fn default() -> Self {
        Diversity {
            agent_radius: [0.03, 0.05],
            object_radius: [0.04, 0.06],
            placement: [0.15, 0.85],
            max_task_distance: 0.5,
            approach_cone: std::f64::consts::FRAC_PI_4,
            approach_gap: [0.02, 0.1],
            jitter: 0.04,
            expert_speed: [0.75, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub task: Task,
    /// Nominal sizes, used when diversity is disabled.
    pub agent_radius: f64,
    pub object_radius: f64,
    pub goal_radius: f64,
    pub success_threshold: f64,
    pub horizon: usize,
    /// Per-component action limit.
    pub max_step: f64,
    pub diversity: Option<Diversity>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::push2d()
    }
}

impl EnvConfig {
    pub fn push2d() -> Self {
        EnvConfig {
            task: Task::Push2d,
            agent_radius: 0.04,
            object_radius: 0.05,
            goal_radius: 0.05,
            success_threshold: 0.10,
            horizon: 50,
            max_step: 0.05,
            diversity: Some(Diversity::default()),
        }
    }

    pub fn reach2d() -> Self {
        EnvConfig { task: Task::Reach2d, success_threshold: 0.05, ..Self::push2d() }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Push2d => Self::push2d(),
            Task::Reach2d => Self::reach2d(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let radii = [self.agent_radius, self.object_radius, self.goal_radius];
        if radii.iter().any(|r| !(*r > 0.0 && *r < 0.25)) {
            return Err(Error::validation("radii must lie in (0, 0.25)"));
        }
        if !(self.success_threshold > 0.0) || self.horizon == 0 || !(self.max_step > 0.0) {
            return Err(Error::validation("success_threshold and max_step must be positive, horizon at least 1"));
        }
        if let Some(d) = &self.diversity {
            for (name, [lo, hi]) in
                [("agent_radius", d.agent_radius), ("object_radius", d.object_radius), ("expert_speed", d.expert_speed)]
            {
                if !(lo > 0.0 && lo <= hi) {
                    return Err(Error::validation(format!("diversity.{name} must be 0 < lo <= hi")));
                }
            }
            if !(d.approach_cone >= 0.0 && d.approach_cone <= std::f64::consts::PI) {
                return Err(Error::validation("diversity.approach_cone must lie in [0, pi]"));
            }
            if !(d.approach_gap[0] > 0.0 && d.approach_gap[0] <= d.approach_gap[1]) {
                return Err(Error::validation("diversity.approach_gap must be 0 < lo <= hi"));
            }
            let [lo, hi] = d.placement;
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::validation("diversity.placement must satisfy 0 <= lo < hi <= 1"));
            }
            if !(d.max_task_distance > 2.0 * self.success_threshold) {
                return Err(Error::validation("diversity.max_task_distance must exceed twice the success threshold"));
            }
        }
        Ok(())
    }

    fn diversity_or_nominal(&self) -> Diversity {
        self.diversity.clone().unwrap_or(Diversity {
            agent_radius: [self.agent_radius; 2],
            object_radius: [self.object_radius; 2],
            jitter: 0.0,
            expert_speed: [1.0; 2],
            ..Diversity::default()
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent: Vec2,
    pub object: Vec2,
    pub goal: Vec2,
    /// Episode geometry, fixed at reset.
    pub agent_radius: f64,
    pub object_radius: f64,
    pub goal_radius: f64,
    pub t: usize,
}

impl EnvState {
    /// Distance that decides success: object–goal for push, agent–goal for reach.
    pub fn task_distance(&self, task: Task) -> f64 {
        match task {
            Task::Push2d => self.object.dist(self.goal),
            Task::Reach2d => self.agent.dist(self.goal),
        }
    }

    pub fn is_success(&self, cfg: &EnvConfig) -> bool {
        self.task_distance(cfg.task) < cfg.success_threshold
    }

    /// `[agent, object, goal]` coordinates; the policy input.
    pub fn observation(&self) -> [f64; 6] {
        [self.agent.x, self.agent.y, self.object.x, self.object.y, self.goal.x, self.goal.y]
    }
}

/// Planar displacement, clamped per component to the step limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action(Vec2);

impl Action {
    pub fn new(dx: f64, dy: f64, cfg: &EnvConfig) -> Self {
        let m = cfg.max_step;
        let c = |v: f64| if v.is_finite() { v.clamp(-m, m) } else { 0.0 };
        Action(Vec2::new(c(dx), c(dy)))
    }

    pub fn zero() -> Self {
        Action(Vec2::ZERO)
    }

    pub fn delta(&self) -> Vec2 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub done: bool,
    pub success: bool,
}

/// Samples an initial layout. Never starts solved: the task distance
/// exceeds twice the success threshold.
pub fn reset(cfg: &EnvConfig, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let div = cfg.diversity_or_nominal();
    let sample_range = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
        if lo < hi {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let agent_radius = sample_range(&mut rng, div.agent_radius);
    let object_radius = sample_range(&mut rng, div.object_radius);
    let [lo, hi] = div.placement;
    let min_task = 2.0 * cfg.success_threshold;
    loop {
        let mut point = || Vec2::new(rng.random_range(lo..=hi), rng.random_range(lo..=hi));
        let goal = point();
        let object = point();
        let mut agent = point();
        let inside = |p: Vec2| (lo..=hi).contains(&p.x) && (lo..=hi).contains(&p.y);
        let ok = match cfg.task {
            Task::Push2d => {
                let d = object.dist(goal);
                if let Some(back) = (object - goal).unit() {
                    let angle = sample_range(&mut rng, [-div.approach_cone, div.approach_cone]);
                    let gap = sample_range(&mut rng, div.approach_gap);
                    let (sin, cos) = angle.sin_cos();
                    let ray = Vec2::new(back.x * cos - back.y * sin, back.x * sin + back.y * cos);
                    agent = object + ray * (agent_radius + object_radius + gap);
                }
                d > min_task && d <= div.max_task_distance && inside(agent)
            }
            Task::Reach2d => {
                let d = agent.dist(goal);
                d > min_task && d <= div.max_task_distance
            }
        };
        if ok {
            return EnvState { agent, object, goal, agent_radius, object_radius, goal_radius: cfg.goal_radius, t: 0 };
        }
    }
}

/// Advances one step. Pure function of its inputs.
pub fn step(state: &EnvState, action: Action, cfg: &EnvConfig) -> StepOutcome {
    let mut s = *state;
    let (ra, ro) = (s.agent_radius, s.object_radius);
    s.agent = (s.agent + action.delta()).clamp_box(ra, 1.0 - ra);

    if cfg.task == Task::Push2d {
        let contact = ra + ro;
        let offset = s.object - s.agent;
        if offset.norm() < contact {
            let dir = offset.unit().or_else(|| action.delta().unit()).unwrap_or(Vec2::new(1.0, 0.0));
            s.object = (s.agent + dir * contact).clamp_box(ro, 1.0 - ro);
            // The wall may stop the object; then the agent yields instead.
            let back = s.agent - s.object;
            if back.norm() < contact {
                let dir = back.unit().unwrap_or(dir * -1.0);
                s.agent = (s.object + dir * contact).clamp_box(ra, 1.0 - ra);
            }
        }
    }

    s.t = state.t + 1;
    let success = s.is_success(cfg);
    StepOutcome { state: s, done: success || s.t >= cfg.horizon, success }
}

/// Negated squared task distance.
pub fn ground_truth_reward(state: &EnvState, cfg: &EnvConfig) -> f64 {
    -state.task_distance(cfg.task).powi(2)
}

fn disc_box(c: Vec2, r: f64) -> BoundingBox {
    BoundingBox {
        x1: (c.x - r).clamp(0.0, 1.0),
        y1: (c.y - r).clamp(0.0, 1.0),
        x2: (c.x + r).clamp(0.0, 1.0),
        y2: (c.y + r).clamp(0.0, 1.0),
    }
}

/// Boxes in roster order: agent, object, goal (push) or agent, goal (reach).
pub fn render_boxes(state: &EnvState, cfg: &EnvConfig) -> Vec<BoundingBox> {
    let agent = disc_box(state.agent, state.agent_radius);
    let goal = disc_box(state.goal, state.goal_radius);
    match cfg.task {
        Task::Push2d => vec![agent, disc_box(state.object, state.object_radius), goal],
        Task::Reach2d => vec![agent, goal],
    }
}

/// Anything that maps states to actions.
pub trait Controller {
    fn act(&self, state: &EnvState, cfg: &EnvConfig) -> Action;
}

/// Scripted demonstrator. Push: get behind the object (detouring around it
/// when needed), then push toward the goal. Reach: head for the goal. Each
/// instance carries its own seeded style: a lateral waypoint offset and a
/// speed factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expert {
    lateral: f64,
    speed: f64,
    detour_margin: f64,
}

impl Expert {
    /// Style-free expert.
    pub fn plain() -> Self {
        Expert { lateral: 0.0, speed: 1.0, detour_margin: 0.03 }
    }

    pub fn new(cfg: &EnvConfig, seed: u64) -> Self {
        let Some(div) = &cfg.diversity else {
            return Self::plain();
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let [lo, hi] = div.expert_speed;
        Expert {
            lateral: if div.jitter > 0.0 { rng.random_range(-div.jitter..=div.jitter) } else { 0.0 },
            speed: if lo < hi { rng.random_range(lo..=hi) } else { lo },
            detour_margin: 0.02 + rng.random_range(0.0..=0.02),
        }
    }

    fn toward(&self, from: Vec2, to: Vec2, cfg: &EnvConfig) -> Action {
        let limit = cfg.max_step * self.speed;
        let d = to - from;
        // Uniform scaling keeps the heading; per-component clamping would not.
        let m = d.x.abs().max(d.y.abs());
        let d = if m > limit { d * (limit / m) } else { d };
        Action::new(d.x, d.y, cfg)
    }

    fn push_action(&self, s: &EnvState, cfg: &EnvConfig) -> Action {
        let Some(dir) = (s.goal - s.object).unit() else {
            return Action::zero();
        };
        let contact = s.agent_radius + s.object_radius;
        let side = dir.perp();
        let rel = s.agent - s.object;
        let along = rel.dot(dir);
        let across = rel.dot(side);

        // Pushing: already behind the object and roughly on the push line.
        if along < 0.0 && across.abs() < 0.35 * s.object_radius && rel.norm() < contact + 0.015 {
            let target = s.object - dir * (contact - cfg.max_step * self.speed);
            return self.toward(s.agent, target, cfg);
        }

        // Staging point behind the object; the lateral offset shrinks as
        // the agent closes in so the final approach is always on line.
        let lateral = self.lateral * (rel.norm() / 0.3).min(1.0);
        let staging = s.object - dir * (contact + 0.01) + side * lateral;
        if along > -0.5 * contact {
            // Beside or in front of the object: go around on the near side.
            let sign = if across >= 0.0 { 1.0 } else { -1.0 };
            let around = s.object + side * (sign * (contact + self.detour_margin)) - dir * (0.5 * contact);
            if s.agent.dist(around) > 0.01 {
                return self.toward(s.agent, around, cfg);
            }
        }
        self.toward(s.agent, staging, cfg)
    }

    fn reach_action(&self, s: &EnvState, cfg: &EnvConfig) -> Action {
        let rel = s.goal - s.agent;
        let d = rel.norm();
        let target = match rel.unit() {
            Some(u) => s.goal + u.perp() * (self.lateral * (d / 0.3).min(1.0)),
            None => s.goal,
        };
        self.toward(s.agent, target, cfg)
    }
}

impl Controller for Expert {
    fn act(&self, state: &EnvState, cfg: &EnvConfig) -> Action {
        match cfg.task {
            Task::Push2d => self.push_action(state, cfg),
            Task::Reach2d => self.reach_action(state, cfg),
        }
    }
}

/// Style-free expert action.
pub fn expert_policy(state: &EnvState, cfg: &EnvConfig) -> Action {
    Expert::plain().act(state, cfg)
}

/// Runs `inner` until step `stop_after`, then idles.
#[derive(Clone, Copy, Debug)]
pub struct Interrupted<C> {
    pub inner: C,
    pub stop_after: usize,
}

impl<C: Controller> Controller for Interrupted<C> {
    fn act(&self, state: &EnvState, cfg: &EnvConfig) -> Action {
        if state.t < self.stop_after {
            self.inner.act(state, cfg)
        } else {
            Action::zero()
        }
    }
}

/// States visited by one episode, initial state included.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub states: Vec<EnvState>,
    pub success: bool,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_state(&self) -> &EnvState {
        self.states.last().expect("episodes hold the initial state")
    }

    pub fn boxes(&self, cfg: &EnvConfig) -> Vec<Vec<BoundingBox>> {
        self.states.iter().map(|s| render_boxes(s, cfg)).collect()
    }
}

/// Runs until success or the horizon.
pub fn rollout<C: Controller + ?Sized>(cfg: &EnvConfig, controller: &C, seed: u64) -> Episode {
    let mut state = reset(cfg, seed);
    let mut states = vec![state];
    loop {
        let out = step(&state, controller.act(&state, cfg), cfg);
        state = out.state;
        states.push(state);
        if out.done {
            return Episode { seed, states, success: out.success };
        }
    }
}

/// Episode seeds for a generator seed; attempt `i` always maps to the same
/// seed.
pub fn episode_seeds(seed: u64) -> impl Iterator<Item = u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_with(move || rng.random())
}

/// Rolls out seeded experts until `count` successful episodes are
/// collected. Failed episodes are skipped with a warning.
pub fn generate_demos(cfg: &EnvConfig, count: usize, seed: u64) -> Result<TrajectoryDataset> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::contract("cannot generate an empty dataset (count = 0)"));
    }
    let max_attempts = 4 * count + 16;
    let mut demos = Vec::with_capacity(count);
    for (attempt, ep_seed) in episode_seeds(seed).enumerate().take(max_attempts) {
        let expert = Expert::new(cfg, ep_seed);
        let ep = rollout(cfg, &expert, ep_seed);
        if !ep.success {
            log::warn!("expert failed on episode seed {ep_seed} (attempt {attempt}); skipped");
            continue;
        }
        let mut meta = Map::new();
        meta.insert("task".into(), Value::from(cfg.task.to_string()));
        meta.insert("seed".into(), Value::from(ep_seed));
        meta.insert("steps".into(), Value::from(ep.steps()));
        let id = format!("{}-{:04}", cfg.task, demos.len());
        demos.push(Demonstration::new(id, ep.boxes(cfg), meta)?);
        if demos.len() == count {
            return TrajectoryDataset::new(cfg.task.roster(), demos);
        }
    }
    Err(Error::Numeric(format!("expert succeeded on only {} of {max_attempts} episodes", demos.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(agent: Vec2, object: Vec2, goal: Vec2) -> EnvState {
        EnvState { agent, object, goal, agent_radius: 0.04, object_radius: 0.05, goal_radius: 0.05, t: 0 }
    }

    #[test]
    fn reset_is_seeded() {
        let cfg = EnvConfig::push2d();
        assert_eq!(reset(&cfg, 5), reset(&cfg, 5));
        let mut layouts: Vec<[u64; 6]> = (0..500).map(|s| reset(&cfg, s).observation().map(f64::to_bits)).collect();
        layouts.sort_unstable();
        layouts.dedup();
        assert_eq!(layouts.len(), 500);
    }

    #[test]
    fn resets_never_start_solved() {
        for cfg in [EnvConfig::push2d(), EnvConfig::reach2d()] {
            for seed in 0..1000 {
                let s = reset(&cfg, seed);
                assert!(!s.is_success(&cfg));
                assert!(s.task_distance(cfg.task) > 2.0 * cfg.success_threshold);
            }
        }
    }

    #[test]
    fn zero_action_only_advances_time() {
        let cfg = EnvConfig::push2d();
        let s = reset(&cfg, 3);
        let out = step(&s, Action::zero(), &cfg);
        assert_eq!(out.state.agent, s.agent);
        assert_eq!(out.state.object, s.object);
        assert_eq!(out.state.t, 1);
        assert!(!out.done);
    }

    #[test]
    fn no_contact_leaves_object() {
        let cfg = EnvConfig::push2d();
        let s = state(Vec2::new(0.2, 0.2), Vec2::new(0.7, 0.7), Vec2::new(0.2, 0.8));
        for (dx, dy) in [(0.05, 0.05), (-0.05, 0.0), (0.0, 0.05)] {
            let out = step(&s, Action::new(dx, dy, &cfg), &cfg);
            assert_eq!(out.state.object, s.object);
        }
    }

    #[test]
    fn contact_pushes_along_center_line() {
        let cfg = EnvConfig::push2d();
        let s = state(Vec2::new(0.4, 0.5), Vec2::new(0.5, 0.5), Vec2::new(0.9, 0.5));
        let out = step(&s, Action::new(0.05, 0.0, &cfg), &cfg);
        assert!((out.state.object.x - (0.45 + 0.09)).abs() < 1e-12);
        assert!((out.state.object.y - 0.5).abs() < 1e-12);
        assert!(out.state.agent.dist(out.state.object) >= 0.09 - 1e-12);
    }

    #[test]
    fn actions_are_clamped() {
        let cfg = EnvConfig::push2d();
        let a = Action::new(1.0, -1.0, &cfg);
        assert_eq!(a.delta(), Vec2::new(0.05, -0.05));
        assert_eq!(Action::new(f64::NAN, 0.0, &cfg).delta(), Vec2::ZERO);
    }

    #[test]
    fn horizon_ends_episode() {
        let cfg = EnvConfig::push2d();
        let ep = rollout(&cfg, &Interrupted { inner: Expert::plain(), stop_after: 0 }, 1);
        assert_eq!(ep.steps(), cfg.horizon);
        assert!(!ep.success);
    }

    #[test]
    fn reach_expert_idles_at_goal() {
        let cfg = EnvConfig::reach2d();
        let g = Vec2::new(0.5, 0.5);
        let a = expert_policy(&state(g, g, g), &cfg);
        assert!(a.delta().norm() < 1e-12);
    }

    #[test]
    fn experts_always_succeed() {
        for cfg in [EnvConfig::push2d(), EnvConfig::reach2d()] {
            for seed in 0..200 {
                let ep = rollout(&cfg, &Expert::new(&cfg, seed), seed);
                assert!(ep.success, "{} seed {seed} failed after {} steps", cfg.task, ep.steps());
            }
        }
    }

    #[test]
    fn scripted_push_succeeds_before_horizon() {
        let cfg = EnvConfig::push2d();
        let ep = rollout(&cfg, &Expert::plain(), 12);
        assert!(ep.success);
        assert!(ep.steps() < cfg.horizon);
    }

    #[test]
    fn jitter_changes_trajectories() {
        let cfg = EnvConfig::push2d();
        let a = rollout(&cfg, &Expert::new(&cfg, 1), 99);
        let b = rollout(&cfg, &Expert::new(&cfg, 2), 99);
        assert!(a.success && b.success);
        assert_ne!(a.states, b.states);
    }

    #[test]
    fn render_object_box() {
        let cfg = EnvConfig::push2d();
        let s = state(Vec2::new(0.2, 0.2), Vec2::new(0.5, 0.5), Vec2::new(0.8, 0.8));
        let b = render_boxes(&s, &cfg);
        assert_eq!(b.len(), 3);
        let o = b[1];
        for (got, want) in [(o.x1, 0.45), (o.y1, 0.45), (o.x2, 0.55), (o.y2, 0.55)] {
            assert!((got - want).abs() < 1e-12);
        }
        let (cx, cy) = b[0].centroid();
        assert!((cx - 0.2).abs() < 1e-12 && (cy - 0.2).abs() < 1e-12);
        assert_eq!(render_boxes(&s, &EnvConfig::reach2d()).len(), 2);
    }

    #[test]
    fn rendered_boxes_stay_in_unit_square() {
        let cfg = EnvConfig::push2d();
        for seed in 0..50 {
            let ep = rollout(&cfg, &Expert::new(&cfg, seed), seed);
            for frame in ep.boxes(&cfg) {
                for b in frame {
                    b.validate().unwrap();
                }
            }
        }
        let edge = state(Vec2::new(0.01, 0.99), Vec2::new(0.5, 0.5), Vec2::new(0.5, 0.5));
        for b in render_boxes(&edge, &cfg) {
            b.validate().unwrap();
        }
    }

    #[test]
    fn ground_truth_reward_values() {
        let cfg = EnvConfig::push2d();
        let g = Vec2::new(0.5, 0.5);
        assert_eq!(ground_truth_reward(&state(Vec2::new(0.1, 0.1), g, g), &cfg), 0.0);
        let r = ground_truth_reward(&state(Vec2::new(0.1, 0.1), Vec2::new(0.5, 0.0), g), &cfg);
        assert!((r + 0.25).abs() < 1e-15);
        let mut last = f64::NEG_INFINITY;
        for k in (0..10).rev() {
            let s = state(Vec2::ZERO, Vec2::new(0.5, 0.5 - 0.04 * k as f64), g);
            let r = ground_truth_reward(&s, &cfg);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn generated_demos_end_in_success() {
        let cfg = EnvConfig::push2d();
        let ds = generate_demos(&cfg, 50, 0).unwrap();
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.roster, vec!["agent", "object", "goal"]);
        let mut lengths = Vec::new();
        for d in &ds.demos {
            assert!(d.len() >= 2);
            let last = d.boxes().last().unwrap();
            let (ox, oy) = last[1].centroid();
            let (gx, gy) = last[2].centroid();
            assert!((ox - gx).hypot(oy - gy) < cfg.success_threshold);
            lengths.push(d.len());
        }
        lengths.sort_unstable();
        lengths.dedup();
        assert!(lengths.len() > 5, "lengths barely vary: {lengths:?}");
        assert_eq!(generate_demos(&cfg, 50, 0).unwrap(), ds);
        assert!(matches!(generate_demos(&cfg, 0, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn task_parsing() {
        assert_eq!("push2d".parse::<Task>().unwrap(), Task::Push2d);
        assert_eq!("reach2d".parse::<Task>().unwrap(), Task::Reach2d);
        assert!("fly".parse::<Task>().is_err());
        let cfg: EnvConfig = serde_json::from_str(r#"{"task": "reach2d", "success_threshold": 0.05}"#).unwrap();
        assert_eq!(cfg.task, Task::Reach2d);
        cfg.validate().unwrap();
    }
}
