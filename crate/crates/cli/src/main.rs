//! `graphirl`: demonstrations in, reward model and policy out.
//!
//! ```text
//! graphirl gen-demos --task push2d --count 150 --seed 0 --out demos.jsonl
//! graphirl train --demos demos.jsonl --out model.json --metrics loss.csv
//! graphirl eval-align --model model.json --demos heldout.jsonl
//! graphirl train-policy --env push2d --reward learned:model.json --out policy.json --curve curve.csv
//! graphirl eval-policy --policy policy.json
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphirl::data::{load_dataset, save_dataset, TrajectoryDataset};
use graphirl::env::{generate_demos, EnvConfig, Task};
use graphirl::evalkit::{all_pairs, line_plot_svg, mean_alignment_tau, reward_progression, spearman};
use graphirl::policy::{evaluate_policy, train_policy, CemConfig, PolicyFile, RewardSource};
use graphirl::reward::RewardModel;
use graphirl::tcc::{train_reward_model, TccConfig};
use graphirl::Error;

#[derive(Parser, Debug)]
#[command(name = "graphirl", version, about = "Reward learning from object-graph demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the scripted expert and write a JSONL dataset.
    GenDemos(GenDemos),
    /// Train the encoder by cycle-consistency and fit the reward model.
    Train(Train),
    /// Mean Kendall tau of nearest-neighbour alignment over all demo pairs.
    EvalAlign(EvalAlign),
    /// Per-frame learned reward along every demonstration.
    EvalReward(EvalReward),
    /// Cross-entropy-method policy search against a learned or true reward.
    TrainPolicy(TrainPolicy),
    /// Success rate of a saved policy.
    EvalPolicy(EvalPolicy),
}

#[derive(Args, Debug)]
struct GenDemos {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Environment settings as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    demos: PathBuf,
    /// Training settings as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration loss CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalAlign {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    demos: PathBuf,
}

#[derive(Args, Debug)]
struct EvalReward {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    demos: PathBuf,
    /// CSV with one row per frame: demo,frame,reward.
    #[arg(long)]
    out: PathBuf,
    /// SVG plot of the first few progressions.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Debug)]
enum RewardSpec {
    Learned(PathBuf),
    Env,
}

fn parse_reward(s: &str) -> Result<RewardSpec, String> {
    match s.split_once(':') {
        _ if s == "env" => Ok(RewardSpec::Env),
        Some(("learned", path)) if !path.is_empty() => Ok(RewardSpec::Learned(path.into())),
        _ => Err("expected `env` or `learned:<model.json>`".into()),
    }
}

#[derive(Args, Debug)]
struct TrainPolicy {
    #[arg(long)]
    env: Task,
    /// `env` for the true reward, `learned:<model.json>` for a trained model.
    #[arg(long, value_parser = parse_reward)]
    reward: RewardSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-generation fitness CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Search settings as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalPolicy {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => 3,
            Error::Numeric(_) | Error::DegenerateScale(_) => 5,
            Error::Shape(_) | Error::Contract(_) | Error::Validation(_) | Error::Parse { .. } | Error::Json(_) => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Diagnostics stay on one line.
        f.write_str(&self.message.replace('\n', " "))
    }
}

type Outcome = Result<(), Failure>;

/// Prefixes the file name to errors that do not already carry it.
fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        if f.code != 3 {
            f.message = format!("{}: {}", path.display(), f.message);
        }
        f
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Failure::validation(format!("{}: expected a JSON object", path.display())));
    }
    Ok(value)
}

fn from_value<T: serde::de::DeserializeOwned>(path: &Path, value: serde_json::Value) -> Result<T, Failure> {
    serde_json::from_value(value).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn gen_demos(a: GenDemos) -> Outcome {
    let cfg = match &a.config {
        None => EnvConfig::for_task(a.task),
        Some(path) => {
            let mut value = read_json(path)?;
            let task = serde_json::Value::String(a.task.to_string());
            match value.get("task") {
                Some(t) if *t != task => {
                    return Err(Failure::validation(format!(
                        "{}: config task {t} disagrees with --task {}",
                        path.display(),
                        a.task
                    )))
                }
                Some(_) => {}
                None => {
                    value["task"] = task;
                }
            }
            // Unset fields fall back to the task's own defaults.
            let mut base = serde_json::to_value(EnvConfig::for_task(a.task)).map_err(Error::from)?;
            for (k, v) in value.as_object().unwrap() {
                base[k] = v.clone();
            }
            from_value(path, base)?
        }
    };
    let ds = generate_demos(&cfg, a.count, a.seed)?;
    save_dataset(&ds, &a.out)?;
    let mean_len = ds.demos.iter().map(|d| d.len()).sum::<usize>() as f64 / ds.len() as f64;
    println!("wrote {} demos (mean length {mean_len:.1} frames) to {}", ds.len(), a.out.display());
    Ok(())
}

fn train(a: Train) -> Outcome {
    let cfg: TccConfig = match &a.config {
        None => TccConfig::default(),
        Some(path) => from_value(path, read_json(path)?)?,
    };
    cfg.validate()?;
    println!("{}", cfg.summary());
    let ds = load_dataset(&a.demos).map_err(in_file(&a.demos))?;
    let (encoder, metrics) = train_reward_model(&ds, &cfg)?;
    let model = RewardModel::fit(encoder, &ds)?;
    model.save(&a.out)?;
    if let Some(path) = &a.metrics {
        metrics.save_csv(path)?;
    }
    let n = metrics.records.len();
    let tail = n.saturating_sub(100)..n;
    println!(
        "trained on {} demos: loss {:.4} (last {} iterations), scale c = {:.4e}; wrote {}",
        ds.len(),
        metrics.mean_loss(tail.clone()),
        tail.len(),
        model.scale(),
        a.out.display()
    );
    Ok(())
}

fn load_matching(model: &Path, demos: &Path) -> Result<(RewardModel, TrajectoryDataset), Failure> {
    let model = RewardModel::load(model).map_err(in_file(model))?;
    let ds = load_dataset(demos).map_err(in_file(demos))?;
    if model.encoder().roster_size() != ds.object_count() {
        return Err(Failure::validation(format!(
            "model expects {} objects per frame, {} has {}",
            model.encoder().roster_size(),
            demos.display(),
            ds.object_count()
        )));
    }
    Ok((model, ds))
}

fn eval_align(a: EvalAlign) -> Outcome {
    let (model, ds) = load_matching(&a.model, &a.demos)?;
    if ds.len() < 2 {
        return Err(Failure::validation(format!(
            "alignment needs at least 2 demonstrations, {} has {}",
            a.demos.display(),
            ds.len()
        )));
    }
    let pairs = all_pairs(ds.len());
    let tau = mean_alignment_tau(model.encoder(), &ds.demos, &pairs)?;
    println!("demos={} pairs={} mean_tau={tau:.4}", ds.len(), pairs.len());
    Ok(())
}

fn eval_reward(a: EvalReward) -> Outcome {
    let (model, ds) = load_matching(&a.model, &a.demos)?;
    let mut csv = String::from("demo,frame,reward\n");
    let mut progressions = Vec::with_capacity(ds.len());
    let mut rho = 0.0;
    for demo in &ds.demos {
        let r = reward_progression(&model, demo)?;
        for (n, v) in r.iter().enumerate() {
            csv.push_str(&format!("{},{n},{v}\n", demo.id));
        }
        let index: Vec<f64> = (0..r.len()).map(|n| n as f64).collect();
        rho += spearman(&r, &index)?;
        progressions.push(r);
    }
    std::fs::write(&a.out, csv).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    if let Some(path) = &a.plot {
        let series: Vec<(&str, &[f64])> =
            ds.demos.iter().zip(&progressions).take(8).map(|(d, r)| (d.id.as_str(), r.as_slice())).collect();
        let svg = line_plot_svg("learned reward per frame", &series);
        std::fs::write(path, svg).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    let frames: usize = progressions.iter().map(Vec::len).sum();
    println!(
        "demos={} frames={frames} mean_spearman={:.4}; wrote {}",
        ds.len(),
        rho / ds.len().max(1) as f64,
        a.out.display()
    );
    Ok(())
}

fn train_policy_cmd(a: TrainPolicy) -> Outcome {
    let mut cem: CemConfig = match &a.config {
        None => CemConfig::default(),
        Some(path) => from_value(path, read_json(path)?)?,
    };
    cem.seed = a.seed;
    if let Some(p) = a.population {
        cem.population = p;
    }
    if let Some(g) = a.generations {
        cem.generations = g;
    }
    let env = EnvConfig::for_task(a.env);
    let model = match &a.reward {
        RewardSpec::Env => None,
        RewardSpec::Learned(path) => {
            let m = RewardModel::load(path).map_err(in_file(path))?;
            let expected = a.env.roster().len();
            if m.encoder().roster_size() != expected {
                return Err(Failure::validation(format!(
                    "{} was trained on {}-object frames, {} renders {expected}",
                    path.display(),
                    m.encoder().roster_size(),
                    a.env
                )));
            }
            Some(m)
        }
    };
    let source = match &model {
        Some(m) => RewardSource::Learned(m),
        None => RewardSource::GroundTruth,
    };
    let outcome = train_policy(&env, source, &cem)?;
    PolicyFile::new(&outcome.policy, &cem).save(&a.out)?;
    if let Some(path) = &a.curve {
        outcome.save_curve_csv(path)?;
    }
    let last = outcome.curve.last().expect("at least one generation");
    println!(
        "{} generations x {} candidates: final mean fitness {:.4}, best {:.4}; wrote {}",
        cem.generations,
        cem.population,
        last.mean,
        last.best,
        a.out.display()
    );
    Ok(())
}

fn eval_policy(a: EvalPolicy) -> Outcome {
    let policy = PolicyFile::load(&a.policy).and_then(|f| f.into_policy()).map_err(in_file(&a.policy))?;
    let env = EnvConfig::for_task(policy.task());
    if policy.max_step() != env.max_step {
        return Err(Failure::validation(format!(
            "policy max_step {} does not match the {} environment ({})",
            policy.max_step(),
            policy.task(),
            env.max_step
        )));
    }
    let eval = evaluate_policy(&env, &policy, a.episodes, a.seed)?;
    let successes = eval.episodes.iter().filter(|e| e.success).count();
    println!("success rate {:.3} ({successes}/{} episodes, {})", eval.success_rate, a.episodes, policy.task());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error");
            eprintln!("graphirl: error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::GenDemos(a) => gen_demos(a),
        Command::Train(a) => train(a),
        Command::EvalAlign(a) => eval_align(a),
        Command::EvalReward(a) => eval_reward(a),
        Command::TrainPolicy(a) => train_policy_cmd(a),
        Command::EvalPolicy(a) => eval_policy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("graphirl: error: {f}");
            ExitCode::from(f.code)
        }
    }
}
