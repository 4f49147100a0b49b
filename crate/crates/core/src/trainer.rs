//! Training loop, run configuration, episode logs and hyperparameter sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{self, ExpSchedule, Experience, FusionSchedule, ReplayMemory};
use crate::dataset::{prune_items, absolute_threshold, ItemId, TransactionDatabase};
use crate::environment::{Action, Environment, Pattern, ScoredPattern};
use crate::error::{Error, Result};
use crate::measures::{MeasureConfig, Task};
use crate::neuralnet::{Checkpoint, NetworkSpec, QNetwork, RAdam};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Random,
    StateEps,
    StateProb,
    Basic,
    Fusion,
}

impl AgentKind {
    pub fn learns(self) -> bool {
        matches!(self, AgentKind::Basic | AgentKind::Fusion)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(AgentKind::Random),
            "state-eps" => Ok(AgentKind::StateEps),
            "state-prob" => Ok(AgentKind::StateProb),
            "basic" => Ok(AgentKind::Basic),
            "fusion" => Ok(AgentKind::Fusion),
            other => Err(Error::Config(format!("unknown agent '{other}'"))),
        }
    }
}

/// Mining threshold as a percentage of `N` (FI, AR) or of total utility (HUI),
/// or in absolute units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Percent(f64),
    Absolute(u64),
}

impl Threshold {
    pub fn resolve(&self, db: &TransactionDatabase, task: Task) -> Result<u64> {
        match *self {
            Threshold::Absolute(v) => Ok(v),
            Threshold::Percent(p) => {
                if !(0.0..=100.0).contains(&p) {
                    return Err(Error::Config(format!("threshold {p}% outside [0, 100]")));
                }
                let base = match task {
                    Task::Hui => db.total_utility().ok_or(Error::NotUtilityDatabase)?,
                    Task::Fi | Task::Ar => db.len() as u64,
                };
                Ok(absolute_threshold(p, base))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub threshold: Threshold,
    /// Minimum confidence in `[0, 1]`; AR only.
    pub min_conf: Option<f64>,
    pub agent: AgentKind,
    pub episodes: usize,
    pub steps: usize,
    pub capacity: usize,
    pub gamma: f64,
    pub batch_size: usize,
    /// Target network is refreshed after every `target_sync` episodes.
    pub target_sync: usize,
    pub lr: f64,
    pub epsilon: ExpSchedule,
    /// Fixed exploration rate of the state-eps baseline.
    pub state_epsilon: f64,
    pub lambda: ExpSchedule,
    pub widths: Vec<usize>,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
    /// Record per-episode wall time in the log (makes logs non-reproducible).
    pub timing: bool,
}

impl RunConfig {
    /// Fusion agent with the published hyperparameters: 500 episodes for HUI
    /// and 1000 for FI and AR, 500 steps, replay 10000, batch 512, gamma 0.95,
    /// target refresh every 5 episodes, RAdam at 0.001.
    pub fn paper_appc(task: Task, threshold: Threshold, min_conf: Option<f64>) -> Self {
        RunConfig {
            task,
            threshold,
            min_conf,
            agent: AgentKind::Fusion,
            episodes: if task == Task::Hui { 500 } else { 1000 },
            steps: 500,
            capacity: 10_000,
            gamma: 0.95,
            batch_size: 512,
            target_sync: 5,
            lr: 1e-3,
            epsilon: ExpSchedule::new(0.9, 0.05, 200.0),
            state_epsilon: 0.1,
            lambda: default_lambda(task),
            widths: NetworkSpec::default_widths(task),
            max_grad_norm: None,
            seed: 0,
            timing: false,
        }
    }

    /// 50 episodes of 200 steps, three 64-unit blocks and batch 64, for
    /// databases of a few hundred transactions.
    pub fn desk(task: Task, threshold: Threshold, min_conf: Option<f64>) -> Self {
        RunConfig {
            episodes: 50,
            steps: 200,
            batch_size: 64,
            widths: vec![64, 64, 64],
            ..RunConfig::paper_appc(task, threshold, min_conf)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.episodes == 0 || self.steps == 0 {
            return bad("episodes and steps must be at least 1");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.capacity == 0 {
            return bad("capacity must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return bad("lr must be positive");
        }
        match (self.task, self.min_conf) {
            (Task::Ar, None) => bad("association rules need min_conf"),
            (Task::Ar, Some(c)) if !(0.0..=1.0).contains(&c) => bad("min_conf must lie in [0, 1]"),
            (Task::Hui | Task::Fi, Some(_)) => bad("min_conf only applies to association rules"),
            _ => Ok(()),
        }
    }

    /// Returns a copy with fields replaced by the entries of `overrides`,
    /// keyed by field name.
    pub fn with_overrides(&self, overrides: &Map<String, Value>) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        let obj = value.as_object_mut().expect("config serialises to an object");
        for (k, v) in overrides {
            if !obj.contains_key(k) {
                return Err(Error::Config(format!("unknown config field '{k}'")));
            }
            obj.insert(k.clone(), v.clone());
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Fusion weight schedule used for standalone mining.
pub fn default_lambda(task: Task) -> ExpSchedule {
    match task {
        Task::Fi => ExpSchedule::new(0.999, 0.6, 200.0),
        Task::Hui | Task::Ar => ExpSchedule::new(0.999, 0.5, 200.0),
    }
}

/// A database pruned for one run, with its measure configuration.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub db: TransactionDatabase,
    /// For each pruned id, the id in the database handed to [`prepare`].
    pub original_ids: Vec<ItemId>,
    pub measure: MeasureConfig,
}

/// Resolves the threshold against `db` and prunes items that cannot appear in
/// any target pattern.
pub fn prepare(db: &TransactionDatabase, cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let threshold = cfg.threshold.resolve(db, cfg.task)?;
    let (pruned, original_ids) = prune_items(db, cfg.task, threshold)?;
    let measure = MeasureConfig::new(&pruned, cfg.task, threshold, cfg.min_conf)?;
    Ok(PreparedData {
        db: pruned,
        original_ids,
        measure,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Steps whose resulting pattern met the thresholds, repeats included.
    pub extracted: usize,
    pub cumulative_unique: usize,
    pub mean_reward: f64,
    pub loss_mean: Option<f64>,
    pub wall_ms: Option<f64>,
    /// Zero-based steps of this episode that found a pattern new to the run.
    pub new_unique_steps: Vec<usize>,
}

pub const EPISODE_LOG_HEADER: &str = "episode,extracted_this_episode,cumulative_unique,mean_reward,loss_mean,wall_ms";

impl EpisodeLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{}",
            self.episode,
            self.extracted,
            self.cumulative_unique,
            self.mean_reward,
            opt(self.loss_mean),
            opt(self.wall_ms)
        )
    }
}

pub fn episode_log_csv(logs: &[EpisodeLog]) -> String {
    let mut out = String::from(EPISODE_LOG_HEADER);
    out.push('\n');
    for log in logs {
        out.push_str(&log.csv_row());
        out.push('\n');
    }
    out
}

/// Learned state of an agent at the end of a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub checkpoint: Option<Checkpoint>,
    pub k_total: u64,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct MiningResult {
    /// Extracted patterns in the ids of the database passed to [`run`], sorted.
    pub patterns: Vec<ScoredPattern>,
    pub logs: Vec<EpisodeLog>,
    pub steps_per_episode: usize,
    pub agent: AgentCheckpoint,
    pub memory_len: usize,
    pub experiences_pushed: u64,
    pub target_syncs: usize,
}

impl MiningResult {
    pub fn unique_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn network(&self) -> Option<&QNetwork> {
        self.agent.checkpoint.as_ref().map(|c| &c.network)
    }

    pub fn total_step_number(&self, target_count: usize) -> Option<u64> {
        total_step_number(&self.logs, self.steps_per_episode, target_count)
    }
}

/// `e * K + k` for the first step (zero-based episode `e`, step `k`) at which
/// the cumulative unique count reached `target_count`.
pub fn total_step_number(logs: &[EpisodeLog], steps_per_episode: usize, target_count: usize) -> Option<u64> {
    if target_count == 0 {
        return Some(0);
    }
    let mut before = 0;
    for log in logs {
        let here = log.new_unique_steps.len();
        if before + here >= target_count {
            let k = log.new_unique_steps[target_count - before - 1];
            return Some((log.episode * steps_per_episode + k) as u64);
        }
        before += here;
    }
    None
}

/// Prunes `db`, mines it and maps patterns back to `db`'s ids.
pub fn run(db: &TransactionDatabase, cfg: &RunConfig) -> Result<MiningResult> {
    run_prepared(&prepare(db, cfg)?, cfg, None)
}

/// Mines a prepared database, starting from `initial` when given.
pub fn run_prepared(data: &PreparedData, cfg: &RunConfig, initial: Option<QNetwork>) -> Result<MiningResult> {
    cfg.validate()?;
    let db = &data.db;
    let m = db.item_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env = Environment::new(db, data.measure.clone());

    let learns = cfg.agent.learns();
    let spec = NetworkSpec::for_task(cfg.task, m, &cfg.widths);
    // a fresh network is drawn even when `initial` replaces it, so that runs
    // with and without a starting network consume the same random stream
    let mut net = match learns {
        false => None,
        true => Some(QNetwork::initialize(&spec, &mut rng)?),
    };
    if let (Some(slot), Some(n)) = (net.as_mut(), initial) {
        if n.spec != spec {
            return Err(Error::ShapeMismatch("initial network does not match the run".into()));
        }
        *slot = n;
    }
    let mut target = net.clone();
    let mut optimizer = RAdam::new(cfg.lr);
    optimizer.max_grad_norm = cfg.max_grad_norm;
    let mut memory = ReplayMemory::new(cfg.capacity);
    let mut fusion = FusionSchedule::new(cfg.lambda);

    let mut found: BTreeSet<Pattern> = BTreeSet::new();
    let mut logs = Vec::with_capacity(cfg.episodes);
    let mut target_syncs = 0;
    let mut k_total: u64 = 0;

    for e in 0..cfg.episodes {
        let started = Instant::now();
        let mut bits = env.reset(&mut rng).map_err(|err| err.context(format!("episode {e}")))?;
        let mut state = env.state(&bits);
        let mut log = EpisodeLog {
            episode: e,
            extracted: 0,
            cumulative_unique: 0,
            mean_reward: 0.0,
            loss_mean: None,
            wall_ms: None,
            new_unique_steps: Vec::new(),
        };
        let mut reward_sum = 0i64;
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);

        for k in 0..cfg.steps {
            let at = |err: Error| err.context(format!("episode {e}, step {k}"));
            let epsilon = cfg.epsilon.value(k_total);
            let action = match cfg.agent {
                AgentKind::Random => agent::select_action_random(m, &mut rng),
                AgentKind::StateEps => agent::select_action_state_eps(state.item_values(), cfg.state_epsilon, &mut rng),
                AgentKind::StateProb => agent::select_action_state_prob(state.item_values(), &mut rng),
                AgentKind::Basic => {
                    agent::select_action_basic(net.as_ref().unwrap(), &state, epsilon, &mut rng).map_err(at)?
                }
                AgentKind::Fusion => {
                    agent::select_action_fusion(net.as_ref().unwrap(), &state, &mut fusion, epsilon, &mut rng)
                        .map_err(at)?
                }
            };
            let outcome = env.step(&bits, Action::from_index(action, m), &mut rng).map_err(at)?;
            if let Some(p) = outcome.extracted {
                log.extracted += 1;
                if found.insert(p) {
                    log.new_unique_steps.push(k);
                }
            }
            reward_sum += outcome.reward as i64;
            let next_state = env.state(&outcome.next_bits);

            if let (Some(net), Some(target)) = (net.as_mut(), target.as_ref()) {
                memory.push(Experience {
                    state: state.values.clone(),
                    action,
                    reward: outcome.reward,
                    next_state: next_state.values.clone(),
                });
                let loss = agent::train_step(
                    net,
                    target,
                    &memory,
                    &mut optimizer,
                    cfg.gamma,
                    cfg.batch_size,
                    &mut rng,
                )
                .map_err(at)?;
                if let Some(l) = loss {
                    loss_sum += l;
                    loss_count += 1;
                }
            }
            bits = outcome.next_bits;
            state = next_state;
            k_total += 1;
        }

        if let (Some(net), Some(target)) = (net.as_ref(), target.as_mut()) {
            if (e + 1) % cfg.target_sync == 0 {
                net.copy_into(target)?;
                target_syncs += 1;
            }
        }
        log.cumulative_unique = found.len();
        log.mean_reward = reward_sum as f64 / cfg.steps as f64;
        log.loss_mean = (loss_count > 0).then(|| loss_sum / loss_count as f64);
        if cfg.timing {
            log.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
        logs.push(log);
    }

    let patterns = verify_and_map(data, found)?;
    Ok(MiningResult {
        patterns,
        logs,
        steps_per_episode: cfg.steps,
        agent: AgentCheckpoint {
            checkpoint: net.map(|n| Checkpoint::new(n, Some(optimizer))),
            k_total,
            rng,
        },
        memory_len: if learns { memory.len() } else { 0 },
        experiences_pushed: memory.pushes(),
        target_syncs,
    })
}

/// Re-scores every pattern on the pruned database, rejects any that misses the
/// thresholds, and translates ids back to the unpruned database.
fn verify_and_map(data: &PreparedData, found: BTreeSet<Pattern>) -> Result<Vec<ScoredPattern>> {
    let map = |i: &ItemId| data.original_ids[*i as usize];
    let mut out = Vec::with_capacity(found.len());
    for pattern in found {
        let score = pattern.score(&data.db, data.measure.task)?;
        if !Pattern::meets(&score, &data.measure) {
            return Err(Error::Verification {
                pattern: pattern.to_string(),
            });
        }
        let mapped = match pattern {
            Pattern::Itemset(items) => {
                let mut items: Vec<ItemId> = items.iter().map(map).collect();
                items.sort_unstable();
                Pattern::Itemset(items)
            }
            Pattern::Rule { antecedent, consequent } => {
                let mut antecedent: Vec<ItemId> = antecedent.iter().map(map).collect();
                antecedent.sort_unstable();
                Pattern::Rule {
                    antecedent,
                    consequent: map(&consequent),
                }
            }
        };
        out.push(ScoredPattern { pattern: mapped, score });
    }
    out.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub params: BTreeMap<String, Value>,
    pub repeat: usize,
    pub seed: u64,
    pub unique: usize,
    pub total_step_number: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub params: BTreeMap<String, Value>,
    pub runs: usize,
    pub mean_unique: f64,
    pub median_unique: f64,
    /// Runs whose cumulative unique count reached the target.
    pub reached: usize,
    pub mean_steps: Option<f64>,
    pub median_steps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub keys: Vec<String>,
    pub target_count: Option<usize>,
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SweepSummary>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn cartesian(grid: &BTreeMap<String, Vec<Value>>) -> Vec<BTreeMap<String, Value>> {
    let mut cells = vec![BTreeMap::new()];
    for (key, values) in grid {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.insert(key.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    cells
}

/// Runs every combination of `grid` values `repeats` times, in parallel.
/// Repeat `r` of every cell uses seed `base.seed + r`. Step numbers are
/// measured against `target_count` when given.
pub fn sweep(
    db: &TransactionDatabase,
    base: &RunConfig,
    grid: &BTreeMap<String, Vec<Value>>,
    repeats: usize,
    target_count: Option<usize>,
) -> Result<SweepReport> {
    let cells = cartesian(grid);
    let mut jobs = Vec::new();
    for cell in &cells {
        let overrides: Map<String, Value> = cell.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let cfg = base.with_overrides(&overrides)?;
        for r in 0..repeats {
            let mut cfg = cfg.clone();
            cfg.seed = base.seed.wrapping_add(r as u64);
            jobs.push((cell.clone(), r, cfg));
        }
    }
    let runs: Vec<SweepRun> = jobs
        .into_par_iter()
        .map(|(params, repeat, cfg)| {
            let result = run(db, &cfg)?;
            Ok(SweepRun {
                params,
                repeat,
                seed: cfg.seed,
                unique: result.unique_count(),
                total_step_number: target_count.and_then(|t| result.total_step_number(t)),
            })
        })
        .collect::<Result<_>>()?;

    let summary = cells
        .iter()
        .map(|cell| {
            let mine: Vec<&SweepRun> = runs.iter().filter(|r| &r.params == cell).collect();
            let mut uniques: Vec<f64> = mine.iter().map(|r| r.unique as f64).collect();
            let mut steps: Vec<f64> = mine.iter().filter_map(|r| r.total_step_number).map(|s| s as f64).collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            SweepSummary {
                params: cell.clone(),
                runs: mine.len(),
                mean_unique: mean(&uniques).unwrap_or(0.0),
                median_unique: median(&mut uniques).unwrap_or(0.0),
                reached: steps.len(),
                mean_steps: mean(&steps),
                median_steps: median(&mut steps),
            }
        })
        .collect();
    Ok(SweepReport {
        keys: grid.keys().cloned().collect(),
        target_count,
        runs,
        summary,
    })
}

impl SweepReport {
    /// One row per run.
    pub fn runs_csv(&self) -> String {
        let mut out = String::new();
        for k in &self.keys {
            let _ = write!(out, "{k},");
        }
        out.push_str("repeat,seed,unique,total_step_number\n");
        for r in &self.runs {
            for k in &self.keys {
                let _ = write!(out, "{},", csv_value(&r.params[k]));
            }
            let steps = r.total_step_number.map_or(String::new(), |s| s.to_string());
            let _ = writeln!(out, "{},{},{},{}", r.repeat, r.seed, r.unique, steps);
        }
        out
    }

    /// One row per grid cell.
    pub fn summary_csv(&self) -> String {
        let mut out = String::new();
        for k in &self.keys {
            let _ = write!(out, "{k},");
        }
        out.push_str("runs,mean_unique,median_unique,reached,mean_steps,median_steps\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for s in &self.summary {
            for k in &self.keys {
                let _ = write!(out, "{},", csv_value(&s.params[k]));
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.runs,
                s.mean_unique,
                s.median_unique,
                s.reached,
                opt(s.mean_steps),
                opt(s.median_steps)
            );
        }
        out
    }
}

fn csv_value(v: &Value) -> String {
    let s = v.to_string();
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}
