use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use gimrl::dataset::split_source_target;
use gimrl::oracle::{mine_ar_capped, mine_fi_capped, mine_hui_capped};
use gimrl::patternfile::{coverage_percent, format_patterns, parse_patterns};
use gimrl::trainer::{self, episode_log_csv};
use gimrl::transfer::{transfer_experiment, TransferConfig};
use gimrl::{RunConfig, Task, Threshold, TransactionDatabase};
use serde_json::{Map, Value};

use crate::{BaselineArgs, CompareArgs, DataArgs, MineArgs, Preset, RunArgs, SweepArgs, TransferArgs};

/// Argument errors exit with 2, everything else with 1.
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

type Outcome = Result<(), Failure>;

/// Sizes the global worker pool from `GIMRL_THREADS` when set.
pub fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("GIMRL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("GIMRL_THREADS must be a positive integer, got '{raw}'"))
        .usage()?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load(args: &DataArgs) -> Result<TransactionDatabase, Failure> {
    if args.task == Task::Hui && !args.utility_format {
        return Err(anyhow!("--task hui needs a utility database (--utility-format)")).usage();
    }
    let db = if args.utility_format {
        TransactionDatabase::load_utility(&args.data)
    } else {
        TransactionDatabase::load_plain(&args.data)
    };
    Ok(db?)
}

fn threshold(args: &DataArgs) -> Threshold {
    match (args.threshold, args.threshold_abs) {
        (_, Some(abs)) => Threshold::Absolute(abs),
        (Some(pct), None) => Threshold::Percent(pct),
        (None, None) => unreachable!("clap requires one threshold flag"),
    }
}

fn min_conf(args: &DataArgs) -> Result<Option<f64>, Failure> {
    match (args.task, args.conf) {
        (Task::Ar, None) => Err(anyhow!("--task ar needs --conf")).usage(),
        (Task::Ar, Some(c)) if !(0.0..=100.0).contains(&c) => Err(anyhow!("--conf must lie in [0, 100]")).usage(),
        (Task::Ar, Some(c)) => Ok(Some(c / 100.0)),
        (_, Some(_)) => Err(anyhow!("--conf only applies to --task ar")).usage(),
        (_, None) => Ok(None),
    }
}

/// Preset, then `--config` overrides, then explicit flags.
fn run_config(data: &DataArgs, run: &RunArgs) -> Result<RunConfig, Failure> {
    let (th, conf) = (threshold(data), min_conf(data)?);
    let mut cfg = match run.preset {
        Preset::PaperAppc => RunConfig::paper_appc(data.task, th, conf),
        Preset::Desk => RunConfig::desk(data.task, th, conf),
    };
    if let Some(path) = &run.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .usage()?;
        let overrides: Map<String, Value> = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a JSON object", path.display()))
            .usage()?;
        cfg = cfg.with_overrides(&overrides).usage()?;
    }
    cfg.task = data.task;
    cfg.threshold = th;
    cfg.min_conf = conf;
    if let Some(agent) = run.agent {
        cfg.agent = agent;
    }
    if let Some(e) = run.episodes {
        cfg.episodes = e;
    }
    if let Some(k) = run.steps {
        cfg.steps = k;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    cfg.timing |= run.timing;
    cfg.validate().usage()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn noun(task: Task) -> &'static str {
    match task {
        Task::Hui => "high-utility itemsets",
        Task::Fi => "frequent itemsets",
        Task::Ar => "association rules",
    }
}

pub fn mine(args: MineArgs) -> Outcome {
    let cfg = run_config(&args.data, &args.run)?;
    let db = load(&args.data)?;
    let started = Instant::now();
    let result = trainer::run(&db, &cfg)?;
    let secs = started.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out, "itemsets.txt", &format_patterns(&db, &result.patterns))?;
    write(&args.out, "episode_log.csv", &episode_log_csv(&result.logs))?;
    write(&args.out, "run_config.json", &serde_json::to_string_pretty(&cfg)?)?;
    write(&args.out, "agent_checkpoint.json", &serde_json::to_string(&result.agent)?)?;
    println!("{} {} in {secs:.2}s", result.unique_count(), noun(cfg.task));
    Ok(())
}

pub fn baseline(args: BaselineArgs) -> Outcome {
    let conf = min_conf(&args.data)?;
    let db = load(&args.data)?;
    let xi = threshold(&args.data).resolve(&db, args.data.task).usage()?;
    let started = Instant::now();
    let patterns = match args.data.task {
        Task::Fi => mine_fi_capped(&db, xi, args.cap),
        Task::Hui => mine_hui_capped(&db, xi, args.cap),
        Task::Ar => mine_ar_capped(&db, xi, conf.expect("checked above"), args.cap),
    }?;
    let secs = started.elapsed().as_secs_f64();
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out, "itemsets.txt", &format_patterns(&db, &patterns))?;
    println!("{} {} at threshold {xi} in {secs:.2}s", patterns.len(), noun(args.data.task));
    Ok(())
}

pub fn compare(args: CompareArgs) -> Outcome {
    let read = |p: &Path| -> anyhow::Result<_> {
        let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        parse_patterns(&text).with_context(|| format!("in {}", p.display()))
    };
    let found = read(&args.found)?;
    let reference = read(&args.reference)?;
    let hits = found.intersection(&reference).count();
    println!(
        "coverage: {:.1}% ({hits}/{})",
        coverage_percent(&found, &reference),
        reference.len()
    );
    let extra = found.len() - hits;
    if extra > 0 {
        println!("{extra} found patterns are absent from the reference");
    }
    Ok(())
}

pub fn transfer(args: TransferArgs) -> Outcome {
    let base = run_config(&args.data, &args.run)?;
    let mut cfg = TransferConfig::preset(base);
    cfg.reset_bn = args.reset_bn;
    let db = load(&args.data)?;
    let report = transfer_experiment(&db, &cfg)?;
    let (_, target) = split_source_target(&db)?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out, "transfer_curves.csv", &report.curves_csv())?;
    write(&args.out, "transfer_config.json", &serde_json::to_string_pretty(&cfg)?)?;
    write(&args.out, "source_itemsets.txt", &format_patterns(&split_source_target(&db)?.0, &report.source.patterns))?;
    write(&args.out, "target_itemsets.txt", &format_patterns(&target, &report.transferred.patterns))?;
    write(&args.out, "scratch_itemsets.txt", &format_patterns(&target, &report.scratch.patterns))?;
    let al = &report.alignment;
    println!(
        "items: {} shared, {} source only, {} target only",
        al.shared.len(),
        al.source_only.len(),
        al.target_only.len()
    );
    println!(
        "source {}, transferred {}, scratch {}; hidden layers identical: {}",
        report.source.unique_count(),
        report.transferred.unique_count(),
        report.scratch.unique_count(),
        report.hidden_identical
    );
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Outcome {
    let base = run_config(&args.data, &args.run)?;
    let text = fs::read_to_string(&args.grid)
        .with_context(|| format!("cannot read {}", args.grid.display()))
        .usage()?;
    let grid: BTreeMap<String, Vec<Value>> = serde_json::from_str(&text)
        .with_context(|| format!("{} must map field names to lists", args.grid.display()))
        .usage()?;
    if args.repeats == 0 {
        return Err(anyhow!("--repeats must be at least 1")).usage();
    }
    let db = load(&args.data)?;
    let report = trainer::sweep(&db, &base, &grid, args.repeats, args.target_count)?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out, "sweep_runs.csv", &report.runs_csv())?;
    write(&args.out, "sweep_summary.csv", &report.summary_csv())?;
    write(&args.out, "base_config.json", &serde_json::to_string_pretty(&base)?)?;
    print!("{}", report.summary_csv());
    Ok(())
}
