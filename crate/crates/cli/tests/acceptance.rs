//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 1 reads the benchmark databases from `$GIMRL_DATA_DIR` (default:
//! the repository's `data/`): `chess.txt`, `mushroom.txt`, `chess_utility.txt`
//! and `mushroom_utility.txt` in SPMF format.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::thread;
use std::time::Instant;

use gimrl::environment::{compute_reward, compute_state};
use gimrl::neuralnet::RAdam;
use gimrl::oracle::{mine_ar_exhaustive, mine_fi_exhaustive, mine_hui_exhaustive};
use gimrl::transfer::{transfer_experiment, TransferConfig};
use gimrl::trainer::run;
use gimrl::{
    fixtures, synthetic, Action, AgentKind, ItemId, ItemsetBits, MeasureConfig, NetworkSpec, Pattern, QNetwork,
    RunConfig, Task, Threshold, TransactionDatabase,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);
type Check = fn() -> Verdict;

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn contains(row: &[ItemId], items: &[ItemId]) -> bool {
    items.iter().all(|i| row.contains(i))
}

fn brute_support(db: &TransactionDatabase, items: &[ItemId]) -> usize {
    db.transactions().iter().filter(|t| contains(t, items)).count()
}

fn brute_utility(db: &TransactionDatabase, items: &[ItemId]) -> u64 {
    (0..db.len())
        .filter(|&n| contains(db.transaction(n), items))
        .map(|n| {
            let utils = db.transaction_item_utilities(n).unwrap();
            db.transaction(n)
                .iter()
                .zip(utils)
                .filter(|(i, _)| items.contains(i))
                .map(|(_, u)| u)
                .sum::<u64>()
        })
        .sum()
}

fn subsets(m: usize) -> impl Iterator<Item = Vec<ItemId>> {
    (1u32..(1 << m)).map(move |mask| (0..m as ItemId).filter(|i| mask & (1 << i) != 0).collect())
}

fn ids(db: &TransactionDatabase, ext: &[u64]) -> Vec<ItemId> {
    ext.iter().map(|&e| db.internal_id(e).unwrap()).collect()
}

fn data_dir() -> PathBuf {
    std::env::var_os("GIMRL_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn criterion_1() -> Verdict {
    let dir = data_dir();
    // (file, utility format, task, threshold %, min confidence, expected count)
    #[allow(clippy::type_complexity)]
    let cases: [(&str, bool, Task, f64, Option<f64>, usize); 6] = [
        ("chess.txt", false, Task::Fi, 80.0, None, 8227),
        ("mushroom.txt", false, Task::Fi, 35.0, None, 1121),
        ("chess_utility.txt", true, Task::Hui, 29.0, None, 176),
        ("mushroom_utility.txt", true, Task::Hui, 14.5, None, 199),
        ("chess.txt", false, Task::Ar, 90.0, Some(0.8), 2351),
        ("mushroom.txt", false, Task::Ar, 50.0, Some(0.8), 331),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (file, utility, task, pct, conf, want) in cases {
        let path = dir.join(file);
        let label = format!("{file} {task:?} {pct}%");
        if !path.exists() {
            ok = false;
            parts.push(format!("{label}: dataset not found at {}", path.display()));
            continue;
        }
        let db = if utility {
            TransactionDatabase::load_utility(&path)
        } else {
            TransactionDatabase::load_plain(&path)
        };
        let db = match db {
            Ok(db) => db,
            Err(e) => {
                ok = false;
                parts.push(format!("{label}: {e}"));
                continue;
            }
        };
        let xi = Threshold::Percent(pct).resolve(&db, task).unwrap();
        let started = Instant::now();
        let got = match task {
            Task::Fi => mine_fi_exhaustive(&db, xi).map(|v| v.len()),
            Task::Hui => mine_hui_exhaustive(&db, xi).map(|v| v.len()),
            Task::Ar => mine_ar_exhaustive(&db, xi, conf.unwrap()).map(|v| v.len()),
        };
        let secs = started.elapsed().as_secs_f64();
        match got {
            Ok(n) => {
                ok &= n == want;
                parts.push(format!("{label}: {n} (want {want}, {secs:.1}s)"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    (ok, parts.join("; "))
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut discrepancies = 0;
    for _ in 0..100 {
        let m = rng.random_range(1..=12);
        let n = rng.random_range(1..=25);
        let rows: Vec<Vec<(u64, u64)>> = (0..n)
            .map(|_| {
                let mut row: Vec<(u64, u64)> = (1..=m as u64)
                    .filter(|_| rng.random_bool(0.45))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .map(|e| (e, rng.random_range(1..=10)))
                    .collect();
                if row.is_empty() {
                    row.push((rng.random_range(1..=m as u64), rng.random_range(1..=10)));
                }
                row
            })
            .collect();
        let db = TransactionDatabase::from_utility_transactions(rows).unwrap();
        let min_sup = rng.random_range(1..=(db.len() as u64 / 2).max(1));
        let min_util = rng.random_range(1..=db.total_utility().unwrap() / 3 + 1);
        let min_conf = rng.random_range(0.0..=1.0);

        let all: Vec<Vec<ItemId>> = subsets(db.item_count()).collect();
        let fi: BTreeMap<Pattern, usize> = all
            .iter()
            .map(|x| (x, brute_support(&db, x)))
            .filter(|&(_, s)| s >= 1 && s as u64 >= min_sup)
            .map(|(x, s)| (Pattern::Itemset(x.clone()), s))
            .collect();
        let hui: BTreeMap<Pattern, u64> = all
            .iter()
            .filter(|x| brute_support(&db, x) >= 1)
            .map(|x| (x, brute_utility(&db, x)))
            .filter(|&(_, u)| u >= min_util)
            .map(|(x, u)| (Pattern::Itemset(x.clone()), u))
            .collect();
        let mut ar: BTreeMap<Pattern, f64> = BTreeMap::new();
        for x in all.iter().filter(|x| x.len() >= 2) {
            let sup = brute_support(&db, x);
            if sup == 0 || (sup as u64) < min_sup {
                continue;
            }
            for &c in x {
                let a: Vec<ItemId> = x.iter().copied().filter(|&i| i != c).collect();
                let conf = sup as f64 / brute_support(&db, &a) as f64;
                if conf >= min_conf {
                    ar.insert(Pattern::Rule { antecedent: a, consequent: c }, conf);
                }
            }
        }

        let got_fi: BTreeMap<_, _> =
            mine_fi_exhaustive(&db, min_sup).unwrap().into_iter().map(|s| (s.pattern, s.score.support)).collect();
        let got_hui: BTreeMap<_, _> = mine_hui_exhaustive(&db, min_util)
            .unwrap()
            .into_iter()
            .map(|s| (s.pattern, s.score.utility.unwrap()))
            .collect();
        let got_ar: BTreeMap<_, _> = mine_ar_exhaustive(&db, min_sup, min_conf)
            .unwrap()
            .into_iter()
            .map(|s| (s.pattern, s.score.confidence.unwrap()))
            .collect();
        discrepancies += (got_fi != fi) as usize + (got_hui != hui) as usize + (got_ar != ar) as usize;
    }
    (discrepancies == 0, format!("100 databases, {discrepancies} discrepancies"))
}

fn criterion_3() -> Verdict {
    let db = fixtures::fig2();
    let bits = |ext: &[u64]| ItemsetBits::from_items(db.item_count(), &ids(&db, ext));
    let flip = |from: &[u64], to: &[u64]| {
        let (a, b) = (bits(from), bits(to));
        Action::Flip((0..db.item_count()).find(|&m| a.get(m) != b.get(m)).unwrap())
    };
    let reward = |xi: u64, from: &[u64], to: &[u64], seen: &mut HashSet<Pattern>| {
        let cfg = MeasureConfig::new(&db, Task::Fi, xi, None).unwrap();
        compute_reward(&bits(from), &bits(to), flip(from, to), &db, &cfg, seen).reward
    };
    let mut seen = HashSet::new();
    let scenarios = [
        reward(5, &[2, 3], &[2, 3, 4], &mut seen),
        reward(5, &[2, 3], &[2, 3, 5], &mut seen),
        reward(5, &[2, 3], &[1, 2, 3], &mut seen),
        reward(5, &[2, 3], &[2], &mut seen),
        reward(5, &[2, 3], &[2], &mut seen),
    ];
    // support of {2} is 6: xi = 24, 12, 8, 6 put it exactly on xi/4, xi/2, 3xi/4, xi
    let boundaries: Vec<i32> = [24, 12, 8, 6]
        .iter()
        .map(|&xi| reward(xi, &[2, 3], &[2], &mut HashSet::new()))
        .collect();
    let ok = scenarios == [-1, 0, 1, 100, 4] && boundaries == [1, 2, 3, 100];
    (ok, format!("scenarios {scenarios:?}, boundaries {boundaries:?}"))
}

fn criterion_4() -> Verdict {
    let db = fixtures::fig2();
    let n = db.len() as f64;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for base in [&[2u64, 3][..], &[1, 2, 3]] {
        let b = ItemsetBits::from_items(db.item_count(), &ids(&db, base));
        let cfg = MeasureConfig::new(&db, Task::Fi, 5, None).unwrap();
        let got = compute_state(&b, &db, &cfg).values;
        for (m, &g) in got.iter().enumerate() {
            let mut flipped = b.clone();
            flipped.flip(m);
            let x = flipped.items();
            let want = if x.is_empty() { 0.0 } else { (brute_support(&db, &x) as f64 / n + 1.0).ln() };
            let err = if want == 0.0 { g.abs() } else { ((g - want) / want).abs() };
            worst = worst.max(err);
            checked += 1;
        }
    }
    (worst <= 1e-12, format!("{checked} positions, worst relative error {worst:.1e}"))
}

fn gradient_error(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = QNetwork::initialize(spec, &mut rng).unwrap();
    for p in net.parameters_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let rows = 6;
    let x = Array2::from_shape_simple_fn((rows, spec.input_dim), || rng.random_range(-1.5..1.5));
    let t: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<usize> = (0..rows).map(|_| rng.random_range(0..spec.output_dim)).collect();
    let (_, grads) = net.loss_and_gradients(&x, &t, &a).unwrap();
    let h = 1e-5;
    let loss_at = |tensor: usize, idx: usize, d: f64| {
        let mut n = net.clone();
        n.parameters_mut()[tensor][idx] += d;
        n.loss_and_gradients(&x, &t, &a).unwrap().0
    };
    let mut worst: f64 = 0.0;
    for (ti, g) in grads.iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let numeric = (loss_at(ti, i, h) - loss_at(ti, i, -h)) / (2.0 * h);
            // biases ahead of batch norm have zero gradient
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    worst
}

fn criterion_5() -> Verdict {
    let mut plain = NetworkSpec::for_task(Task::Fi, 4, &[5, 4]);
    plain.hidden[1].batchnorm = false;
    let worst = [
        gradient_error(&NetworkSpec::for_task(Task::Hui, 5, &[6, 5]), 1),
        gradient_error(&NetworkSpec::for_task(Task::Ar, 3, &[5]), 2),
        gradient_error(&plain, 3),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let mut x = [1.0];
    let mut opt = RAdam::new(1e-3);
    let mut steps = None;
    for k in 1..=5000 {
        let g = vec![2.0 * x[0]];
        opt.update(vec![&mut x[..]], &[g]);
        if x[0] * x[0] < 1e-6 {
            steps = Some(k);
            break;
        }
    }
    let ok = worst < 1e-4 && steps.is_some();
    (
        ok,
        format!(
            "worst gradient error {worst:.1e}; x^2 from x=1 below 1e-6 {}",
            steps.map_or("not within 5000 steps".to_string(), |k| format!("after {k} steps"))
        ),
    )
}

/// Unique counts of `seeds` runs, each on its own thread.
fn parallel_counts(db: &TransactionDatabase, cfg: &RunConfig, seeds: &[u64]) -> Vec<usize> {
    thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = RunConfig { seed, ..cfg.clone() };
                s.spawn(move || run(db, &cfg).unwrap().unique_count())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn criterion_6() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let fig2 = fixtures::fig2();
    let synth = synthetic::desk_database(0).unwrap();
    let cases = [
        ("fig2 FI xi=5", &fig2, Task::Fi, Threshold::Absolute(5)),
        ("synthetic HUI 28%", &synth, Task::Hui, Threshold::Percent(28.0)),
        ("synthetic FI 15%", &synth, Task::Fi, Threshold::Percent(15.0)),
    ];
    for (label, db, task, threshold) in cases {
        let xi = threshold.resolve(db, task).unwrap();
        let oracle = match task {
            Task::Hui => mine_hui_exhaustive(db, xi).unwrap().len(),
            _ => mine_fi_exhaustive(db, xi).unwrap().len(),
        };
        let cfg = RunConfig::desk(task, threshold, None);
        let counts = parallel_counts(db, &cfg, &SEEDS);
        let m = median(counts.clone());
        let pct = 100.0 * m as f64 / oracle as f64;
        let sized = label.starts_with("fig2") || (20..=100).contains(&oracle);
        ok &= pct >= 95.0 && sized;
        parts.push(format!("{label}: {counts:?} of {oracle}, median {pct:.1}%"));
    }
    (ok, parts.join("; "))
}

fn criterion_7() -> Verdict {
    let db = synthetic::desk_database(0).unwrap();
    let threshold = Threshold::Percent(28.0);
    let oracle = mine_hui_exhaustive(&db, threshold.resolve(&db, Task::Hui).unwrap()).unwrap().len();
    let budget = |agent| RunConfig {
        agent,
        episodes: 5,
        ..RunConfig::desk(Task::Hui, threshold, None)
    };
    let random = parallel_counts(&db, &budget(AgentKind::Random), &SEEDS);
    let basic = parallel_counts(&db, &budget(AgentKind::Basic), &SEEDS);
    let fusion = parallel_counts(&db, &budget(AgentKind::Fusion), &SEEDS);
    let (r, b, f) = (median(random.clone()), median(basic.clone()), median(fusion.clone()));
    let ok = f >= b && b >= r && (r as f64) < 0.2 * oracle as f64;
    (
        ok,
        format!("5x200 steps, oracle {oracle}: fusion {fusion:?}, basic {basic:?}, random {random:?}"),
    )
}

fn criterion_8() -> Verdict {
    let db = synthetic::desk_database(0).unwrap();
    let reports: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                let db = &db;
                s.spawn(move || {
                    let base = RunConfig {
                        episodes: 100,
                        seed,
                        ..RunConfig::desk(Task::Hui, Threshold::Percent(28.0), None)
                    };
                    transfer_experiment(db, &TransferConfig::preset(base)).unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let pairs: Vec<(usize, usize)> = reports
        .iter()
        .map(|r| (*r.tgt_curve().last().unwrap(), *r.scratch_curve().last().unwrap()))
        .collect();
    let wins = pairs.iter().filter(|(t, s)| t >= s).count();
    let identical = reports.iter().all(|r| r.hidden_identical);
    (
        wins >= 2 && identical,
        format!("(transferred, scratch) finals {pairs:?}; hidden layers identical: {identical}"),
    )
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let fig2 = dir.path().join("fig2.txt");
    std::fs::write(&fig2, fixtures::FIG2_TEXT).unwrap();
    let synth = dir.path().join("synthetic.txt");
    std::fs::write(&synth, synthetic::desk_database(0).unwrap().to_spmf_string()).unwrap();
    let (fig2, synth) = (fig2.to_str().unwrap(), synth.to_str().unwrap());
    let runs: [&[&str]; 3] = [
        &["--task", "fi", "--data", fig2, "--threshold", "71.4", "--agent", "random", "--episodes", "10", "--steps", "50"],
        &["--task", "hui", "--data", synth, "--utility-format", "--threshold", "28", "--preset", "desk", "--episodes", "5"],
        &["--task", "ar", "--data", synth, "--utility-format", "--threshold", "20", "--conf", "60", "--preset", "desk", "--episodes", "3"],
    ];
    let mut identical = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for tag in ["a", "b"] {
            let out = dir.path().join(format!("run{i}{tag}"));
            let o = Command::new(env!("CARGO_BIN_EXE_gimrl"))
                .arg("mine")
                .args(*args)
                .args(["--seed", "11", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            if !o.status.success() {
                return (false, format!("run {i} failed: {}", String::from_utf8_lossy(&o.stderr).trim()));
            }
            outputs.push(["itemsets.txt", "episode_log.csv"].map(|f| std::fs::read(out.join(f)).unwrap()));
        }
        identical += (outputs[0] == outputs[1]) as usize;
    }
    (identical == runs.len(), format!("{identical}/{} CLI runs byte-identical", runs.len()))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("oracle counts on benchmark databases", criterion_1),
        ("oracles equal brute force on random databases", criterion_2),
        ("reward scenarios and bracket boundaries", criterion_3),
        ("state vector against direct evaluation", criterion_4),
        ("gradient check and optimiser convergence", criterion_5),
        ("desk-scale mining coverage", criterion_6),
        ("agent ordering at equal budget", criterion_7),
        ("transfer versus scratch", criterion_8),
        ("CLI determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += !ok as usize;
        println!(
            "criterion {}: {} {name} ({detail}) [{:.1}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
