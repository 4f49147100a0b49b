//! Reusing a network trained on one partition of a database on another.
//!
//! Hidden blocks carry over unchanged. The first layer's input columns and the
//! output layer's rows are per item, so they are copied for items present in
//! both vocabularies and freshly initialised for items only the target has.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::ExpSchedule;
use crate::dataset::{split_source_target, ItemId, TransactionDatabase};
use crate::error::{Error, Result};
use crate::measures::Task;
use crate::neuralnet::{he_sample, BatchNorm, NetworkSpec, QNetwork};
use crate::trainer::{default_lambda, prepare, run_prepared, MiningResult, RunConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemAlignment {
    /// `(source id, target id)` pairs with equal external ids, by source id.
    pub shared: Vec<(ItemId, ItemId)>,
    pub source_only: Vec<ItemId>,
    pub target_only: Vec<ItemId>,
    pub source_items: usize,
    pub target_items: usize,
}

pub fn align_items(source: &TransactionDatabase, target: &TransactionDatabase) -> ItemAlignment {
    let mut shared = Vec::new();
    let mut source_only = Vec::new();
    for s in 0..source.item_count() as ItemId {
        match target.internal_id(source.external_id(s)) {
            Some(t) => shared.push((s, t)),
            None => source_only.push(s),
        }
    }
    let target_only = (0..target.item_count() as ItemId)
        .filter(|&t| source.internal_id(target.external_id(t)).is_none())
        .collect();
    ItemAlignment {
        shared,
        source_only,
        target_only,
        source_items: source.item_count(),
        target_items: target.item_count(),
    }
}

fn inputs_per_item(spec: &NetworkSpec, items: usize) -> Result<usize> {
    if items == 0 || !spec.input_dim.is_multiple_of(items) || spec.output_dim != items + 1 {
        return Err(Error::ShapeMismatch(format!(
            "network {}->{} does not fit {items} items",
            spec.input_dim, spec.output_dim
        )));
    }
    Ok(spec.input_dim / items)
}

/// Builds a target network from `source`. Entries of target-only items get He
/// initialisation from `rng`; the reinitialise action's output row is copied.
/// With `reset_bn`, batch-norm running statistics restart from their initial
/// values.
pub fn transfer_network<R: Rng + ?Sized>(
    source: &QNetwork,
    alignment: &ItemAlignment,
    target_spec: &NetworkSpec,
    reset_bn: bool,
    rng: &mut R,
) -> Result<QNetwork> {
    if source.spec.hidden != target_spec.hidden || source.spec.input_batchnorm != target_spec.input_batchnorm {
        return Err(Error::ShapeMismatch("source and target hidden layers differ".into()));
    }
    let per_src = inputs_per_item(&source.spec, alignment.source_items)?;
    let per_tgt = inputs_per_item(target_spec, alignment.target_items)?;
    if per_src != per_tgt {
        return Err(Error::ShapeMismatch("source and target state layouts differ".into()));
    }
    let (m_src, m_tgt) = (alignment.source_items, alignment.target_items);

    let mut net = source.clone();
    net.spec = target_spec.clone();

    let first = &source.blocks[0];
    let slope = first.slope;
    let width = first.linear.out_dim();
    let mut w = ndarray::Array2::zeros((width, target_spec.input_dim));
    for r in 0..width {
        for c in 0..target_spec.input_dim {
            w[[r, c]] = he_sample(target_spec.input_dim, slope, rng);
        }
    }
    for &(s, t) in &alignment.shared {
        for half in 0..per_src {
            let (cs, ct) = (half * m_src + s as usize, half * m_tgt + t as usize);
            w.column_mut(ct).assign(&first.linear.weight.column(cs));
        }
    }
    net.blocks[0].linear.weight = w;

    if let Some(src_bn) = &source.input_bn {
        let mut bn = BatchNorm::new(target_spec.input_dim);
        for &(s, t) in &alignment.shared {
            for half in 0..per_src {
                let (cs, ct) = (half * m_src + s as usize, half * m_tgt + t as usize);
                bn.gamma[ct] = src_bn.gamma[cs];
                bn.beta[ct] = src_bn.beta[cs];
                bn.running_mean[ct] = src_bn.running_mean[cs];
                bn.running_var[ct] = src_bn.running_var[cs];
            }
        }
        net.input_bn = Some(bn);
    }

    let hidden = source.output.in_dim();
    let mut out = ndarray::Array2::zeros((target_spec.output_dim, hidden));
    for r in 0..target_spec.output_dim {
        for c in 0..hidden {
            out[[r, c]] = he_sample(hidden, slope, rng);
        }
    }
    let mut bias = ndarray::Array1::zeros(target_spec.output_dim);
    let rows = alignment
        .shared
        .iter()
        .map(|&(s, t)| (s as usize, t as usize))
        .chain(std::iter::once((m_src, m_tgt)));
    for (s, t) in rows {
        out.row_mut(t).assign(&source.output.weight.row(s));
        bias[t] = source.output.bias[s];
    }
    net.output.weight = out;
    net.output.bias = bias;

    if reset_bn {
        net.reset_running_stats();
    }
    Ok(net)
}

/// Whether every hidden-block parameter of `a` and `b` is bit-identical
/// (first-layer weights excluded).
pub fn hidden_parameters_identical(a: &QNetwork, b: &QNetwork) -> bool {
    if a.blocks.len() != b.blocks.len() {
        return false;
    }
    let bits = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    let bn_eq = |x: &Option<BatchNorm>, y: &Option<BatchNorm>| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => {
            bits(x.gamma.as_slice().unwrap(), y.gamma.as_slice().unwrap())
                && bits(x.beta.as_slice().unwrap(), y.beta.as_slice().unwrap())
                && bits(x.running_mean.as_slice().unwrap(), y.running_mean.as_slice().unwrap())
                && bits(x.running_var.as_slice().unwrap(), y.running_var.as_slice().unwrap())
        }
        _ => false,
    };
    a.blocks.iter().zip(&b.blocks).enumerate().all(|(i, (x, y))| {
        (i == 0 || bits(x.linear.weight.as_slice().unwrap(), y.linear.weight.as_slice().unwrap()))
            && bits(x.linear.bias.as_slice().unwrap(), y.linear.bias.as_slice().unwrap())
            && bn_eq(&x.bn, &y.bn)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Task, thresholds, budget and seed shared by all three runs.
    pub base: RunConfig,
    pub source_lambda: ExpSchedule,
    pub target_lambda: ExpSchedule,
    /// Fusion schedule of the network trained from scratch on the target.
    pub scratch_lambda: ExpSchedule,
    pub reset_bn: bool,
}

impl TransferConfig {
    /// Published per-task schedules: HUI 0.999->0.5 on the source and 0.5 on
    /// the target; FI 0.999->0.6 on both; AR 0.5 on the source and
    /// 0.999->0.5 on the target.
    pub fn preset(base: RunConfig) -> Self {
        let (source_lambda, target_lambda) = match base.task {
            Task::Hui => (ExpSchedule::new(0.999, 0.5, 200.0), ExpSchedule::constant(0.5)),
            Task::Fi => (ExpSchedule::new(0.999, 0.6, 200.0), ExpSchedule::new(0.999, 0.6, 200.0)),
            Task::Ar => (ExpSchedule::constant(0.5), ExpSchedule::new(0.999, 0.5, 200.0)),
        };
        TransferConfig {
            scratch_lambda: default_lambda(base.task),
            base,
            source_lambda,
            target_lambda,
            reset_bn: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferReport {
    pub alignment: ItemAlignment,
    pub source: MiningResult,
    pub transferred: MiningResult,
    pub scratch: MiningResult,
    /// Hidden parameters of the transferred network before retraining matched
    /// the source network bit for bit.
    pub hidden_identical: bool,
}

impl TransferReport {
    pub fn tgt_curve(&self) -> Vec<usize> {
        self.transferred.logs.iter().map(|l| l.cumulative_unique).collect()
    }

    pub fn scratch_curve(&self) -> Vec<usize> {
        self.scratch.logs.iter().map(|l| l.cumulative_unique).collect()
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("episode,tgt_cumulative,scratch_cumulative\n");
        for (e, (t, s)) in self.tgt_curve().into_iter().zip(self.scratch_curve()).enumerate() {
            out.push_str(&format!("{e},{t},{s}\n"));
        }
        out
    }
}

/// Splits `db` 60/40, trains on the source part, transfers to the target part
/// and retrains, and trains a second network on the target from scratch.
/// Both target runs share the configured seed.
pub fn transfer_experiment(db: &TransactionDatabase, cfg: &TransferConfig) -> Result<TransferReport> {
    if !cfg.base.agent.learns() {
        return Err(Error::Config("transfer needs a learning agent".into()));
    }
    let (src_raw, tgt_raw) = split_source_target(db)?;
    let with_lambda = |lambda: ExpSchedule| RunConfig {
        lambda,
        ..cfg.base.clone()
    };
    let src_cfg = with_lambda(cfg.source_lambda);
    let tgt_cfg = with_lambda(cfg.target_lambda);
    let scratch_cfg = with_lambda(cfg.scratch_lambda);
    let src = prepare(&src_raw, &src_cfg).map_err(|e| e.context("source partition"))?;
    let tgt = prepare(&tgt_raw, &tgt_cfg).map_err(|e| e.context("target partition"))?;
    let alignment = align_items(&src.db, &tgt.db);
    let target_spec = NetworkSpec::for_task(cfg.base.task, tgt.db.item_count(), &cfg.base.widths);

    let (chain, scratch) = rayon::join(
        || -> Result<(MiningResult, MiningResult, bool)> {
            let source = run_prepared(&src, &src_cfg, None)?;
            let src_net = source.network().expect("learning agent has a network");
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.base.seed ^ 0x7472_616e_7366_6572);
            let net = transfer_network(src_net, &alignment, &target_spec, cfg.reset_bn, &mut rng)?;
            let identical = hidden_parameters_identical(src_net, &net);
            let transferred = run_prepared(&tgt, &tgt_cfg, Some(net))?;
            Ok((source, transferred, identical))
        },
        || run_prepared(&tgt, &scratch_cfg, None),
    );
    let (source, transferred, hidden_identical) = chain?;
    Ok(TransferReport {
        alignment,
        source,
        transferred,
        scratch: scratch?,
        hidden_identical,
    })
}
