//! The training loop: mini-batched SGD with Nesterov momentum and per-step
//! learning-rate decay, a per-epoch centroid refresh and scheduler update,
//! validation-based model selection, and the ablation modes.
//!
//! Every epoch walks the full training split once (the final short batch is
//! kept). All randomness flows from the config seed through named substreams
//! (initialization, shuffling, negative sampling, dropout, validation), so
//! single-threaded runs are bitwise reproducible.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    compute_distance_stats, Dataset, DistanceStats, MultimodalInstance, Split,
    DEFAULT_MAX_STAT_PAIRS,
};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::loss::{batch_loss_and_grads, sample_triplets, Modality, ProjectionTable, Triplet};
use crate::margin::{
    compute_centroids, scheduled_margin, MarginConfig, MarginTrace, ScheduleMode,
};
use crate::numerics::Rng;
use crate::projection::{Gradients, Mode, ProjectionNetwork};

// Substream ids carved out of the master seed.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_TRIPLET: u64 = 3;
const STREAM_DROPOUT: u64 = 4;
const STREAM_VALIDATION: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    /// Mean validation mAP over both directions (higher is better).
    ValidationMap,
    /// Validation hinge loss under the static margin (lower is better).
    StaticMarginLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    None,
    /// Margin pinned to the static value `m` for every triplet.
    Static,
    /// Scheduler pinned to 1 and the semantic weight to 1: the margin is the
    /// pure semantic component from the first epoch.
    Alpha1Lambda1,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: MarginConfig,
    pub learning_rate: f64,
    /// Per-step learning-rate decay: `lr / (1 + decay * step)`.
    pub lr_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Negatives drawn per anchor and direction.
    pub n_neg: usize,
    pub hidden_dim: usize,
    /// Shared-subspace dimensionality.
    pub out_dim: usize,
    pub dropout_p: f64,
    pub seed: u64,
    /// Cap on sampled training pairs for the distance statistics.
    pub max_stat_pairs: usize,
    pub selection: SelectionMetric,
    pub ablation: AblationMode,
    /// When false (the default) the history's seconds column is written as 0
    /// so that identical seeds produce bitwise-identical artifacts; wall time
    /// still reaches observers.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: MarginConfig::default(),
            learning_rate: 5e-3,
            lr_decay: 1e-6,
            momentum: 0.9,
            batch_size: 200,
            n_neg: 1,
            hidden_dim: 1024,
            out_dim: 200,
            dropout_p: 0.1,
            seed: 0,
            max_stat_pairs: DEFAULT_MAX_STAT_PAIRS,
            selection: SelectionMetric::ValidationMap,
            ablation: AblationMode::None,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.margin.validate()?;
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !self.lr_decay.is_finite() || self.lr_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lr decay must be non-negative, got {}",
                self.lr_decay
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.n_neg == 0 {
            return Err(Error::InvalidConfig("n_neg must be positive".into()));
        }
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidConfig(
                "network dimensions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.max_stat_pairs == 0 {
            return Err(Error::InvalidConfig("max_stat_pairs must be positive".into()));
        }
        Ok(())
    }

    pub fn with_ablation(mut self, mode: AblationMode) -> Self {
        self.ablation = mode;
        self
    }

    /// Margin config with the ablation override applied.
    pub fn resolved_margin_config(&self) -> MarginConfig {
        let mut margin = self.margin;
        match self.ablation {
            AblationMode::None => {}
            AblationMode::Static => margin.mode = ScheduleMode::StaticOnly,
            AblationMode::Alpha1Lambda1 => {
                margin.mode = ScheduleMode::AlwaysAdaptive;
                margin.semantic_weight = 1.0;
            }
        }
        margin
    }
}

/// `η / (1 + decay · step)`
pub fn effective_lr(step: u64, cfg: &TrainConfig) -> f64 {
    cfg.learning_rate / (1.0 + cfg.lr_decay * step as f64)
}

/// Velocity buffers for both towers plus the global step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity_v: Gradients,
    pub velocity_t: Gradients,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(net_v: &ProjectionNetwork, net_t: &ProjectionNetwork) -> Self {
        OptimizerState {
            velocity_v: Gradients::zeros_like(net_v),
            velocity_t: Gradients::zeros_like(net_t),
            step: 0,
        }
    }
}

fn nesterov_slice(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads.iter()).zip(velocity.iter_mut()) {
        let vel = momentum * *v - lr * g;
        *v = vel;
        // lookahead form: the parameter steps by μ·v' − η·g
        *p += momentum * vel - lr * g;
    }
}

/// One Nesterov momentum step over every tensor of a network:
/// `v ← μ·v − η·g`, `θ ← θ + μ·v − η·g`.
pub fn nesterov_update(
    net: &mut ProjectionNetwork,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let same_shape = grads.w1.rows() == net.w1.rows()
        && grads.w1.cols() == net.w1.cols()
        && grads.w2.rows() == net.w2.rows()
        && grads.w2.cols() == net.w2.cols()
        && grads.b1.dim() == net.b1.dim()
        && grads.b2.dim() == net.b2.dim();
    if !same_shape {
        return Err(Error::ShapeMismatch {
            context: "nesterov_update",
            expected: format!("{}→{}→{}", net.input_dim(), net.hidden_dim(), net.out_dim()),
            got: format!("{}x{} / {}x{}", grads.w1.rows(), grads.w1.cols(), grads.w2.rows(), grads.w2.cols()),
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient {
            tensor: "projection parameters",
        });
    }
    nesterov_slice(net.w1.as_mut_slice(), grads.w1.as_slice(), velocity.w1.as_mut_slice(), lr, momentum);
    nesterov_slice(net.b1.as_mut_slice(), grads.b1.as_slice(), velocity.b1.as_mut_slice(), lr, momentum);
    nesterov_slice(net.w2.as_mut_slice(), grads.w2.as_slice(), velocity.w2.as_mut_slice(), lr, momentum);
    nesterov_slice(net.b2.as_mut_slice(), grads.b2.as_slice(), velocity.b2.as_mut_slice(), lr, momentum);
    Ok(())
}

/// Everything a batch observer gets to see; margins are already attached to
/// the triplets and the loss total is pre-division by the batch length.
pub struct BatchContext<'a> {
    pub epoch: usize,
    pub batch_index: usize,
    pub batch: &'a [&'a MultimodalInstance],
    pub triplets: &'a [Triplet],
    pub projections: &'a ProjectionTable,
    pub total_loss: f64,
    pub active_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub alpha: f64,
    pub mean_margin: f64,
    /// Wall-clock epoch time. Zeroed in the exported history unless
    /// `record_timing` is set; observers always see the measured value.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_metric,alpha,mean_margin,seconds")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_metric, e.alpha, e.mean_margin, e.seconds
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Callbacks into the training loop; all methods default to no-ops.
pub trait TrainObserver {
    fn on_batch(&mut self, _ctx: &BatchContext<'_>) {}
    fn on_epoch(&mut self, _stats: &EpochStats) {}
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug)]
pub struct TrainOutput {
    pub net_v: ProjectionNetwork,
    pub net_t: ProjectionNetwork,
    pub history: TrainingHistory,
    pub trace: MarginTrace,
    /// The distance statistics the semantic margin was normalized with
    /// (absent when no epochs ran).
    pub stats: Option<DistanceStats>,
}

pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with_observer(ds, cfg, &mut NoopObserver)
}

pub fn train_with_observer(
    ds: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutput> {
    cfg.validate()?;
    ds.validate()?;
    let margin_cfg = cfg.resolved_margin_config();

    let master = Rng::from_seed(cfg.seed);
    let mut seeder = master.substream(STREAM_INIT);
    let net_seed_v = seeder.next_u64();
    let net_seed_t = seeder.next_u64();
    let stats_seed = seeder.next_u64();

    let mut net_v =
        ProjectionNetwork::init(ds.d_v, cfg.hidden_dim, cfg.out_dim, cfg.dropout_p, net_seed_v)?;
    let mut net_t =
        ProjectionNetwork::init(ds.d_t, cfg.hidden_dim, cfg.out_dim, cfg.dropout_p, net_seed_t)?;

    let n_epochs = margin_cfg.total_epochs;
    if n_epochs == 0 {
        return Ok(TrainOutput {
            net_v,
            net_t,
            history: TrainingHistory::default(),
            trace: MarginTrace::new(),
            stats: None,
        });
    }

    let train_indices = ds.split_indices(Split::Train);
    let val_indices = ds.split_indices(Split::Validation);
    if train_indices.is_empty() {
        return Err(Error::InsufficientData("training split is empty".into()));
    }
    if val_indices.is_empty() {
        return Err(Error::InsufficientData("validation split is empty".into()));
    }

    let stats = compute_distance_stats(ds, cfg.max_stat_pairs, stats_seed)?;

    let mut shuffle_rng = master.substream(STREAM_SHUFFLE);
    let mut triplet_rng = master.substream(STREAM_TRIPLET);
    let mut dropout_rng = master.substream(STREAM_DROPOUT);
    let mut val_rng = master.substream(STREAM_VALIDATION);

    let mut optimizer = OptimizerState::new(&net_v, &net_t);
    let mut history = TrainingHistory::default();
    let mut trace = MarginTrace::new();
    let mut best: Option<(usize, f64, ProjectionNetwork, ProjectionNetwork)> = None;

    for epoch in 1..=n_epochs {
        let epoch_start = Instant::now();
        let table = compute_centroids(&net_v, &net_t, ds, epoch)?;
        let alpha = margin_cfg.alpha(epoch);
        trace.begin_epoch(epoch, alpha);

        let mut order = train_indices.clone();
        shuffle_rng.shuffle(&mut order);

        let mut epoch_loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&MultimodalInstance> =
                chunk.iter().map(|&i| &ds.instances[i]).collect();

            let mut projections = ProjectionTable::with_capacity(batch.len() * 2);
            let mut traces = Vec::with_capacity(batch.len());
            for inst in &batch {
                let tv = net_v.forward(&inst.visual, Mode::Train, &mut dropout_rng)?;
                let tt = net_t.forward(&inst.textual, Mode::Train, &mut dropout_rng)?;
                projections.insert((inst.id, Modality::Visual), tv.output.clone());
                projections.insert((inst.id, Modality::Textual), tt.output.clone());
                traces.push((tv, tt));
            }

            let mut triplets = sample_triplets(&batch, cfg.n_neg, &mut triplet_rng);
            let by_id: HashMap<usize, &MultimodalInstance> =
                batch.iter().map(|inst| (inst.id, *inst)).collect();
            for t in &mut triplets {
                let anchor = by_id[&t.anchor_id];
                let negative = by_id[&t.negative_id];
                t.margin = scheduled_margin(anchor, negative, epoch, &table, &stats, &margin_cfg)?;
                trace.record(epoch, t.anchor_category, t.negative_category, t.margin);
            }

            let batch_loss = batch_loss_and_grads(&triplets, &projections)?;
            let batch_len = batch.len() as f64;
            let normalized_loss = batch_loss.total / batch_len;
            if !normalized_loss.is_finite() {
                return Err(Error::DivergenceDetected {
                    epoch,
                    message: format!("batch loss is {}", batch_loss.total),
                });
            }
            epoch_loss_sum += normalized_loss;

            observer.on_batch(&BatchContext {
                epoch,
                batch_index: n_batches,
                batch: &batch,
                triplets: &triplets,
                projections: &projections,
                total_loss: batch_loss.total,
                active_count: batch_loss.active_count,
            });
            n_batches += 1;

            let mut grad_v = Gradients::zeros_like(&net_v);
            let mut grad_t = Gradients::zeros_like(&net_t);
            let inv_b = 1.0 / batch_len;
            for (i, inst) in batch.iter().enumerate() {
                if let Some(g) = batch_loss.grads.get(&(inst.id, Modality::Visual)) {
                    let mut upstream = g.clone();
                    upstream.scale(inv_b);
                    net_v.backward_accumulate(&traces[i].0, &upstream, &mut grad_v)?;
                }
                if let Some(g) = batch_loss.grads.get(&(inst.id, Modality::Textual)) {
                    let mut upstream = g.clone();
                    upstream.scale(inv_b);
                    net_t.backward_accumulate(&traces[i].1, &upstream, &mut grad_t)?;
                }
            }

            let lr = effective_lr(optimizer.step, cfg);
            nesterov_update(&mut net_v, &grad_v, &mut optimizer.velocity_v, lr, cfg.momentum)?;
            nesterov_update(&mut net_t, &grad_t, &mut optimizer.velocity_t, lr, cfg.momentum)?;
            optimizer.step += 1;
        }

        let train_loss = epoch_loss_sum / n_batches as f64;
        let val_metric = match cfg.selection {
            SelectionMetric::ValidationMap => {
                evaluate(&net_v, &net_t, ds, Split::Validation)?.map_avg
            }
            SelectionMetric::StaticMarginLoss => validation_static_loss(
                &net_v,
                &net_t,
                ds,
                &val_indices,
                margin_cfg.static_margin,
                cfg.n_neg,
                &mut val_rng,
            )?,
        };

        let improved = match (&best, cfg.selection) {
            (None, _) => true,
            (Some((_, best_val, _, _)), SelectionMetric::ValidationMap) => val_metric > *best_val,
            (Some((_, best_val, _, _)), SelectionMetric::StaticMarginLoss) => {
                val_metric < *best_val
            }
        };
        if improved {
            best = Some((epoch, val_metric, net_v.clone(), net_t.clone()));
        }

        let elapsed = epoch_start.elapsed().as_secs_f64();
        let stats_entry = EpochStats {
            epoch,
            train_loss,
            val_metric,
            alpha,
            mean_margin: trace.epoch_mean(epoch).unwrap_or(f64::NAN),
            seconds: elapsed,
        };
        observer.on_epoch(&stats_entry);
        history.epochs.push(EpochStats {
            seconds: if cfg.record_timing { elapsed } else { 0.0 },
            ..stats_entry
        });
    }

    let (best_epoch, _, best_v, best_t) = best.expect("n_epochs >= 1 always selects a best epoch");
    history.best_epoch = Some(best_epoch);
    Ok(TrainOutput {
        net_v: best_v,
        net_t: best_t,
        history,
        trace,
        stats: Some(stats),
    })
}

/// Hinge loss on the validation split under the static margin, projections in
/// eval mode, normalized by the split size.
fn validation_static_loss(
    net_v: &ProjectionNetwork,
    net_t: &ProjectionNetwork,
    ds: &Dataset,
    val_indices: &[usize],
    static_margin: f64,
    n_neg: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let batch: Vec<&MultimodalInstance> = val_indices.iter().map(|&i| &ds.instances[i]).collect();
    let mut projections = ProjectionTable::with_capacity(batch.len() * 2);
    for inst in &batch {
        projections.insert((inst.id, Modality::Visual), net_v.project(&inst.visual)?);
        projections.insert((inst.id, Modality::Textual), net_t.project(&inst.textual)?);
    }
    let mut triplets = sample_triplets(&batch, n_neg, rng);
    for t in &mut triplets {
        t.margin = static_margin;
    }
    let loss = batch_loss_and_grads(&triplets, &projections)?;
    Ok(loss.total / batch.len() as f64)
}
