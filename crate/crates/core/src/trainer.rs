//! Parameter initialization and the dual-step training schedule.
//!
//! Each batch is optimized twice: first the joint loss
//! `L = L_D + L_s + L_p + l2` over all parameters, then the seizure loss
//! alone, with a second independent Adam instance, over exactly the
//! parameters the seizure loss depends on (the priority step). A gradient
//! step on `L_s` has exact-zero gradient outside that set, so the scoping
//! is mathematically equivalent to stepping everything and cheaper.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EegWindow;
use crate::graph::{Graph, NodeId};
use crate::model::{
    forward_seizure_only, forward_window, l2_penalty, LossBundle, ModelConfig, ModelParameters,
};
use crate::nn::Mode;
use crate::optim::AdamState;
use crate::tensor::TensorError;

/// When the extra seizure-loss step runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraStepSchedule {
    /// Joint step then seizure step on every batch (default).
    PerBatch,
    /// All joint steps, then one seizure pass over the epoch's batches.
    PerEpoch,
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_coeff: f64,
    pub keep_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub w1: f64,
    pub w2: f64,
    pub extra_step: ExtraStepSchedule,
    /// Snapshot patient-branch tensors around every seizure step and fail
    /// loudly if any bit moves. Costs a copy per step; off by default.
    pub verify_branch_separation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 250,
            learning_rate: 1e-4,
            l2_coeff: 1e-4,
            keep_rate: 0.8,
            batch_size: 64,
            seed: 0,
            w1: 0.5,
            w2: 0.5,
            extra_step: ExtraStepSchedule::PerBatch,
            verify_branch_separation: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "keep rate must be in (0, 1], got {}",
                self.keep_rate
            )));
        }
        if (self.w1 + self.w2 - 1.0).abs() > 1e-12 {
            return Err(TrainError::InvalidConfig(format!(
                "w1 + w2 must equal 1, got {} + {}",
                self.w1, self.w2
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One completed epoch. `wall_seconds` is excluded from the structured
/// export so logs stay byte-reproducible; timings go to a separate file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub reconstruction: f64,
    pub seizure: f64,
    pub patient: f64,
    pub l2: f64,
    pub total: f64,
    pub train_accuracy: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Per-epoch records of a full run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// Line-delimited JSON, one record per epoch, deterministic bytes.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record).expect("epoch records serialize"));
            out.push('\n');
        }
        out
    }

    /// Wall-clock seconds per epoch, kept apart from the deterministic log.
    pub fn timings_text(&self) -> String {
        let mut out = String::from("epoch,wall_seconds\n");
        for record in &self.epochs {
            out.push_str(&format!("{},{:.3}\n", record.epoch, record.wall_seconds));
        }
        out
    }
}

#[derive(Debug)]
pub enum TrainError {
    EmptyDataset,
    /// A training window's subject is missing from the fold's class map.
    UnknownSubject { subject: u32 },
    InvalidConfig(String),
    /// NaN/Inf during training, with the batch that produced it.
    NumericFault { batch: usize, source: TensorError },
    Tensor(TensorError),
    BranchSeparationViolated { epoch: usize, batch: usize },
    Callback(String),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptyDataset => write!(f, "training set is empty"),
            TrainError::UnknownSubject { subject } => {
                write!(f, "window subject {subject} is not in the training subject set")
            }
            TrainError::InvalidConfig(msg) => write!(f, "invalid training config: {msg}"),
            TrainError::NumericFault { batch, source } => {
                write!(f, "numeric fault in batch {batch}: {source}")
            }
            TrainError::Tensor(e) => write!(f, "{e}"),
            TrainError::BranchSeparationViolated { epoch, batch } => write!(
                f,
                "seizure step moved patient-branch parameters (epoch {epoch}, batch {batch})"
            ),
            TrainError::Callback(msg) => write!(f, "epoch callback failed: {msg}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}

/// Glorot-uniform weights and zero biases, fully determined by the seed.
pub fn init_params(config: ModelConfig, seed: u64) -> ModelParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParameters::init(config, &mut rng)
}

/// Mean of a list of scalar nodes.
fn mean_nodes(graph: &mut Graph, ids: &[NodeId]) -> Result<NodeId, TensorError> {
    let mut acc = ids[0];
    for id in &ids[1..] {
        acc = graph.add(acc, *id)?;
    }
    graph.scale(acc, 1.0 / ids.len() as f64)
}

struct BatchOutcome {
    bundle: LossBundle,
    correct: usize,
}

/// Forward all branches for one batch, take one joint Adam step.
fn joint_step(
    params: &mut ModelParameters,
    batch: &[&EegWindow],
    class_map: &BTreeMap<u32, usize>,
    config: &TrainConfig,
    optimizer: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<BatchOutcome, TensorError> {
    let mut graph = Graph::new();
    let bound = params.bind(&mut graph);
    let mut rec_losses = Vec::with_capacity(batch.len());
    let mut seiz_losses = Vec::with_capacity(batch.len());
    let mut pat_losses = Vec::with_capacity(batch.len());
    let mut correct = 0usize;
    for window in batch {
        let class = class_map[&window.subject];
        let fwd = forward_window(
            &mut graph,
            &bound,
            window,
            class,
            Mode::Train,
            config.keep_rate,
            config.w1,
            config.w2,
            rng,
        )?;
        let prob = graph.value(fwd.seizure_prob).scalar_value();
        if (prob >= 0.5) == (window.label == 1) {
            correct += 1;
        }
        rec_losses.push(fwd.reconstruction_loss);
        seiz_losses.push(fwd.seizure_loss);
        pat_losses.push(fwd.patient_loss);
    }
    let ld = mean_nodes(&mut graph, &rec_losses)?;
    let ls = mean_nodes(&mut graph, &seiz_losses)?;
    let lp = mean_nodes(&mut graph, &pat_losses)?;
    let l2 = l2_penalty(&mut graph, &bound, config.l2_coeff)?;
    let partial = graph.add(ld, ls)?;
    let partial = graph.add(partial, lp)?;
    let total = graph.add(partial, l2)?;

    let bundle = LossBundle {
        reconstruction: graph.value(ld).scalar_value(),
        seizure: graph.value(ls).scalar_value(),
        patient: graph.value(lp).scalar_value(),
        l2: graph.value(l2).scalar_value(),
        total: graph.value(total).scalar_value(),
    };

    let grads = graph.backward(total)?;
    let entries = bound.entries().to_vec();
    let mut named = params.named_mut();
    debug_assert_eq!(named.len(), entries.len());
    let mut step_entries: Vec<(&str, &mut crate::tensor::Tensor, &crate::tensor::Tensor)> =
        Vec::with_capacity(entries.len());
    for ((name, tensor), (bound_name, node)) in named.iter_mut().zip(&entries) {
        debug_assert_eq!(name, bound_name);
        step_entries.push((name.as_str(), tensor, &grads[node]));
    }
    optimizer.step(&mut step_entries)?;
    Ok(BatchOutcome { bundle, correct })
}

/// Re-forward the seizure path and take the priority step on `L_s`.
fn seizure_step(
    params: &mut ModelParameters,
    batch: &[&EegWindow],
    config: &TrainConfig,
    optimizer: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<(), TensorError> {
    let mut graph = Graph::new();
    let bound = params.bind_seizure_path(&mut graph);
    let mut losses = Vec::with_capacity(batch.len());
    for window in batch {
        let (_, loss) =
            forward_seizure_only(&mut graph, &bound, window, Mode::Train, config.keep_rate, rng)?;
        losses.push(loss);
    }
    let ls = mean_nodes(&mut graph, &losses)?;
    let grads = graph.backward(ls)?;
    let entries = bound.entries().to_vec();
    let mut named = params.named_mut();
    named.retain(|(name, _)| ModelParameters::on_seizure_path(name));
    debug_assert_eq!(named.len(), entries.len());
    let mut step_entries: Vec<(&str, &mut crate::tensor::Tensor, &crate::tensor::Tensor)> =
        Vec::with_capacity(entries.len());
    for ((name, tensor), (bound_name, node)) in named.iter_mut().zip(&entries) {
        debug_assert_eq!(name, bound_name);
        step_entries.push((name.as_str(), tensor, &grads[node]));
    }
    optimizer.step(&mut step_entries)
}

fn off_path_snapshot(params: &ModelParameters) -> Vec<(String, crate::tensor::Tensor)> {
    params
        .named()
        .into_iter()
        .filter(|(name, _)| !ModelParameters::on_seizure_path(name))
        .map(|(name, t)| (name, t.clone()))
        .collect()
}

fn off_path_unchanged(params: &ModelParameters, snapshot: &[(String, crate::tensor::Tensor)]) -> bool {
    let current: Vec<(String, &crate::tensor::Tensor)> = params
        .named()
        .into_iter()
        .filter(|(name, _)| !ModelParameters::on_seizure_path(name))
        .collect();
    current
        .iter()
        .zip(snapshot)
        .all(|((n1, t1), (n2, t2))| n1 == n2 && *t1 == t2)
}

/// One pass over the epoch's batches under the configured schedule.
#[allow(clippy::too_many_arguments)]
fn train_epoch(
    params: &mut ModelParameters,
    windows: &[EegWindow],
    order: &[usize],
    class_map: &BTreeMap<u32, usize>,
    config: &TrainConfig,
    opt_joint: &mut AdamState,
    opt_seizure: &mut AdamState,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<EpochRecord, TrainError> {
    let started = Instant::now();
    let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
    let mut sums = LossBundle {
        reconstruction: 0.0,
        seizure: 0.0,
        patient: 0.0,
        l2: 0.0,
        total: 0.0,
    };
    let mut correct = 0usize;

    let run_seizure = |params: &mut ModelParameters,
                       batch: &[&EegWindow],
                       opt: &mut AdamState,
                       rng: &mut ChaCha8Rng,
                       batch_idx: usize|
     -> Result<(), TrainError> {
        let snapshot = config.verify_branch_separation.then(|| off_path_snapshot(params));
        seizure_step(params, batch, config, opt, rng).map_err(|source| {
            TrainError::NumericFault {
                batch: batch_idx,
                source,
            }
        })?;
        if let Some(snapshot) = snapshot {
            if !off_path_unchanged(params, &snapshot) {
                return Err(TrainError::BranchSeparationViolated {
                    epoch,
                    batch: batch_idx,
                });
            }
        }
        Ok(())
    };

    for (batch_idx, batch_ids) in batches.iter().enumerate() {
        let batch: Vec<&EegWindow> = batch_ids.iter().map(|&i| &windows[i]).collect();
        let outcome = joint_step(params, &batch, class_map, config, opt_joint, rng).map_err(
            |source| TrainError::NumericFault {
                batch: batch_idx,
                source,
            },
        )?;
        sums.reconstruction += outcome.bundle.reconstruction;
        sums.seizure += outcome.bundle.seizure;
        sums.patient += outcome.bundle.patient;
        sums.l2 += outcome.bundle.l2;
        sums.total += outcome.bundle.total;
        correct += outcome.correct;
        if config.extra_step == ExtraStepSchedule::PerBatch {
            run_seizure(params, &batch, opt_seizure, rng, batch_idx)?;
        }
    }
    if config.extra_step == ExtraStepSchedule::PerEpoch {
        for (batch_idx, batch_ids) in batches.iter().enumerate() {
            let batch: Vec<&EegWindow> = batch_ids.iter().map(|&i| &windows[i]).collect();
            run_seizure(params, &batch, opt_seizure, rng, batch_idx)?;
        }
    }

    let n = batches.len() as f64;
    Ok(EpochRecord {
        epoch,
        reconstruction: sums.reconstruction / n,
        seizure: sums.seizure / n,
        patient: sums.patient / n,
        l2: sums.l2 / n,
        total: sums.total / n,
        train_accuracy: correct as f64 / windows.len() as f64,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Train on the given windows; the class map names each training subject's
/// dense patient class. Fully deterministic given (seed, data, config).
pub fn fit(
    windows: &[EegWindow],
    class_map: &BTreeMap<u32, usize>,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<(ModelParameters, TrainLog), TrainError> {
    fit_with(windows, class_map, model_config, config, |_, _, _| Ok(()))
}

/// [`fit`] with a per-epoch callback (checkpointing, progress reporting).
pub fn fit_with(
    windows: &[EegWindow],
    class_map: &BTreeMap<u32, usize>,
    model_config: ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &ModelParameters, &EpochRecord) -> Result<(), String>,
) -> Result<(ModelParameters, TrainLog), TrainError> {
    config.validate()?;
    if windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for window in windows {
        match class_map.get(&window.subject) {
            None => return Err(TrainError::UnknownSubject { subject: window.subject }),
            Some(&class) if class >= model_config.num_patients => {
                return Err(TrainError::InvalidConfig(format!(
                    "class {class} out of range for C = {}",
                    model_config.num_patients
                )))
            }
            Some(_) => {}
        }
    }

    let mut params = init_params(model_config, config.seed);
    // Separate stream for shuffling and dropout so initialization stays
    // reproducible on its own.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt_joint = AdamState::new(config.learning_rate);
    let mut opt_seizure = AdamState::new(config.learning_rate);

    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let record = train_epoch(
            &mut params,
            windows,
            &order,
            class_map,
            config,
            &mut opt_joint,
            &mut opt_seizure,
            &mut rng,
            epoch,
        )?;
        on_epoch(epoch, &params, &record).map_err(TrainError::Callback)?;
        log.epochs.push(record);
    }
    Ok((params, log))
}
