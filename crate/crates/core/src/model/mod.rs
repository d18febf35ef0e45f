//! The three-branch network: per-branch encoder/decoder decomposition,
//! attention-based seizure classifier, patient classifier, and the loss
//! terms that tie them together.
//!
//! Every forward pass is built on a fresh [`Graph`]; [`ModelParameters`]
//! hold the tensors between passes and are bound into a graph as trainable
//! leaves. The seizure and patient branches share no parameters; they
//! couple only through the input window and the summed loss, so the
//! priority step on the seizure loss provably cannot move patient weights.

pub mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::EegWindow;
use crate::graph::{Graph, NodeId};
use crate::nn::{
    bce_loss, ce_loss, conv2d_same, dense_affine, dropout_mask, maxpool2d_same, mse_loss,
    transposed_conv2d, Activation, ConvSpec, Mode, PoolSpec, UpsampleRows,
};
use crate::tensor::{Tensor, TensorError};

/// One convolution + pooling stage of a classifier trunk. Convolution
/// strides are always `[1, 1]`; pooling does the downsampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrunkStage {
    pub filters: usize,
    pub kernel: [usize; 2],
    pub pool_window: [usize; 2],
    pub pool_stride: [usize; 2],
}

/// Architecture of the full model. `new` gives the clinical configuration:
/// 250x22 windows, 4 decomposition filters, a 16/32/64/128 trunk and
/// 300-unit hidden layers; tests shrink the fields for speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Time steps per window (M).
    pub window_len: usize,
    /// EEG channels (N); also the width of the attention vector and of the
    /// classifiers' final feature layer.
    pub channels: usize,
    pub decomp: ConvSpec,
    pub decomp_pool: PoolSpec,
    pub trunk: Vec<TrunkStage>,
    pub fc_hidden: usize,
    /// Patient classes C (training subjects of the fold).
    pub num_patients: usize,
}

impl ModelConfig {
    pub fn new(num_patients: usize) -> Self {
        assert!(num_patients >= 2, "patient classifier needs C >= 2");
        ModelConfig {
            window_len: 250,
            channels: 22,
            decomp: ConvSpec::new(4, [3, 3], [2, 2]),
            decomp_pool: PoolSpec::new([2, 1], [2, 1]),
            trunk: vec![
                TrunkStage {
                    filters: 16,
                    kernel: [3, 3],
                    pool_window: [2, 2],
                    pool_stride: [2, 2],
                },
                TrunkStage {
                    filters: 32,
                    kernel: [3, 3],
                    pool_window: [2, 2],
                    pool_stride: [2, 2],
                },
                TrunkStage {
                    filters: 64,
                    kernel: [2, 2],
                    pool_window: [2, 2],
                    pool_stride: [2, 2],
                },
                TrunkStage {
                    filters: 128,
                    kernel: [2, 2],
                    pool_window: [2, 1],
                    pool_stride: [2, 1],
                },
            ],
            fc_hidden: 300,
            num_patients,
        }
    }

    /// Latent shape `[J, K, H]` after the decomposition conv + pool.
    pub fn latent_shape(&self) -> [usize; 3] {
        let h1 = self.window_len.div_ceil(self.decomp.stride[0]);
        let w1 = self.channels.div_ceil(self.decomp.stride[1]);
        [
            h1.div_ceil(self.decomp_pool.stride[0]),
            w1.div_ceil(self.decomp_pool.stride[1]),
            self.decomp.filters,
        ]
    }

    /// Feature-map shape after each trunk stage, starting from the latent.
    pub fn trunk_chain(&self) -> Vec<[usize; 3]> {
        let mut shape = self.latent_shape();
        let mut chain = Vec::with_capacity(self.trunk.len());
        for stage in &self.trunk {
            shape = [
                shape[0].div_ceil(stage.pool_stride[0]),
                shape[1].div_ceil(stage.pool_stride[1]),
                stage.filters,
            ];
            chain.push(shape);
        }
        chain
    }

    /// Flattened feature length entering the dense layers.
    pub fn flatten_len(&self) -> usize {
        let last = *self.trunk_chain().last().expect("trunk has stages");
        last[0] * last[1] * last[2]
    }

    /// Shape of the attention weight map: one time-kernel column per
    /// channel, so attention unit j genuinely reads channel j.
    pub fn attention_weight_shape(&self) -> [usize; 2] {
        [self.window_len, self.channels]
    }
}

/// Encoder/decoder weights of one decomposition branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCodec {
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    pub dec_w: Tensor,
    pub dec_b: Tensor,
}

/// Trunk and dense weights of one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub stages: Vec<(Tensor, Tensor)>,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

/// All trainable weights and biases of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub seizure_codec: BranchCodec,
    pub patient_codec: BranchCodec,
    pub seizure_head: ClassifierParams,
    /// Scalar bias added to the attention dot product before the sigmoid.
    /// The dot of two sigmoid vectors is strictly positive, so without a
    /// centering term the predicted probability could never fall below
    /// one half and the hard label would be constant.
    pub seizure_out_bias: Tensor,
    pub attention_w: Tensor,
    pub attention_b: Tensor,
    pub patient_head: ClassifierParams,
}

fn glorot(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data)
}

fn init_codec(config: &ModelConfig, rng: &mut ChaCha8Rng) -> BranchCodec {
    let [kh, kw] = config.decomp.kernel;
    let filters = config.decomp.filters;
    BranchCodec {
        enc_w: glorot(vec![kh, kw, 1, filters], kh * kw, kh * kw * filters, rng),
        enc_b: Tensor::zeros(vec![filters]),
        // Decoder maps `filters` channels back to one.
        dec_w: glorot(vec![kh, kw, 1, filters], kh * kw * filters, kh * kw, rng),
        dec_b: Tensor::zeros(vec![1]),
    }
}

fn init_classifier(
    config: &ModelConfig,
    final_width: usize,
    rng: &mut ChaCha8Rng,
) -> ClassifierParams {
    let mut c_in = config.latent_shape()[2];
    let mut stages = Vec::with_capacity(config.trunk.len());
    for stage in &config.trunk {
        let [kh, kw] = stage.kernel;
        let w = glorot(
            vec![kh, kw, c_in, stage.filters],
            kh * kw * c_in,
            kh * kw * stage.filters,
            rng,
        );
        stages.push((w, Tensor::zeros(vec![stage.filters])));
        c_in = stage.filters;
    }
    let flat = config.flatten_len();
    ClassifierParams {
        stages,
        fc1_w: glorot(vec![flat, config.fc_hidden], flat, config.fc_hidden, rng),
        fc1_b: Tensor::zeros(vec![config.fc_hidden]),
        fc2_w: glorot(
            vec![config.fc_hidden, final_width],
            config.fc_hidden,
            final_width,
            rng,
        ),
        fc2_b: Tensor::zeros(vec![final_width]),
    }
}

impl ModelParameters {
    /// Glorot-uniform weights, zero biases, fully determined by the rng.
    pub fn init(config: ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let [att_rows, att_cols] = config.attention_weight_shape();
        let channels = config.channels;
        let seizure_codec = init_codec(&config, rng);
        let patient_codec = init_codec(&config, rng);
        let seizure_head = init_classifier(&config, channels, rng);
        // Each column is a length-M kernel over its own channel.
        let attention_w = glorot(vec![att_rows, att_cols], att_rows, 1, rng);
        let attention_b = Tensor::zeros(vec![channels]);
        let patient_head = init_classifier(&config, config.num_patients, rng);
        ModelParameters {
            config,
            seizure_codec,
            patient_codec,
            seizure_head,
            seizure_out_bias: Tensor::zeros(vec![1]),
            attention_w,
            attention_b,
            patient_head,
        }
    }

    /// All-zero parameters of the right shapes (checkpoint loading target).
    pub fn zeros(config: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = Self::init(config, &mut rng);
        for (_, t) in params.named_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        params
    }

    /// Canonical (name, tensor) listing; the order is the checkpoint and
    /// optimizer order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        let codecs = [("s", &self.seizure_codec), ("p", &self.patient_codec)];
        for (tag, codec) in codecs {
            out.push((format!("enc_{tag}.w"), &codec.enc_w));
            out.push((format!("enc_{tag}.b"), &codec.enc_b));
            out.push((format!("dec_{tag}.w"), &codec.dec_w));
            out.push((format!("dec_{tag}.b"), &codec.dec_b));
        }
        let heads = [("seiz", &self.seizure_head), ("pat", &self.patient_head)];
        for (tag, head) in heads {
            for (i, (w, b)) in head.stages.iter().enumerate() {
                out.push((format!("{tag}.c{i}.w"), w));
                out.push((format!("{tag}.c{i}.b"), b));
            }
            out.push((format!("{tag}.fc1.w"), &head.fc1_w));
            out.push((format!("{tag}.fc1.b"), &head.fc1_b));
            out.push((format!("{tag}.fc2.w"), &head.fc2_w));
            out.push((format!("{tag}.fc2.b"), &head.fc2_b));
        }
        out.push(("seiz.out.b".to_string(), &self.seizure_out_bias));
        out.push(("att.w".to_string(), &self.attention_w));
        out.push(("att.b".to_string(), &self.attention_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        let codecs = [("s", &mut self.seizure_codec), ("p", &mut self.patient_codec)];
        for (tag, codec) in codecs {
            out.push((format!("enc_{tag}.w"), &mut codec.enc_w));
            out.push((format!("enc_{tag}.b"), &mut codec.enc_b));
            out.push((format!("dec_{tag}.w"), &mut codec.dec_w));
            out.push((format!("dec_{tag}.b"), &mut codec.dec_b));
        }
        let heads = [
            ("seiz", &mut self.seizure_head),
            ("pat", &mut self.patient_head),
        ];
        for (tag, head) in heads {
            for (i, (w, b)) in head.stages.iter_mut().enumerate() {
                out.push((format!("{tag}.c{i}.w"), w));
                out.push((format!("{tag}.c{i}.b"), b));
            }
            out.push((format!("{tag}.fc1.w"), &mut head.fc1_w));
            out.push((format!("{tag}.fc1.b"), &mut head.fc1_b));
            out.push((format!("{tag}.fc2.w"), &mut head.fc2_w));
            out.push((format!("{tag}.fc2.b"), &mut head.fc2_b));
        }
        out.push(("seiz.out.b".to_string(), &mut self.seizure_out_bias));
        out.push(("att.w".to_string(), &mut self.attention_w));
        out.push(("att.b".to_string(), &mut self.attention_b));
        out
    }

    /// True for parameters the seizure loss depends on: the seizure
    /// encoder, the seizure classifier and the attention map.
    pub fn on_seizure_path(name: &str) -> bool {
        name.starts_with("enc_s.") || name.starts_with("seiz.") || name.starts_with("att.")
    }

    /// True for weight tensors (biases are excluded from the regularizer).
    pub fn is_weight(name: &str) -> bool {
        name.ends_with(".w")
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Insert every parameter into a graph as a trainable leaf.
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        self.bind_filtered(graph, |_| true)
    }

    /// Insert only the seizure-path parameters.
    pub fn bind_seizure_path(&self, graph: &mut Graph) -> BoundParams {
        self.bind_filtered(graph, Self::on_seizure_path)
    }

    fn bind_filtered(&self, graph: &mut Graph, keep: impl Fn(&str) -> bool) -> BoundParams {
        let mut ids = Vec::new();
        for (name, tensor) in self.named() {
            if keep(&name) {
                let id = graph.parameter(tensor.clone());
                ids.push((name, id));
            }
        }
        BoundParams {
            config: self.config.clone(),
            ids,
        }
    }
}

/// Parameter nodes of one graph, in canonical order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub config: ModelConfig,
    ids: Vec<(String, NodeId)>,
}

impl BoundParams {
    pub fn node(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound in this graph"))
            .1
    }

    pub fn entries(&self) -> &[(String, NodeId)] {
        &self.ids
    }
}

/// Latent representations of both branches, each `[J, K, H]`.
#[derive(Debug, Clone, Copy)]
pub struct LatentPair {
    pub seizure: NodeId,
    pub patient: NodeId,
}

/// Decomposed components, each `[M, N]` like the input window.
#[derive(Debug, Clone, Copy)]
pub struct DecomposedPair {
    pub seizure: NodeId,
    pub patient: NodeId,
}

/// The four loss terms and their sum, as plain values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub reconstruction: f64,
    pub seizure: f64,
    pub patient: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Seizure,
    Patient,
}

fn encode_branch(
    graph: &mut Graph,
    params: &BoundParams,
    window: NodeId,
    branch: Branch,
) -> Result<NodeId, TensorError> {
    let cfg = &params.config;
    let tag = match branch {
        Branch::Seizure => "s",
        Branch::Patient => "p",
    };
    let volume = graph.reshape(window, vec![cfg.window_len, cfg.channels, 1])?;
    let conv = conv2d_same(
        graph,
        volume,
        &cfg.decomp,
        params.node(&format!("enc_{tag}.w")),
        params.node(&format!("enc_{tag}.b")),
    )?;
    let act = graph.relu(conv)?;
    maxpool2d_same(graph, act, &cfg.decomp_pool)
}

/// Map a window to its seizure and patient latents.
pub fn encode(
    graph: &mut Graph,
    params: &BoundParams,
    window: NodeId,
) -> Result<LatentPair, TensorError> {
    Ok(LatentPair {
        seizure: encode_branch(graph, params, window, Branch::Seizure)?,
        patient: encode_branch(graph, params, window, Branch::Patient)?,
    })
}

/// Seizure-branch encoding only, for the priority pass on the seizure loss.
pub fn encode_seizure(
    graph: &mut Graph,
    params: &BoundParams,
    window: NodeId,
) -> Result<NodeId, TensorError> {
    encode_branch(graph, params, window, Branch::Seizure)
}

fn decode_branch(
    graph: &mut Graph,
    params: &BoundParams,
    latent: NodeId,
    branch: Branch,
) -> Result<NodeId, TensorError> {
    let cfg = &params.config;
    let tag = match branch {
        Branch::Seizure => "s",
        Branch::Patient => "p",
    };
    // Un-pool back to the pre-pooling resolution, then transpose the
    // encoder conv to land exactly on the window shape.
    let pre_pool_rows = cfg.window_len.div_ceil(cfg.decomp.stride[0]);
    let up = graph.apply(
        UpsampleRows {
            factor: cfg.decomp_pool.stride[0],
            target_rows: pre_pool_rows,
        },
        &[latent],
    )?;
    let deconv = transposed_conv2d(
        graph,
        up,
        cfg.decomp.stride,
        [cfg.window_len, cfg.channels],
        params.node(&format!("dec_{tag}.w")),
        params.node(&format!("dec_{tag}.b")),
    )?;
    let act = graph.relu(deconv)?;
    graph.reshape(act, vec![cfg.window_len, cfg.channels])
}

/// Reconstruct both components from their latents.
pub fn decode(
    graph: &mut Graph,
    params: &BoundParams,
    latents: &LatentPair,
) -> Result<DecomposedPair, TensorError> {
    Ok(DecomposedPair {
        seizure: decode_branch(graph, params, latents.seizure, Branch::Seizure)?,
        patient: decode_branch(graph, params, latents.patient, Branch::Patient)?,
    })
}

/// Weighted recombination and its mean-square reconstruction loss.
pub fn reconstruct_and_loss(
    graph: &mut Graph,
    window: NodeId,
    decomposed: &DecomposedPair,
    w1: f64,
    w2: f64,
) -> Result<(NodeId, NodeId), TensorError> {
    let ws = graph.scale(decomposed.seizure, w1)?;
    let wp = graph.scale(decomposed.patient, w2)?;
    let recon = graph.add(ws, wp)?;
    let loss = mse_loss(graph, window, recon)?;
    Ok((recon, loss))
}

/// Per-channel attention in (0, 1), learned directly from the raw window:
/// `a_tt[j] = sigmoid(w_a[:, j] . E[:, j] + b_a[j])`. Column j only ever
/// sees channel j, so the vector reads as a channel topography.
pub fn attention_weights(
    graph: &mut Graph,
    params: &BoundParams,
    window: NodeId,
) -> Result<NodeId, TensorError> {
    let cfg = &params.config;
    let weighted = graph.mul(window, params.node("att.w"))?;
    // Column sums via a ones row-vector product.
    let ones = graph.constant(Tensor::ones(vec![1, cfg.window_len]));
    let sums = graph.matmul(ones, weighted)?;
    let flat = graph.reshape(sums, vec![cfg.channels])?;
    let scores = graph.add_bias(flat, params.node("att.b"))?;
    graph.sigmoid(scores)
}

fn classifier_trunk(
    graph: &mut Graph,
    params: &BoundParams,
    tag: &str,
    latent: NodeId,
    mode: Mode,
    keep_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, TensorError> {
    let cfg = &params.config;
    let mut x = latent;
    for (i, stage) in cfg.trunk.iter().enumerate() {
        let spec = ConvSpec::new(stage.filters, stage.kernel, [1, 1]);
        let conv = conv2d_same(
            graph,
            x,
            &spec,
            params.node(&format!("{tag}.c{i}.w")),
            params.node(&format!("{tag}.c{i}.b")),
        )?;
        let act = graph.relu(conv)?;
        x = maxpool2d_same(
            graph,
            act,
            &PoolSpec::new(stage.pool_window, stage.pool_stride),
        )?;
    }
    let flat = graph.flatten(x)?;
    let dropped = dropout_mask(graph, flat, keep_rate, mode, rng)?;
    dense_affine(
        graph,
        dropped,
        params.node(&format!("{tag}.fc1.w")),
        params.node(&format!("{tag}.fc1.b")),
        Activation::Sigmoid,
    )
}

/// Seizure head: trunk -> dense features, dotted with the attention
/// weights; the probability is the sigmoid of that score plus the scalar
/// centering bias (see [`ModelParameters::seizure_out_bias`]).
pub fn seizure_predict(
    graph: &mut Graph,
    params: &BoundParams,
    seizure_latent: NodeId,
    attention: NodeId,
    mode: Mode,
    keep_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(NodeId, NodeId), TensorError> {
    let hidden = classifier_trunk(graph, params, "seiz", seizure_latent, mode, keep_rate, rng)?;
    let features = dense_affine(
        graph,
        hidden,
        params.node("seiz.fc2.w"),
        params.node("seiz.fc2.b"),
        Activation::Sigmoid,
    )?;
    let score = graph.dot(features, attention)?;
    let logit = graph.add(score, params.node("seiz.out.b"))?;
    let prob = graph.sigmoid(logit)?;
    Ok((logit, prob))
}

/// Binary cross-entropy of one predicted probability against a 0/1 label.
pub fn seizure_loss(graph: &mut Graph, prob: NodeId, label: u8) -> Result<NodeId, TensorError> {
    let target = graph.constant(Tensor::scalar(f64::from(label)));
    bce_loss(graph, prob, target)
}

/// Patient head: same trunk architecture with independent parameters,
/// softmax over the C training subjects.
pub fn patient_predict(
    graph: &mut Graph,
    params: &BoundParams,
    patient_latent: NodeId,
    mode: Mode,
    keep_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, TensorError> {
    let hidden = classifier_trunk(graph, params, "pat", patient_latent, mode, keep_rate, rng)?;
    let logits = dense_affine(
        graph,
        hidden,
        params.node("pat.fc2.w"),
        params.node("pat.fc2.b"),
        Activation::None,
    )?;
    graph.softmax(logits)
}

/// Multi-class cross-entropy of a probability vector against a class index.
pub fn patient_loss(
    graph: &mut Graph,
    probs: NodeId,
    class: usize,
) -> Result<NodeId, TensorError> {
    let c = graph.shape(probs)[0];
    assert!(class < c, "class {class} out of range for C = {c}");
    let mut one_hot = vec![0.0; c];
    one_hot[class] = 1.0;
    let target = graph.constant(Tensor::from_vec(one_hot));
    ce_loss(graph, probs, target)
}

/// l2 penalty over the bound weight tensors (biases excluded).
pub fn l2_penalty(
    graph: &mut Graph,
    params: &BoundParams,
    coeff: f64,
) -> Result<NodeId, TensorError> {
    let mut acc: Option<NodeId> = None;
    let weight_ids: Vec<NodeId> = params
        .entries()
        .iter()
        .filter(|(name, _)| ModelParameters::is_weight(name))
        .map(|(_, id)| *id)
        .collect();
    for id in weight_ids {
        let sq = graph.sum_squares(id)?;
        acc = Some(match acc {
            Some(a) => graph.add(a, sq)?,
            None => sq,
        });
    }
    let total = acc.expect("at least one weight tensor");
    graph.scale(total, coeff)
}

/// Everything one training window contributes to the joint loss.
#[derive(Debug, Clone, Copy)]
pub struct WindowForward {
    pub latents: LatentPair,
    pub decomposed: DecomposedPair,
    pub reconstruction: NodeId,
    pub reconstruction_loss: NodeId,
    pub attention: NodeId,
    pub seizure_logit: NodeId,
    pub seizure_prob: NodeId,
    pub seizure_loss: NodeId,
    pub patient_probs: NodeId,
    pub patient_loss: NodeId,
}

/// Run all three branches for one window.
#[allow(clippy::too_many_arguments)]
pub fn forward_window(
    graph: &mut Graph,
    params: &BoundParams,
    window: &EegWindow,
    class: usize,
    mode: Mode,
    keep_rate: f64,
    w1: f64,
    w2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<WindowForward, TensorError> {
    let input = graph.constant(window.values.clone());
    let latents = encode(graph, params, input)?;
    let decomposed = decode(graph, params, &latents)?;
    let (reconstruction, reconstruction_loss) =
        reconstruct_and_loss(graph, input, &decomposed, w1, w2)?;
    let attention = attention_weights(graph, params, input)?;
    let (seizure_logit, seizure_prob) =
        seizure_predict(graph, params, latents.seizure, attention, mode, keep_rate, rng)?;
    let s_loss = seizure_loss(graph, seizure_prob, window.label)?;
    let patient_probs = patient_predict(graph, params, latents.patient, mode, keep_rate, rng)?;
    let p_loss = patient_loss(graph, patient_probs, class)?;
    Ok(WindowForward {
        latents,
        decomposed,
        reconstruction,
        reconstruction_loss,
        attention,
        seizure_logit,
        seizure_prob,
        seizure_loss: s_loss,
        patient_probs,
        patient_loss: p_loss,
    })
}

/// The seizure path only: encoder, attention and classifier. Used by the
/// priority step, which re-forwards after the joint update.
pub fn forward_seizure_only(
    graph: &mut Graph,
    params: &BoundParams,
    window: &EegWindow,
    mode: Mode,
    keep_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(NodeId, NodeId), TensorError> {
    let input = graph.constant(window.values.clone());
    let latent = encode_seizure(graph, params, input)?;
    let attention = attention_weights(graph, params, input)?;
    let (_, prob) = seizure_predict(graph, params, latent, attention, mode, keep_rate, rng)?;
    let loss = seizure_loss(graph, prob, window.label)?;
    Ok((prob, loss))
}

/// Eval-mode prediction for one window: seizure probability and the
/// attention vector. Deterministic (dropout is identity in eval mode).
pub fn predict_window(
    params: &ModelParameters,
    values: &Tensor,
) -> Result<(f64, Vec<f64>), TensorError> {
    let mut graph = Graph::new();
    let bound = params.bind(&mut graph);
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused in eval mode
    let input = graph.constant(values.clone());
    let latent = encode_seizure(&mut graph, &bound, input)?;
    let attention = attention_weights(&mut graph, &bound, input)?;
    let (_, prob) = seizure_predict(
        &mut graph,
        &bound,
        latent,
        attention,
        Mode::Eval,
        1.0,
        &mut rng,
    )?;
    Ok((
        graph.value(prob).scalar_value(),
        graph.value(attention).data().to_vec(),
    ))
}
