//! Finite-difference verification of analytic gradients, and the
//! primitive-by-primitive check suite behind the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::EegWindow;
use crate::graph::{Graph, NodeId};
use crate::model::{
    forward_window, l2_penalty, ModelConfig, ModelParameters, TrunkStage,
};
use crate::nn::{
    self, Conv2dSame, ConvSpec, ConvTranspose2d, MaxPool2dSame, Mode, PoolSpec, UpsampleRows,
};
use crate::tensor::{Tensor, TensorError};

/// Central-difference step used throughout the verification suites.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Pass threshold for every check in the suite.
pub const SUITE_TOLERANCE: f64 = 1e-4;

/// Compare the analytic gradient of `loss` with central finite differences
/// over every entry of `param`.
///
/// Returns the maximum over entries of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
/// The graph is restored to its original point before returning.
pub fn finite_difference_check(
    graph: &mut Graph,
    loss: NodeId,
    param: NodeId,
    h: f64,
) -> Result<f64, TensorError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = graph.backward(loss)?;
    let analytic = analytic
        .get(&param)
        .expect("finite_difference_check requires a trainable parameter node")
        .clone();

    let base = graph.value(param).clone();
    let mut max_rel = 0.0f64;
    for j in 0..base.numel() {
        let mut plus = base.clone();
        plus.data_mut()[j] += h;
        graph.set_leaf(param, plus)?;
        graph.refresh()?;
        let f_plus = graph.value(loss).scalar_value();

        let mut minus = base.clone();
        minus.data_mut()[j] -= h;
        graph.set_leaf(param, minus)?;
        graph.refresh()?;
        let f_minus = graph.value(loss).scalar_value();

        let numeric = (f_plus - f_minus) / (2.0 * h);
        let a = analytic.data()[j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        max_rel = max_rel.max(rel);
    }
    graph.set_leaf(param, base)?;
    graph.refresh()?;
    Ok(max_rel)
}

/// Run [`finite_difference_check`] over every trainable parameter of the
/// graph and return the worst error.
pub fn finite_difference_check_all(
    graph: &mut Graph,
    loss: NodeId,
    h: f64,
) -> Result<f64, TensorError> {
    let mut worst = 0.0f64;
    for param in graph.parameters() {
        worst = worst.max(finite_difference_check(graph, loss, param, h)?);
    }
    Ok(worst)
}

/// Keep a sampled value away from a non-smooth kink at `kink` by at least
/// `margin`, preserving its sign of distance.
pub fn away_from_kink(value: f64, kink: f64, margin: f64) -> f64 {
    let d = value - kink;
    if d.abs() >= margin {
        value
    } else if d >= 0.0 {
        kink + margin
    } else {
        kink - margin
    }
}

/// Smallest |pre-activation| feeding any ReLU in the graph. Central
/// differences stay exact as long as this exceeds the step size; the suite
/// resamples points that land closer than 1e-3.
pub fn relu_kink_margin(graph: &Graph) -> f64 {
    let mut margin = f64::INFINITY;
    for id in graph.node_ids() {
        if graph.primitive_name(id) == Some("relu") {
            let input = graph.node_inputs(id)[0];
            for &v in graph.value(input).data() {
                margin = margin.min(v.abs());
            }
        }
    }
    margin
}

/// Outcome of one suite entry.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub points: usize,
    pub max_rel_err: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < SUITE_TOLERANCE
    }
}

fn random_tensor(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    Tensor::new(shape, (0..numel).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Random tensor whose entries are pairwise separated by at least 1e-3,
/// so pooling argmaxes cannot flip under the finite-difference step.
fn distinct_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|i| (rng.gen_range(-1.0..1.0f64) * 50.0).round() / 50.0 + i as f64 * 1e-3)
        .collect();
    Tensor::new(shape, data)
}

/// Random tensor with every entry at least `margin` from zero.
fn off_kink_tensor(shape: Vec<usize>, margin: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| away_from_kink(rng.gen_range(-1.0..1.0), 0.0, margin))
        .collect();
    Tensor::new(shape, data)
}

/// Reduce a node to a scalar through a random linear functional; a plain
/// sum would let symmetric sign errors cancel.
fn weighted_sum(
    graph: &mut Graph,
    node: NodeId,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, TensorError> {
    if graph.value(node).is_scalar() {
        return Ok(node);
    }
    let shape = graph.shape(node).to_vec();
    let weights = graph.constant(random_tensor(shape, -1.0, 1.0, rng));
    let prod = graph.mul(node, weights)?;
    graph.sum(prod)
}

type PointCheck = fn(&mut ChaCha8Rng) -> Result<f64, TensorError>;

fn check_elementwise_pair(rng: &mut ChaCha8Rng, op: &str) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![3, 4], -1.0, 1.0, rng));
    let b = g.parameter(random_tensor(vec![3, 4], -1.0, 1.0, rng));
    let out = match op {
        "add" => g.add(a, b)?,
        "sub" => g.sub(a, b)?,
        _ => g.mul(a, b)?,
    };
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_add(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    check_elementwise_pair(rng, "add")
}

fn check_sub(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    check_elementwise_pair(rng, "sub")
}

fn check_mul(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    check_elementwise_pair(rng, "mul")
}

fn check_scale(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![5], -2.0, 2.0, rng));
    let out = g.scale(a, rng.gen_range(-1.5..1.5))?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_add_bias(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![4, 3], -1.0, 1.0, rng));
    let b = g.parameter(random_tensor(vec![3], -1.0, 1.0, rng));
    let out = g.add_bias(a, b)?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_matmul(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![3, 4], -1.0, 1.0, rng));
    let b = g.parameter(random_tensor(vec![4, 2], -1.0, 1.0, rng));
    let out = g.matmul(a, b)?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_relu(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(off_kink_tensor(vec![4, 5], 0.05, rng));
    let out = g.relu(a)?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_sigmoid(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![4, 5], -3.0, 3.0, rng));
    let out = g.sigmoid(a)?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_softmax(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![2, 5], -2.0, 2.0, rng));
    let out = g.softmax(a)?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_sum(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![3, 3], -1.0, 1.0, rng));
    let loss = g.sum(a)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_mean(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![3, 3], -1.0, 1.0, rng));
    let loss = g.mean(a)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_sum_squares(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![3, 3], -1.0, 1.0, rng));
    let loss = g.sum_squares(a)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_reshape(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let a = g.parameter(random_tensor(vec![2, 6], -1.0, 1.0, rng));
    let out = g.reshape(a, vec![3, 4])?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_conv2d(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let x = g.parameter(random_tensor(vec![6, 5, 2], -1.0, 1.0, rng));
    let w = g.parameter(random_tensor(vec![3, 3, 2, 3], -1.0, 1.0, rng));
    let out = g.apply(Conv2dSame { stride: [2, 2] }, &[x, w])?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_transposed_conv2d(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let x = g.parameter(random_tensor(vec![3, 3, 2], -1.0, 1.0, rng));
    let w = g.parameter(random_tensor(vec![3, 3, 1, 2], -1.0, 1.0, rng));
    let out = g.apply(
        ConvTranspose2d {
            stride: [2, 2],
            target: [6, 5],
        },
        &[x, w],
    )?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_maxpool(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let x = g.parameter(distinct_tensor(vec![6, 6, 2], rng));
    let out = g.apply(
        MaxPool2dSame {
            window: [2, 2],
            stride: [2, 2],
        },
        &[x],
    )?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_upsample(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let x = g.parameter(random_tensor(vec![3, 4, 2], -1.0, 1.0, rng));
    let out = g.apply(
        UpsampleRows {
            factor: 2,
            target_rows: 5,
        },
        &[x],
    )?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_dropout(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    // Differentiating through a fixed mask: the mask leaf is constant
    // during the finite-difference sweep.
    let mut g = Graph::new();
    let x = g.parameter(random_tensor(vec![4, 4], -1.0, 1.0, rng));
    let out = nn::dropout_mask(&mut g, x, 0.8, Mode::Train, rng)?;
    let loss = weighted_sum(&mut g, out, rng)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_mse_loss(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let pred = g.parameter(random_tensor(vec![3, 4], -1.0, 1.0, rng));
    let target = g.constant(random_tensor(vec![3, 4], -1.0, 1.0, rng));
    let loss = nn::mse_loss(&mut g, pred, target)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_bce_loss(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let probs = g.parameter(random_tensor(vec![6], 0.05, 0.95, rng));
    let labels = g.constant(Tensor::from_vec(
        (0..6).map(|_| f64::from(rng.gen_bool(0.5))).collect(),
    ));
    let loss = nn::bce_loss(&mut g, probs, labels)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

fn check_ce_loss(rng: &mut ChaCha8Rng) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let probs = g.parameter(random_tensor(vec![5], 0.1, 0.9, rng));
    let mut one_hot = vec![0.0; 5];
    one_hot[rng.gen_range(0..5)] = 1.0;
    let target = g.constant(Tensor::from_vec(one_hot));
    let loss = nn::ce_loss(&mut g, probs, target)?;
    finite_difference_check_all(&mut g, loss, DEFAULT_STEP)
}

/// Every differentiable primitive, checked at `points` random parameter
/// points away from kinks. Deterministic given the seed.
pub fn primitive_suite(points: usize, seed: u64) -> Result<Vec<SuiteResult>, TensorError> {
    let checks: [(&str, PointCheck); 20] = [
        ("add", check_add),
        ("sub", check_sub),
        ("mul", check_mul),
        ("scale", check_scale),
        ("add_bias", check_add_bias),
        ("matmul", check_matmul),
        ("relu", check_relu),
        ("sigmoid", check_sigmoid),
        ("softmax", check_softmax),
        ("sum", check_sum),
        ("mean", check_mean),
        ("sum_squares", check_sum_squares),
        ("reshape", check_reshape),
        ("conv2d_same", check_conv2d),
        ("transposed_conv2d", check_transposed_conv2d),
        ("maxpool2d_same", check_maxpool),
        ("upsample_rows", check_upsample),
        ("dropout", check_dropout),
        ("mse_loss", check_mse_loss),
        ("bce_loss", check_bce_loss),
    ];
    let mut results = Vec::with_capacity(checks.len() + 1);
    for (idx, (name, check)) in checks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64 * 7919));
        let mut worst = 0.0f64;
        for _ in 0..points {
            worst = worst.max(check(&mut rng)?);
        }
        results.push(SuiteResult {
            name: name.to_string(),
            points,
            max_rel_err: worst,
        });
    }
    // ce_loss is checked separately so the table lists all three loss kernels.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(20 * 7919));
    let mut worst = 0.0f64;
    for _ in 0..points {
        worst = worst.max(check_ce_loss(&mut rng)?);
    }
    results.push(SuiteResult {
        name: "ce_loss".to_string(),
        points,
        max_rel_err: worst,
    });
    Ok(results)
}

/// Reduced architecture for the end-to-end check: 16x8 windows, one or two
/// filters per layer.
pub fn reduced_config() -> ModelConfig {
    ModelConfig {
        window_len: 16,
        channels: 8,
        decomp: ConvSpec::new(2, [3, 3], [2, 2]),
        decomp_pool: PoolSpec::new([2, 1], [2, 1]),
        trunk: vec![
            TrunkStage {
                filters: 1,
                kernel: [3, 3],
                pool_window: [2, 2],
                pool_stride: [2, 2],
            },
            TrunkStage {
                filters: 2,
                kernel: [2, 2],
                pool_window: [2, 1],
                pool_stride: [2, 1],
            },
        ],
        fc_hidden: 5,
        num_patients: 2,
    }
}

/// Finite-difference check of the end-to-end total loss
/// `L_D + L_s + L_p + l2` on the reduced configuration, at `points`
/// parameter draws whose ReLU pre-activations all clear a 1e-3 margin.
pub fn end_to_end_check(points: usize, seed: u64) -> Result<SuiteResult, TensorError> {
    let config = reduced_config();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut attempt = 0u64;
    while checked < points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37)));
        attempt += 1;
        let params = ModelParameters::init(config.clone(), &mut rng);
        let window = EegWindow {
            values: random_tensor(
                vec![config.window_len, config.channels],
                -1.0,
                1.0,
                &mut rng,
            ),
            label: u8::from(rng.gen_bool(0.5)),
            subject: 0,
        };

        let mut graph = Graph::new();
        let bound = params.bind(&mut graph);
        let class = rng.gen_range(0..config.num_patients);
        let fwd = forward_window(
            &mut graph,
            &bound,
            &window,
            class,
            Mode::Train,
            0.8,
            0.5,
            0.5,
            &mut rng,
        )?;
        // Resample points that land near a ReLU kink; central differences
        // are only trustworthy away from them.
        if relu_kink_margin(&graph) < 1e-3 {
            continue;
        }
        let l2 = l2_penalty(&mut graph, &bound, 1e-4)?;
        let partial = graph.add(fwd.reconstruction_loss, fwd.seizure_loss)?;
        let partial = graph.add(partial, fwd.patient_loss)?;
        let total = graph.add(partial, l2)?;
        worst = worst.max(finite_difference_check_all(&mut graph, total, DEFAULT_STEP)?);
        checked += 1;
    }
    Ok(SuiteResult {
        name: "end_to_end_total_loss".to_string(),
        points,
        max_rel_err: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_matches_finite_differences() {
        let mut g = Graph::new();
        let p = g.parameter(Tensor::from_vec(vec![0.7, -1.3, 2.1]));
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum(sq).unwrap();
        let err = finite_difference_check(&mut g, loss, p, DEFAULT_STEP).unwrap();
        assert!(err < 1e-6, "quadratic gradcheck error {err}");
    }

    #[test]
    fn relu_away_from_kink_matches() {
        let mut g = Graph::new();
        // All pre-activations strictly positive: smooth region.
        let p = g.parameter(Tensor::from_vec(vec![0.5, 1.5, 2.5]));
        let r = g.relu(p).unwrap();
        let loss = g.sum(r).unwrap();
        let err = finite_difference_check(&mut g, loss, p, DEFAULT_STEP).unwrap();
        assert!(err < 1e-6, "relu gradcheck error {err}");
    }

    #[test]
    fn constant_loss_reports_zero_error() {
        let mut g = Graph::new();
        let p = g.parameter(Tensor::from_vec(vec![1.0, 2.0]));
        let c = g.constant(Tensor::from_vec(vec![3.0]));
        let loss = g.sum(c).unwrap();
        let _ = p;
        let err = finite_difference_check(&mut g, loss, p, DEFAULT_STEP).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn sigmoid_of_dot_product_matches() {
        let mut g = Graph::new();
        let w = g.parameter(Tensor::from_vec(vec![0.3, -0.8, 0.2, 0.9]));
        let x = g.constant(Tensor::from_vec(vec![1.2, 0.4, -0.7, 0.1]));
        let d = g.dot(w, x).unwrap();
        let s = g.sigmoid(d).unwrap();
        let loss = g.sum(s).unwrap();
        let err = finite_difference_check(&mut g, loss, w, DEFAULT_STEP).unwrap();
        assert!(err < 1e-6, "sigmoid(w.x) gradcheck error {err}");
    }

    #[test]
    fn kink_margin_helper_pushes_values_out() {
        assert_eq!(away_from_kink(0.0005, 0.0, 0.01), 0.01);
        assert_eq!(away_from_kink(-0.0005, 0.0, 0.01), -0.01);
        assert_eq!(away_from_kink(0.5, 0.0, 0.01), 0.5);
    }
}
