//! Classification metrics, ROC/AUC, and attention-topography export.

use std::fmt;

use crate::montage::{CHANNEL_COUNT, CHANNEL_NAMES, CHANNEL_POSITIONS};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    LengthMismatch { labels: usize, values: usize },
    /// ROC needs at least one positive and one negative label.
    SingleClass,
    WrongAttentionLength { expected: usize, got: usize },
    Parse { line: usize, detail: String },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { labels, values } => {
                write!(f, "{labels} labels but {values} values")
            }
            MetricsError::SingleClass => {
                write!(f, "ROC needs both classes present in the labels")
            }
            MetricsError::WrongAttentionLength { expected, got } => {
                write!(f, "attention vector has {got} entries, montage has {expected}")
            }
            MetricsError::Parse { line, detail } => {
                write!(f, "topography table line {line}: {detail}")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

/// Rates derived from a confusion matrix. A rate with a zero denominator
/// is reported as absent, never as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Rates {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Count the confusion matrix and its rates for hard 0/1 predictions.
pub fn confusion_and_rates(
    labels: &[u8],
    predictions: &[u8],
) -> Result<(ConfusionMatrix, Rates), MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            values: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y, p) {
            (1, 1) => cm.true_positive += 1,
            (0, 1) => cm.false_positive += 1,
            (0, 0) => cm.true_negative += 1,
            (1, 0) => cm.false_negative += 1,
            _ => unreachable!("labels and predictions are 0/1"),
        }
    }
    let rates = Rates {
        accuracy: ratio(cm.true_positive + cm.true_negative, cm.total()),
        sensitivity: ratio(cm.true_positive, cm.true_positive + cm.false_negative),
        specificity: ratio(cm.true_negative, cm.true_negative + cm.false_positive),
    };
    Ok((cm, rates))
}

/// One ROC point: predict positive when score >= threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
}

/// ROC curve and trapezoidal AUC.
///
/// Thresholds sweep the sorted unique scores plus a +inf sentinel, so the
/// curve runs from (0, 0) to (1, 1). Equal scores fall into one threshold
/// group, which makes the trapezoidal area equal the pairwise ordering
/// statistic with ties counted as one half.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<(Vec<RocPoint>, f64), MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            values: scores.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume the whole tie group at this threshold.
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            false_positive_rate: fp as f64 / negatives as f64,
            true_positive_rate: tp as f64 / positives as f64,
        });
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let dx = pair[1].false_positive_rate - pair[0].false_positive_rate;
        auc += dx * (pair[1].true_positive_rate + pair[0].true_positive_rate) / 2.0;
    }
    Ok((points, auc))
}

/// Attention weights aligned with the canonical montage.
#[derive(Debug, Clone, PartialEq)]
pub struct TopographyMap {
    pub weights: Vec<f64>,
}

impl TopographyMap {
    pub fn new(weights: Vec<f64>) -> Result<Self, MetricsError> {
        if weights.len() != CHANNEL_COUNT {
            return Err(MetricsError::WrongAttentionLength {
                expected: CHANNEL_COUNT,
                got: weights.len(),
            });
        }
        Ok(TopographyMap { weights })
    }

    /// Highest-weight channel; ties keep the earliest montage position.
    pub fn argmax_channel(&self) -> &'static str {
        let mut best = 0usize;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        CHANNEL_NAMES[best]
    }

    pub fn argmin_channel(&self) -> &'static str {
        let mut best = 0usize;
        for (i, &w) in self.weights.iter().enumerate() {
            if w < self.weights[best] {
                best = i;
            }
        }
        CHANNEL_NAMES[best]
    }

    /// `channel,weight` table; weights print in shortest round-trip form,
    /// so parsing the table restores identical doubles.
    pub fn table(&self) -> String {
        let mut out = String::from("channel,weight\n");
        for (name, w) in CHANNEL_NAMES.iter().zip(&self.weights) {
            out.push_str(&format!("{name},{w}\n"));
        }
        out
    }

    pub fn parse_table(text: &str) -> Result<Self, MetricsError> {
        let mut weights = vec![f64::NAN; CHANNEL_COUNT];
        let mut seen = [false; CHANNEL_COUNT];
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "channel,weight" || line.starts_with('#') {
                continue;
            }
            let (name, value) = line.split_once(',').ok_or(MetricsError::Parse {
                line: idx + 1,
                detail: "expected `channel,weight`".to_string(),
            })?;
            let channel =
                crate::montage::channel_index(name).ok_or(MetricsError::Parse {
                    line: idx + 1,
                    detail: format!("unknown channel `{name}`"),
                })?;
            let w: f64 = value.trim().parse().map_err(|_| MetricsError::Parse {
                line: idx + 1,
                detail: format!("bad weight `{value}`"),
            })?;
            weights[channel] = w;
            seen[channel] = true;
        }
        if seen.iter().any(|&s| !s) {
            let missing = CHANNEL_NAMES[seen.iter().position(|&s| !s).unwrap()];
            return Err(MetricsError::Parse {
                line: 0,
                detail: format!("missing channel `{missing}`"),
            });
        }
        Ok(TopographyMap { weights })
    }

    /// Scalp map as a standalone SVG: head circle, nose, one disc per
    /// electrode colored cool-to-warm by weight, labels and a color bar.
    pub fn to_svg(&self) -> String {
        let size = 640.0;
        let cx = size / 2.0;
        let cy = size / 2.0 + 10.0;
        let head_r = 230.0;
        let lo = self.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{}\" viewBox=\"0 0 {size} {}\">\n",
            size + 60.0,
            size + 60.0
        ));
        svg.push_str(&format!(
            "  <rect width=\"{size}\" height=\"{}\" fill=\"white\"/>\n",
            size + 60.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{cx}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">Channel attention topography</text>\n"
        ));
        // Head outline and nose marker.
        svg.push_str(&format!(
            "  <circle cx=\"{cx}\" cy=\"{cy}\" r=\"{head_r}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n"
        ));
        svg.push_str(&format!(
            "  <polygon points=\"{},{} {},{} {},{}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n",
            cx - 18.0,
            cy - head_r + 2.0,
            cx,
            cy - head_r - 22.0,
            cx + 18.0,
            cy - head_r + 2.0
        ));
        for (i, (&(x, y), name)) in CHANNEL_POSITIONS.iter().zip(CHANNEL_NAMES).enumerate() {
            let px = cx + x * head_r * 0.88;
            let py = cy - y * head_r * 0.88;
            let t = (self.weights[i] - lo) / span;
            let (r, g, b) = coolwarm(t);
            svg.push_str(&format!(
                "  <circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"17\" fill=\"rgb({r},{g},{b})\" stroke=\"black\" stroke-width=\"1\"/>\n"
            ));
            svg.push_str(&format!(
                "  <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{name}</text>\n",
                py + 3.5
            ));
            svg.push_str(&format!(
                "  <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\" fill=\"#444\">{:.3}</text>\n",
                py + 30.0,
                self.weights[i]
            ));
        }
        // Color bar.
        let bar_y = size + 18.0;
        let bar_w = 300.0;
        let bar_x = cx - bar_w / 2.0;
        let steps = 30;
        for s in 0..steps {
            let t = s as f64 / (steps - 1) as f64;
            let (r, g, b) = coolwarm(t);
            svg.push_str(&format!(
                "  <rect x=\"{:.1}\" y=\"{bar_y}\" width=\"{:.1}\" height=\"14\" fill=\"rgb({r},{g},{b})\"/>\n",
                bar_x + t * (bar_w - bar_w / steps as f64),
                bar_w / steps as f64 + 1.0
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{lo:.3}</text>\n",
            bar_x - 6.0,
            bar_y + 11.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"11\">{hi:.3}</text>\n",
            bar_x + bar_w + 6.0,
            bar_y + 11.0
        ));
        svg.push_str("</svg>\n");
        svg
    }
}

/// Two-segment blue-grey-red colormap over t in [0, 1].
fn coolwarm(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, u: f64| a + (b - a) * u;
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (lerp(59.0, 221.0, u), lerp(76.0, 221.0, u), lerp(192.0, 221.0, u))
    } else {
        let u = (t - 0.5) / 0.5;
        (lerp(221.0, 180.0, u), lerp(221.0, 4.0, u), lerp(221.0, 38.0, u))
    };
    (r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Mean of per-window attention vectors: the subject-level topography.
pub fn mean_attention(vectors: &[Vec<f64>]) -> Result<TopographyMap, MetricsError> {
    assert!(!vectors.is_empty(), "mean_attention needs at least one vector");
    let mut acc = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    TopographyMap::new(acc)
}

/// Render one fold's metrics as a stable structured-text report.
pub fn format_fold_report(
    subject: u32,
    cm: &ConfusionMatrix,
    rates: &Rates,
    auc: Option<f64>,
    roc: &[RocPoint],
) -> String {
    let fmt_rate = |r: Option<f64>| match r {
        Some(v) => format!("{v}"),
        None => "undefined".to_string(),
    };
    let mut out = String::new();
    out.push_str(&format!("subject: {subject}\n"));
    out.push_str(&format!("windows: {}\n", cm.total()));
    out.push_str(&format!(
        "tp: {}\nfp: {}\ntn: {}\nfn: {}\n",
        cm.true_positive, cm.false_positive, cm.true_negative, cm.false_negative
    ));
    out.push_str(&format!("accuracy: {}\n", fmt_rate(rates.accuracy)));
    out.push_str(&format!("sensitivity: {}\n", fmt_rate(rates.sensitivity)));
    out.push_str(&format!("specificity: {}\n", fmt_rate(rates.specificity)));
    out.push_str(&format!("auc: {}\n", fmt_rate(auc)));
    out.push_str("roc:\nthreshold,fpr,tpr\n");
    for p in roc {
        out.push_str(&format!(
            "{},{},{}\n",
            p.threshold, p.false_positive_rate, p.true_positive_rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent O(n^2) pairwise ordering statistic.
    fn pairwise_auc(labels: &[u8], scores: &[f64]) -> f64 {
        let mut pairs = 0.0;
        let mut won = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    won += 1.0;
                } else if scores[i] == scores[j] {
                    won += 0.5;
                }
            }
        }
        won / pairs
    }

    #[test]
    fn perfect_predictions_have_perfect_rates() {
        let labels = vec![0, 1, 1, 0, 1];
        let (cm, rates) = confusion_and_rates(&labels, &labels).unwrap();
        assert_eq!(cm.total(), 5);
        assert_eq!(rates.accuracy, Some(1.0));
        assert_eq!(rates.sensitivity, Some(1.0));
        assert_eq!(rates.specificity, Some(1.0));
    }

    #[test]
    fn all_positive_predictions_on_a_balanced_set() {
        let labels = vec![0, 0, 1, 1];
        let preds = vec![1, 1, 1, 1];
        let (_, rates) = confusion_and_rates(&labels, &preds).unwrap();
        assert_eq!(rates.accuracy, Some(0.5));
        assert_eq!(rates.sensitivity, Some(1.0));
        assert_eq!(rates.specificity, Some(0.0));
    }

    #[test]
    fn random_case_matches_a_counting_oracle() {
        let labels: Vec<u8> = (0..20).map(|i| ((i * 7 + 3) % 5 < 2) as u8).collect();
        let preds: Vec<u8> = (0..20).map(|i| ((i * 11 + 1) % 3 < 1) as u8).collect();
        let (cm, rates) = confusion_and_rates(&labels, &preds).unwrap();
        // Naive recount.
        let mut want = ConfusionMatrix::default();
        for i in 0..20 {
            match (labels[i], preds[i]) {
                (1, 1) => want.true_positive += 1,
                (0, 1) => want.false_positive += 1,
                (0, 0) => want.true_negative += 1,
                _ => want.false_negative += 1,
            }
        }
        assert_eq!(cm, want);
        let acc = rates.accuracy.unwrap();
        assert!((acc - (1.0 - (cm.false_positive + cm.false_negative) as f64 / 20.0)).abs() < 1e-15);
    }

    #[test]
    fn undefined_rates_are_absent_not_zero() {
        // No positives at all: sensitivity undefined.
        let labels = vec![0, 0, 0];
        let preds = vec![0, 1, 0];
        let (_, rates) = confusion_and_rates(&labels, &preds).unwrap();
        assert_eq!(rates.sensitivity, None);
        assert!(rates.specificity.is_some());
    }

    #[test]
    fn separated_scores_give_auc_one_and_ties_give_half() {
        let labels = vec![0, 0, 1, 1];
        let (points, auc) = roc_auc(&labels, &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(points.first().unwrap().true_positive_rate, 0.0);
        assert_eq!(points.last().unwrap().true_positive_rate, 1.0);

        let (_, auc) = roc_auc(&labels, &[0.4, 0.4, 0.4, 0.4]).unwrap();
        assert!((auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_equals_the_pairwise_statistic() {
        // Deterministic pseudo-random scores with deliberate ties.
        let n = 50;
        let labels: Vec<u8> = (0..n).map(|i| ((i * 13 + 5) % 7 < 3) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|i| ((i * 29 + 11) % 17) as f64 / 17.0).collect();
        let (_, auc) = roc_auc(&labels, &scores).unwrap();
        let oracle = pairwise_auc(&labels, &scores);
        assert!(
            (auc - oracle).abs() < 1e-9,
            "trapezoid {auc} vs pairwise {oracle}"
        );
    }

    #[test]
    fn roc_rejects_single_class_input() {
        assert!(matches!(
            roc_auc(&[1, 1, 1], &[0.1, 0.2, 0.3]),
            Err(MetricsError::SingleClass)
        ));
    }

    #[test]
    fn auc_is_invariant_under_increasing_transforms() {
        let labels: Vec<u8> = (0..30).map(|i| ((i * 3 + 1) % 4 == 0) as u8).collect();
        let scores: Vec<f64> = (0..30).map(|i| ((i * 23 + 7) % 13) as f64 / 13.0).collect();
        let (points_a, auc_a) = roc_auc(&labels, &scores).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        let (points_b, auc_b) = roc_auc(&labels, &transformed).unwrap();
        assert!((auc_a - auc_b).abs() < 1e-12);
        assert_eq!(points_a.len(), points_b.len());
        for (a, b) in points_a.iter().zip(&points_b) {
            assert_eq!(a.false_positive_rate, b.false_positive_rate);
            assert_eq!(a.true_positive_rate, b.true_positive_rate);
        }
    }

    #[test]
    fn uniform_topography_breaks_ties_by_montage_order() {
        let topo = TopographyMap::new(vec![0.5; CHANNEL_COUNT]).unwrap();
        assert_eq!(topo.argmax_channel(), "FP1");
        assert_eq!(topo.argmin_channel(), "FP1");
        let svg = topo.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">T5<"));
    }

    #[test]
    fn dominant_t5_is_the_argmax() {
        let mut weights = vec![0.1; CHANNEL_COUNT];
        weights[crate::montage::channel_index("T5").unwrap()] = 0.9;
        let topo = TopographyMap::new(weights).unwrap();
        assert_eq!(topo.argmax_channel(), "T5");
    }

    #[test]
    fn argmax_is_invariant_under_positive_rescaling() {
        let weights: Vec<f64> = (0..CHANNEL_COUNT).map(|i| 0.1 + (i as f64) * 0.003).collect();
        let topo = TopographyMap::new(weights.clone()).unwrap();
        let scaled = TopographyMap::new(weights.iter().map(|w| w * 3.7).collect()).unwrap();
        assert_eq!(topo.argmax_channel(), scaled.argmax_channel());
    }

    #[test]
    fn table_round_trip_restores_identical_weights() {
        let weights: Vec<f64> = (0..CHANNEL_COUNT)
            .map(|i| 1.0 / (1.0 + ((i as f64) * 0.37 - 2.1).exp()))
            .collect();
        let topo = TopographyMap::new(weights).unwrap();
        let parsed = TopographyMap::parse_table(&topo.table()).unwrap();
        assert_eq!(topo, parsed);
    }

    #[test]
    fn wrong_length_attention_is_rejected() {
        assert!(matches!(
            TopographyMap::new(vec![0.5; 7]),
            Err(MetricsError::WrongAttentionLength { expected: 22, got: 7 })
        ));
    }
}
