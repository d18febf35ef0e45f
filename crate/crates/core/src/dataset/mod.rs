//! Recording ingestion, windowing and labeling, subject selection and
//! leave-one-subject-out split construction.
//!
//! A [`Recording`] is a continuous multi-channel signal in the canonical
//! montage order plus per-channel seizure annotations. Windowing cuts it
//! into fixed-length [`EegWindow`] samples with 50% overlap; a window is
//! labeled seizure when more than [`SEIZURE_CHANNEL_THRESHOLD`] channels are
//! annotated for a majority of its time steps.

pub mod io;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use crate::montage::{CHANNEL_COUNT, CHANNEL_NAMES};
use crate::tensor::Tensor;

/// Windows hold one second at this rate; recordings at any other rate are
/// rejected rather than resampled.
pub const EXPECTED_RATE: f64 = 250.0;

/// A time step counts as seizure when strictly more than this many channels
/// are annotated.
pub const SEIZURE_CHANNEL_THRESHOLD: usize = 12;

/// Subjects qualify for the corpus when their seizure time strictly exceeds
/// this many seconds.
pub const SELECTION_THRESHOLD_SECONDS: f64 = 250.0;

/// Errors from loading, validating or splitting recordings.
#[derive(Debug)]
pub enum DataError {
    Io {
        path: PathBuf,
        message: String,
    },
    /// CSV header does not match the canonical montage.
    MalformedHeader {
        detail: String,
    },
    NonNumericCell {
        row: usize,
        column: usize,
        value: String,
    },
    TruncatedBinary {
        path: PathBuf,
        detail: String,
    },
    UnknownChannel {
        name: String,
    },
    InvalidAnnotation {
        detail: String,
    },
    TooShortRecording {
        needed: usize,
        got: usize,
    },
    WrongSamplingRate {
        expected: f64,
        got: f64,
    },
    TooFewSubjects {
        got: usize,
    },
    DuplicateSubject {
        subject: u32,
    },
    /// The leakage guard found a test-subject window in a training set.
    Leakage {
        test_subject: u32,
        offending_subject: u32,
    },
    Manifest {
        line: usize,
        detail: String,
    },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            DataError::MalformedHeader { detail } => write!(f, "malformed CSV header: {detail}"),
            DataError::NonNumericCell { row, column, value } => {
                write!(f, "non-numeric cell `{value}` at row {row}, column {column}")
            }
            DataError::TruncatedBinary { path, detail } => {
                write!(f, "truncated binary recording {}: {detail}", path.display())
            }
            DataError::UnknownChannel { name } => {
                write!(f, "annotation references unknown channel `{name}`")
            }
            DataError::InvalidAnnotation { detail } => write!(f, "invalid annotation: {detail}"),
            DataError::TooShortRecording { needed, got } => {
                write!(f, "recording too short: need {needed} steps, got {got}")
            }
            DataError::WrongSamplingRate { expected, got } => {
                write!(f, "sampling rate {got} Hz, expected {expected} Hz")
            }
            DataError::TooFewSubjects { got } => {
                write!(f, "leave-one-out needs at least 3 subjects, got {got}")
            }
            DataError::DuplicateSubject { subject } => {
                write!(f, "subject {subject} appears more than once")
            }
            DataError::Leakage {
                test_subject,
                offending_subject,
            } => write!(
                f,
                "leakage: fold holding out subject {test_subject} has training windows from subject {offending_subject}"
            ),
            DataError::Manifest { line, detail } => {
                write!(f, "manifest line {line}: {detail}")
            }
        }
    }
}

impl std::error::Error for DataError {}

/// Half-open step interval during which the listed channels are in seizure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationInterval {
    pub start: usize,
    pub end: usize,
    /// Channel indices into the canonical montage.
    pub channels: Vec<usize>,
}

/// One continuous recording of one subject, canonical montage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: u32,
    pub rate: f64,
    /// Always the canonical names; kept so loaders can report mismatches.
    pub channel_labels: Vec<String>,
    /// `[num_steps, 22]` row-major microvolt samples.
    pub samples: Vec<f64>,
    pub num_steps: usize,
    pub annotations: Vec<AnnotationInterval>,
}

impl Recording {
    pub fn new(
        subject: u32,
        rate: f64,
        samples: Vec<f64>,
        annotations: Vec<AnnotationInterval>,
    ) -> Result<Self, DataError> {
        if !samples.len().is_multiple_of(CHANNEL_COUNT) {
            return Err(DataError::InvalidAnnotation {
                detail: format!(
                    "sample count {} is not a multiple of {CHANNEL_COUNT} channels",
                    samples.len()
                ),
            });
        }
        let num_steps = samples.len() / CHANNEL_COUNT;
        for interval in &annotations {
            if interval.start >= interval.end || interval.end > num_steps {
                return Err(DataError::InvalidAnnotation {
                    detail: format!(
                        "interval [{}, {}) outside recording of {num_steps} steps",
                        interval.start, interval.end
                    ),
                });
            }
            for &ch in &interval.channels {
                if ch >= CHANNEL_COUNT {
                    return Err(DataError::UnknownChannel {
                        name: format!("#{ch}"),
                    });
                }
            }
        }
        Ok(Recording {
            subject,
            rate,
            channel_labels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            samples,
            num_steps,
            annotations,
        })
    }

    /// Per-step bitmask of channels currently annotated as seizure.
    pub fn seizure_mask(&self) -> Vec<u32> {
        let mut mask = vec![0u32; self.num_steps];
        for interval in &self.annotations {
            let mut bits = 0u32;
            for &ch in &interval.channels {
                bits |= 1 << ch;
            }
            for m in &mut mask[interval.start..interval.end] {
                *m |= bits;
            }
        }
        mask
    }

    /// Per-step flags under the more-than-12-channel rule.
    pub fn seizure_step_flags(&self) -> Vec<bool> {
        self.seizure_mask()
            .iter()
            .map(|m| (m.count_ones() as usize) > SEIZURE_CHANNEL_THRESHOLD)
            .collect()
    }

    /// Total seizure time in seconds under the channel rule.
    pub fn seizure_seconds(&self) -> f64 {
        let steps = self
            .seizure_step_flags()
            .iter()
            .filter(|&&f| f)
            .count();
        steps as f64 / self.rate
    }

    /// Multiply every sample in place; the optional global scaling hook.
    pub fn scale(&mut self, factor: f64) {
        if factor != 1.0 {
            for v in &mut self.samples {
                *v *= factor;
            }
        }
    }
}

/// One windowed sample: `[window_len, 22]` values plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EegWindow {
    /// `[window_len, CHANNEL_COUNT]` tensor in montage order.
    pub values: Tensor,
    /// 1 = seizure, 0 = normal.
    pub label: u8,
    pub subject: u32,
}

/// Majority label of a window given its per-step seizure flags; an exact
/// half-and-half tie labels seizure.
pub fn label_window(step_flags: &[bool]) -> u8 {
    let seizure_steps = step_flags.iter().filter(|&&f| f).count();
    u8::from(seizure_steps * 2 >= step_flags.len())
}

/// Cut a recording into windows of `window_len` steps with the given
/// overlap fraction (0.5 gives the one-second/half-second grid).
///
/// Window count is `floor((T - window_len) / stride) + 1`; trailing samples
/// that do not fill a window are dropped.
pub fn window_signal(
    rec: &Recording,
    window_len: usize,
    overlap: f64,
) -> Result<Vec<EegWindow>, DataError> {
    assert!(window_len > 0, "window length must be positive");
    assert!((0.0..1.0).contains(&overlap), "overlap must be in [0, 1)");
    if rec.rate != EXPECTED_RATE {
        return Err(DataError::WrongSamplingRate {
            expected: EXPECTED_RATE,
            got: rec.rate,
        });
    }
    if rec.num_steps < window_len {
        return Err(DataError::TooShortRecording {
            needed: window_len,
            got: rec.num_steps,
        });
    }
    let stride = ((window_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let flags = rec.seizure_step_flags();
    let count = (rec.num_steps - window_len) / stride + 1;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let end = start + window_len;
        let values = Tensor::new(
            vec![window_len, CHANNEL_COUNT],
            rec.samples[start * CHANNEL_COUNT..end * CHANNEL_COUNT].to_vec(),
        );
        windows.push(EegWindow {
            values,
            label: label_window(&flags[start..end]),
            subject: rec.subject,
        });
    }
    Ok(windows)
}

/// Subjects whose total seizure time strictly exceeds the 250-second
/// selection threshold, in ascending subject order.
pub fn select_subjects(recordings: &[Recording]) -> Vec<u32> {
    let mut seconds: BTreeMap<u32, f64> = BTreeMap::new();
    for rec in recordings {
        *seconds.entry(rec.subject).or_insert(0.0) += rec.seizure_seconds();
    }
    seconds
        .into_iter()
        .filter(|(_, s)| *s > SELECTION_THRESHOLD_SECONDS)
        .map(|(subject, _)| subject)
        .collect()
}

/// One leave-one-subject-out fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_subject: u32,
    /// Ascending; the index of a subject here is its patient class.
    pub train_subjects: Vec<u32>,
}

impl Fold {
    /// Dense patient-class index of a training subject.
    pub fn class_of(&self, subject: u32) -> Option<usize> {
        self.train_subjects.iter().position(|&s| s == subject)
    }

    /// Number of patient classes C in this fold.
    pub fn num_classes(&self) -> usize {
        self.train_subjects.len()
    }

    /// Subject-to-class map for the trainer.
    pub fn class_map(&self) -> BTreeMap<u32, usize> {
        self.train_subjects
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i))
            .collect()
    }
}

/// The full leave-one-subject-out plan: one fold per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

/// Build the n-fold plan over the given subjects.
pub fn build_loo_splits(subjects: &[u32]) -> Result<SplitPlan, DataError> {
    if subjects.len() < 3 {
        return Err(DataError::TooFewSubjects {
            got: subjects.len(),
        });
    }
    let unique: BTreeSet<u32> = subjects.iter().copied().collect();
    if unique.len() != subjects.len() {
        let mut seen = BTreeSet::new();
        for &s in subjects {
            if !seen.insert(s) {
                return Err(DataError::DuplicateSubject { subject: s });
            }
        }
    }
    let ordered: Vec<u32> = unique.into_iter().collect();
    let folds = ordered
        .iter()
        .map(|&test| Fold {
            test_subject: test,
            train_subjects: ordered.iter().copied().filter(|&s| s != test).collect(),
        })
        .collect();
    Ok(SplitPlan { folds })
}

/// Leakage guard: every training window must come from a training subject
/// and never from the held-out subject. Asserted, not assumed.
pub fn verify_no_leakage(fold: &Fold, train_windows: &[EegWindow]) -> Result<(), DataError> {
    for window in train_windows {
        if window.subject == fold.test_subject
            || !fold.train_subjects.contains(&window.subject)
        {
            return Err(DataError::Leakage {
                test_subject: fold.test_subject,
                offending_subject: window.subject,
            });
        }
    }
    Ok(())
}

/// Per-subject (normal, seizure) window counts.
pub fn class_balance(windows: &[EegWindow]) -> BTreeMap<u32, (usize, usize)> {
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for w in windows {
        let entry = counts.entry(w.subject).or_insert((0, 0));
        if w.label == 1 {
            entry.1 += 1;
        } else {
            entry.0 += 1;
        }
    }
    counts
}

/// Render the class-balance report as stable text, one subject per line.
pub fn class_balance_report(windows: &[EegWindow]) -> String {
    let mut out = String::from("subject,normal_windows,seizure_windows\n");
    for (subject, (normal, seizure)) in class_balance(windows) {
        out.push_str(&format!("{subject},{normal},{seizure}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_recording(subject: u32, steps: usize, annotations: Vec<AnnotationInterval>) -> Recording {
        Recording::new(subject, EXPECTED_RATE, vec![0.0; steps * CHANNEL_COUNT], annotations)
            .unwrap()
    }

    #[test]
    fn window_counts_match_the_stride_formula() {
        let rec = flat_recording(0, 125_000, vec![]);
        let windows = window_signal(&rec, 250, 0.5).unwrap();
        assert_eq!(windows.len(), 999);

        let one = flat_recording(0, 250, vec![]);
        assert_eq!(window_signal(&one, 250, 0.5).unwrap().len(), 1);

        // A second window starting at 125 would need 375 steps.
        let short = flat_recording(0, 374, vec![]);
        assert_eq!(window_signal(&short, 250, 0.5).unwrap().len(), 1);
    }

    #[test]
    fn too_short_and_wrong_rate_are_reported() {
        let rec = flat_recording(0, 100, vec![]);
        assert!(matches!(
            window_signal(&rec, 250, 0.5),
            Err(DataError::TooShortRecording { needed: 250, got: 100 })
        ));
        let mut wrong = flat_recording(0, 500, vec![]);
        wrong.rate = 256.0;
        assert!(matches!(
            window_signal(&wrong, 250, 0.5),
            Err(DataError::WrongSamplingRate { .. })
        ));
    }

    #[test]
    fn labels_follow_the_strict_channel_rule() {
        // 12 channels in seizure: NOT enough (strictly more than 12 required).
        let twelve = AnnotationInterval {
            start: 0,
            end: 250,
            channels: (0..12).collect(),
        };
        let rec = flat_recording(0, 250, vec![twelve]);
        assert_eq!(window_signal(&rec, 250, 0.5).unwrap()[0].label, 0);

        let thirteen = AnnotationInterval {
            start: 0,
            end: 250,
            channels: (0..13).collect(),
        };
        let rec = flat_recording(0, 250, vec![thirteen]);
        assert_eq!(window_signal(&rec, 250, 0.5).unwrap()[0].label, 1);

        let all = AnnotationInterval {
            start: 0,
            end: 250,
            channels: (0..CHANNEL_COUNT).collect(),
        };
        let rec = flat_recording(0, 250, vec![all]);
        assert_eq!(window_signal(&rec, 250, 0.5).unwrap()[0].label, 1);
    }

    #[test]
    fn half_window_tie_labels_seizure() {
        let half = AnnotationInterval {
            start: 125,
            end: 250,
            channels: (0..13).collect(),
        };
        let rec = flat_recording(0, 250, vec![half]);
        assert_eq!(window_signal(&rec, 250, 0.5).unwrap()[0].label, 1);

        let under_half = AnnotationInterval {
            start: 126,
            end: 250,
            channels: (0..13).collect(),
        };
        let rec = flat_recording(0, 250, vec![under_half]);
        assert_eq!(window_signal(&rec, 250, 0.5).unwrap()[0].label, 0);
    }

    #[test]
    fn subject_selection_threshold_is_strict() {
        let seconds_to_steps = |s: f64| (s * EXPECTED_RATE) as usize;
        let make = |subject, seizure_seconds: f64| {
            let steps = seconds_to_steps(600.0);
            let ann = AnnotationInterval {
                start: 0,
                end: seconds_to_steps(seizure_seconds),
                channels: (0..13).collect(),
            };
            flat_recording(subject, steps, if seizure_seconds > 0.0 { vec![ann] } else { vec![] })
        };
        let recs = vec![make(0, 0.0), make(1, 251.0), make(2, 250.0)];
        assert_eq!(select_subjects(&recs), vec![1]);
    }

    #[test]
    fn loo_splits_partition_the_subjects() {
        let plan = build_loo_splits(&[3, 1, 2]).unwrap();
        assert_eq!(plan.folds.len(), 3);
        let mut tests: Vec<u32> = plan.folds.iter().map(|f| f.test_subject).collect();
        tests.sort_unstable();
        assert_eq!(tests, vec![1, 2, 3]);
        for fold in &plan.folds {
            assert_eq!(fold.num_classes(), 2);
            assert!(!fold.train_subjects.contains(&fold.test_subject));
        }
        // 14 subjects give C = 13 per fold.
        let subjects: Vec<u32> = (0..14).collect();
        let plan = build_loo_splits(&subjects).unwrap();
        assert_eq!(plan.folds.len(), 14);
        assert!(plan.folds.iter().all(|f| f.num_classes() == 13));
    }

    #[test]
    fn loo_rejects_tiny_subject_sets() {
        assert!(matches!(
            build_loo_splits(&[1, 2]),
            Err(DataError::TooFewSubjects { got: 2 })
        ));
    }

    #[test]
    fn leakage_guard_trips_on_test_subject_windows() {
        let fold = Fold {
            test_subject: 7,
            train_subjects: vec![1, 2],
        };
        let ok = EegWindow {
            values: Tensor::zeros(vec![4, CHANNEL_COUNT]),
            label: 0,
            subject: 1,
        };
        let bad = EegWindow {
            values: Tensor::zeros(vec![4, CHANNEL_COUNT]),
            label: 0,
            subject: 7,
        };
        assert!(verify_no_leakage(&fold, std::slice::from_ref(&ok)).is_ok());
        let err = verify_no_leakage(&fold, &[ok, bad]).unwrap_err();
        assert!(matches!(
            err,
            DataError::Leakage {
                test_subject: 7,
                offending_subject: 7
            }
        ));
    }
}
