//! Confusion matrices, accuracy metrics and multi-run aggregation.

use serde::{Deserialize, Serialize};

use crate::csv::{format_g, push_row};
use crate::error::{Error, Result};
use crate::gate::GateDecision;
use crate::types::{ClassLabel, NUM_CLASSES};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub m: [[u64; NUM_CLASSES]; NUM_CLASSES],
    /// Per true class, how many events were reported as jellyfish by the gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_counts: Option<[u64; NUM_CLASSES]>,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[ClassLabel], predicted: &[ClassLabel]) -> Result<Self> {
        if labels.len() != predicted.len() {
            return Err(Error::ShapeMismatch { expected: vec![labels.len()], actual: vec![predicted.len()] });
        }
        let mut m = [[0; NUM_CLASSES]; NUM_CLASSES];
        for (t, p) in labels.iter().zip(predicted) {
            m[t.index()][p.index()] += 1;
        }
        Ok(Self { m, reported_counts: None })
    }

    /// Matrix of the decisions' argmax labels plus the gate's report counts.
    pub fn from_gate(labels: &[ClassLabel], decisions: &[GateDecision]) -> Result<Self> {
        let predicted: Vec<ClassLabel> = decisions.iter().map(|d| d.predicted).collect();
        let mut cm = Self::from_predictions(labels, &predicted)?;
        let mut reported = [0; NUM_CLASSES];
        for (t, d) in labels.iter().zip(decisions) {
            reported[t.index()] += u64::from(d.reported);
        }
        cm.reported_counts = Some(reported);
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.m.iter().flatten().sum()
    }

    pub fn row_total(&self, label: ClassLabel) -> u64 {
        self.m[label.index()].iter().sum()
    }

    pub fn diagonal(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|c| self.m[c][c])
    }

    /// Trace over total.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyInput("confusion matrix is empty"));
        }
        Ok(self.diagonal().iter().sum::<u64>() as f64 / total as f64)
    }

    /// `None` for classes without any events.
    pub fn per_class_accuracy(&self) -> Result<[Option<f64>; NUM_CLASSES]> {
        if self.total() == 0 {
            return Err(Error::EmptyInput("confusion matrix is empty"));
        }
        Ok(std::array::from_fn(|c| {
            let row: u64 = self.m[c].iter().sum();
            (row > 0).then(|| self.m[c][c] as f64 / row as f64)
        }))
    }

    /// Events reported as jellyfish, per true class: the gate's counts when
    /// present, otherwise the jellyfish column.
    fn jellyfish_reports(&self) -> [u64; NUM_CLASSES] {
        let j = ClassLabel::Jellyfish.index();
        self.reported_counts.unwrap_or_else(|| std::array::from_fn(|c| self.m[c][j]))
    }

    /// Reported true jellyfish over all true jellyfish.
    pub fn jellyfish_accuracy(&self) -> Option<f64> {
        let j = ClassLabel::Jellyfish.index();
        let total = self.row_total(ClassLabel::Jellyfish);
        (total > 0).then(|| self.jellyfish_reports()[j] as f64 / total as f64)
    }

    pub fn jellyfish_fp(&self) -> u64 {
        let j = ClassLabel::Jellyfish.index();
        self.jellyfish_reports().iter().enumerate().filter(|(c, _)| *c != j).map(|(_, n)| n).sum()
    }

    pub fn non_jellyfish_total(&self) -> u64 {
        self.total() - self.row_total(ClassLabel::Jellyfish)
    }

    /// False jellyfish reports over non-jellyfish events.
    pub fn jellyfish_fp_proportion(&self) -> Option<f64> {
        let n = self.non_jellyfish_total();
        (n > 0).then(|| self.jellyfish_fp() as f64 / n as f64)
    }

    /// `true\pred` grid with class short names.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header = vec!["true\\pred".to_string()];
        header.extend(ClassLabel::ALL.iter().map(|l| l.short_name().to_string()));
        if self.reported_counts.is_some() {
            header.push("reported".into());
        }
        push_row(&mut out, &header);
        for (c, row) in self.m.iter().enumerate() {
            let mut fields = vec![ClassLabel::ALL[c].short_name().to_string()];
            fields.extend(row.iter().map(u64::to_string));
            if let Some(r) = self.reported_counts {
                fields.push(r[c].to_string());
            }
            push_row(&mut out, &fields);
        }
        out
    }
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mean of no values"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Standard deviation with the `n - 1` denominator.
pub fn sample_std(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!("sample std needs at least 2 values, got {}", values.len())));
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Sum over classes of the across-run sample std of true positives.
/// `runs[r][c]` is the true-positive count of class `c` in run `r`.
pub fn std_sum(runs: &[Vec<f64>]) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 runs, got {}", runs.len())));
    }
    let k = runs[0].len();
    if let Some(r) = runs.iter().find(|r| r.len() != k) {
        return Err(Error::ShapeMismatch { expected: vec![k], actual: vec![r.len()] });
    }
    (0..k).map(|c| sample_std(&runs.iter().map(|r| r[c]).collect::<Vec<_>>())).sum()
}

pub fn std_sum_metric(matrices: &[ConfusionMatrix]) -> Result<f64> {
    let runs: Vec<Vec<f64>> = matrices.iter().map(|m| m.diagonal().iter().map(|&v| v as f64).collect()).collect();
    std_sum(&runs)
}

/// Divides every value by `baseline`.
pub fn normalize(values: &[f64], baseline: f64) -> Result<Vec<f64>> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot normalise by baseline {baseline}")));
    }
    Ok(values.iter().map(|v| v / baseline).collect())
}

/// Metrics of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub frame_accuracy: f64,
    pub matrix: ConfusionMatrix,
}

impl RunMetrics {
    pub fn event_accuracy(&self) -> Result<f64> {
        self.matrix.accuracy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self { mean: mean(values)?, std: sample_std(values)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunMetrics>,
    pub frame_accuracy: MeanStd,
    pub event_accuracy: MeanStd,
    /// Over runs whose test set holds jellyfish; `None` when fewer than two do.
    pub jellyfish_accuracy: Option<MeanStd>,
    pub jellyfish_fp: MeanStd,
    pub jellyfish_fp_proportion: Option<MeanStd>,
    pub std_sum: f64,
    pub mean_matrix: [[f64; NUM_CLASSES]; NUM_CLASSES],
}

fn optional(values: Vec<Option<f64>>) -> Result<Option<MeanStd>> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    if present.len() < 2 {
        return Ok(None);
    }
    MeanStd::of(&present).map(Some)
}

pub fn aggregate_runs(runs: &[RunMetrics]) -> Result<RunReport> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 runs for std reporting, got {}", runs.len())));
    }
    let event_acc = runs.iter().map(|r| r.event_accuracy()).collect::<Result<Vec<_>>>()?;
    let mut mean_matrix = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    for r in runs {
        for (row, src) in mean_matrix.iter_mut().zip(&r.matrix.m) {
            for (v, s) in row.iter_mut().zip(src) {
                *v += *s as f64 / runs.len() as f64;
            }
        }
    }
    let matrices: Vec<ConfusionMatrix> = runs.iter().map(|r| r.matrix.clone()).collect();
    Ok(RunReport {
        frame_accuracy: MeanStd::of(&runs.iter().map(|r| r.frame_accuracy).collect::<Vec<_>>())?,
        event_accuracy: MeanStd::of(&event_acc)?,
        jellyfish_accuracy: optional(runs.iter().map(|r| r.matrix.jellyfish_accuracy()).collect())?,
        jellyfish_fp: MeanStd::of(&runs.iter().map(|r| r.matrix.jellyfish_fp() as f64).collect::<Vec<_>>())?,
        jellyfish_fp_proportion: optional(runs.iter().map(|r| r.matrix.jellyfish_fp_proportion()).collect())?,
        std_sum: std_sum_metric(&matrices)?,
        mean_matrix,
        runs: runs.to_vec(),
    })
}

impl RunReport {
    /// `metric,mean,std` rows; metrics without data are left out.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std\n");
        let rows = [
            ("frame_accuracy", Some(self.frame_accuracy)),
            ("event_accuracy", Some(self.event_accuracy)),
            ("jellyfish_accuracy", self.jellyfish_accuracy),
            ("jellyfish_fp", Some(self.jellyfish_fp)),
            ("jellyfish_fp_proportion", self.jellyfish_fp_proportion),
        ];
        for (name, v) in rows {
            if let Some(v) = v {
                push_row(&mut out, &[name.to_string(), format_g(v.mean, 9), format_g(v.std, 9)]);
            }
        }
        push_row(&mut out, &["std_sum".to_string(), format_g(self.std_sum, 9), String::new()]);
        out
    }

    pub fn mean_matrix_csv(&self) -> String {
        let mut out = String::new();
        let mut header = vec!["true\\pred".to_string()];
        header.extend(ClassLabel::ALL.iter().map(|l| l.short_name().to_string()));
        push_row(&mut out, &header);
        for (c, row) in self.mean_matrix.iter().enumerate() {
            let mut fields = vec![ClassLabel::ALL[c].short_name().to_string()];
            fields.extend(row.iter().map(|v| format_g(*v, 9)));
            push_row(&mut out, &fields);
        }
        out
    }
}
