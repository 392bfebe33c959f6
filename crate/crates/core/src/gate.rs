//! Jellyfish confidence gating and the threshold sweep.
//!
//! Only jellyfish predictions are gated. A gated-out event keeps its
//! jellyfish argmax label; it is just not reported.

use serde::{Deserialize, Serialize};

use crate::csv::{format_g, push_row};
use crate::error::{Error, Result};
use crate::types::{ClassLabel, ConfidenceVector};

pub const DEFAULT_TAU: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub tau: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

impl GateConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(Self { tau })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub event_id: u64,
    pub predicted: ClassLabel,
    pub confidence: f64,
    pub reported: bool,
}

fn reported_at(pred: &ConfidenceVector, tau: f64) -> bool {
    pred.argmax() == ClassLabel::Jellyfish && pred.max_prob() >= tau.min(1.0)
}

pub fn apply_gate(event_id: u64, pred: &ConfidenceVector, cfg: &GateConfig) -> GateDecision {
    GateDecision {
        event_id,
        predicted: pred.argmax(),
        confidence: pred.max_prob(),
        reported: reported_at(pred, cfg.tau),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// Reported true jellyfish over all true jellyfish (0 when there are none).
    pub tp_rate: f64,
    /// Reported events whose true class is not jellyfish.
    pub fp_count: usize,
    /// `fp_count` over the number of non-jellyfish events (0 when there are none).
    pub fp_rate: f64,
}

/// Thresholds above 1 behave as 1.
pub fn sweep_threshold(preds: &[ConfidenceVector], labels: &[ClassLabel], taus: &[f64]) -> Result<Vec<SweepPoint>> {
    if taus.is_empty() {
        return Err(Error::EmptyInput("empty threshold list"));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions to sweep"));
    }
    if preds.len() != labels.len() {
        return Err(Error::ShapeMismatch { expected: vec![labels.len()], actual: vec![preds.len()] });
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidArgument(format!("threshold must be non-negative, got {t}")));
    }
    let jelly = labels.iter().filter(|l| **l == ClassLabel::Jellyfish).count();
    let other = labels.len() - jelly;
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Ok(taus
        .iter()
        .map(|&tau| {
            let (mut tp, mut fp) = (0, 0);
            for (p, l) in preds.iter().zip(labels) {
                if reported_at(p, tau) {
                    if *l == ClassLabel::Jellyfish {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            SweepPoint { tau, tp_rate: ratio(tp, jelly), fp_count: fp, fp_rate: ratio(fp, other) }
        })
        .collect())
}

/// `min, min + step, ...` up to `max` inclusive, computed as `min + i * step`
/// and rounded to 12 decimals so the grid points print cleanly.
pub fn tau_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(min >= 0.0) || !(max >= min) {
        return Err(Error::InvalidArgument(format!("invalid sweep grid {min}..{max} step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12).collect())
}

pub fn default_tau_grid() -> Vec<f64> {
    tau_grid(0.0, 0.95, 0.05).expect("valid grid")
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("tau,tp_rate,fp_count,fp_rate\n");
    for p in points {
        push_row(
            &mut out,
            &[format_g(p.tau, 9), format_g(p.tp_rate, 9), p.fp_count.to_string(), format_g(p.fp_rate, 9)],
        );
    }
    out
}

/// A sweep averaged over runs that share the threshold grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSweepPoint {
    pub tau: f64,
    pub tp_rate: f64,
    pub fp_count: f64,
    pub fp_rate: f64,
}

pub fn average_sweeps(curves: &[Vec<SweepPoint>]) -> Result<Vec<MeanSweepPoint>> {
    let first = curves.first().ok_or(Error::EmptyInput("no sweeps to average"))?;
    if curves.iter().any(|c| c.len() != first.len() || c.iter().zip(first).any(|(a, b)| a.tau != b.tau)) {
        return Err(Error::InvalidArgument("sweeps use different threshold grids".into()));
    }
    let n = curves.len() as f64;
    Ok((0..first.len())
        .map(|i| MeanSweepPoint {
            tau: first[i].tau,
            tp_rate: curves.iter().map(|c| c[i].tp_rate).sum::<f64>() / n,
            fp_count: curves.iter().map(|c| c[i].fp_count as f64).sum::<f64>() / n,
            fp_rate: curves.iter().map(|c| c[i].fp_rate).sum::<f64>() / n,
        })
        .collect())
}

pub fn mean_sweep_csv(points: &[MeanSweepPoint]) -> String {
    let mut out = String::from("tau,tp_rate,fp_count,fp_rate\n");
    for p in points {
        push_row(&mut out, &[p.tau, p.tp_rate, p.fp_count, p.fp_rate].map(|v| format_g(v, 9)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(probs: [f64; 6]) -> ConfidenceVector {
        ConfidenceVector::new(probs).unwrap()
    }

    #[test]
    fn jellyfish_below_threshold_not_reported() {
        let d = apply_gate(7, &vector([0.1, 0.44, 0.1, 0.12, 0.12, 0.12]), &GateConfig::default());
        assert_eq!(d.predicted, ClassLabel::Jellyfish);
        assert!(!d.reported);
        assert!((d.confidence - 0.44).abs() < 1e-12);
    }

    #[test]
    fn other_classes_never_reported() {
        let p = vector([0.16, 0.16, 0.16, 0.2, 0.16, 0.16]);
        for tau in [0.0, 0.1, 0.5] {
            let d = apply_gate(0, &p, &GateConfig::new(tau).unwrap());
            assert_eq!(d.predicted, ClassLabel::Fish);
            assert!(!d.reported);
        }
    }

    #[test]
    fn tau_zero_reports_every_jellyfish_argmax() {
        let p = vector([0.2, 0.21, 0.2, 0.19, 0.1, 0.1]);
        assert!(apply_gate(0, &p, &GateConfig::new(0.0).unwrap()).reported);
    }

    #[test]
    fn tau_above_one_acts_as_one() {
        let preds = [ConfidenceVector::one_hot(ClassLabel::Jellyfish), vector([0.0, 0.9, 0.1, 0.0, 0.0, 0.0])];
        let labels = [ClassLabel::Jellyfish, ClassLabel::Jellyfish];
        let pts = sweep_threshold(&preds, &labels, &[1.0 + 1e-9]).unwrap();
        assert_eq!(pts[0].tp_rate, 0.5);
    }

    #[test]
    fn config_range_checked() {
        assert!(GateConfig::new(-0.1).is_err());
        assert!(GateConfig::new(1.5).is_err());
    }

    #[test]
    fn grid_matches_default() {
        let g = default_tau_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[9], 0.45);
        assert_eq!(g[19], 0.95);
    }

    #[test]
    fn empty_taus_rejected() {
        let preds = [ConfidenceVector::one_hot(ClassLabel::Jellyfish)];
        assert!(sweep_threshold(&preds, &[ClassLabel::Jellyfish], &[]).is_err());
    }
}
