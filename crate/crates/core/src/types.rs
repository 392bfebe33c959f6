//! Domain types shared by every stage of the pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 6;
pub const FRAME_WIDTH: usize = 32;
pub const FRAME_HEIGHT: usize = 32;
pub const MIN_EVENT_FRAMES: usize = 4;
pub const MAX_EVENT_FRAMES: usize = 300;

/// Object category. Discriminants follow the column order of the labelled
/// object summary (B, J, A, F, Sw, Sd), which is also the row/column order
/// of every confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    Background = 0,
    Jellyfish = 1,
    Artefacts = 2,
    Fish = 3,
    Seaweed = 4,
    Sediment = 5,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Background,
        ClassLabel::Jellyfish,
        ClassLabel::Artefacts,
        ClassLabel::Fish,
        ClassLabel::Seaweed,
        ClassLabel::Sediment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("class index {index} out of range 0..6")))
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ClassLabel::Background => "B",
            ClassLabel::Jellyfish => "J",
            ClassLabel::Artefacts => "A",
            ClassLabel::Fish => "F",
            ClassLabel::Seaweed => "Sw",
            ClassLabel::Sediment => "Sd",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ClassLabel::Background => "Background",
            ClassLabel::Jellyfish => "Jellyfish",
            ClassLabel::Artefacts => "Artefacts",
            ClassLabel::Fish => "Fish",
            ClassLabel::Seaweed => "Seaweed",
            ClassLabel::Sediment => "Sediment",
        };
        f.write_str(name)
    }
}

impl From<ClassLabel> for u8 {
    fn from(label: ClassLabel) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::from_index(value as usize)
    }
}

/// One grayscale sonar patch, row-major 8-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                actual: vec![pixels.len()],
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixels scaled to `[0, 1]`, the input normalization of every network.
    pub fn normalized(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect()
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / self.pixels.len() as f64
    }
}

/// One tracked object: an ordered frame sequence with a single label.
///
/// Real events hold 4 to 300 frames. Synthetic events produced by the
/// generator hold exactly one frame and carry `synthetic == true`; they are
/// only ever used as frame-classifier training input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: u64,
    pub label: ClassLabel,
    pub environment_id: u32,
    pub synthetic: bool,
    frames: Vec<Frame>,
}

impl Event {
    pub fn new(id: u64, label: ClassLabel, environment_id: u32, frames: Vec<Frame>) -> Result<Self> {
        if !(MIN_EVENT_FRAMES..=MAX_EVENT_FRAMES).contains(&frames.len()) {
            return Err(Error::InvalidArgument(format!(
                "event {id} has {} frames, expected {MIN_EVENT_FRAMES}..={MAX_EVENT_FRAMES}",
                frames.len()
            )));
        }
        check_uniform_frames(&frames)?;
        Ok(Self { id, label, environment_id, synthetic: false, frames })
    }

    pub fn synthetic(id: u64, label: ClassLabel, frame: Frame) -> Self {
        Self { id, label, environment_id: u32::MAX, synthetic: true, frames: vec![frame] }
    }

    /// Rebuilds an event from storage, where the synthetic flag decides
    /// which length bound applies.
    pub(crate) fn from_parts(
        id: u64,
        label: ClassLabel,
        environment_id: u32,
        synthetic: bool,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        if synthetic {
            if frames.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "synthetic event {id} has {} frames, expected 1",
                    frames.len()
                )));
            }
            Ok(Self { id, label, environment_id, synthetic, frames })
        } else {
            Self::new(id, label, environment_id, frames)
        }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn check_uniform_frames(frames: &[Frame]) -> Result<()> {
    if let Some(first) = frames.first() {
        for f in frames {
            if f.width != first.width || f.height != first.height {
                return Err(Error::ShapeMismatch {
                    expected: vec![first.height, first.width],
                    actual: vec![f.height, f.width],
                });
            }
        }
    }
    Ok(())
}

/// A probability vector over the six classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector([f64; NUM_CLASSES]);

impl ConfidenceVector {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: [f64; NUM_CLASSES]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidArgument(format!("probabilities out of [0,1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(label: ClassLabel) -> Self {
        let mut p = [0.0; NUM_CLASSES];
        p[label.index()] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, label: ClassLabel) -> f64 {
        self.0[label.index()]
    }

    /// Highest-probability class; exact ties go to the lowest index.
    pub fn argmax(&self) -> ClassLabel {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        ClassLabel::ALL[best]
    }

    pub fn max_prob(&self) -> f64 {
        self.0[self.argmax().index()]
    }
}

/// Per-frame confidences for one event, in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSequence {
    pub event_id: u64,
    pub vectors: Vec<ConfidenceVector>,
}

impl ConfidenceSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Ground-truth sequence: every frame one-hot on `label`.
    pub fn one_hot(event_id: u64, label: ClassLabel, len: usize) -> Self {
        Self { event_id, vectors: vec![ConfidenceVector::one_hot(label); len] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassCounts(pub [u64; NUM_CLASSES]);

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn get(&self, label: ClassLabel) -> u64 {
        self.0[label.index()]
    }

    pub fn of_events<'a>(events: impl IntoIterator<Item = &'a Event>) -> Self {
        let mut counts = [0; NUM_CLASSES];
        for e in events {
            counts[e.label.index()] += 1;
        }
        Self(counts)
    }

    /// Labelled object totals across all six deployments.
    pub const fn full_corpus() -> Self {
        Self([5500, 581, 1855, 6390, 1556, 3136])
    }

    /// Corpus totals divided by 100 and rounded: the desk-scale default.
    pub const fn desk_scale() -> Self {
        Self([55, 6, 19, 64, 16, 31])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SplitMode {
    RandomSplit,
    LeaveOneEnvironmentOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub mode: SplitMode,
    pub held_out_environment: Option<u32>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::default_random()
    }
}

impl SplitSpec {
    pub fn random(train_frac: f64, val_frac: f64, test_frac: f64) -> Self {
        Self { train_frac, val_frac, test_frac, mode: SplitMode::RandomSplit, held_out_environment: None }
    }

    /// 75/12.5/12.5 random split.
    pub fn default_random() -> Self {
        Self::random(0.75, 0.125, 0.125)
    }

    pub fn leave_out(held_out_environment: u32) -> Self {
        Self {
            train_frac: 0.75,
            val_frac: 0.125,
            test_frac: 0.125,
            mode: SplitMode::LeaveOneEnvironmentOut,
            held_out_environment: Some(held_out_environment),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidArgument(format!("negative or non-finite split fraction: {fracs:?}")));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions sum to {sum}, not 1")));
        }
        match (self.mode, self.held_out_environment) {
            (SplitMode::RandomSplit, None) | (SplitMode::LeaveOneEnvironmentOut, Some(_)) => Ok(()),
            (SplitMode::RandomSplit, Some(_)) => {
                Err(Error::InvalidArgument("held_out_environment given for RANDOM_SPLIT".into()))
            }
            (SplitMode::LeaveOneEnvironmentOut, None) => Err(Error::InvalidArgument(
                "LEAVE_ONE_ENVIRONMENT_OUT requires held_out_environment".into(),
            )),
        }
    }
}
