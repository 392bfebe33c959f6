//! End-to-end runs. One seed goes through split, frame training, optional
//! GAN enhancement, event fusion and gating; recipes that share a stage
//! share its trained artifact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::csv::{format_g, push_row};
use crate::error::{Error, Result};
use crate::evalkit::{aggregate_runs, ConfusionMatrix, RunMetrics, RunReport};
use crate::eventfuse::{fuse_all_by_average, fuse_all_by_network, train_fusion, FusionTrainConfig};
use crate::framecls::{classify_events, frame_accuracy, spread_indices, train_frame_classifier, FrameTrainConfig};
use crate::ganaug::{plan_enhancement, synthesize, train_gan, GanConfig, Strategy};
use crate::gate::{apply_gate, GateConfig};
use crate::nnkit::{LossWeights, Model};
use crate::split::split_dataset;
use crate::types::{ClassCounts, ClassLabel, ConfidenceSequence, ConfidenceVector, Event, SplitSpec, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceConfig {
    pub strategy: Strategy,
    pub fraction: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self { strategy: Strategy::Equal, fraction: 0.1 }
    }
}

/// Everything a seed run needs besides the data. Per-stage `seed` fields
/// are replaced by the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub split: SplitSpec,
    pub frame: FrameTrainConfig,
    pub gan: GanConfig,
    pub enhance: EnhanceConfig,
    pub fusion: FusionTrainConfig,
    pub gate: GateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fusion {
    Average,
    Network(LossWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    /// Frame classifier trained on real plus GAN-generated frames.
    pub generated: bool,
    pub fusion: Fusion,
    pub gate: Option<GateConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    A,
    B,
    C,
    D,
    E,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::A, Method::B, Method::C, Method::D, Method::E];

    pub fn title(self) -> &'static str {
        match self {
            Method::A => "A Baseline",
            Method::B => "B + Generated data",
            Method::C => "C + Event classifier",
            Method::D => "D + Weighted loss",
            Method::E => "E + Confidence threshold",
        }
    }

    /// Each method adds one stage to the one before. C trains fusion with
    /// unit weights, D and E with the configured ones.
    pub fn recipe(self, cfg: &RunConfig) -> Recipe {
        let weighted = Fusion::Network(cfg.fusion.loss_weights);
        let (generated, fusion, gate) = match self {
            Method::A => (false, Fusion::Average, None),
            Method::B => (true, Fusion::Average, None),
            Method::C => (true, Fusion::Network(LossWeights::default()), None),
            Method::D => (true, weighted, None),
            Method::E => (true, weighted, Some(cfg.gate)),
        };
        Recipe { generated, fusion, gate }
    }
}

/// Test-set outcome of one recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeResult {
    pub recipe: Recipe,
    pub metrics: RunMetrics,
    pub event_ids: Vec<u64>,
    pub predictions: Vec<ConfidenceVector>,
    pub labels: Vec<ClassLabel>,
}

/// Frames per class as the frame trainer sees them.
pub fn training_frame_counts(events: &[Event], frames_per_event: usize) -> ClassCounts {
    let mut counts = [0u64; NUM_CLASSES];
    for e in events {
        let n = if frames_per_event == 0 { e.len() } else { spread_indices(e.len(), frames_per_event).len() };
        counts[e.label.index()] += n as u64;
    }
    ClassCounts(counts)
}

pub fn labelled(seqs: &[ConfidenceSequence], events: &[Event]) -> Vec<(ConfidenceSequence, ClassLabel)> {
    seqs.iter().cloned().zip(events.iter().map(|e| e.label)).collect()
}

struct Stage {
    fusion_train: Vec<(ConfidenceSequence, ClassLabel)>,
    test: Vec<ConfidenceSequence>,
    frame_accuracy: f64,
}

fn frame_stage(train: &[Event], split_val: &[Event], fit_on: &[Event], test: &[Event], cfg: &FrameTrainConfig) -> Result<Stage> {
    let (model, _) = train_frame_classifier(fit_on, split_val, cfg)?;
    let test_seqs = classify_events(&model, test)?;
    let real_train: Vec<Event> = train.iter().chain(split_val).cloned().collect();
    let train_seqs = classify_events(&model, &real_train)?;
    Ok(Stage {
        frame_accuracy: frame_accuracy(&test_seqs, test)?,
        fusion_train: labelled(&train_seqs, &real_train),
        test: test_seqs,
    })
}

/// Generated frames for the training split of one run.
pub fn enhancement_events(train: &[Event], all: &[Event], cfg: &RunConfig, seed: u64) -> Result<Vec<Event>> {
    let real = training_frame_counts(train, cfg.frame.frames_per_event);
    let plan = plan_enhancement(&real, cfg.enhance.strategy, cfg.enhance.fraction)?;
    let (gan, _) = train_gan(train, &cfg.gan, seed)?;
    let first_id = all.iter().map(|e| e.id).max().map_or(0, |m| m + 1);
    synthesize(&gan, &plan, first_id, seed)
}

/// Runs every recipe on one seed. The test set is the split's test part
/// followed by `extra_test`. Fusion networks train on the real train and
/// validation sequences with no early stopping.
pub fn run_seed(events: &[Event], extra_test: &[Event], cfg: &RunConfig, seed: u64, recipes: &[Recipe]) -> Result<Vec<RecipeResult>> {
    if recipes.is_empty() {
        return Err(Error::InvalidArgument("no recipes to run".into()));
    }
    let split = split_dataset(events, &cfg.split, seed)?;
    let test: Vec<Event> = split.test.iter().chain(extra_test).cloned().collect();
    if test.is_empty() {
        return Err(Error::EmptyInput("no test events"));
    }
    let labels: Vec<ClassLabel> = test.iter().map(|e| e.label).collect();
    let event_ids: Vec<u64> = test.iter().map(|e| e.id).collect();
    let frame_cfg = FrameTrainConfig { seed, ..cfg.frame };

    let mut stages: BTreeMap<bool, Stage> = BTreeMap::new();
    for generated in [false, true] {
        if !recipes.iter().any(|r| r.generated == generated) {
            continue;
        }
        let stage = if generated {
            let mut fit_on = split.train.clone();
            fit_on.extend(enhancement_events(&split.train, events, cfg, seed)?);
            frame_stage(&split.train, &split.val, &fit_on, &test, &frame_cfg)?
        } else {
            frame_stage(&split.train, &split.val, &split.train, &test, &frame_cfg)?
        };
        stages.insert(generated, stage);
    }

    let mut fused: Vec<((bool, Fusion), Vec<ConfidenceVector>)> = Vec::new();
    let mut out = Vec::with_capacity(recipes.len());
    for recipe in recipes {
        let stage = &stages[&recipe.generated];
        let key = (recipe.generated, recipe.fusion);
        let preds = match fused.iter().find(|(k, _)| *k == key) {
            Some((_, p)) => p.clone(),
            None => {
                let p = match recipe.fusion {
                    Fusion::Average => fuse_all_by_average(&stage.test)?,
                    Fusion::Network(weights) => {
                        let fcfg = FusionTrainConfig { loss_weights: weights, seed, ..cfg.fusion };
                        let (model, _) = train_fusion(&stage.fusion_train, &[], &fcfg)?;
                        fuse_all_by_network(&model, &stage.test)?
                    }
                };
                fused.push((key, p.clone()));
                p
            }
        };
        let matrix = match &recipe.gate {
            Some(g) => {
                let decisions: Vec<_> = event_ids.iter().zip(&preds).map(|(id, p)| apply_gate(*id, p, g)).collect();
                ConfusionMatrix::from_gate(&labels, &decisions)?
            }
            None => ConfusionMatrix::from_predictions(&labels, &preds.iter().map(|p| p.argmax()).collect::<Vec<_>>())?,
        };
        out.push(RecipeResult {
            recipe: *recipe,
            metrics: RunMetrics { seed, frame_accuracy: stage.frame_accuracy, matrix },
            event_ids: event_ids.clone(),
            predictions: preds,
            labels: labels.clone(),
        });
    }
    Ok(out)
}

/// The frame classifier of a recipe's first stage, for callers that want
/// to keep it. Trains exactly as [`run_seed`] does.
pub fn train_stage_model(events: &[Event], cfg: &RunConfig, seed: u64, generated: bool) -> Result<Model> {
    let split = split_dataset(events, &cfg.split, seed)?;
    let mut fit_on = split.train.clone();
    if generated {
        fit_on.extend(enhancement_events(&split.train, events, cfg, seed)?);
    }
    Ok(train_frame_classifier(&fit_on, &split.val, &FrameTrainConfig { seed, ..cfg.frame })?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub methods: Vec<(Method, RunReport)>,
}

/// Methods A to E over `seeds`, each a [`RunReport`].
pub fn run_ladder(events: &[Event], cfg: &RunConfig, seeds: &[u64]) -> Result<(LadderReport, Vec<Vec<RecipeResult>>)> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 runs for std reporting, got {}", seeds.len())));
    }
    let recipes: Vec<Recipe> = Method::ALL.iter().map(|m| m.recipe(cfg)).collect();
    let per_seed = seeds.iter().map(|&s| run_seed(events, &[], cfg, s, &recipes)).collect::<Result<Vec<_>>>()?;
    let methods = Method::ALL
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let runs: Vec<RunMetrics> = per_seed.iter().map(|r| r[i].metrics.clone()).collect();
            Ok((m, aggregate_runs(&runs)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((LadderReport { methods }, per_seed))
}

impl LadderReport {
    /// `method,frame_acc,event_acc,jelly_acc,jelly_fp`, means over runs;
    /// `jelly_fp` is the proportion of non-jellyfish events reported.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,frame_acc,event_acc,jelly_acc,jelly_fp\n");
        let opt = |v: Option<f64>| v.map(|v| format_g(v, 9)).unwrap_or_default();
        for (m, r) in &self.methods {
            push_row(
                &mut out,
                &[
                    m.title().to_string(),
                    format_g(r.frame_accuracy.mean, 9),
                    format_g(r.event_accuracy.mean, 9),
                    opt(r.jellyfish_accuracy.map(|v| v.mean)),
                    opt(r.jellyfish_fp_proportion.map(|v| v.mean)),
                ],
            );
        }
        out
    }
}
