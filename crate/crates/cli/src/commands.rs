use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jellymon::benchkit::{bench_csv, bench_event_latency, BenchMetadata};
use jellymon::evalkit::{aggregate_runs, ConfusionMatrix, RunMetrics};
use jellymon::eventfuse::{
    build_fusion_model, fuse_all_by_network, fusion_network, predictions_csv, read_predictions_csv, train_fusion,
    FusionTrainConfig,
};
use jellymon::framecls::{
    build_frame_model, classify_events, confidences_csv, frame_accuracy, frame_network, train_frame_classifier,
    FrameTrainConfig,
};
use jellymon::ganaug::{plan_enhancement, synthesize, train_gan, GanModels};
use jellymon::gate::{average_sweeps, mean_sweep_csv, sweep_threshold, tau_grid, GateConfig};
use jellymon::nnkit::{load_model, save_model, LossWeights, Model, Network};
use jellymon::pipeline::{labelled, run_ladder, run_seed, training_frame_counts, Fusion, Recipe};
use jellymon::sonargen::{generate_dataset, load_dataset, save_dataset};
use jellymon::{split_dataset, Event};
use serde::Serialize;

use crate::config::Config;
use crate::Command;

pub const MODEL_DIR: &str = "model";

fn setup(config: Option<&Path>, out: &Path, apply: impl FnOnce(&mut Config) -> Result<()>) -> Result<Config> {
    let mut cfg = Config::load(config)?;
    apply(&mut cfg)?;
    cfg.validate()?;
    cfg.echo(out)?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    write(path, json)
}

fn load_events(dir: &Path) -> Result<Vec<Event>> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn events_or_generated(data: Option<&Path>, cfg: &Config) -> Result<Vec<Event>> {
    match data {
        Some(d) => load_events(d),
        None => Ok(generate_dataset(&cfg.gen)?),
    }
}

/// Accepts either a model directory or a command output holding `model/`.
fn load_net(net: Network, dir: &Path) -> Result<Model> {
    let nested = dir.join(MODEL_DIR);
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let params = load_model(&dir).with_context(|| format!("loading model {}", dir.display()))?;
    Model::new(net, params).with_context(|| format!("model {} does not fit this network", dir.display()))
}

fn weights(base: LossWeights, wx: Option<f64>, wy: Option<f64>) -> Result<LossWeights> {
    use jellymon::ClassLabel::{Jellyfish, Seaweed};
    Ok(LossWeights::jellyfish_seaweed(wx.unwrap_or(base.get(Jellyfish)), wy.unwrap_or(base.get(Seaweed)))?)
}

/// `*.csv` files under each path; directories are searched one level deep
/// and in sorted order.
fn prediction_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "csv"));
            found.sort();
            if found.is_empty() {
                bail!("no predictions CSV files in {}", p.display());
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { common, seed } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                if let Some(s) = seed {
                    c.gen.seed = s;
                }
                Ok(())
            })?;
            let events = generate_dataset(&cfg.gen)?;
            save_dataset(&events, &common.out)?;
            println!("{}", serde_json::json!({ "events": events.len(), "out": common.out }));
        }

        Command::TrainFrame { common, data, seed, synth, epochs } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.frame.epochs = epochs.unwrap_or(c.frame.epochs);
                Ok(())
            })?;
            let events = load_events(&data)?;
            let split = split_dataset(&events, &cfg.split, seed)?;
            let mut train = split.train.clone();
            if let Some(s) = synth {
                train.extend(load_events(&s)?);
            }
            let (model, log) = train_frame_classifier(&train, &split.val, &FrameTrainConfig { seed, ..cfg.frame })?;
            save_model(model.params(), &common.out.join(MODEL_DIR))?;
            write_json(&common.out.join("log.json"), &log)?;
            let seqs = classify_events(&model, &split.test)?;
            write(&common.out.join("confidences.csv"), confidences_csv(&seqs, &split.test)?)?;
            let acc = if split.test.is_empty() { None } else { Some(frame_accuracy(&seqs, &split.test)?) };
            println!("{}", serde_json::json!({ "best_epoch": log.best_epoch, "test_frame_accuracy": acc }));
        }

        Command::TrainGan { common, data, seed, epochs, steps } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.gan.epochs = epochs.unwrap_or(c.gan.epochs);
                c.gan.steps_per_epoch = steps.unwrap_or(c.gan.steps_per_epoch);
                Ok(())
            })?;
            let events = load_events(&data)?;
            let split = split_dataset(&events, &cfg.split, seed)?;
            let (gan, log) = train_gan(&split.train, &cfg.gan, seed)?;
            gan.save(&common.out)?;
            write_json(&common.out.join("log.json"), &log)?;
            println!("{}", serde_json::json!({ "classes": gan.classes, "epochs": log.len() }));
        }

        Command::Synth { common, gan, data, strategy, fraction, seed } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.enhance.strategy = strategy.unwrap_or(c.enhance.strategy);
                c.enhance.fraction = fraction.unwrap_or(c.enhance.fraction);
                Ok(())
            })?;
            let gan = GanModels::load(&gan).with_context(|| format!("loading GAN {}", gan.display()))?;
            let events = load_events(&data)?;
            let split = split_dataset(&events, &cfg.split, seed)?;
            let real = training_frame_counts(&split.train, cfg.frame.frames_per_event);
            let plan = plan_enhancement(&real, cfg.enhance.strategy, cfg.enhance.fraction)?;
            let first_id = events.iter().map(|e| e.id).max().map_or(0, |m| m + 1);
            let synth = synthesize(&gan, &plan, first_id, seed)?;
            save_dataset(&synth, &common.out)?;
            write_json(&common.out.join("plan.json"), &plan)?;
            println!("{}", serde_json::json!({ "added": plan.added, "events": synth.len() }));
        }

        Command::TrainEvent { common, frame_model, data, wx, wy, seed } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.fusion.loss_weights = weights(c.fusion.loss_weights, wx, wy)?;
                Ok(())
            })?;
            let frame = load_net(frame_network(), &frame_model)?;
            let events = load_events(&data)?;
            let split = split_dataset(&events, &cfg.split, seed)?;
            let fit_events: Vec<Event> = split.train.iter().chain(&split.val).cloned().collect();
            let fit_seqs = classify_events(&frame, &fit_events)?;
            let (model, log) = train_fusion(&labelled(&fit_seqs, &fit_events), &[], &FusionTrainConfig { seed, ..cfg.fusion })?;
            save_model(model.params(), &common.out.join(MODEL_DIR))?;
            write_json(&common.out.join("log.json"), &log)?;
            if split.test.is_empty() {
                println!("{}", serde_json::json!({ "test_events": 0 }));
                return Ok(());
            }
            let test_seqs = classify_events(&frame, &split.test)?;
            let preds = fuse_all_by_network(&model, &test_seqs)?;
            let ids: Vec<u64> = split.test.iter().map(|e| e.id).collect();
            let labels: Vec<_> = split.test.iter().map(|e| e.label).collect();
            write(&common.out.join("predictions.csv"), predictions_csv(&ids, &preds, &labels)?)?;
            let matrix = ConfusionMatrix::from_predictions(&labels, &preds.iter().map(|p| p.argmax()).collect::<Vec<_>>())?;
            write(&common.out.join("matrix.csv"), matrix.to_csv())?;
            println!(
                "{}",
                serde_json::json!({ "event_accuracy": matrix.accuracy()?, "jellyfish_accuracy": matrix.jellyfish_accuracy() })
            );
        }

        Command::Eval { common, data, runs, threshold, wx, wy, generated, average } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.eval.runs = runs.unwrap_or(c.eval.runs);
                c.gate.tau = threshold.unwrap_or(c.gate.tau);
                c.fusion.loss_weights = weights(c.fusion.loss_weights, wx, wy)?;
                c.eval.generated |= generated;
                c.eval.average |= average;
                Ok(())
            })?;
            if cfg.eval.runs < 2 {
                bail!(jellymon::Error::InvalidArgument(format!(
                    "runs must be at least 2 for std reporting, got {}",
                    cfg.eval.runs
                )));
            }
            let events = events_or_generated(data.as_deref(), &cfg)?;
            let run_cfg = cfg.run_config();
            let recipe = Recipe {
                generated: cfg.eval.generated,
                fusion: if cfg.eval.average { Fusion::Average } else { Fusion::Network(cfg.fusion.loss_weights) },
                gate: Some(GateConfig::new(cfg.gate.tau)?),
            };
            let pred_dir = common.out.join("predictions");
            let matrix_dir = common.out.join("matrices");
            fs::create_dir_all(&pred_dir)?;
            fs::create_dir_all(&matrix_dir)?;
            let mut runs: Vec<RunMetrics> = Vec::new();
            for seed in cfg.eval.seeds() {
                let r = run_seed(&events, &[], &run_cfg, seed, &[recipe])?.remove(0);
                write(
                    &pred_dir.join(format!("seed_{seed}.csv")),
                    predictions_csv(&r.event_ids, &r.predictions, &r.labels)?,
                )?;
                write(&matrix_dir.join(format!("seed_{seed}.csv")), r.metrics.matrix.to_csv())?;
                runs.push(r.metrics);
            }
            let report = aggregate_runs(&runs)?;
            write_json(&common.out.join("report.json"), &report)?;
            write(&common.out.join("report.csv"), report.to_csv())?;
            write(&common.out.join("mean_matrix.csv"), report.mean_matrix_csv())?;
            print!("{}", report.to_csv());
        }

        Command::Sweep { common, predictions, min, max, step } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.sweep.min = min.unwrap_or(c.sweep.min);
                c.sweep.max = max.unwrap_or(c.sweep.max);
                c.sweep.step = step.unwrap_or(c.sweep.step);
                Ok(())
            })?;
            let taus = tau_grid(cfg.sweep.min, cfg.sweep.max, cfg.sweep.step)?;
            let mut curves = Vec::new();
            for file in prediction_files(&predictions)? {
                let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
                let table = read_predictions_csv(&text).with_context(|| format!("parsing {}", file.display()))?;
                curves.push(sweep_threshold(&table.preds, &table.labels, &taus)?);
            }
            let csv = mean_sweep_csv(&average_sweeps(&curves)?);
            write(&common.out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }

        Command::Bench { common, lengths, repetitions, frame_model, fusion_model } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.bench.lengths = lengths.unwrap_or_else(|| c.bench.lengths.clone());
                c.bench.repetitions = repetitions.unwrap_or(c.bench.repetitions);
                Ok(())
            })?;
            let frame = match frame_model {
                Some(d) => load_net(frame_network(), &d)?,
                None => build_frame_model(cfg.bench.seed),
            };
            let fusion = match fusion_model {
                Some(d) => load_net(fusion_network(), &d)?,
                None => build_fusion_model(cfg.bench.seed),
            };
            let b = &cfg.bench;
            let rows = bench_event_latency(&frame, &fusion, &b.lengths, b.repetitions, b.seed)?;
            let csv = bench_csv(&rows);
            write(&common.out.join("bench.csv"), &csv)?;
            write_json(&common.out.join("bench_meta.json"), &BenchMetadata::collect(&rows, b.repetitions, b.seed))?;
            print!("{csv}");
        }

        Command::Pipeline { common, data, runs } => {
            let cfg = setup(common.config.as_deref(), &common.out, |c| {
                c.pipeline.runs = runs.unwrap_or(c.pipeline.runs);
                Ok(())
            })?;
            let events = events_or_generated(data.as_deref(), &cfg)?;
            let (report, _) = run_ladder(&events, &cfg.run_config(), &cfg.pipeline.seeds())?;
            write(&common.out.join("ladder.csv"), report.to_csv())?;
            write_json(&common.out.join("ladder.json"), &report)?;
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}
