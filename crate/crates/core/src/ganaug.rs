//! Class-conditional GAN over single frames and the training-set
//! enhancement plans that decide how many synthetic frames each class gets.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::{adam_step, load_model, save_model, Act, AdamConfig, AdamState, Layer, Model, Network, Tensor};
use crate::rng::{Rng, SeedStream};
use crate::types::{ClassCounts, ClassLabel, Event, Frame, FRAME_HEIGHT, FRAME_WIDTH, NUM_CLASSES};

pub const LATENT_DIM: usize = 32;
pub const FRAME_PIXELS: usize = FRAME_WIDTH * FRAME_HEIGHT;
/// Probabilities entering a logarithm are clamped to `[CLAMP, 1 - CLAMP]`.
pub const CLAMP: f64 = 1e-12;

/// `(L_D, L_G)` with `L_D = log D(x) + log(1 - D(G(z)))`, ascended by the
/// discriminator, and the non-saturating `L_G = -log D(G(z))`.
pub fn gan_losses(d_real: f64, d_fake: f64) -> (f64, f64) {
    let r = d_real.clamp(CLAMP, 1.0 - CLAMP);
    let f = d_fake.clamp(CLAMP, 1.0 - CLAMP);
    (r.ln() + (1.0 - f).ln(), -f.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Proportional to the real class counts.
    #[serde(rename = "A_PROPORTIONAL_REAL")]
    ProportionalReal,
    /// Proportional to each class's gap to the largest class.
    #[serde(rename = "B_PROPORTIONAL_MISSING")]
    ProportionalMissing,
    #[serde(rename = "C_EQUAL")]
    Equal,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Strategy::ProportionalReal),
            "b" => Ok(Strategy::ProportionalMissing),
            "c" => Ok(Strategy::Equal),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}, expected a, b or c"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementPlan {
    pub strategy: Strategy,
    pub fraction: f64,
    pub added: ClassCounts,
}

/// `round_half_up(p * n)`. The small slack absorbs binary rounding of
/// fractions such as 0.1.
pub fn enhancement_budget(p: f64, n: u64) -> u64 {
    (p * n as f64 + 0.5 + 1e-9).floor() as u64
}

/// Splits `budget` in proportion to integer `weights` by the largest
/// remainder method, ties to the lowest index. Exact integer arithmetic.
pub fn largest_remainder(budget: u64, weights: &[u64; NUM_CLASSES]) -> [u64; NUM_CLASSES] {
    let total: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    let mut out = [0u64; NUM_CLASSES];
    if total == 0 {
        return out;
    }
    let mut rems = [0u128; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let share = u128::from(budget) * u128::from(weights[c]);
        out[c] = (share / total) as u64;
        rems[c] = share % total;
    }
    let left = budget - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    for &c in order.iter().take(left as usize) {
        out[c] += 1;
    }
    out
}

pub fn plan_enhancement(real: &ClassCounts, strategy: Strategy, p: f64) -> Result<EnhancementPlan> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("enhancement fraction must lie in (0, 1], got {p}")));
    }
    let n = real.total();
    if n == 0 {
        return Err(Error::EmptyInput("real class counts are all zero"));
    }
    let budget = enhancement_budget(p, n);
    let max = real.0.iter().copied().max().unwrap_or(0);
    let gaps = real.0.map(|c| max - c);
    let added = match strategy {
        Strategy::ProportionalReal => largest_remainder(budget, &real.0),
        Strategy::ProportionalMissing if gaps.iter().any(|&g| g > 0) => largest_remainder(budget, &gaps),
        Strategy::ProportionalMissing | Strategy::Equal => largest_remainder(budget, &[1; NUM_CLASSES]),
    };
    Ok(EnhancementPlan { strategy, fraction: p, added: ClassCounts(added) })
}

pub fn generator_network() -> Network {
    Network::new(
        vec![LATENT_DIM + NUM_CLASSES],
        vec![
            Layer::dense("g1", LATENT_DIM + NUM_CLASSES, 256),
            Layer::Relu,
            Layer::dense("g2", 256, FRAME_PIXELS),
            Layer::Tanh,
        ],
    )
}

/// Outputs the pre-sigmoid logit; `D(x)` is its sigmoid.
pub fn discriminator_network() -> Network {
    Network::new(
        vec![FRAME_PIXELS + NUM_CLASSES],
        vec![
            Layer::dense("d1", FRAME_PIXELS + NUM_CLASSES, 256),
            Layer::LeakyRelu(0.2),
            Layer::dense("d2", 256, 64),
            Layer::LeakyRelu(0.2),
            Layer::dense("d3", 64, 1),
        ],
    )
}

#[derive(Debug, Clone)]
pub struct GanModels {
    pub generator: Model,
    pub discriminator: Model,
    /// Classes the generator was trained to produce.
    pub classes: Vec<ClassLabel>,
}

fn with_one_hot(mut values: Vec<f64>, label: ClassLabel) -> Result<Act> {
    let mut hot = [0.0; NUM_CLASSES];
    hot[label.index()] = 1.0;
    values.extend_from_slice(&hot);
    let n = values.len();
    Tensor::new(vec![n], values)
}

/// Frame pixels scaled to `[-1, 1]`.
pub fn to_signed(frame: &Frame) -> Vec<f64> {
    frame.pixels().iter().map(|&p| f64::from(p) / 127.5 - 1.0).collect()
}

pub fn sample_latent(rng: &mut Rng) -> Vec<f64> {
    (0..LATENT_DIM).map(|_| rng.sample(StandardNormal)).collect()
}

impl GanModels {
    pub fn new(seed: u64, classes: Vec<ClassLabel>) -> Self {
        let stream = SeedStream::new(seed).named("init");
        let g = generator_network();
        let d = discriminator_network();
        let gp = g.init(&mut stream.named("generator").rng()).expect("static architecture");
        let dp = d.init(&mut stream.named("discriminator").rng()).expect("static architecture");
        Self {
            generator: Model::new(g, gp).expect("params match their network"),
            discriminator: Model::new(d, dp).expect("params match their network"),
            classes,
        }
    }

    /// Generator output in `[-1, 1]`, row-major 32x32.
    pub fn generate(&self, z: &[f64], label: ClassLabel) -> Result<Vec<f64>> {
        if z.len() != LATENT_DIM {
            return Err(Error::ShapeMismatch { expected: vec![LATENT_DIM], actual: vec![z.len()] });
        }
        Ok(self.generator.forward(&with_one_hot(z.to_vec(), label)?)?.into_data())
    }

    pub fn generate_frame(&self, z: &[f64], label: ClassLabel) -> Result<Frame> {
        let pixels = self.generate(z, label)?.iter().map(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8).collect();
        Frame::new(FRAME_WIDTH, FRAME_HEIGHT, pixels)
    }

    /// `D(x | label)` for a signed image.
    pub fn discriminate(&self, image: &[f64], label: ClassLabel) -> Result<f64> {
        let logit = self.discriminator.forward(&with_one_hot(image.to_vec(), label)?)?.data()[0];
        Ok(crate::nnkit::layers::sigmoid(logit))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_model(self.generator.params(), &dir.join(GENERATOR_DIR))?;
        save_model(self.discriminator.params(), &dir.join(DISCRIMINATOR_DIR))?;
        let meta = GanMeta { latent_dim: LATENT_DIM, classes: self.classes.clone() };
        let mut json = serde_json::to_vec_pretty(&meta)?;
        json.push(b'\n');
        fs::write(dir.join(GAN_META), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(GAN_META);
        if !meta_path.is_file() {
            return Err(Error::MissingFile(meta_path));
        }
        let meta: GanMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
        if meta.latent_dim != LATENT_DIM {
            return Err(Error::ShapeMismatch { expected: vec![LATENT_DIM], actual: vec![meta.latent_dim] });
        }
        Ok(Self {
            generator: Model::new(generator_network(), load_model(&dir.join(GENERATOR_DIR))?)?,
            discriminator: Model::new(discriminator_network(), load_model(&dir.join(DISCRIMINATOR_DIR))?)?,
            classes: meta.classes,
        })
    }
}

pub const GENERATOR_DIR: &str = "generator";
pub const DISCRIMINATOR_DIR: &str = "discriminator";
pub const GAN_META: &str = "gan.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GanMeta {
    latent_dim: usize,
    classes: Vec<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub adam_generator: AdamConfig,
    pub adam_discriminator: AdamConfig,
    /// Real frames held out for the per-epoch discriminator probe.
    pub probe_size: usize,
    /// Classes to condition on; `None` means every class in the data.
    pub classes: Option<Vec<ClassLabel>>,
    /// Decay of the exponential moving average of generator weights that
    /// is returned as the final generator; 0 returns the raw weights.
    pub ema_decay: f64,
    /// Factor applied to the initial generator output weights.
    pub output_init_scale: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        // The discriminator learns 4x faster; with equal rates the generator
        // mean wanders off the data mean.
        let adam = |lr| AdamConfig { lr, beta1: 0.5, ..AdamConfig::default() };
        Self {
            epochs: 20,
            steps_per_epoch: 40,
            batch_size: 32,
            adam_generator: adam(1e-4),
            adam_discriminator: adam(4e-4),
            probe_size: 60,
            classes: None,
            ema_decay: 0.995,
            output_init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanEpochLog {
    pub epoch: usize,
    /// Mean `L_D` over the epoch's steps.
    pub d_loss: f64,
    /// Mean `L_G` over the epoch's steps.
    pub g_loss: f64,
    /// Discriminator accuracy on held-out real frames and fixed fakes.
    pub probe_accuracy: f64,
}

/// `(event index, frame index)` references per class.
type FramePool = Vec<Vec<(usize, usize)>>;

fn split_pool(events: &[Event], classes: &[ClassLabel], probe_size: usize, rng: &mut Rng) -> (FramePool, Vec<(ClassLabel, (usize, usize))>) {
    use rand::seq::SliceRandom;
    let mut pools: FramePool = vec![Vec::new(); NUM_CLASSES];
    for (ei, e) in events.iter().enumerate() {
        for fi in 0..e.len() {
            pools[e.label.index()].push((ei, fi));
        }
    }
    let per_class = probe_size.div_ceil(classes.len().max(1));
    let mut probe = Vec::new();
    for &c in classes {
        let pool = &mut pools[c.index()];
        pool.shuffle(rng);
        let take = per_class.min(pool.len() / 4);
        probe.extend(pool.drain(..take).map(|r| (c, r)));
    }
    (pools, probe)
}

/// Output bias set to `atanh` of the mean training image. Hidden unit `k`
/// is wired to the class-`k` one-hot input and its outgoing weights carry the
/// class offset from that mean, less the expected contribution of the other
/// hidden units, so every class starts near its own centroid without a fixed
/// texture. Remaining output weights are scaled by `weight_scale`.
fn start_near_data(gan: &mut GanModels, events: &[Event], pools: &FramePool, weight_scale: f64, rng: &mut Rng) -> Result<()> {
    let logit = |m: f64| m.clamp(-0.999, 0.999).atanh();
    let mut sums = vec![vec![0.0; FRAME_PIXELS]; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (c, pool) in pools.iter().enumerate() {
        for &(ei, fi) in pool {
            for (m, v) in sums[c].iter_mut().zip(to_signed(&events[ei].frames()[fi])) {
                *m += v;
            }
            counts[c] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("no training frames"));
    }
    let global: Vec<f64> = (0..FRAME_PIXELS).map(|i| logit(sums.iter().map(|s| s[i]).sum::<f64>() / n as f64)).collect();
    let hidden = gan.generator.params().get("g1.bias")?.data().len();
    let g1_in = LATENT_DIM + NUM_CLASSES;
    gan.generator.update_params(|p| -> Result<()> {
        let w1 = p.get_mut("g1.weight")?.data_mut();
        for k in 0..NUM_CLASSES {
            let row = &mut w1[k * g1_in..(k + 1) * g1_in];
            row.fill(0.0);
            row[LATENT_DIM + k] = 1.0;
        }
        p.get_mut("g1.bias")?.data_mut()[..NUM_CLASSES].fill(0.0);
        for (b, g) in p.get_mut("g2.bias")?.data_mut().iter_mut().zip(&global) {
            *b = *g as f32;
        }
        let w2 = p.get_mut("g2.weight")?.data_mut();
        for row in w2.chunks_mut(hidden) {
            for w in &mut row[NUM_CLASSES..] {
                *w = (f64::from(*w) * weight_scale) as f32;
            }
        }
        Ok(())
    })?;

    // Mean hidden activation per class over sampled latents.
    let params = gan.generator.params();
    let (w1, b1) = (params.get("g1.weight")?.data(), params.get("g1.bias")?.data());
    let mut hbar = vec![vec![0.0; hidden]; NUM_CLASSES];
    for (k, h) in hbar.iter_mut().enumerate().filter(|(k, _)| counts[*k] > 0) {
        for _ in 0..TEXTURE_SAMPLES {
            let input = with_one_hot(sample_latent(rng), ClassLabel::ALL[k])?;
            for (j, hj) in h.iter_mut().enumerate() {
                let row = &w1[j * g1_in..(j + 1) * g1_in];
                let a = f64::from(b1[j]) + row.iter().zip(input.data()).map(|(w, x)| f64::from(*w) * x).sum::<f64>();
                *hj += a.max(0.0) / TEXTURE_SAMPLES as f64;
            }
        }
    }
    gan.generator.update_params(|p| -> Result<()> {
        let w2 = p.get_mut("g2.weight")?.data_mut();
        for (o, row) in w2.chunks_mut(hidden).enumerate() {
            for k in (0..NUM_CLASSES).filter(|k| counts[*k] > 0) {
                let texture: f64 = row[NUM_CLASSES..].iter().zip(&hbar[k][NUM_CLASSES..]).map(|(w, h)| f64::from(*w) * h).sum();
                row[k] = (logit(sums[k][o] / counts[k] as f64) - global[o] - texture) as f32;
            }
        }
        Ok(())
    })
}

const TEXTURE_SAMPLES: usize = 512;

fn sigmoid(v: f64) -> f64 {
    crate::nnkit::layers::sigmoid(v)
}

/// Alternating training: one discriminator step then one generator step per
/// batch. Batches draw classes uniformly from the conditioned classes.
pub fn train_gan(train: &[Event], cfg: &GanConfig, seed: u64) -> Result<(GanModels, Vec<GanEpochLog>)> {
    if cfg.batch_size == 0 || cfg.epochs == 0 || cfg.steps_per_epoch == 0 {
        return Err(Error::InvalidArgument("epochs, steps_per_epoch and batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.ema_decay) {
        return Err(Error::InvalidArgument(format!("ema_decay must lie in [0, 1), got {}", cfg.ema_decay)));
    }
    let present: BTreeSet<ClassLabel> = train.iter().map(|e| e.label).collect();
    let classes: Vec<ClassLabel> = match &cfg.classes {
        Some(cs) => {
            if let Some(c) = cs.iter().find(|c| !present.contains(c)) {
                return Err(Error::InvalidArgument(format!("class {c} requested but absent from the training data")));
            }
            cs.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
        }
        None => present.into_iter().collect(),
    };
    if classes.is_empty() {
        return Err(Error::EmptyInput("no training frames"));
    }
    let stream = SeedStream::new(seed);
    let (pools, probe) = split_pool(train, &classes, cfg.probe_size, &mut stream.named("probe").rng());
    let mut probe_rng = stream.named("probe-latent").rng();
    let probe_z: Vec<Vec<f64>> = probe.iter().map(|_| sample_latent(&mut probe_rng)).collect();

    let mut gan = GanModels::new(seed, classes.clone());
    start_near_data(&mut gan, train, &pools, cfg.output_init_scale, &mut stream.named("init-latent").rng())?;
    let mut g_state = AdamState::new(gan.generator.params());
    let mut d_state = AdamState::new(gan.discriminator.params());
    let mut ema = gan.generator.shadow().clone();
    let mut rng = stream.named("steps").rng();
    let mut log = Vec::with_capacity(cfg.epochs);
    let b = cfg.batch_size as f64;

    for epoch in 0..cfg.epochs {
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for _ in 0..cfg.steps_per_epoch {
            // Discriminator step on a real and a fake batch.
            let mut d_grads = gan.discriminator.zero_grads();
            let mut d_loss = 0.0;
            for _ in 0..cfg.batch_size {
                let label = classes[rng.gen_range(0..classes.len())];
                let pool = &pools[label.index()];
                let (ei, fi) = pool[rng.gen_range(0..pool.len())];
                let real = with_one_hot(to_signed(&train[ei].frames()[fi]), label)?;
                let z = sample_latent(&mut rng);
                let fake = with_one_hot(gan.generate(&z, label)?, label)?;

                let tr = gan.discriminator.trace(&real)?;
                let dr = sigmoid(tr.output().data()[0]);
                gan.discriminator.backward(&tr, &[(dr - 1.0) / b], &mut d_grads)?;
                let tf = gan.discriminator.trace(&fake)?;
                let df = sigmoid(tf.output().data()[0]);
                gan.discriminator.backward(&tf, &[df / b], &mut d_grads)?;
                d_loss += gan_losses(dr, df).0;
            }
            gan.discriminator.update_params(|p| adam_step(p, &d_grads, &mut d_state, &cfg.adam_discriminator))?;

            // Generator step through the updated discriminator.
            let mut g_grads = gan.generator.zero_grads();
            let mut scratch = gan.discriminator.zero_grads();
            let mut g_loss = 0.0;
            for _ in 0..cfg.batch_size {
                let label = classes[rng.gen_range(0..classes.len())];
                let z = sample_latent(&mut rng);
                let tg = gan.generator.trace(&with_one_hot(z, label)?)?;
                let image = tg.output().data().to_vec();
                let td = gan.discriminator.trace(&with_one_hot(image, label)?)?;
                let df = sigmoid(td.output().data()[0]);
                let g_in = gan.discriminator.backward(&td, &[(df - 1.0) / b], &mut scratch)?;
                gan.generator.backward(&tg, &g_in[..FRAME_PIXELS], &mut g_grads)?;
                g_loss += gan_losses(0.5, df).1;
            }
            gan.generator.update_params(|p| adam_step(p, &g_grads, &mut g_state, &cfg.adam_generator))?;
            ema.scale(cfg.ema_decay);
            ema.add_scaled(gan.generator.shadow(), 1.0 - cfg.ema_decay);
            d_sum += d_loss / b;
            g_sum += g_loss / b;
        }
        log.push(GanEpochLog {
            epoch,
            d_loss: d_sum / cfg.steps_per_epoch as f64,
            g_loss: g_sum / cfg.steps_per_epoch as f64,
            probe_accuracy: probe_accuracy(&gan, train, &probe, &probe_z)?,
        });
    }
    if cfg.ema_decay > 0.0 {
        gan.generator.set_params(ema.to_f32())?;
    }
    Ok((gan, log))
}

fn probe_accuracy(
    gan: &GanModels,
    events: &[Event],
    probe: &[(ClassLabel, (usize, usize))],
    latents: &[Vec<f64>],
) -> Result<f64> {
    if probe.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0;
    for ((label, (ei, fi)), z) in probe.iter().zip(latents) {
        hits += usize::from(gan.discriminate(&to_signed(&events[*ei].frames()[*fi]), *label)? > 0.5);
        hits += usize::from(gan.discriminate(&gan.generate(z, *label)?, *label)? < 0.5);
    }
    Ok(hits as f64 / (2 * probe.len()) as f64)
}

/// Single-frame synthetic events following `plan.added`, ids counting up
/// from `first_id` in class order.
pub fn synthesize(gan: &GanModels, plan: &EnhancementPlan, first_id: u64, seed: u64) -> Result<Vec<Event>> {
    for label in ClassLabel::ALL {
        if plan.added.get(label) > 0 && !gan.classes.contains(&label) {
            return Err(Error::InvalidArgument(format!("generator was not trained on class {label}")));
        }
    }
    let jobs: Vec<ClassLabel> = ClassLabel::ALL
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, plan.added.get(l) as usize))
        .collect();
    let stream = SeedStream::new(seed).named("synthesize");
    jobs.par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let z = sample_latent(&mut stream.child(i as u64).rng());
            Ok(Event::synthetic(first_id + i as u64, label, gan.generate_frame(&z, label)?))
        })
        .collect()
}

/// Mean generated image of a class over `n` latent draws, in `[-1, 1]`.
pub fn mean_generated(gan: &GanModels, label: ClassLabel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyInput("no samples requested"));
    }
    let stream = SeedStream::new(seed).named("mean").child(label.index() as u64);
    let mut sum = vec![0.0; FRAME_PIXELS];
    for i in 0..n {
        let img = gan.generate(&sample_latent(&mut stream.child(i as u64).rng()), label)?;
        for (s, v) in sum.iter_mut().zip(img) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}
