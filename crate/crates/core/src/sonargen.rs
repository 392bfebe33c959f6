//! Synthetic sonar event simulator and the on-disk dataset format.
//!
//! Each event is rendered on a floating-point canvas: environment background
//! level, an optional class-specific object, optional horizontal streak
//! artefacts, then Gaussian pixel noise, clamped and rounded to 8 bits.
//! Objects fade in over the first frames and out over the last ones, so the
//! event's edge frames look like background while keeping the event label.
//!
//! Class appearance and dynamics:
//! - Background: noise only, no coherent object.
//! - Jellyfish: soft ellipse whose area oscillates as `1 + a*sin(phase)`
//!   with amplitude `a` in [0.30, 0.45] and period 8 to 20 frames. The
//!   contracted phase is also elongated (aspect ratio up to 1.8) and then
//!   resembles seaweed.
//! - Artefacts: 1 to 3 horizontal streaks in about 70% of frames, no object.
//! - Fish: compact bright blob moving fast (1.2 to 2.2 px/frame) in a
//!   straight line, reflected at the patch border.
//! - Seaweed: elongated ellipse with constant area and slow drift.
//! - Sediment: low-contrast Gaussian cloud that grows while its peak
//!   intensity drops.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, SeedStream};
use crate::types::{
    ClassCounts, ClassLabel, Event, Frame, FRAME_HEIGHT, FRAME_WIDTH, MAX_EVENT_FRAMES, MIN_EVENT_FRAMES,
    NUM_CLASSES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentProfile {
    pub id: u32,
    /// Standard deviation of additive Gaussian pixel noise, intensity units.
    pub noise_sigma: f64,
    /// Probability that any frame gains one horizontal streak.
    pub artefact_rate: f64,
    pub background_level: f64,
    /// Mean object translation per frame, in pixels.
    pub drift: [f64; 2],
}

impl EnvironmentProfile {
    /// Quiet trial site.
    pub fn trial() -> Self {
        Self { id: 0, noise_sigma: 8.0, artefact_rate: 0.05, background_level: 30.0, drift: [0.15, 0.0] }
    }

    /// Noisy, streaky deployment site with a stronger current.
    pub fn deployment() -> Self {
        Self { id: 1, noise_sigma: 22.0, artefact_rate: 0.3, background_level: 50.0, drift: [0.6, 0.25] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("environment {}: noise_sigma < 0", self.id)));
        }
        if !(0.0..=1.0).contains(&self.artefact_rate) {
            return Err(Error::InvalidArgument(format!("environment {}: artefact_rate outside [0,1]", self.id)));
        }
        Ok(())
    }
}

/// Clipped, rounded lognormal over event lengths. `sigma` is fixed; `mu` is
/// solved so that the mean of the clipped, rounded distribution equals
/// `target_mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LengthDistribution {
    pub min: usize,
    pub max: usize,
    pub target_mean: f64,
}

pub const LENGTH_LOG_SIGMA: f64 = 0.8;

impl Default for LengthDistribution {
    fn default() -> Self {
        Self { min: MIN_EVENT_FRAMES, max: MAX_EVENT_FRAMES, target_mean: 76.0 }
    }
}

impl LengthDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.min < MIN_EVENT_FRAMES || self.max > MAX_EVENT_FRAMES || self.min >= self.max {
            return Err(Error::InvalidArgument(format!(
                "length range {}..={} outside {MIN_EVENT_FRAMES}..={MAX_EVENT_FRAMES}",
                self.min, self.max
            )));
        }
        if !(self.target_mean > self.min as f64 && self.target_mean < self.max as f64) {
            return Err(Error::InvalidArgument(format!(
                "target mean {} not inside ({}, {})",
                self.target_mean, self.min, self.max
            )));
        }
        Ok(())
    }

    /// Mean of `clip(round(exp(N(mu, sigma))), min, max)`.
    fn clipped_mean(&self, mu: f64) -> f64 {
        let mut mean = 0.0;
        for k in self.min..=self.max {
            let lo = if k == self.min { f64::NEG_INFINITY } else { ((k as f64 - 0.5).ln() - mu) / LENGTH_LOG_SIGMA };
            let hi = if k == self.max { f64::INFINITY } else { ((k as f64 + 0.5).ln() - mu) / LENGTH_LOG_SIGMA };
            mean += k as f64 * (std_normal_cdf(hi) - std_normal_cdf(lo));
        }
        mean
    }

    pub fn log_mu(&self) -> f64 {
        let (mut lo, mut hi) = ((self.min as f64).ln() - 4.0, (self.max as f64).ln() + 4.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.clipped_mean(mid) < self.target_mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, mu: f64, rng: &mut Rng) -> usize {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let x = (mu + LENGTH_LOG_SIGMA * z).exp().round();
        (x.max(self.min as f64).min(self.max as f64)) as usize
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// Complementary error function, Numerical Recipes erfcc (rel. error < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub class_counts: ClassCounts,
    pub environments: Vec<EnvironmentProfile>,
    pub length_distribution: LengthDistribution,
    pub seed: u64,
}

impl Default for GenConfig {
    /// Desk-scale corpus over the trial and deployment environments.
    fn default() -> Self {
        Self {
            class_counts: ClassCounts::desk_scale(),
            environments: vec![EnvironmentProfile::trial(), EnvironmentProfile::deployment()],
            length_distribution: LengthDistribution::default(),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_counts.total() == 0 {
            return Err(Error::EmptyInput("class_counts total is zero"));
        }
        if self.environments.is_empty() {
            return Err(Error::EmptyInput("no environments configured"));
        }
        for env in &self.environments {
            env.validate()?;
        }
        self.length_distribution.validate()
    }
}

/// Frames per entry/exit fade for an event of `n` frames.
pub fn fade_frames(n: usize) -> usize {
    (n / 4).min(4)
}

fn visibility(t: usize, n: usize) -> f64 {
    let fade = fade_frames(n);
    if fade == 0 {
        return 1.0;
    }
    let ramp = (fade + 1) as f64;
    (((t + 1) as f64) / ramp).min(((n - t) as f64) / ramp).min(1.0)
}

struct Canvas {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn new(level: f64) -> Self {
        Self { w: FRAME_WIDTH, h: FRAME_HEIGHT, data: vec![level; FRAME_WIDTH * FRAME_HEIGHT] }
    }

    /// Flat-topped ellipse with an anti-aliased rim, 2x2 supersampled.
    fn ellipse(&mut self, cx: f64, cy: f64, a: f64, b: f64, theta: f64, intensity: f64) {
        let (sin, cos) = theta.sin_cos();
        let reach = a.max(b) + 2.0;
        let x0 = ((cx - reach).floor().max(0.0)) as usize;
        let x1 = ((cx + reach).ceil().min(self.w as f64 - 1.0)).max(0.0) as usize;
        let y0 = ((cy - reach).floor().max(0.0)) as usize;
        let y1 = ((cy + reach).ceil().min(self.h as f64 - 1.0)).max(0.0) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let mut cover = 0.0;
                for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    let dx = x as f64 + ox - 0.5 - cx;
                    let dy = y as f64 + oy - 0.5 - cy;
                    let u = dx * cos + dy * sin;
                    let v = -dx * sin + dy * cos;
                    if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                        cover += 0.25;
                    }
                }
                self.data[y * self.w + x] += intensity * cover;
            }
        }
    }

    fn gaussian(&mut self, cx: f64, cy: f64, sigma: f64, peak: f64) {
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in 0..self.h {
            for x in 0..self.w {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                self.data[y * self.w + x] += peak * (-d2 * inv).exp();
            }
        }
    }

    fn streak(&mut self, rng: &mut Rng) {
        let row = rng.gen_range(0..self.h);
        let span = rng.gen_range(self.w * 2 / 5..=self.w);
        let start = rng.gen_range(0..=self.w - span);
        let intensity = rng.gen_range(50.0..110.0);
        for x in start..start + span {
            self.data[row * self.w + x] += intensity;
        }
    }

    fn finish(mut self, noise_sigma: f64, rng: &mut Rng) -> Frame {
        if noise_sigma > 0.0 {
            let noise = Normal::new(0.0, noise_sigma).expect("finite sigma");
            for v in &mut self.data {
                *v += noise.sample(rng);
            }
        }
        let pixels = self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Frame::new(self.w, self.h, pixels).expect("canvas dimensions")
    }
}

/// Object position with straight-line velocity, reflected at the patch
/// margins.
struct Motion {
    pos: [f64; 2],
    vel: [f64; 2],
    jitter: f64,
    margin: f64,
}

impl Motion {
    fn start(rng: &mut Rng, vel: [f64; 2], jitter: f64, margin: f64) -> Self {
        let c = FRAME_WIDTH as f64 / 2.0;
        let pos = [c + rng.gen_range(-4.0..4.0), c + rng.gen_range(-4.0..4.0)];
        Self { pos, vel, jitter, margin }
    }

    fn step(&mut self, rng: &mut Rng) {
        let lim = [FRAME_WIDTH as f64, FRAME_HEIGHT as f64];
        for d in 0..2 {
            let j: f64 = rng.sample(rand_distr::StandardNormal);
            self.pos[d] += self.vel[d] + self.jitter * j;
            let (lo, hi) = (self.margin, lim[d] - self.margin);
            if self.pos[d] < lo {
                self.pos[d] = 2.0 * lo - self.pos[d];
                self.vel[d] = -self.vel[d];
            } else if self.pos[d] > hi {
                self.pos[d] = 2.0 * hi - self.pos[d];
                self.vel[d] = -self.vel[d];
            }
            self.pos[d] = self.pos[d].clamp(lo, hi);
        }
    }
}

/// Jellyfish pulsation parameters, exposed for inspection by tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulsation {
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Pulsation {
    pub const PERIOD_RANGE: (f64, f64) = (8.0, 20.0);
    pub const AMPLITUDE_RANGE: (f64, f64) = (0.30, 0.45);

    fn sample(rng: &mut Rng) -> Self {
        Self {
            period: rng.gen_range(Self::PERIOD_RANGE.0..=Self::PERIOD_RANGE.1),
            amplitude: rng.gen_range(Self::AMPLITUDE_RANGE.0..=Self::AMPLITUDE_RANGE.1),
            phase: rng.gen_range(0.0..2.0 * PI),
        }
    }

    /// Relative area at frame `t` (mean 1).
    pub fn area_factor(&self, t: usize) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * t as f64 / self.period + self.phase).sin()
    }
}

fn drift_plus(env: &EnvironmentProfile, extra: [f64; 2]) -> [f64; 2] {
    [env.drift[0] + extra[0], env.drift[1] + extra[1]]
}

/// Renders `n_frames` frames of a `label` object seen in `env`.
pub fn render_event(
    id: u64,
    label: ClassLabel,
    env: &EnvironmentProfile,
    n_frames: usize,
    rng: &mut Rng,
) -> Result<Event> {
    let bg = env.background_level;
    let mut frames = Vec::with_capacity(n_frames);
    let mut push = |mut canvas: Canvas, rng: &mut Rng| {
        if rng.gen_bool(env.artefact_rate) {
            canvas.streak(rng);
        }
        frames.push(canvas.finish(env.noise_sigma, rng));
    };
    match label {
        ClassLabel::Background => {
            for _ in 0..n_frames {
                push(Canvas::new(bg), rng);
            }
        }
        ClassLabel::Artefacts => {
            for _ in 0..n_frames {
                let mut c = Canvas::new(bg);
                if rng.gen_bool(0.7) {
                    for _ in 0..rng.gen_range(1..=3) {
                        c.streak(rng);
                    }
                }
                push(c, rng);
            }
        }
        ClassLabel::Jellyfish => {
            let radius = rng.gen_range(4.0..5.5);
            let intensity = rng.gen_range(70.0..100.0);
            let theta = rng.gen_range(0.0..PI);
            let pulse = Pulsation::sample(rng);
            let own = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            let mut motion = Motion::start(rng, drift_plus(env, own), 0.1, 9.0);
            for t in 0..n_frames {
                let s = pulse.area_factor(t);
                let contraction = ((1.0 + pulse.amplitude - s) / (2.0 * pulse.amplitude)).clamp(0.0, 1.0);
                let aspect = 1.0 + 0.8 * contraction;
                let r = radius * s.sqrt();
                let mut c = Canvas::new(bg);
                c.ellipse(motion.pos[0], motion.pos[1], r * aspect, r / aspect, theta, intensity * visibility(t, n_frames));
                push(c, rng);
                motion.step(rng);
            }
        }
        ClassLabel::Fish => {
            let a = rng.gen_range(2.4..3.6);
            let b = rng.gen_range(1.8..2.6);
            let intensity = rng.gen_range(140.0..200.0);
            let speed = rng.gen_range(1.2..2.2);
            let heading = rng.gen_range(0.0..2.0 * PI);
            let vel = drift_plus(env, [speed * heading.cos(), speed * heading.sin()]);
            let mut motion = Motion::start(rng, vel, 0.05, 5.0);
            for t in 0..n_frames {
                let theta = motion.vel[1].atan2(motion.vel[0]);
                let mut c = Canvas::new(bg);
                c.ellipse(motion.pos[0], motion.pos[1], a, b, theta, intensity * visibility(t, n_frames));
                push(c, rng);
                motion.step(rng);
            }
        }
        ClassLabel::Seaweed => {
            let a = rng.gen_range(7.0..9.0);
            let b = rng.gen_range(2.5..3.5);
            let intensity = rng.gen_range(70.0..100.0);
            let theta = rng.gen_range(0.0..PI);
            let own = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
            let mut motion = Motion::start(rng, drift_plus(env, own), 0.05, 10.0);
            for t in 0..n_frames {
                let mut c = Canvas::new(bg);
                c.ellipse(motion.pos[0], motion.pos[1], a, b, theta, intensity * visibility(t, n_frames));
                push(c, rng);
                motion.step(rng);
            }
        }
        ClassLabel::Sediment => {
            let sigma0 = rng.gen_range(3.0..5.0);
            let growth = rng.gen_range(1.5..2.2);
            let peak0 = rng.gen_range(35.0..55.0);
            let lobes: Vec<([f64; 2], f64)> =
                (0..3).map(|_| ([rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)], rng.gen_range(0.6..1.0))).collect();
            let mut motion = Motion::start(rng, env.drift, 0.1, 8.0);
            for t in 0..n_frames {
                let progress = if n_frames > 1 { t as f64 / (n_frames - 1) as f64 } else { 0.0 };
                let sigma = sigma0 * (1.0 + (growth - 1.0) * progress);
                let peak = peak0 * sigma0 / sigma * visibility(t, n_frames);
                let spread = sigma / sigma0;
                let mut c = Canvas::new(bg);
                for (offset, weight) in &lobes {
                    c.gaussian(
                        motion.pos[0] + offset[0] * spread,
                        motion.pos[1] + offset[1] * spread,
                        sigma,
                        peak * weight,
                    );
                }
                push(c, rng);
                motion.step(rng);
            }
        }
    }
    Event::new(id, label, env.id, frames)
}

/// Renders one event with a length drawn from the default distribution.
pub fn generate_event(id: u64, label: ClassLabel, env: &EnvironmentProfile, rng: &mut Rng) -> Result<Event> {
    let lengths = LengthDistribution::default();
    let n = lengths.sample(lengths.log_mu(), rng);
    render_event(id, label, env, n, rng)
}

/// Generates `cfg.class_counts` events. Each class is divided evenly over
/// the environments, remainder to the lowest environment ids. Event ids run
/// from 0 in (class, environment) order; event `i` draws from child stream
/// `i` of the config seed.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Vec<Event>> {
    cfg.validate()?;
    let mut envs = cfg.environments.clone();
    envs.sort_by_key(|e| e.id);
    let mut jobs: Vec<(ClassLabel, &EnvironmentProfile)> = Vec::new();
    for label in ClassLabel::ALL {
        let n = cfg.class_counts.get(label) as usize;
        let (base, extra) = (n / envs.len(), n % envs.len());
        for (k, env) in envs.iter().enumerate() {
            let count = base + usize::from(k < extra);
            jobs.extend(std::iter::repeat((label, env)).take(count));
        }
    }
    let mu = cfg.length_distribution.log_mu();
    let stream = SeedStream::new(cfg.seed).named("events");
    jobs.par_iter()
        .enumerate()
        .map(|(i, (label, env))| {
            let mut rng = stream.child(i as u64).rng();
            let n = cfg.length_distribution.sample(mu, &mut rng);
            render_event(i as u64, *label, env, n, &mut rng)
        })
        .collect()
}

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DATASET_MANIFEST: &str = "manifest.json";
pub const DATASET_BLOB: &str = "frames.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: u64,
    pub label: u8,
    pub environment_id: u32,
    pub n_frames: u64,
    pub byte_offset: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub events: Vec<EventRecord>,
}

/// Writes `manifest.json` and `frames.bin` into `dir`, creating it.
pub fn save_dataset(events: &[Event], dir: &Path) -> Result<()> {
    let (width, height) = events
        .first()
        .and_then(|e| e.frames().first())
        .map_or((FRAME_WIDTH, FRAME_HEIGHT), |f| (f.width(), f.height()));
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(events.len());
    for e in events {
        records.push(EventRecord {
            id: e.id,
            label: e.label.into(),
            environment_id: e.environment_id,
            n_frames: e.len() as u64,
            byte_offset: blob.len() as u64,
            synthetic: e.synthetic,
        });
        for f in e.frames() {
            if f.width() != width || f.height() != height {
                return Err(Error::ShapeMismatch { expected: vec![height, width], actual: vec![f.height(), f.width()] });
            }
            blob.extend_from_slice(f.pixels());
        }
    }
    let manifest = DatasetManifest { format_version: DATASET_FORMAT_VERSION, width, height, events: records };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::File::create(dir.join(DATASET_MANIFEST))?.write_all(&json)?;
    fs::write(dir.join(DATASET_BLOB), &blob)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Event>> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    let blob_path = dir.join(DATASET_BLOB);
    for p in [&manifest_path, &blob_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: manifest.format_version, expected: DATASET_FORMAT_VERSION });
    }
    let frame_bytes = (manifest.width * manifest.height) as u64;
    if frame_bytes == 0 {
        return Err(Error::InvalidArgument("manifest frame size is zero".into()));
    }
    let mut expected_offset = 0u64;
    for r in &manifest.events {
        if r.byte_offset != expected_offset {
            return Err(Error::OffsetMismatch(format!(
                "event {} starts at byte {} but previous events end at {}",
                r.id, r.byte_offset, expected_offset
            )));
        }
        expected_offset += r.n_frames * frame_bytes;
    }
    let blob = fs::read(&blob_path)?;
    let found = blob.len() as u64;
    if found < expected_offset {
        return Err(Error::Truncated { needed: expected_offset, found });
    }
    if found > expected_offset {
        return Err(Error::OffsetMismatch(format!(
            "{DATASET_BLOB} holds {found} bytes, manifest accounts for {expected_offset}"
        )));
    }
    manifest
        .events
        .iter()
        .map(|r| {
            let label = ClassLabel::try_from(r.label)?;
            let start = r.byte_offset as usize;
            let frames = (0..r.n_frames as usize)
                .map(|k| {
                    let s = start + k * frame_bytes as usize;
                    Frame::new(manifest.width, manifest.height, blob[s..s + frame_bytes as usize].to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            Event::from_parts(r.id, label, r.environment_id, r.synthetic, frames)
        })
        .collect()
}

/// Means over `block`x`block` pixel tiles, row-major, minus the frame's
/// median intensity so that the environment's background level drops out.
pub fn block_means(frame: &Frame, block: usize) -> Vec<f64> {
    let mut sorted = frame.pixels().to_vec();
    sorted.sort_unstable();
    let median = f64::from(sorted[sorted.len() / 2]);
    let (bw, bh) = (frame.width() / block, frame.height() / block);
    let mut out = vec![0.0; bw * bh];
    for y in 0..bh * block {
        for x in 0..bw * block {
            out[(y / block) * bw + x / block] += f64::from(frame.pixel(x, y));
        }
    }
    let n = (block * block) as f64;
    out.iter_mut().for_each(|v| *v = *v / n - median);
    out
}

/// Nearest-centroid frame classifier over [`block_means`] features; the
/// floor any learned classifier has to beat.
#[derive(Debug, Clone)]
pub struct CentroidClassifier {
    block: usize,
    centroids: Vec<Option<Vec<f64>>>,
}

impl CentroidClassifier {
    pub fn fit(events: &[Event], block: usize) -> Self {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; NUM_CLASSES];
        for e in events {
            for f in e.frames() {
                let feat = block_means(f, block);
                let slot = sums[e.label.index()].get_or_insert_with(|| (vec![0.0; feat.len()], 0));
                slot.0.iter_mut().zip(&feat).for_each(|(s, v)| *s += v);
                slot.1 += 1;
            }
        }
        let centroids = sums
            .into_iter()
            .map(|s| s.map(|(sum, n)| sum.into_iter().map(|v| v / n as f64).collect()))
            .collect();
        Self { block, centroids }
    }

    pub fn predict(&self, frame: &Frame) -> ClassLabel {
        let feat = block_means(frame, self.block);
        let mut best = (f64::INFINITY, ClassLabel::Background);
        for (c, centroid) in self.centroids.iter().enumerate() {
            if let Some(centroid) = centroid {
                let d: f64 = centroid.iter().zip(&feat).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, ClassLabel::ALL[c]);
                }
            }
        }
        best.1
    }

    pub fn frame_accuracy(&self, events: &[Event]) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for e in events {
            for f in e.frames() {
                hit += usize::from(self.predict(f) == e.label);
                total += 1;
            }
        }
        hit as f64 / total.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lognormal_solution_hits_target_mean() {
        let d = LengthDistribution::default();
        let mu = d.log_mu();
        assert!((d.clipped_mean(mu) - 76.0).abs() < 1e-6);
    }

    #[test]
    fn erfc_matches_known_values() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-7);
        assert!((erfc(1.0) - 0.157_299_207).abs() < 1e-7);
        assert!((erfc(-1.0) - 1.842_700_793).abs() < 1e-7);
    }

    #[test]
    fn visibility_ramps_at_both_ends() {
        assert_eq!(fade_frames(4), 1);
        assert_eq!(fade_frames(100), 4);
        assert!(visibility(0, 100) < visibility(4, 100));
        assert_eq!(visibility(50, 100), 1.0);
        assert!(visibility(99, 100) < 1.0);
    }

    #[test]
    fn environment_validation() {
        let mut env = EnvironmentProfile::trial();
        env.artefact_rate = 1.5;
        assert!(env.validate().is_err());
        env.artefact_rate = 0.5;
        env.noise_sigma = -1.0;
        assert!(env.validate().is_err());
    }

    #[test]
    fn zero_counts_rejected() {
        let cfg = GenConfig { class_counts: ClassCounts([0; 6]), ..GenConfig::default() };
        assert!(generate_dataset(&cfg).is_err());
    }

    #[test]
    fn every_class_renders_within_bounds() {
        let mut rng = SeedStream::new(1).rng();
        for env in [EnvironmentProfile::trial(), EnvironmentProfile::deployment()] {
            for label in ClassLabel::ALL {
                for n in [4, 5, 76, 300] {
                    let e = render_event(0, label, &env, n, &mut rng).unwrap();
                    assert_eq!(e.len(), n);
                    assert!(e.frames().iter().all(|f| f.width() == 32 && f.height() == 32));
                }
            }
        }
    }
}
