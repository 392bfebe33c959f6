//! Train/validation/test partitioning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::types::{Event, SplitMode, SplitSpec, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Partitions `events` according to `spec`. Random splits are stratified by
/// class; leave-one-environment-out puts the held-out environment in `test`
/// and splits the rest between train and validation.
pub fn split_dataset(events: &[Event], spec: &SplitSpec, seed: u64) -> Result<Split<Event>> {
    let idx = split_indices(events, spec, seed)?;
    let pick = |ids: &[usize]| ids.iter().map(|&i| events[i].clone()).collect::<Vec<_>>();
    Ok(Split { train: pick(&idx.train), val: pick(&idx.val), test: pick(&idx.test) })
}

/// Same partition as [`split_dataset`], as indices into `events`.
pub fn split_indices(events: &[Event], spec: &SplitSpec, seed: u64) -> Result<Split<usize>> {
    if events.is_empty() {
        return Err(Error::EmptyInput("split_dataset requires at least one event"));
    }
    spec.validate()?;
    let stream = SeedStream::new(seed).named("split");
    match spec.mode {
        SplitMode::RandomSplit => {
            let all: Vec<usize> = (0..events.len()).collect();
            let [train, val, test] =
                stratified(events, &all, [spec.train_frac, spec.val_frac, spec.test_frac], stream);
            Ok(Split { train, val, test })
        }
        SplitMode::LeaveOneEnvironmentOut => {
            let held_out = spec.held_out_environment.expect("validated");
            let envs: BTreeSet<u32> = events.iter().map(|e| e.environment_id).collect();
            if envs.len() < 2 {
                return Err(Error::InvalidArgument(
                    "leave-one-environment-out needs at least two environments".into(),
                ));
            }
            if !envs.contains(&held_out) {
                return Err(Error::InvalidArgument(format!(
                    "held-out environment {held_out} not present in data (have {envs:?})"
                )));
            }
            let (test, rest): (Vec<usize>, Vec<usize>) =
                (0..events.len()).partition(|&i| events[i].environment_id == held_out);
            let denom = spec.train_frac + spec.val_frac;
            if denom <= 0.0 {
                return Err(Error::InvalidArgument("train_frac + val_frac must be positive".into()));
            }
            let [train, val, _] =
                stratified(events, &rest, [spec.train_frac / denom, spec.val_frac / denom, 0.0], stream);
            Ok(Split { train, val, test })
        }
    }
}

/// Largest-remainder apportionment of `total` by `fracs`; ties go to the
/// earlier entry.
fn apportion(total: usize, fracs: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fracs.iter().map(|f| f * total as f64).collect();
    let mut out = [0usize; 3];
    for s in 0..3 {
        out[s] = exact[s].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = total - out.iter().sum::<usize>();
    for &s in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[s] += 1;
        left -= 1;
    }
    out
}

fn stratified(events: &[Event], pool: &[usize], fracs: [f64; 3], stream: SeedStream) -> [Vec<usize>; 3] {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for &i in pool {
        by_class[events[i].label.index()].push(i);
    }
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut stream.child(c as u64).rng());
    }

    // Per-class floors, then hand out the leftover units so that split
    // totals hit the global apportionment exactly and no class gets more
    // than one unit above its floor in any split.
    let targets = apportion(pool.len(), fracs);
    let mut alloc = [[0usize; 3]; NUM_CLASSES];
    let mut residual = [0usize; NUM_CLASSES];
    let mut deficit = targets;
    for c in 0..NUM_CLASSES {
        let n = by_class[c].len();
        for s in 0..3 {
            alloc[c][s] = (n as f64 * fracs[s]).floor() as usize;
            deficit[s] -= alloc[c][s];
        }
        residual[c] = n - alloc[c].iter().sum::<usize>();
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for c in 0..NUM_CLASSES {
        let n = by_class[c].len() as f64;
        for s in 0..3 {
            let exact = n * fracs[s];
            candidates.push((exact - exact.floor(), c, s));
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut bumped = [[false; 3]; NUM_CLASSES];
    for &(frac, c, s) in &candidates {
        if frac > 0.0 && residual[c] > 0 && deficit[s] > 0 && !bumped[c][s] {
            bumped[c][s] = true;
            residual[c] -= 1;
            deficit[s] -= 1;
        }
    }
    // Greedy can strand units; augmenting paths reroute earlier choices.
    // A complete assignment always exists (controlled rounding of a
    // two-way table).
    let allowed = |c: usize, s: usize| {
        let exact = by_class[c].len() as f64 * fracs[s];
        exact - exact.floor() > 0.0
    };
    for c in 0..NUM_CLASSES {
        while residual[c] > 0 {
            let mut seen = [false; 3];
            if !augment(c, &allowed, &mut bumped, &mut deficit, &mut seen) {
                break;
            }
            residual[c] -= 1;
        }
    }
    for c in 0..NUM_CLASSES {
        for s in 0..3 {
            if bumped[c][s] {
                alloc[c][s] += 1;
            }
        }
        // Unreachable for exact fractions; keeps totals whole under
        // floating-point edge cases.
        while residual[c] > 0 {
            let s = (0..3).find(|&s| deficit[s] > 0).expect("deficits cover residuals");
            alloc[c][s] += 1;
            residual[c] -= 1;
            deficit[s] -= 1;
        }
    }

    let mut out: [Vec<usize>; 3] = Default::default();
    for (c, members) in by_class.iter().enumerate() {
        let mut it = members.iter().copied();
        for s in 0..3 {
            out[s].extend(it.by_ref().take(alloc[c][s]));
        }
    }
    for part in &mut out {
        part.sort_unstable();
    }
    out
}

fn augment(
    c: usize,
    allowed: &impl Fn(usize, usize) -> bool,
    bumped: &mut [[bool; 3]; NUM_CLASSES],
    deficit: &mut [usize; 3],
    seen: &mut [bool; 3],
) -> bool {
    for s in 0..3 {
        if seen[s] || bumped[c][s] || !allowed(c, s) {
            continue;
        }
        seen[s] = true;
        if deficit[s] > 0 {
            deficit[s] -= 1;
            bumped[c][s] = true;
            return true;
        }
        // Split s is full: move some other class's unit out of it.
        for other in 0..NUM_CLASSES {
            if other != c && bumped[other][s] {
                bumped[other][s] = false;
                if augment(other, allowed, bumped, deficit, seen) {
                    bumped[c][s] = true;
                    return true;
                }
                bumped[other][s] = true;
            }
        }
    }
    false
}
