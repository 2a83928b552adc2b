//! Synthetic spatio-temporal video classification data.
//!
//! Each clip shows a small bright square moving in one of four directions
//! while blinking with period 2 or 4 frames; the (direction, period) pair is
//! the class. Start position and blink phase are randomized, so no single
//! frame reveals the class: direction needs two sightings and with period-2
//! blinking those are two frames apart, hence at least three frames of
//! context. Purely spatial models stay near chance.

use serde::{Deserialize, Serialize};

use crate::kernels::Tensor;
use crate::rng::derive_rng;
use rand::Rng;

use super::TrainerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyVideoSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub seed: u64,
}

impl Default for ToyVideoSpec {
    fn default() -> Self {
        ToyVideoSpec {
            frames: 16,
            height: 32,
            width: 32,
            channels: 1,
            num_classes: 8,
            train_samples: 800,
            val_samples: 200,
            test_samples: 200,
            seed: 0,
        }
    }
}

/// (dy, dx) per frame for the four motion directions.
const DIRECTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const BLINK_PERIODS: [usize; 2] = [2, 4];
const SQUARE: usize = 3;
const NOISE_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct Split {
    pub videos: Vec<Tensor>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub num_classes: usize,
}

fn render_sample(spec: &ToyVideoSpec, class: usize, rng: &mut impl Rng) -> Tensor {
    let (t, h, w, c) = (spec.frames, spec.height, spec.width, spec.channels);
    let direction = DIRECTIONS[class % DIRECTIONS.len()];
    let period = BLINK_PERIODS[class / DIRECTIONS.len()];
    let y0 = rng.gen_range(0..h) as isize;
    let x0 = rng.gen_range(0..w) as isize;
    let phase = rng.gen_range(0..period);
    let mut video = Tensor::zeros(&[t, h, w, c]);
    for frame in 0..t {
        let base = frame * h * w * c;
        for i in 0..h * w * c {
            video.data_mut()[base + i] = rng.gen_range(0.0..NOISE_AMPLITUDE);
        }
        // Blink duty cycle: visible for the first half of each period.
        let visible = ((frame + phase) % period) < period / 2;
        if !visible {
            continue;
        }
        let cy = (y0 + direction.0 * frame as isize).rem_euclid(h as isize) as usize;
        let cx = (x0 + direction.1 * frame as isize).rem_euclid(w as isize) as usize;
        for dy in 0..SQUARE {
            for dx in 0..SQUARE {
                let y = (cy + dy) % h;
                let x = (cx + dx) % w;
                for ch in 0..c {
                    video.data_mut()[base + (y * w + x) * c + ch] = 1.0;
                }
            }
        }
    }
    video
}

fn generate_split(spec: &ToyVideoSpec, samples: usize, split_tag: u64) -> Split {
    let mut rng = derive_rng(spec.seed, "toy-video-split", split_tag);
    let mut videos = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % spec.num_classes;
        videos.push(render_sample(spec, class, &mut rng));
        labels.push(class);
    }
    Split { videos, labels }
}

/// Deterministic dataset generation with disjoint per-split streams.
pub fn generate_toy_dataset(spec: &ToyVideoSpec) -> Result<ToyDataset, TrainerError> {
    if spec.frames < 4 {
        return Err(TrainerError::Config(format!(
            "temporal classes need T >= 4 frames, got {}",
            spec.frames
        )));
    }
    if spec.num_classes == 0 || spec.num_classes > DIRECTIONS.len() * BLINK_PERIODS.len() {
        return Err(TrainerError::Config(format!(
            "num_classes must be in 1..=8, got {}",
            spec.num_classes
        )));
    }
    if spec.height < SQUARE || spec.width < SQUARE || spec.channels == 0 {
        return Err(TrainerError::Config("video extent too small".into()));
    }
    Ok(ToyDataset {
        train: generate_split(spec, spec.train_samples, 0),
        val: generate_split(spec, spec.val_samples, 1),
        test: generate_split(spec, spec.test_samples, 2),
        num_classes: spec.num_classes,
    })
}
