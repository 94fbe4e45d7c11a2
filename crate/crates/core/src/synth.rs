//! Seeded synthetic image sets: oriented bars on a noisy 12×12 canvas.
//!
//! Class 0 is a horizontal bar, 1 vertical, 2 a diagonal running down-right
//! and 3 one running up-right. Bar length, thickness, position and intensity
//! vary per sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{Dataset, Split};

pub const BARS_SIDE: usize = 12;
pub const BARS_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarsConfig {
    pub train: usize,
    pub test: usize,
    /// Upper bound of the uniform background noise.
    pub noise: f32,
    pub seed: u64,
}

impl Default for BarsConfig {
    fn default() -> Self {
        Self {
            train: 2000,
            test: 600,
            noise: 0.3,
            seed: 7,
        }
    }
}

fn draw_bar(rng: &mut ChaCha8Rng, class: usize, noise: f32, img: &mut [f32]) {
    let s = BARS_SIDE as i64;
    for px in img.iter_mut() {
        *px = rng.gen_range(0.0..=noise);
    }
    let len = rng.gen_range(6..=9i64);
    let thick = rng.gen_range(1..=2i64);
    let level = rng.gen_range(0.6f32..=1.0);
    // unit direction and the perpendicular used for thickness
    let (dy, dx, py, px) = match class {
        0 => (0, 1, 1, 0),
        1 => (1, 0, 0, 1),
        2 => (1, 1, 0, 1),
        _ => (-1, 1, 0, 1),
    };
    // pick a start so the whole bar stays on the canvas
    let span = |d: i64| if d >= 0 { 0..=(s - 1 - d * (len - 1)).min(s - 1) } else { (-d * (len - 1))..=(s - 1) };
    let y0 = rng.gen_range(span(dy));
    let x0 = rng.gen_range(span(dx));
    for t in 0..len {
        for k in 0..thick {
            let y = y0 + dy * t + py * k;
            let x = x0 + dx * t + px * k;
            if (0..s).contains(&y) && (0..s).contains(&x) {
                img[(y * s + x) as usize] = level;
            }
        }
    }
}

/// `n` samples with classes cycling 0..4, drawn from `seed`.
pub fn bars(n: usize, noise: f32, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = BARS_SIDE * BARS_SIDE;
    let mut images = vec![0.0f32; n * per];
    let mut labels = Vec::with_capacity(n);
    for (i, img) in images.chunks_exact_mut(per).enumerate() {
        let class = i % BARS_CLASSES;
        draw_bar(&mut rng, class, noise, img);
        labels.push(class);
    }
    Dataset::new([1, BARS_SIDE, BARS_SIDE], images, labels).expect("consistent shapes")
}

/// Disjoint train and test sets (the test set uses a derived seed).
pub fn bars_split(cfg: &BarsConfig) -> Split {
    Split {
        train: bars(cfg.train, cfg.noise, cfg.seed),
        test: bars(cfg.test, cfg.noise, cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
    }
}
