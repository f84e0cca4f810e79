//! Synthetic glyph generator.
//!
//! Each class is a random template of 2..=6 stroke primitives (lines, hooks,
//! boxes); samples are the template with per-point jitter. Everything is
//! derived from the config seed, so the same config always produces the
//! same dataset, and distinct classes draw distinct templates.

use super::{DataError, Dataset};
use crate::ink::{Ink, Point, Stroke};
use crate::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Half-width of the uniform per-point jitter, in unit-box units.
    pub jitter_scale: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_classes < 2 {
            return Err(DataError::InvalidDataset(
                "synthesis needs at least 2 classes".into(),
            ));
        }
        if self.samples_per_class == 0 {
            return Err(DataError::InvalidDataset(
                "samples_per_class must be positive".into(),
            ));
        }
        if !(self.jitter_scale >= 0.0 && self.jitter_scale < 0.5) {
            return Err(DataError::InvalidDataset(format!(
                "jitter scale {} outside [0, 0.5)",
                self.jitter_scale
            )));
        }
        Ok(())
    }
}

/// Generate `num_classes * samples_per_class` labeled samples, grouped by
/// class, labels "c000" onward in class-index order.
pub fn synth_dataset(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut samples = Vec::with_capacity(config.num_classes * config.samples_per_class);
    for class in 0..config.num_classes {
        let template = class_template(config.seed, class);
        let label = format!("c{class:03}");
        for idx in 0..config.samples_per_class {
            let ink = jittered(
                &template,
                config.jitter_scale,
                derive_seed(config.seed, "synth-sample", &[class as u64, idx as u64]),
            )
            .with_label(label.clone());
            samples.push(ink);
        }
    }
    Dataset::from_samples(samples)
}

fn class_template(seed: u64, class: usize) -> Vec<Vec<Point>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth-template", &[class as u64]));
    let n_strokes = rng.random_range(2..=6usize);
    (0..n_strokes).map(|_| primitive(&mut rng)).collect()
}

fn clamp_box(p: Point) -> Point {
    Point::new(p.x.clamp(0.05, 0.95), p.y.clamp(0.05, 0.95))
}

fn primitive(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let anchor = Point::new(rng.random_range(0.1..=0.75), rng.random_range(0.1..=0.75));
    match rng.random_range(0..10u32) {
        // Straight line along one of the 8 fan directions.
        0..=4 => {
            let dir = rng.random_range(0..8u32) as f64 * std::f64::consts::FRAC_PI_4;
            let len = rng.random_range(0.25..=0.6);
            let end = clamp_box(Point::new(
                anchor.x + len * dir.cos(),
                anchor.y + len * dir.sin(),
            ));
            vec![anchor, end]
        }
        // Line with a short perpendicular tail.
        5..=7 => {
            let dir = rng.random_range(0..8u32) as f64 * std::f64::consts::FRAC_PI_4;
            let len = rng.random_range(0.25..=0.5);
            let tail = rng.random_range(0.1..=0.25);
            let mid = clamp_box(Point::new(
                anchor.x + len * dir.cos(),
                anchor.y + len * dir.sin(),
            ));
            let perp = dir + std::f64::consts::FRAC_PI_2;
            let end = clamp_box(Point::new(
                mid.x + tail * perp.cos(),
                mid.y + tail * perp.sin(),
            ));
            vec![anchor, mid, end]
        }
        // Closed box.
        _ => {
            let w = rng.random_range(0.2..=0.45);
            let h = rng.random_range(0.2..=0.45);
            let a = clamp_box(anchor);
            let b = clamp_box(Point::new(anchor.x + w, anchor.y));
            let c = clamp_box(Point::new(anchor.x + w, anchor.y + h));
            let d = clamp_box(Point::new(anchor.x, anchor.y + h));
            vec![a, b, c, d, a]
        }
    }
}

fn jittered(template: &[Vec<Point>], jitter: f64, seed: u64) -> Ink {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strokes = template
        .iter()
        .map(|pts| {
            let moved = pts
                .iter()
                .map(|p| {
                    let (dx, dy) = if jitter > 0.0 {
                        (
                            rng.random_range(-jitter..=jitter),
                            rng.random_range(-jitter..=jitter),
                        )
                    } else {
                        (0.0, 0.0)
                    };
                    Point::new(p.x + dx, p.y + dy)
                })
                .collect();
            Stroke::real(moved).expect("template strokes are nonempty and finite")
        })
        .collect();
    Ink::new(strokes, None).expect("templates contain real strokes")
}
