//! Training-time ink deformation.
//!
//! Three families compose, each mild enough to keep samples legible: an
//! affine jitter about the box center, endpoint-fixed 1-D coordinate warps,
//! and a shear plus local-resize distortion. A policy samples one concrete
//! deformation per (sample, epoch) seed; applying the same seed twice gives
//! the same ink.

use crate::ink::{Ink, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("warp strength must satisfy |alpha| <= 1, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid parameter range: {0}")]
    InvalidRange(String),
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<(), AugmentError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(AugmentError::InvalidRange(format!("{name}: [{lo}, {hi}]")));
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Ranges for the affine jitter draw. Defaults are mild: scale and stretch
/// within 15%, rotation within 0.13 rad, translation within 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineJitterParams {
    pub scale_range: (f64, f64),
    pub rotate_range: (f64, f64),
    pub translate_range: (f64, f64),
    pub stretch_range: (f64, f64),
}

impl Default for AffineJitterParams {
    fn default() -> Self {
        AffineJitterParams {
            scale_range: (0.85, 1.15),
            rotate_range: (-0.13, 0.13),
            translate_range: (-0.05, 0.05),
            stretch_range: (0.85, 1.15),
        }
    }
}

impl AffineJitterParams {
    /// Degenerate ranges that always draw the identity transform.
    pub fn identity() -> Self {
        AffineJitterParams {
            scale_range: (1.0, 1.0),
            rotate_range: (0.0, 0.0),
            translate_range: (0.0, 0.0),
            stretch_range: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        check_range("scale", self.scale_range)?;
        check_range("rotate", self.rotate_range)?;
        check_range("translate", self.translate_range)?;
        check_range("stretch", self.stretch_range)?;
        if self.scale_range.0 <= 0.0 {
            return Err(AugmentError::InvalidRange(
                "scale range must be positive".into(),
            ));
        }
        if self.stretch_range.0 <= 0.0 {
            return Err(AugmentError::InvalidRange(
                "stretch range must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One concrete affine draw: rotate by `rotate`, scale by `scale` with
/// per-axis `stretch`, translate by `translate`, all about (0.5, 0.5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDraw {
    pub scale: f64,
    pub rotate: f64,
    pub translate: (f64, f64),
    pub stretch: (f64, f64),
}

impl AffineDraw {
    pub fn sample(params: &AffineJitterParams, rng: &mut ChaCha8Rng) -> AffineDraw {
        AffineDraw {
            scale: draw(rng, params.scale_range),
            rotate: draw(rng, params.rotate_range),
            translate: (draw(rng, params.translate_range), draw(rng, params.translate_range)),
            stretch: (draw(rng, params.stretch_range), draw(rng, params.stretch_range)),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0
            && self.rotate == 0.0
            && self.translate == (0.0, 0.0)
            && self.stretch == (1.0, 1.0)
    }

    /// Apply about the box center, then re-normalize only if the result
    /// escapes the unit box. The identity draw returns the input exactly.
    pub fn apply(&self, ink: &Ink) -> Ink {
        if self.is_identity() {
            return ink.clone();
        }
        let (sin, cos) = self.rotate.sin_cos();
        let sx = self.stretch.0 * self.scale;
        let sy = self.stretch.1 * self.scale;
        let out = ink.map_points(|p| {
            let dx = (p.x - 0.5) * sx;
            let dy = (p.y - 0.5) * sy;
            Point {
                x: 0.5 + self.translate.0 + cos * dx - sin * dy,
                y: 0.5 + self.translate.1 + sin * dx + cos * dy,
            }
        });
        renormalize_if_escaped(out)
    }
}

fn renormalize_if_escaped(ink: Ink) -> Ink {
    if ink.in_unit_box() {
        ink
    } else {
        ink.normalize_to_box(true)
            .expect("deformed ink keeps distinct points")
    }
}

/// Draw an affine jitter from the seed and apply it.
pub fn affine_jitter(ink: &Ink, params: &AffineJitterParams, rng_seed: u64) -> Ink {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    AffineDraw::sample(params, &mut rng).apply(ink)
}

/// Endpoint-fixed 1-D warps per axis: t -> t + alpha * t * (1 - t).
/// Monotone on [0,1] for |alpha| <= 1, so stroke topology is preserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub alpha_x: f64,
    pub alpha_y: f64,
}

impl WarpParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for a in [self.alpha_x, self.alpha_y] {
            if !(a.is_finite() && a.abs() <= 1.0) {
                return Err(AugmentError::InvalidAlpha(a));
            }
        }
        Ok(())
    }
}

fn warp_axis(t: f64, alpha: f64) -> f64 {
    t + alpha * t * (1.0 - t)
}

/// Warp both coordinates of every point. Input must lie in the unit box.
pub fn warp_1d(ink: &Ink, params: &WarpParams) -> Result<Ink, AugmentError> {
    params.validate()?;
    Ok(ink.map_points(|p| Point {
        x: warp_axis(p.x, params.alpha_x),
        y: warp_axis(p.y, params.alpha_y),
    }))
}

/// Shear plus local resize: x gains `shear * (y - 0.5)`, then points within
/// `resize_radius` of `resize_center` move toward or away from it, blending
/// from `resize_factor` at the center to no change at the rim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeungParams {
    pub shear: f64,
    pub resize_center: (f64, f64),
    pub resize_factor: f64,
    pub resize_radius: f64,
}

impl LeungParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.resize_factor >= 0.5 && self.resize_factor <= 2.0) {
            return Err(AugmentError::InvalidRange(format!(
                "resize factor {} outside [0.5, 2]",
                self.resize_factor
            )));
        }
        if !(self.resize_radius > 0.0 && self.resize_radius <= 1.0) {
            return Err(AugmentError::InvalidRange(format!(
                "resize radius {} outside (0, 1]",
                self.resize_radius
            )));
        }
        Ok(())
    }
}

/// Apply the distortion, re-normalizing only if the ink escapes the box.
pub fn distort_leung(ink: &Ink, params: &LeungParams) -> Result<Ink, AugmentError> {
    params.validate()?;
    let mut out = ink.clone();
    if params.shear != 0.0 {
        let shear = params.shear;
        out = out.map_points(|p| Point {
            x: p.x + shear * (p.y - 0.5),
            y: p.y,
        });
    }
    if params.resize_factor != 1.0 {
        let (cx, cy) = params.resize_center;
        let r = params.resize_radius;
        let factor = params.resize_factor;
        out = out.map_points(|p| {
            let dx = p.x - cx;
            let dy = p.y - cy;
            let d = (dx * dx + dy * dy).sqrt();
            if d >= r {
                return p;
            }
            let f = factor + (1.0 - factor) * (d / r);
            Point {
                x: cx + f * dx,
                y: cy + f * dy,
            }
        });
    }
    Ok(renormalize_if_escaped(out))
}

/// Which deformations a training run draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformPolicy {
    /// Coin-flip the 1-D warps on each draw.
    pub use_warp: bool,
    /// Coin-flip the shear/resize distortion on each draw.
    pub use_leung: bool,
    pub affine: AffineJitterParams,
    pub alpha_range: (f64, f64),
    pub shear_range: (f64, f64),
    pub resize_factor_range: (f64, f64),
    pub resize_radius_range: (f64, f64),
}

impl Default for DeformPolicy {
    fn default() -> Self {
        DeformPolicy {
            use_warp: false,
            use_leung: false,
            affine: AffineJitterParams::default(),
            alpha_range: (-0.5, 0.5),
            shear_range: (-0.25, 0.25),
            resize_factor_range: (0.8, 1.25),
            resize_radius_range: (0.3, 0.9),
        }
    }
}

impl DeformPolicy {
    /// Affine jitter only, with identity ranges: every draw is a no-op.
    pub fn disabled() -> Self {
        DeformPolicy {
            use_warp: false,
            use_leung: false,
            affine: AffineJitterParams::identity(),
            ..DeformPolicy::default()
        }
    }

    /// True when every possible draw is a no-op, so featurization under
    /// this policy can be computed once and reused.
    pub fn is_identity(&self) -> bool {
        !self.use_warp && !self.use_leung && self.affine == AffineJitterParams::identity()
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        self.affine.validate()?;
        check_range("alpha", self.alpha_range)?;
        if self.alpha_range.0 < -1.0 || self.alpha_range.1 > 1.0 {
            return Err(AugmentError::InvalidRange(
                "alpha range must stay within [-1, 1]".into(),
            ));
        }
        check_range("shear", self.shear_range)?;
        check_range("resize factor", self.resize_factor_range)?;
        check_range("resize radius", self.resize_radius_range)?;
        Ok(())
    }
}

/// One concrete deformation, replayable on any ink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledDeformation {
    pub warp: Option<WarpParams>,
    pub leung: Option<LeungParams>,
    pub affine: AffineDraw,
}

/// Sample a deformation. Draw order is fixed (warp coin and params, leung
/// coin and params, affine) so a given seed always yields the same result.
pub fn sample_deformation(policy: &DeformPolicy, rng_seed: u64) -> SampledDeformation {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let warp = if policy.use_warp && rng.random::<bool>() {
        Some(WarpParams {
            alpha_x: draw(&mut rng, policy.alpha_range),
            alpha_y: draw(&mut rng, policy.alpha_range),
        })
    } else {
        None
    };
    let leung = if policy.use_leung && rng.random::<bool>() {
        Some(LeungParams {
            shear: draw(&mut rng, policy.shear_range),
            resize_center: (draw(&mut rng, (0.0, 1.0)), draw(&mut rng, (0.0, 1.0))),
            resize_factor: draw(&mut rng, policy.resize_factor_range),
            resize_radius: draw(&mut rng, policy.resize_radius_range),
        })
    } else {
        None
    };
    let affine = AffineDraw::sample(&policy.affine, &mut rng);
    SampledDeformation {
        warp,
        leung,
        affine,
    }
}

impl SampledDeformation {
    /// Warp, then distort, then affine jitter. Each stage keeps the ink in
    /// the unit box (re-normalizing when necessary), so stages compose.
    pub fn apply(&self, ink: &Ink) -> Result<Ink, AugmentError> {
        let mut out = ink.clone();
        if let Some(w) = &self.warp {
            out = warp_1d(&out, w)?;
        }
        if let Some(l) = &self.leung {
            out = distort_leung(&out, l)?;
        }
        Ok(self.affine.apply(&out))
    }
}
