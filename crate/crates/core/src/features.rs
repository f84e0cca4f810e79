//! Per-point trajectory features.
//!
//! Two families: truncated path signatures of a sliding window around each
//! point (level 0 is the constant presence term, level 1 the displacement,
//! level 2 the second iterated integrals), and the unit tangent decomposed
//! onto the two adjacent axes of an 8-direction fan. The channel plan maps
//! feature components to raster channels; imaginary strokes get their own
//! copy of every channel when enabled.

use crate::ink::{Ink, Point, StrokeKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("point index {index} out of range for stroke of {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("stroke too short for a direction estimate")]
    TooShort,
    #[error("direction vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("signature level must be 0, 1, or 2, got {0}")]
    BadLevel(u8),
    #[error("window radius must be at least 1")]
    BadRadius,
}

/// Path signature truncated at level 2.
///
/// Level 0 is identically 1 and not stored. For a single straight segment
/// with displacement d, level 2 is the outer product d⊗d/2; longer paths are
/// built by concatenation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig2 {
    pub level1: [f64; 2],
    pub level2: [[f64; 2]; 2],
}

impl Sig2 {
    /// Signature of the empty path (the concatenation identity).
    pub fn zero() -> Sig2 {
        Sig2 {
            level1: [0.0; 2],
            level2: [[0.0; 2]; 2],
        }
    }

    /// Level-0 term. Constant for every path; rendered as stroke presence.
    pub fn level0(&self) -> f64 {
        1.0
    }

    /// Closed form for the straight segment p -> q.
    pub fn segment(p: Point, q: Point) -> Sig2 {
        let d = [q.x - p.x, q.y - p.y];
        let mut level2 = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                level2[i][j] = d[i] * d[j] / 2.0;
            }
        }
        Sig2 { level1: d, level2 }
    }

    /// Signature of path a followed by path b.
    ///
    /// Level 1 adds; level 2 adds plus the cross term a1 ⊗ b1. Associative
    /// up to float rounding, with `zero()` as identity on both sides.
    pub fn concat(a: Sig2, b: Sig2) -> Sig2 {
        let mut level2 = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                level2[i][j] = a.level2[i][j] + b.level2[i][j] + a.level1[i] * b.level1[j];
            }
        }
        Sig2 {
            level1: [a.level1[0] + b.level1[0], a.level1[1] + b.level1[1]],
            level2,
        }
    }

    /// Signature of a whole polyline.
    pub fn of_polyline(points: &[Point]) -> Sig2 {
        let mut sig = Sig2::zero();
        for w in points.windows(2) {
            sig = Sig2::concat(sig, Sig2::segment(w[0], w[1]));
        }
        sig
    }
}

/// Signature of the sub-polyline within `radius` points of `index`, clipped
/// at the stroke ends. A single-point stroke yields the zero signature.
pub fn window_signature(points: &[Point], index: usize, radius: usize) -> Result<Sig2, FeatureError> {
    if index >= points.len() {
        return Err(FeatureError::IndexOutOfRange {
            index,
            len: points.len(),
        });
    }
    let lo = index.saturating_sub(radius);
    let hi = (index + radius).min(points.len() - 1);
    Ok(Sig2::of_polyline(&points[lo..=hi]))
}

/// Unit tangent at a point: forward difference at the start, backward at the
/// end, central elsewhere. If the chosen difference is zero, the nearest
/// nonzero segment decides (forward preferred on ties); a stroke with no
/// nonzero segment has no direction and fails with `TooShort`.
pub fn direction_at(points: &[Point], index: usize) -> Result<[f64; 2], FeatureError> {
    let n = points.len();
    if index >= n {
        return Err(FeatureError::IndexOutOfRange { index, len: n });
    }
    if n < 2 {
        return Err(FeatureError::TooShort);
    }
    let diff = |a: usize, b: usize| [points[b].x - points[a].x, points[b].y - points[a].y];
    let raw = if index == 0 {
        diff(0, 1)
    } else if index == n - 1 {
        diff(n - 2, n - 1)
    } else {
        diff(index - 1, index + 1)
    };
    if let Some(u) = normalize(raw) {
        return Ok(u);
    }
    // Segment j spans points j..j+1; its distance to the point is the gap to
    // its nearer endpoint.
    let seg_dist = |j: usize| {
        if j + 1 <= index {
            index - (j + 1)
        } else if j >= index {
            j - index
        } else {
            0
        }
    };
    let mut best: Option<(usize, usize)> = None;
    for j in 0..n - 1 {
        if normalize(diff(j, j + 1)).is_none() {
            continue;
        }
        let d = seg_dist(j);
        let better = match best {
            None => true,
            // Strict improvement, or same distance but forward of the point.
            Some((bd, bj)) => d < bd || (d == bd && j >= index && bj < index),
        };
        if better {
            best = Some((d, j));
        }
    }
    match best {
        Some((_, j)) => Ok(normalize(diff(j, j + 1)).expect("segment was nonzero")),
        None => Err(FeatureError::TooShort),
    }
}

fn normalize(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n > 0.0 {
        Some([v[0] / n, v[1] / n])
    } else {
        None
    }
}

/// The 8 fan axes at 45-degree steps, starting from +x, counterclockwise.
pub const DIR8_AXES: [[f64; 2]; 8] = {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [1.0, 0.0],
        [s, s],
        [0.0, 1.0],
        [-s, s],
        [-1.0, 0.0],
        [-s, -s],
        [0.0, -1.0],
        [s, -s],
    ]
};

/// Decompose a unit vector onto the two adjacent fan axes.
///
/// The sector containing the vector's angle picks axes k and k+1; the
/// parallelogram weights solve u = a*e_k + b*e_{k+1} and are nonnegative
/// within the sector. All other slots are zero, so an on-axis vector gives a
/// one-hot result (float dust below 1e-12 is snapped to zero).
pub fn decompose8(u: [f64; 2]) -> Result<[f64; 8], FeatureError> {
    let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(FeatureError::NotUnit(norm));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let angle = u[1].atan2(u[0]).rem_euclid(two_pi);
    let sector = ((angle / std::f64::consts::FRAC_PI_4).floor() as usize).min(7);
    let e0 = DIR8_AXES[sector];
    let e1 = DIR8_AXES[(sector + 1) % 8];
    let det = e0[0] * e1[1] - e0[1] * e1[0];
    let mut a = (u[0] * e1[1] - u[1] * e1[0]) / det;
    let mut b = (e0[0] * u[1] - e0[1] * u[0]) / det;
    if a.abs() < 1e-12 {
        a = 0.0;
    }
    if b.abs() < 1e-12 {
        b = 0.0;
    }
    let mut out = [0.0; 8];
    out[sector] = a;
    out[(sector + 1) % 8] = b;
    Ok(out)
}

/// Which feature components are extracted and how they map to channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Signature truncation: 0 presence only, 1 adds displacement, 2 adds
    /// the second iterated integrals.
    pub sig_level: u8,
    /// Append the 8-direction decomposition of the unit tangent.
    pub use_dir8: bool,
    /// Extract features for imaginary strokes into a second channel block.
    pub use_imaginary: bool,
    /// Sliding-window half-width for per-point signatures, in points.
    pub window_radius: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sig_level: 0,
            use_dir8: false,
            use_imaginary: false,
            window_radius: 1,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.sig_level > 2 {
            return Err(FeatureError::BadLevel(self.sig_level));
        }
        if self.window_radius == 0 {
            return Err(FeatureError::BadRadius);
        }
        Ok(())
    }

    /// Channels per stroke kind.
    pub fn block_width(&self) -> usize {
        let mut w = 1;
        if self.sig_level >= 1 {
            w += 2;
        }
        if self.sig_level >= 2 {
            w += 4;
        }
        if self.use_dir8 {
            w += 8;
        }
        w
    }

    /// Total channel count; doubled when imaginary strokes get their block.
    pub fn channels(&self) -> usize {
        self.block_width() * if self.use_imaginary { 2 } else { 1 }
    }

    /// Channel names in raster order: the real block, then an "-im" copy.
    pub fn channel_labels(&self) -> Vec<String> {
        let mut base = vec!["sig0".to_string()];
        if self.sig_level >= 1 {
            base.push("sig1x".into());
            base.push("sig1y".into());
        }
        if self.sig_level >= 2 {
            for name in ["sig2xx", "sig2xy", "sig2yx", "sig2yy"] {
                base.push(name.into());
            }
        }
        if self.use_dir8 {
            for k in 0..8 {
                base.push(format!("dir{k}"));
            }
        }
        if self.use_imaginary {
            let im: Vec<String> = base.iter().map(|l| format!("{l}-im")).collect();
            base.extend(im);
        }
        base
    }
}

/// Features of one point, prior to channel selection. The signature is kept
/// at full truncation; `channel_values` applies the configured level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFeatures {
    pub sig: Sig2,
    pub dir8: [f64; 8],
}

impl PointFeatures {
    /// Values for one stroke-kind block, in channel-label order.
    pub fn channel_values(&self, config: &FeatureConfig) -> Vec<f64> {
        let mut v = Vec::with_capacity(config.block_width());
        v.push(self.sig.level0());
        if config.sig_level >= 1 {
            v.push(self.sig.level1[0]);
            v.push(self.sig.level1[1]);
        }
        if config.sig_level >= 2 {
            for i in 0..2 {
                for j in 0..2 {
                    v.push(self.sig.level2[i][j]);
                }
            }
        }
        if config.use_dir8 {
            v.extend_from_slice(&self.dir8);
        }
        v
    }
}

/// Per-point features of one stroke, with its index into the source ink.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeFeatures {
    pub stroke_index: usize,
    pub kind: StrokeKind,
    pub points: Vec<PointFeatures>,
}

/// Extract features for every stroke the config cares about.
///
/// Imaginary strokes are skipped entirely unless `use_imaginary` is set.
/// Strokes of a single point get the zero signature and a zero direction
/// fan; dir8 is also zeroed for strokes with no nonzero segment.
pub fn point_features(ink: &Ink, config: &FeatureConfig) -> Result<Vec<StrokeFeatures>, FeatureError> {
    config.validate()?;
    let mut out = Vec::new();
    for (si, stroke) in ink.strokes().iter().enumerate() {
        if stroke.kind() == StrokeKind::Imaginary && !config.use_imaginary {
            continue;
        }
        let pts = stroke.points();
        let mut feats = Vec::with_capacity(pts.len());
        for i in 0..pts.len() {
            let sig = window_signature(pts, i, config.window_radius)?;
            let dir8 = if config.use_dir8 {
                match direction_at(pts, i) {
                    Ok(u) => decompose8(u)?,
                    Err(FeatureError::TooShort) => [0.0; 8],
                    Err(e) => return Err(e),
                }
            } else {
                [0.0; 8]
            };
            feats.push(PointFeatures { sig, dir8 });
        }
        out.push(StrokeFeatures {
            stroke_index: si,
            kind: stroke.kind(),
            points: feats,
        });
    }
    Ok(out)
}
