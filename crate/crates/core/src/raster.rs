//! Rendering per-point features onto dense multi-channel grids.
//!
//! Strokes are drawn as 8-connected Bresenham lines; each visited cell gets
//! the feature vector linearly interpolated between the segment endpoints.
//! A cell written more than once combines per the overlap mode, but the
//! first write to a cell always assigns, so signed feature values survive
//! against the zero background. The unit box maps onto a centered inner
//! window of the grid, leaving a margin for downstream convolutions.

use crate::features::{FeatureConfig, StrokeFeatures};
use crate::ink::{Ink, Point, StrokeKind};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("cell ({x}, {y}) outside {width}x{height} grid")]
    OutOfGrid {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("feature vector length {got} does not match {expected} channels")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid render config: {0}")]
    BadConfig(String),
    #[error("channel labels must be nonempty and distinct")]
    BadLabels,
    #[error("features are not aligned with ink strokes: {0}")]
    FeatureMismatch(String),
}

/// What happens when two strokes write the same cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    /// Per-channel maximum of existing and incoming. Keeps magnitudes
    /// bounded where strokes cross.
    Max,
    /// Incoming replaces existing; later strokes win.
    Overwrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Side of the window the unit box maps onto.
    pub inner: usize,
    /// Side of the full grid; the window is centered in it.
    pub outer: usize,
    pub overlap: OverlapMode,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            inner: 24,
            outer: 48,
            overlap: OverlapMode::Max,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RasterError> {
        if self.inner < 8 {
            return Err(RasterError::BadConfig(format!(
                "inner window {} is below the minimum of 8",
                self.inner
            )));
        }
        if self.inner > self.outer {
            return Err(RasterError::BadConfig(format!(
                "inner window {} exceeds outer grid {}",
                self.inner, self.outer
            )));
        }
        Ok(())
    }
}

/// Dense C x H x W grid of f32 features with named channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    labels: Vec<String>,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn zeros(labels: Vec<String>, height: usize, width: usize) -> Result<Self, RasterError> {
        if labels.is_empty() {
            return Err(RasterError::BadLabels);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(RasterError::BadLabels);
            }
        }
        let data = vec![0.0; labels.len() * height * width];
        Ok(FeatureTensor {
            labels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// Rebuild from parts; used by the binary codec.
    pub fn from_parts(
        labels: Vec<String>,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, RasterError> {
        let mut t = FeatureTensor::zeros(labels, height, width)?;
        if data.len() != t.data.len() {
            return Err(RasterError::DimensionMismatch {
                got: data.len(),
                expected: t.data.len(),
            });
        }
        t.data = data;
        Ok(t)
    }
}

/// Tracks which (channel, cell) slots have been written, so the first write
/// assigns and only true collisions combine.
#[derive(Debug, Clone)]
pub struct SplatMask {
    bits: Vec<bool>,
    height: usize,
    width: usize,
}

impl SplatMask {
    pub fn for_tensor(t: &FeatureTensor) -> SplatMask {
        SplatMask {
            bits: vec![false; t.channels() * t.height() * t.width()],
            height: t.height(),
            width: t.width(),
        }
    }

    #[inline]
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

/// Cells of the 8-connected line from p to q, endpoints included, in walk
/// order. Both endpoints must be inside the grid, which bounds every
/// intermediate cell as well.
pub fn bresenham_cells(
    p: (i64, i64),
    q: (i64, i64),
    width: usize,
    height: usize,
) -> Result<Vec<(i64, i64)>, RasterError> {
    for &(x, y) in &[p, q] {
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            return Err(RasterError::OutOfGrid {
                x,
                y,
                width,
                height,
            });
        }
    }
    let (mut x, mut y) = p;
    let dx = (q.0 - p.0).abs();
    let dy = -(q.1 - p.1).abs();
    let sx = if p.0 < q.0 { 1 } else { -1 };
    let sy = if p.1 < q.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut cells = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        cells.push((x, y));
        if x == q.0 && y == q.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    Ok(cells)
}

/// Splat one segment into a channel range of the tensor.
///
/// `f_p` and `f_q` must have the range's length; cell j of m gets the
/// interpolation at t = j/(m-1). First writes assign; collisions combine
/// per mode.
pub fn splat_channels(
    tensor: &mut FeatureTensor,
    mask: &mut SplatMask,
    channels: Range<usize>,
    p: (i64, i64),
    q: (i64, i64),
    f_p: &[f64],
    f_q: &[f64],
    mode: OverlapMode,
) -> Result<(), RasterError> {
    let span = channels.end - channels.start;
    if channels.end > tensor.channels() {
        return Err(RasterError::DimensionMismatch {
            got: channels.end,
            expected: tensor.channels(),
        });
    }
    if f_p.len() != span || f_q.len() != span {
        return Err(RasterError::DimensionMismatch {
            got: f_p.len().max(f_q.len()),
            expected: span,
        });
    }
    let cells = bresenham_cells(p, q, tensor.width(), tensor.height())?;
    let m = cells.len();
    for (j, &(cx, cy)) in cells.iter().enumerate() {
        let t = if m > 1 { j as f64 / (m - 1) as f64 } else { 0.0 };
        for (k, c) in channels.clone().enumerate() {
            let v = (f_p[k] + (f_q[k] - f_p[k]) * t) as f32;
            let (x, y) = (cx as usize, cy as usize);
            let mi = mask.idx(c, y, x);
            let ti = tensor.idx(c, y, x);
            if !mask.bits[mi] {
                mask.bits[mi] = true;
                tensor.data[ti] = v;
            } else {
                tensor.data[ti] = match mode {
                    OverlapMode::Max => tensor.data[ti].max(v),
                    OverlapMode::Overwrite => v,
                };
            }
        }
    }
    Ok(())
}

/// Splat across all channels of the tensor.
pub fn splat_segment(
    tensor: &mut FeatureTensor,
    mask: &mut SplatMask,
    p: (i64, i64),
    q: (i64, i64),
    f_p: &[f64],
    f_q: &[f64],
    mode: OverlapMode,
) -> Result<(), RasterError> {
    let all = 0..tensor.channels();
    splat_channels(tensor, mask, all, p, q, f_p, f_q, mode)
}

/// Render extracted stroke features onto a fresh grid.
///
/// The ink must be normalized to the unit box and the feature list must be
/// aligned with its strokes (same indices, same point counts). Real strokes
/// write the first channel block; imaginary strokes write the second when
/// the config has one.
pub fn render(
    ink: &Ink,
    features: &[StrokeFeatures],
    fc: &FeatureConfig,
    rc: &RenderConfig,
) -> Result<FeatureTensor, RasterError> {
    rc.validate()?;
    let mut tensor = FeatureTensor::zeros(fc.channel_labels(), rc.outer, rc.outer)?;
    let mut mask = SplatMask::for_tensor(&tensor);
    let block = fc.block_width();
    let offset = ((rc.outer - rc.inner) / 2) as i64;
    let scale = (rc.inner - 1) as f64;
    let to_cell = |p: Point| {
        (
            (p.x * scale).round() as i64 + offset,
            (p.y * scale).round() as i64 + offset,
        )
    };
    for sf in features {
        let stroke = ink
            .strokes()
            .get(sf.stroke_index)
            .ok_or_else(|| RasterError::FeatureMismatch(format!(
                "stroke index {} out of range",
                sf.stroke_index
            )))?;
        if stroke.points().len() != sf.points.len() {
            return Err(RasterError::FeatureMismatch(format!(
                "stroke {} has {} points but {} feature rows",
                sf.stroke_index,
                stroke.points().len(),
                sf.points.len()
            )));
        }
        let range = match sf.kind {
            StrokeKind::Real => 0..block,
            StrokeKind::Imaginary => {
                if !fc.use_imaginary {
                    continue;
                }
                block..2 * block
            }
        };
        let pts = stroke.points();
        if pts.len() == 1 {
            let cell = to_cell(pts[0]);
            let f = sf.points[0].channel_values(fc);
            splat_channels(&mut tensor, &mut mask, range, cell, cell, &f, &f, rc.overlap)?;
            continue;
        }
        for i in 0..pts.len() - 1 {
            let f_p = sf.points[i].channel_values(fc);
            let f_q = sf.points[i + 1].channel_values(fc);
            splat_channels(
                &mut tensor,
                &mut mask,
                range.clone(),
                to_cell(pts[i]),
                to_cell(pts[i + 1]),
                &f_p,
                &f_q,
                rc.overlap,
            )?;
        }
    }
    Ok(tensor)
}
