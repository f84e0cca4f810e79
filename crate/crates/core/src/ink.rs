//! Ink data model: ordered strokes of 2-D points.
//!
//! All geometry downstream of ingestion assumes ink normalized into the unit
//! box. Imaginary strokes are synthesized pen-up segments; they carry their
//! kind so feature extraction can route them to separate channels, and they
//! are excluded from bounding boxes and normalization decisions.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InkError {
    #[error("ink must contain at least one real stroke")]
    NoRealStroke,
    #[error("stroke must contain at least one point")]
    EmptyStroke,
    #[error("ink coordinates must be finite")]
    NonFinite,
    #[error("all points coincide, nothing to normalize")]
    DegenerateInk,
    #[error("resample spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
}

/// One trajectory point, in whatever units the source used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point {
            x: self.x + (other.x - self.x) * t,
            y: self.y + (other.y - self.y) * t,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrokeKind {
    /// Pen-down trajectory from the source device.
    Real,
    /// Synthesized pen-up connector between consecutive real strokes.
    Imaginary,
}

/// A polyline of at least one point. The kind is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    points: Vec<Point>,
    kind: StrokeKind,
}

impl Stroke {
    pub fn new(points: Vec<Point>, kind: StrokeKind) -> Result<Self, InkError> {
        if points.is_empty() {
            return Err(InkError::EmptyStroke);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(InkError::NonFinite);
        }
        Ok(Stroke { points, kind })
    }

    pub fn real(points: Vec<Point>) -> Result<Self, InkError> {
        Self::new(points, StrokeKind::Real)
    }

    pub fn imaginary(points: Vec<Point>) -> Result<Self, InkError> {
        Self::new(points, StrokeKind::Imaginary)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn kind(&self) -> StrokeKind {
        self.kind
    }

    pub fn is_real(&self) -> bool {
        self.kind == StrokeKind::Real
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

/// Axis-aligned bounding rectangle. Width or height may be zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// One character sample: ordered strokes plus an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Ink {
    strokes: Vec<Stroke>,
    label: Option<String>,
}

impl Ink {
    /// At least one real stroke is required; imaginary-only ink has no
    /// geometry of its own.
    pub fn new(strokes: Vec<Stroke>, label: Option<String>) -> Result<Self, InkError> {
        if !strokes.iter().any(Stroke::is_real) {
            return Err(InkError::NoRealStroke);
        }
        Ok(Ink { strokes, label })
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Ink {
        self.label = Some(label.into());
        self
    }

    pub fn real_strokes(&self) -> impl Iterator<Item = &Stroke> {
        self.strokes.iter().filter(|s| s.is_real())
    }

    /// Apply a point map, preserving stroke structure, kinds, and label.
    pub fn map_points<F: Fn(Point) -> Point>(&self, f: F) -> Ink {
        let strokes = self
            .strokes
            .iter()
            .map(|s| Stroke {
                points: s.points.iter().map(|&p| f(p)).collect(),
                kind: s.kind,
            })
            .collect();
        Ink {
            strokes,
            label: self.label.clone(),
        }
    }

    /// Bounding box over real strokes only.
    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for s in self.real_strokes() {
            for p in s.points() {
                r.min_x = r.min_x.min(p.x);
                r.min_y = r.min_y.min(p.y);
                r.max_x = r.max_x.max(p.x);
                r.max_y = r.max_y.max(p.y);
            }
        }
        r
    }

    /// True if every point of every stroke lies in the unit box.
    pub fn in_unit_box(&self) -> bool {
        self.strokes
            .iter()
            .flat_map(|s| s.points())
            .all(|p| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y))
    }

    /// Scale and translate the real-stroke bounding box into `[0,1]^2`.
    ///
    /// With `preserve_aspect`, one uniform scale is used and the shorter
    /// dimension is centered; otherwise each dimension spans `[0,1]`
    /// independently. A dimension of zero extent is centered at 0.5. Fails
    /// only when all real points coincide.
    pub fn normalize_to_box(&self, preserve_aspect: bool) -> Result<Ink, InkError> {
        let bb = self.bounding_box();
        let (w, h) = (bb.width(), bb.height());
        if w == 0.0 && h == 0.0 {
            return Err(InkError::DegenerateInk);
        }
        let (sx, ox, sy, oy);
        if preserve_aspect {
            let s = 1.0 / w.max(h);
            sx = s;
            sy = s;
            ox = (1.0 - w * s) / 2.0;
            oy = (1.0 - h * s) / 2.0;
        } else {
            (sx, ox) = if w > 0.0 { (1.0 / w, 0.0) } else { (0.0, 0.5) };
            (sy, oy) = if h > 0.0 { (1.0 / h, 0.0) } else { (0.0, 0.5) };
        }
        Ok(self.map_points(|p| Point {
            x: (p.x - bb.min_x) * sx + ox,
            y: (p.y - bb.min_y) * sy + oy,
        }))
    }

    /// Resample each stroke at equal arc-length steps.
    ///
    /// Original endpoints are kept exactly; interior points land at arc
    /// lengths `spacing, 2*spacing, ...` along the stroke. A stroke shorter
    /// than `spacing` reduces to its endpoints; single-point strokes pass
    /// through unchanged.
    pub fn resample_equidistant(&self, spacing: f64) -> Result<Ink, InkError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(InkError::InvalidSpacing(spacing));
        }
        let strokes = self
            .strokes
            .iter()
            .map(|s| resample_stroke(s, spacing))
            .collect();
        Ok(Ink {
            strokes,
            label: self.label.clone(),
        })
    }

    /// Insert an imaginary two-point stroke between each consecutive pair of
    /// real strokes, connecting the end of one to the start of the next.
    pub fn with_imaginary_strokes(&self) -> Ink {
        let mut out = Vec::with_capacity(self.strokes.len() * 2);
        for (i, s) in self.strokes.iter().enumerate() {
            out.push(s.clone());
            if !s.is_real() {
                continue;
            }
            if let Some(next) = self.strokes[i + 1..].iter().find(|t| t.is_real()) {
                let a = *s.points.last().expect("stroke is nonempty");
                let b = next.points[0];
                out.push(Stroke {
                    points: vec![a, b],
                    kind: StrokeKind::Imaginary,
                });
            }
        }
        Ink {
            strokes: out,
            label: self.label.clone(),
        }
    }
}

fn resample_stroke(s: &Stroke, spacing: f64) -> Stroke {
    let pts = s.points();
    if pts.len() == 1 {
        return s.clone();
    }
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let last = *cum.last().expect("nonempty");
        cum.push(last + w[0].dist(w[1]));
    }
    let total = *cum.last().expect("nonempty");
    let mut out = vec![pts[0]];
    if total > 0.0 {
        // Targets are k*spacing computed fresh each step so no additive
        // drift accumulates; a target within eps of the end is dropped in
        // favor of the exact final point.
        let eps = spacing * 1e-9;
        let mut seg = 0usize;
        let mut k = 1u64;
        loop {
            let target = k as f64 * spacing;
            if target >= total - eps {
                break;
            }
            while cum[seg + 1] < target {
                seg += 1;
            }
            let seg_len = cum[seg + 1] - cum[seg];
            let t = if seg_len > 0.0 {
                (target - cum[seg]) / seg_len
            } else {
                0.0
            };
            out.push(pts[seg].lerp(pts[seg + 1], t));
            k += 1;
        }
    }
    out.push(*pts.last().expect("nonempty"));
    Stroke {
        points: out,
        kind: s.kind(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    fn ink_of(strokes: &[&[(f64, f64)]]) -> Ink {
        let strokes = strokes
            .iter()
            .map(|s| Stroke::real(pts(s)).unwrap())
            .collect();
        Ink::new(strokes, None).unwrap()
    }

    #[test]
    fn empty_stroke_rejected() {
        assert_eq!(Stroke::real(vec![]).unwrap_err(), InkError::EmptyStroke);
    }

    #[test]
    fn non_finite_rejected() {
        let e = Stroke::real(pts(&[(f64::NAN, 0.0)])).unwrap_err();
        assert_eq!(e, InkError::NonFinite);
    }

    #[test]
    fn ink_requires_a_real_stroke() {
        let im = Stroke::imaginary(pts(&[(0.0, 0.0), (1.0, 1.0)])).unwrap();
        assert_eq!(Ink::new(vec![im], None).unwrap_err(), InkError::NoRealStroke);
    }

    #[test]
    fn normalize_preserves_aspect_and_centers() {
        // Horizontal segment (0,5)-(4,5): width 4, height 0.
        let ink = ink_of(&[&[(0.0, 5.0), (4.0, 5.0)]]);
        let n = ink.normalize_to_box(true).unwrap();
        let p = n.strokes()[0].points();
        assert_eq!(p[0], Point::new(0.0, 0.5));
        assert_eq!(p[1], Point::new(1.0, 0.5));
    }

    #[test]
    fn normalize_aspect_example() {
        // Box 2 wide, 1 tall: scale 1/2, y centered.
        let ink = ink_of(&[&[(0.0, 0.0), (2.0, 1.0)]]);
        let n = ink.normalize_to_box(true).unwrap();
        let p = n.strokes()[0].points();
        assert_eq!(p[0], Point::new(0.0, 0.25));
        assert_eq!(p[1], Point::new(1.0, 0.75));
    }

    #[test]
    fn normalize_without_aspect_spans_both_axes() {
        let ink = ink_of(&[&[(1.0, 2.0), (3.0, 10.0)]]);
        let n = ink.normalize_to_box(false).unwrap();
        let p = n.strokes()[0].points();
        assert_eq!(p[0], Point::new(0.0, 0.0));
        assert_eq!(p[1], Point::new(1.0, 1.0));
    }

    #[test]
    fn normalize_is_idempotent_on_unit_spanning_ink() {
        let ink = ink_of(&[&[(0.0, 0.0), (0.3, 0.8), (1.0, 1.0)]]);
        let once = ink.normalize_to_box(true).unwrap();
        let twice = once.normalize_to_box(true).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn normalize_degenerate_ink_fails() {
        let ink = ink_of(&[&[(2.0, 2.0), (2.0, 2.0)]]);
        assert_eq!(
            ink.normalize_to_box(true).unwrap_err(),
            InkError::DegenerateInk
        );
    }

    #[test]
    fn bounding_box_ignores_imaginary_strokes() {
        let real = Stroke::real(pts(&[(0.0, 0.0), (1.0, 1.0)])).unwrap();
        let im = Stroke::imaginary(pts(&[(5.0, 5.0), (9.0, 9.0)])).unwrap();
        let ink = Ink::new(vec![real, im], None).unwrap();
        let bb = ink.bounding_box();
        assert_eq!((bb.max_x, bb.max_y), (1.0, 1.0));
    }

    #[test]
    fn resample_l_path_at_half_spacing() {
        let ink = ink_of(&[&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]]);
        let r = ink.resample_equidistant(0.5).unwrap();
        let p = r.strokes()[0].points();
        assert_eq!(
            p,
            pts(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0)])
        );
    }

    #[test]
    fn resample_short_stroke_keeps_endpoints_only() {
        let ink = ink_of(&[&[(0.0, 0.0), (0.1, 0.0)]]);
        let r = ink.resample_equidistant(0.5).unwrap();
        assert_eq!(r.strokes()[0].points(), pts(&[(0.0, 0.0), (0.1, 0.0)]));
    }

    #[test]
    fn resample_single_point_stroke_passes_through() {
        let ink = ink_of(&[&[(0.3, 0.3)], &[(0.0, 0.0), (1.0, 0.0)]]);
        let r = ink.resample_equidistant(0.25).unwrap();
        assert_eq!(r.strokes()[0].points(), pts(&[(0.3, 0.3)]));
    }

    #[test]
    fn resample_zero_length_multipoint_stroke() {
        let ink = ink_of(&[&[(0.2, 0.2), (0.2, 0.2), (0.2, 0.2)]]);
        let r = ink.resample_equidistant(0.1).unwrap();
        assert_eq!(r.strokes()[0].points(), pts(&[(0.2, 0.2), (0.2, 0.2)]));
    }

    #[test]
    fn resample_rejects_bad_spacing() {
        let ink = ink_of(&[&[(0.0, 0.0), (1.0, 0.0)]]);
        assert!(matches!(
            ink.resample_equidistant(0.0),
            Err(InkError::InvalidSpacing(_))
        ));
        assert!(matches!(
            ink.resample_equidistant(f64::NAN),
            Err(InkError::InvalidSpacing(_))
        ));
    }

    #[test]
    fn imaginary_strokes_connect_consecutive_real_strokes() {
        let ink = ink_of(&[
            &[(0.0, 0.0), (0.2, 0.0)],
            &[(0.5, 0.5), (0.7, 0.5)],
            &[(0.9, 0.9)],
        ]);
        let with = ink.with_imaginary_strokes();
        let kinds: Vec<StrokeKind> = with.strokes().iter().map(|s| s.kind()).collect();
        assert_eq!(
            kinds,
            vec![
                StrokeKind::Real,
                StrokeKind::Imaginary,
                StrokeKind::Real,
                StrokeKind::Imaginary,
                StrokeKind::Real
            ]
        );
        let im = with.strokes()[1].points();
        assert_eq!(im, pts(&[(0.2, 0.0), (0.5, 0.5)]));
        // Real strokes untouched, in order.
        assert_eq!(with.strokes()[0], ink.strokes()[0]);
        assert_eq!(with.strokes()[2], ink.strokes()[1]);
    }

    #[test]
    fn imaginary_pass_adds_none_for_single_stroke() {
        let ink = ink_of(&[&[(0.0, 0.0), (1.0, 1.0)]]);
        assert_eq!(ink.with_imaginary_strokes().strokes().len(), 1);
    }
}
