//! JSON-lines ink interchange.
//!
//! One sample per line: {"label": "...", "strokes": [{"kind": "real",
//! "points": [[x, y], ...]}, ...]}. Stroke kinds survive the trip, so
//! datasets with synthesized pen-up strokes can be stored.

use super::{DataError, Dataset};
use crate::ink::{Ink, Point, Stroke, StrokeKind};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct WireSample {
    label: String,
    strokes: Vec<WireStroke>,
}

#[derive(Serialize, Deserialize)]
struct WireStroke {
    kind: String,
    points: Vec<(f64, f64)>,
}

fn to_wire(ink: &Ink) -> Result<WireSample, DataError> {
    let label = ink
        .label()
        .ok_or_else(|| DataError::InvalidDataset("sample has no label".into()))?;
    Ok(WireSample {
        label: label.to_string(),
        strokes: ink
            .strokes()
            .iter()
            .map(|s| WireStroke {
                kind: match s.kind() {
                    StrokeKind::Real => "real".into(),
                    StrokeKind::Imaginary => "imaginary".into(),
                },
                points: s.points().iter().map(|p| (p.x, p.y)).collect(),
            })
            .collect(),
    })
}

fn from_wire(wire: WireSample, line: usize) -> Result<Ink, DataError> {
    let parse_fail = |reason: String| DataError::ParseError { line, reason };
    let mut strokes = Vec::with_capacity(wire.strokes.len());
    for s in wire.strokes {
        let kind = match s.kind.as_str() {
            "real" => StrokeKind::Real,
            "imaginary" => StrokeKind::Imaginary,
            other => return Err(parse_fail(format!("unknown stroke kind '{other}'"))),
        };
        let points = s.points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        strokes.push(Stroke::new(points, kind).map_err(|e| parse_fail(e.to_string()))?);
    }
    Ink::new(strokes, Some(wire.label)).map_err(|e| parse_fail(e.to_string()))
}

pub fn write_inkjson<W: Write>(mut w: W, dataset: &Dataset) -> Result<(), DataError> {
    for sample in dataset.samples() {
        let wire = to_wire(sample)?;
        let line = serde_json::to_string(&wire)
            .map_err(|e| DataError::FormatError(format!("json encode: {e}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_inkjson<R: BufRead>(r: R) -> Result<Dataset, DataError> {
    let mut samples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireSample = serde_json::from_str(&line).map_err(|e| DataError::ParseError {
            line: line_no,
            reason: e.to_string(),
        })?;
        samples.push(from_wire(wire, line_no)?);
    }
    Dataset::from_samples(samples)
}

pub fn save_inkjson(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_inkjson(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

pub fn load_inkjson(path: &Path) -> Result<Dataset, DataError> {
    read_inkjson(BufReader::new(File::open(path)?))
}
