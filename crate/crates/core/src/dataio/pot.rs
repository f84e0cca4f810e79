//! POT stroke-record codec.
//!
//! Little-endian layout per record: u16 record size including itself, a
//! 4-byte tag (u16 character code plus two zero pad bytes), u16 stroke
//! count, then i16 coordinate pairs. (-1, 0) ends a stroke, (-1, -1) ends
//! the record. Labels are the 4-digit lowercase hex of the character code.

use super::{DataError, Dataset};
use crate::ink::{Ink, Point, Stroke};

const STROKE_END: (i16, i16) = (-1, 0);
const RECORD_END: (i16, i16) = (-1, -1);

pub fn parse_pot(bytes: &[u8]) -> Result<Dataset, DataError> {
    let mut samples = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let (ink, size) = parse_record(bytes, offset)?;
        samples.push(ink);
        offset += size;
    }
    Dataset::from_samples(samples)
}

fn parse_record(bytes: &[u8], offset: usize) -> Result<(Ink, usize), DataError> {
    let fail = |at: usize, reason: &str| DataError::MalformedRecord {
        offset: at,
        reason: reason.to_string(),
    };
    let rest = &bytes[offset..];
    if rest.len() < 8 {
        return Err(fail(offset, "truncated record header"));
    }
    let size = u16::from_le_bytes([rest[0], rest[1]]) as usize;
    if size < 8 {
        return Err(fail(offset, "record size smaller than header"));
    }
    if size > rest.len() {
        return Err(fail(offset, "record extends past end of input"));
    }
    let record = &rest[..size];
    let code = u16::from_le_bytes([record[2], record[3]]);
    if record[4] != 0 || record[5] != 0 {
        return Err(fail(offset + 4, "nonzero tag padding"));
    }
    let stroke_count = u16::from_le_bytes([record[6], record[7]]) as usize;

    let mut strokes = Vec::new();
    let mut current: Vec<Point> = Vec::new();
    let mut pos = 8usize;
    let mut terminated = false;
    while pos < size {
        if size - pos < 4 {
            return Err(fail(offset + pos, "truncated point pair"));
        }
        let x = i16::from_le_bytes([record[pos], record[pos + 1]]);
        let y = i16::from_le_bytes([record[pos + 2], record[pos + 3]]);
        pos += 4;
        if (x, y) == STROKE_END {
            if current.is_empty() {
                return Err(fail(offset + pos - 4, "empty stroke"));
            }
            strokes.push(std::mem::take(&mut current));
        } else if (x, y) == RECORD_END {
            if !current.is_empty() {
                return Err(fail(offset + pos - 4, "unterminated stroke before record end"));
            }
            if pos != size {
                return Err(fail(offset + pos, "trailing bytes after record end"));
            }
            terminated = true;
            break;
        } else {
            current.push(Point::new(x as f64, y as f64));
        }
    }
    if !terminated {
        return Err(fail(offset + pos, "missing record terminator"));
    }
    if strokes.len() != stroke_count {
        return Err(fail(
            offset + 6,
            &format!(
                "stroke count {} does not match {} parsed strokes",
                stroke_count,
                strokes.len()
            ),
        ));
    }
    let strokes = strokes
        .into_iter()
        .map(Stroke::real)
        .collect::<Result<Vec<_>, _>>()?;
    let ink = Ink::new(strokes, Some(format!("{code:04x}")))?;
    Ok((ink, size))
}

/// Serialize a dataset of integer-coordinate real strokes.
///
/// Coordinates must be integral, fit in i16, and avoid the two sentinel
/// pairs; labels must be character codes in hex. Imaginary strokes have no
/// representation and are rejected. An empty dataset yields empty bytes,
/// and `parse_pot` inverts the result exactly.
pub fn write_pot(dataset: &Dataset) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::new();
    for (i, sample) in dataset.samples().iter().enumerate() {
        write_record(&mut out, sample, i)?;
    }
    Ok(out)
}

fn write_record(out: &mut Vec<u8>, sample: &Ink, index: usize) -> Result<(), DataError> {
    let unrep = |reason: String| DataError::UnrepresentableValue(format!("sample {index}: {reason}"));
    let label = sample
        .label()
        .ok_or_else(|| unrep("missing label".into()))?;
    let code = u16::from_str_radix(label, 16)
        .map_err(|_| unrep(format!("label '{label}' is not a hex character code")))?;
    let mut body: Vec<(i16, i16)> = Vec::new();
    for stroke in sample.strokes() {
        if !stroke.is_real() {
            return Err(unrep("imaginary strokes are not representable".into()));
        }
        for p in stroke.points() {
            let pair = (coord(p.x, index)?, coord(p.y, index)?);
            if pair == STROKE_END || pair == RECORD_END {
                return Err(unrep(format!(
                    "point ({}, {}) collides with a sentinel",
                    pair.0, pair.1
                )));
            }
            body.push(pair);
        }
        body.push(STROKE_END);
    }
    body.push(RECORD_END);
    let size = 8 + body.len() * 4;
    let size16 = u16::try_from(size).map_err(|_| unrep(format!("record size {size} exceeds u16")))?;
    let stroke_count = u16::try_from(sample.strokes().len())
        .map_err(|_| unrep("stroke count exceeds u16".into()))?;
    out.extend_from_slice(&size16.to_le_bytes());
    out.extend_from_slice(&code.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&stroke_count.to_le_bytes());
    for (x, y) in body {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
    }
    Ok(())
}

fn coord(v: f64, index: usize) -> Result<i16, DataError> {
    if v.fract() != 0.0 || v < i16::MIN as f64 || v > i16::MAX as f64 {
        return Err(DataError::UnrepresentableValue(format!(
            "sample {index}: coordinate {v} is not an i16"
        )));
    }
    Ok(v as i16)
}
