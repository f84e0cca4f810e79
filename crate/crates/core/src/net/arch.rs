//! Architecture strings.
//!
//! Grammar: "<C>x<H>x<W>" ("-" (<k>C<f> | MP2 | <n>N))* "-<classes>Output".
//! Convolutions are stride-1 valid (no padding) with ReLU; MP2 is a 2x2
//! stride-2 max pool with floor semantics; N layers are fully connected with
//! ReLU; the output layer is fully connected with softmax. Parsing computes
//! the full shape trace, so any string that parses is runnable.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ArchError {
    #[error("syntax error in architecture token '{0}'")]
    SyntaxError(String),
    #[error("shape error: {0}")]
    ShapeError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { filters: usize, size: usize },
    MaxPool,
    Full { units: usize },
}

/// A parsed, shape-checked architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

/// Shape flowing between layers: a feature map or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

impl ArchSpec {
    pub fn parse(s: &str) -> Result<ArchSpec, ArchError> {
        let tokens: Vec<&str> = s.split('-').collect();
        if tokens.len() < 2 {
            return Err(ArchError::SyntaxError(s.to_string()));
        }
        let input = parse_input(tokens[0])?;
        let classes = parse_output(tokens[tokens.len() - 1])?;
        let mut layers = Vec::new();
        for token in &tokens[1..tokens.len() - 1] {
            layers.push(parse_layer(token)?);
        }
        let spec = ArchSpec {
            input,
            layers,
            classes,
        };
        spec.walk_shapes()?;
        Ok(spec)
    }

    /// Output shape of the input stage and each layer, ending with the
    /// classifier. Infallible on a parsed spec.
    pub fn shape_trace(&self) -> Vec<Shape> {
        self.walk_shapes().expect("validated at parse time")
    }

    fn walk_shapes(&self) -> Result<Vec<Shape>, ArchError> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(ArchError::ShapeError(format!(
                "input {c}x{h}x{w} has a zero dimension"
            )));
        }
        let mut trace = vec![Shape::Map { c, h, w }];
        let mut cur = trace[0];
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (LayerSpec::Conv { filters, size }, Shape::Map { h, w, .. }) => {
                    if size == 0 || filters == 0 {
                        return Err(ArchError::ShapeError(format!(
                            "layer {i}: conv needs positive filters and size"
                        )));
                    }
                    if h < size || w < size {
                        return Err(ArchError::ShapeError(format!(
                            "layer {i}: {size}x{size} conv does not fit a {h}x{w} map"
                        )));
                    }
                    Shape::Map {
                        c: filters,
                        h: h - size + 1,
                        w: w - size + 1,
                    }
                }
                (LayerSpec::MaxPool, Shape::Map { c, h, w }) => {
                    if h < 2 || w < 2 {
                        return Err(ArchError::ShapeError(format!(
                            "layer {i}: cannot pool a {h}x{w} map"
                        )));
                    }
                    Shape::Map {
                        c,
                        h: h / 2,
                        w: w / 2,
                    }
                }
                (LayerSpec::Full { units }, shape) => {
                    if units == 0 {
                        return Err(ArchError::ShapeError(format!(
                            "layer {i}: fully connected layer needs positive units"
                        )));
                    }
                    let _ = shape.len();
                    Shape::Flat(units)
                }
                (LayerSpec::Conv { .. }, Shape::Flat(_)) | (LayerSpec::MaxPool, Shape::Flat(_)) => {
                    return Err(ArchError::ShapeError(format!(
                        "layer {i}: spatial layer after a fully connected layer"
                    )));
                }
            };
            trace.push(cur);
        }
        if self.classes == 0 {
            return Err(ArchError::ShapeError("zero output classes".into()));
        }
        trace.push(Shape::Flat(self.classes));
        Ok(trace)
    }

    /// Layers that carry weights: every conv, every N layer, plus the output
    /// classifier.
    pub fn weighted_layer_count(&self) -> usize {
        1 + self
            .layers
            .iter()
            .filter(|l| !matches!(l, LayerSpec::MaxPool))
            .count()
    }

    pub fn param_count(&self) -> usize {
        let trace = self.shape_trace();
        let mut total = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { filters, size } => {
                    let in_c = match trace[i] {
                        Shape::Map { c, .. } => c,
                        Shape::Flat(_) => unreachable!("validated"),
                    };
                    total += filters * in_c * size * size + filters;
                }
                LayerSpec::Full { units } => total += units * trace[i].len() + units,
                LayerSpec::MaxPool => {}
            }
        }
        let last = trace[trace.len() - 2].len();
        total += self.classes * last + self.classes;
        total
    }

    pub fn input_len(&self) -> usize {
        self.input.0 * self.input.1 * self.input.2
    }

    /// The string form that parses back to this spec.
    pub fn canonical_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.input.0, self.input.1, self.input.2)?;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv { filters, size } => write!(f, "-{filters}C{size}")?,
                LayerSpec::MaxPool => write!(f, "-MP2")?,
                LayerSpec::Full { units } => write!(f, "-{units}N")?,
            }
        }
        write!(f, "-{}Output", self.classes)
    }
}

fn parse_usize(s: &str, token: &str) -> Result<usize, ArchError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ArchError::SyntaxError(token.to_string()));
    }
    s.parse()
        .map_err(|_| ArchError::SyntaxError(token.to_string()))
}

fn parse_input(token: &str) -> Result<(usize, usize, usize), ArchError> {
    let parts: Vec<&str> = token.split('x').collect();
    if parts.len() != 3 {
        return Err(ArchError::SyntaxError(token.to_string()));
    }
    Ok((
        parse_usize(parts[0], token)?,
        parse_usize(parts[1], token)?,
        parse_usize(parts[2], token)?,
    ))
}

fn parse_output(token: &str) -> Result<usize, ArchError> {
    let num = token
        .strip_suffix("Output")
        .ok_or_else(|| ArchError::SyntaxError(token.to_string()))?;
    parse_usize(num, token)
}

fn parse_layer(token: &str) -> Result<LayerSpec, ArchError> {
    if token == "MP2" {
        return Ok(LayerSpec::MaxPool);
    }
    if let Some((filters, size)) = token.split_once('C') {
        return Ok(LayerSpec::Conv {
            filters: parse_usize(filters, token)?,
            size: parse_usize(size, token)?,
        });
    }
    if let Some(units) = token.strip_suffix('N') {
        return Ok(LayerSpec::Full {
            units: parse_usize(units, token)?,
        });
    }
    Err(ArchError::SyntaxError(token.to_string()))
}
