//! Bit-exact binary codecs for feature tensors, weight files, and tensor
//! archives. All integers little-endian; all floats IEEE-754 LE. Writing
//! then reading reproduces values exactly, and corrupted magic or version
//! bytes are rejected up front.

use super::DataError;
use crate::net::{ArchSpec, Network};
use crate::raster::FeatureTensor;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const TENSOR_MAGIC: &[u8; 4] = b"IKF1";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"IKW1";
pub const ARCHIVE_MAGIC: &[u8; 4] = b"IKA1";
pub const FORMAT_VERSION: u16 = 1;

const MAX_STRING: usize = 1 << 16;
const MAX_DIM: u32 = 1 << 20;
const MAX_CELLS: u64 = 1 << 28;
const MAX_COUNT: u32 = 1 << 24;

fn bad(reason: impl Into<String>) -> DataError {
    DataError::FormatError(reason.into())
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, DataError> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(map_eof)?;
    Ok(buf)
}

fn map_eof(e: io::Error) -> DataError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        bad("unexpected end of file")
    } else {
        DataError::Io(e)
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, DataError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(map_eof)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DataError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(map_eof)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DataError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(map_eof)?;
    Ok(u64::from_le_bytes(b))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), DataError> {
    let bytes = s.as_bytes();
    if bytes.len() >= MAX_STRING {
        return Err(DataError::UnrepresentableValue(format!(
            "string of {} bytes exceeds format limit",
            bytes.len()
        )));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, DataError> {
    let len = read_u16(r)? as usize;
    let bytes = read_bytes(r, len)?;
    String::from_utf8(bytes).map_err(|_| bad("string is not valid utf-8"))
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 4], what: &str) -> Result<(), DataError> {
    let got = read_bytes(r, 4)?;
    if got != magic {
        return Err(bad(format!("bad {what} magic")));
    }
    let version = read_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported {what} version {version}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

pub fn write_tensor<W: Write>(w: &mut W, t: &FeatureTensor) -> Result<(), DataError> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(t.channels() as u32).to_le_bytes())?;
    w.write_all(&(t.height() as u32).to_le_bytes())?;
    w.write_all(&(t.width() as u32).to_le_bytes())?;
    for label in t.labels() {
        write_str(w, label)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<FeatureTensor, DataError> {
    check_header(r, TENSOR_MAGIC, "tensor")?;
    let c = read_u32(r)?;
    let h = read_u32(r)?;
    let w = read_u32(r)?;
    if c == 0 {
        return Err(bad("tensor has zero channels"));
    }
    if c > MAX_DIM || h > MAX_DIM || w > MAX_DIM || (c as u64) * (h as u64) * (w as u64) > MAX_CELLS
    {
        return Err(bad(format!("tensor dimensions {c}x{h}x{w} out of range")));
    }
    let mut labels = Vec::with_capacity(c as usize);
    for _ in 0..c {
        labels.push(read_str(r)?);
    }
    let cells = (c as usize) * (h as usize) * (w as usize);
    let mut data = Vec::with_capacity(cells);
    let mut buf = [0u8; 4];
    for _ in 0..cells {
        r.read_exact(&mut buf).map_err(map_eof)?;
        let v = f32::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(bad("tensor payload contains a non-finite value"));
        }
        data.push(v);
    }
    FeatureTensor::from_parts(labels, h as usize, w as usize, data)
        .map_err(|e| bad(format!("inconsistent tensor: {e}")))
}

pub fn save_tensor(path: &Path, t: &FeatureTensor) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<FeatureTensor, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    let t = read_tensor(&mut r)?;
    expect_eof(&mut r, "tensor")?;
    Ok(t)
}

fn expect_eof<R: Read>(r: &mut R, what: &str) -> Result<(), DataError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(bad(format!("trailing data after {what}"))),
    }
}

/// A trained network plus the context needed to use it safely: the feature
/// configuration hash it was trained against, the class table its outputs
/// index, and the tool version that wrote it.
#[derive(Debug, Clone)]
pub struct WeightFile {
    pub network: Network,
    pub feature_hash: u64,
    pub class_table: Vec<String>,
    pub tool_version: String,
}

pub fn write_weights<W: Write>(w: &mut W, wf: &WeightFile) -> Result<(), DataError> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_str(w, &wf.tool_version)?;
    write_str(w, &wf.network.arch().canonical_string())?;
    w.write_all(&wf.feature_hash.to_le_bytes())?;
    w.write_all(&(wf.class_table.len() as u32).to_le_bytes())?;
    for label in &wf.class_table {
        write_str(w, label)?;
    }
    let params = wf.network.params();
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for &p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_weights<R: Read>(r: &mut R) -> Result<WeightFile, DataError> {
    check_header(r, WEIGHTS_MAGIC, "weights")?;
    let tool_version = read_str(r)?;
    let arch_string = read_str(r)?;
    let spec = ArchSpec::parse(&arch_string)
        .map_err(|e| bad(format!("stored architecture is invalid: {e}")))?;
    let feature_hash = read_u64(r)?;
    let n_classes = read_u32(r)?;
    if n_classes > MAX_COUNT {
        return Err(bad(format!("class count {n_classes} out of range")));
    }
    let mut class_table = Vec::with_capacity(n_classes as usize);
    for _ in 0..n_classes {
        class_table.push(read_str(r)?);
    }
    if class_table.len() != spec.classes {
        return Err(bad(format!(
            "class table has {} entries but the architecture outputs {}",
            class_table.len(),
            spec.classes
        )));
    }
    let n_params = read_u64(r)?;
    if n_params != spec.param_count() as u64 {
        return Err(bad(format!(
            "parameter count {} does not match architecture ({} expected)",
            n_params,
            spec.param_count()
        )));
    }
    let mut params = Vec::with_capacity(n_params as usize);
    let mut buf = [0u8; 8];
    for _ in 0..n_params {
        r.read_exact(&mut buf).map_err(map_eof)?;
        let v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(bad("weight payload contains a non-finite value"));
        }
        params.push(v);
    }
    let network = Network::from_params(spec, params)
        .map_err(|e| bad(format!("inconsistent weights: {e}")))?;
    Ok(WeightFile {
        network,
        feature_hash,
        class_table,
        tool_version,
    })
}

pub fn save_weights(path: &Path, wf: &WeightFile) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(&mut w, wf)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<WeightFile, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    let wf = read_weights(&mut r)?;
    expect_eof(&mut r, "weights")?;
    Ok(wf)
}

/// Featurized dataset: one tensor per sample, labels as indices into the
/// class table, tagged with the feature-config hash that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    pub tool_version: String,
    pub config_hash: u64,
    pub class_table: Vec<String>,
    pub samples: Vec<(u32, FeatureTensor)>,
}

pub fn save_archive(path: &Path, a: &TensorArchive) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ARCHIVE_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_str(&mut w, &a.tool_version)?;
    w.write_all(&a.config_hash.to_le_bytes())?;
    w.write_all(&(a.class_table.len() as u32).to_le_bytes())?;
    for label in &a.class_table {
        write_str(&mut w, label)?;
    }
    w.write_all(&(a.samples.len() as u32).to_le_bytes())?;
    for (label_idx, tensor) in &a.samples {
        if *label_idx as usize >= a.class_table.len() {
            return Err(DataError::UnrepresentableValue(format!(
                "label index {label_idx} out of range for class table"
            )));
        }
        w.write_all(&label_idx.to_le_bytes())?;
        write_tensor(&mut w, tensor)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_archive(path: &Path) -> Result<TensorArchive, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    check_header(&mut r, ARCHIVE_MAGIC, "archive")?;
    let tool_version = read_str(&mut r)?;
    let config_hash = read_u64(&mut r)?;
    let n_classes = read_u32(&mut r)?;
    if n_classes > MAX_COUNT {
        return Err(bad(format!("class count {n_classes} out of range")));
    }
    let mut class_table = Vec::with_capacity(n_classes as usize);
    for _ in 0..n_classes {
        class_table.push(read_str(&mut r)?);
    }
    let n_samples = read_u32(&mut r)?;
    if n_samples > MAX_COUNT {
        return Err(bad(format!("sample count {n_samples} out of range")));
    }
    let mut samples = Vec::with_capacity(n_samples as usize);
    for _ in 0..n_samples {
        let label_idx = read_u32(&mut r)?;
        if label_idx as usize >= class_table.len() {
            return Err(bad(format!("label index {label_idx} out of range")));
        }
        let tensor = read_tensor(&mut r)?;
        samples.push((label_idx, tensor));
    }
    expect_eof(&mut r, "archive")?;
    Ok(TensorArchive {
        tool_version,
        config_hash,
        class_table,
        samples,
    })
}
