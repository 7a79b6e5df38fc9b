//! Parameters as a flat little-endian `f64` file plus a JSON manifest
//! naming each tensor's slice of it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::params::{FusionParams, ModelConfig};
use crate::{FusionError, Result};

pub const PARAMS_FORMAT: &str = "instloc-fusion-params";
pub const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// `[rows, cols]`; values are stored row-major.
    pub shape: [usize; 2],
    /// Offset in values, not bytes.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub config: ModelConfig,
    /// Binary file name, relative to the manifest.
    pub data: String,
    pub tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path, source: std::io::Error) -> FusionError {
    FusionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> FusionError {
    FusionError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn bin_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<stem>.json` (the given path) and `<stem>.bin` beside it.
pub fn save_params(params: &FusionParams, manifest_path: &Path) -> Result<()> {
    let data_path = bin_path(manifest_path);
    let mut tensors = Vec::new();
    let mut w = BufWriter::new(File::create(&data_path).map_err(|e| io_err(&data_path, e))?);
    let mut offset = 0;
    for (name, t) in params.tensors() {
        for r in 0..t.nrows() {
            for c in 0..t.ncols() {
                w.write_f64::<LittleEndian>(t[(r, c)]).map_err(|e| io_err(&data_path, e))?;
            }
        }
        tensors.push(TensorEntry {
            name,
            shape: [t.nrows(), t.ncols()],
            offset,
        });
        offset += t.len();
    }
    w.flush().map_err(|e| io_err(&data_path, e))?;
    let manifest = Manifest {
        format: PARAMS_FORMAT.into(),
        version: 1,
        dtype: DTYPE.into(),
        config: params.config,
        data: data_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| format_err(manifest_path, e.to_string()))?;
    std::fs::write(manifest_path, json).map_err(|e| io_err(manifest_path, e))
}

pub fn load_params(manifest_path: &Path) -> Result<FusionParams> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| format_err(manifest_path, e.to_string()))?;
    if manifest.format != PARAMS_FORMAT || manifest.dtype != DTYPE || manifest.version != 1 {
        return Err(format_err(
            manifest_path,
            format!("unsupported container {} v{} {}", manifest.format, manifest.version, manifest.dtype),
        ));
    }
    let data_path = manifest_path.with_file_name(&manifest.data);
    let mut bytes = Vec::new();
    BufReader::new(File::open(&data_path).map_err(|e| io_err(&data_path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(&data_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(format_err(&data_path, "length is not a multiple of 8"));
    }
    let mut values = vec![0.0; bytes.len() / 8];
    (&bytes[..])
        .read_f64_into::<LittleEndian>(&mut values)
        .map_err(|e| io_err(&data_path, e))?;

    // shapes come from the config; the manifest must agree with them
    let mut params = FusionParams::init(manifest.config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let slots = params.tensors_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(format_err(manifest_path, "tensor count differs from the config"));
    }
    for ((name, t), entry) in slots.into_iter().zip(&manifest.tensors) {
        if name != entry.name || [t.nrows(), t.ncols()] != entry.shape {
            return Err(format_err(
                manifest_path,
                format!("expected {name} {:?}, found {} {:?}", [t.nrows(), t.ncols()], entry.name, entry.shape),
            ));
        }
        let end = entry.offset + t.len();
        if end > values.len() {
            return Err(format_err(&data_path, format!("{name} runs past the end of the data")));
        }
        *t = DMatrix::from_row_slice(t.nrows(), t.ncols(), &values[entry.offset..end]);
    }
    if !params.all_finite() {
        return Err(format_err(&data_path, "non-finite parameter"));
    }
    Ok(params)
}
