//! Versioned binary parameter checkpoints.
//!
//! Layout (all little-endian): magic `ICTALCKP`, format version u32, C u32,
//! an architecture block (window length, channels, decomposition conv and
//! pool, trunk stages, hidden width: everything needed to rebuild the
//! [`ModelConfig`] standalone), then the parameter count and one record per
//! parameter: name length + UTF-8 name, rank, extents, row-major f64 data.
//! Round trips are bit-exact.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{ModelConfig, ModelParameters, TrunkStage};
use crate::nn::{ConvSpec, PoolSpec};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ICTALCKP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io { path: PathBuf, message: String },
    Format { detail: String },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io { path, message } => {
                write!(f, "checkpoint {}: {message}", path.display())
            }
            CheckpointError::Format { detail } => write!(f, "bad checkpoint: {detail}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

fn io_err(path: &Path, err: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

fn push_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn save_checkpoint(params: &ModelParameters, path: &Path) -> Result<(), CheckpointError> {
    let cfg = &params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    push_u32(&mut buf, cfg.num_patients);

    push_u32(&mut buf, cfg.window_len);
    push_u32(&mut buf, cfg.channels);
    push_u32(&mut buf, cfg.decomp.filters);
    for v in [
        cfg.decomp.kernel[0],
        cfg.decomp.kernel[1],
        cfg.decomp.stride[0],
        cfg.decomp.stride[1],
        cfg.decomp_pool.window[0],
        cfg.decomp_pool.window[1],
        cfg.decomp_pool.stride[0],
        cfg.decomp_pool.stride[1],
    ] {
        push_u32(&mut buf, v);
    }
    push_u32(&mut buf, cfg.trunk.len());
    for stage in &cfg.trunk {
        for v in [
            stage.filters,
            stage.kernel[0],
            stage.kernel[1],
            stage.pool_window[0],
            stage.pool_window[1],
            stage.pool_stride[0],
            stage.pool_stride[1],
        ] {
            push_u32(&mut buf, v);
        }
    }
    push_u32(&mut buf, cfg.fc_hidden);

    let named = params.named();
    push_u32(&mut buf, named.len());
    for (name, tensor) in named {
        push_u32(&mut buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        push_u32(&mut buf, tensor.shape().len());
        for &d in tensor.shape() {
            push_u32(&mut buf, d);
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&buf).map_err(|e| io_err(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Format {
                detail: format!("truncated while reading {what} at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParameters, CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8, "magic")? != MAGIC {
        return Err(CheckpointError::Format {
            detail: "bad magic".to_string(),
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(CheckpointError::Format {
            detail: format!("unsupported version {version}"),
        });
    }
    let num_patients = r.u32("C")?;
    let window_len = r.u32("window length")?;
    let channels = r.u32("channels")?;
    let decomp_filters = r.u32("decomp filters")?;
    let mut eight = [0usize; 8];
    for (i, v) in eight.iter_mut().enumerate() {
        *v = r.u32(&format!("decomp attr {i}"))?;
    }
    let n_stages = r.u32("trunk stage count")?;
    let mut trunk = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        let filters = r.u32("stage filters")?;
        let k0 = r.u32("stage kernel")?;
        let k1 = r.u32("stage kernel")?;
        let pw0 = r.u32("stage pool window")?;
        let pw1 = r.u32("stage pool window")?;
        let ps0 = r.u32("stage pool stride")?;
        let ps1 = r.u32("stage pool stride")?;
        trunk.push(TrunkStage {
            filters,
            kernel: [k0, k1],
            pool_window: [pw0, pw1],
            pool_stride: [ps0, ps1],
        });
    }
    let fc_hidden = r.u32("fc hidden")?;
    let config = ModelConfig {
        window_len,
        channels,
        decomp: ConvSpec::new(decomp_filters, [eight[0], eight[1]], [eight[2], eight[3]]),
        decomp_pool: PoolSpec::new([eight[4], eight[5]], [eight[6], eight[7]]),
        trunk,
        fc_hidden,
        num_patients,
    };

    let mut params = ModelParameters::zeros(config);
    let n_records = r.u32("parameter count")?;
    let expected = params.named().len();
    if n_records != expected {
        return Err(CheckpointError::Format {
            detail: format!("{n_records} parameter records, architecture needs {expected}"),
        });
    }
    for _ in 0..n_records {
        let name_len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| CheckpointError::Format {
                detail: "parameter name is not UTF-8".to_string(),
            })?
            .to_string();
        let rank = r.u32("rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")?);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64("value")?);
        }
        let tensor = Tensor::new(shape, data);
        let mut found = false;
        for (n, slot) in params.named_mut() {
            if n == name {
                if slot.shape() != tensor.shape() {
                    return Err(CheckpointError::Format {
                        detail: format!(
                            "parameter `{name}` has shape {:?}, architecture needs {:?}",
                            tensor.shape(),
                            slot.shape()
                        ),
                    });
                }
                *slot = tensor;
                found = true;
                break;
            }
        }
        if !found {
            return Err(CheckpointError::Format {
                detail: format!("unknown parameter record `{name}`"),
            });
        }
    }
    Ok(params)
}
