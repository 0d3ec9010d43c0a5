//! Binary parameter checkpoint.
//!
//! | offset    | size    | content                                      |
//! |-----------|---------|----------------------------------------------|
//! | 0         | 8       | magic `ERESCKPT`                             |
//! | 8         | 4       | format version, `u32` little-endian (1)      |
//! | 12        | 4       | header length `H`, `u32` little-endian       |
//! | 16        | `H`     | UTF-8 JSON header                            |
//! | 16 + H    | 8       | value count `N`, `u64` little-endian         |
//! | 24 + H    | 8 · `N` | `N` IEEE-754 `f64` values, little-endian     |
//!
//! The header carries `predictor` (the [`PredictorConfig`]), `tau_min`,
//! `tau_max`, `predictor_param_count` and `layout`. The values are the
//! predictor parameters in [`PredictorParams`] order followed by
//! `log_alpha` and `log_beta`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::predictor::{PredictorConfig, PredictorError, PredictorParams};
use crate::scale::ScaleConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ERESCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const LAYOUT: &str = "predictor_params,log_alpha,log_beta";

/// Everything needed to reproduce inference after training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub predictor: PredictorParams<f64>,
    pub range: ScaleConfig<f64>,
    pub log_alpha: f64,
    pub log_beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    predictor: PredictorConfig,
    tau_min: f64,
    tau_max: f64,
    predictor_param_count: usize,
    layout: String,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), PredictorError> {
    let header = Header {
        predictor: ckpt.predictor.config().clone(),
        tau_min: ckpt.range.tau_min(),
        tau_max: ckpt.range.tau_max(),
        predictor_param_count: ckpt.predictor.values().len(),
        layout: LAYOUT.to_string(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| PredictorError::Format(e.to_string()))?;
    let header_len =
        u32::try_from(json.len()).map_err(|_| PredictorError::Format("header too large".into()))?;
    let values: Vec<f64> = ckpt
        .predictor
        .values()
        .iter()
        .copied()
        .chain([ckpt.log_alpha, ckpt.log_beta])
        .collect();

    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], PredictorError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, PredictorError> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(PredictorError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(PredictorError::Format(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut json = vec![0u8; header_len];
    r.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| PredictorError::Format(e.to_string()))?;
    if header.layout != LAYOUT {
        return Err(PredictorError::Format(format!("unknown layout {:?}", header.layout)));
    }
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if count != header.predictor_param_count + 2 {
        return Err(PredictorError::Format(format!(
            "value count {count} does not match header ({} + 2)",
            header.predictor_param_count
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(PredictorError::Format("trailing bytes after the values".into()));
    }
    let log_beta = values.pop().expect("count >= 2");
    let log_alpha = values.pop().expect("count >= 2");
    let range = ScaleConfig::new(header.tau_min, header.tau_max)
        .map_err(|e| PredictorError::Format(e.to_string()))?;
    Ok(Checkpoint {
        predictor: PredictorParams::from_values(header.predictor, values)?,
        range,
        log_alpha,
        log_beta,
    })
}
