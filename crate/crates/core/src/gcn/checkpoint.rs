//! Binary model checkpoints.
//!
//! Layout: magic bytes `GNNX`, format version as u32 little-endian, a
//! u32-length-prefixed JSON metadata block (parameter dims, dropout,
//! class count, normalization flag), then one row-major little-endian
//! f64 block per parameter matrix in the model's layout order,
//! followed by the running mean/var blocks interleaved per normalized
//! layer. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GcnModel;

const MAGIC: &[u8; 4] = b"GNNX";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    param_dims: Vec<(usize, usize)>,
    dropout: f64,
    num_classes: usize,
    batch_norm: bool,
    running_dims: Vec<(usize, usize)>,
}

pub fn save_checkpoint(model: &GcnModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let (running_mean, running_var) = model.running_stats();
    let running: Vec<&ndarray::Array2<f64>> = running_mean
        .iter()
        .zip(running_var)
        .flat_map(|(m, v)| [m, v])
        .collect();
    let meta = CheckpointMeta {
        param_dims: model.params().iter().map(|m| m.dim()).collect(),
        dropout: model.dropout(),
        num_classes: model.num_classes(),
        batch_norm: model.batch_norm(),
        running_dims: running.iter().map(|m| m.dim()).collect(),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;
    let len = u32::try_from(meta_bytes.len())
        .map_err(|_| Error::Checkpoint("metadata block too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&meta_bytes)?;
    for m in model.params().iter().map(|m| m as &ndarray::Array2<f64>).chain(running) {
        for &x in m.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GcnModel> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic bytes")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a model checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let meta_len = read_u32(&mut r, "metadata length")? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_bytes, "metadata block")?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::Checkpoint(format!("corrupt metadata: {e}")))?;

    let read_blocks = |r: &mut BufReader<File>, dims: &[(usize, usize)]| -> Result<Vec<Array2<f64>>> {
        let mut out = Vec::with_capacity(dims.len());
        for &(rows, cols) in dims {
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint("parameter dims overflow".into()))?;
            let mut buf = vec![0u8; count * 8];
            read_exact(r, &mut buf, "parameter block")?;
            let values: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let m = Array2::from_shape_vec((rows, cols), values)
                .map_err(|e| Error::Checkpoint(format!("bad parameter block shape: {e}")))?;
            out.push(m);
        }
        Ok(out)
    };
    let params = read_blocks(&mut r, &meta.param_dims)?;
    if meta.running_dims.len() % 2 != 0 {
        return Err(Error::Checkpoint(
            "running statistics must come in mean/var pairs".into(),
        ));
    }
    let running = read_blocks(&mut r, &meta.running_dims)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameter blocks".into()));
    }
    let mut model = GcnModel::new(params, meta.dropout, meta.num_classes, meta.batch_norm)
        .map_err(|e| Error::Checkpoint(format!("inconsistent checkpoint: {e}")))?;
    if meta.batch_norm {
        let mut mean = Vec::new();
        let mut var = Vec::new();
        for (i, block) in running.into_iter().enumerate() {
            if i % 2 == 0 { mean.push(block) } else { var.push(block) }
        }
        model
            .set_running_stats(mean, var)
            .map_err(|e| Error::Checkpoint(format!("inconsistent checkpoint: {e}")))?;
    }
    Ok(model)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint(format!("truncated file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
