//! Model checkpoint: a versioned binary (`MLP1` magic, layer sizes, 64-bit
//! little-endian weights row-major, then biases, per layer) plus a JSON
//! sidecar at `<path>.json` holding the training configuration.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{MlpParameters, TrainConfig};

const MAGIC: &[u8; 4] = b"MLP1";

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

/// Write the binary checkpoint and its sidecar.
pub fn write_checkpoint(
    path: impl AsRef<Path>,
    params: &MlpParameters,
    config: &TrainConfig,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.write_all(MAGIC)?;
    let sizes = params.layer_sizes();
    buf.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        buf.write_all(&(s as u64).to_le_bytes())?;
    }
    for l in 0..sizes.len() - 1 {
        // Row-major: all outputs of input 0, then input 1, ...
        for &w in params.weights()[l].iter() {
            buf.write_all(&w.to_le_bytes())?;
        }
        for &b in params.biases()[l].iter() {
            buf.write_all(&b.to_le_bytes())?;
        }
    }
    std::fs::write(path, buf)?;
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(config)?)?;
    Ok(())
}

/// Read a checkpoint and its sidecar back.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(MlpParameters, TrainConfig)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::schema(format!("{}: truncated checkpoint", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::schema(format!("{}: bad checkpoint magic", path.display())));
    }

    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::schema(format!("{}: truncated checkpoint", path.display())))?;
    let n_sizes = u32::from_le_bytes(u32buf) as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::schema(format!("{}: implausible layer count {n_sizes}", path.display())));
    }

    let mut sizes = Vec::with_capacity(n_sizes);
    let mut u64buf = [0u8; 8];
    for _ in 0..n_sizes {
        r.read_exact(&mut u64buf)
            .map_err(|_| Error::schema(format!("{}: truncated checkpoint", path.display())))?;
        sizes.push(u64::from_le_bytes(u64buf) as usize);
    }

    let read_f64s = |r: &mut dyn Read, count: usize| -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::schema(format!("{}: truncated checkpoint", path.display())))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };

    let mut weights = Vec::with_capacity(n_sizes - 1);
    let mut biases = Vec::with_capacity(n_sizes - 1);
    for l in 0..n_sizes - 1 {
        let w = read_f64s(&mut r, sizes[l] * sizes[l + 1])?;
        weights.push(
            Array2::from_shape_vec((sizes[l], sizes[l + 1]), w)
                .expect("length checked by read_f64s"),
        );
        biases.push(Array1::from_vec(read_f64s(&mut r, sizes[l + 1])?));
    }

    let sidecar = sidecar_path(path);
    let config: TrainConfig = serde_json::from_slice(&std::fs::read(&sidecar).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", sidecar.display())))
    })?)?;

    Ok((MlpParameters::new(sizes, weights, biases)?, config))
}
