//! Named-array checkpoint container.
//!
//! Layout: the 8-byte magic `TACCKPT1`, a little-endian `u64` header
//! length, a UTF-8 JSON header `{"model": .., "arrays": [{"name", "shape"}]}`,
//! then every array's row-major `f64` payload in little-endian order, in
//! header order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::nn::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TACCKPT1";

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Header<M> {
    model: M,
    arrays: Vec<ArrayEntry>,
}

/// Checkpoint contents before they are matched to a model.
pub struct RawCheckpoint<M> {
    pub model: M,
    pub arrays: Vec<(String, Tensor<f64>)>,
}

pub fn write_checkpoint<M: Serialize, T: Scalar>(
    mut w: impl Write,
    model: &M,
    params: &ParamSet<T>,
) -> Result<(), CheckpointError> {
    let header = Header {
        model,
        arrays: params
            .iter()
            .map(|p| ArrayEntry { name: p.name.clone(), shape: [p.value.rows(), p.value.cols()] })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in params.iter() {
        for &x in p.value.data() {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<M: for<'de> Deserialize<'de>>(mut r: impl Read) -> Result<RawCheckpoint<M>, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header<M> = serde_json::from_slice(&json)?;
    let mut arrays = Vec::with_capacity(header.arrays.len());
    let mut buf = [0u8; 8];
    for entry in header.arrays {
        let [rows, cols] = entry.shape;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)
                .map_err(|_| CheckpointError::Format(format!("truncated payload in {:?}", entry.name)))?;
            data.push(f64::from_le_bytes(buf));
        }
        arrays.push((entry.name, Tensor::from_vec(rows, cols, data)));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(CheckpointError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(RawCheckpoint { model: header.model, arrays })
}

/// Overwrites every parameter of `params` with the same-named array.
pub fn load_into<T: Scalar>(params: &mut ParamSet<T>, arrays: &[(String, Tensor<f64>)]) -> Result<(), CheckpointError> {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.param(id).name.clone();
        let (_, src) = arrays
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CheckpointError::MissingArray(name.clone()))?;
        let expected = params.value(id).shape();
        if src.shape() != expected {
            return Err(CheckpointError::ShapeMismatch { name, expected, found: src.shape() });
        }
        *params.value_mut(id) = Tensor::from_vec(expected.0, expected.1, src.data().iter().map(|&x| T::of(x)).collect());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut params = ParamSet::<f64>::new();
        params.add("a", Tensor::from_vec(2, 2, vec![0.1, -2.5, 1e-300, f64::MAX]));
        params.add("b", Tensor::row_vector(vec![3.0]));
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &serde_json::json!({"d": 4}), &params).unwrap();
        let raw: RawCheckpoint<serde_json::Value> = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(raw.model["d"], 4);
        let mut fresh = ParamSet::<f64>::new();
        fresh.add("a", Tensor::zeros(2, 2));
        fresh.add("b", Tensor::zeros(1, 1));
        load_into(&mut fresh, &raw.arrays).unwrap();
        assert_eq!(fresh.value(fresh.id("a").unwrap()), params.value(params.id("a").unwrap()));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut params = ParamSet::<f64>::new();
        params.add("a", Tensor::zeros(2, 3));
        let arrays = vec![("a".to_string(), Tensor::zeros(3, 2))];
        assert!(matches!(load_into(&mut params, &arrays), Err(CheckpointError::ShapeMismatch { .. })));
    }

    #[test]
    fn truncated_file_rejected() {
        let mut params = ParamSet::<f64>::new();
        params.add("a", Tensor::zeros(2, 3));
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &0u8, &params).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint::<u8>(bytes.as_slice()).is_err());
    }
}
