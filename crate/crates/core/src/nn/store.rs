//! Raw little-endian f32 tensor files, described by a JSON manifest entry.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Layer, LayerSpec, Network, Params};
use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn f32_to_le_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_from_le_bytes(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Invalid(format!("tensor byte length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    fs::write(path, f32_to_le_bytes(data)).map_err(io_err(path))
}

pub fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    f32_from_le_bytes(&bytes)
}

/// Writes each tensor as `<name>.f32` under `dir`.
pub fn write_tensors(dir: &Path, tensors: &[NamedTensor]) -> Result<Vec<TensorEntry>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    tensors
        .iter()
        .map(|t| {
            let file = format!("{}.f32", t.name);
            write_f32(&dir.join(&file), &t.data)?;
            Ok(TensorEntry { name: t.name.clone(), file, shape: t.shape.clone() })
        })
        .collect()
}

pub fn read_tensors(dir: &Path, entries: &[TensorEntry]) -> Result<Vec<NamedTensor>> {
    entries
        .iter()
        .map(|e| {
            let data = read_f32(&dir.join(&e.file))?;
            let expect: usize = e.shape.iter().product();
            if data.len() != expect {
                return Err(Error::Dimension(format!(
                    "tensor `{}` holds {} values, shape {:?} needs {expect}",
                    e.name,
                    data.len(),
                    e.shape
                )));
            }
            Ok(NamedTensor { name: e.name.clone(), shape: e.shape.clone(), data })
        })
        .collect()
}

/// SHA-256 over tensor names and raw bytes, in order.
pub fn fingerprint(tensors: &[NamedTensor]) -> String {
    let mut h = Sha256::new();
    for t in tensors {
        h.update(t.name.as_bytes());
        h.update([0u8]);
        h.update(f32_to_le_bytes(&t.data));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Flattens a network's parameters into named tensors prefixed with `prefix`.
pub fn network_tensors(prefix: &str, net: &Network<f32>) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    for l in net.layers() {
        let Some(p) = &l.params else { continue };
        let wshape = match l.spec {
            LayerSpec::Conv2d { input, output, kernel, .. } => vec![output, input, kernel, kernel],
            _ => vec![p.weight.nrows(), p.weight.ncols()],
        };
        out.push(NamedTensor {
            name: format!("{prefix}{}.weight", l.name),
            shape: wshape,
            data: p.weight.iter().copied().collect(),
        });
        out.push(NamedTensor {
            name: format!("{prefix}{}.bias", l.name),
            shape: vec![p.bias.len()],
            data: p.bias.to_vec(),
        });
    }
    out
}

/// Rebuilds a network from its architecture and a tensor list.
pub fn network_from_tensors(
    prefix: &str,
    specs: &[(String, LayerSpec)],
    tensors: &[NamedTensor],
) -> Result<Network<f32>> {
    let find = |name: String| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Missing(format!("tensor `{name}` missing from weight directory")))
    };
    let layers = specs
        .iter()
        .map(|(name, spec)| {
            let params = match *spec {
                LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. } => {
                    let w = find(format!("{prefix}{name}.weight"))?;
                    let b = find(format!("{prefix}{name}.bias"))?;
                    let rows = w.shape[0];
                    let cols = w.data.len() / rows.max(1);
                    Some(Params {
                        weight: Array2::from_shape_vec((rows, cols), w.data.clone())
                            .map_err(|e| Error::Dimension(e.to_string()))?,
                        bias: Array1::from(b.data.clone()),
                    })
                }
                _ => None,
            };
            Ok(Layer { name: name.clone(), spec: *spec, params })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_round_trip_through_files() {
        let specs = vec![
            ("c".to_string(), LayerSpec::conv3x3(3, 4, 1)),
            ("r".to_string(), LayerSpec::Relu),
            ("g".to_string(), LayerSpec::GlobalAvgPool),
            ("fc".to_string(), LayerSpec::Linear { input: 4, output: 2 }),
        ];
        let net: Network<f32> = Network::init(&specs, 3);
        let dir = tempfile::tempdir().unwrap();
        let tensors = network_tensors("m.", &net);
        let entries = write_tensors(dir.path(), &tensors).unwrap();
        assert_eq!(entries[0].shape, vec![4, 3, 3, 3]);
        let back = read_tensors(dir.path(), &entries).unwrap();
        assert_eq!(fingerprint(&back), fingerprint(&tensors));
        let net2 = network_from_tensors("m.", &specs, &back).unwrap();
        assert_eq!(net, net2);
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = NamedTensor { name: "a".into(), shape: vec![2, 2], data: vec![1.0; 4] };
        let mut entries = write_tensors(dir.path(), &[t]).unwrap();
        entries[0].shape = vec![3, 2];
        assert!(matches!(read_tensors(dir.path(), &entries), Err(Error::Dimension(_))));
        assert!(f32_from_le_bytes(&[0, 1, 2]).is_err());
    }
}
