//! Model checkpoint file: `IMBC` magic, format version, the network spec as
//! JSON, then the flat parameter payload as little-endian f32 in declaration
//! order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::params::ParameterSet;
use crate::nn::spec::{Network, NetworkSpec};

const MAGIC: &[u8; 4] = b"IMBC";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    spec: &NetworkSpec,
    params: &ParameterSet,
) -> Result<()> {
    let json = serde_json::to_vec(spec)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(json.len() as u32).to_le_bytes())?;
    file.write_all(&json)?;
    file.write_all(&(params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(params.len() * 4);
    for &v in params.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Network, ParameterSet)> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    file.read_exact(&mut u32buf)?;
    let json_len = u32::from_le_bytes(u32buf) as usize;
    let mut json = vec![0u8; json_len];
    file.read_exact(&mut json)?;
    let spec: NetworkSpec = serde_json::from_slice(&json)?;
    let net = Network::new(spec)?;

    let mut u64buf = [0u8; 8];
    file.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    if count != net.num_parameters() {
        return Err(Error::Format(format!(
            "payload declares {count} parameters, spec needs {}",
            net.num_parameters()
        )));
    }
    let mut payload = vec![0u8; count * 4];
    file.read_exact(&mut payload)?;
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let params = net.params_from_flat(values)?;
    Ok((net, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::models::mini_dense;

    #[test]
    fn round_trip_preserves_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = Network::new(mini_dense((1, 32, 32), 3)).unwrap();
        let params = net.init_params(9);
        save_checkpoint(&path, net.spec(), &params).unwrap();
        let (net2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(net.spec(), net2.spec());
        assert_eq!(params.len(), params2.len());
        for (a, b) in params.values().iter().zip(params2.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
