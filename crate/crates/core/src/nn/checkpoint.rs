//! Checkpoint files.
//!
//! ```text
//! magic  4 bytes "FPCK"
//! hlen   u32 LE, length of the JSON header
//! header JSON: architecture (shapes and hyperparameters) plus metadata
//! count  u64 LE, number of f32 values
//! blob   f32 LE values of every stored array in declaration order
//! ```

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{NnError, Param};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FPCK";

/// Decoded checkpoint: typed header plus the flat value blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<H> {
    pub header: H,
    pub values: Vec<f32>,
}

impl<H> Checkpoint<H> {
    /// Fills `params` (in order) from the blob; every value must be consumed.
    pub fn load_into(&self, params: &mut [&mut Param]) -> Result<(), NnError> {
        let needed: usize = params.iter().map(|p| p.numel()).sum();
        if needed != self.values.len() {
            return Err(NnError::Checkpoint(format!(
                "architecture stores {needed} values, checkpoint has {}",
                self.values.len()
            )));
        }
        let mut at = 0;
        for p in params.iter_mut() {
            let n = p.numel();
            p.value = self.values[at..at + n].iter().map(|&v| v as f64).collect();
            p.grad = vec![0.0; n];
            at += n;
        }
        Ok(())
    }
}

pub fn encode_checkpoint<H: Serialize>(header: &H, params: &[&Param]) -> Result<Vec<u8>, NnError> {
    let json = serde_json::to_vec(header)?;
    let count: usize = params.iter().map(|p| p.value.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + count * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for p in params {
        if p.value.len() != p.numel() {
            return Err(NnError::Checkpoint(format!("array of shape {:?} holds {} values", p.shape, p.value.len())));
        }
        for v in &p.value {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint<H: DeserializeOwned>(bytes: &[u8]) -> Result<Checkpoint<H>, NnError> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("missing FPCK magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rest = &bytes[8..];
    if rest.len() < hlen + 8 {
        return Err(NnError::Checkpoint(format!("header of {hlen} bytes is truncated")));
    }
    let header = serde_json::from_slice(&rest[..hlen])?;
    let count = u64::from_le_bytes(rest[hlen..hlen + 8].try_into().unwrap()) as usize;
    let blob = &rest[hlen + 8..];
    if blob.len() != count * 4 {
        return Err(NnError::Checkpoint(format!("expected {} blob bytes, found {}", count * 4, blob.len())));
    }
    let values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Checkpoint { header, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, Mode, Sequential, Tensor};

    #[test]
    fn model_round_trip() {
        let mut r = crate::rng::stream(1, 1);
        let mut net = Sequential::new(vec![Layer::conv2d(2, 3, 3, &mut r), Layer::batch_norm(3), Layer::reshape(vec![4 * 3 * 3]), Layer::dense(36, 2, &mut r)]);
        let x = Tensor::new(vec![2, 4, 3, 2], (0..48).map(|i| (i as f64).sin()).collect()).unwrap();
        net.forward(&x, Mode::Train).unwrap();
        net.round_to_f32();
        let arch = net.clone();
        let state: Vec<&Param> = net.state().into_iter().map(|p| &*p).collect();
        let bytes = encode_checkpoint(&arch, &state).unwrap();
        let ck: Checkpoint<Sequential> = decode_checkpoint(&bytes).unwrap();
        let mut back = ck.header.clone();
        ck.load_into(&mut back.state()).unwrap();
        assert_eq!(back.forward(&x, Mode::Eval).unwrap(), net.forward(&x, Mode::Eval).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(decode_checkpoint::<serde_json::Value>(b"nope").is_err());
        let p = Param { shape: vec![2], value: vec![1.0, 2.0], grad: vec![] };
        let bytes = encode_checkpoint(&"h", &[&p]).unwrap();
        assert!(decode_checkpoint::<String>(&bytes[..bytes.len() - 1]).is_err());
        let ck: Checkpoint<String> = decode_checkpoint(&bytes).unwrap();
        let mut wrong = Param { shape: vec![3], ..Default::default() };
        assert!(ck.load_into(&mut [&mut wrong]).is_err());
    }
}
