use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{FpnetError, FpnetModel, SequentialBaseline};
use crate::nn::{decode_checkpoint, encode_checkpoint, Param};

/// Training provenance stored next to the architecture.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub alpha: f64,
    pub epochs_completed: usize,
    pub data_hash: String,
    /// Hash of the settings that produced the weights.
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header<A> {
    manifest: Manifest,
    arch: A,
}

/// Networks whose full state (weights plus running statistics) can be
/// listed in a fixed order.
pub trait Stateful: Clone + Serialize + DeserializeOwned {
    fn state(&mut self) -> Vec<&mut Param>;
}

impl Stateful for FpnetModel {
    fn state(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.encoder.collect_state(&mut out);
        self.decoder.collect_state(&mut out);
        self.head.collect_state(&mut out);
        out
    }
}

impl Stateful for SequentialBaseline {
    fn state(&mut self) -> Vec<&mut Param> {
        let mut out = self.autoencoder.state();
        self.classifier.collect_state(&mut out);
        out
    }
}

pub fn encode_model<M: Stateful>(model: &M, manifest: &Manifest) -> Result<Vec<u8>, FpnetError> {
    let mut m = model.clone();
    let header = Header { manifest: manifest.clone(), arch: model };
    let state = m.state();
    let refs: Vec<&Param> = state.iter().map(|p| &**p).collect();
    Ok(encode_checkpoint(&header, &refs)?)
}

pub fn decode_model<M: Stateful>(bytes: &[u8]) -> Result<(M, Manifest), FpnetError> {
    let ck = decode_checkpoint::<Header<M>>(bytes)?;
    let mut arch = ck.header.arch.clone();
    ck.load_into(&mut arch.state())?;
    Ok((arch, ck.header.manifest))
}

pub fn save_model<M: Stateful>(path: &Path, model: &M, manifest: &Manifest) -> Result<(), FpnetError> {
    std::fs::write(path, encode_model(model, manifest)?)?;
    Ok(())
}

pub fn load_model<M: Stateful>(path: &Path) -> Result<(M, Manifest), FpnetError> {
    decode_model(&std::fs::read(path)?)
}
