use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use uavxai_nn::io::{load_weights_into, save_weights, Sidecar};
use uavxai_nn::{LayerSpec, Sequential, Tape, Tensor};

use super::{DetectorConfig, DetectorKind};
use crate::ddpg::write_pair;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorArchitecture {
    role: String,
    kind: DetectorKind,
    input_dims: Vec<usize>,
    layers: Vec<LayerSpec>,
    scale: f32,
}

/// A binary classifier over one payload kind. The net ends in a single
/// logit; [`Detector::score`] squashes it to a probability.
#[derive(Clone, Debug)]
pub struct Detector {
    kind: DetectorKind,
    net: Sequential<f32>,
    /// Multiplies every payload value before the net sees it.
    scale: f32,
}

fn dense_tail(out: &mut Vec<LayerSpec>, widths: &[usize]) {
    for &units in widths {
        out.push(LayerSpec::Dense { units });
        out.push(LayerSpec::Relu);
    }
    out.push(LayerSpec::Dense { units: 1 });
}

pub(super) fn layer_specs(kind: DetectorKind, cfg: &DetectorConfig) -> Vec<LayerSpec> {
    let mut out = Vec::new();
    match kind {
        DetectorKind::Fcn => dense_tail(&mut out, &cfg.fcn_dense),
        DetectorKind::Cnn => {
            let mut frame = Vec::new();
            for pair in cfg.cnn_filters.chunks(2) {
                for &filters in pair {
                    frame.push(LayerSpec::Conv2d {
                        filters,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    });
                    frame.push(LayerSpec::Relu);
                }
                frame.push(LayerSpec::MaxPool { size: 2 });
            }
            frame.push(LayerSpec::Flatten);
            out.push(LayerSpec::TimeDistributed { layers: frame });
            out.push(LayerSpec::Flatten);
            dense_tail(&mut out, &cfg.cnn_dense);
        }
        DetectorKind::Lstm => {
            out.push(LayerSpec::Lstm { units: cfg.lstm_units });
            dense_tail(&mut out, &cfg.lstm_dense);
        }
    }
    out
}

pub(super) fn sigmoid(z: f32) -> f32 {
    1.0 / (1.0 + (-z).exp())
}

impl Detector {
    pub fn new<R: Rng + ?Sized>(kind: DetectorKind, input_dims: &[usize], cfg: &DetectorConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            kind,
            net: Sequential::build(input_dims, &layer_specs(kind, cfg), rng)?,
            scale: 1.0,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn net(&self) -> &Sequential<f32> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Sequential<f32> {
        &mut self.net
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn set_scale(&mut self, scale: f32) {
        self.scale = scale;
    }

    pub fn input(&self, payload: &[f32]) -> Result<Tensor<f32>> {
        Ok(Tensor::new(
            self.net.input_dims().to_vec(),
            payload.iter().map(|v| v * self.scale).collect(),
        )?)
    }

    pub fn forward(&self, payload: &[f32]) -> Result<Tape<f32>> {
        Ok(self.net.forward(&self.input(payload)?)?)
    }

    /// Probability that the payload comes from an attacked step.
    pub fn score(&self, payload: &[f32]) -> Result<f32> {
        let z = self.net.infer(&self.input(payload)?)?.data()[0];
        Ok(sigmoid(z))
    }

    fn architecture(&self) -> DetectorArchitecture {
        DetectorArchitecture {
            role: "detector".into(),
            kind: self.kind,
            input_dims: self.net.input_dims().to_vec(),
            layers: self.net.specs().to_vec(),
            scale: self.scale,
        }
    }

    pub fn weight_bytes(&self) -> Vec<u8> {
        save_weights(&self.net)
    }

    pub fn save(&self, dir: &Path, stem: &str, optimizer: serde_json::Value) -> Result<()> {
        let sidecar = Sidecar::new(serde_json::to_value(self.architecture())?, optimizer);
        write_pair(dir, stem, &self.weight_bytes(), &sidecar)
    }

    pub fn load(weights: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(weights.with_extension("json"))?)?;
        let arch: DetectorArchitecture = serde_json::from_value(sidecar.architecture)?;
        if arch.role != "detector" {
            return Err(Error::Architecture(format!("expected a detector weight file, found {}", arch.role)));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Sequential::build(&arch.input_dims, &arch.layers, &mut rng)?;
        load_weights_into(&mut net, &std::fs::read(weights)?)?;
        Ok(Self {
            kind: arch.kind,
            net,
            scale: arch.scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use uavxai_nn::Parametrized;

    use super::*;

    #[test]
    fn zeroed_detector_scores_one_half() {
        let cfg = DetectorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Detector::new(DetectorKind::Lstm, &[10, 48], &cfg, &mut rng).unwrap();
        for p in d.net_mut().params_mut() {
            p.fill(0.0);
        }
        assert_eq!(d.score(&[0.3; 480]).unwrap(), 0.5);
    }

    #[test]
    fn cnn_shape_reduces_to_one_logit() {
        let cfg = DetectorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Detector::new(DetectorKind::Cnn, &[5, 2, 8, 32], &cfg, &mut rng).unwrap();
        assert_eq!(d.net().output_dims(), &[1]);
        let s = d.score(&vec![0.5; 5 * 2 * 8 * 32]).unwrap();
        assert!((0.0..=1.0).contains(&s));
    }
}
