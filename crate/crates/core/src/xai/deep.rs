use serde::{Deserialize, Serialize};
use uavxai_nn::{Branched, BranchedTape, Sequential, Tape, Tensor};

use super::YAW;
use crate::ddpg::Actor;
use crate::records::hash_f64s;
use crate::sim::Observation;
use crate::{Error, Result};

/// A scalar-output model that can report DeepLIFT multipliers of that output
/// with respect to a flat input vector.
pub trait Explainable: Sync {
    type Record: Send + Sync;

    fn input_len(&self) -> usize;

    /// Trailing inputs reported in [`AttributionFrame::side`] rather than
    /// [`AttributionFrame::values`].
    fn side_len(&self) -> usize {
        0
    }

    fn record(&self, input: &[f64]) -> Result<Self::Record>;

    fn output(&self, record: &Self::Record) -> f64;

    /// `m_i` such that `Σ m_i (x_i − r_i) = f(x) − f(r)`.
    fn multipliers(&self, record: &Self::Record, reference: &Self::Record) -> Result<Vec<f64>>;
}

/// Reference points with their forward records, built once and reused.
pub struct Background<R> {
    inputs: Vec<Vec<f64>>,
    records: Vec<R>,
    outputs: Vec<f64>,
    hash: String,
}

impl<R> Background<R> {
    pub fn build<E: Explainable<Record = R>>(model: &E, inputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset("background set".into()));
        }
        if let Some(bad) = inputs.iter().find(|v| v.len() != model.input_len()) {
            return Err(Error::Architecture(format!(
                "background point has {} inputs, model expects {}",
                bad.len(),
                model.input_len()
            )));
        }
        let records = inputs.iter().map(|b| model.record(b)).collect::<Result<Vec<_>>>()?;
        let outputs = records.iter().map(|r| model.output(r)).collect();
        let hash = hash_f64s(inputs.iter().flatten().copied());
        Ok(Self {
            inputs,
            records,
            outputs,
            hash,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn mean_output(&self) -> f64 {
        self.outputs.iter().sum::<f64>() / self.outputs.len() as f64
    }

    /// SHA-256 of the background inputs.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

/// Attributions of one decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionFrame {
    pub values: Vec<f64>,
    /// Attributions of inputs kept out of `values` (bearing, distance).
    pub side: Vec<f64>,
    pub output: f64,
    /// Mean output over the background.
    pub baseline: f64,
}

impl AttributionFrame {
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() + self.side.iter().sum::<f64>()
    }

    /// |Σ Φ − (f(x) − E f(b))|.
    pub fn completeness_gap(&self) -> f64 {
        (self.total() - (self.output - self.baseline)).abs()
    }
}

/// DeepSHAP: per-reference DeepLIFT attributions `m ⊙ (x − b)`, averaged
/// over the background.
pub fn deep_attribution<E: Explainable>(model: &E, x: &[f64], background: &Background<E::Record>) -> Result<AttributionFrame> {
    if x.len() != model.input_len() {
        return Err(Error::Architecture(format!(
            "explained input has {} values, model expects {}",
            x.len(),
            model.input_len()
        )));
    }
    let rec = model.record(x)?;
    let mut phi = vec![0.0; x.len()];
    for (b, r) in background.inputs.iter().zip(&background.records) {
        let m = model.multipliers(&rec, r)?;
        for ((p, m), (xi, bi)) in phi.iter_mut().zip(&m).zip(x.iter().zip(b)) {
            *p += m * (xi - bi);
        }
    }
    let n = background.len() as f64;
    phi.iter_mut().for_each(|p| *p /= n);
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("attribution".into()));
    }
    let side = phi.split_off(phi.len() - model.side_len());
    Ok(AttributionFrame {
        values: phi,
        side,
        output: model.output(&rec),
        baseline: background.mean_output(),
    })
}

/// One output of a [`Sequential`], times `scale`, over its flattened input.
pub struct SequentialExplainer {
    net: Sequential<f64>,
    output: usize,
    scale: f64,
    side_len: usize,
}

impl SequentialExplainer {
    pub fn new(net: Sequential<f64>, output: usize, scale: f64) -> Self {
        Self {
            net,
            output,
            scale,
            side_len: 0,
        }
    }

    /// Reports the last `n` inputs separately.
    pub fn with_side(mut self, n: usize) -> Self {
        self.side_len = n;
        self
    }

    pub fn net(&self) -> &Sequential<f64> {
        &self.net
    }

    fn upstream(&self) -> Tensor<f64> {
        let mut up = Tensor::zeros(self.net.output_dims());
        up.data_mut()[self.output] = self.scale;
        up
    }
}

impl Explainable for SequentialExplainer {
    type Record = Tape<f64>;

    fn input_len(&self) -> usize {
        self.net.input_dims().iter().product()
    }

    fn side_len(&self) -> usize {
        self.side_len
    }

    fn record(&self, input: &[f64]) -> Result<Tape<f64>> {
        Ok(self.net.forward(&Tensor::new(self.net.input_dims().to_vec(), input.to_vec())?)?)
    }

    fn output(&self, record: &Tape<f64>) -> f64 {
        self.scale * record.output().data()[self.output]
    }

    fn multipliers(&self, record: &Tape<f64>, reference: &Tape<f64>) -> Result<Vec<f64>> {
        Ok(self.net.multipliers(record, reference, &self.upstream())?.into_data())
    }
}

/// The actor's yaw rate (rad/s) over the full depth stack followed by the
/// two positional inputs.
pub struct ActorExplainer {
    net: Branched<f64>,
    stack_dims: Vec<usize>,
    omega_max: f64,
}

impl ActorExplainer {
    pub fn new(actor: &Actor) -> Self {
        Self {
            net: actor.net().cast(),
            stack_dims: actor.stack_dims().to_vec(),
            omega_max: actor.kinematics().omega_max,
        }
    }

    pub fn stack_len(&self) -> usize {
        self.stack_dims.iter().product()
    }

    /// Flat model input for an observation of `actor`.
    pub fn input_of(actor: &Actor, obs: &Observation) -> Vec<f64> {
        let mut v: Vec<f64> = obs.frames.iter().flat_map(|f| f.data.iter().map(|&p| p as f64)).collect();
        v.extend(actor.positional(obs));
        v
    }
}

impl Explainable for ActorExplainer {
    type Record = BranchedTape<f64>;

    fn input_len(&self) -> usize {
        self.stack_len() + self.net.side_len()
    }

    fn side_len(&self) -> usize {
        self.net.side_len()
    }

    fn record(&self, input: &[f64]) -> Result<BranchedTape<f64>> {
        let (stack, side) = input.split_at(self.stack_len());
        Ok(self.net.forward(&Tensor::new(self.stack_dims.clone(), stack.to_vec())?, side)?)
    }

    fn output(&self, record: &BranchedTape<f64>) -> f64 {
        self.omega_max * record.output().data()[YAW]
    }

    fn multipliers(&self, record: &BranchedTape<f64>, reference: &BranchedTape<f64>) -> Result<Vec<f64>> {
        let mut up = Tensor::zeros(&[2]);
        up.data_mut()[YAW] = self.omega_max;
        let (stack, side) = self.net.multipliers(record, reference, &up)?;
        let mut m = stack.into_data();
        m.extend(side);
        Ok(m)
    }
}
