use uavxai_nn::{Layer, Real, Sequential, Tape, Tensor};

use super::deep::{deep_attribution, AttributionFrame, Background, SequentialExplainer};
use super::YAW;
use crate::ddpg::Actor;
use crate::sim::Observation;
use crate::{Error, Result};

/// The actor cut after its GRU: `first` maps a depth stack to the GRU state,
/// `second` maps that state plus the positional inputs to the action.
#[derive(Clone, Debug)]
pub struct SplitModel<F> {
    first: Sequential<F>,
    second: Sequential<F>,
    side_len: usize,
}

impl SplitModel<f32> {
    pub fn from_actor(actor: &Actor) -> Result<Self> {
        let net = actor.net();
        match net.trunk().layers().last() {
            Some(Layer::Gru { .. }) => {}
            other => {
                return Err(Error::Architecture(format!(
                    "actor trunk must end in a gru layer, found {}",
                    other.map_or("nothing", |l| l.name())
                )))
            }
        }
        Ok(Self {
            first: net.trunk().clone(),
            second: net.head().clone(),
            side_len: net.side_len(),
        })
    }
}

impl<F: Real> SplitModel<F> {
    pub fn cast<G: Real>(&self) -> SplitModel<G> {
        SplitModel {
            first: self.first.cast(),
            second: self.second.cast(),
            side_len: self.side_len,
        }
    }

    pub fn first(&self) -> &Sequential<F> {
        &self.first
    }

    pub fn second(&self) -> &Sequential<F> {
        &self.second
    }

    pub fn embedding_len(&self) -> usize {
        self.first.output_dims()[0]
    }

    pub fn side_len(&self) -> usize {
        self.side_len
    }

    pub fn embed(&self, stack: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.first.infer(stack)?)
    }

    pub fn decide(&self, embedding: &Tensor<F>, side: &[F]) -> Result<Tensor<F>> {
        let mut v = embedding.data().to_vec();
        v.extend_from_slice(side);
        Ok(self.second.infer(&Tensor::vector(v))?)
    }
}

/// Explains the yaw output of the second half over `[embedding, bearing,
/// distance]`, with the positional attributions reported as `side`.
pub fn gru_explainer(split: &SplitModel<f32>, omega_max: f64) -> SequentialExplainer {
    SequentialExplainer::new(split.second().cast(), YAW, omega_max).with_side(split.side_len())
}

/// Background observations pushed through the first half once; every
/// explained frame afterwards only touches the second half.
pub struct GruBackground {
    first: Sequential<f64>,
    explainer: SequentialExplainer,
    background: Background<Tape<f64>>,
    stack_dims: Vec<usize>,
}

impl GruBackground {
    pub fn new(actor: &Actor, background: &[Observation]) -> Result<Self> {
        let split = SplitModel::from_actor(actor)?;
        let explainer = gru_explainer(&split, actor.kinematics().omega_max);
        let first: Sequential<f64> = split.first().cast();
        let stack_dims = actor.stack_dims().to_vec();
        let inputs = background
            .iter()
            .map(|o| half_two_input(&first, &stack_dims, actor, o))
            .collect::<Result<Vec<_>>>()?;
        let background = Background::build(&explainer, inputs)?;
        Ok(Self {
            first,
            explainer,
            background,
            stack_dims,
        })
    }

    pub fn background(&self) -> &Background<Tape<f64>> {
        &self.background
    }

    pub fn explainer(&self) -> &SequentialExplainer {
        &self.explainer
    }

    /// Second-half input for an observation: GRU state then positional inputs.
    pub fn input_of(&self, actor: &Actor, obs: &Observation) -> Result<Vec<f64>> {
        half_two_input(&self.first, &self.stack_dims, actor, obs)
    }
}

fn half_two_input(first: &Sequential<f64>, dims: &[usize], actor: &Actor, obs: &Observation) -> Result<Vec<f64>> {
    let stack = Tensor::new(dims.to_vec(), obs.frames.iter().flat_map(|f| f.data.iter().map(|&p| p as f64)).collect())?;
    let mut v = first.infer(&stack)?.into_data();
    v.extend(actor.positional(obs));
    Ok(v)
}

/// 48 GRU-state attributions of the yaw decision (positional ones in `side`).
pub fn gru_layer_shap(actor: &Actor, obs: &Observation, cache: &GruBackground) -> Result<AttributionFrame> {
    let x = cache.input_of(actor, obs)?;
    deep_attribution(&cache.explainer, &x, &cache.background)
}
