use rand::Rng;

use crate::layer::{Cache, Layer, LayerSpec};
use crate::{NnError, Real, Result, Tensor};

/// Anything that owns an ordered list of named trainable tensors.
pub trait Parametrized<F: Real> {
    fn params(&self) -> Vec<&Tensor<F>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<F>>;
    fn param_names(&self) -> Vec<String>;

    fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.params().iter().map(|p| Tensor::zeros(p.dims())).collect()
    }

    fn param_len(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Forward record of a [`Sequential`] on one input.
#[derive(Clone, Debug)]
pub struct Tape<F> {
    caches: Vec<Cache<F>>,
    output: Tensor<F>,
}

impl<F: Real> Tape<F> {
    pub fn output(&self) -> &Tensor<F> {
        &self.output
    }

    pub fn into_output(self) -> Tensor<F> {
        self.output
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

/// A linear stack of layers with statically derived dims.
#[derive(Clone, Debug)]
pub struct Sequential<F> {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<F>>,
}

impl<F: Real> Sequential<F> {
    pub fn build<R: Rng + ?Sized>(input_dims: &[usize], specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(NnError::InvalidSpec("empty layer list".into()));
        }
        if input_dims.is_empty() || input_dims.contains(&0) {
            return Err(NnError::InvalidSpec(format!("bad input dims {input_dims:?}")));
        }
        let mut dims = input_dims.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let (layer, out) = Layer::build(spec, &dims, rng)?;
            layers.push(layer);
            dims = out;
        }
        Ok(Self {
            input_dims: input_dims.to_vec(),
            output_dims: dims,
            specs: specs.to_vec(),
            layers,
        })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn cast<G: Real>(&self) -> Sequential<G> {
        Sequential {
            input_dims: self.input_dims.clone(),
            output_dims: self.output_dims.clone(),
            specs: self.specs.clone(),
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }

    pub(crate) fn param_names_prefixed(&self, prefix: &str) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.param_names(&format!("{prefix}.{i}")))
            .collect()
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        if x.dims() != self.input_dims.as_slice() {
            return Err(NnError::DimMismatch {
                layer: format!("0:{}", self.layers[0].name()),
                expected: self.input_dims.clone(),
                got: x.dims().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tape<F>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    /// Forward without recording; same arithmetic as [`Self::forward`].
    pub fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.forward(x)?.output)
    }

    pub(crate) fn forward_unchecked(&self, x: &Tensor<F>) -> Tape<F> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = None;
        for layer in &self.layers {
            let (y, cache) = layer.forward(cur.as_ref().unwrap_or(x));
            caches.push(cache);
            cur = Some(y);
        }
        Tape {
            caches,
            output: cur.expect("non-empty stack"),
        }
    }

    fn check_tape(&self, tape: &Tape<F>, upstream: &Tensor<F>) -> Result<()> {
        if tape.caches.len() != self.layers.len() {
            return Err(NnError::BackwardBeforeForward);
        }
        if upstream.dims() != self.output_dims.as_slice() {
            return Err(NnError::DimMismatch {
                layer: format!("{}:{}", self.layers.len() - 1, self.layers.last().unwrap().name()),
                expected: self.output_dims.clone(),
                got: upstream.dims().to_vec(),
            });
        }
        Ok(())
    }

    /// Accumulates parameter gradients into `grads` (aligned with
    /// [`Parametrized::params`]) and returns the input gradient.
    pub fn backward(&self, tape: &Tape<F>, upstream: &Tensor<F>, grads: &mut [Tensor<F>]) -> Result<Tensor<F>> {
        self.check_tape(tape, upstream)?;
        if grads.len() != self.param_count() {
            return Err(NnError::CountMismatch {
                expected: self.param_count(),
                found: grads.len(),
            });
        }
        Ok(self.backward_impl(tape, None, upstream, Some(grads)))
    }

    /// Input gradient only.
    pub fn input_gradient(&self, tape: &Tape<F>, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_tape(tape, upstream)?;
        Ok(self.backward_impl(tape, None, upstream, None))
    }

    /// DeepLIFT multipliers of the output w.r.t. the input, relative to the
    /// reference whose forward record is `reference`.
    pub fn multipliers(&self, tape: &Tape<F>, reference: &Tape<F>, upstream: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_tape(tape, upstream)?;
        if reference.caches.len() != self.layers.len() {
            return Err(NnError::BackwardBeforeForward);
        }
        Ok(self.backward_impl(tape, Some(reference), upstream, None))
    }

    pub(crate) fn backward_impl(
        &self,
        tape: &Tape<F>,
        reference: Option<&Tape<F>>,
        upstream: &Tensor<F>,
        mut grads: Option<&mut [Tensor<F>]>,
    ) -> Tensor<F> {
        let mut offset = self.param_count();
        let mut g = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let count = layer.param_count();
            offset -= count;
            let slot = grads.as_deref_mut().map(|all| &mut all[offset..offset + count]);
            let r = reference.map(|t| &t.caches[i]);
            g = layer.backward(&tape.caches[i], r, &g, slot);
        }
        g
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

impl<F: Real> Parametrized<F> for Sequential<F> {
    fn params(&self) -> Vec<&Tensor<F>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn param_names(&self) -> Vec<String> {
        self.param_names_prefixed("layer")
    }
}
