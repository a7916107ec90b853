use rand::Rng;

use crate::sequential::{Parametrized, Sequential, Tape};
use crate::{LayerSpec, NnError, Real, Result, Tensor};

/// `head(concat(trunk(primary), side))`: the two-input shape shared by the
/// actor, the critic and the second half of a split actor.
#[derive(Clone, Debug)]
pub struct Branched<F> {
    trunk: Sequential<F>,
    side_len: usize,
    head: Sequential<F>,
}

#[derive(Clone, Debug)]
pub struct BranchedTape<F> {
    pub trunk: Tape<F>,
    pub head: Tape<F>,
}

impl<F: Real> BranchedTape<F> {
    pub fn output(&self) -> &Tensor<F> {
        self.head.output()
    }

    /// Trunk output, i.e. the embedding that is concatenated with the side input.
    pub fn embedding(&self) -> &Tensor<F> {
        self.trunk.output()
    }
}

impl<F: Real> Branched<F> {
    pub fn build<R: Rng + ?Sized>(
        trunk_input: &[usize],
        trunk: &[LayerSpec],
        side_len: usize,
        head: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let trunk = Sequential::build(trunk_input, trunk, rng)?;
        if trunk.output_dims().len() != 1 {
            return Err(NnError::InvalidSpec(format!(
                "trunk must end in a vector, got {:?}",
                trunk.output_dims()
            )));
        }
        let head = Sequential::build(&[trunk.output_dims()[0] + side_len], head, rng)?;
        Ok(Self { trunk, side_len, head })
    }

    pub fn from_parts(trunk: Sequential<F>, side_len: usize, head: Sequential<F>) -> Result<Self> {
        let want = trunk.output_dims().iter().product::<usize>() + side_len;
        if head.input_dims() != [want] {
            return Err(NnError::DimMismatch {
                layer: "head".into(),
                expected: vec![want],
                got: head.input_dims().to_vec(),
            });
        }
        Ok(Self { trunk, side_len, head })
    }

    pub fn trunk(&self) -> &Sequential<F> {
        &self.trunk
    }

    pub fn head(&self) -> &Sequential<F> {
        &self.head
    }

    pub fn side_len(&self) -> usize {
        self.side_len
    }

    pub fn embedding_len(&self) -> usize {
        self.trunk.output_dims()[0]
    }

    pub fn cast<G: Real>(&self) -> Branched<G> {
        Branched {
            trunk: self.trunk.cast(),
            side_len: self.side_len,
            head: self.head.cast(),
        }
    }

    fn concat(&self, emb: &Tensor<F>, side: &[F]) -> Result<Tensor<F>> {
        if side.len() != self.side_len {
            return Err(NnError::DimMismatch {
                layer: "concat".into(),
                expected: vec![self.side_len],
                got: vec![side.len()],
            });
        }
        let mut v = emb.data().to_vec();
        v.extend_from_slice(side);
        Ok(Tensor::vector(v))
    }

    pub fn forward(&self, primary: &Tensor<F>, side: &[F]) -> Result<BranchedTape<F>> {
        let trunk = self.trunk.forward(primary)?;
        let head = self.head.forward(&self.concat(trunk.output(), side)?)?;
        Ok(BranchedTape { trunk, head })
    }

    /// Forward from a precomputed trunk embedding.
    pub fn forward_head(&self, embedding: &Tensor<F>, side: &[F]) -> Result<Tape<F>> {
        self.head.forward(&self.concat(embedding, side)?)
    }

    pub fn infer(&self, primary: &Tensor<F>, side: &[F]) -> Result<Tensor<F>> {
        Ok(self.forward(primary, side)?.head.into_output())
    }

    fn split(&self, g: Tensor<F>) -> (Tensor<F>, Vec<F>) {
        let e = self.embedding_len();
        let mut data = g.into_data();
        let side = data.split_off(e);
        (Tensor::vector(data), side)
    }

    /// Accumulates parameter gradients and returns (primary grad, side grad).
    pub fn backward(
        &self,
        tape: &BranchedTape<F>,
        upstream: &Tensor<F>,
        grads: &mut [Tensor<F>],
    ) -> Result<(Tensor<F>, Vec<F>)> {
        let nt = self.trunk.param_count();
        if grads.len() != nt + self.head.param_count() {
            return Err(NnError::CountMismatch {
                expected: nt + self.head.param_count(),
                found: grads.len(),
            });
        }
        let (gt, gh) = grads.split_at_mut(nt);
        let g = self.head.backward(&tape.head, upstream, gh)?;
        let (ge, gs) = self.split(g);
        Ok((self.trunk.backward(&tape.trunk, &ge, gt)?, gs))
    }

    pub fn input_gradient(&self, tape: &BranchedTape<F>, upstream: &Tensor<F>) -> Result<(Tensor<F>, Vec<F>)> {
        let g = self.head.input_gradient(&tape.head, upstream)?;
        let (ge, gs) = self.split(g);
        Ok((self.trunk.input_gradient(&tape.trunk, &ge)?, gs))
    }

    pub fn multipliers(
        &self,
        tape: &BranchedTape<F>,
        reference: &BranchedTape<F>,
        upstream: &Tensor<F>,
    ) -> Result<(Tensor<F>, Vec<F>)> {
        let g = self.head.multipliers(&tape.head, &reference.head, upstream)?;
        let (ge, gs) = self.split(g);
        Ok((self.trunk.multipliers(&tape.trunk, &reference.trunk, &ge)?, gs))
    }
}

impl<F: Real> Parametrized<F> for Branched<F> {
    fn params(&self) -> Vec<&Tensor<F>> {
        let mut p = self.trunk.params();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    fn param_names(&self) -> Vec<String> {
        let mut n = self.trunk.param_names_prefixed("trunk");
        n.extend(self.head.param_names_prefixed("head"));
        n
    }
}
