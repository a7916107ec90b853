//! Layer kinds, their forward records and their backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::{axpy, matvec_add, matvec_t_add, mid, outer_add, secant, sigmoid};
use crate::sequential::{Sequential, Tape};
use crate::{NnError, Real, Result, Tensor};

/// Declarative description of one layer. Output dims are derived from the
/// input dims when a [`Sequential`] is built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `[n] -> [units]`
    Dense { units: usize },
    /// `[c, h, w] -> [filters, h', w']`, zero padding on every side.
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    /// `[c, h, w] -> [c, h / size, w / size]`, non-overlapping windows.
    MaxPool { size: usize },
    /// `[t, n] -> [units]`, final hidden state.
    Gru { units: usize },
    /// `[t, n] -> [units]`, final hidden state.
    Lstm { units: usize },
    Relu,
    Tanh,
    Sigmoid,
    Flatten,
    /// `[t, ...] -> [t, ...]`, the inner stack applied to every step.
    TimeDistributed { layers: Vec<LayerSpec> },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Gru { .. } => "gru",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Flatten => "flatten",
            LayerSpec::TimeDistributed { .. } => "time_distributed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => x.max(F::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    #[inline]
    fn deriv<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                F::one() - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (F::one() - s)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer<F> {
    Dense {
        w: Tensor<F>,
        b: Tensor<F>,
    },
    Conv2d {
        w: Tensor<F>,
        b: Tensor<F>,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        size: usize,
    },
    Gru {
        wx: Tensor<F>,
        wh: Tensor<F>,
        b: Tensor<F>,
    },
    Lstm {
        wx: Tensor<F>,
        wh: Tensor<F>,
        b: Tensor<F>,
    },
    Activation(Activation),
    Flatten,
    TimeDistributed(Box<Sequential<F>>),
}

#[derive(Clone, Debug)]
pub struct GruStep<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    /// Pre-activations in gate order z, r, n.
    pre: Vec<F>,
    z: Vec<F>,
    r: Vec<F>,
    q: Vec<F>,
    n: Vec<F>,
}

#[derive(Clone, Debug)]
pub struct LstmStep<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    /// Pre-activations in gate order i, f, g, o.
    pre: Vec<F>,
    /// Gate values in the same order.
    gates: Vec<F>,
    c: Vec<F>,
    tc: Vec<F>,
}

/// What a layer records during forward for its backward pass.
#[derive(Clone, Debug)]
pub enum Cache<F> {
    Input(Tensor<F>),
    Pool { input: Tensor<F> },
    Act { pre: Tensor<F>, post: Tensor<F> },
    Shape(Vec<usize>),
    Gru(Vec<GruStep<F>>),
    Lstm(Vec<LstmStep<F>>),
    Steps(Vec<Tape<F>>),
}

fn uniform<F: Real, R: Rng + ?Sized>(rng: &mut R, dims: &[usize], bound: f64) -> Tensor<F> {
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| F::of(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(dims.to_vec(), data).expect("dims are positive")
}

fn bad(spec: &LayerSpec, msg: impl std::fmt::Display) -> NnError {
    NnError::InvalidSpec(format!("{}: {msg}", spec.name()))
}

impl<F: Real> Layer<F> {
    /// Builds a freshly initialised layer and returns it with its output dims.
    pub fn build<R: Rng + ?Sized>(
        spec: &LayerSpec,
        input: &[usize],
        rng: &mut R,
    ) -> Result<(Self, Vec<usize>)> {
        let expect_rank = |rank: usize| {
            if input.len() != rank {
                Err(NnError::DimMismatch {
                    layer: spec.name().to_string(),
                    expected: vec![0; rank],
                    got: input.to_vec(),
                })
            } else {
                Ok(())
            }
        };
        Ok(match *spec {
            LayerSpec::Dense { units } => {
                expect_rank(1)?;
                if units == 0 {
                    return Err(bad(spec, "zero units"));
                }
                let bound = 1.0 / (input[0] as f64).sqrt();
                (
                    Layer::Dense {
                        w: uniform(rng, &[units, input[0]], bound),
                        b: uniform(rng, &[units], bound),
                    },
                    vec![units],
                )
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                expect_rank(3)?;
                let (c, h, w) = (input[0], input[1], input[2]);
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(bad(spec, "zero filters, kernel or stride"));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(bad(spec, format!("kernel {kernel} larger than padded input {input:?}")));
                }
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (w + 2 * padding - kernel) / stride + 1;
                let bound = 1.0 / ((c * kernel * kernel) as f64).sqrt();
                (
                    Layer::Conv2d {
                        w: uniform(rng, &[filters, c, kernel, kernel], bound),
                        b: uniform(rng, &[filters], bound),
                        stride,
                        padding,
                    },
                    vec![filters, oh, ow],
                )
            }
            LayerSpec::MaxPool { size } => {
                expect_rank(3)?;
                if size == 0 || input[1] < size || input[2] < size {
                    return Err(bad(spec, format!("pool {size} does not fit {input:?}")));
                }
                (
                    Layer::MaxPool { size },
                    vec![input[0], input[1] / size, input[2] / size],
                )
            }
            LayerSpec::Gru { units } | LayerSpec::Lstm { units } => {
                expect_rank(2)?;
                if units == 0 {
                    return Err(bad(spec, "zero units"));
                }
                let gates = if matches!(spec, LayerSpec::Gru { .. }) { 3 } else { 4 };
                let n = input[1];
                let wx = uniform(rng, &[gates * units, n], 1.0 / (n as f64).sqrt());
                let wh = uniform(rng, &[gates * units, units], 1.0 / (units as f64).sqrt());
                let mut b = uniform(rng, &[gates * units], 1.0 / (units as f64).sqrt());
                let layer = if gates == 3 {
                    Layer::Gru { wx, wh, b }
                } else {
                    // forget gate bias starts at one
                    b.data_mut()[units..2 * units].fill(F::one());
                    Layer::Lstm { wx, wh, b }
                };
                (layer, vec![units])
            }
            LayerSpec::Relu => (Layer::Activation(Activation::Relu), input.to_vec()),
            LayerSpec::Tanh => (Layer::Activation(Activation::Tanh), input.to_vec()),
            LayerSpec::Sigmoid => (Layer::Activation(Activation::Sigmoid), input.to_vec()),
            LayerSpec::Flatten => (Layer::Flatten, vec![input.iter().product()]),
            LayerSpec::TimeDistributed { ref layers } => {
                if input.len() < 2 {
                    return Err(bad(spec, "needs a leading time axis"));
                }
                let inner = Sequential::build(&input[1..], layers, rng)?;
                let mut out = vec![input[0]];
                out.extend_from_slice(inner.output_dims());
                (Layer::TimeDistributed(Box::new(inner)), out)
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Gru { .. } => "gru",
            Layer::Lstm { .. } => "lstm",
            Layer::Activation(Activation::Relu) => "relu",
            Layer::Activation(Activation::Tanh) => "tanh",
            Layer::Activation(Activation::Sigmoid) => "sigmoid",
            Layer::Flatten => "flatten",
            Layer::TimeDistributed(_) => "time_distributed",
        }
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        match self {
            Layer::Dense { w, b } | Layer::Conv2d { w, b, .. } => vec![w, b],
            Layer::Gru { wx, wh, b } | Layer::Lstm { wx, wh, b } => vec![wx, wh, b],
            Layer::TimeDistributed(inner) => inner.layers().iter().flat_map(|l| l.params()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Dense { w, b } | Layer::Conv2d { w, b, .. } => vec![w, b],
            Layer::Gru { wx, wh, b } | Layer::Lstm { wx, wh, b } => vec![wx, wh, b],
            Layer::TimeDistributed(inner) => inner
                .layers_mut()
                .iter_mut()
                .flat_map(|l| l.params_mut())
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        match self {
            Layer::Dense { .. } | Layer::Conv2d { .. } => {
                vec![format!("{prefix}.w"), format!("{prefix}.b")]
            }
            Layer::Gru { .. } | Layer::Lstm { .. } => vec![
                format!("{prefix}.wx"),
                format!("{prefix}.wh"),
                format!("{prefix}.b"),
            ],
            Layer::TimeDistributed(inner) => inner.param_names_prefixed(prefix),
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense { .. } | Layer::Conv2d { .. } => 2,
            Layer::Gru { .. } | Layer::Lstm { .. } => 3,
            Layer::TimeDistributed(inner) => inner.layers().iter().map(|l| l.param_count()).sum(),
            _ => 0,
        }
    }

    pub fn cast<G: Real>(&self) -> Layer<G> {
        match self {
            Layer::Dense { w, b } => Layer::Dense {
                w: w.cast(),
                b: b.cast(),
            },
            Layer::Conv2d {
                w,
                b,
                stride,
                padding,
            } => Layer::Conv2d {
                w: w.cast(),
                b: b.cast(),
                stride: *stride,
                padding: *padding,
            },
            Layer::MaxPool { size } => Layer::MaxPool { size: *size },
            Layer::Gru { wx, wh, b } => Layer::Gru {
                wx: wx.cast(),
                wh: wh.cast(),
                b: b.cast(),
            },
            Layer::Lstm { wx, wh, b } => Layer::Lstm {
                wx: wx.cast(),
                wh: wh.cast(),
                b: b.cast(),
            },
            Layer::Activation(a) => Layer::Activation(*a),
            Layer::Flatten => Layer::Flatten,
            Layer::TimeDistributed(inner) => Layer::TimeDistributed(Box::new(inner.cast())),
        }
    }

    /// Forward pass. Input dims were validated by the owning [`Sequential`].
    pub fn forward(&self, x: &Tensor<F>) -> (Tensor<F>, Cache<F>) {
        match self {
            Layer::Dense { w, b } => {
                let mut y = b.data().to_vec();
                matvec_add(w.data(), x.len(), x.data(), &mut y);
                (Tensor::vector(y), Cache::Input(x.clone()))
            }
            Layer::Conv2d {
                w,
                b,
                stride,
                padding,
            } => {
                let g = ConvGeom::new(x.dims(), w.dims(), *stride, *padding);
                let y = g.forward(x.data(), w.data(), b.data());
                (
                    Tensor::new(vec![g.f, g.oh, g.ow], y).expect("conv output dims"),
                    Cache::Input(x.clone()),
                )
            }
            Layer::MaxPool { size } => {
                let (c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
                let (oh, ow) = (h / size, w / size);
                let mut y = vec![F::neg_infinity(); c * oh * ow];
                let d = x.data();
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let o = &mut y[(ch * oh + oy) * ow + ox];
                            for ky in 0..*size {
                                for kx in 0..*size {
                                    let v = d[(ch * h + oy * size + ky) * w + ox * size + kx];
                                    if v > *o {
                                        *o = v;
                                    }
                                }
                            }
                        }
                    }
                }
                (
                    Tensor::new(vec![c, oh, ow], y).expect("pool output dims"),
                    Cache::Pool { input: x.clone() },
                )
            }
            Layer::Gru { wx, wh, b } => gru_forward(wx, wh, b, x),
            Layer::Lstm { wx, wh, b } => lstm_forward(wx, wh, b, x),
            Layer::Activation(a) => {
                let y = x.map(|v| a.apply(v));
                (
                    y.clone(),
                    Cache::Act {
                        pre: x.clone(),
                        post: y,
                    },
                )
            }
            Layer::Flatten => {
                let n = x.len();
                (
                    x.clone().reshape(&[n]).expect("flatten"),
                    Cache::Shape(x.dims().to_vec()),
                )
            }
            Layer::TimeDistributed(inner) => {
                let steps = x.dims()[0];
                let per = x.len() / steps;
                let mut out = Vec::new();
                let mut tapes = Vec::with_capacity(steps);
                for t in 0..steps {
                    let xt = Tensor::new(
                        x.dims()[1..].to_vec(),
                        x.data()[t * per..(t + 1) * per].to_vec(),
                    )
                    .expect("time slice");
                    let tape = inner.forward_unchecked(&xt);
                    out.extend_from_slice(tape.output().data());
                    tapes.push(tape);
                }
                let mut dims = vec![steps];
                dims.extend_from_slice(inner.output_dims());
                (
                    Tensor::new(dims, out).expect("time distributed dims"),
                    Cache::Steps(tapes),
                )
            }
        }
    }

    /// Backward pass.
    ///
    /// With `reference == None` this is the exact gradient: `grad` is
    /// dL/d(output) and the return value dL/d(input); parameter gradients are
    /// accumulated into `grads` when given.
    ///
    /// With a reference record this propagates DeepLIFT multipliers instead:
    /// activations use the secant slope between input and reference, and gate
    /// products use the midpoint of their factors, which keeps
    /// `sum(m_in * d_in) == sum(m_out * d_out)` exact for every layer.
    pub fn backward(
        &self,
        cache: &Cache<F>,
        reference: Option<&Cache<F>>,
        grad: &Tensor<F>,
        grads: Option<&mut [Tensor<F>]>,
    ) -> Tensor<F> {
        match (self, cache) {
            (Layer::Dense { w, .. }, Cache::Input(x)) => {
                let mut gin = vec![F::zero(); x.len()];
                matvec_t_add(w.data(), x.len(), grad.data(), &mut gin);
                if let Some(g) = grads {
                    let (gw, gb) = g.split_at_mut(1);
                    outer_add(gw[0].data_mut(), grad.data(), x.data());
                    gb[0].add_assign(grad);
                }
                Tensor::vector(gin)
            }
            (
                Layer::Conv2d {
                    w, stride, padding, ..
                },
                Cache::Input(x),
            ) => {
                let geom = ConvGeom::new(x.dims(), w.dims(), *stride, *padding);
                let mut gin = vec![F::zero(); x.len()];
                match grads {
                    Some(g) => {
                        let (gw, gb) = g.split_at_mut(1);
                        geom.backward(
                            x.data(),
                            w.data(),
                            grad.data(),
                            &mut gin,
                            Some((gw[0].data_mut(), gb[0].data_mut())),
                        );
                    }
                    None => geom.backward(x.data(), w.data(), grad.data(), &mut gin, None),
                }
                Tensor::new(x.dims().to_vec(), gin).expect("conv input dims")
            }
            (Layer::MaxPool { size }, Cache::Pool { input }) => {
                let r = reference.map(|c| match c {
                    Cache::Pool { input } => input,
                    _ => panic!("reference cache mismatch at maxpool"),
                });
                pool_backward(*size, input, r, grad)
            }
            (Layer::Gru { wx, wh, .. }, Cache::Gru(steps)) => {
                let r = reference.map(|c| match c {
                    Cache::Gru(s) => s.as_slice(),
                    _ => panic!("reference cache mismatch at gru"),
                });
                gru_backward(wx, wh, steps, r, grad, grads)
            }
            (Layer::Lstm { wx, wh, .. }, Cache::Lstm(steps)) => {
                let r = reference.map(|c| match c {
                    Cache::Lstm(s) => s.as_slice(),
                    _ => panic!("reference cache mismatch at lstm"),
                });
                lstm_backward(wx, wh, steps, r, grad, grads)
            }
            (Layer::Activation(a), Cache::Act { pre, post }) => {
                let data = match reference {
                    None => pre
                        .data()
                        .iter()
                        .zip(grad.data())
                        .map(|(&x, &g)| g * a.deriv(x))
                        .collect(),
                    Some(Cache::Act {
                        pre: rpre,
                        post: rpost,
                    }) => (0..pre.len())
                        .map(|i| {
                            grad.data()[i]
                                * secant(
                                    pre.data()[i],
                                    post.data()[i],
                                    rpre.data()[i],
                                    rpost.data()[i],
                                    |v| a.deriv(v),
                                )
                        })
                        .collect(),
                    Some(_) => panic!("reference cache mismatch at activation"),
                };
                Tensor::new(pre.dims().to_vec(), data).expect("activation dims")
            }
            (Layer::Flatten, Cache::Shape(dims)) => grad.clone().reshape(dims).expect("flatten dims"),
            (Layer::TimeDistributed(inner), Cache::Steps(tapes)) => {
                let rtapes = reference.map(|c| match c {
                    Cache::Steps(t) => t,
                    _ => panic!("reference cache mismatch at time_distributed"),
                });
                let steps = tapes.len();
                let per = grad.len() / steps;
                let mut gin = Vec::new();
                let mut in_dims = vec![steps];
                let mut grads = grads;
                for (t, tape) in tapes.iter().enumerate() {
                    let gt = Tensor::new(
                        inner.output_dims().to_vec(),
                        grad.data()[t * per..(t + 1) * per].to_vec(),
                    )
                    .expect("time slice");
                    let r = rtapes.map(|rt| &rt[t]);
                    let g = inner.backward_impl(tape, r, &gt, grads.as_deref_mut());
                    if t == 0 {
                        in_dims.extend_from_slice(g.dims());
                    }
                    gin.extend_from_slice(g.data());
                }
                Tensor::new(in_dims, gin).expect("time distributed input dims")
            }
            (layer, _) => panic!("cache does not belong to layer {}", layer.name()),
        }
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(input: &[usize], weight: &[usize], s: usize, p: usize) -> Self {
        let (c, h, w) = (input[0], input[1], input[2]);
        let (f, k) = (weight[0], weight[2]);
        Self {
            c,
            h,
            w,
            f,
            k,
            s,
            p,
            oh: (h + 2 * p - k) / s + 1,
            ow: (w + 2 * p - k) / s + 1,
        }
    }

    /// Output columns `ox` whose input column `ox * s + kx - p` is in range.
    #[inline]
    fn span(&self, kx: usize, extent: usize, out: usize) -> (usize, usize) {
        let lo = if kx >= self.p { 0 } else { (self.p - kx).div_ceil(self.s) };
        // largest ox with ox*s + kx - p <= extent - 1
        let top = extent + self.p;
        let hi = if top > kx { ((top - kx - 1) / self.s + 1).min(out) } else { 0 };
        (lo, hi.max(lo))
    }

    fn forward<F: Real>(&self, x: &[F], wt: &[F], b: &[F]) -> Vec<F> {
        let (oh, ow) = (self.oh, self.ow);
        let mut out = vec![F::zero(); self.f * oh * ow];
        for fo in 0..self.f {
            out[fo * oh * ow..(fo + 1) * oh * ow].fill(b[fo]);
            for ci in 0..self.c {
                for ky in 0..self.k {
                    let (y0, y1) = self.span(ky, self.h, oh);
                    for kx in 0..self.k {
                        let wv = wt[((fo * self.c + ci) * self.k + ky) * self.k + kx];
                        let (x0, x1) = self.span(kx, self.w, ow);
                        for oy in y0..y1 {
                            let iy = oy * self.s + ky - self.p;
                            let irow = &x[(ci * self.h + iy) * self.w..(ci * self.h + iy + 1) * self.w];
                            let orow = &mut out[(fo * oh + oy) * ow..(fo * oh + oy + 1) * ow];
                            for ox in x0..x1 {
                                orow[ox] += wv * irow[ox * self.s + kx - self.p];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward<F: Real>(
        &self,
        x: &[F],
        wt: &[F],
        g: &[F],
        gin: &mut [F],
        mut pgrads: Option<(&mut [F], &mut [F])>,
    ) {
        let (oh, ow) = (self.oh, self.ow);
        for fo in 0..self.f {
            let gf = &g[fo * oh * ow..(fo + 1) * oh * ow];
            if let Some((_, gb)) = pgrads.as_mut() {
                gb[fo] += gf.iter().copied().sum::<F>();
            }
            for ci in 0..self.c {
                for ky in 0..self.k {
                    let (y0, y1) = self.span(ky, self.h, oh);
                    for kx in 0..self.k {
                        let widx = ((fo * self.c + ci) * self.k + ky) * self.k + kx;
                        let wv = wt[widx];
                        let (x0, x1) = self.span(kx, self.w, ow);
                        let mut acc = F::zero();
                        for oy in y0..y1 {
                            let iy = oy * self.s + ky - self.p;
                            let base = (ci * self.h + iy) * self.w;
                            let grow = &gf[oy * ow..(oy + 1) * ow];
                            for ox in x0..x1 {
                                let ix = base + ox * self.s + kx - self.p;
                                gin[ix] += wv * grow[ox];
                                acc += grow[ox] * x[ix];
                            }
                        }
                        if let Some((gw, _)) = pgrads.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
}

/// Multipliers of `max(a, b)` w.r.t. `a` and `b`. Without a reference this is
/// the subgradient routing to the larger input; with one it is the exact
/// two-player Shapley split of the output delta divided by each input delta.
fn max2_multipliers<F: Real>(a: F, b: F, r: Option<(F, F)>) -> (F, F) {
    let route = if a >= b { (F::one(), F::zero()) } else { (F::zero(), F::one()) };
    let Some((ar, br)) = r else { return route };
    let half = F::of(0.5);
    let phi_a = half * ((a.max(br) - ar.max(br)) + (a.max(b) - ar.max(b)));
    let phi_b = (a.max(b) - ar.max(br)) - phi_a;
    let (da, db) = (a - ar, b - br);
    let ma = if da.abs() > F::secant_floor() { phi_a / da } else { route.0 };
    let mb = if db.abs() > F::secant_floor() { phi_b / db } else { route.1 };
    (ma, mb)
}

fn pool_backward<F: Real>(
    size: usize,
    input: &Tensor<F>,
    reference: Option<&Tensor<F>>,
    grad: &Tensor<F>,
) -> Tensor<F> {
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let (oh, ow) = (h / size, w / size);
    let x = input.data();
    let mut gin = vec![F::zero(); x.len()];
    let mut idx = Vec::with_capacity(size * size);
    let mut mb = Vec::with_capacity(size * size);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                idx.clear();
                for ky in 0..size {
                    for kx in 0..size {
                        idx.push((ch * h + oy * size + ky) * w + ox * size + kx);
                    }
                }
                // fold max left to right, recording per-step multipliers
                mb.clear();
                let mut acc = x[idx[0]];
                let mut acc_r = reference.map(|r| r.data()[idx[0]]);
                let mut ma = Vec::with_capacity(idx.len());
                for &j in &idx[1..] {
                    let rr = reference.map(|r| r.data()[j]);
                    let pair = acc_r.zip(rr);
                    let (m_acc, m_b) = max2_multipliers(acc, x[j], pair);
                    ma.push(m_acc);
                    mb.push(m_b);
                    acc = acc.max(x[j]);
                    acc_r = acc_r.zip(rr).map(|(a, b)| a.max(b));
                }
                let mut carry = grad.data()[(ch * oh + oy) * ow + ox];
                for k in (1..idx.len()).rev() {
                    gin[idx[k]] += carry * mb[k - 1];
                    carry *= ma[k - 1];
                }
                gin[idx[0]] += carry;
            }
        }
    }
    Tensor::new(input.dims().to_vec(), gin).expect("pool input dims")
}

fn gru_forward<F: Real>(wx: &Tensor<F>, wh: &Tensor<F>, b: &Tensor<F>, x: &Tensor<F>) -> (Tensor<F>, Cache<F>) {
    let (steps, n) = (x.dims()[0], x.dims()[1]);
    let u = wh.dims()[1];
    let whd = wh.data();
    let mut h = vec![F::zero(); u];
    let mut cache = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = &x.data()[t * n..(t + 1) * n];
        let mut pre = b.data().to_vec();
        matvec_add(wx.data(), n, xt, &mut pre);
        matvec_add(&whd[..2 * u * u], u, &h, &mut pre[..2 * u]);
        let z: Vec<F> = pre[..u].iter().map(|&v| sigmoid(v)).collect();
        let r: Vec<F> = pre[u..2 * u].iter().map(|&v| sigmoid(v)).collect();
        let q: Vec<F> = r.iter().zip(&h).map(|(&a, &b)| a * b).collect();
        matvec_add(&whd[2 * u * u..], u, &q, &mut pre[2 * u..]);
        let n_: Vec<F> = pre[2 * u..].iter().map(|v| v.tanh()).collect();
        let h_new: Vec<F> = (0..u).map(|k| n_[k] + z[k] * (h[k] - n_[k])).collect();
        cache.push(GruStep {
            x: xt.to_vec(),
            h_prev: std::mem::replace(&mut h, h_new),
            pre,
            z,
            r,
            q,
            n: n_,
        });
    }
    (Tensor::vector(h), Cache::Gru(cache))
}

fn gru_backward<F: Real>(
    wx: &Tensor<F>,
    wh: &Tensor<F>,
    steps: &[GruStep<F>],
    reference: Option<&[GruStep<F>]>,
    grad: &Tensor<F>,
    mut grads: Option<&mut [Tensor<F>]>,
) -> Tensor<F> {
    let u = wh.dims()[1];
    let n = wx.dims()[1];
    let whd = wh.data();
    let sig = |v: F| {
        let s = sigmoid(v);
        s * (F::one() - s)
    };
    let dtanh = |v: F| {
        let t = v.tanh();
        F::one() - t * t
    };
    let mut gx = vec![F::zero(); steps.len() * n];
    let mut m_h = grad.data().to_vec();
    let mut m_a = vec![F::zero(); 3 * u];
    let mut m_q = vec![F::zero(); u];
    for (t, s) in steps.iter().enumerate().rev() {
        let rs = reference.map(|r| &r[t]);
        // pick(x_value, ref_value): midpoint with a reference, the value itself otherwise
        let pick = |v: F, rv: Option<F>| rv.map_or(v, |r| mid(v, r));
        let mut m_hprev = vec![F::zero(); u];
        let mut m_n = vec![F::zero(); u];
        for k in 0..u {
            let zbar = pick(s.z[k], rs.map(|r| r.z[k]));
            let ubar = pick(s.h_prev[k] - s.n[k], rs.map(|r| r.h_prev[k] - r.n[k]));
            m_n[k] = m_h[k] * (F::one() - zbar);
            m_hprev[k] = m_h[k] * zbar;
            let m_z = m_h[k] * ubar;
            let slope_z = match rs {
                None => sig(s.pre[k]),
                Some(r) => secant(s.pre[k], s.z[k], r.pre[k], r.z[k], sig),
            };
            m_a[k] = m_z * slope_z;
        }
        for k in 0..u {
            let j = 2 * u + k;
            let slope_n = match rs {
                None => dtanh(s.pre[j]),
                Some(r) => secant(s.pre[j], s.n[k], r.pre[j], r.n[k], dtanh),
            };
            m_a[j] = m_n[k] * slope_n;
        }
        m_q.fill(F::zero());
        matvec_t_add(&whd[2 * u * u..], u, &m_a[2 * u..], &mut m_q);
        for k in 0..u {
            let j = u + k;
            let m_r = m_q[k] * pick(s.h_prev[k], rs.map(|r| r.h_prev[k]));
            m_hprev[k] += m_q[k] * pick(s.r[k], rs.map(|r| r.r[k]));
            let slope_r = match rs {
                None => sig(s.pre[j]),
                Some(r) => secant(s.pre[j], s.r[k], r.pre[j], r.r[k], sig),
            };
            m_a[j] = m_r * slope_r;
        }
        matvec_t_add(wx.data(), n, &m_a, &mut gx[t * n..(t + 1) * n]);
        matvec_t_add(&whd[..2 * u * u], u, &m_a[..2 * u], &mut m_hprev);
        if let Some(g) = grads.as_deref_mut() {
            outer_add(g[0].data_mut(), &m_a, &s.x);
            outer_add(&mut g[1].data_mut()[..2 * u * u], &m_a[..2 * u], &s.h_prev);
            outer_add(&mut g[1].data_mut()[2 * u * u..], &m_a[2 * u..], &s.q);
            axpy(F::one(), &m_a, g[2].data_mut());
        }
        m_h = m_hprev;
    }
    Tensor::new(vec![steps.len(), n], gx).expect("gru input dims")
}

fn lstm_forward<F: Real>(wx: &Tensor<F>, wh: &Tensor<F>, b: &Tensor<F>, x: &Tensor<F>) -> (Tensor<F>, Cache<F>) {
    let (steps, n) = (x.dims()[0], x.dims()[1]);
    let u = wh.dims()[1];
    let mut h = vec![F::zero(); u];
    let mut c = vec![F::zero(); u];
    let mut cache = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = &x.data()[t * n..(t + 1) * n];
        let mut pre = b.data().to_vec();
        matvec_add(wx.data(), n, xt, &mut pre);
        matvec_add(wh.data(), u, &h, &mut pre);
        let gates: Vec<F> = pre
            .iter()
            .enumerate()
            .map(|(j, &v)| if j / u == 2 { v.tanh() } else { sigmoid(v) })
            .collect();
        let c_new: Vec<F> = (0..u)
            .map(|k| gates[u + k] * c[k] + gates[k] * gates[2 * u + k])
            .collect();
        let tc: Vec<F> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<F> = (0..u).map(|k| gates[3 * u + k] * tc[k]).collect();
        cache.push(LstmStep {
            x: xt.to_vec(),
            h_prev: std::mem::replace(&mut h, h_new),
            c_prev: std::mem::replace(&mut c, c_new.clone()),
            pre,
            gates,
            c: c_new,
            tc,
        });
    }
    (Tensor::vector(h), Cache::Lstm(cache))
}

fn lstm_backward<F: Real>(
    wx: &Tensor<F>,
    wh: &Tensor<F>,
    steps: &[LstmStep<F>],
    reference: Option<&[LstmStep<F>]>,
    grad: &Tensor<F>,
    mut grads: Option<&mut [Tensor<F>]>,
) -> Tensor<F> {
    let u = wh.dims()[1];
    let n = wx.dims()[1];
    let sig = |v: F| {
        let s = sigmoid(v);
        s * (F::one() - s)
    };
    let dtanh = |v: F| {
        let t = v.tanh();
        F::one() - t * t
    };
    let mut gx = vec![F::zero(); steps.len() * n];
    let mut m_h = grad.data().to_vec();
    let mut m_c = vec![F::zero(); u];
    let mut m_a = vec![F::zero(); 4 * u];
    for (t, s) in steps.iter().enumerate().rev() {
        let rs = reference.map(|r| &r[t]);
        let pick = |v: F, rv: Option<F>| rv.map_or(v, |r| mid(v, r));
        let slope = |j: usize| {
            let d = if j / u == 2 { dtanh } else { sig };
            match rs {
                None => d(s.pre[j]),
                Some(r) => secant(s.pre[j], s.gates[j], r.pre[j], r.gates[j], d),
            }
        };
        let mut m_cprev = vec![F::zero(); u];
        for k in 0..u {
            let (i, f, g, o) = (k, u + k, 2 * u + k, 3 * u + k);
            let m_o = m_h[k] * pick(s.tc[k], rs.map(|r| r.tc[k]));
            let m_tc = m_h[k] * pick(s.gates[o], rs.map(|r| r.gates[o]));
            let slope_c = match rs {
                None => dtanh(s.c[k]),
                Some(r) => secant(s.c[k], s.tc[k], r.c[k], r.tc[k], dtanh),
            };
            let mc = m_c[k] + m_tc * slope_c;
            let m_f = mc * pick(s.c_prev[k], rs.map(|r| r.c_prev[k]));
            m_cprev[k] = mc * pick(s.gates[f], rs.map(|r| r.gates[f]));
            let m_i = mc * pick(s.gates[g], rs.map(|r| r.gates[g]));
            let m_g = mc * pick(s.gates[i], rs.map(|r| r.gates[i]));
            m_a[i] = m_i * slope(i);
            m_a[f] = m_f * slope(f);
            m_a[g] = m_g * slope(g);
            m_a[o] = m_o * slope(o);
        }
        let mut m_hprev = vec![F::zero(); u];
        matvec_t_add(wx.data(), n, &m_a, &mut gx[t * n..(t + 1) * n]);
        matvec_t_add(wh.data(), u, &m_a, &mut m_hprev);
        if let Some(g) = grads.as_deref_mut() {
            outer_add(g[0].data_mut(), &m_a, &s.x);
            outer_add(g[1].data_mut(), &m_a, &s.h_prev);
            axpy(F::one(), &m_a, g[2].data_mut());
        }
        m_h = m_hprev;
        m_c = m_cprev;
    }
    Tensor::new(vec![steps.len(), n], gx).expect("lstm input dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max2_shapley_split_is_exact() {
        let cases = [(1.0, 2.0, 0.5, 3.0), (3.0, -1.0, 0.0, 0.0), (2.0, 2.5, 2.5, 2.0)];
        for (a, b, ar, br) in cases {
            let (ma, mb) = max2_multipliers::<f64>(a, b, Some((ar, br)));
            let lhs = ma * (a - ar) + mb * (b - br);
            let rhs = f64::max(a, b) - f64::max(ar, br);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn conv_span_covers_valid_columns() {
        let g = ConvGeom::new(&[1, 5, 7], &[1, 1, 3, 3], 2, 1);
        assert_eq!((g.oh, g.ow), (3, 4));
        for kx in 0..3 {
            let (lo, hi) = g.span(kx, 7, g.ow);
            for ox in 0..g.ow {
                let ix = (ox * 2 + kx) as isize - 1;
                let valid = ix >= 0 && ix < 7;
                assert_eq!(valid, ox >= lo && ox < hi, "kx {kx} ox {ox}");
            }
        }
    }
}
