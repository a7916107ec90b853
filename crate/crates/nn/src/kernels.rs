//! Inner loops. Eight independent accumulators let LLVM vectorize the
//! reductions without reassociating floating point sums.

use crate::Real;

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y[r] += W[r, :] . x` for a row-major `rows x cols` matrix.
#[inline]
pub(crate) fn matvec_add<F: Real>(w: &[F], cols: usize, x: &[F], y: &mut [F]) {
    debug_assert_eq!(w.len(), cols * y.len());
    for (row, out) in w.chunks_exact(cols).zip(y.iter_mut()) {
        *out += dot(row, x);
    }
}

/// `y += k * x`
#[inline]
pub(crate) fn axpy<F: Real>(k: F, x: &[F], y: &mut [F]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += k * v;
    }
}

/// `out[c] += sum_r W[r, c] g[r]`
#[inline]
pub(crate) fn matvec_t_add<F: Real>(w: &[F], cols: usize, g: &[F], out: &mut [F]) {
    debug_assert_eq!(w.len(), cols * g.len());
    for (row, &gr) in w.chunks_exact(cols).zip(g) {
        if gr != F::zero() {
            axpy(gr, row, out);
        }
    }
}

/// `dW[r, :] += g[r] * x`
#[inline]
pub(crate) fn outer_add<F: Real>(dw: &mut [F], g: &[F], x: &[F]) {
    let cols = x.len();
    for (row, &gr) in dw.chunks_exact_mut(cols).zip(g) {
        if gr != F::zero() {
            axpy(gr, x, row);
        }
    }
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
pub(crate) fn mid<F: Real>(a: F, b: F) -> F {
    (a + b) * F::of(0.5)
}

/// Secant slope of an elementwise function between an input and its
/// reference, falling back to the analytic derivative for tiny deltas.
#[inline]
pub(crate) fn secant<F: Real>(x: F, y: F, xr: F, yr: F, deriv: impl Fn(F) -> F) -> F {
    let dx = x - xr;
    if dx.abs() > F::secant_floor() {
        (y - yr) / dx
    } else {
        deriv(mid(x, xr))
    }
}
