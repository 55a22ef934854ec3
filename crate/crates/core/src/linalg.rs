//! Small dense complex linear algebra for Hermitian positive definite systems.
//!
//! Matrices here are at most a few hundred rows (the stacked WPE correlation
//! matrix), so plain Cholesky with row-major loops is sufficient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::{creal, czero, norm_sqr, Real, C};

/// Sum of the diagonal.
pub fn trace<T: Real>(a: ArrayView2<'_, C<T>>) -> C<T> {
    a.diag().iter().fold(czero(), |acc, &x| acc + x)
}

/// `(A + A^H) / 2`.
pub fn hermitian_part<T: Real>(a: ArrayView2<'_, C<T>>) -> Array2<C<T>> {
    let n = a.nrows();
    let half = T::lit(0.5);
    Array2::from_shape_fn((n, n), |(i, j)| (a[[i, j]] + a[[j, i]].conj()) * half)
}

/// Largest `|A - A^H|` entry.
pub fn max_asymmetry<T: Real>(a: ArrayView2<'_, C<T>>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Adds `eps * (trace / n) * I`. A matrix with non-positive trace is loaded
/// with `eps * I` so the result is always invertible.
pub fn load_diagonal<T: Real>(a: ArrayView2<'_, C<T>>, eps: T) -> Array2<C<T>> {
    let n = a.nrows();
    let scale = trace(a).re / T::from_count(n);
    let scale = if scale > T::zero() && scale.is_finite() {
        scale
    } else {
        T::one()
    };
    let mut out = a.to_owned();
    let load = creal(eps * scale);
    for i in 0..n {
        out[[i, i]] += load;
    }
    out
}

/// Lower-triangular factor `L` with `A = L L^H`. Only the lower triangle of
/// `a` is read.
pub fn cholesky<T: Real>(a: ArrayView2<'_, C<T>>) -> Result<Array2<C<T>>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky of {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<C<T>>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= norm_sqr(l[[j, k]]);
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        l[[j, j]] = creal(djj);
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L y = b` in place.
fn forward_substitute<T: Real>(l: ArrayView2<'_, C<T>>, b: &mut [C<T>]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]].re;
    }
}

/// Solves `L^H x = y` in place.
fn backward_substitute<T: Real>(l: ArrayView2<'_, C<T>>, b: &mut [C<T>]) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[[k, i]].conj() * b[k];
        }
        b[i] = s / l[[i, i]].re;
    }
}

/// Solves `A X = B` given the Cholesky factor of `A`.
pub fn cholesky_solve<T: Real>(l: ArrayView2<'_, C<T>>, b: ArrayView2<'_, C<T>>) -> Array2<C<T>> {
    let mut x = b.to_owned();
    let mut col = vec![czero(); l.nrows()];
    for j in 0..b.ncols() {
        for i in 0..col.len() {
            col[i] = b[[i, j]];
        }
        forward_substitute(l, &mut col);
        backward_substitute(l, &mut col);
        for i in 0..col.len() {
            x[[i, j]] = col[i];
        }
    }
    x
}

/// `log det A` from its Cholesky factor.
pub fn log_det_from_cholesky<T: Real>(l: ArrayView2<'_, C<T>>) -> T {
    let two = T::lit(2.0);
    l.diag().iter().map(|d| two * d.re.ln()).sum()
}

/// `z^H A^{-1} z` from the Cholesky factor of `A`, using `scratch` as
/// workspace (length `n`).
pub fn inverse_quadratic_form<T: Real>(
    l: ArrayView2<'_, C<T>>,
    z: ArrayView1<'_, C<T>>,
    scratch: &mut [C<T>],
) -> T {
    for (s, &v) in scratch.iter_mut().zip(z.iter()) {
        *s = v;
    }
    forward_substitute(l, scratch);
    scratch.iter().map(|&v| norm_sqr(v)).sum()
}

/// Inverse of a Hermitian positive definite matrix.
pub fn inverse_hpd<T: Real>(a: ArrayView2<'_, C<T>>) -> Result<Array2<C<T>>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let eye = Array2::from_shape_fn(
        (n, n),
        |(i, j)| if i == j { creal(T::one()) } else { czero() },
    );
    Ok(hermitian_part(cholesky_solve(l.view(), eye.view()).view()))
}

/// `A x`.
pub fn matvec<T: Real>(a: ArrayView2<'_, C<T>>, x: ArrayView1<'_, C<T>>) -> Array1<C<T>> {
    Array1::from_shape_fn(a.nrows(), |i| {
        a.row(i)
            .iter()
            .zip(x.iter())
            .fold(czero(), |acc, (&aij, &xj)| acc + aij * xj)
    })
}

/// `x^H y`.
pub fn dotc<T: Real>(x: ArrayView1<'_, C<T>>, y: ArrayView1<'_, C<T>>) -> C<T> {
    x.iter()
        .zip(y.iter())
        .fold(czero(), |acc, (&a, &b)| acc + a.conj() * b)
}

/// `x^H A x` (real part; `A` Hermitian).
pub fn quadratic_form<T: Real>(a: ArrayView2<'_, C<T>>, x: ArrayView1<'_, C<T>>) -> T {
    dotc(x, matvec(a, x).view()).re
}

/// `A += w * x x^H`.
pub fn add_weighted_outer<T: Real>(a: &mut Array2<C<T>>, x: ArrayView1<'_, C<T>>, w: T) {
    let n = x.len();
    for i in 0..n {
        let xi = x[i] * w;
        for j in 0..n {
            a[[i, j]] += xi * x[j].conj();
        }
    }
}
