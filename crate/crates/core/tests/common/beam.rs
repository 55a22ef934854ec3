use gss_core::PsdSet;
use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64 as Cx;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

pub fn cg(rng: &mut ChaCha8Rng) -> Cx {
    Cx::new(
        rng.random::<f64>() * 2.0 - 1.0,
        rng.random::<f64>() * 2.0 - 1.0,
    )
}

/// `A A^H + δ I` with a random square `A`.
pub fn random_pd(rng: &mut ChaCha8Rng, d: usize, delta: f64) -> Array2<Cx> {
    let a = Array2::from_shape_fn((d, d), |_| cg(rng));
    let mut out = Array2::<Cx>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            out[[i, j]] = (0..d).map(|k| a[[i, k]] * a[[j, k]].conj()).sum();
        }
        out[[i, i]] += delta;
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &Array2<Cx>) -> Array2<Cx> {
    let n = a.nrows();
    let mut m = Array2::<Cx>::zeros((n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = a[[i, j]];
        }
        m[[i, n + i]] = Cx::new(1.0, 0.0);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[[x, col]].norm().total_cmp(&m[[y, col]].norm()))
            .unwrap();
        for j in 0..2 * n {
            m.swap([col, j], [pivot, j]);
        }
        let p = m[[col, col]];
        for j in 0..2 * n {
            m[[col, j]] /= p;
        }
        for i in 0..n {
            if i != col {
                let factor = m[[i, col]];
                for j in 0..2 * n {
                    let v = m[[col, j]];
                    m[[i, j]] -= factor * v;
                }
            }
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| m[[i, n + j]])
}

pub fn loaded(a: &Array2<Cx>, eps: f64) -> Array2<Cx> {
    let d = a.nrows();
    let tr: f64 = (0..d).map(|i| a[[i, i]].re).sum();
    let mut out = a.clone();
    for i in 0..d {
        out[[i, i]] += eps * tr / d as f64;
    }
    out
}

/// Souden MVDR from an explicit inverse.
pub fn mvdr_oracle(
    target: &Array2<Cx>,
    distortion: &Array2<Cx>,
    reference: usize,
    eps: f64,
) -> Array1<Cx> {
    let inv = gauss_jordan_inverse(&loaded(distortion, eps));
    let m = inv.dot(target);
    let tr: Cx = (0..m.nrows()).map(|i| m[[i, i]]).sum();
    m.column(reference).mapv(|v| v / tr)
}

pub fn psd_set(target: Vec<Array2<Cx>>, distortion: Vec<Array2<Cx>>) -> PsdSet<f64> {
    let d = target[0].nrows();
    let bins = target.len();
    let mut t = Array3::<Cx>::zeros((bins, d, d));
    let mut n = Array3::<Cx>::zeros((bins, d, d));
    for f in 0..bins {
        t.index_axis_mut(ndarray::Axis(0), f).assign(&target[f]);
        n.index_axis_mut(ndarray::Axis(0), f).assign(&distortion[f]);
    }
    PsdSet {
        target: t,
        distortion: n,
        frame_count: 0,
        fallback_bins: vec![],
    }
}
