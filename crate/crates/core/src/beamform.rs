//! Source extraction: mask-weighted spatial covariances, MVDR beamforming in
//! the Souden formulation, SNR-based reference channel selection, blind
//! analytic normalization and optional target-mask multiplication.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    add_weighted_outer, cholesky, cholesky_solve, hermitian_part, load_diagonal, matvec,
    quadratic_form,
};
use crate::mixture::Posterior;
use crate::scalar::{czero, norm_sqr, Real, C};
use crate::signal::Spectrogram;

/// Target and distortion covariances per bin, `[bins][D][D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSet<T> {
    pub target: Array3<C<T>>,
    pub distortion: Array3<C<T>>,
    /// Frames the statistics were accumulated over.
    pub frame_count: usize,
    /// Bins where a mask had no weight and the unweighted average was used.
    pub fallback_bins: Vec<usize>,
}

impl<T: Real> PsdSet<T> {
    pub fn bins(&self) -> usize {
        self.target.len_of(Axis(0))
    }

    pub fn channels(&self) -> usize {
        self.target.len_of(Axis(1))
    }

    pub fn target_at(&self, f: usize) -> ArrayView2<'_, C<T>> {
        self.target.index_axis(Axis(0), f)
    }

    pub fn distortion_at(&self, f: usize) -> ArrayView2<'_, C<T>> {
        self.distortion.index_axis(Axis(0), f)
    }

    /// Both covariances multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            target: self.target.mapv(|v| v * factor),
            distortion: self.distortion.mapv(|v| v * factor),
            frame_count: self.frame_count,
            fallback_bins: self.fallback_bins.clone(),
        }
    }
}

/// Beamformer coefficients `[bins][D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights<T> {
    pub w: Array2<C<T>>,
    pub reference: usize,
    /// Bins whose target covariance was degenerate; their weight is the
    /// reference selector.
    pub degenerate_bins: Vec<usize>,
}

/// How per-bin SNRs are pooled when scoring reference candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SnrAveraging {
    #[default]
    Linear,
    Decibel,
}

/// Loading applied to the distortion covariance before inversion.
pub const DEFAULT_LOADING: f64 = 1e-6;
const DEGENERATE_TRACE: f64 = 1e-12;
const BAN_FLOOR: f64 = 1e-12;

/// Mask-weighted covariances of `spec` for `target_class` against all other
/// classes (noise and interfering speakers).
pub fn estimate_psds<T: Real>(
    spec: &Spectrogram<T>,
    post: &Posterior<T>,
    target_class: usize,
) -> Result<PsdSet<T>> {
    if post.frames() != spec.frames() || post.bins() != spec.bins() {
        return Err(Error::ShapeMismatch(format!(
            "posterior {}x{} vs spectrogram {}x{} (frames x bins)",
            post.frames(),
            post.bins(),
            spec.frames(),
            spec.bins()
        )));
    }
    if target_class == 0 || target_class >= post.classes() {
        return Err(Error::ShapeMismatch(format!(
            "target class {target_class} outside 1..{}",
            post.classes()
        )));
    }
    let (d, frames, bins) = (spec.channels(), spec.frames(), spec.bins());
    let data = spec.data();
    let mut target = Array3::<C<T>>::zeros((bins, d, d));
    let mut distortion = Array3::<C<T>>::zeros((bins, d, d));
    let mut fallback_bins = Vec::new();
    let mut y = Array1::<C<T>>::zeros(d);
    for f in 0..bins {
        let mut acc_x = Array2::<C<T>>::zeros((d, d));
        let mut acc_n = Array2::<C<T>>::zeros((d, d));
        let mut acc_u = Array2::<C<T>>::zeros((d, d));
        let (mut mass_x, mut mass_n) = (T::zero(), T::zero());
        for t in 0..frames {
            for m in 0..d {
                y[m] = data[[m, t, f]];
            }
            let gx = post.gamma[[target_class, t, f]];
            let gn: T = (0..post.classes())
                .filter(|&k| k != target_class)
                .map(|k| post.gamma[[k, t, f]])
                .sum();
            add_weighted_outer(&mut acc_x, y.view(), gx);
            add_weighted_outer(&mut acc_n, y.view(), gn);
            add_weighted_outer(&mut acc_u, y.view(), T::one());
            mass_x += gx;
            mass_n += gn;
        }
        let unweighted = acc_u.mapv(|v| v / T::from_count(frames.max(1)));
        let mut fallback = false;
        let phi_x = if mass_x > T::zero() {
            acc_x.mapv(|v| v / mass_x)
        } else {
            fallback = true;
            unweighted.clone()
        };
        let phi_n = if mass_n > T::zero() {
            acc_n.mapv(|v| v / mass_n)
        } else {
            fallback = true;
            unweighted
        };
        if fallback {
            fallback_bins.push(f);
        }
        target
            .index_axis_mut(Axis(0), f)
            .assign(&hermitian_part(phi_x.view()));
        distortion
            .index_axis_mut(Axis(0), f)
            .assign(&hermitian_part(phi_n.view()));
    }
    Ok(PsdSet {
        target,
        distortion,
        frame_count: frames,
        fallback_bins,
    })
}

/// `Φ_nn^{-1} Φ_xx / trace(Φ_nn^{-1} Φ_xx)` for one bin, or `None` when the
/// trace is degenerate.
fn souden_matrix<T: Real>(
    target: ArrayView2<'_, C<T>>,
    distortion: ArrayView2<'_, C<T>>,
    eps: T,
) -> Option<Array2<C<T>>> {
    let loaded = load_diagonal(distortion, eps);
    let l = cholesky(loaded.view()).ok()?;
    let x = cholesky_solve(l.view(), target);
    let tr = x.diag().iter().fold(czero::<T>(), |a, &v| a + v);
    if !(tr.re > T::lit(DEGENERATE_TRACE)) || !tr.re.is_finite() {
        return None;
    }
    Some(x.mapv(|v| v / tr))
}

/// MVDR weights with `eps * trace / D` loading on the distortion covariance.
pub fn mvdr_souden<T: Real>(
    psd: &PsdSet<T>,
    reference: usize,
    eps: f64,
) -> Result<BeamformerWeights<T>> {
    let d = psd.channels();
    if reference >= d {
        return Err(Error::ShapeMismatch(format!(
            "reference {reference} outside 0..{d}"
        )));
    }
    let eps = T::lit(eps);
    let mut w = Array2::<C<T>>::zeros((psd.bins(), d));
    let mut degenerate_bins = Vec::new();
    for f in 0..psd.bins() {
        match souden_matrix(psd.target_at(f), psd.distortion_at(f), eps) {
            Some(m) => w.row_mut(f).assign(&m.column(reference)),
            None => {
                w[[f, reference]] = C::new(T::one(), T::zero());
                degenerate_bins.push(f);
            }
        }
    }
    Ok(BeamformerWeights {
        w,
        reference,
        degenerate_bins,
    })
}

/// Output SNR `w^H Φ_xx w / w^H Φ_nn w` of one bin.
pub fn bin_snr<T: Real>(
    w: ArrayView1<'_, C<T>>,
    target: ArrayView2<'_, C<T>>,
    distortion: ArrayView2<'_, C<T>>,
) -> T {
    let num = quadratic_form(target, w).max(T::zero());
    let den = quadratic_form(distortion, w).max(T::min_positive_value());
    num / den
}

/// Reference channel maximizing the frequency-averaged output SNR of the
/// MVDR beamformer; ties go to the lowest index.
pub fn select_reference<T: Real>(psd: &PsdSet<T>, eps: f64, averaging: SnrAveraging) -> usize {
    let d = psd.channels();
    let eps_t = T::lit(eps);
    let mut scores = vec![T::zero(); d];
    for f in 0..psd.bins() {
        let (target, distortion) = (psd.target_at(f), psd.distortion_at(f));
        let m = souden_matrix(target, distortion, eps_t);
        for (r, score) in scores.iter_mut().enumerate() {
            let w = match &m {
                Some(m) => m.column(r).to_owned(),
                None => {
                    let mut e = Array1::<C<T>>::zeros(d);
                    e[r] = C::new(T::one(), T::zero());
                    e
                }
            };
            let snr = bin_snr(w.view(), target, distortion);
            *score += match averaging {
                SnrAveraging::Linear => snr,
                SnrAveraging::Decibel => T::lit(10.0) * snr.max(T::min_positive_value()).log10(),
            };
        }
    }
    let bins = T::from_count(psd.bins().max(1));
    for score in scores.iter_mut() {
        *score /= bins;
    }
    let mut best = 0;
    for r in 1..d {
        if scores[r] > scores[best] {
            best = r;
        }
    }
    best
}

/// Blind analytic normalization gain `sqrt(w^H Φ_nn Φ_nn w / D) / (w^H Φ_nn w)`.
pub fn ban_gain<T: Real>(w: ArrayView1<'_, C<T>>, distortion: ArrayView2<'_, C<T>>) -> T {
    let d = T::from_count(w.len());
    let pw = matvec(distortion, w);
    let num = (pw.iter().map(|&v| norm_sqr(v)).sum::<T>() / d).sqrt();
    let den = quadratic_form(distortion, w).abs().max(T::lit(BAN_FLOOR));
    num / den
}

/// Scales every bin's weights by its [`ban_gain`].
pub fn ban_postfilter<T: Real>(w: &BeamformerWeights<T>, psd: &PsdSet<T>) -> BeamformerWeights<T> {
    let mut out = w.clone();
    for f in 0..w.w.nrows() {
        let g = ban_gain(w.w.row(f), psd.distortion_at(f));
        out.w.row_mut(f).mapv_inplace(|v| v * g);
    }
    out
}

/// `w[f]^H y[t, f]` for every frame and bin.
pub fn apply_beamformer<T: Real>(
    spec: &Spectrogram<T>,
    w: &BeamformerWeights<T>,
) -> Result<Spectrogram<T>> {
    if w.w.dim() != (spec.bins(), spec.channels()) {
        return Err(Error::ShapeMismatch(format!(
            "weights {:?} vs spectrogram bins x channels ({}, {})",
            w.w.dim(),
            spec.bins(),
            spec.channels()
        )));
    }
    let data = spec.data();
    let mut out = Array3::<C<T>>::zeros((1, spec.frames(), spec.bins()));
    for t in 0..spec.frames() {
        for f in 0..spec.bins() {
            let mut acc = czero::<T>();
            for m in 0..spec.channels() {
                acc += w.w[[f, m]].conj() * data[[m, t, f]];
            }
            out[[0, t, f]] = acc;
        }
    }
    Ok(Spectrogram::from_parts_unchecked(
        out,
        *spec.config(),
        spec.sample_rate(),
    ))
}

/// Multiplies a single-channel estimate by `max(γ_target, floor)`.
pub fn apply_target_mask<T: Real>(
    est: &Spectrogram<T>,
    post: &Posterior<T>,
    target_class: usize,
    floor: T,
) -> Result<Spectrogram<T>> {
    if post.frames() != est.frames() || post.bins() != est.bins() || target_class >= post.classes()
    {
        return Err(Error::ShapeMismatch("mask and estimate disagree".into()));
    }
    let mask = post.class_mask(target_class);
    let mut out = est.clone();
    for c in 0..est.channels() {
        let mut plane = out.data_mut().index_axis_mut(Axis(0), c);
        plane.zip_mut_with(&mask, |v, &g| *v *= g.max(floor));
    }
    Ok(out)
}

/// Unweighted sample covariance of bin `f`.
pub fn frame_covariance<T: Real>(spec: &Spectrogram<T>, f: usize) -> Array2<C<T>> {
    let d = spec.channels();
    let mut acc = Array2::<C<T>>::zeros((d, d));
    for t in 0..spec.frames() {
        add_weighted_outer(&mut acc, spec.data().slice(s![.., t, f]), T::one());
    }
    acc.mapv(|v| v / T::from_count(spec.frames().max(1)))
}
