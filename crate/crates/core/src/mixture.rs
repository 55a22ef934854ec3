//! Complex angular central Gaussian mixture model with annotation-guided EM.
//!
//! Class 0 models noise, classes `1..K` model speakers. The annotations enter
//! twice: the initial posteriors are uniform over the classes active in each
//! frame, and after every E-step the posteriors of inactive classes are set
//! to exactly zero and the remaining ones renormalized. Because the guidance
//! pins each class to its speaker in every frequency bin, no permutation
//! alignment across frequencies is needed.
//!
//! Every frequency bin is an independent EM problem; bins are processed in
//! parallel and the per-bin results are assembled in bin order.

use std::ops::Range;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    add_weighted_outer, cholesky, hermitian_part, inverse_quadratic_form, load_diagonal,
    log_det_from_cholesky, trace,
};
use crate::scalar::{creal, czero, norm_sqr, Real, C};
use crate::signal::Spectrogram;

/// Unit-norm observation vectors, `[frames][bins][channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalObservations<T> {
    pub units: Array3<C<T>>,
    /// `[frames][bins]`; false where the observation had zero norm.
    pub valid: Array2<bool>,
}

impl<T: Real> DirectionalObservations<T> {
    pub fn frames(&self) -> usize {
        self.units.len_of(Axis(0))
    }

    pub fn bins(&self) -> usize {
        self.units.len_of(Axis(1))
    }

    pub fn channels(&self) -> usize {
        self.units.len_of(Axis(2))
    }
}

/// Which classes may be active in each frame, `[classes][frames]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityMask {
    active: Array2<bool>,
}

impl ActivityMask {
    /// Builds a mask from speaker rows; the noise row is prepended as all-true.
    pub fn from_speakers(speakers: ArrayView2<'_, bool>) -> Self {
        let frames = speakers.ncols();
        let mut active = Array2::from_elem((speakers.nrows() + 1, frames), true);
        active.slice_mut(s![1.., ..]).assign(&speakers);
        Self { active }
    }

    /// Wraps a full mask whose row 0 is the noise class.
    pub fn new(active: Array2<bool>) -> Result<Self> {
        if active.nrows() == 0 || active.row(0).iter().any(|a| !a) {
            return Err(Error::ShapeMismatch(
                "activity mask needs an all-true noise row".into(),
            ));
        }
        Ok(Self { active })
    }

    pub fn classes(&self) -> usize {
        self.active.nrows()
    }

    pub fn frames(&self) -> usize {
        self.active.ncols()
    }

    pub fn is_active(&self, class: usize, frame: usize) -> bool {
        self.active[[class, frame]]
    }

    pub fn as_array(&self) -> &Array2<bool> {
        &self.active
    }

    pub fn slice_frames(&self, range: Range<usize>) -> Self {
        Self {
            active: self.active.slice(s![.., range]).to_owned(),
        }
    }
}

/// Mixture weights `[bins][classes]` and shape matrices
/// `[bins][classes][channels][channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams<T> {
    pub weights: Array2<T>,
    pub shapes: Array4<C<T>>,
}

/// Class posteriors `[classes][frames][bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T> {
    pub gamma: Array3<T>,
}

impl<T: Real> Posterior<T> {
    pub fn classes(&self) -> usize {
        self.gamma.len_of(Axis(0))
    }

    pub fn frames(&self) -> usize {
        self.gamma.len_of(Axis(1))
    }

    pub fn bins(&self) -> usize {
        self.gamma.len_of(Axis(2))
    }

    /// `[frames][bins]` mask of one class.
    pub fn class_mask(&self, class: usize) -> ArrayView2<'_, T> {
        self.gamma.index_axis(Axis(0), class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub iterations: usize,
    /// Diagonal loading relative to `trace / D` before every factorization.
    pub eps_load: f64,
    pub weight_floor: f64,
    /// Context frames on each side of the core segment; recorded so callers
    /// can locate the core range when trimming.
    pub context_frames: usize,
    /// Extra iterations run on the core segment alone after trimming the
    /// context. Zero disables the refinement stage.
    pub refine_iterations: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            eps_load: 1e-6,
            weight_floor: 1e-4,
            context_frames: 0,
            refine_iterations: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::BadEmConfig("iterations must be at least 1".into()));
        }
        if !(self.eps_load > 0.0) {
            return Err(Error::BadEmConfig("eps_load must be positive".into()));
        }
        if !(self.weight_floor >= 0.0) || self.weight_floor * classes as f64 >= 1.0 {
            return Err(Error::BadEmConfig(format!(
                "weight floor {} must lie in [0, 1/{classes})",
                self.weight_floor
            )));
        }
        Ok(())
    }
}

/// Result of [`em_fit`].
#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub params: MixtureParams<T>,
    pub posterior: Posterior<T>,
    /// Guided log-likelihood after each iteration, summed over bins.
    pub log_likelihood: Vec<f64>,
}

/// Normalizes every `(t, f)` observation vector to unit length. Zero vectors
/// are replaced by the uniform direction and marked invalid.
pub fn normalize_observations<T: Real>(
    spec: &Spectrogram<T>,
) -> Result<DirectionalObservations<T>> {
    let d = spec.channels();
    if d < 2 {
        return Err(Error::ShapeMismatch(format!(
            "spatial model needs at least 2 channels, got {d}"
        )));
    }
    let (frames, bins) = (spec.frames(), spec.bins());
    let data = spec.data();
    let uniform = creal(T::one() / T::from_count(d).sqrt());
    let mut units = Array3::<C<T>>::zeros((frames, bins, d));
    let mut valid = Array2::from_elem((frames, bins), false);
    for t in 0..frames {
        for f in 0..bins {
            let norm = (0..d).map(|m| norm_sqr(data[[m, t, f]])).sum::<T>().sqrt();
            if norm > T::zero() && norm.is_finite() {
                for m in 0..d {
                    units[[t, f, m]] = data[[m, t, f]] / norm;
                }
                valid[[t, f]] = true;
            } else {
                units.slice_mut(s![t, f, ..]).fill(uniform);
            }
        }
    }
    Ok(DirectionalObservations { units, valid })
}

/// Uniform posteriors over the active classes of each frame, the same in
/// every bin.
pub fn init_posteriors<T: Real>(
    act: &ActivityMask,
    frames: usize,
    bins: usize,
) -> Result<Posterior<T>> {
    if act.frames() != frames {
        return Err(Error::ShapeMismatch(format!(
            "activity covers {} frames, expected {frames}",
            act.frames()
        )));
    }
    let classes = act.classes();
    let mut gamma = Array3::<T>::zeros((classes, frames, bins));
    for t in 0..frames {
        let n_active = (0..classes).filter(|&k| act.is_active(k, t)).count();
        let share = T::one() / T::from_count(n_active.max(1));
        for k in 0..classes {
            if act.is_active(k, t) {
                gamma.slice_mut(s![k, t, ..]).fill(share);
            }
        }
        if n_active == 0 {
            gamma.slice_mut(s![0, t, ..]).fill(T::one());
        }
    }
    Ok(Posterior { gamma })
}

/// Runs guided EM from [`init_posteriors`].
pub fn em_fit<T: Real>(
    obs: &DirectionalObservations<T>,
    act: &ActivityMask,
    cfg: &EmConfig,
) -> Result<EmFit<T>> {
    let init = init_posteriors(act, obs.frames(), obs.bins())?;
    em_fit_from(obs, act, cfg, &init, cfg.iterations)
}

/// Runs `iterations` guided EM rounds starting with an M-step on `init`.
pub fn em_fit_from<T: Real>(
    obs: &DirectionalObservations<T>,
    act: &ActivityMask,
    cfg: &EmConfig,
    init: &Posterior<T>,
    iterations: usize,
) -> Result<EmFit<T>> {
    let classes = act.classes();
    cfg.validate(classes)?;
    if iterations == 0 {
        return Err(Error::BadEmConfig("iterations must be at least 1".into()));
    }
    if act.frames() != obs.frames() {
        return Err(Error::ShapeMismatch(format!(
            "activity covers {} frames, observations {}",
            act.frames(),
            obs.frames()
        )));
    }
    if init.gamma.dim() != (classes, obs.frames(), obs.bins()) {
        return Err(Error::ShapeMismatch("initial posterior shape".into()));
    }
    if obs.channels() < 2 {
        return Err(Error::ShapeMismatch(
            "spatial model needs at least 2 channels".into(),
        ));
    }

    let results: Vec<Result<BinFit<T>>> = (0..obs.bins())
        .into_par_iter()
        .map(|f| {
            fit_bin(
                obs.units.index_axis(Axis(1), f),
                obs.valid.index_axis(Axis(1), f),
                act,
                init.gamma.index_axis(Axis(2), f),
                cfg,
                iterations,
            )
        })
        .collect();

    let (frames, bins, d) = (obs.frames(), obs.bins(), obs.channels());
    let mut weights = Array2::<T>::zeros((bins, classes));
    let mut shapes = Array4::<C<T>>::zeros((bins, classes, d, d));
    let mut gamma = Array3::<T>::zeros((classes, frames, bins));
    let mut log_likelihood = vec![0.0; iterations];
    let mut failure: Option<usize> = None;
    for (f, r) in results.into_iter().enumerate() {
        match r {
            Ok(fit) => {
                weights.row_mut(f).assign(&fit.weights);
                shapes.index_axis_mut(Axis(0), f).assign(&fit.shapes);
                gamma.index_axis_mut(Axis(2), f).assign(&fit.gamma);
                for (acc, v) in log_likelihood.iter_mut().zip(&fit.log_likelihood) {
                    *acc += v;
                }
            }
            Err(Error::EmNumericalFailure { iteration }) => {
                failure = Some(failure.map_or(iteration, |i: usize| i.min(iteration)));
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(iteration) = failure {
        return Err(Error::EmNumericalFailure { iteration });
    }
    Ok(EmFit {
        params: MixtureParams { weights, shapes },
        posterior: Posterior { gamma },
        log_likelihood,
    })
}

/// Restricts posteriors to the frames of the core segment.
pub fn trim_context<T: Real>(p: &Posterior<T>, core: Range<usize>) -> Result<Posterior<T>> {
    if core.start >= core.end || core.end > p.frames() {
        return Err(Error::EmptyCoreSegment);
    }
    Ok(Posterior {
        gamma: p.gamma.slice(s![.., core, ..]).to_owned(),
    })
}

/// Whole frames needed to cover `seconds` of context at the given hop.
pub fn context_frame_count(seconds: f64, sample_rate: u32, shift: usize) -> usize {
    let samples = (seconds * sample_rate as f64).round().max(0.0) as usize;
    samples.div_ceil(shift)
}

struct BinFit<T> {
    weights: Array1<T>,
    shapes: Array3<C<T>>,
    gamma: Array2<T>,
    log_likelihood: Vec<f64>,
}

/// `ln((D-1)!) - D ln π`, the normalizer of the angular central Gaussian.
fn log_normalizer<T: Real>(d: usize) -> T {
    let log_fact: f64 = (1..d).map(|i| (i as f64).ln()).sum();
    T::lit(log_fact - d as f64 * std::f64::consts::PI.ln())
}

/// Water-filling floor: entries below `floor` are raised to it and the rest
/// rescaled so the vector sums to one.
fn floor_weights<T: Real>(w: &mut Array1<T>, floor: T) {
    let k = w.len();
    let total: T = w.iter().copied().sum();
    if !(total > T::zero()) {
        w.fill(T::one() / T::from_count(k));
        return;
    }
    w.mapv_inplace(|v| v / total);
    if floor <= T::zero() {
        return;
    }
    let mut pinned = vec![false; k];
    loop {
        let mut changed = false;
        for i in 0..k {
            if !pinned[i] && w[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        let n_pinned = pinned.iter().filter(|p| **p).count();
        let free_mass: T = (0..k).filter(|&i| !pinned[i]).map(|i| w[i]).sum();
        let budget = T::one() - floor * T::from_count(n_pinned);
        for i in 0..k {
            if pinned[i] {
                w[i] = floor;
            } else if free_mass > T::zero() {
                w[i] = w[i] * budget / free_mass;
            }
        }
        if !changed {
            break;
        }
    }
}

fn fit_bin<T: Real>(
    z: ArrayView2<'_, C<T>>,
    valid: ArrayView1<'_, bool>,
    act: &ActivityMask,
    init: ArrayView2<'_, T>,
    cfg: &EmConfig,
    iterations: usize,
) -> Result<BinFit<T>> {
    let (frames, d) = z.dim();
    let classes = act.classes();
    let dt = T::from_count(d);
    let eps = T::lit(cfg.eps_load);
    let floor = T::lit(cfg.weight_floor);
    let log_norm = log_normalizer::<T>(d);
    let tiny = T::min_positive_value();

    let mut gamma = init.to_owned();
    // Quadratic forms z^H B^{-1} z under the previous shapes; the identity
    // shape (trace D) gives 1 for unit vectors.
    let mut quad = Array2::<T>::from_elem((classes, frames), T::one());
    let mut weights = Array1::<T>::zeros(classes);
    let mut shapes = Array3::<C<T>>::zeros((classes, d, d));
    let mut history = Vec::with_capacity(iterations);
    let mut scratch = vec![czero::<T>(); d];
    let mut log_terms = vec![T::zero(); classes];

    // Log-determinants of the accepted shapes.
    let mut log_dets = vec![T::zero(); classes];
    let mut candidate_quad = vec![T::zero(); frames];

    for iteration in 0..iterations {
        // M-step.
        for k in 0..classes {
            let mut acc = Array2::<C<T>>::zeros((d, d));
            let mut mass = T::zero();
            for t in 0..frames {
                let g = gamma[[k, t]];
                if !valid[t] || g <= T::zero() {
                    continue;
                }
                add_weighted_outer(&mut acc, z.row(t), g / quad[[k, t]].max(tiny));
                mass += g;
            }
            weights[k] = mass;
            let raw = if mass > T::zero() {
                hermitian_part(acc.view()).mapv(|v| v * (dt / mass))
            } else {
                Array2::from_shape_fn(
                    (d, d),
                    |(i, j)| if i == j { creal(T::one()) } else { czero() },
                )
            };
            let loaded = load_diagonal(raw.view(), eps);
            let tr = trace(loaded.view()).re;
            if !(tr > T::zero() && tr.is_finite()) {
                return Err(Error::EmNumericalFailure { iteration });
            }
            let shape = loaded.mapv(|v| v * (dt / tr));
            let l = cholesky(shape.view()).map_err(|_| Error::EmNumericalFailure { iteration })?;
            let log_det = log_det_from_cholesky(l.view());
            // The fixed-point step only increases the expected log-likelihood
            // of the class up to the diagonal loading; when loading undoes
            // the gain, the previous shape is kept so EM stays monotone.
            let mut gain = T::zero();
            for t in 0..frames {
                if !act.is_active(k, t) {
                    continue;
                }
                let q = inverse_quadratic_form(l.view(), z.row(t), &mut scratch).max(tiny);
                candidate_quad[t] = q;
                let g = gamma[[k, t]];
                if iteration > 0 && valid[t] && g > T::zero() {
                    gain += g * ((log_dets[k] - log_det) + dt * (quad[[k, t]].ln() - q.ln()));
                }
            }
            if iteration == 0 || gain >= T::zero() {
                shapes.index_axis_mut(Axis(0), k).assign(&shape);
                log_dets[k] = log_det;
                for t in 0..frames {
                    if act.is_active(k, t) {
                        quad[[k, t]] = candidate_quad[t];
                    }
                }
            }
        }
        floor_weights(&mut weights, floor);

        // E-step.
        let mut ll = T::zero();
        for t in 0..frames {
            let mut best = T::neg_infinity();
            for k in 0..classes {
                if !act.is_active(k, t) {
                    log_terms[k] = T::neg_infinity();
                    continue;
                }
                let v = weights[k].ln() - log_dets[k] - dt * quad[[k, t]].ln();
                if !v.is_finite() {
                    return Err(Error::EmNumericalFailure { iteration });
                }
                log_terms[k] = v;
                best = best.max(v);
            }
            if best == T::neg_infinity() {
                // Nothing active survives clamping: give the frame to noise.
                for k in 0..classes {
                    gamma[[k, t]] = if k == 0 { T::one() } else { T::zero() };
                }
                continue;
            }
            let sum: T = log_terms
                .iter()
                .map(|&v| {
                    if v == T::neg_infinity() {
                        T::zero()
                    } else {
                        (v - best).exp()
                    }
                })
                .sum();
            for k in 0..classes {
                gamma[[k, t]] = if log_terms[k] == T::neg_infinity() {
                    T::zero()
                } else {
                    (log_terms[k] - best).exp() / sum
                };
            }
            if valid[t] {
                ll += best + sum.ln() + log_norm;
            }
        }
        if !ll.is_finite() {
            return Err(Error::EmNumericalFailure { iteration });
        }
        history.push(ll.as_f64());
    }

    Ok(BinFit {
        weights,
        shapes,
        gamma,
        log_likelihood: history,
    })
}

/// Guided log-likelihood of `obs` under `params`, evaluated directly from the
/// density (no EM bookkeeping). Only valid observations count.
pub fn guided_log_likelihood<T: Real>(
    obs: &DirectionalObservations<T>,
    act: &ActivityMask,
    params: &MixtureParams<T>,
) -> Result<f64> {
    let d = obs.channels();
    let dt = T::from_count(d);
    let log_norm = log_normalizer::<T>(d);
    let mut total = 0.0;
    let mut scratch = vec![czero::<T>(); d];
    for f in 0..obs.bins() {
        let mut factors = Vec::new();
        for k in 0..act.classes() {
            let l = cholesky(params.shapes.slice(s![f, k, .., ..]))?;
            let ld = log_det_from_cholesky(l.view());
            factors.push((l, ld));
        }
        for t in 0..obs.frames() {
            if !obs.valid[[t, f]] {
                continue;
            }
            let z = obs.units.slice(s![t, f, ..]);
            let mut density = 0.0;
            for (k, (l, ld)) in factors.iter().enumerate() {
                if !act.is_active(k, t) {
                    continue;
                }
                let q = inverse_quadratic_form(l.view(), z, &mut scratch);
                density += (params.weights[[f, k]].ln() - *ld - dt * q.ln() + log_norm)
                    .as_f64()
                    .exp();
            }
            total += density.ln();
        }
    }
    Ok(total)
}
