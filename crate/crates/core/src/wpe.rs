//! Multiple-input multiple-output weighted prediction error dereverberation.
//!
//! Each frequency bin is an independent problem. With `y_t` the `M`-channel
//! observation and `ỹ_t` the stack of the `taps` frames
//! `y_{t-delay}, …, y_{t-delay-taps+1}`, the late reverberation is predicted
//! as `G^H ỹ_t` and subtracted. `G` is the weighted least-squares solution
//! with weights `1 / λ_t`, where `λ_t` is the power of the current estimate
//! averaged over channels (and optionally neighbouring frames). Estimation of
//! `G` and `λ` alternates for `iterations` rounds.

use ndarray::{Array1, Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, load_diagonal};
use crate::scalar::{czero, norm_sqr, Real, C};
use crate::signal::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WpeConfig {
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    /// Half-width, in frames, of the power smoothing window.
    pub psd_context: usize,
    /// Diagonal loading relative to `trace / n` of the correlation matrix.
    pub eps: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            delay: 2,
            iterations: 3,
            psd_context: 0,
            eps: 1e-10,
        }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return Err(Error::BadWpeConfig(
                "taps, delay and iterations must all be at least 1".into(),
            ));
        }
        if !(self.eps > 0.0) {
            return Err(Error::BadWpeConfig("eps must be positive".into()));
        }
        Ok(())
    }

    /// First frame with a complete prediction history. Earlier frames are
    /// passed through unchanged.
    pub fn first_filtered_frame(&self) -> usize {
        self.delay + self.taps
    }
}

/// Dereverberated spectrogram plus the per-bin objective after each round.
#[derive(Debug, Clone)]
pub struct WpeOutput<T> {
    pub spectrogram: Spectrogram<T>,
    /// `[bins][iterations + 1]`; column 0 is the objective of the input.
    pub objective: Array2<f64>,
}

/// Dereverberates `spec` in place of its late reverberation.
pub fn wpe_dereverberate<T: Real>(
    spec: &Spectrogram<T>,
    cfg: &WpeConfig,
) -> Result<Spectrogram<T>> {
    wpe_dereverberate_traced(spec, cfg).map(|o| o.spectrogram)
}

/// Same as [`wpe_dereverberate`], also returning the objective history
/// `Σ_t (Σ_m |x_{t,m}|² / λ_t + M ln λ_t)` over the filtered frames.
pub fn wpe_dereverberate_traced<T: Real>(
    spec: &Spectrogram<T>,
    cfg: &WpeConfig,
) -> Result<WpeOutput<T>> {
    cfg.validate()?;
    let frames = spec.frames();
    let required = cfg.first_filtered_frame();
    if frames <= required {
        return Err(Error::SegmentTooShort { frames, required });
    }
    let data = spec.data();
    let per_bin: Vec<(Array2<C<T>>, Vec<f64>)> = (0..spec.bins())
        .into_par_iter()
        .map(|f| {
            let y = data.index_axis(Axis(2), f).to_owned();
            wpe_bin(&y, cfg)
        })
        .collect();

    let mut out = Array3::<C<T>>::zeros(data.raw_dim());
    let mut objective = Array2::<f64>::zeros((spec.bins(), cfg.iterations + 1));
    for (f, (x, obj)) in per_bin.into_iter().enumerate() {
        out.index_axis_mut(Axis(2), f).assign(&x);
        for (i, v) in obj.into_iter().enumerate() {
            objective[[f, i]] = v;
        }
    }
    Ok(WpeOutput {
        spectrogram: Spectrogram::from_parts_unchecked(out, *spec.config(), spec.sample_rate()),
        objective,
    })
}

/// Per-frame power averaged over channels and the smoothing window, floored.
fn frame_power<T: Real>(x: &Array2<C<T>>, context: usize, floor: T) -> Vec<T> {
    let (channels, frames) = x.dim();
    let raw: Vec<T> = (0..frames)
        .map(|t| (0..channels).map(|m| norm_sqr(x[[m, t]])).sum::<T>() / T::from_count(channels))
        .collect();
    (0..frames)
        .map(|t| {
            let lo = t.saturating_sub(context);
            let hi = (t + context + 1).min(frames);
            let mean = raw[lo..hi].iter().copied().sum::<T>() / T::from_count(hi - lo);
            mean.max(floor)
        })
        .collect()
}

fn objective<T: Real>(x: &Array2<C<T>>, lambda: &[T], start: usize) -> f64 {
    let channels = T::from_count(x.nrows());
    (start..x.ncols())
        .map(|t| {
            let energy: T = (0..x.nrows()).map(|m| norm_sqr(x[[m, t]])).sum();
            (energy / lambda[t] + channels * lambda[t].ln()).as_f64()
        })
        .sum()
}

fn wpe_bin<T: Real>(y: &Array2<C<T>>, cfg: &WpeConfig) -> (Array2<C<T>>, Vec<f64>) {
    let (channels, frames) = y.dim();
    let start = cfg.first_filtered_frame();
    let order = channels * cfg.taps;

    let mean_power = y.iter().map(|&z| norm_sqr(z)).sum::<T>() / T::from_count(y.len());
    if !(mean_power > T::zero()) {
        return (y.clone(), vec![0.0; cfg.iterations + 1]);
    }
    let floor = T::lit(1e-10) * mean_power;

    // Delayed stack per filtered frame: element m + channels * k holds
    // y[m, t - delay - k].
    let stacks: Vec<Array1<C<T>>> = (start..frames)
        .map(|t| {
            Array1::from_shape_fn(order, |i| {
                let (m, k) = (i % channels, i / channels);
                y[[m, t - cfg.delay - k]]
            })
        })
        .collect();

    let mut x = y.clone();
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let lambda = frame_power(&x, cfg.psd_context, floor);
    history.push(objective(&x, &lambda, start));

    let eps = T::lit(cfg.eps);
    for _ in 0..cfg.iterations {
        let lambda = frame_power(&x, cfg.psd_context, floor);
        let mut corr = Array2::<C<T>>::zeros((order, order));
        let mut cross = Array2::<C<T>>::zeros((order, channels));
        for (i, stack) in stacks.iter().enumerate() {
            let t = start + i;
            let w = T::one() / lambda[t];
            for a in 0..order {
                let sa = stack[a] * w;
                for b in 0..=a {
                    corr[[a, b]] += sa * stack[b].conj();
                }
                for m in 0..channels {
                    cross[[a, m]] += sa * y[[m, t]].conj();
                }
            }
        }
        for a in 0..order {
            for b in 0..a {
                corr[[b, a]] = corr[[a, b]].conj();
            }
        }
        let loaded = load_diagonal(corr.view(), eps);
        let filter = match cholesky(loaded.view()) {
            Ok(l) => cholesky_solve(l.view(), cross.view()),
            // Loading keeps the matrix positive definite for finite input.
            Err(_) => Array2::zeros((order, channels)),
        };
        for (i, stack) in stacks.iter().enumerate() {
            let t = start + i;
            for m in 0..channels {
                let mut pred = czero::<T>();
                for a in 0..order {
                    pred += filter[[a, m]].conj() * stack[a];
                }
                x[[m, t]] = y[[m, t]] - pred;
            }
        }
        let lambda = frame_power(&x, cfg.psd_context, floor);
        history.push(objective(&x, &lambda, start));
    }
    (x, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::StftConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cgauss(rng: &mut ChaCha8Rng) -> C<f64> {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn spec_from(data: Array3<C<f64>>) -> Spectrogram<f64> {
        let cfg = StftConfig {
            fft_size: 2 * (data.len_of(Axis(2)) - 1),
            shift: 1,
            ..StftConfig::default()
        };
        Spectrogram::new(data, cfg, 16000).unwrap()
    }

    #[test]
    fn zero_input_is_fixed_point() {
        let s = spec_from(Array3::zeros((2, 40, 3)));
        let out = wpe_dereverberate(&s, &WpeConfig::default()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn too_short_segment() {
        let s = spec_from(Array3::zeros((2, 12, 3)));
        assert!(matches!(
            wpe_dereverberate(&s, &WpeConfig::default()),
            Err(Error::SegmentTooShort {
                frames: 12,
                required: 12
            })
        ));
    }

    #[test]
    fn early_frames_pass_through_and_shape_is_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Array3::from_shape_fn((3, 80, 2), |_| cgauss(&mut rng));
        let s = spec_from(data);
        let cfg = WpeConfig::default();
        let out = wpe_dereverberate(&s, &cfg).unwrap();
        assert_eq!(out.data().dim(), s.data().dim());
        for m in 0..3 {
            for t in 0..cfg.first_filtered_frame() {
                for f in 0..2 {
                    assert_eq!(out.data()[[m, t, f]], s.data()[[m, t, f]]);
                }
            }
        }
        let again = wpe_dereverberate(&s, &cfg).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn smoothing_context_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = Array3::from_shape_fn((2, 60, 2), |_| cgauss(&mut rng));
        let cfg = WpeConfig {
            psd_context: 2,
            ..WpeConfig::default()
        };
        let out = wpe_dereverberate(&spec_from(data), &cfg).unwrap();
        assert!(out.data().iter().all(|z| z.re.is_finite()));
    }

    #[test]
    fn config_validation() {
        let bad = WpeConfig {
            taps: 0,
            ..WpeConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = WpeConfig {
            eps: 0.0,
            ..WpeConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
