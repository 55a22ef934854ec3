use gss_core::{
    wpe_dereverberate, wpe_dereverberate_traced, Spectrogram, StftConfig, WpeConfig, C,
};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn cgauss(rng: &mut ChaCha8Rng) -> C<f64> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn spectrogram(data: Array3<C<f64>>) -> Spectrogram<f64> {
    let bins = data.dim().2;
    let cfg = StftConfig {
        fft_size: 2 * (bins - 1),
        shift: 1,
        ..StftConfig::default()
    };
    Spectrogram::new(data, cfg, 16000).unwrap()
}

/// `||Σ_t x_t d_{t-lag}^H||_F²` summed over bins: the energy of `x` that is
/// linearly explained by the dry signal `lag` frames earlier.
pub fn residual_projection(x: &Array3<C<f64>>, dry: &Array3<C<f64>>, lag: usize) -> f64 {
    let (m, t, f) = x.dim();
    let mut total = 0.0;
    for bin in 0..f {
        for a in 0..m {
            for b in 0..m {
                let mut acc = C::new(0.0, 0.0);
                for frame in lag..t {
                    acc += x[[a, frame, bin]] * dry[[b, frame - lag, bin]].conj();
                }
                total += acc.norm_sqr();
            }
        }
    }
    total
}

/// Dry frames with a log-normal per-frame power envelope shared by all
/// channels, the time-varying-variance source WPE's weighting assumes.
pub fn dry_source(
    rng: &mut ChaCha8Rng,
    channels: usize,
    frames: usize,
    bins: usize,
) -> Array3<C<f64>> {
    let envelope: Vec<f64> = (0..frames)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            (1.5 * g).exp().sqrt()
        })
        .collect();
    Array3::from_shape_fn((channels, frames, bins), |(_, t, _)| {
        cgauss(rng) * envelope[t]
    })
}

/// Suppression in dB of a lag-3 cross-channel echo by WPE with delay 2 and
/// 4 taps.
pub fn lag_three_suppression_db() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (channels, frames, bins) = (4, 30000, 2);
    let dry = dry_source(&mut rng, channels, frames, bins);
    let mut wet = dry.clone();
    for f in 0..bins {
        let mix = Array2::from_shape_fn((channels, channels), |_| cgauss(&mut rng) * 0.1);
        for t in 3..frames {
            for a in 0..channels {
                for b in 0..channels {
                    wet[[a, t, f]] += mix[[a, b]] * dry[[b, t - 3, f]];
                }
            }
        }
    }
    let cfg = WpeConfig {
        taps: 4,
        delay: 2,
        ..WpeConfig::default()
    };
    let out = wpe_dereverberate(&spectrogram(wet.clone()), &cfg).unwrap();
    let before = residual_projection(&wet, &dry, 3);
    let after = residual_projection(out.data(), &dry, 3);
    10.0 * (before / after).log10()
}

/// Largest relative increase of the WPE objective between iterations over
/// all bins of a time-varying-power test signal (3 iterations).
pub fn worst_objective_increase() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (channels, frames, bins) = (3, 300, 6);
    let dry = Array3::from_shape_fn((channels, frames, bins), |(_, t, _)| {
        // Time-varying power so the weighting matters.
        cgauss(&mut rng) * (1.0 + (t as f64 * 0.1).sin().abs() * 4.0)
    });
    let mut wet = dry.clone();
    for f in 0..bins {
        for t in 4..frames {
            for a in 0..channels {
                wet[[a, t, f]] +=
                    dry[[(a + 1) % channels, t - 4, f]] * 0.5 + dry[[a, t - 2, f]] * 0.3;
            }
        }
    }
    let cfg = WpeConfig {
        taps: 4,
        delay: 2,
        iterations: 3,
        ..WpeConfig::default()
    };
    let out = wpe_dereverberate_traced(&spectrogram(wet), &cfg).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for f in 0..bins {
        let row = out.objective.row(f);
        assert_eq!(row.len(), 4);
        for i in 1..row.len() {
            worst = worst.max((row[i] - row[i - 1]) / row[i - 1].abs());
        }
    }
    worst
}
