use gss_core::activity::{activity_to_frames, build_activity, extend_context};
use gss_core::*;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixture of `sources` fixed random directions plus weak isotropic noise,
/// each source switched on and off by a random activity pattern.
pub fn random_problem(
    seed: u64,
    d: usize,
    frames: usize,
    bins: usize,
    sources: usize,
) -> (Spectrogram<f64>, ActivityMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cg =
        |rng: &mut ChaCha8Rng| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let steer: Vec<Vec<Complex64>> = (0..sources * bins)
        .map(|_| (0..d).map(|_| cg(&mut rng)).collect())
        .collect();
    let mut active = Array2::from_elem((sources, frames), false);
    for s in 0..sources {
        let mut on = rng.random::<bool>();
        for t in 0..frames {
            if rng.random::<f64>() < 0.05 {
                on = !on;
            }
            active[[s, t]] = on;
        }
    }
    let mut data = Array3::<Complex64>::zeros((d, frames, bins));
    for t in 0..frames {
        for f in 0..bins {
            for m in 0..d {
                data[[m, t, f]] = cg(&mut rng) * 0.05;
            }
            for s in 0..sources {
                if active[[s, t]] {
                    let a = cg(&mut rng) * 2.0;
                    for m in 0..d {
                        data[[m, t, f]] += a * steer[s * bins + f][m];
                    }
                }
            }
        }
    }
    // A silent observation exercises the invalid-observation path.
    for m in 0..d {
        data[[m, 0, 0]] = Complex64::new(0.0, 0.0);
    }
    let cfg = StftConfig {
        fft_size: 2 * (bins - 1),
        shift: 1,
        ..StftConfig::default()
    };
    (
        Spectrogram::new(data, cfg, 16000).unwrap(),
        ActivityMask::from_speakers(active.view()),
    )
}

/// Simplex, clamping and monotonicity checks on an EM fit.
pub fn check_fit(fit: &EmFit<f64>, act: &ActivityMask) -> Result<(), String> {
    let g = &fit.posterior.gamma;
    let (classes, frames, bins) = g.dim();
    for t in 0..frames {
        for f in 0..bins {
            let mut sum = 0.0;
            for k in 0..classes {
                let v = g[[k, t, f]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("posterior {v} outside [0, 1]"));
                }
                if !act.is_active(k, t) && v != 0.0 {
                    return Err(format!("inactive class {k} has mass {v}"));
                }
                sum += v;
            }
            if (sum - 1.0).abs() >= 1e-9 {
                return Err(format!("column sums to {sum}"));
            }
        }
    }
    for w in fit.log_likelihood.windows(2) {
        if w[1] < w[0] - 1e-6 * w[0].abs() {
            return Err(format!("log-likelihood decreased {} -> {}", w[0], w[1]));
        }
    }
    Ok(())
}

pub struct PermutationRun {
    pub consistency: f64,
    /// Speaker-class mask errors over the overlap region.
    pub mask_errors: [f64; 2],
}

/// Guided EM on the whole [`super::overlapping_pair`] session with the
/// annotations as activity, scored against the oracle masks.
pub fn permutation_run() -> PermutationRun {
    let sim = simulate_scene::<f64>(&super::overlapping_pair(), 7).unwrap();
    let cfg = StftConfig::default();
    let len = sim.mixture.len() as u64;
    let x = stft(&sim.mixture, &cfg).unwrap();
    let obs = normalize_observations(&x).unwrap();
    let act = build_activity(&sim.annotations, len);
    let target = sim
        .annotations
        .iter()
        .find(|u| u.speaker_id == "P01")
        .unwrap();
    let ext = extend_context(target, 15.0, len);
    assert_eq!(ext.extended, (0, len));
    let (mask, speakers) = activity_to_frames(&act, &ext, &cfg);
    assert_eq!(speakers, ["P01", "P02"]);
    let fit = em_fit(&obs, &mask, &EmConfig::default()).unwrap();

    let oracle = oracle_masks(&sim.scene, &cfg, 0, 0..len as usize).unwrap();
    let consistency = permutation_consistency(&fit.posterior, &oracle).unwrap();
    // Overlap is 2.5 s to 3.5 s.
    let overlap = cfg.frame_count(40000)..cfg.frame_count(56000);
    let mask_errors =
        [1, 2].map(|class| mask_error(&fit.posterior, &oracle, class, overlap.clone()));
    PermutationRun {
        consistency,
        mask_errors,
    }
}
