mod common;

use common::wpe::*;
use gss_core::{wpe_dereverberate, WpeConfig};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn lag_three_reverberation_is_suppressed() {
    let db = lag_three_suppression_db();
    assert!(db >= 20.0, "suppression only {db:.1} dB");
}

#[test]
fn white_input_is_nearly_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (channels, frames, bins) = (2, 4000, 8);
    let data = Array3::from_shape_fn((channels, frames, bins), |_| cgauss(&mut rng));
    let out = wpe_dereverberate(&spectrogram(data.clone()), &WpeConfig::default()).unwrap();
    let mut mean_change = 0.0;
    for f in 0..bins {
        let mut diff = 0.0;
        let mut base = 0.0;
        for m in 0..channels {
            for t in 0..frames {
                diff += (out.data()[[m, t, f]] - data[[m, t, f]]).norm_sqr();
                base += data[[m, t, f]].norm_sqr();
            }
        }
        mean_change += (diff / base).sqrt() / bins as f64;
    }
    assert!(mean_change < 0.1, "mean relative change {mean_change}");
}

#[test]
fn objective_is_non_increasing() {
    let worst = worst_objective_increase();
    assert!(worst <= 1e-8, "objective rose by {worst:e} (relative)");
}
