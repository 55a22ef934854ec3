//! Guided source separation for multi-channel recordings of overlapped speech.
//!
//! The processing chain per utterance is: STFT, multi-channel WPE
//! dereverberation, an annotation-guided complex angular central Gaussian
//! mixture model fitted with EM, and a mask-based MVDR beamformer with blind
//! analytic normalization. The numerical core is generic over [`Real`]
//! (`f32`/`f64`); the `*64` aliases below are what the pipeline uses.

// `!(x > 0.0)` is deliberate: it also rejects NaN. Index loops mirror the
// matrix notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod activity;
pub mod beamform;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mixture;
pub mod pipeline;
pub mod scalar;
pub mod signal;
pub mod simeval;
pub mod wpe;

pub use beamform::{
    apply_beamformer, apply_target_mask, ban_gain, ban_postfilter, estimate_psds, mvdr_souden,
    select_reference, BeamformerWeights, PsdSet, SnrAveraging,
};
pub use error::{Error, Result};
pub use mixture::{
    context_frame_count, em_fit, em_fit_from, guided_log_likelihood, init_posteriors,
    normalize_observations, trim_context, ActivityMask, DirectionalObservations, EmConfig, EmFit,
    MixtureParams, Posterior,
};
pub use pipeline::{
    enhance_utterance, run_batch, stack_arrays, Enhanced, Manifest, PipelineConfig, RunReport,
    Track, UtteranceReport,
};
pub use scalar::{Real, C};
pub use signal::{istft, stft, PadMode, Spectrogram, StftConfig, Waveform, Window};
pub use simeval::{
    mask_error, oracle_masks, permutation_consistency, si_sdr, si_sdr_slices, simulate_scene,
    write_scene, SceneSpec, SeparationMetrics, SimulatedScene, SyntheticScene,
};
pub use wpe::{wpe_dereverberate, wpe_dereverberate_traced, WpeConfig, WpeOutput};

pub type Waveform64 = Waveform<f64>;
pub type Spectrogram64 = Spectrogram<f64>;
pub type Waveform32 = Waveform<f32>;
pub type Spectrogram32 = Spectrogram<f32>;
