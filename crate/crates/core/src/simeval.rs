//! Seeded synthetic scenes and separation metrics.
//!
//! Sources are harmonic "syllable" trains (a gliding fundamental with
//! decaying harmonics under a Hann envelope) or gated colored noise, so the
//! scenes are sparse in time-frequency the way speech is without needing a
//! corpus. Each source reaches every microphone through either a pure
//! integer delay with a gain, or a short random exponentially decaying
//! impulse response.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activity::{write_annotations, IntervalSet, Utterance, ANNOTATION_RATE};
use crate::error::{Error, Result};
use crate::io::write_wav_f32;
use crate::mixture::Posterior;
use crate::pipeline::{AnnotationFormat, SessionEntry};
use crate::scalar::{norm_sqr, Real};
use crate::signal::{stft, StftConfig, Waveform};

/// Samples per annotation time step (10 ms at 16 kHz); scripted intervals are
/// snapped to this grid so they survive the `H:MM:SS.ff` round trip.
const GRID: u64 = ANNOTATION_RATE as u64 / 100;
/// RMS of every dry source over its active samples.
pub const SOURCE_RMS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    #[default]
    Harmonic,
    ColoredNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub speaker_id: String,
    /// `[start, end]` in seconds.
    pub intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub signal: SignalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mixing {
    /// Integer delay in `0..=max_delay` samples and a gain in `[min_gain, 1]`
    /// per source and channel.
    Delays { max_delay: usize, min_gain: f64 },
    /// Direct path as above followed by a random tail decaying by `1/e` every
    /// `decay` taps, `taps` long in total.
    Reverb {
        max_delay: usize,
        taps: usize,
        decay: f64,
        tail_gain: f64,
    },
}

impl Default for Mixing {
    fn default() -> Self {
        Mixing::Delays {
            max_delay: 8,
            min_gain: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "default_session")]
    pub session_id: String,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_arrays")]
    pub arrays: usize,
    #[serde(default = "default_channels")]
    pub channels_per_array: usize,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub mixing: Mixing,
    /// Noise RMS relative to the source RMS in dB; `None` for a noise-free
    /// scene.
    #[serde(default)]
    pub noise_db: Option<f64>,
}

fn default_session() -> String {
    "SIM01".into()
}
fn default_rate() -> u32 {
    ANNOTATION_RATE
}
fn default_arrays() -> usize {
    1
}
fn default_channels() -> usize {
    4
}

impl SceneSpec {
    pub fn channels(&self) -> usize {
        self.arrays * self.channels_per_array
    }

    pub fn len_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    /// Device names of the arrays, `U01`, `U02`, …
    pub fn array_ids(&self) -> Vec<String> {
        (1..=self.arrays).map(|i| format!("U{i:02}")).collect()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScene(m.to_string()));
        if self.sources.is_empty() {
            return bad("need at least one source");
        }
        if self.channels() < 2 {
            return bad("need at least two channels");
        }
        if self.sample_rate != ANNOTATION_RATE {
            return bad("scenes are generated at 16 kHz");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        let mut ids: Vec<&str> = self.sources.iter().map(|s| s.speaker_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.sources.len() || ids.iter().any(|s| s.is_empty()) {
            return bad("speaker ids must be unique and non-empty");
        }
        for s in &self.sources {
            for &[a, b] in &s.intervals {
                if !(a >= 0.0 && a < b && b <= self.duration) {
                    return bad(&format!(
                        "interval [{a}, {b}] of {} outside the scene",
                        s.speaker_id
                    ));
                }
            }
        }
        match self.mixing {
            Mixing::Delays { min_gain, .. } if !(min_gain > 0.0 && min_gain <= 1.0) => {
                bad("min_gain must be in (0, 1]")
            }
            Mixing::Reverb {
                taps,
                max_delay,
                decay,
                ..
            } if taps <= max_delay || !(decay > 0.0) => {
                bad("reverb needs taps > max_delay and a positive decay")
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth of a simulated scene.
#[derive(Debug, Clone)]
pub struct SyntheticScene<T> {
    pub spec: SceneSpec,
    pub seed: u64,
    /// Dry source signals, zero outside their intervals.
    pub dry: Vec<Vec<T>>,
    /// Per-source images on every channel.
    pub images: Vec<Waveform<T>>,
    pub noise: Waveform<T>,
    /// Per-source impulse responses `[channels][taps]`.
    pub filters: Vec<Array2<f64>>,
    /// Per-source activity in samples.
    pub activity: Vec<IntervalSet>,
}

/// Scene, its mixture and the matching annotations.
#[derive(Debug, Clone)]
pub struct SimulatedScene<T> {
    pub scene: SyntheticScene<T>,
    pub mixture: Waveform<T>,
    pub annotations: Vec<Utterance>,
}

impl<T: Real> SimulatedScene<T> {
    /// Mixture channels belonging to array `index`.
    pub fn array_mixture(&self, index: usize) -> Waveform<T> {
        array_channels(&self.mixture, index, self.scene.spec.channels_per_array)
    }

    /// Image of source `source` on the channels of array `index`.
    pub fn array_image(&self, source: usize, index: usize) -> Waveform<T> {
        array_channels(
            &self.scene.images[source],
            index,
            self.scene.spec.channels_per_array,
        )
    }
}

fn array_channels<T: Real>(w: &Waveform<T>, index: usize, per_array: usize) -> Waveform<T> {
    let samples = w
        .samples()
        .slice(ndarray::s![index * per_array..(index + 1) * per_array, ..])
        .to_owned();
    Waveform::new(samples, w.sample_rate()).expect("finite samples")
}

/// Writes a scene in the layout the batch runner reads and returns its
/// manifest entry, with paths relative to `dir`:
/// `<session>_<array>.wav` mixtures, `<session>.json` annotations and
/// `images/<session>_<speaker>_<array>.wav` ground-truth images. Audio is
/// 32-bit float so nothing is lost to quantization.
pub fn write_scene<T: Real>(dir: &Path, sim: &SimulatedScene<T>) -> Result<SessionEntry> {
    let spec = &sim.scene.spec;
    std::fs::create_dir_all(dir.join("images"))?;
    let mut audio = BTreeMap::new();
    for (i, id) in spec.array_ids().iter().enumerate() {
        let name = PathBuf::from(format!("{}_{id}.wav", spec.session_id));
        write_wav_f32(dir.join(&name), &sim.array_mixture(i))?;
        audio.insert(id.clone(), name);
        for (k, src) in spec.sources.iter().enumerate() {
            let image = format!("images/{}_{}_{id}.wav", spec.session_id, src.speaker_id);
            write_wav_f32(dir.join(image), &sim.array_image(k, i))?;
        }
    }
    let annotations = PathBuf::from(format!("{}.json", spec.session_id));
    std::fs::write(dir.join(&annotations), write_annotations(&sim.annotations)?)?;
    Ok(SessionEntry {
        session_id: spec.session_id.clone(),
        audio,
        annotations,
        annotation_format: AnnotationFormat::Normalized,
        silences: None,
    })
}

fn snap(seconds: f64) -> u64 {
    let samples = (seconds * ANNOTATION_RATE as f64).round() as u64;
    ((samples + GRID / 2) / GRID) * GRID
}

fn harmonic_segment(rng: &mut ChaCha8Rng, out: &mut [f64], start: usize, end: usize, rate: f64) {
    let mut pos = start;
    while pos < end {
        let syl = ((rng.random_range(0.10..0.25) * rate) as usize).min(end - pos);
        let f0_start: f64 = rng.random_range(90.0..260.0);
        let f0_end = f0_start * rng.random_range(0.8..1.2);
        let harmonics = ((4000.0 / f0_start.max(f0_end)) as usize).max(1);
        let phases: Vec<f64> = (0..harmonics)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        let mut phase = 0.0;
        for n in 0..syl {
            let frac = n as f64 / syl.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += 2.0 * PI * f0 / rate;
            let env = 0.5 - 0.5 * (2.0 * PI * frac).cos();
            let v: f64 = phases
                .iter()
                .enumerate()
                .map(|(h, p)| ((h + 1) as f64 * phase + p).sin() / (h + 1) as f64)
                .sum();
            out[pos + n] += env * v;
        }
        let gap = (rng.random_range(0.0..0.06) * rate) as usize;
        pos += syl + gap;
    }
}

fn colored_segment(rng: &mut ChaCha8Rng, out: &mut [f64], start: usize, end: usize, rate: f64) {
    let pole: f64 = rng.random_range(0.5..0.95);
    let fade = ((0.01 * rate) as usize).max(1);
    let mut state = 0.0;
    let len = end - start;
    for n in 0..len {
        let white: f64 = StandardNormal.sample(rng);
        state = pole * state + white;
        let ramp = (n.min(len - 1 - n) as f64 / fade as f64).min(1.0);
        out[start + n] = state * ramp;
    }
}

/// Generates a reproducible scene from `spec` and `seed`.
pub fn simulate_scene<T: Real>(spec: &SceneSpec, seed: u64) -> Result<SimulatedScene<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = spec.len_samples();
    let rate = spec.sample_rate as f64;
    let channels = spec.channels();

    let mut dry_all = Vec::new();
    let mut activity = Vec::new();
    let mut annotations = Vec::new();
    for src in &spec.sources {
        let set = IntervalSet::from_spans(
            src.intervals
                .iter()
                .map(|&[a, b]| (snap(a), snap(b).min(len as u64))),
        );
        let mut dry = vec![0.0f64; len];
        for &(a, b) in set.spans() {
            let (a, b) = (a as usize, b as usize);
            match src.signal {
                SignalKind::Harmonic => harmonic_segment(&mut rng, &mut dry, a, b, rate),
                SignalKind::ColoredNoise => colored_segment(&mut rng, &mut dry, a, b, rate),
            }
            let words = ((b - a) as f64 / (0.3 * rate)).round().max(1.0) as usize;
            annotations.push(Utterance {
                session_id: spec.session_id.clone(),
                speaker_id: src.speaker_id.clone(),
                start: a as u64,
                end: b as u64,
                words: (0..words).map(|i| format!("w{i}")).collect(),
            });
        }
        let active = set.total_len().max(1) as f64;
        let rms = (dry.iter().map(|v| v * v).sum::<f64>() / active).sqrt();
        if rms > 0.0 {
            dry.iter_mut().for_each(|v| *v *= SOURCE_RMS / rms);
        }
        dry_all.push(dry);
        activity.push(set);
    }
    annotations.sort_by(|a, b| (a.start, &a.speaker_id).cmp(&(b.start, &b.speaker_id)));

    let mut filters = Vec::new();
    let mut images = Vec::new();
    for dry in &dry_all {
        let h = match spec.mixing {
            Mixing::Delays {
                max_delay,
                min_gain,
            } => {
                let mut h = Array2::<f64>::zeros((channels, max_delay + 1));
                for c in 0..channels {
                    let delay = rng.random_range(0..=max_delay);
                    let gain = if min_gain >= 1.0 {
                        1.0
                    } else {
                        rng.random_range(min_gain..=1.0)
                    };
                    h[[c, delay]] = gain;
                }
                h
            }
            Mixing::Reverb {
                max_delay,
                taps,
                decay,
                tail_gain,
            } => {
                let mut h = Array2::<f64>::zeros((channels, taps));
                for c in 0..channels {
                    let delay = rng.random_range(0..=max_delay);
                    h[[c, delay]] = rng.random_range(0.6..=1.0);
                    for k in delay + 1..taps {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        h[[c, k]] = tail_gain * g * (-((k - delay) as f64) / decay).exp();
                    }
                }
                h
            }
        };
        let image = Array2::from_shape_fn((channels, len), |(c, n)| {
            let row = h.row(c);
            let mut acc = 0.0;
            for (k, &g) in row.iter().enumerate() {
                if g != 0.0 && k <= n {
                    acc += g * dry[n - k];
                }
            }
            T::lit(acc)
        });
        images.push(Waveform::new(image, spec.sample_rate)?);
        filters.push(h);
    }

    let noise = match spec.noise_db {
        Some(db) => {
            let std = SOURCE_RMS * 10f64.powf(db / 20.0);
            Array2::from_shape_fn((channels, len), |_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                T::lit(std * g)
            })
        }
        None => Array2::zeros((channels, len)),
    };
    let noise = Waveform::new(noise, spec.sample_rate)?;

    let mut mix = noise.samples().to_owned();
    for img in &images {
        mix = mix + img.samples();
    }
    let mixture = Waveform::new(mix, spec.sample_rate)?;
    let dry = dry_all
        .into_iter()
        .map(|d| d.into_iter().map(T::lit).collect())
        .collect();
    Ok(SimulatedScene {
        scene: SyntheticScene {
            spec: spec.clone(),
            seed,
            dry,
            images,
            noise,
            filters,
            activity,
        },
        mixture,
        annotations,
    })
}

/// Scale-invariant SDR in dB, capped to `[-100, 100]`.
pub fn si_sdr_slices<T: Real>(est: &[T], reference: &[T]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    if !(ref_energy > 0.0) {
        return Err(Error::ZeroReference);
    }
    let dot: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| e.as_f64() * r.as_f64())
        .sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let residual: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let d = e.as_f64() - alpha * r.as_f64();
            d * d
        })
        .sum();
    let db = 10.0 * (target_energy / residual).log10();
    Ok(if db.is_nan() {
        100.0
    } else {
        db.clamp(-100.0, 100.0)
    })
}

/// [`si_sdr_slices`] on single-channel waveforms.
pub fn si_sdr<T: Real>(est: &Waveform<T>, reference: &Waveform<T>) -> Result<f64> {
    if est.channels() != 1 || reference.channels() != 1 {
        return Err(Error::ShapeMismatch(
            "si_sdr expects single-channel signals".into(),
        ));
    }
    si_sdr_slices(&est.channel(0), &reference.channel(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationMetrics {
    pub si_sdr: f64,
    pub si_sdr_improvement: Option<f64>,
    pub mask_agreement: Option<f64>,
    pub permutation_consistency: Option<f64>,
}

/// One-hot dominance masks `[1 + sources][frames][bins]` over samples
/// `range` of channel `reference`: each bin goes to the source image with
/// the largest power, or to class 0 when the noise is at least as strong as
/// every source.
pub fn oracle_masks<T: Real>(
    scene: &SyntheticScene<T>,
    cfg: &StftConfig,
    reference: usize,
    range: Range<usize>,
) -> Result<Posterior<T>> {
    let powers = |w: &Waveform<T>| -> Result<Array2<T>> {
        let s = stft(&w.select_channel(reference).slice(range.clone()), cfg)?;
        Ok(s.data().index_axis(Axis(0), 0).mapv(norm_sqr))
    };
    let mut planes = vec![powers(&scene.noise)?];
    for img in &scene.images {
        planes.push(powers(img)?);
    }
    let (frames, bins) = planes[0].dim();
    let mut gamma = Array3::<T>::zeros((planes.len(), frames, bins));
    for t in 0..frames {
        for f in 0..bins {
            let mut best = 0;
            for k in 1..planes.len() {
                if planes[k][[t, f]] > planes[best][[t, f]] {
                    best = k;
                }
            }
            gamma[[best, t, f]] = T::one();
        }
    }
    Ok(Posterior { gamma })
}

/// Mean `|γ_class − oracle_class|` over `frames` and all bins.
pub fn mask_error<T: Real>(
    gamma: &Posterior<T>,
    oracle: &Posterior<T>,
    class: usize,
    frames: Range<usize>,
) -> f64 {
    let bins = gamma.bins();
    let n = (frames.len() * bins).max(1) as f64;
    let mut total = 0.0;
    for t in frames {
        for f in 0..bins {
            total += (gamma.gamma[[class, t, f]] - oracle.gamma[[class, t, f]])
                .abs()
                .as_f64();
        }
    }
    total / n
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Class permutation per bin maximizing `Σ_t Σ_k γ[perm[k]] · oracle[k]`.
/// Ties keep the lexicographically first permutation.
pub fn best_permutations<T: Real>(
    gamma: &Posterior<T>,
    oracle: &Posterior<T>,
) -> Result<Vec<Vec<usize>>> {
    if gamma.gamma.dim() != oracle.gamma.dim() {
        return Err(Error::ShapeMismatch(
            "posterior and oracle shapes differ".into(),
        ));
    }
    let classes = gamma.classes();
    if classes > 8 {
        return Err(Error::ShapeMismatch(
            "permutation search limited to 8 classes".into(),
        ));
    }
    let perms = permutations(classes);
    let mut best = Vec::with_capacity(gamma.bins());
    for f in 0..gamma.bins() {
        // agreement[a][b] = Σ_t γ[a] · oracle[b]
        let mut agreement = vec![vec![0.0f64; classes]; classes];
        for a in 0..classes {
            for b in 0..classes {
                agreement[a][b] = (0..gamma.frames())
                    .map(|t| (gamma.gamma[[a, t, f]] * oracle.gamma[[b, t, f]]).as_f64())
                    .sum();
            }
        }
        let mut top = 0;
        let mut top_score = f64::NEG_INFINITY;
        for (i, p) in perms.iter().enumerate() {
            let score: f64 = (0..classes).map(|k| agreement[p[k]][k]).sum();
            if score > top_score {
                top_score = score;
                top = i;
            }
        }
        best.push(perms[top].clone());
    }
    Ok(best)
}

/// Fraction of bins whose best class↔source assignment equals the most
/// common assignment across bins.
pub fn permutation_consistency<T: Real>(
    gamma: &Posterior<T>,
    oracle: &Posterior<T>,
) -> Result<f64> {
    let best = best_permutations(gamma, oracle)?;
    if best.is_empty() {
        return Ok(1.0);
    }
    let mut counts: Vec<(Vec<usize>, usize)> = Vec::new();
    for p in &best {
        match counts.iter_mut().find(|(q, _)| q == p) {
            Some((_, c)) => *c += 1,
            None => counts.push((p.clone(), 1)),
        }
    }
    let majority = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    Ok(majority as f64 / best.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_source(noise: Option<f64>, min_gain: f64) -> SceneSpec {
        SceneSpec {
            session_id: "S".into(),
            sample_rate: 16000,
            duration: 1.0,
            arrays: 1,
            channels_per_array: 2,
            sources: vec![SourceSpec {
                speaker_id: "P01".into(),
                intervals: vec![[0.1, 0.8]],
                signal: SignalKind::Harmonic,
            }],
            mixing: Mixing::Delays {
                max_delay: 3,
                min_gain,
            },
            noise_db: noise,
        }
    }

    #[test]
    fn noise_free_mixture_is_the_image() {
        let sim = simulate_scene::<f64>(&one_source(None, 1.0), 1).unwrap();
        assert_eq!(sim.mixture.samples(), sim.scene.images[0].samples());
        let h = &sim.scene.filters[0];
        assert!(h.iter().all(|&g| g == 0.0 || g == 1.0));
    }

    #[test]
    fn disjoint_sources_do_not_mix() {
        let mut spec = one_source(None, 0.7);
        spec.sources[0].intervals = vec![[0.0, 0.4]];
        spec.sources.push(SourceSpec {
            speaker_id: "P02".into(),
            intervals: vec![[0.6, 1.0]],
            signal: SignalKind::ColoredNoise,
        });
        let sim = simulate_scene::<f64>(&spec, 4).unwrap();
        let first = sim.mixture.slice(0..6000);
        assert_eq!(
            first.samples(),
            sim.scene.images[0].slice(0..6000).samples()
        );
        let second = sim.mixture.slice(10000..16000);
        assert_eq!(
            second.samples(),
            sim.scene.images[1].slice(10000..16000).samples()
        );
        assert_eq!(sim.annotations.len(), 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = one_source(Some(-20.0), 0.5);
        let a = simulate_scene::<f64>(&spec, 9).unwrap();
        let b = simulate_scene::<f64>(&spec, 9).unwrap();
        assert_eq!(a.mixture, b.mixture);
        let c = simulate_scene::<f64>(&spec, 10).unwrap();
        assert_ne!(a.mixture, c.mixture);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = one_source(None, 1.0);
        spec.channels_per_array = 1;
        assert!(matches!(
            simulate_scene::<f64>(&spec, 0),
            Err(Error::InvalidScene(_))
        ));
        let mut spec = one_source(None, 1.0);
        spec.sources.clear();
        assert!(simulate_scene::<f64>(&spec, 0).is_err());
        let mut spec = one_source(None, 1.0);
        spec.sources[0].intervals = vec![[0.5, 2.0]];
        assert!(simulate_scene::<f64>(&spec, 0).is_err());
    }

    #[test]
    fn si_sdr_basics() {
        let x: Vec<f64> = (0..1000).map(|n| (n as f64 * 0.37).sin()).collect();
        assert_eq!(si_sdr_slices(&x, &x).unwrap(), 100.0);
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr_slices(&doubled, &x).unwrap(), 100.0);
        assert!(matches!(
            si_sdr_slices(&x, &vec![0.0; 1000]),
            Err(Error::ZeroReference)
        ));
        assert!(si_sdr_slices(&x[..10], &x).is_err());
    }

    #[test]
    fn orthogonal_perturbation_gives_twenty_db() {
        // n is orthogonal to x by construction (Gram-Schmidt) and scaled so
        // that ||x||² / ||n||² = 100.
        let x: Vec<f64> = (0..4000)
            .map(|n| (n as f64 * 0.05).sin() + 0.3 * (n as f64 * 0.21).cos())
            .collect();
        let raw: Vec<f64> = (0..4000)
            .map(|n| ((n * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let proj: f64 = raw.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / xx;
        let mut n: Vec<f64> = raw.iter().zip(&x).map(|(a, b)| a - proj * b).collect();
        let nn: f64 = n.iter().map(|v| v * v).sum();
        let scale = (xx / 100.0 / nn).sqrt();
        n.iter_mut().for_each(|v| *v *= scale);
        let est: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + b).collect();
        assert!((si_sdr_slices(&est, &x).unwrap() - 20.0).abs() < 0.1);
    }

    #[test]
    fn permutation_consistency_examples() {
        let oracle = Posterior {
            gamma: Array3::from_shape_fn(
                (3, 10, 8),
                |(k, t, _)| if t % 3 == k { 1.0 } else { 0.0 },
            ),
        };
        assert_eq!(permutation_consistency(&oracle, &oracle).unwrap(), 1.0);
        let mut swapped = oracle.clone();
        for f in 0..4 {
            for t in 0..10 {
                let (a, b) = (swapped.gamma[[1, t, f]], swapped.gamma[[2, t, f]]);
                swapped.gamma[[1, t, f]] = b;
                swapped.gamma[[2, t, f]] = a;
            }
        }
        assert_eq!(permutation_consistency(&swapped, &oracle).unwrap(), 0.5);
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn oracle_masks_single_source() {
        let sim = simulate_scene::<f64>(&one_source(Some(-60.0), 1.0), 3).unwrap();
        let cfg = StftConfig::default();
        let masks = oracle_masks(&sim.scene, &cfg, 0, 0..16000).unwrap();
        // One-hot columns.
        for t in 0..masks.frames() {
            for f in 0..masks.bins() {
                let s: f64 = (0..2).map(|k| masks.gamma[[k, t, f]]).sum();
                assert_eq!(s, 1.0);
            }
        }
        // The source dominates its low-frequency band in the middle of its
        // interval.
        let mid = cfg.frame_count(8000) - 4;
        let low: f64 = (2..60).map(|f| masks.gamma[[1, mid, f]]).sum::<f64>() / 58.0;
        assert!(low > 0.9, "source share {low}");
    }
}
