//! Multi-channel waveforms and the STFT analysis/synthesis pair.
//!
//! Frames are laid out on a padded signal: `pad = fft_size - shift` samples
//! are prepended and appended, and frame `t` covers padded samples
//! `[t * shift, t * shift + fft_size)`. In original-signal coordinates that is
//! `[t * shift - pad, t * shift - pad + fft_size)`, see
//! [`StftConfig::frame_span`]. With this padding every original sample is
//! covered by the full `fft_size / shift` frames, so synthesis is exact up to
//! the signal edges.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{czero, norm_sqr, Real, C};

/// Real-valued multi-channel signal, `[channels][samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Array2<T>,
    sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Array2<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("waveform contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_channels(channels: &[Vec<T>], sample_rate: u32) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::ShapeMismatch("channels differ in length".into()));
        }
        let samples = Array2::from_shape_fn((channels.len(), len), |(c, n)| channels[c][n]);
        Self::new(samples, sample_rate)
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels, len)),
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> ArrayView2<'_, T> {
        self.samples.view()
    }

    pub fn channel(&self, c: usize) -> Vec<T> {
        self.samples.row(c).to_vec()
    }

    pub fn into_samples(self) -> Array2<T> {
        self.samples
    }

    /// Samples `[range.start, range.end)` of every channel.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            samples: self.samples.slice(s![.., range]).to_owned(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn select_channel(&self, c: usize) -> Self {
        Self {
            samples: self.samples.slice(s![c..c + 1, ..]).to_owned(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            samples: self.samples.mapv(|v| v * factor),
            sample_rate: self.sample_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PadMode {
    /// Mirror the signal about its edges (sample 0 repeated), numpy's
    /// `symmetric` mode.
    #[default]
    SymmetricEdge,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub fft_size: usize,
    pub shift: usize,
    pub window: Window,
    pub pad_mode: PadMode,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            shift: 256,
            window: Window::Hann,
            pad_mode: PadMode::SymmetricEdge,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || !self.fft_size.is_multiple_of(2) {
            return Err(Error::BadStftConfig(format!(
                "fft_size {} must be positive and even",
                self.fft_size
            )));
        }
        if self.shift == 0 || self.shift > self.fft_size {
            return Err(Error::BadStftConfig(format!(
                "shift {} must be in 1..={}",
                self.shift, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Samples of padding on each side of the signal.
    pub fn pad(&self) -> usize {
        self.fft_size - self.shift
    }

    /// Number of frames for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        if padded <= self.fft_size {
            1
        } else {
            1 + (padded - self.fft_size).div_ceil(self.shift)
        }
    }

    /// Sample span `[start, end)` of frame `t` in original-signal coordinates.
    /// `start` is negative for the first frames, which reach into the padding.
    pub fn frame_span(&self, t: usize) -> (i64, i64) {
        let start = (t * self.shift) as i64 - self.pad() as i64;
        (start, start + self.fft_size as i64)
    }

    /// Periodic window of length `fft_size`.
    pub fn window_coefficients<T: Real>(&self) -> Vec<T> {
        let n = self.fft_size as f64;
        match self.window {
            Window::Hann => (0..self.fft_size)
                .map(|i| T::lit(0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos()))
                .collect(),
        }
    }

    /// Checks that the squared window overlap-adds to a constant, which is
    /// what the weighted overlap-add synthesis in [`istft`] relies on.
    pub fn check_reconstruction(&self) -> Result<()> {
        self.validate()?;
        let w: Vec<f64> = self.window_coefficients();
        let sums: Vec<f64> = (0..self.shift)
            .map(|n| {
                w.iter()
                    .skip(n)
                    .step_by(self.shift)
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .collect();
        let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sums.iter().cloned().fold(0.0, f64::max);
        if !(lo > 0.0) || (hi - lo) > 1e-10 * hi {
            return Err(Error::ReconstructionUnsupported(format!(
                "window/shift pair {}/{} does not overlap-add to a constant",
                self.fft_size, self.shift
            )));
        }
        Ok(())
    }
}

/// Complex STFT tensor, `[channels][frames][bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    data: Array3<C<T>>,
    config: StftConfig,
    sample_rate: u32,
}

impl<T: Real> Spectrogram<T> {
    pub fn new(data: Array3<C<T>>, config: StftConfig, sample_rate: u32) -> Result<Self> {
        config.validate()?;
        if data.len_of(Axis(2)) != config.bins() {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram has {} bins, config implies {}",
                data.len_of(Axis(2)),
                config.bins()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::ShapeMismatch(
                "spectrogram contains non-finite values".into(),
            ));
        }
        Ok(Self {
            data,
            config,
            sample_rate,
        })
    }

    pub(crate) fn from_parts_unchecked(
        data: Array3<C<T>>,
        config: StftConfig,
        sample_rate: u32,
    ) -> Self {
        Self {
            data,
            config,
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn data(&self) -> &Array3<C<T>> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<C<T>> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<C<T>> {
        self.data
    }

    /// Frames `range` of every channel.
    pub fn slice_frames(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.frames() {
            return Err(Error::EmptyCoreSegment);
        }
        Ok(Self::from_parts_unchecked(
            self.data.slice(s![.., range, ..]).to_owned(),
            self.config,
            self.sample_rate,
        ))
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::from_parts_unchecked(
            self.data.mapv(|z| z * factor),
            self.config,
            self.sample_rate,
        )
    }
}

fn padded_sample<T: Real>(x: &[T], n: i64, pad: i64, mode: PadMode) -> T {
    let len = x.len() as i64;
    if (0..len).contains(&n) {
        return x[n as usize];
    }
    match mode {
        PadMode::Zero => T::zero(),
        PadMode::SymmetricEdge => {
            if n < -pad || n >= len + pad {
                return T::zero();
            }
            let period = 2 * len;
            let m = n.rem_euclid(period);
            let idx = if m < len { m } else { period - 1 - m };
            x[idx as usize]
        }
    }
}

/// One-sided STFT of every channel.
pub fn stft<T: Real>(x: &Waveform<T>, cfg: &StftConfig) -> Result<Spectrogram<T>> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    cfg.validate()?;
    let n_fft = cfg.fft_size;
    let frames = cfg.frame_count(x.len());
    let bins = cfg.bins();
    let pad = cfg.pad() as i64;
    let window: Vec<T> = cfg.window_coefficients();
    let fft = FftPlanner::<T>::new().plan_fft_forward(n_fft);

    let mut data = Array3::<C<T>>::zeros((x.channels(), frames, bins));
    let mut buf = vec![czero::<T>(); n_fft];
    let mut scratch = vec![czero::<T>(); fft.get_inplace_scratch_len()];
    for c in 0..x.channels() {
        let chan = x.channel(c);
        for t in 0..frames {
            let start = (t * cfg.shift) as i64 - pad;
            for (n, b) in buf.iter_mut().enumerate() {
                let v = padded_sample(&chan, start + n as i64, pad, cfg.pad_mode);
                *b = C::new(v * window[n], T::zero());
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                data[[c, t, k]] = buf[k];
            }
        }
    }
    Ok(Spectrogram::from_parts_unchecked(
        data,
        *cfg,
        x.sample_rate(),
    ))
}

/// Weighted overlap-add synthesis, trimmed or zero-extended to `target_length`.
pub fn istft<T: Real>(spec: &Spectrogram<T>, target_length: usize) -> Result<Waveform<T>> {
    let cfg = spec.config();
    cfg.check_reconstruction()?;
    let n_fft = cfg.fft_size;
    let frames = spec.frames();
    let bins = spec.bins();
    let pad = cfg.pad();
    let window: Vec<T> = cfg.window_coefficients();
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n_fft);
    let total = (frames - 1) * cfg.shift + n_fft;

    let mut norm = vec![T::zero(); total];
    for t in 0..frames {
        for (n, w) in window.iter().enumerate() {
            norm[t * cfg.shift + n] += *w * *w;
        }
    }

    let inv_n = T::one() / T::from_count(n_fft);
    let mut out = Array2::<T>::zeros((spec.channels(), target_length));
    let mut buf = vec![czero::<T>(); n_fft];
    let mut scratch = vec![czero::<T>(); ifft.get_inplace_scratch_len()];
    let mut acc = vec![T::zero(); total];
    for c in 0..spec.channels() {
        acc.iter_mut().for_each(|v| *v = T::zero());
        for t in 0..frames {
            for k in 0..bins {
                buf[k] = spec.data[[c, t, k]];
            }
            for k in bins..n_fft {
                buf[k] = spec.data[[c, t, n_fft - k]].conj();
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let base = t * cfg.shift;
            for n in 0..n_fft {
                acc[base + n] += buf[n].re * inv_n * window[n];
            }
        }
        for n in 0..target_length {
            let p = n + pad;
            if p < total && norm[p] > T::zero() {
                out[[c, n]] = acc[p] / norm[p];
            }
        }
    }
    Ok(Waveform {
        samples: out,
        sample_rate: spec.sample_rate(),
    })
}

/// Energy of the windowed frame computed from its one-sided spectrum.
pub fn one_sided_energy<T: Real>(bins: &[C<T>], fft_size: usize) -> T {
    let last = bins.len() - 1;
    let two = T::lit(2.0);
    let total: T = bins
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            if k == 0 || (k == last && fft_size.is_multiple_of(2)) {
                norm_sqr(z)
            } else {
                two * norm_sqr(z)
            }
        })
        .sum();
    total / T::from_count(fft_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> Waveform<f64> {
        let samples = Array2::from_shape_fn((channels, len), |_| rng.random_range(-1.0..1.0));
        Waveform::new(samples, 16000).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let x = Waveform::<f64>::zeros(1, 1024, 16000);
        let s = stft(&x, &StftConfig::default()).unwrap();
        assert_eq!(s.bins(), 513);
        assert!(s.data().iter().all(|z| z.norm() == 0.0));
        let y = istft(&s, 1024).unwrap();
        assert!(y.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_peaks_at_its_bin() {
        let cfg = StftConfig {
            pad_mode: PadMode::Zero,
            ..StftConfig::default()
        };
        let k = 37;
        let samples: Vec<f64> = (0..1024)
            .map(|n| (2.0 * PI * k as f64 * n as f64 / 1024.0).cos())
            .collect();
        let x = Waveform::from_channels(&[samples], 16000).unwrap();
        let s = stft(&x, &cfg).unwrap();
        // Frame pad/shift is the one that covers exactly the original samples.
        let full = cfg.pad() / cfg.shift;
        assert_eq!(cfg.frame_span(full), (0, 1024));
        let row = s.data().slice(s![0, full, ..]);
        let peak = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, k);
    }

    #[test]
    fn frame_count_matches_sliding_window_enumeration() {
        // Brute force: slide a frame over the padded signal until it starts
        // past the last padded sample.
        for &(fft, shift, len) in &[
            (1024, 256, 16000),
            (512, 128, 1),
            (8, 2, 9),
            (16, 16, 5),
            (6, 4, 31),
        ] {
            let cfg = StftConfig {
                fft_size: fft,
                shift,
                ..StftConfig::default()
            };
            let padded = len + 2 * (fft - shift);
            let mut count = 0;
            let mut start = 0;
            loop {
                count += 1;
                if start + fft >= padded {
                    break;
                }
                start += shift;
            }
            assert_eq!(
                cfg.frame_count(len),
                count,
                "fft {fft} shift {shift} len {len}"
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_wave(&mut rng, 1, 16000);
        let s = stft(&x, &StftConfig::default()).unwrap();
        assert_eq!(s.frames(), 66);
    }

    #[test]
    fn round_trip_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = StftConfig::default();
        let x = random_wave(&mut rng, 2, 16000);
        let s = stft(&x, &cfg).unwrap();
        let y = istft(&s, x.len()).unwrap();
        let err = (&x.samples() - &y.samples())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-6, "round-trip error {err}");

        let half = istft(&s.scaled(0.5), x.len()).unwrap();
        let dev = (&half.samples() - &y.samples().mapv(|v| 0.5 * v))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dev < 1e-9);
    }

    #[test]
    fn zero_padding_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = StftConfig {
            fft_size: 64,
            shift: 16,
            pad_mode: PadMode::Zero,
            ..StftConfig::default()
        };
        let x = random_wave(&mut rng, 1, 1000);
        let y = istft(&stft(&x, &cfg).unwrap(), 1000).unwrap();
        let err = (&x.samples() - &y.samples())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-9);
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = StftConfig::default();
        let x = random_wave(&mut rng, 1, 4000);
        let s = stft(&x, &cfg).unwrap();
        let w: Vec<f64> = cfg.window_coefficients();
        let chan = x.channel(0);
        for t in 0..s.frames() {
            let (start, _) = cfg.frame_span(t);
            let time_energy: f64 = (0..cfg.fft_size)
                .map(|n| {
                    let v = padded_sample(&chan, start + n as i64, cfg.pad() as i64, cfg.pad_mode)
                        * w[n];
                    v * v
                })
                .sum();
            let row: Vec<C<f64>> = s.data().slice(s![0, t, ..]).to_vec();
            let bin_energy = one_sided_energy(&row, cfg.fft_size);
            assert!((time_energy - bin_energy).abs() <= 1e-6 * time_energy.max(1e-300));
        }
    }

    #[test]
    fn errors() {
        let empty = Waveform::<f64>::zeros(1, 0, 16000);
        assert!(matches!(
            stft(&empty, &StftConfig::default()),
            Err(Error::EmptySignal)
        ));
        let x = Waveform::<f64>::zeros(1, 100, 16000);
        let odd = StftConfig {
            fft_size: 15,
            ..StftConfig::default()
        };
        assert!(matches!(stft(&x, &odd), Err(Error::BadStftConfig(_))));
        let wide = StftConfig {
            fft_size: 64,
            shift: 128,
            ..StftConfig::default()
        };
        assert!(matches!(stft(&x, &wide), Err(Error::BadStftConfig(_))));
        let half = StftConfig {
            fft_size: 64,
            shift: 32,
            ..StftConfig::default()
        };
        let s = stft(&x, &half).unwrap();
        assert!(matches!(
            istft(&s, 100),
            Err(Error::ReconstructionUnsupported(_))
        ));
    }

    #[test]
    fn symmetric_padding_mirrors_edges() {
        let x = [1.0f64, 2.0, 3.0];
        let got: Vec<f64> = (-3..6)
            .map(|n| padded_sample(&x, n, 3, PadMode::SymmetricEdge))
            .collect();
        assert_eq!(got, vec![3.0, 2.0, 1.0, 1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let samples: Vec<f32> = (0..2000).map(|n| ((n as f32) * 0.01).sin() * 0.5).collect();
        let x = Waveform::from_channels(&[samples], 16000).unwrap();
        let y = istft(&stft(&x, &StftConfig::default()).unwrap(), 2000).unwrap();
        let err = (&x.samples() - &y.samples())
            .iter()
            .fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(err < 1e-5);
    }
}
