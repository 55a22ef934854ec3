//! WAV reading and writing.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::Waveform;

/// Reads 16-bit PCM or 32-bit float WAV into `[-1, 1]` samples.
pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::UnsupportedWav(format!(
                "{}: {fmt:?} samples with {bits} bits",
                path.as_ref().display()
            )))
        }
    };
    let frames = interleaved.len() / channels.max(1);
    let samples = Array2::from_shape_fn((channels, frames), |(c, n)| {
        T::lit(interleaved[n * channels + c])
    });
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM, clamping to the representable range.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, wav: &Waveform<T>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: wav.channels() as u16,
        sample_rate: wav.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    let samples = wav.samples();
    for n in 0..wav.len() {
        for c in 0..wav.channels() {
            let v = (samples[[c, n]].as_f64() * 32767.0)
                .round()
                .clamp(-32768.0, 32767.0);
            writer.write_sample(v as i16)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Writes 32-bit float, used for lossless intermediate files.
pub fn write_wav_f32<T: Real>(path: impl AsRef<Path>, wav: &Waveform<T>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: wav.channels() as u16,
        sample_rate: wav.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    let samples = wav.samples();
    for n in 0..wav.len() {
        for c in 0..wav.channels() {
            writer.write_sample(samples[[c, n]].as_f64() as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}
