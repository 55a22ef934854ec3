//! Per-utterance enhancement and manifest-driven batch runs.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{
    activity_to_frames, build_activity, parse_annotations, parse_chime5, parse_silences,
    refine_with_asr, ExtendedUtterance, SessionActivity, Utterance, ANNOTATION_RATE,
};
use crate::beamform::{
    apply_beamformer, apply_target_mask, ban_postfilter, estimate_psds, mvdr_souden,
    select_reference, SnrAveraging, DEFAULT_LOADING,
};
use crate::error::{Error, Result};
use crate::io::{read_wav, write_wav};
use crate::mixture::{
    context_frame_count, em_fit, em_fit_from, normalize_observations, trim_context,
    DirectionalObservations, EmConfig, Posterior,
};
use crate::scalar::Real;
use crate::signal::{istft, stft, StftConfig, Waveform};
use crate::wpe::{wpe_dereverberate, WpeConfig};

/// Peak level enhanced audio is scaled to when it would otherwise clip.
pub const OUTPUT_PEAK: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Track {
    /// One microphone array.
    #[default]
    Single,
    /// All listed arrays stacked into one super-array.
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WpeStage {
    pub enabled: bool,
    #[serde(flatten)]
    pub params: WpeConfig,
}

impl Default for WpeStage {
    fn default() -> Self {
        Self {
            enabled: true,
            params: WpeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MaskingConfig {
    /// `None` follows the track: on for single, off for multi.
    pub enabled: Option<bool>,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub track: Track,
    /// Array ids in stacking order.
    pub arrays: Vec<String>,
    pub stft: StftConfig,
    pub wpe: WpeStage,
    pub em: EmConfig,
    pub masking: MaskingConfig,
    /// Context on each side of an utterance for WPE and EM, in seconds.
    pub context_secs: f64,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub reference_averaging: SnrAveraging,
    /// Relative diagonal loading of the distortion covariance.
    pub loading: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            track: Track::Single,
            arrays: vec!["U01".into()],
            stft: StftConfig::default(),
            wpe: WpeStage::default(),
            em: EmConfig::default(),
            masking: MaskingConfig::default(),
            context_secs: 15.0,
            output_dir: PathBuf::from("enhanced"),
            workers: 1,
            reference_averaging: SnrAveraging::Linear,
            loading: DEFAULT_LOADING,
        }
    }
}

impl PipelineConfig {
    pub fn masking_enabled(&self) -> bool {
        self.masking.enabled.unwrap_or(self.track == Track::Single)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.stft.validate()?;
        self.stft.check_reconstruction()?;
        if self.arrays.is_empty() {
            return Err(Error::NoArrays);
        }
        if self.track == Track::Single && self.arrays.len() != 1 {
            return bad(format!(
                "single track takes one array, got {}",
                self.arrays.len()
            ));
        }
        let mut ids = self.arrays.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != self.arrays.len() {
            return bad("duplicate array ids".into());
        }
        if !(self.context_secs >= 0.0 && self.context_secs.is_finite()) {
            return bad(format!(
                "context {} s must be finite and non-negative",
                self.context_secs
            ));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.masking.floor) {
            return bad(format!("mask floor {} outside [0, 1]", self.masking.floor));
        }
        if !(self.loading > 0.0) {
            return bad("loading must be positive".into());
        }
        if self.wpe.enabled {
            self.wpe.params.validate()?;
        }
        self.em.validate(2)
    }
}

/// Concatenates channels in the given order, trimming every input to the
/// shortest one.
pub fn stack_arrays<T: Real>(waves: &[Waveform<T>]) -> Result<Waveform<T>> {
    let first = waves.first().ok_or(Error::NoArrays)?;
    let rate = first.sample_rate();
    if let Some(w) = waves.iter().find(|w| w.sample_rate() != rate) {
        return Err(Error::SampleRateMismatch(rate, w.sample_rate()));
    }
    let len = waves.iter().map(|w| w.len()).min().unwrap_or(0);
    if waves.iter().any(|w| w.len() != len) {
        log::warn!("array lengths differ; trimming all to {len} samples");
    }
    let views: Vec<_> = waves
        .iter()
        .map(|w| w.samples().slice_move(ndarray::s![.., ..len]))
        .collect();
    let stacked = ndarray::concatenate(ndarray::Axis(0), &views)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Waveform::new(stacked, rate)
}

/// Sample ranges and frame bookkeeping of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtterancePlan {
    pub extended: ExtendedUtterance,
    pub context_frames: usize,
    pub extended_frames: usize,
    /// Frames of the extended STFT that coincide with the core's own STFT.
    pub core_frames: Range<usize>,
}

/// Extends `u` by the configured context. The left extension is a whole
/// number of hops so the core's frames line up with the extended frames.
pub fn plan_utterance(
    u: &Utterance,
    cfg: &PipelineConfig,
    session_len: u64,
) -> Result<UtterancePlan> {
    let shift = cfg.stft.shift as u64;
    let core = (u.start, u.end.min(session_len));
    if core.0 >= core.1 {
        return Err(Error::EmptyCoreSegment);
    }
    let context_frames = context_frame_count(cfg.context_secs, ANNOTATION_RATE, cfg.stft.shift);
    let left = shift * (context_frames as u64).min(core.0 / shift);
    let extended = (
        core.0 - left,
        (core.1 + context_frames as u64 * shift).min(session_len),
    );
    let first = (left / shift) as usize;
    let core_len = (core.1 - core.0) as usize;
    let plan = UtterancePlan {
        extended: ExtendedUtterance {
            core,
            extended,
            utterance: u.clone(),
        },
        context_frames,
        extended_frames: cfg.stft.frame_count((extended.1 - extended.0) as usize),
        core_frames: first..first + cfg.stft.frame_count(core_len),
    };
    Ok(plan)
}

/// Intermediate results kept for inspection.
#[derive(Debug, Clone)]
pub struct Diagnostics<T> {
    pub plan: UtterancePlan,
    /// Speaker of every class from 1 on.
    pub speakers: Vec<String>,
    pub target_class: usize,
    /// Posteriors over the core frames as used for beamforming.
    pub posterior: Posterior<T>,
    /// Frames the beamforming covariances were estimated on.
    pub psd_frame_count: usize,
}

#[derive(Debug, Clone)]
pub struct Enhanced<T> {
    pub audio: Waveform<T>,
    pub reference: usize,
    pub flags: Vec<String>,
    pub diagnostics: Diagnostics<T>,
}

fn slice_observations<T: Real>(
    obs: &DirectionalObservations<T>,
    frames: Range<usize>,
) -> DirectionalObservations<T> {
    DirectionalObservations {
        units: obs
            .units
            .slice(ndarray::s![frames.clone(), .., ..])
            .to_owned(),
        valid: obs.valid.slice(ndarray::s![frames, ..]).to_owned(),
    }
}

/// Enhances one utterance of a session. `audio` holds the whole session
/// (already stacked) and `act` its speaker activity.
pub fn enhance_utterance<T: Real>(
    u: &Utterance,
    cfg: &PipelineConfig,
    audio: &Waveform<T>,
    act: &SessionActivity,
) -> Result<Enhanced<T>> {
    enhance_inner(u, cfg, audio, act).map_err(|e| Error::Utterance {
        id: format!("{}/{}", u.session_id, u.id()),
        source: Box::new(e),
    })
}

fn enhance_inner<T: Real>(
    u: &Utterance,
    cfg: &PipelineConfig,
    audio: &Waveform<T>,
    act: &SessionActivity,
) -> Result<Enhanced<T>> {
    if audio.sample_rate() != ANNOTATION_RATE {
        return Err(Error::SampleRateMismatch(
            ANNOTATION_RATE,
            audio.sample_rate(),
        ));
    }
    let plan = plan_utterance(u, cfg, audio.len() as u64)?;
    let ext = &plan.extended;
    let mut flags = Vec::new();

    let x = audio.slice(ext.extended.0 as usize..ext.extended.1 as usize);
    let mut spec = stft(&x, &cfg.stft)?;
    if cfg.wpe.enabled {
        match wpe_dereverberate(&spec, &cfg.wpe.params) {
            Ok(s) => spec = s,
            Err(Error::SegmentTooShort { frames, required }) => {
                log::warn!(
                    "{}: {frames} frames are too few for WPE (need more than {required}); skipping",
                    u.id()
                );
                flags.push("wpe_skipped".to_string());
            }
            Err(e) => return Err(e),
        }
    }

    let obs = normalize_observations(&spec)?;
    let (mask, speakers) = activity_to_frames(act, ext, &cfg.stft);
    let target_class = 1 + speakers
        .iter()
        .position(|s| s == &u.speaker_id)
        .expect("activity_to_frames lists the target");
    if !(0..mask.frames()).any(|t| mask.is_active(target_class, t)) {
        flags.push("target_inactive".to_string());
    }
    let em = EmConfig {
        context_frames: plan.context_frames,
        ..cfg.em
    };
    let fit = em_fit(&obs, &mask, &em)?;
    let mut posterior = trim_context(&fit.posterior, plan.core_frames.clone())?;
    if em.refine_iterations > 0 {
        let core_obs = slice_observations(&obs, plan.core_frames.clone());
        let core_mask = mask.slice_frames(plan.core_frames.clone());
        posterior =
            em_fit_from(&core_obs, &core_mask, &em, &posterior, em.refine_iterations)?.posterior;
    }

    let core_spec = spec.slice_frames(plan.core_frames.clone())?;
    let psd = estimate_psds(&core_spec, &posterior, target_class)?;
    if !psd.fallback_bins.is_empty() {
        flags.push(format!("psd_fallback_bins={}", psd.fallback_bins.len()));
    }
    let reference = select_reference(&psd, cfg.loading, cfg.reference_averaging);
    let w = mvdr_souden(&psd, reference, cfg.loading)?;
    if !w.degenerate_bins.is_empty() {
        flags.push(format!("degenerate_bins={}", w.degenerate_bins.len()));
    }
    let w = ban_postfilter(&w, &psd);
    let mut est = apply_beamformer(&core_spec, &w)?;
    if cfg.masking_enabled() {
        est = apply_target_mask(&est, &posterior, target_class, T::lit(cfg.masking.floor))?;
    }
    let core_len = (ext.core.1 - ext.core.0) as usize;
    let audio = istft(&est, core_len)?;
    Ok(Enhanced {
        audio,
        reference,
        flags,
        diagnostics: Diagnostics {
            psd_frame_count: psd.frame_count,
            plan,
            speakers,
            target_class,
            posterior,
        },
    })
}

/// `<output_dir>/<session>/<speaker>-<start_ms>_<end_ms>.wav`
pub fn output_path(output_dir: &Path, u: &Utterance) -> PathBuf {
    output_dir
        .join(&u.session_id)
        .join(format!("{}.wav", u.id()))
}

/// Writes 16-bit audio, scaling to [`OUTPUT_PEAK`] first if it would clip.
/// Returns whether scaling happened.
pub fn write_enhanced<T: Real>(path: &Path, wav: &Waveform<T>) -> Result<bool> {
    let peak = wav.peak().as_f64();
    if peak > 1.0 {
        log::info!(
            "{}: peak {peak:.3} would clip; normalizing to {OUTPUT_PEAK}",
            path.display()
        );
        write_wav(path, &wav.scaled(T::lit(OUTPUT_PEAK / peak)))?;
        Ok(true)
    } else {
        write_wav(path, wav)?;
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationFormat {
    #[default]
    Normalized,
    Chime5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session_id: String,
    /// Array id → WAV file.
    pub audio: BTreeMap<String, PathBuf>,
    pub annotations: PathBuf,
    #[serde(default)]
    pub annotation_format: AnnotationFormat,
    #[serde(default)]
    pub silences: Option<PathBuf>,
}

/// Sessions to process. Relative paths are resolved against the manifest's
/// directory by [`Manifest::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    #[serde(default)]
    pub sessions: Vec<SessionEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut m.sessions {
            s.audio.values_mut().for_each(resolve);
            resolve(&mut s.annotations);
            if let Some(p) = s.silences.as_mut() {
                resolve(p);
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReport {
    pub session_id: String,
    pub speaker_id: String,
    pub utterance_id: String,
    pub start_secs: f64,
    pub end_secs: f64,
    pub status: Status,
    pub error: Option<String>,
    pub output: Option<PathBuf>,
    pub elapsed_ms: f64,
    pub reference_channel: Option<usize>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFailure {
    pub session_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub utterances: Vec<UtteranceReport>,
    pub session_failures: Vec<SessionFailure>,
    pub succeeded: usize,
    pub failed: usize,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 || !self.session_failures.is_empty() {
            1
        } else {
            0
        }
    }
}

struct LoadedSession {
    utterances: Vec<Utterance>,
    audio: std::result::Result<Waveform<f64>, String>,
    activity: SessionActivity,
}

fn load_session(entry: &SessionEntry, cfg: &PipelineConfig) -> Result<LoadedSession> {
    let doc = std::fs::read_to_string(&entry.annotations)?;
    let set = match entry.annotation_format {
        AnnotationFormat::Normalized => parse_annotations(&doc)?,
        AnnotationFormat::Chime5 => parse_chime5(&doc, cfg.arrays.first().map(String::as_str))?,
    };
    for r in &set.rejected {
        log::warn!(
            "{}: annotation entry {} skipped: {}",
            entry.session_id,
            r.index,
            r.reason
        );
    }
    let utterances: Vec<Utterance> = set
        .utterances
        .into_iter()
        .filter(|u| u.session_id == entry.session_id)
        .collect();
    let silences = match &entry.silences {
        Some(p) => Some(parse_silences(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let audio = load_audio(entry, cfg);
    let session_len = match &audio {
        Ok(a) => a.len() as u64,
        Err(_) => utterances.iter().map(|u| u.end).max().unwrap_or(0),
    };
    let mut activity = build_activity(&utterances, session_len);
    if let Some(s) = silences {
        activity = refine_with_asr(&activity, &s);
    }
    Ok(LoadedSession {
        utterances,
        audio: audio.map_err(|e| e.to_string()),
        activity,
    })
}

fn load_audio(entry: &SessionEntry, cfg: &PipelineConfig) -> Result<Waveform<f64>> {
    let mut waves = Vec::with_capacity(cfg.arrays.len());
    for id in &cfg.arrays {
        let path = entry.audio.get(id).ok_or_else(|| {
            Error::Config(format!(
                "session {} has no audio for array {id}",
                entry.session_id
            ))
        })?;
        let w: Waveform<f64> = read_wav(path)?;
        if w.sample_rate() != ANNOTATION_RATE {
            return Err(Error::SampleRateMismatch(ANNOTATION_RATE, w.sample_rate()));
        }
        waves.push(w);
    }
    stack_arrays(&waves)
}

fn process(u: &Utterance, cfg: &PipelineConfig, session: &LoadedSession) -> UtteranceReport {
    let start = Instant::now();
    let mut report = UtteranceReport {
        session_id: u.session_id.clone(),
        speaker_id: u.speaker_id.clone(),
        utterance_id: u.id(),
        start_secs: u.start_secs(),
        end_secs: u.end_secs(),
        status: Status::Failed,
        error: None,
        output: None,
        elapsed_ms: 0.0,
        reference_channel: None,
        flags: Vec::new(),
    };
    let result = match &session.audio {
        Ok(audio) => enhance_utterance(u, cfg, audio, &session.activity).and_then(|e| {
            let path = output_path(&cfg.output_dir, u);
            let normalized = write_enhanced(&path, &e.audio)?;
            Ok((e, path, normalized))
        }),
        Err(msg) => Err(Error::Config(msg.clone())),
    };
    match result {
        Ok((e, path, normalized)) => {
            report.status = Status::Ok;
            report.output = Some(path);
            report.reference_channel = Some(e.reference);
            report.flags = e.flags;
            if normalized {
                report.flags.push("peak_normalized".into());
            }
        }
        Err(e) => {
            log::error!("{}: {e}", u.id());
            report.error = Some(e.to_string());
        }
    }
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    report
}

/// Enhances every utterance of every session. Individual failures are
/// recorded in the report; only configuration problems abort the run.
pub fn run_batch(manifest: &Manifest, cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut report = RunReport::default();
    for entry in &manifest.sessions {
        let session = match load_session(entry, cfg) {
            Ok(s) => s,
            Err(e) => {
                log::error!("session {}: {e}", entry.session_id);
                report.session_failures.push(SessionFailure {
                    session_id: entry.session_id.clone(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        let results: Vec<UtteranceReport> = pool.install(|| {
            session
                .utterances
                .par_iter()
                .map(|u| process(u, cfg, &session))
                .collect()
        });
        report.utterances.extend(results);
    }
    report.succeeded = report
        .utterances
        .iter()
        .filter(|r| r.status == Status::Ok)
        .count();
    report.failed = report.utterances.len() - report.succeeded;
    Ok(report)
}
