//! Transcript documents: the normalized schema and the CHiME-5 adapter.
//!
//! Normalized entries look like
//!
//! ```json
//! {"session_id": "S02", "speaker_id": "P05", "start_time": "0:00:40.60",
//!  "end_time": "0:00:41.12", "words": "[noise] okay then"}
//! ```
//!
//! CHiME-5 entries carry per-device time maps instead of plain strings:
//! `"start_time": {"original": "...", "U01": "...", "P05": "..."}` and use
//! `speaker` for the speaker id. The adapter picks the requested device's
//! time, falls back to the speaker's worn microphone, then to `original`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate annotation times are quantized to.
pub const ANNOTATION_RATE: u32 = 16_000;

/// One transcript entry converted to sample times at [`ANNOTATION_RATE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub session_id: String,
    pub speaker_id: String,
    pub start: u64,
    pub end: u64,
    pub words: Vec<String>,
}

impl Utterance {
    /// Lexical words only; bracketed tags such as `[noise]` are not counted.
    pub fn word_count(&self) -> usize {
        self.words.iter().filter(|w| !is_tag(w)).count()
    }

    pub fn start_secs(&self) -> f64 {
        self.start as f64 / ANNOTATION_RATE as f64
    }

    pub fn end_secs(&self) -> f64 {
        self.end as f64 / ANNOTATION_RATE as f64
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// `<speaker>-<start_ms>_<end_ms>`, used for output file names.
    pub fn id(&self) -> String {
        format!(
            "{}-{}_{}",
            self.speaker_id,
            self.start * 1000 / ANNOTATION_RATE as u64,
            self.end * 1000 / ANNOTATION_RATE as u64
        )
    }
}

fn is_tag(token: &str) -> bool {
    token.starts_with('[') && token.ends_with(']')
}

/// Normalized annotation entry as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub session_id: String,
    pub speaker_id: String,
    pub start_time: String,
    pub end_time: String,
    pub words: String,
}

impl AnnotationEntry {
    pub fn from_utterance(u: &Utterance) -> Self {
        Self {
            session_id: u.session_id.clone(),
            speaker_id: u.speaker_id.clone(),
            start_time: format_timestamp(u.start),
            end_time: format_timestamp(u.end),
            words: u.words.join(" "),
        }
    }
}

/// An entry that parsed but was not turned into an utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedEntry {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub utterances: Vec<Utterance>,
    pub rejected: Vec<RejectedEntry>,
}

/// Parses `H:MM:SS.ff` (any number of fraction digits) into samples at
/// [`ANNOTATION_RATE`], rounding to the nearest sample.
pub fn parse_timestamp(text: &str) -> Result<u64> {
    let bad = || Error::TimeStamp(text.to_string());
    let parts: Vec<&str> = text.trim().split(':').collect();
    let (h, m, s) = match parts.as_slice() {
        [h, m, s] => (*h, *m, *s),
        [m, s] => ("0", *m, *s),
        [s] => ("0", "0", *s),
        _ => return Err(bad()),
    };
    let hours: u64 = h.parse().map_err(|_| bad())?;
    let minutes: u64 = m.parse().map_err(|_| bad())?;
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    let seconds: u64 = whole.parse().map_err(|_| bad())?;
    if minutes >= 60 || seconds >= 60 || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 9
    {
        return Err(bad());
    }
    let rate = ANNOTATION_RATE as u64;
    let frac_samples = if frac.is_empty() {
        0
    } else {
        let num: u64 = frac.parse().map_err(|_| bad())?;
        let den = 10u64.pow(frac.len() as u32);
        (num * rate * 2 + den) / (2 * den)
    };
    Ok(((hours * 60 + minutes) * 60 + seconds) * rate + frac_samples)
}

/// Formats samples as `H:MM:SS.ff`, rounding to the nearest centisecond.
pub fn format_timestamp(samples: u64) -> String {
    let per_cs = ANNOTATION_RATE as u64 / 100;
    let cs = (samples + per_cs / 2) / per_cs;
    let (secs, cs) = (cs / 100, cs % 100);
    format!(
        "{}:{:02}:{:02}.{:02}",
        secs / 3600,
        (secs / 60) % 60,
        secs % 60,
        cs
    )
}

fn tokens(words: &str) -> Vec<String> {
    words.split_whitespace().map(str::to_string).collect()
}

fn build(
    index: usize,
    session_id: String,
    speaker_id: String,
    start: &str,
    end: &str,
    words: &str,
    set: &mut AnnotationSet,
) -> Result<()> {
    let entry_err = |reason: String| Error::Annotation { index, reason };
    if speaker_id.is_empty() {
        return Err(entry_err("empty speaker id".into()));
    }
    let start = parse_timestamp(start).map_err(|e| entry_err(e.to_string()))?;
    let end = parse_timestamp(end).map_err(|e| entry_err(e.to_string()))?;
    if end <= start {
        log::warn!("annotation entry {index}: end time not after start, entry rejected");
        set.rejected.push(RejectedEntry {
            index,
            reason: "end time not after start time".into(),
        });
        return Ok(());
    }
    set.utterances.push(Utterance {
        session_id,
        speaker_id,
        start,
        end,
        words: tokens(words),
    });
    Ok(())
}

/// Parses a normalized annotation document (JSON array of
/// [`AnnotationEntry`]).
pub fn parse_annotations(doc: &str) -> Result<AnnotationSet> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(doc)?;
    let mut set = AnnotationSet::default();
    for (index, value) in raw.into_iter().enumerate() {
        let entry: AnnotationEntry =
            serde_json::from_value(value).map_err(|e| Error::Annotation {
                index,
                reason: e.to_string(),
            })?;
        build(
            index,
            entry.session_id,
            entry.speaker_id,
            &entry.start_time,
            &entry.end_time,
            &entry.words,
            &mut set,
        )?;
    }
    Ok(set)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DeviceTimes {
    Plain(String),
    PerDevice(BTreeMap<String, String>),
}

impl DeviceTimes {
    fn pick(&self, device: Option<&str>, speaker: &str) -> Option<&str> {
        match self {
            DeviceTimes::Plain(s) => Some(s),
            DeviceTimes::PerDevice(map) => device
                .and_then(|d| map.get(d))
                .or_else(|| map.get(speaker))
                .or_else(|| map.get("original"))
                .map(String::as_str),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Chime5Entry {
    session_id: String,
    speaker: String,
    start_time: DeviceTimes,
    end_time: DeviceTimes,
    #[serde(default)]
    words: String,
}

/// Parses a CHiME-5 transcript, reading times for `device` (e.g. `U01`)
/// when present and falling back to the worn microphone otherwise.
pub fn parse_chime5(doc: &str, device: Option<&str>) -> Result<AnnotationSet> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(doc)?;
    let mut set = AnnotationSet::default();
    for (index, value) in raw.into_iter().enumerate() {
        let entry: Chime5Entry = serde_json::from_value(value).map_err(|e| Error::Annotation {
            index,
            reason: e.to_string(),
        })?;
        let missing = |what: &str| Error::Annotation {
            index,
            reason: format!("no usable {what}"),
        };
        let start = entry
            .start_time
            .pick(device, &entry.speaker)
            .ok_or_else(|| missing("start_time"))?
            .to_string();
        let end = entry
            .end_time
            .pick(device, &entry.speaker)
            .ok_or_else(|| missing("end_time"))?
            .to_string();
        build(
            index,
            entry.session_id,
            entry.speaker,
            &start,
            &end,
            &entry.words,
            &mut set,
        )?;
    }
    Ok(set)
}

/// Serializes utterances in the normalized schema.
pub fn write_annotations(utts: &[Utterance]) -> Result<String> {
    let entries: Vec<AnnotationEntry> = utts.iter().map(AnnotationEntry::from_utterance).collect();
    Ok(serde_json::to_string_pretty(&entries)?)
}

/// Silence/alignment file: speaker id → list of `[start, end]` in seconds.
pub fn parse_silences(doc: &str) -> Result<BTreeMap<String, super::IntervalSet>> {
    let raw: BTreeMap<String, Vec<[f64; 2]>> = serde_json::from_str(doc)?;
    let rate = ANNOTATION_RATE as f64;
    Ok(raw
        .into_iter()
        .map(|(speaker, spans)| {
            let set = super::IntervalSet::from_spans(spans.into_iter().map(|[s, e]| {
                (
                    (s.max(0.0) * rate).round() as u64,
                    (e.max(0.0) * rate).round() as u64,
                )
            }));
            (speaker, set)
        })
        .collect())
}
