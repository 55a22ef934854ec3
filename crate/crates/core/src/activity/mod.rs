//! Speaker activity from annotations: interval algebra, context extension,
//! refinement with recognizer silences, frame masks for the mixture model
//! and overlap statistics.
//!
//! All times are integer sample counts at [`ANNOTATION_RATE`].

mod annotation;
mod interval;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::Serialize;

use crate::mixture::ActivityMask;
use crate::signal::StftConfig;

pub use annotation::{
    format_timestamp, parse_annotations, parse_chime5, parse_silences, parse_timestamp,
    write_annotations, AnnotationEntry, AnnotationSet, RejectedEntry, Utterance, ANNOTATION_RATE,
};
pub use interval::IntervalSet;

/// Per-speaker activity of one session.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SessionActivity {
    pub session_len: u64,
    pub speakers: BTreeMap<String, IntervalSet>,
}

impl SessionActivity {
    pub fn speaker(&self, id: &str) -> Option<&IntervalSet> {
        self.speakers.get(id)
    }

    /// Union of every speaker except `id`.
    pub fn others(&self, id: &str) -> IntervalSet {
        self.speakers
            .iter()
            .filter(|(k, _)| k.as_str() != id)
            .fold(IntervalSet::new(), |acc, (_, s)| acc.union(s))
    }
}

/// Utterance with its context-extended span, `[start, end)` in samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedUtterance {
    pub core: (u64, u64),
    pub extended: (u64, u64),
    pub utterance: Utterance,
}

impl ExtendedUtterance {
    pub fn extended_len(&self) -> u64 {
        self.extended.1 - self.extended.0
    }

    /// Core span relative to the start of the extended span.
    pub fn core_offset(&self) -> (u64, u64) {
        (self.core.0 - self.extended.0, self.core.1 - self.extended.0)
    }
}

/// Merges each speaker's utterances into canonical intervals clipped to the
/// session.
pub fn build_activity(utts: &[Utterance], session_len: u64) -> SessionActivity {
    let mut spans: BTreeMap<String, Vec<(u64, u64)>> = BTreeMap::new();
    for u in utts {
        spans
            .entry(u.speaker_id.clone())
            .or_default()
            .push((u.start, u.end));
    }
    SessionActivity {
        session_len,
        speakers: spans
            .into_iter()
            .map(|(k, v)| (k, IntervalSet::from_spans(v).clip(0, session_len)))
            .collect(),
    }
}

/// Widens the utterance by `context` seconds on each side, clipped to
/// `[0, session_len)`.
pub fn extend_context(u: &Utterance, context: f64, session_len: u64) -> ExtendedUtterance {
    let ctx = (context.max(0.0) * ANNOTATION_RATE as f64).round() as u64;
    ExtendedUtterance {
        core: (u.start, u.end),
        extended: (
            u.start.saturating_sub(ctx),
            (u.end + ctx).min(session_len.max(u.end)),
        ),
        utterance: u.clone(),
    }
}

/// Removes recognizer-detected silences from each speaker's activity.
pub fn refine_with_asr(
    act: &SessionActivity,
    silences: &BTreeMap<String, IntervalSet>,
) -> SessionActivity {
    SessionActivity {
        session_len: act.session_len,
        speakers: act
            .speakers
            .iter()
            .map(|(k, v)| {
                let refined = match silences.get(k) {
                    Some(s) => v.difference(s),
                    None => v.clone(),
                };
                (k.clone(), refined)
            })
            .collect(),
    }
}

/// Frame-level class activity over the extended span. Class 0 is noise,
/// class `i + 1` is the `i`-th speaker in id order; the returned list names
/// the speaker of every class from 1 on.
///
/// Frame `t` is active for a speaker when its sample span intersects any of
/// the speaker's intervals. The target speaker always gets a class, even
/// when refinement left it without activity.
pub fn activity_to_frames(
    act: &SessionActivity,
    range: &ExtendedUtterance,
    stft: &StftConfig,
) -> (ActivityMask, Vec<String>) {
    let target = &range.utterance.speaker_id;
    let mut speakers: Vec<String> = act.speakers.keys().cloned().collect();
    if !speakers.contains(target) {
        speakers.push(target.clone());
        speakers.sort();
    }
    let frames = stft.frame_count(range.extended_len() as usize);
    let origin = range.extended.0 as i64;
    let empty = IntervalSet::new();
    let mut rows = Array2::from_elem((speakers.len(), frames), false);
    for (i, spk) in speakers.iter().enumerate() {
        let set = act.speakers.get(spk).unwrap_or(&empty);
        for t in 0..frames {
            let (lo, hi) = stft.frame_span(t);
            let (lo, hi) = (lo + origin, hi + origin);
            rows[[i, t]] = set.intersects(lo, hi);
        }
    }
    (ActivityMask::from_speakers(rows.view()), speakers)
}

/// Samples of `u` during which another speaker is active.
pub fn overlap_samples(u: &Utterance, act: &SessionActivity) -> u64 {
    act.others(&u.speaker_id).overlap_len(u.start, u.end)
}

/// Percentage of the utterance overlapped by at least one other speaker.
/// Silence inside the utterance is not removed.
pub fn overlap_fraction(u: &Utterance, act: &SessionActivity) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    100.0 * overlap_samples(u, act) as f64 / u.len() as f64
}

/// Five overlap bins of 20 % each, the last one closed at 100 %.
pub const OVERLAP_BINS: usize = 5;

/// Word-weighted overlap distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapHistogram {
    pub word_counts: [u64; OVERLAP_BINS],
    pub frequencies: [f64; OVERLAP_BINS],
}

impl OverlapHistogram {
    pub fn total_words(&self) -> u64 {
        self.word_counts.iter().sum()
    }

    /// `bin_lo,bin_hi,word_fraction` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,word_fraction\n");
        for (i, f) in self.frequencies.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", 20 * i, 20 * (i + 1), f));
        }
        out
    }

    fn from_counts(word_counts: [u64; OVERLAP_BINS]) -> Self {
        let total: u64 = word_counts.iter().sum();
        let mut frequencies = [0.0; OVERLAP_BINS];
        if total == 0 {
            log::warn!("overlap histogram has no words; returning all-zero frequencies");
        } else {
            for (f, c) in frequencies.iter_mut().zip(word_counts) {
                *f = c as f64 / total as f64;
            }
        }
        Self {
            word_counts,
            frequencies,
        }
    }
}

/// Bin of an utterance, computed in exact integer arithmetic.
pub fn overlap_bin(u: &Utterance, act: &SessionActivity) -> usize {
    if u.is_empty() {
        return 0;
    }
    let bin = (OVERLAP_BINS as u64 * overlap_samples(u, act) / u.len()) as usize;
    bin.min(OVERLAP_BINS - 1)
}

/// Adds each utterance's word count to the bin of its overlap fraction.
pub fn overlap_histogram(utts: &[Utterance], act: &SessionActivity) -> OverlapHistogram {
    let mut counts = [0u64; OVERLAP_BINS];
    for u in utts {
        counts[overlap_bin(u, act)] += u.word_count() as u64;
    }
    OverlapHistogram::from_counts(counts)
}

/// Session length implied by the annotations: the latest end time.
pub fn implied_session_len(utts: &[Utterance]) -> u64 {
    utts.iter().map(|u| u.end).max().unwrap_or(0)
}

/// Groups utterances by session, building each session's activity from its
/// own utterances.
pub fn group_sessions(utts: &[Utterance]) -> BTreeMap<String, (Vec<Utterance>, SessionActivity)> {
    let mut by_session: BTreeMap<String, Vec<Utterance>> = BTreeMap::new();
    for u in utts {
        by_session
            .entry(u.session_id.clone())
            .or_default()
            .push(u.clone());
    }
    by_session
        .into_iter()
        .map(|(k, v)| {
            let act = build_activity(&v, implied_session_len(&v));
            (k, (v, act))
        })
        .collect()
}

/// Histogram over several sessions; overlap is evaluated within each session.
pub fn overlap_histogram_sessions(utts: &[Utterance]) -> OverlapHistogram {
    let mut counts = [0u64; OVERLAP_BINS];
    for (utts, act) in group_sessions(utts).values() {
        for u in utts {
            counts[overlap_bin(u, act)] += u.word_count() as u64;
        }
    }
    OverlapHistogram::from_counts(counts)
}
