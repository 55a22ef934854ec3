#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gss_core::simeval::{write_scene, Mixing, SceneSpec, SignalKind, SourceSpec};
use gss_core::{simulate_scene, Manifest};

pub mod activity;
pub mod beam;
pub mod mixture;
pub mod wpe;

pub fn source(id: &str, intervals: &[[f64; 2]]) -> SourceSpec {
    SourceSpec {
        speaker_id: id.into(),
        intervals: intervals.to_vec(),
        signal: SignalKind::Harmonic,
    }
}

/// Two talkers overlapping from 3.0 s to 4.5 s, seen by two 4-channel arrays.
pub fn two_talkers() -> SceneSpec {
    SceneSpec {
        session_id: "S01".into(),
        sample_rate: 16000,
        duration: 8.0,
        arrays: 2,
        channels_per_array: 4,
        sources: vec![source("P01", &[[0.5, 4.5]]), source("P02", &[[3.0, 7.5]])],
        mixing: Mixing::Delays {
            max_delay: 8,
            min_gain: 0.6,
        },
        noise_db: Some(-30.0),
    }
}

/// Two talkers on one 4-channel array, overlapping from 2.5 s to 3.5 s.
pub fn overlapping_pair() -> SceneSpec {
    SceneSpec {
        session_id: "S01".into(),
        sample_rate: 16000,
        duration: 6.0,
        arrays: 1,
        channels_per_array: 4,
        sources: vec![source("P01", &[[0.3, 3.5]]), source("P02", &[[2.5, 5.7]])],
        mixing: Mixing::Delays {
            max_delay: 8,
            min_gain: 0.6,
        },
        noise_db: Some(-30.0),
    }
}

/// One talker, unit-gain integer delays, no noise.
pub fn lone_talker() -> SceneSpec {
    SceneSpec {
        session_id: "S02".into(),
        sample_rate: 16000,
        duration: 4.0,
        arrays: 1,
        channels_per_array: 4,
        sources: vec![source("P01", &[[0.5, 3.5]])],
        mixing: Mixing::Delays {
            max_delay: 8,
            min_gain: 1.0,
        },
        noise_db: None,
    }
}

/// Three short utterances from two talkers on one array.
pub fn small_session(id: &str) -> SceneSpec {
    SceneSpec {
        session_id: id.into(),
        sample_rate: 16000,
        duration: 3.0,
        arrays: 1,
        channels_per_array: 4,
        sources: vec![
            source("P01", &[[0.2, 1.2], [2.0, 2.8]]),
            source("P02", &[[1.0, 2.2]]),
        ],
        mixing: Mixing::Delays {
            max_delay: 6,
            min_gain: 0.5,
        },
        noise_db: Some(-25.0),
    }
}

pub fn write_manifest(dir: &Path, sessions: &[SceneSpec], seed: u64) -> PathBuf {
    let entries: Vec<_> = sessions
        .iter()
        .map(|s| write_scene(dir, &simulate_scene::<f64>(s, seed).unwrap()).unwrap())
        .collect();
    let path = dir.join("manifest.json");
    let manifest = Manifest { sessions: entries };
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}
