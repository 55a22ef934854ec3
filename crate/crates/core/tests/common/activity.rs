use std::collections::BTreeMap;

use gss_core::activity::Utterance;

pub const FIXTURE: &str = r#"[
  {"session_id": "S01", "speaker_id": "P01", "start_time": "0:00:00.50", "end_time": "0:00:04.00", "words": "so I was saying [laughs] that"},
  {"session_id": "S01", "speaker_id": "P02", "start_time": "0:00:03.00", "end_time": "0:00:05.25", "words": "right right"},
  {"session_id": "S01", "speaker_id": "P03", "start_time": "0:00:03.50", "end_time": "0:00:09.00", "words": "[noise] and then we went out for dinner"},
  {"session_id": "S01", "speaker_id": "P01", "start_time": "0:00:06.00", "end_time": "0:00:06.80", "words": "mm hmm"},
  {"session_id": "S01", "speaker_id": "P02", "start_time": "0:00:08.10", "end_time": "0:00:08.60", "words": "yes"},
  {"session_id": "S01", "speaker_id": "P04", "start_time": "0:00:10.00", "end_time": "0:00:12.00", "words": "nobody else talks here"},
  {"session_id": "S01", "speaker_id": "P01", "start_time": "0:00:04.00", "end_time": "0:00:04.40", "words": "[inaudible]"}
]"#;

/// Per-sample activity of every speaker.
pub fn raster(utts: &[Utterance], len: usize) -> BTreeMap<String, Vec<bool>> {
    let mut out: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for u in utts {
        let row = out
            .entry(u.speaker_id.clone())
            .or_insert_with(|| vec![false; len]);
        row[u.start as usize..u.end as usize].fill(true);
    }
    out
}

pub fn oracle_overlap(u: &Utterance, r: &BTreeMap<String, Vec<bool>>) -> usize {
    (u.start as usize..u.end as usize)
        .filter(|&n| r.iter().any(|(spk, row)| spk != &u.speaker_id && row[n]))
        .count()
}

pub fn oracle_histogram(utts: &[Utterance], len: usize) -> [u64; 5] {
    let r = raster(utts, len);
    let mut counts = [0u64; 5];
    for u in utts {
        let overlapped = oracle_overlap(u, &r);
        let total = (u.end - u.start) as usize;
        // Bin edges at 20 % steps; overlapped / total ≥ i / 5 for bin i.
        let mut bin = 0;
        for i in 1..5 {
            if overlapped * 5 >= i * total {
                bin = i;
            }
        }
        let words = u
            .words
            .iter()
            .filter(|w| !(w.starts_with('[') && w.ends_with(']')))
            .count();
        counts[bin] += words as u64;
    }
    counts
}
