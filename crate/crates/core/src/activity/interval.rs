//! Canonical half-open interval sets over sample indices.

use serde::{Deserialize, Serialize};

/// Sorted, disjoint, non-touching `[start, end)` spans.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntervalSet {
    spans: Vec<(u64, u64)>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonicalizes arbitrary spans: empty ones dropped, overlapping and
    /// touching ones merged.
    pub fn from_spans<I: IntoIterator<Item = (u64, u64)>>(spans: I) -> Self {
        let mut v: Vec<(u64, u64)> = spans.into_iter().filter(|(s, e)| s < e).collect();
        v.sort_unstable();
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(v.len());
        for (s, e) in v {
            match out.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => out.push((s, e)),
            }
        }
        Self { spans: out }
    }

    pub fn spans(&self) -> &[(u64, u64)] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn total_len(&self) -> u64 {
        self.spans.iter().map(|(s, e)| e - s).sum()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_spans(self.spans.iter().chain(other.spans.iter()).copied())
    }

    /// `self \ other`.
    pub fn difference(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let mut j = 0;
        for &(s, e) in &self.spans {
            let mut cur = s;
            while j < other.spans.len() && other.spans[j].1 <= cur {
                j += 1;
            }
            let mut k = j;
            while k < other.spans.len() && other.spans[k].0 < e {
                let (os, oe) = other.spans[k];
                if os > cur {
                    out.push((cur, os));
                }
                cur = cur.max(oe);
                if cur >= e {
                    break;
                }
                k += 1;
            }
            if cur < e {
                out.push((cur, e));
            }
        }
        Self { spans: out }
    }

    /// Restricts every span to `[lo, hi)`.
    pub fn clip(&self, lo: u64, hi: u64) -> Self {
        Self::from_spans(self.spans.iter().map(|&(s, e)| (s.max(lo), e.min(hi))))
    }

    /// Length of the intersection with `[lo, hi)`.
    pub fn overlap_len(&self, lo: u64, hi: u64) -> u64 {
        self.spans
            .iter()
            .map(|&(s, e)| {
                let a = s.max(lo);
                let b = e.min(hi);
                b.saturating_sub(a)
            })
            .sum()
    }

    /// Whether any span intersects `[lo, hi)`, with `lo` possibly negative.
    pub fn intersects(&self, lo: i64, hi: i64) -> bool {
        self.spans
            .iter()
            .any(|&(s, e)| lo < e as i64 && (s as i64) < hi)
    }

    pub fn contains(&self, sample: u64) -> bool {
        self.spans.iter().any(|&(s, e)| s <= sample && sample < e)
    }
}
