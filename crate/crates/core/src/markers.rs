//! Markers (`011`), fillers, special fillers and good 8-blocks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::measure::{IndexRange, ProductMeasure, Symbol};
use crate::sampling::Window;

pub const MARKER: [Symbol; 3] = [0, 1, 1];
/// The two good blocks `011 01 011` and `011 10 011`.
pub const GOOD_BLOCKS: [[Symbol; 8]; 2] = [[0, 1, 1, 0, 1, 0, 1, 1], [0, 1, 1, 1, 0, 0, 1, 1]];

/// A maximal gap between markers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filler {
    pub first: i64,
    pub last: i64,
    /// Touches the window edge, so its true extent is unknown.
    pub censored: bool,
}

impl Filler {
    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }
}

/// Length-2 interior filler `10` (bit 1) or `01` (bit 0) starting at `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Special {
    pub index: i64,
    pub bit: Symbol,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerDecomposition {
    pub range: IndexRange,
    /// First index of every `011` occurrence.
    pub markers: Vec<i64>,
    pub fillers: Vec<Filler>,
    pub specials: Vec<Special>,
}

/// Labelled interval for JSON export.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledInterval {
    pub first: i64,
    pub last: i64,
    pub label: String,
}

impl MarkerDecomposition {
    /// Indices from the first marker through the last marker, inclusive.
    pub fn interior(&self) -> Option<IndexRange> {
        match (self.markers.first(), self.markers.last()) {
            (Some(&a), Some(&b)) => Some(IndexRange::new(a, b + 2)),
            _ => None,
        }
    }

    pub fn labelled_intervals(&self) -> Vec<LabelledInterval> {
        let mut out: Vec<LabelledInterval> = self
            .markers
            .iter()
            .map(|&m| LabelledInterval {
                first: m,
                last: m + 2,
                label: "marker".into(),
            })
            .collect();
        for f in &self.fillers {
            let label = if f.censored {
                "censored"
            } else if self.specials.iter().any(|s| s.index == f.first) {
                "special"
            } else {
                "filler"
            };
            out.push(LabelledInterval {
                first: f.first,
                last: f.last,
                label: label.into(),
            });
        }
        out.sort_by_key(|i| i.first);
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "range": self.range,
            "intervals": self.labelled_intervals(),
        })
    }
}

/// Starting indices of all `011` occurrences. Occurrences cannot overlap: an
/// overlap would need a `0` where the earlier occurrence has a `1`.
pub fn marker_positions(w: &Window<Symbol>) -> Vec<i64> {
    w.values
        .windows(3)
        .enumerate()
        .filter(|(_, b)| *b == MARKER)
        .map(|(i, _)| w.start + i as i64)
        .collect()
}

pub fn decompose(w: &Window<Symbol>) -> MarkerDecomposition {
    let markers = marker_positions(w);
    let range = w.range();
    let mut fillers = Vec::new();
    let mut specials = Vec::new();
    let mut push = |first: i64, last: i64, censored: bool| {
        if last >= first {
            fillers.push(Filler { first, last, censored });
        }
    };
    match (markers.first(), markers.last()) {
        (None, _) | (_, None) => push(range.first, range.last, true),
        (Some(&lo), Some(&hi)) => {
            push(range.first, lo - 1, true);
            for pair in markers.windows(2) {
                push(pair[0] + 3, pair[1] - 1, false);
            }
            push(hi + 3, range.last, true);
        }
    }
    for f in &fillers {
        if !f.censored && f.len() == 2 {
            let x = *w.get(f.first).unwrap();
            let y = *w.get(f.last).unwrap();
            match (x, y) {
                (1, 0) => specials.push(Special { index: f.first, bit: 1 }),
                (0, 1) => specials.push(Special { index: f.first, bit: 0 }),
                _ => {}
            }
        }
    }
    MarkerDecomposition {
        range,
        markers,
        fillers,
        specials,
    }
}

pub fn special_fillers(d: &MarkerDecomposition) -> Vec<(i64, Symbol)> {
    d.specials.iter().map(|s| (s.index, s.bit)).collect()
}

pub fn is_good_block(bits: &[Symbol]) -> bool {
    GOOD_BLOCKS.iter().any(|g| bits == g)
}

/// Starts `8n + offset` of good blocks lying fully inside the window.
pub fn good_intervals(w: &Window<Symbol>, offset: i64) -> Vec<i64> {
    let mut s = w.start + (offset - w.start).rem_euclid(8);
    let mut out = Vec::new();
    while s + 7 < w.end() {
        let i = (s - w.start) as usize;
        if is_good_block(&w.values[i..i + 8]) {
            out.push(s);
        }
        s += 8;
    }
    out
}

/// Number of complete 8-blocks at the given offset.
pub fn block_count(w: &Window<Symbol>, offset: i64) -> usize {
    let first = w.start + (offset - w.start).rem_euclid(8);
    if first + 7 >= w.end() {
        0
    } else {
        ((w.end() - first) / 8) as usize
    }
}

/// Probability under `m` that the 8 symbols starting at `i` form a good block.
pub fn good_prob(m: &ProductMeasure, i: i64) -> Result<f64> {
    m.require_binary()?;
    Ok(GOOD_BLOCKS.iter().map(|b| m.block_mass(i, b)).sum())
}

/// Infimum of [`good_prob`] over starts in `range`.
pub fn good_prob_lower_bound(m: &ProductMeasure, range: IndexRange) -> Result<f64> {
    m.require_binary()?;
    let mut q = f64::INFINITY;
    for i in range.iter() {
        q = q.min(good_prob(m, i)?);
    }
    Ok(if q.is_finite() { q } else { 0.0 })
}

/// Checks that markers never overlap and that markers and fillers cover every
/// index of the window exactly once.
pub fn check_partition(w: &Window<Symbol>) -> std::result::Result<(), String> {
    let d = decompose(w);
    for pair in d.markers.windows(2) {
        if pair[1] < pair[0] + 3 {
            return Err(format!("overlapping markers at {pair:?}"));
        }
    }
    let mut cover = vec![0u8; w.len()];
    for &m in &d.markers {
        for n in m..m + 3 {
            cover[(n - w.start) as usize] += 1;
        }
    }
    for f in &d.fillers {
        for n in f.first..=f.last {
            cover[(n - w.start) as usize] += 1;
        }
    }
    if cover.iter().any(|&c| c != 1) {
        return Err(format!("cover {cover:?}"));
    }
    Ok(())
}
