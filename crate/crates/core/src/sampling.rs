//! Seeded sampling of finite windows.
//!
//! Every coordinate `n` of a window draws its uniform from a fixed position of
//! a ChaCha8 keystream, so a coordinate's value depends only on the seed, the
//! stream label and `n`, never on the window bounds or the worker count.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DensityFamily, IndexRange, ProductMeasure, Symbol};

/// A finite sample `x_start, ..., x_{start+len-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window<T> {
    pub start: i64,
    pub values: Vec<T>,
    pub seed: u64,
    pub source: String,
}

impl<T> Window<T> {
    pub fn new(start: i64, values: Vec<T>) -> Self {
        Self {
            start,
            values,
            seed: 0,
            source: String::new(),
        }
    }

    pub fn with_provenance(mut self, seed: u64, source: impl Into<String>) -> Self {
        self.seed = seed;
        self.source = source.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn range(&self) -> IndexRange {
        IndexRange::with_len(self.start, self.values.len())
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn get(&self, n: i64) -> Option<&T> {
        if n < self.start {
            return None;
        }
        self.values.get((n - self.start) as usize)
    }

    pub fn iter_indexed(&self) -> impl Iterator<Item = (i64, &T)> + '_ {
        let start = self.start;
        self.values.iter().enumerate().map(move |(i, x)| (start + i as i64, x))
    }

    /// Same values, re-indexed so that `values[0]` sits at `start + shift`.
    pub fn shifted(mut self, shift: i64) -> Self {
        self.start += shift;
        self
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Window<U> {
        Window {
            start: self.start,
            values: self.values.iter().map(f).collect(),
            seed: self.seed,
            source: self.source.clone(),
        }
    }
}

impl<T: Clone> Window<T> {
    /// Restriction to `range`, which must lie inside the window.
    pub fn slice(&self, range: IndexRange) -> Result<Self> {
        let own = self.range();
        if range.is_empty() {
            return Ok(Window {
                start: range.first,
                values: Vec::new(),
                seed: self.seed,
                source: self.source.clone(),
            });
        }
        if !own.contains(range.first) || !own.contains(range.last) {
            return Err(Error::RangeMismatch(format!("{range} is not inside {own}")));
        }
        let lo = (range.first - self.start) as usize;
        Ok(Window {
            start: range.first,
            values: self.values[lo..lo + range.len()].to_vec(),
            seed: self.seed,
            source: self.source.clone(),
        })
    }
}

/// Formatting of a window value as a CSV cell.
pub trait CsvCell {
    fn cell(&self) -> String;
}

impl CsvCell for u8 {
    fn cell(&self) -> String {
        self.to_string()
    }
}

impl CsvCell for f64 {
    fn cell(&self) -> String {
        format!("{self:?}")
    }
}

impl<T: CsvCell> CsvCell for Option<T> {
    fn cell(&self) -> String {
        match self {
            Some(x) => x.cell(),
            None => String::new(),
        }
    }
}

impl<T: CsvCell> Window<T> {
    /// Writes `index,value` rows with a header; missing values are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "value"])?;
        for (n, x) in self.iter_indexed() {
            w.write_record([n.to_string(), x.cell()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV written by [`Window::write_csv`] back into real values.
pub fn read_csv_window<R: std::io::Read>(input: R) -> Result<Window<Option<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let mut start = None;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let n: i64 = rec[0]
            .parse()
            .map_err(|_| Error::Io(format!("bad index {:?}", &rec[0])))?;
        let expected = start.get_or_insert(n);
        if n != *expected + values.len() as i64 {
            return Err(Error::Io(format!("non-consecutive index {n}")));
        }
        let v = if rec[1].is_empty() {
            None
        } else {
            Some(rec[1].parse().map_err(|_| Error::Io(format!("bad value {:?}", &rec[1])))?)
        };
        values.push(v);
    }
    Ok(Window::new(start.unwrap_or(0), values))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Reserved ChaCha stream for per-coordinate uniforms.
const COORDINATE_STREAM: u64 = u64::MAX;
const PAR_CHUNK: usize = 1 << 15;

/// Root of a tree of independent generators keyed by labels and indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedStream {
    root: u64,
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self::derive(root, root, "root")
    }

    fn derive(root: u64, parent: u64, label: &str) -> Self {
        let mut state = splitmix64(parent ^ fnv1a(label).rotate_left(17));
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self { root, key }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Independent child stream for `label`.
    pub fn substream(&self, label: &str) -> Self {
        let parent = u64::from_le_bytes(self.key[..8].try_into().unwrap())
            ^ u64::from_le_bytes(self.key[8..16].try_into().unwrap()).rotate_left(29);
        Self::derive(self.root, parent, label)
    }

    /// Generator number `index` of this stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        debug_assert!(index != COORDINATE_STREAM);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }

    fn coordinate_rng(&self, n: i64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(COORDINATE_STREAM);
        let pos = (n as i128 - i64::MIN as i128) as u128;
        rng.set_word_pos(pos * 2);
        rng
    }

    /// The uniform attached to coordinate `n`.
    pub fn coordinate_uniform(&self, n: i64) -> f64 {
        uniform(&mut self.coordinate_rng(n))
    }

    /// Uniforms for every coordinate of `range`, computed in parallel chunks.
    pub fn coordinate_uniforms(&self, range: IndexRange) -> Vec<f64> {
        let len = range.len();
        let mut out = vec![0.0; len];
        out.par_chunks_mut(PAR_CHUNK).enumerate().for_each(|(c, chunk)| {
            let mut rng = self.coordinate_rng(range.first + (c * PAR_CHUNK) as i64);
            for x in chunk.iter_mut() {
                *x = uniform(&mut rng);
            }
        });
        out
    }
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn draw_symbol(m: &ProductMeasure, n: i64, u: f64) -> Symbol {
    let size = m.alphabet_size();
    let mut cum = 0.0;
    for s in 0..size - 1 {
        cum += m.mass(n, s as Symbol);
        if u < cum {
            return s as Symbol;
        }
    }
    // never return a symbol of zero mass because of rounding in the cumulative sum
    (0..size)
        .rev()
        .find(|&s| m.mass(n, s as Symbol) > 0.0)
        .unwrap_or(size - 1) as Symbol
}

/// Independent draws `x_n ~ m_n` for `n` in `range`.
pub fn sample_window(m: &ProductMeasure, range: IndexRange, seeds: &SeedStream) -> Window<Symbol> {
    let stream = seeds.substream("window");
    let u = stream.coordinate_uniforms(range);
    let values: Vec<Symbol> = u
        .par_iter()
        .enumerate()
        .map(|(i, &u)| draw_symbol(m, range.first + i as i64, u))
        .collect();
    Window::new(range.first, values).with_provenance(seeds.root(), m.description())
}

/// Independent draws from the densities of `d` by exact inverse CDF.
pub fn sample_density_window(d: &DensityFamily, range: IndexRange, seeds: &SeedStream) -> Window<f64> {
    let stream = seeds.substream("density");
    let u = stream.coordinate_uniforms(range);
    let values: Vec<f64> = u
        .par_iter()
        .enumerate()
        .map(|(i, &u)| d.at(range.first + i as i64).inverse_cdf(u))
        .collect();
    Window::new(range.first, values).with_provenance(seeds.root(), d.description())
}

/// Whether the word contains the marker block `011`.
pub fn contains_marker(bits: &[Symbol]) -> bool {
    bits.windows(3).any(|w| w == [0, 1, 1])
}

pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

/// Product measure on `range` conditioned on the absence of `011`, by
/// rejection.
pub fn sample_conditioned_filler(
    m: &ProductMeasure,
    range: IndexRange,
    seeds: &SeedStream,
    budget: u64,
) -> Result<Window<Symbol>> {
    m.require_binary()?;
    let stream = seeds.substream("filler");
    let p0: Vec<f64> = range.iter().map(|n| m.p0(n)).collect();
    let mut bits = vec![0 as Symbol; range.len()];
    for attempt in 0..budget {
        let mut rng = stream.rng(attempt);
        for (b, &p) in bits.iter_mut().zip(&p0) {
            *b = if uniform(&mut rng) < p { 0 } else { 1 };
        }
        if !contains_marker(&bits) {
            return Ok(Window::new(range.first, bits).with_provenance(seeds.root(), format!("{} | no 011", m.description())));
        }
    }
    Err(Error::BudgetExceeded {
        attempts: budget,
        rate: 0.0,
    })
}
