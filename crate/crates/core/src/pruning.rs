//! Matching-based pruning of candidate D1 matrices.
//!
//! For a pivot value v, the positions of b2 holding v carry a multiset `a`
//! of values above them (in b1, prescribed by D) and a multiset `b` below
//! them (in b3, prescribed by D2). Any b3 realizing both induces a perfect
//! matching between `a` and `b`, and every matched pair (x, y) consumes one
//! unit of D1[x][y]. A D1 that admits no matching for some pivot can be
//! skipped without running the tree search. The admissible sets for all
//! (a, b) pairs are precomputed once per catalog.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::davey::{DaveyCatalog, DaveyMatrix};
use crate::error::{Error, Result};
use crate::zp::PrimeParams;

/// A set of catalog indices, stored as a bitset over catalog positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    domain: usize,
    bits: Vec<u64>,
}

impl IndexSet {
    pub fn empty(domain: usize) -> Self {
        Self {
            domain,
            bits: vec![0; domain.div_ceil(64)],
        }
    }

    pub fn full(domain: usize) -> Self {
        let mut set = Self {
            domain,
            bits: vec![!0u64; domain.div_ceil(64)],
        };
        let spare = set.bits.len() * 64 - domain;
        if spare > 0 {
            *set.bits.last_mut().unwrap() >>= spare;
        }
        set
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn insert(&mut self, index: usize) {
        debug_assert!(index < self.domain);
        self.bits[index / 64] |= 1 << (index % 64);
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.domain && self.bits[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn remove(&mut self, index: usize) {
        debug_assert!(index < self.domain);
        self.bits[index / 64] &= !(1 << (index % 64));
    }

    pub fn intersect_with(&mut self, other: &IndexSet) {
        debug_assert_eq!(self.domain, other.domain);
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= b;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_disjoint_from_all(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(word_idx, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(word_idx * 64 + bit)
            })
        })
    }
}

/// A perfect matching between two size-m multisets, as a sorted multiset of
/// (left, right) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching(Vec<(u8, u8)>);

impl Matching {
    pub fn pairs(&self) -> &[(u8, u8)] {
        &self.0
    }
}

/// All distinct perfect matchings between the multisets a and b.
///
/// Working position by position through the sorted `a`, each element picks a
/// remaining partner from `b`; runs of equal elements in `a` are forced to
/// pick non-decreasing partners so that each matching (as a multiset of
/// pairs) is generated exactly once.
pub fn enumerate_matchings(a: &[u8], b: &[u8]) -> Result<Vec<Matching>> {
    if a.len() != b.len() {
        return Err(Error::MultisetSizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();

    let mut taken = vec![false; b.len()];
    let mut pairs: Vec<(u8, u8)> = Vec::with_capacity(a.len());
    let mut out = Vec::new();
    fn rec(
        a: &[u8],
        b: &[u8],
        taken: &mut [bool],
        pairs: &mut Vec<(u8, u8)>,
        out: &mut Vec<Matching>,
    ) {
        let pos = pairs.len();
        if pos == a.len() {
            let mut sorted = pairs.clone();
            sorted.sort_unstable();
            out.push(Matching(sorted));
            return;
        }
        // Partner floor keeps equal left elements in non-decreasing order.
        let floor = if pos > 0 && a[pos] == a[pos - 1] {
            pairs[pos - 1].1
        } else {
            0
        };
        let mut last: Option<u8> = None;
        for (k, &y) in b.iter().enumerate() {
            if taken[k] || y < floor || last == Some(y) {
                continue;
            }
            last = Some(y);
            taken[k] = true;
            pairs.push((a[pos], y));
            rec(a, b, taken, pairs, out);
            pairs.pop();
            taken[k] = false;
        }
    }
    rec(&a, &b, &mut taken, &mut pairs, &mut out);
    Ok(out)
}

/// True iff some matching fits within the entries of D1: every pair (x, y)
/// occurring c times in the matching needs D1[x][y] ≥ c.
pub fn matrix_admits_matching(d1: &DaveyMatrix, matchings: &[Matching]) -> bool {
    'matching: for m in matchings {
        let pairs = m.pairs();
        let mut i = 0;
        while i < pairs.len() {
            let (x, y) = pairs[i];
            let mut run = 1;
            while i + run < pairs.len() && pairs[i + run] == (x, y) {
                run += 1;
            }
            if (d1.get(x as usize, y as usize) as usize) < run {
                continue 'matching;
            }
            i += run;
        }
        return true;
    }
    false
}

/// All size-m multisets over Z_p in lexicographic order, as sorted vectors.
pub fn multisets_of_size(p: usize, m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    fn rec(p: usize, m: usize, from: u8, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        for v in from..p as u8 {
            current.push(v);
            rec(p, m, v, current, out);
            current.pop();
        }
    }
    rec(p, m, 0, &mut current, &mut out);
    out
}

/// Precomputed table: for every pair (a, b) of size-m multisets over Z_p,
/// the set of catalog indices whose matrix admits at least one matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneCache {
    p: usize,
    m: usize,
    catalog_len: usize,
    multisets: Vec<Vec<u8>>,
    /// Indexed by rank(a) * multisets.len() + rank(b).
    entries: Vec<IndexSet>,
}

impl PruneCache {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn catalog_len(&self) -> usize {
        self.catalog_len
    }

    pub fn num_keys(&self) -> usize {
        self.entries.len()
    }

    fn multiset_rank(&self, ms: &[u8]) -> usize {
        self.multisets
            .binary_search_by(|probe| probe.as_slice().cmp(ms))
            .expect("multiset outside the key domain")
    }

    /// The admissible index set for the key (a, b); both must be sorted
    /// size-m multisets over Z_p.
    pub fn lookup(&self, a: &[u8], b: &[u8]) -> &IndexSet {
        &self.entries[self.multiset_rank(a) * self.multisets.len() + self.multiset_rank(b)]
    }
}

/// Builds the full cache for a catalog: every key (a, b) over size-m
/// multisets of Z_p, with the admissible catalog indices per key.
pub fn calc_cache(params: &PrimeParams, catalog: &DaveyCatalog) -> PruneCache {
    let p = params.p();
    let m = params.m();
    let multisets = multisets_of_size(p, m);
    let n = multisets.len();

    let entries: Vec<IndexSet> = (0..n * n)
        .into_par_iter()
        .map(|key_idx| {
            let a = &multisets[key_idx / n];
            let b = &multisets[key_idx % n];
            let matchings = enumerate_matchings(a, b).expect("equal-size multisets");
            let mut set = IndexSet::empty(catalog.len());
            for (idx, d1) in catalog.iter().enumerate() {
                if matrix_admits_matching(d1, &matchings) {
                    set.insert(idx);
                }
            }
            set
        })
        .collect();

    PruneCache {
        p,
        m,
        catalog_len: catalog.len(),
        multisets,
        entries,
    }
}

/// Candidate D1 indices compatible with D (raised by (b1, b2)) and D2 (the
/// target for (b2, b3)): the intersection over pivot values v of the cache
/// entries for (column_multiset(D, v), row_multiset(D2, v)).
///
/// Sound: every D1 for which the tree search finds a b3 is in the result.
pub fn davey_filtered_from_cache(
    d: &DaveyMatrix,
    d2: &DaveyMatrix,
    cache: &PruneCache,
) -> IndexSet {
    let mut result = IndexSet::full(cache.catalog_len);
    for v in 0..cache.p {
        let a = d.column_multiset(v);
        let b = d2.row_multiset(v);
        result.intersect_with(cache.lookup(&a, &b));
        if result.is_disjoint_from_all() {
            break;
        }
    }
    result
}

impl PruneCache {
    /// File image: header "p m catalog_hash", then one line per key:
    /// "a-multiset|b-multiset|sorted index list".
    pub fn to_file_string(&self, catalog_hash: u64) -> String {
        let n = self.multisets.len();
        let mut s = format!("{} {} {:016x}\n", self.p, self.m, catalog_hash);
        for (key_idx, set) in self.entries.iter().enumerate() {
            let a = &self.multisets[key_idx / n];
            let b = &self.multisets[key_idx % n];
            push_multiset(&mut s, a);
            s.push('|');
            push_multiset(&mut s, b);
            s.push('|');
            let mut first = true;
            for idx in set.iter() {
                if !first {
                    s.push(' ');
                }
                let _ = write!(s, "{idx}");
                first = false;
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path, catalog_hash: u64) -> Result<()> {
        std::fs::write(path, self.to_file_string(catalog_hash))?;
        Ok(())
    }

    /// Loads a cache file, checking it matches the parameters and the exact
    /// catalog it was built against (by content hash).
    pub fn load(path: &Path, params: &PrimeParams, catalog: &DaveyCatalog) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty cache file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [p_str, m_str, hash_str] = fields[..] else {
            return Err(Error::Parse("cache header must be 'p m catalog_hash'".into()));
        };
        let p: usize = p_str.parse().map_err(|e| Error::Parse(format!("bad p: {e}")))?;
        let m: usize = m_str.parse().map_err(|e| Error::Parse(format!("bad m: {e}")))?;
        let hash = u64::from_str_radix(hash_str, 16)
            .map_err(|e| Error::Parse(format!("bad catalog hash: {e}")))?;
        if p != params.p() || m != params.m() {
            return Err(Error::Validation(format!(
                "cache file is for p={p} m={m}, expected p={} m={}",
                params.p(),
                params.m()
            )));
        }
        if hash != catalog.content_hash() {
            return Err(Error::Validation(
                "cache file was built against a different catalog".into(),
            ));
        }
        let multisets = multisets_of_size(p, m);
        let n = multisets.len();
        let mut entries = Vec::with_capacity(n * n);
        for (key_idx, line) in lines.enumerate() {
            let mut parts = line.split('|');
            let (Some(a_str), Some(b_str), Some(idx_str), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse(format!("cache line {key_idx} malformed")));
            };
            let a = parse_multiset(a_str)?;
            let b = parse_multiset(b_str)?;
            if key_idx >= n * n
                || a != multisets[key_idx / n]
                || b != multisets[key_idx % n]
            {
                return Err(Error::Validation(format!(
                    "cache line {key_idx} has keys out of order"
                )));
            }
            let mut set = IndexSet::empty(catalog.len());
            for token in idx_str.split_whitespace() {
                let idx: usize = token
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad index: {e}")))?;
                if idx >= catalog.len() {
                    return Err(Error::Validation(format!(
                        "cache index {idx} outside catalog of {} matrices",
                        catalog.len()
                    )));
                }
                set.insert(idx);
            }
            entries.push(set);
        }
        if entries.len() != n * n {
            return Err(Error::Validation(format!(
                "cache file has {} keys, expected {}",
                entries.len(),
                n * n
            )));
        }
        Ok(Self {
            p,
            m,
            catalog_len: catalog.len(),
            multisets,
            entries,
        })
    }
}

fn push_multiset(s: &mut String, ms: &[u8]) {
    for (i, v) in ms.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
}

fn parse_multiset(s: &str) -> Result<Vec<u8>> {
    s.split_whitespace()
        .map(|t| t.parse::<u8>().map_err(|e| Error::Parse(format!("bad multiset: {e}"))))
        .collect()
}

/// Exhaustive matching oracle for tests: walk all |a|! assignments and
/// collapse exact duplicates.
#[cfg(test)]
pub(crate) fn matchings_by_factorial_enumeration(a: &[u8], b: &[u8]) -> (usize, Vec<Matching>) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let mut order: Vec<usize> = (0..b.len()).collect();
    let mut raw = 0usize;
    let mut seen = HashSet::new();
    // Heap's algorithm over the index order of b.
    fn heaps(
        k: usize,
        order: &mut Vec<usize>,
        a: &[u8],
        b: &[u8],
        raw: &mut usize,
        seen: &mut HashSet<Matching>,
    ) {
        if k == 1 {
            *raw += 1;
            let mut pairs: Vec<(u8, u8)> = a
                .iter()
                .zip(order.iter())
                .map(|(&x, &k)| (x, b[k]))
                .collect();
            pairs.sort_unstable();
            seen.insert(Matching(pairs));
            return;
        }
        for i in 0..k {
            heaps(k - 1, order, a, b, raw, seen);
            if k % 2 == 0 {
                order.swap(i, k - 1);
            } else {
                order.swap(0, k - 1);
            }
        }
    }
    heaps(order.len(), &mut order, &a, &b, &mut raw, &mut seen);
    let mut collapsed: Vec<Matching> = seen.into_iter().collect();
    collapsed.sort();
    (raw, collapsed)
}
