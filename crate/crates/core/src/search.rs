//! The three-level search for a rank-3 special dephased log-Hadamard matrix.
//!
//! With b1 fixed to the canonical pattern, the outer loop walks Davey
//! matrices D that can be raised by (b1, b2) with b2 starting (0, 0, …); a
//! representative b2 is generated per D. The inner loops walk (D2, D1)
//! pairs, generate every compatible b3 by tree search, and test each
//! resulting triple: the set V of coefficient triples with balanced linear
//! combinations is reduced against the three unit triples, and only if the
//! reduction R is large enough does a clique search (and, on success, full
//! matrix verification) run.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::davey::{DaveyCatalog, DaveyMatrix};
use crate::error::{Error, Result};
use crate::pruning::{calc_cache, davey_filtered_from_cache, IndexSet, PruneCache};
use crate::zp::{
    canonical_b1, is_independent_of_span2, linear_combination, raise_pair_matrix, rank_mod_p,
    CoefficientTriple, CountMatrix, PrimeParams, ZVector,
};

/// One balanced b' with raise_pair_matrix(b, b') = D.
///
/// Deterministic rule: for each value i the multiset row_multiset(D, i) is
/// consumed in ascending order while scanning b left to right. Any other
/// solution differs only by permuting positions where b holds equal values.
pub fn davey_on_vec(d: &DaveyMatrix, b: &ZVector) -> ZVector {
    let p = d.p();
    assert_eq!(b.len(), p * d.weight(), "vector length does not match p·m");
    let rows: Vec<Vec<u8>> = (0..p).map(|i| d.row_multiset(i)).collect();
    let mut cursors = vec![0usize; p];
    let entries = b
        .as_slice()
        .iter()
        .map(|&x| {
            let i = x as usize;
            let y = *rows[i]
                .get(cursors[i])
                .expect("input vector is not balanced for this weight");
            cursors[i] += 1;
            y
        })
        .collect();
    ZVector::from_raw(entries)
}

struct TreeSearch<'a> {
    p: usize,
    len: usize,
    b1: &'a [u8],
    b2: &'a [u8],
    budget1: Vec<u8>,
    budget2: Vec<u8>,
    out: Vec<u8>,
    results: Vec<ZVector>,
}

impl TreeSearch<'_> {
    fn descend(&mut self, k: usize) {
        if k == self.len {
            self.results.push(ZVector::from_raw(self.out.clone()));
            return;
        }
        let x1 = self.b1[k] as usize * self.p;
        let x2 = self.b2[k] as usize * self.p;
        // The first matrix column must stay all zero, so position 0 only
        // ever tries the value 0.
        let choices = if k == 0 { 1 } else { self.p };
        for y in 0..choices {
            if self.budget1[x1 + y] > 0 && self.budget2[x2 + y] > 0 {
                self.budget1[x1 + y] -= 1;
                self.budget2[x2 + y] -= 1;
                self.out[k] = y as u8;
                self.descend(k + 1);
                self.budget1[x1 + y] += 1;
                self.budget2[x2 + y] += 1;
            }
        }
    }
}

/// All vectors b3 with b3[0] = 0 such that (b1, b3) raises D1 and (b2, b3)
/// raises D2, in depth-first order with candidate values tried ascending.
///
/// Positions are scanned left to right; the candidate set at position k is
/// the set of values with remaining budget in both D1 (row b1[k]) and D2
/// (row b2[k]). Budgets start at the matrix entries and decrement on
/// assignment, so a completed scan raises both matrices exactly.
pub fn davey_on_vec_2x2(
    d1: &DaveyMatrix,
    d2: &DaveyMatrix,
    b1: &ZVector,
    b2: &ZVector,
) -> Vec<ZVector> {
    let p = d1.p();
    debug_assert_eq!(d2.p(), p);
    debug_assert_eq!(b1.len(), b2.len());
    debug_assert_eq!(b1.len(), p * d1.weight());
    let mut search = TreeSearch {
        p,
        len: b1.len(),
        b1: b1.as_slice(),
        b2: b2.as_slice(),
        budget1: d1.entries().to_vec(),
        budget2: d2.entries().to_vec(),
        out: vec![0u8; b1.len()],
        results: Vec::new(),
    };
    search.descend(0);
    search.results
}

/// The set V of coefficient triples whose linear combination of (b1, b2, b3)
/// is balanced, as a bitset over Z_p^3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidSet {
    p: usize,
    bits: Vec<u64>,
    count: usize,
}

impl ValidSet {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            bits: vec![0; (p * p * p).div_ceil(64)],
            count: 0,
        }
    }

    pub fn from_members(p: usize, members: impl IntoIterator<Item = CoefficientTriple>) -> Self {
        let mut set = Self::empty(p);
        for t in members {
            set.insert(t);
        }
        set
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn insert(&mut self, t: CoefficientTriple) {
        let idx = t.to_index(self.p);
        let word = &mut self.bits[idx / 64];
        if *word >> (idx % 64) & 1 == 0 {
            *word |= 1 << (idx % 64);
            self.count += 1;
        }
    }

    pub fn contains(&self, t: CoefficientTriple) -> bool {
        let idx = t.to_index(self.p);
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Members in lexicographic coefficient order.
    pub fn iter(&self) -> impl Iterator<Item = CoefficientTriple> + '_ {
        let total = self.p * self.p * self.p;
        (0..total)
            .filter(move |&idx| self.bits[idx / 64] >> (idx % 64) & 1 == 1)
            .map(move |idx| CoefficientTriple::from_index(idx, self.p))
    }

    pub fn is_closed_under_negation(&self) -> bool {
        self.iter().all(|t| self.contains(t.neg(self.p)))
    }
}

/// Brute force over all p³ coefficient triples: a triple is in V iff its
/// linear combination of (b1, b2, b3) is balanced.
pub fn balanced_linear_combinations(
    b1: &ZVector,
    b2: &ZVector,
    b3: &ZVector,
    params: &PrimeParams,
) -> ValidSet {
    let p = params.p();
    let m = params.m() as u16;
    let len = params.vector_len();
    debug_assert_eq!(b1.len(), len);
    debug_assert_eq!(b2.len(), len);
    debug_assert_eq!(b3.len(), len);

    let mut mult = vec![0u8; p * p];
    for l in 0..p {
        for x in 0..p {
            mult[l * p + x] = (l * x % p) as u8;
        }
    }

    let mut set = ValidSet::empty(p);
    let mut counts = vec![0u16; p];
    let mut partial = vec![0u8; len];
    for l1 in 0..p {
        for l2 in 0..p {
            for (k, slot) in partial.iter_mut().enumerate() {
                let s = mult[l1 * p + b1[k] as usize] + mult[l2 * p + b2[k] as usize];
                *slot = if s >= p as u8 { s - p as u8 } else { s };
            }
            for l3 in 0..p {
                if l1 == 0 && l2 == 0 && l3 == 0 {
                    continue;
                }
                // A scan that never pushes a bucket past m is balanced:
                // p buckets, each ≤ m, totalling m·p.
                let mut ok = true;
                for (k, &base) in partial.iter().enumerate() {
                    let mut v = base + mult[l3 * p + b3[k] as usize];
                    if v >= p as u8 {
                        v -= p as u8;
                    }
                    let c = counts[v as usize] + 1;
                    if c > m {
                        ok = false;
                        break;
                    }
                    counts[v as usize] = c;
                }
                counts.iter_mut().for_each(|c| *c = 0);
                if ok {
                    set.insert(CoefficientTriple::new(l1 as u8, l2 as u8, l3 as u8));
                }
            }
        }
    }
    set
}

/// Members of V adjacent to each of the three unit triples (adjacency of v
/// and w means v − w ∈ V; v = e_i is exempt from the check against e_i).
/// Any clique containing the unit triples lives inside this set.
pub fn reduce_valid_set(v: &ValidSet) -> Vec<CoefficientTriple> {
    let p = v.p();
    let units = [
        CoefficientTriple::unit(0),
        CoefficientTriple::unit(1),
        CoefficientTriple::unit(2),
    ];
    v.iter()
        .filter(|t| units.iter().all(|e| t == e || v.contains(t.sub(e, p))))
        .collect()
}

/// Branch-and-bound search for a clique Λ ⊆ R with the three unit triples,
/// |Λ| ≥ threshold, and all pairwise differences in V. Returns the first
/// clique found, or None when no qualifying clique exists.
///
/// Callers gate on |R| ≥ threshold; anything smaller proves non-existence
/// without a search, so invoking this below the threshold is an input error.
pub fn clique_fallback(
    v: &ValidSet,
    r: &[CoefficientTriple],
    threshold: usize,
) -> Result<Option<Vec<CoefficientTriple>>> {
    if r.len() < threshold {
        return Err(Error::Precondition(format!(
            "reduced set has {} members, below the clique threshold {threshold}",
            r.len()
        )));
    }
    let p = v.p();
    let units = [
        CoefficientTriple::unit(0),
        CoefficientTriple::unit(1),
        CoefficientTriple::unit(2),
    ];
    let mut unit_positions = Vec::with_capacity(3);
    for e in &units {
        match r.iter().position(|t| t == e) {
            Some(pos) => unit_positions.push(pos),
            None => return Ok(None),
        }
    }
    for (i, a) in units.iter().enumerate() {
        for b in &units[i + 1..] {
            if !v.contains(a.sub(b, p)) {
                return Ok(None);
            }
        }
    }

    let n = r.len();
    let adjacent = |i: usize, j: usize| v.contains(r[i].sub(&r[j], p));
    let mut adj: Vec<IndexSet> = (0..n).map(|_| IndexSet::empty(n)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && adjacent(i, j) {
                adj[i].insert(j);
            }
        }
    }

    let mut candidates = IndexSet::full(n);
    for &u in &unit_positions {
        candidates.intersect_with(&adj[u]);
    }
    let mut clique = unit_positions.clone();

    fn extend(
        clique: &mut Vec<usize>,
        candidates: &IndexSet,
        adj: &[IndexSet],
        threshold: usize,
    ) -> bool {
        if clique.len() >= threshold {
            return true;
        }
        if clique.len() + candidates.count() < threshold {
            return false;
        }
        let mut remaining = candidates.clone();
        for vertex in candidates.iter() {
            remaining.remove(vertex);
            let mut next = remaining.clone();
            next.intersect_with(&adj[vertex]);
            clique.push(vertex);
            if extend(clique, &next, adj, threshold) {
                return true;
            }
            clique.pop();
            if clique.len() + remaining.count() + 1 < threshold {
                return false;
            }
        }
        false
    }

    if extend(&mut clique, &candidates, &adj, threshold) {
        Ok(Some(clique.into_iter().map(|i| r[i]).collect()))
    } else {
        Ok(None)
    }
}

/// A candidate triple together with the three matrices it raises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleContext {
    pub b1: ZVector,
    pub b2: ZVector,
    pub b3: ZVector,
    /// Raised by (b1, b2).
    pub d: DaveyMatrix,
    /// Raised by (b1, b3).
    pub d1: DaveyMatrix,
    /// Raised by (b2, b3).
    pub d2: DaveyMatrix,
}

impl TripleContext {
    /// Validates that the three matrices are exactly the ones raised by the
    /// vector pairs. Rank is asserted later by [`verify_counterexample`].
    pub fn new(
        b1: ZVector,
        b2: ZVector,
        b3: ZVector,
        d: DaveyMatrix,
        d1: DaveyMatrix,
        d2: DaveyMatrix,
        params: &PrimeParams,
    ) -> Result<Self> {
        let pairs = [(&b1, &b2, &d), (&b1, &b3, &d1), (&b2, &b3, &d2)];
        for (v, w, matrix) in pairs {
            let raised = raise_pair_matrix(v, w, params)?;
            if !matrix.matches_counts(&raised) {
                return Err(Error::Validation(
                    "matrix is not raised by its vector pair".into(),
                ));
            }
        }
        Ok(Self { b1, b2, b3, d, d1, d2 })
    }
}

/// A fully verified rank-3 special dephased log-Hadamard matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub context: TripleContext,
    pub lambda: Vec<CoefficientTriple>,
    pub matrix: Vec<ZVector>,
}

/// Assembles the mp×mp matrix from the clique certificate and checks every
/// required property, naming the first violated condition on failure.
///
/// Rows are the zero row plus the linear combinations of exactly mp−1
/// members of Λ, with the unit triples ordered first so the second row is
/// the canonical pattern.
pub fn verify_counterexample(
    ctx: &TripleContext,
    lambda: &[CoefficientTriple],
    params: &PrimeParams,
) -> Result<Counterexample> {
    let p = params.p();
    let len = params.vector_len();
    let threshold = len - 1;
    let units = [
        CoefficientTriple::unit(0),
        CoefficientTriple::unit(1),
        CoefficientTriple::unit(2),
    ];
    for e in &units {
        if !lambda.contains(e) {
            return Err(Error::Precondition(format!(
                "clique certificate is missing the unit triple {:?}",
                e.0
            )));
        }
    }
    if lambda.len() < threshold {
        return Err(Error::Precondition(format!(
            "clique certificate has {} members, need at least {threshold}",
            lambda.len()
        )));
    }

    let mut ordered: Vec<CoefficientTriple> = units.to_vec();
    ordered.extend(lambda.iter().filter(|t| !units.contains(t)).copied());
    ordered.truncate(threshold);

    let mut rows = Vec::with_capacity(len);
    rows.push(ZVector::new(vec![0; len], params)?);
    for t in &ordered {
        rows.push(linear_combination(*t, &ctx.b1, &ctx.b2, &ctx.b3, params)?);
    }

    if rows[0].as_slice().iter().any(|&e| e != 0) {
        return Err(Error::Verification("first row is not all zero".into()));
    }
    if rows.iter().any(|row| row[0] != 0) {
        return Err(Error::Verification("first column is not all zero".into()));
    }
    if rows[1] != canonical_b1(params) {
        return Err(Error::Verification(
            "second row is not the canonical pattern".into(),
        ));
    }
    if rank_mod_p(&rows, p) != 3 {
        return Err(Error::Verification("matrix rank is not 3".into()));
    }
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let diff: Vec<u8> = rows[i]
                .as_slice()
                .iter()
                .zip(rows[j].as_slice())
                .map(|(&a, &b)| ((a as usize + p - b as usize) % p) as u8)
                .collect();
            if !crate::zp::balanced_slice(&diff, p, params.m()) {
                return Err(Error::Verification(format!(
                    "difference of rows {i} and {j} is not balanced"
                )));
            }
        }
    }

    Ok(Counterexample {
        context: ctx.clone(),
        lambda: ordered,
        matrix: rows,
    })
}

/// Which slice of the work units this run covers: unit u belongs to the
/// shard when u mod count == index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub index: u64,
    pub count: u64,
}

impl Shard {
    pub fn new(index: u64, count: u64) -> Result<Self> {
        if count == 0 || index >= count {
            return Err(Error::InvalidParams(format!(
                "shard index {index} must be below shard count {count}"
            )));
        }
        Ok(Self { index, count })
    }

    /// The whole search in one shard.
    pub fn full() -> Self {
        Self { index: 0, count: 1 }
    }

    pub fn is_full(&self) -> bool {
        self.count == 1
    }
}

impl std::str::FromStr for Shard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, n) = s
            .split_once('/')
            .ok_or_else(|| Error::Parse(format!("shard '{s}' must have the form K/N")))?;
        let index = k
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("bad shard index: {e}")))?;
        let count = n
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("bad shard count: {e}")))?;
        Shard::new(index, count)
    }
}

impl std::fmt::Display for Shard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.index, self.count)
    }
}

/// Aggregate counters and findings from one search run (or one shard of it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub prime: usize,
    pub weight: usize,
    pub davey_count: u64,
    pub outer_matrices_examined: u64,
    pub d2_pairs_examined: u64,
    pub d1_candidates_after_filter: u64,
    pub b3_vectors_tested: u64,
    pub triples_tested: u64,
    pub max_reduced_set_size: u64,
    pub threshold: u64,
    pub clique_fallback_invocations: u64,
    pub counterexamples: Vec<Counterexample>,
    pub elapsed_seconds: f64,
    pub shard: Shard,
}

impl SearchReport {
    /// Equality on everything except wall-clock time.
    pub fn same_findings(&self, other: &SearchReport) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.elapsed_seconds = 0.0;
        b.elapsed_seconds = 0.0;
        a == b
    }
}

/// Merges per-shard reports: counters add, maxima take the maximum,
/// counterexamples concatenate in input order, elapsed times add.
pub fn merge_reports(reports: &[SearchReport], shard: Shard) -> Result<SearchReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParams("cannot merge zero reports".into()))?;
    let mut merged = SearchReport {
        counterexamples: Vec::new(),
        elapsed_seconds: 0.0,
        shard,
        ..first.clone()
    };
    merged.outer_matrices_examined = 0;
    merged.d2_pairs_examined = 0;
    merged.d1_candidates_after_filter = 0;
    merged.b3_vectors_tested = 0;
    merged.triples_tested = 0;
    merged.max_reduced_set_size = 0;
    merged.clique_fallback_invocations = 0;
    for r in reports {
        if r.prime != first.prime || r.weight != first.weight || r.davey_count != first.davey_count
        {
            return Err(Error::InvalidParams(
                "cannot merge reports from different runs".into(),
            ));
        }
        merged.outer_matrices_examined += r.outer_matrices_examined;
        merged.d2_pairs_examined += r.d2_pairs_examined;
        merged.d1_candidates_after_filter += r.d1_candidates_after_filter;
        merged.b3_vectors_tested += r.b3_vectors_tested;
        merged.triples_tested += r.triples_tested;
        merged.max_reduced_set_size = merged.max_reduced_set_size.max(r.max_reduced_set_size);
        merged.clique_fallback_invocations += r.clique_fallback_invocations;
        merged.counterexamples.extend(r.counterexamples.iter().cloned());
        merged.elapsed_seconds += r.elapsed_seconds;
    }
    Ok(merged)
}

/// Everything a search run shares read-only: parameters, the Davey catalog,
/// and the prune cache built against it.
pub struct SearchContext {
    params: PrimeParams,
    catalog: DaveyCatalog,
    cache: PruneCache,
}

impl SearchContext {
    /// Builds catalog and cache from scratch.
    pub fn build(params: PrimeParams) -> Self {
        let catalog = DaveyCatalog::build(&params);
        let cache = calc_cache(&params, &catalog);
        Self {
            params,
            catalog,
            cache,
        }
    }

    /// Assembles a context from preloaded parts, checking they agree.
    pub fn from_parts(params: PrimeParams, catalog: DaveyCatalog, cache: PruneCache) -> Result<Self> {
        if catalog.p() != params.p() || catalog.weight() != params.m() {
            return Err(Error::Validation("catalog does not match parameters".into()));
        }
        if cache.p() != params.p() || cache.m() != params.m() || cache.catalog_len() != catalog.len()
        {
            return Err(Error::Validation("cache does not match catalog".into()));
        }
        Ok(Self {
            params,
            catalog,
            cache,
        })
    }

    pub fn params(&self) -> &PrimeParams {
        &self.params
    }

    pub fn catalog(&self) -> &DaveyCatalog {
        &self.catalog
    }

    pub fn cache(&self) -> &PruneCache {
        &self.cache
    }
}

/// Progress observer: called with (units completed, units in shard).
pub type ProgressFn<'a> = &'a (dyn Fn(u64, u64) + Sync);

#[derive(Debug, Default, Clone)]
struct PartialOutcome {
    outer_matrices_examined: u64,
    d2_pairs_examined: u64,
    d1_candidates_after_filter: u64,
    b3_vectors_tested: u64,
    triples_tested: u64,
    max_reduced_set_size: u64,
    clique_fallback_invocations: u64,
    counterexamples: Vec<(u64, Counterexample)>,
}

impl PartialOutcome {
    fn merge(mut self, other: PartialOutcome) -> PartialOutcome {
        self.outer_matrices_examined += other.outer_matrices_examined;
        self.d2_pairs_examined += other.d2_pairs_examined;
        self.d1_candidates_after_filter += other.d1_candidates_after_filter;
        self.b3_vectors_tested += other.b3_vectors_tested;
        self.triples_tested += other.triples_tested;
        self.max_reduced_set_size = self.max_reduced_set_size.max(other.max_reduced_set_size);
        self.clique_fallback_invocations += other.clique_fallback_invocations;
        self.counterexamples.extend(other.counterexamples);
        self
    }
}

/// Runs the search for one (p, m) over the given shard of work units.
///
/// A work unit is one (D, D2) pair; unit numbering follows catalog order
/// with D restricted to outer matrices (positive (0,0) and (1,0) entries,
/// so that the generated b2 starts with two zeros). Workers process units
/// independently; the merged report is identical for any worker count.
pub fn run_search(ctx: &SearchContext, shard: Shard) -> Result<SearchReport> {
    run_search_with_progress(ctx, shard, None)
}

pub fn run_search_with_progress(
    ctx: &SearchContext,
    shard: Shard,
    progress: Option<ProgressFn<'_>>,
) -> Result<SearchReport> {
    let params = ctx.params;
    let p = params.p();
    let m = params.m();
    if m <= 1 || m >= p {
        return Err(Error::InvalidParams(format!(
            "weight must satisfy 1 < m < p, got m={m}, p={p}"
        )));
    }
    Shard::new(shard.index, shard.count)?;

    let start = Instant::now();
    let b1 = canonical_b1(&params);
    let catalog = &ctx.catalog;
    let n = catalog.len() as u64;

    // b2 must begin (0, 0, …): position 0 pairs b1's 0 with 0 (entry (0,0),
    // guaranteed in the catalog) and position 1 pairs b1's 1 with 0, which
    // requires a positive (1, 0) entry.
    let outer: Vec<usize> = (0..catalog.len())
        .filter(|&i| catalog.get(i).get(1, 0) > 0)
        .collect();

    let total_units = outer.len() as u64 * n;
    let unit_count = if shard.index < total_units {
        (total_units - shard.index).div_ceil(shard.count)
    } else {
        0
    };

    let done = AtomicU64::new(0);
    let partial = (0..unit_count)
        .into_par_iter()
        .map(|j| {
            let unit = shard.index + j * shard.count;
            let outcome = process_unit(ctx, &b1, &outer, unit);
            if let Some(f) = progress {
                let completed = done.fetch_add(1, Ordering::Relaxed) + 1;
                f(completed, unit_count);
            }
            outcome
        })
        .try_reduce(PartialOutcome::default, |a, b| Ok(a.merge(b)))?;

    let mut counterexamples = partial.counterexamples;
    counterexamples.sort_by_key(|(unit, _)| *unit);

    Ok(SearchReport {
        prime: p,
        weight: m,
        davey_count: n,
        outer_matrices_examined: partial.outer_matrices_examined,
        d2_pairs_examined: partial.d2_pairs_examined,
        d1_candidates_after_filter: partial.d1_candidates_after_filter,
        b3_vectors_tested: partial.b3_vectors_tested,
        triples_tested: partial.triples_tested,
        max_reduced_set_size: partial.max_reduced_set_size,
        threshold: (m * p - 1) as u64,
        clique_fallback_invocations: partial.clique_fallback_invocations,
        counterexamples: counterexamples.into_iter().map(|(_, c)| c).collect(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        shard,
    })
}

fn process_unit(
    ctx: &SearchContext,
    b1: &ZVector,
    outer: &[usize],
    unit: u64,
) -> Result<PartialOutcome> {
    let params = &ctx.params;
    let p = params.p();
    let m = params.m();
    let threshold = m * p - 1;
    let catalog = &ctx.catalog;
    let n = catalog.len() as u64;

    let d_index = outer[(unit / n) as usize];
    let d2_index = (unit % n) as usize;
    let d = catalog.get(d_index);
    let d2 = catalog.get(d2_index);

    let mut out = PartialOutcome::default();
    // Each outer matrix is counted exactly once globally: by the unit that
    // pairs it with catalog index 0.
    if d2_index == 0 {
        out.outer_matrices_examined = 1;
    }
    out.d2_pairs_examined = 1;

    let b2 = davey_on_vec(d, b1);
    debug_assert_eq!(&b2.as_slice()[..2], &[0, 0]);
    debug_assert!(d.matches_counts(&raise_pair_matrix(b1, &b2, params)?));

    let candidates = davey_filtered_from_cache(d, d2, &ctx.cache);
    out.d1_candidates_after_filter = candidates.count() as u64;

    for d1_index in candidates.iter() {
        let d1 = catalog.get(d1_index);
        let b3s = davey_on_vec_2x2(d1, d2, b1, &b2);
        out.b3_vectors_tested += b3s.len() as u64;
        for b3 in b3s {
            debug_assert!(b3[0] == 0);
            debug_assert!(d1.matches_counts(&raise_pair_matrix(b1, &b3, params)?));
            debug_assert!(d2.matches_counts(&raise_pair_matrix(&b2, &b3, params)?));
            if !is_independent_of_span2(&b3, b1, &b2, p) {
                continue;
            }
            out.triples_tested += 1;
            let v = balanced_linear_combinations(b1, &b2, &b3, params);
            let r = reduce_valid_set(&v);
            out.max_reduced_set_size = out.max_reduced_set_size.max(r.len() as u64);
            if r.len() >= threshold {
                out.clique_fallback_invocations += 1;
                if let Some(lambda) = clique_fallback(&v, &r, threshold)? {
                    let triple = TripleContext::new(
                        b1.clone(),
                        b2.clone(),
                        b3.clone(),
                        d.clone(),
                        d1.clone(),
                        d2.clone(),
                        params,
                    )?;
                    let counterexample = verify_counterexample(&triple, &lambda, params)?;
                    out.counterexamples.push((unit, counterexample));
                }
            }
        }
    }
    Ok(out)
}

/// Entrywise comparison between a raised count matrix and a Davey matrix.
trait MatchesCounts {
    fn matches_counts(&self, counts: &CountMatrix) -> bool;
}

impl MatchesCounts for DaveyMatrix {
    fn matches_counts(&self, counts: &CountMatrix) -> bool {
        self.p() == counts.p()
            && (0..self.p() * self.p())
                .all(|idx| self.entries()[idx] as u32 == counts.counts()[idx])
    }
}
