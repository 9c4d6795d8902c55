//! Davey matrices: p×p nonnegative-integer matrices whose row sums, column
//! sums, and wrap-around diagonal sums all equal the weight m.
//!
//! Every such matrix is a sum of m permutation matrices, which is what the
//! enumeration exploits: permutation matrices are grouped by their diagonal
//! sum profile (the key), and only key multisets that add up to (m, …, m)
//! can contribute.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zp::{CountMatrix, PrimeParams};

/// True iff all p row sums, p column sums, and p wrap-around diagonal sums
/// of the count matrix equal the weight.
pub fn is_davey(m: &CountMatrix, weight: usize) -> bool {
    sums_all_equal(m.p(), weight as u64, |i, j| m.get(i, j) as u64)
}

fn sums_all_equal(p: usize, weight: u64, at: impl Fn(usize, usize) -> u64) -> bool {
    for i in 0..p {
        let row: u64 = (0..p).map(|j| at(i, j)).sum();
        if row != weight {
            return false;
        }
    }
    for j in 0..p {
        let col: u64 = (0..p).map(|i| at(i, j)).sum();
        if col != weight {
            return false;
        }
    }
    for s in 0..p {
        let diag: u64 = (0..p).map(|i| at(i, (i + s) % p)).sum();
        if diag != weight {
            return false;
        }
    }
    true
}

/// A validated Davey matrix of a fixed weight, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DaveyMatrix {
    p: usize,
    weight: usize,
    entries: Box<[u8]>,
}

impl DaveyMatrix {
    pub fn try_new(p: usize, weight: usize, entries: Vec<u8>) -> Result<Self> {
        if entries.len() != p * p {
            return Err(Error::Validation(format!(
                "expected {} entries for a {p}x{p} matrix, got {}",
                p * p,
                entries.len()
            )));
        }
        if !sums_all_equal(p, weight as u64, |i, j| entries[i * p + j] as u64) {
            return Err(Error::Validation(format!(
                "matrix violates the weight-{weight} sum constraints"
            )));
        }
        Ok(Self {
            p,
            weight,
            entries: entries.into_boxed_slice(),
        })
    }

    /// Constructor for matrices that are Davey by construction.
    fn from_raw(p: usize, weight: usize, entries: Box<[u8]>) -> Self {
        debug_assert!(sums_all_equal(p, weight as u64, |i, j| entries[i * p + j] as u64));
        Self { p, weight, entries }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weight(&self) -> usize {
        self.weight
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.p + j]
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// The multiset of row indices i, each with multiplicity entries[i][j].
    /// Sorted ascending; size equals the weight.
    pub fn column_multiset(&self, j: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.weight);
        for i in 0..self.p {
            for _ in 0..self.get(i, j) {
                out.push(i as u8);
            }
        }
        out
    }

    /// The multiset of column indices j, each with multiplicity entries[i][j].
    /// Sorted ascending; size equals the weight.
    pub fn row_multiset(&self, i: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.weight);
        for j in 0..self.p {
            for _ in 0..self.get(i, j) {
                out.push(j as u8);
            }
        }
        out
    }

    pub fn transpose(&self) -> DaveyMatrix {
        let mut entries = vec![0u8; self.p * self.p].into_boxed_slice();
        for i in 0..self.p {
            for j in 0..self.p {
                entries[j * self.p + i] = self.get(i, j);
            }
        }
        DaveyMatrix::from_raw(self.p, self.weight, entries)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.p).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Canonical text record: "p weight e00 e01 … e(p-1)(p-1)".
    pub fn to_record(&self) -> String {
        let mut s = format!("{} {}", self.p, self.weight);
        for &e in self.entries.iter() {
            let _ = write!(s, " {e}");
        }
        s
    }

    /// Parses a record produced by [`Self::to_record`], re-validating the
    /// sum constraints.
    pub fn from_record(record: &str) -> Result<Self> {
        let mut tokens = record.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("truncated record: missing {what}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let p = next("matrix size")?;
        let weight = next("weight")?;
        let mut entries = Vec::with_capacity(p * p);
        for k in 0..p * p {
            let e = next(&format!("entry {k}"))?;
            if e > u8::MAX as usize {
                return Err(Error::Parse(format!("entry {e} out of range")));
            }
            entries.push(e as u8);
        }
        if tokens.next().is_some() {
            return Err(Error::Parse("trailing tokens after matrix entries".into()));
        }
        Self::try_new(p, weight, entries)
    }
}

/// Diagonal sum profile of a permutation matrix: key[s] = Σ_i M[i][(i+s) mod p].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiagonalKey(Box<[u8]>);

impl DiagonalKey {
    /// Key of the permutation matrix with ones at (i, σ(i)).
    pub fn of_permutation(sigma: &[u8]) -> Self {
        let p = sigma.len();
        let mut key = vec![0u8; p];
        for (i, &si) in sigma.iter().enumerate() {
            key[(si as usize + p - i) % p] += 1;
        }
        Self(key.into_boxed_slice())
    }

    pub fn components(&self) -> &[u8] {
        &self.0
    }
}

fn permutations(p: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(p);
    let mut used = vec![false; p];
    fn rec(p: usize, current: &mut Vec<u8>, used: &mut [bool], out: &mut Vec<Vec<u8>>) {
        if current.len() == p {
            out.push(current.clone());
            return;
        }
        for v in 0..p {
            if !used[v] {
                used[v] = true;
                current.push(v as u8);
                rec(p, current, used, out);
                current.pop();
                used[v] = false;
            }
        }
    }
    rec(p, &mut current, &mut used, &mut out);
    out
}

/// All weight-m Davey matrices, including those with a zero (0,0) entry,
/// sorted row-major lexicographically and deduplicated.
///
/// Enumeration: group the p! permutation matrices by diagonal key, walk all
/// multisets of m keys whose componentwise sum is (m, …, m), and within each
/// chosen key form every multiset of member matrices (repetition allowed).
/// Distinct decompositions can produce the same matrix, so results are
/// deduplicated before sorting.
pub fn enumerate_davey_matrices(params: &PrimeParams) -> Vec<DaveyMatrix> {
    let p = params.p();
    let m = params.m();

    let mut groups: HashMap<DiagonalKey, Vec<Vec<u8>>> = HashMap::new();
    for sigma in permutations(p) {
        groups.entry(DiagonalKey::of_permutation(&sigma)).or_default().push(sigma);
    }
    let mut keys: Vec<&DiagonalKey> = groups.keys().collect();
    keys.sort();

    let mut seen: HashSet<Box<[u8]>> = HashSet::new();
    let mut key_counts: Vec<(usize, usize)> = Vec::new(); // (key index, multiplicity)
    let mut sum = vec![0usize; p];
    enumerate_key_multisets(&keys, m, m, 0, &mut sum, &mut key_counts, &mut |chosen| {
        let mut acc = vec![0u8; p * p];
        expand_matrix_choices(&keys, &groups, chosen, 0, &mut acc, &mut |entries| {
            if !seen.contains(entries) {
                seen.insert(entries.to_vec().into_boxed_slice());
            }
        });
    });

    let mut out: Vec<DaveyMatrix> = seen
        .into_iter()
        .map(|entries| DaveyMatrix::from_raw(p, m, entries))
        .collect();
    out.sort();
    out
}

/// Recursively picks key multiplicities so the running componentwise sum
/// never exceeds the target weight m; invokes the callback for every
/// multiset of exactly m keys whose sum is (m, …, m).
fn enumerate_key_multisets(
    keys: &[&DiagonalKey],
    target: usize,
    remaining: usize,
    from: usize,
    sum: &mut [usize],
    chosen: &mut Vec<(usize, usize)>,
    emit: &mut impl FnMut(&[(usize, usize)]),
) {
    if remaining == 0 {
        if sum.iter().all(|&s| s == target) {
            emit(chosen);
        }
        return;
    }
    if from == keys.len() {
        return;
    }
    let p = sum.len();
    for count in (0..=remaining).rev() {
        if count == 0 {
            enumerate_key_multisets(keys, target, remaining, from + 1, sum, chosen, emit);
            continue;
        }
        let key = keys[from].components();
        if (0..p).any(|s| sum[s] + count * key[s] as usize > target) {
            continue;
        }
        for s in 0..p {
            sum[s] += count * key[s] as usize;
        }
        chosen.push((from, count));
        enumerate_key_multisets(keys, target, remaining - count, from + 1, sum, chosen, emit);
        chosen.pop();
        for s in 0..p {
            sum[s] -= count * key[s] as usize;
        }
    }
}

/// For each chosen (key, multiplicity), walks every size-`multiplicity`
/// multiset of that key's member matrices and emits each accumulated sum.
fn expand_matrix_choices(
    keys: &[&DiagonalKey],
    groups: &HashMap<DiagonalKey, Vec<Vec<u8>>>,
    chosen: &[(usize, usize)],
    depth: usize,
    acc: &mut [u8],
    emit: &mut impl FnMut(&[u8]),
) {
    if depth == chosen.len() {
        emit(acc);
        return;
    }
    let (key_idx, count) = chosen[depth];
    let members = &groups[keys[key_idx]];
    let p = keys[key_idx].components().len();
    pick_members(members, count, 0, p, acc, &mut |acc| {
        expand_matrix_choices(keys, groups, chosen, depth + 1, acc, emit);
    });
}

fn pick_members(
    members: &[Vec<u8>],
    count: usize,
    from: usize,
    p: usize,
    acc: &mut [u8],
    cont: &mut impl FnMut(&mut [u8]),
) {
    if count == 0 {
        cont(acc);
        return;
    }
    for idx in from..members.len() {
        let sigma = &members[idx];
        for (i, &si) in sigma.iter().enumerate() {
            acc[i * p + si as usize] += 1;
        }
        pick_members(members, count - 1, idx, p, acc, cont);
        for (i, &si) in sigma.iter().enumerate() {
            acc[i * p + si as usize] -= 1;
        }
    }
}

/// The ordered set 𝒟_m: weight-m Davey matrices with a positive (0,0)
/// entry, in row-major lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaveyCatalog {
    p: usize,
    weight: usize,
    matrices: Vec<DaveyMatrix>,
}

impl DaveyCatalog {
    /// Builds the catalog for (p, m) from scratch.
    pub fn build(params: &PrimeParams) -> Self {
        let matrices = enumerate_davey_matrices(params)
            .into_iter()
            .filter(|d| d.get(0, 0) > 0)
            .collect();
        Self {
            p: params.p(),
            weight: params.m(),
            matrices,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weight(&self) -> usize {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn get(&self, index: usize) -> &DaveyMatrix {
        &self.matrices[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DaveyMatrix> {
        self.matrices.iter()
    }

    /// Catalog position of a matrix, by binary search over the sorted order.
    pub fn position(&self, d: &DaveyMatrix) -> Option<usize> {
        self.matrices.binary_search(d).ok()
    }

    /// File image: header "p m count", one record per matrix in catalog order.
    pub fn to_file_string(&self) -> String {
        let mut s = format!("{} {} {}\n", self.p, self.weight, self.matrices.len());
        for d in &self.matrices {
            s.push_str(&d.to_record());
            s.push('\n');
        }
        s
    }

    /// FNV-1a of the file image; used to tie cache files to a catalog.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(self.to_file_string().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    /// Loads and validates a catalog file for the given parameters.
    pub fn load(path: &Path, params: &PrimeParams) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty catalog file".into()))?;
        let fields: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("bad header: {e}"))))
            .collect::<Result<_>>()?;
        let [p, weight, count] = fields[..] else {
            return Err(Error::Parse("catalog header must be 'p m count'".into()));
        };
        if p != params.p() || weight != params.m() {
            return Err(Error::Validation(format!(
                "catalog file is for p={p} m={weight}, expected p={} m={}",
                params.p(),
                params.m()
            )));
        }
        let mut matrices = Vec::with_capacity(count);
        for line in lines {
            let d = DaveyMatrix::from_record(line)?;
            if d.p() != p || d.weight() != weight {
                return Err(Error::Validation("matrix record disagrees with catalog header".into()));
            }
            if let Some(prev) = matrices.last() {
                if prev >= &d {
                    return Err(Error::Validation("catalog records out of order".into()));
                }
            }
            if d.get(0, 0) == 0 {
                return Err(Error::Validation("catalog contains a matrix with zero (0,0) entry".into()));
            }
            matrices.push(d);
        }
        if matrices.len() != count {
            return Err(Error::Validation(format!(
                "catalog header promises {count} matrices, file has {}",
                matrices.len()
            )));
        }
        Ok(Self { p, weight, matrices })
    }
}

/// FNV-1a 64-bit; stable across platforms and runs, unlike SipHash.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zp::{raise_pair_matrix, ZVector};

    fn params(p: usize, m: usize) -> PrimeParams {
        PrimeParams::new(p, m).unwrap()
    }

    fn davey(p: usize, m: usize, rows: &[&[u8]]) -> DaveyMatrix {
        let entries: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DaveyMatrix::try_new(p, m, entries).unwrap()
    }

    /// Brute-force oracle: all p×p nonnegative matrices with entries ≤ m
    /// satisfying the 3p sum constraints. Independent of the permutation-sum
    /// construction. Only usable for p = 3 scale.
    fn brute_force_davey(p: usize, m: usize) -> Vec<DaveyMatrix> {
        let cells = p * p;
        let mut current = vec![0u8; cells];
        let mut out = Vec::new();
        loop {
            let counts = CountMatrix::from_counts(
                p,
                current.iter().map(|&e| e as u32).collect(),
            );
            if is_davey(&counts, m) {
                out.push(DaveyMatrix::try_new(p, m, current.clone()).unwrap());
            }
            let mut k = 0;
            loop {
                if k == cells {
                    out.sort();
                    return out;
                }
                if (current[k] as usize) < m {
                    current[k] += 1;
                    break;
                }
                current[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn is_davey_examples() {
        let pp = params(3, 2);
        let b1 = ZVector::new(vec![0, 1, 2, 0, 1, 2], &pp).unwrap();
        let b2 = ZVector::new(vec![0, 0, 1, 1, 2, 2], &pp).unwrap();
        let x = raise_pair_matrix(&b1, &b2, &pp).unwrap();
        assert!(is_davey(&x, 2));

        let identity = CountMatrix::from_counts(3, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert!(!is_davey(&identity, 1));

        let d1 = CountMatrix::from_counts(3, vec![2, 0, 0, 0, 0, 2, 0, 2, 0]);
        assert!(is_davey(&d1, 2));
    }

    #[test]
    fn enumeration_matches_brute_force_p3() {
        for m in [1usize, 2] {
            let ours = enumerate_davey_matrices(&params(3, m));
            let oracle = brute_force_davey(3, m);
            assert_eq!(ours, oracle, "p=3 m={m}");
        }
    }

    #[test]
    fn p3_weight1_counts_before_and_after_filter() {
        let pp = params(3, 1);
        let all = enumerate_davey_matrices(&pp);
        assert_eq!(all.len(), 3);
        // Each is the permutation matrix of σ(i) = 2i + c.
        for d in &all {
            let sigma: Vec<u8> = (0..3)
                .map(|i| (0..3).find(|&j| d.get(i, j) == 1).unwrap() as u8)
                .collect();
            let c = sigma[0];
            for i in 0..3u8 {
                assert_eq!(sigma[i as usize], (2 * i + c) % 3);
            }
        }
        let catalog = DaveyCatalog::build(&pp);
        assert_eq!(catalog.len(), 1);
        assert!(catalog.get(0).get(0, 0) > 0);
    }

    #[test]
    fn p2_weight1_has_no_davey_matrices() {
        let pp = params(2, 1);
        assert!(enumerate_davey_matrices(&pp).is_empty());
    }

    #[test]
    fn p3_weight2_catalog_contents() {
        let catalog = DaveyCatalog::build(&params(3, 2));
        assert_eq!(catalog.len(), 3);
        let d = davey(3, 2, &[&[1, 1, 0], &[1, 0, 1], &[0, 1, 1]]);
        assert!(catalog.position(&d).is_some());
        let d1 = davey(3, 2, &[&[2, 0, 0], &[0, 0, 2], &[0, 2, 0]]);
        assert!(catalog.position(&d1).is_some());
    }

    #[test]
    fn multiset_examples() {
        let d = davey(3, 2, &[&[1, 1, 0], &[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(d.column_multiset(1), vec![0, 2]);
        // Doubled permutation matrix: multiplicities show up in the multiset.
        let d1 = davey(3, 2, &[&[2, 0, 0], &[0, 0, 2], &[0, 2, 0]]);
        assert_eq!(d1.column_multiset(0), vec![0, 0]);
        assert_eq!(d1.row_multiset(0), vec![0, 0]);
        assert_eq!(d1.column_multiset(2), vec![1, 1]);
        let d2 = davey(3, 2, &[&[1, 0, 1], &[0, 1, 1], &[1, 1, 0]]);
        assert_eq!(d2.row_multiset(1), vec![1, 2]);
        assert_eq!(d2.row_multiset(2), vec![0, 1]);
    }

    #[test]
    fn scaled_identity_is_not_davey() {
        // The main diagonal of m·I sums to mp, not m, so try_new rejects it.
        assert!(DaveyMatrix::try_new(3, 2, vec![2, 0, 0, 0, 2, 0, 0, 0, 2]).is_err());
    }

    #[test]
    fn record_round_trip_and_errors() {
        let d = davey(3, 2, &[&[1, 1, 0], &[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(d.to_record(), "3 2 1 1 0 1 0 1 0 1 1");
        let back = DaveyMatrix::from_record(&d.to_record()).unwrap();
        assert_eq!(back, d);

        assert!(matches!(
            DaveyMatrix::from_record("3 2 1 1 0 1 0"),
            Err(Error::Parse(_))
        ));
        // Identity with weight 1 parses but fails the diagonal sums.
        assert!(matches!(
            DaveyMatrix::from_record("3 1 1 0 0 0 1 0 0 0 1"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn transpose_stays_in_catalog_and_p3_is_symmetric() {
        let catalog = DaveyCatalog::build(&params(3, 2));
        for d in catalog.iter() {
            assert!(d.is_symmetric());
            let t = d.transpose();
            assert!(catalog.position(&t).is_some());
        }
    }

    /// Extracts a permutation matrix from the support by backtracking; used
    /// to re-verify that every catalog member is a sum of m permutations.
    fn extract_permutation(entries: &mut [u8], p: usize) -> bool {
        fn rec(entries: &mut [u8], p: usize, row: usize, used: &mut [bool], picked: &mut [usize]) -> bool {
            if row == p {
                return true;
            }
            for j in 0..p {
                if !used[j] && entries[row * p + j] > 0 {
                    used[j] = true;
                    picked[row] = j;
                    if rec(entries, p, row + 1, used, picked) {
                        return true;
                    }
                    used[j] = false;
                }
            }
            false
        }
        let mut used = vec![false; p];
        let mut picked = vec![0usize; p];
        if rec(entries, p, 0, &mut used, &mut picked) {
            for (i, &j) in picked.iter().enumerate() {
                entries[i * p + j] -= 1;
            }
            true
        } else {
            false
        }
    }

    #[test]
    fn catalog_members_decompose_into_permutations() {
        for (p, m) in [(3usize, 2usize), (5, 2)] {
            let catalog = DaveyCatalog::build(&params(p, m));
            for d in catalog.iter() {
                let mut entries = d.entries().to_vec();
                for _ in 0..m {
                    assert!(extract_permutation(&mut entries, p), "p={p} m={m}");
                }
                assert!(entries.iter().all(|&e| e == 0));
            }
        }
    }

    #[test]
    fn catalog_file_round_trip() {
        let pp = params(3, 2);
        let catalog = DaveyCatalog::build(&pp);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.txt");
        catalog.save(&path).unwrap();
        let loaded = DaveyCatalog::load(&path, &pp).unwrap();
        assert_eq!(loaded, catalog);
        assert_eq!(loaded.content_hash(), catalog.content_hash());

        // Bit-exact reproducibility: building twice gives the same image.
        let again = DaveyCatalog::build(&pp);
        assert_eq!(again.to_file_string(), catalog.to_file_string());

        assert!(DaveyCatalog::load(&path, &params(5, 2)).is_err());
    }

    #[test]
    fn diagonal_key_components_sum_to_p() {
        for p in [3usize, 5] {
            for sigma in permutations(p) {
                let key = DiagonalKey::of_permutation(&sigma);
                assert_eq!(key.components().iter().map(|&c| c as usize).sum::<usize>(), p);
            }
        }
    }
}
