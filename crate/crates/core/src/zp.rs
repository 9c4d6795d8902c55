//! Vector arithmetic over the field Z_p.
//!
//! Candidate matrix rows live in Z_p^{mp}. The predicates here — balancedness,
//! pair-count raising, rank — sit in the innermost loops of the search, so
//! everything works on plain `u8` entries with p-bucket histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trial-division primality test; p is always tiny here.
pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// The pair (p, m) with the derived vector length m·p.
///
/// Construction checks that p is prime and m ≥ 1. The stricter search
/// requirement 1 < m < p is enforced by [`crate::search::run_search`], not
/// here, so that canonical vectors for m = 1 remain constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeParams {
    p: usize,
    m: usize,
    len: usize,
}

impl PrimeParams {
    pub fn new(p: usize, m: usize) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidParams(format!("{p} is not prime")));
        }
        if p > u8::MAX as usize {
            return Err(Error::InvalidParams(format!("prime {p} exceeds u8 entry range")));
        }
        if m == 0 {
            return Err(Error::InvalidParams("weight must be at least 1".into()));
        }
        Ok(Self { p, m, len: m * p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Length m·p of every candidate row vector.
    pub fn vector_len(&self) -> usize {
        self.len
    }
}

/// A vector of length m·p with entries in {0, …, p−1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZVector(Vec<u8>);

impl ZVector {
    pub fn new(entries: Vec<u8>, params: &PrimeParams) -> Result<Self> {
        if entries.len() != params.vector_len() {
            return Err(Error::LengthMismatch {
                expected: params.vector_len(),
                got: entries.len(),
            });
        }
        if let Some(&e) = entries.iter().find(|&&e| e as usize >= params.p()) {
            return Err(Error::Validation(format!(
                "entry {e} out of range for Z_{}",
                params.p()
            )));
        }
        Ok(Self(entries))
    }

    /// Wraps entries produced by code that guarantees the invariants.
    pub(crate) fn from_raw(entries: Vec<u8>) -> Self {
        Self(entries)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ZVector {
    type Output = u8;

    fn index(&self, i: usize) -> &u8 {
        &self.0[i]
    }
}

/// A coefficient vector (λ1, λ2, λ3) in Z_p^3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoefficientTriple(pub [u8; 3]);

impl CoefficientTriple {
    pub fn new(c1: u8, c2: u8, c3: u8) -> Self {
        Self([c1, c2, c3])
    }

    /// The unit triple e_i for axis ∈ {0, 1, 2}.
    pub fn unit(axis: usize) -> Self {
        let mut t = [0u8; 3];
        t[axis] = 1;
        Self(t)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn sub(&self, other: &Self, p: usize) -> Self {
        let d = |a: u8, b: u8| ((a as usize + p - b as usize) % p) as u8;
        Self([
            d(self.0[0], other.0[0]),
            d(self.0[1], other.0[1]),
            d(self.0[2], other.0[2]),
        ])
    }

    pub fn neg(&self, p: usize) -> Self {
        Self::new(0, 0, 0).sub(self, p)
    }

    /// Position of this triple in the lexicographic enumeration of Z_p^3.
    pub fn to_index(&self, p: usize) -> usize {
        (self.0[0] as usize * p + self.0[1] as usize) * p + self.0[2] as usize
    }

    pub fn from_index(idx: usize, p: usize) -> Self {
        Self([(idx / (p * p)) as u8, (idx / p % p) as u8, (idx % p) as u8])
    }
}

/// The p×p count matrix raised by a pair of vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    p: usize,
    counts: Vec<u32>,
}

impl CountMatrix {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.p + j]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn transpose(&self) -> CountMatrix {
        let mut counts = vec![0u32; self.p * self.p];
        for i in 0..self.p {
            for j in 0..self.p {
                counts[j * self.p + i] = self.get(i, j);
            }
        }
        CountMatrix { p: self.p, counts }
    }

    pub(crate) fn from_counts(p: usize, counts: Vec<u32>) -> Self {
        debug_assert_eq!(counts.len(), p * p);
        Self { p, counts }
    }
}

/// True iff every residue of Z_p occurs exactly m times in v.
pub fn is_balanced(v: &ZVector, params: &PrimeParams) -> Result<bool> {
    if v.len() != params.vector_len() {
        return Err(Error::LengthMismatch {
            expected: params.vector_len(),
            got: v.len(),
        });
    }
    Ok(balanced_slice(v.as_slice(), params.p(), params.m()))
}

/// Histogram check without the length validation, for internal callers.
pub(crate) fn balanced_slice(entries: &[u8], p: usize, m: usize) -> bool {
    let mut counts = [0u32; 256];
    for &e in entries {
        counts[e as usize] += 1;
    }
    counts[..p].iter().all(|&c| c as usize == m)
}

/// The concatenation of m copies of (0, 1, …, p−1); always balanced.
pub fn canonical_b1(params: &PrimeParams) -> ZVector {
    let mut entries = Vec::with_capacity(params.vector_len());
    for _ in 0..params.m() {
        entries.extend(0..params.p() as u8);
    }
    ZVector::from_raw(entries)
}

/// Counts[i][j] = number of positions k with v_k = i and w_k = j.
pub fn raise_pair_matrix(v: &ZVector, w: &ZVector, params: &PrimeParams) -> Result<CountMatrix> {
    if v.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            got: w.len(),
        });
    }
    let p = params.p();
    let mut counts = vec![0u32; p * p];
    for (&a, &b) in v.as_slice().iter().zip(w.as_slice()) {
        counts[a as usize * p + b as usize] += 1;
    }
    Ok(CountMatrix { p, counts })
}

/// Entrywise λ1·b1 + λ2·b2 + λ3·b3 mod p.
pub fn linear_combination(
    t: CoefficientTriple,
    b1: &ZVector,
    b2: &ZVector,
    b3: &ZVector,
    params: &PrimeParams,
) -> Result<ZVector> {
    if b1.len() != b2.len() || b1.len() != b3.len() {
        return Err(Error::LengthMismatch {
            expected: b1.len(),
            got: b1.len().max(b2.len()).max(b3.len()),
        });
    }
    let p = params.p() as u32;
    let [l1, l2, l3] = t.0;
    let entries = b1
        .as_slice()
        .iter()
        .zip(b2.as_slice())
        .zip(b3.as_slice())
        .map(|((&a, &b), &c)| {
            ((l1 as u32 * a as u32 + l2 as u32 * b as u32 + l3 as u32 * c as u32) % p) as u8
        })
        .collect();
    Ok(ZVector::from_raw(entries))
}

/// Multiplicative inverses mod p: table[a] · a ≡ 1 for a in 1..p.
pub(crate) fn inverse_table(p: usize) -> Vec<u32> {
    let mut inv = vec![0u32; p];
    for a in 1..p {
        for x in 1..p {
            if a * x % p == 1 {
                inv[a] = x as u32;
                break;
            }
        }
    }
    inv
}

/// Rank of the row set over Z_p, by Gaussian elimination.
pub fn rank_mod_p(rows: &[ZVector], p: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    assert!(rows.iter().all(|r| r.len() == cols), "rows differ in length");

    let inv = inverse_table(p);
    let mut work: Vec<Vec<u32>> = rows
        .iter()
        .map(|r| r.as_slice().iter().map(|&e| e as u32).collect())
        .collect();

    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..work.len()).find(|&r| work[r][col] != 0) else {
            continue;
        };
        work.swap(rank, pivot);
        let scale = inv[work[rank][col] as usize];
        for entry in work[rank].iter_mut() {
            *entry = *entry * scale % p as u32;
        }
        let pivot_row = work[rank].clone();
        for (r, row) in work.iter_mut().enumerate() {
            if r != rank && row[col] != 0 {
                let factor = row[col];
                for (entry, &pe) in row.iter_mut().zip(&pivot_row) {
                    *entry = (*entry + (p as u32 - factor % p as u32) * pe) % p as u32;
                }
            }
        }
        rank += 1;
        if rank == work.len() {
            break;
        }
    }
    rank
}

/// True iff b3 is not a linear combination of b1 and b2 over Z_p.
///
/// Scans all p² coefficient pairs directly; cheaper than elimination for the
/// vector lengths in play and allocation-free.
pub fn is_independent_of_span2(b3: &ZVector, b1: &ZVector, b2: &ZVector, p: usize) -> bool {
    debug_assert_eq!(b1.len(), b2.len());
    debug_assert_eq!(b1.len(), b3.len());
    for l1 in 0..p as u32 {
        'pair: for l2 in 0..p as u32 {
            for ((&a, &b), &c) in b1.as_slice().iter().zip(b2.as_slice()).zip(b3.as_slice()) {
                if (l1 * a as u32 + l2 * b as u32) % p as u32 != c as u32 {
                    continue 'pair;
                }
            }
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: usize, m: usize) -> PrimeParams {
        PrimeParams::new(p, m).unwrap()
    }

    fn zv(entries: &[u8]) -> ZVector {
        ZVector::from_raw(entries.to_vec())
    }

    #[test]
    fn prime_params_rejects_composites_and_zero_weight() {
        assert!(PrimeParams::new(4, 2).is_err());
        assert!(PrimeParams::new(1, 1).is_err());
        assert!(PrimeParams::new(3, 0).is_err());
        let pp = params(5, 3);
        assert_eq!(pp.vector_len(), 15);
    }

    #[test]
    fn balancedness_on_known_vectors() {
        let pp = params(3, 2);
        assert!(is_balanced(&zv(&[0, 1, 2, 0, 1, 2]), &pp).unwrap());
        assert!(!is_balanced(&zv(&[0, 0, 0, 0, 0, 0]), &pp).unwrap());
        assert!(is_balanced(&zv(&[0, 0, 2, 1, 2, 1]), &pp).unwrap());
    }

    #[test]
    fn zero_vector_is_never_balanced() {
        // Residue 0 occurs mp times, not m, whenever p > 1.
        for (p, m) in [(3, 2), (5, 2), (5, 4)] {
            let pp = params(p, m);
            let zero = ZVector::from_raw(vec![0; pp.vector_len()]);
            assert!(!is_balanced(&zero, &pp).unwrap());
        }
    }

    #[test]
    fn balancedness_length_mismatch_is_an_error() {
        let pp = params(3, 2);
        assert!(is_balanced(&zv(&[0, 1, 2]), &pp).is_err());
    }

    #[test]
    fn canonical_b1_examples() {
        assert_eq!(canonical_b1(&params(3, 2)).as_slice(), &[0, 1, 2, 0, 1, 2]);
        assert_eq!(
            canonical_b1(&params(5, 2)).as_slice(),
            &[0, 1, 2, 3, 4, 0, 1, 2, 3, 4]
        );
        assert_eq!(canonical_b1(&params(3, 1)).as_slice(), &[0, 1, 2]);
        let pp = params(7, 3);
        assert!(is_balanced(&canonical_b1(&pp), &pp).unwrap());
    }

    #[test]
    fn raise_pair_matrix_worked_example() {
        let pp = params(3, 2);
        let v = zv(&[0, 1, 2, 0, 1, 2]);
        let w = zv(&[0, 0, 1, 1, 2, 2]);
        let x = raise_pair_matrix(&v, &w, &pp).unwrap();
        let expected = [[1, 1, 0], [1, 0, 1], [0, 1, 1]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(x.get(i, j), expected[i][j]);
            }
        }
        assert_eq!(x.total(), 6);
    }

    #[test]
    fn raise_pair_matrix_identical_vectors_gives_scaled_identity() {
        let pp = params(3, 2);
        let v = zv(&[0, 1, 2, 0, 1, 2]);
        let x = raise_pair_matrix(&v, &v, &pp).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(x.get(i, j), if i == j { 2 } else { 0 });
            }
        }
    }

    #[test]
    fn raise_pair_matrix_swap_transposes() {
        let pp = params(3, 2);
        let v = zv(&[0, 1, 2, 0, 1, 2]);
        let w = zv(&[0, 0, 1, 1, 2, 2]);
        let a = raise_pair_matrix(&v, &w, &pp).unwrap();
        let b = raise_pair_matrix(&w, &v, &pp).unwrap();
        assert_eq!(a.transpose(), b);
    }

    #[test]
    fn linear_combination_examples() {
        let pp = params(3, 2);
        let b1 = zv(&[0, 1, 2, 0, 1, 2]);
        let b2 = zv(&[0, 0, 1, 1, 2, 2]);
        let b3 = zv(&[0, 0, 2, 1, 2, 1]);
        let unit = linear_combination(CoefficientTriple::new(1, 0, 0), &b1, &b2, &b3, &pp).unwrap();
        assert_eq!(unit, b1);
        let zero = linear_combination(CoefficientTriple::new(0, 0, 0), &b1, &b2, &b3, &pp).unwrap();
        assert_eq!(zero.as_slice(), &[0; 6]);
        let sum = linear_combination(CoefficientTriple::new(1, 1, 0), &b1, &b2, &b3, &pp).unwrap();
        assert_eq!(sum.as_slice(), &[0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn rank_examples() {
        let b1 = zv(&[0, 1, 2, 0, 1, 2]);
        let b2 = zv(&[0, 0, 1, 1, 2, 2]);
        let b3 = zv(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(rank_mod_p(&[b1.clone()], 3), 1);
        let doubled = zv(&[0, 2, 1, 0, 2, 1]);
        assert_eq!(rank_mod_p(&[b1.clone(), doubled], 3), 1);
        assert_eq!(rank_mod_p(&[b1.clone(), b2.clone(), b3.clone()], 3), 3);
        assert_eq!(rank_mod_p(&[], 3), 0);
    }

    #[test]
    fn independence_check_matches_rank() {
        let b1 = zv(&[0, 1, 2, 0, 1, 2]);
        let b2 = zv(&[0, 0, 1, 1, 2, 2]);
        assert!(!is_independent_of_span2(&b1, &b1, &b2, 3));
        // b1 + 2·b2 entrywise mod 3.
        let combo = zv(&[0, 1, 1, 2, 2, 0]);
        assert!(!is_independent_of_span2(&combo, &b1, &b2, 3));
        let b3 = zv(&[0, 0, 0, 1, 1, 1]);
        assert!(is_independent_of_span2(&b3, &b1, &b2, 3));
        assert_eq!(rank_mod_p(&[b1.clone(), b2.clone(), b3.clone()], 3), 3);
    }

    #[test]
    fn inverse_table_is_correct_for_small_primes() {
        for p in [2usize, 3, 5, 7, 11] {
            let inv = inverse_table(p);
            for a in 1..p {
                assert_eq!(a * inv[a] as usize % p, 1);
            }
        }
    }

    #[test]
    fn triple_index_round_trip() {
        for p in [3usize, 5, 7] {
            for idx in 0..p * p * p {
                let t = CoefficientTriple::from_index(idx, p);
                assert_eq!(t.to_index(p), idx);
            }
        }
    }
}
