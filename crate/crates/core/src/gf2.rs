//! Bit-packed GF(2) vectors and incremental rank tracking.
//!
//! Every innovation check in the simulator reduces to "is this vector in
//! the span of those vectors". Policies ask that question every time step
//! and the metric enumeration asks it thousands of times per decision, so
//! vectors are packed into `u64` words and bases are kept in reduced
//! echelon form for O(rank) incremental updates.

use crate::error::{Error, Result};
use rand_core::RngCore;

const WORD_BITS: usize = 64;

/// A fixed-length vector over GF(2); the per-chunk coefficient block of a
/// packet header. Addition is bitwise XOR.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Gf2Vector {
    words: Vec<u64>,
    len: usize,
}

impl Gf2Vector {
    pub fn zero(len: usize) -> Self {
        assert!(len > 0, "vector length must be positive");
        Gf2Vector {
            words: vec![0; len.div_ceil(WORD_BITS)],
            len,
        }
    }

    /// Build from bit values, index 0 first. Intended for tests and small
    /// fixtures.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Gf2Vector::zero(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    /// Uniformly random vector of length `len` (the zero vector included).
    pub fn random<R: RngCore>(len: usize, rng: &mut R) -> Self {
        let mut v = Gf2Vector::zero(len);
        let n_words = v.words.len();
        for (i, w) in v.words.iter_mut().enumerate() {
            *w = rng.next_u64();
            if i == n_words - 1 {
                let tail = len % WORD_BITS;
                if tail != 0 {
                    *w &= (1u64 << tail) - 1;
                }
            }
        }
        v
    }

    /// Unit vector with a single 1 at `pos`.
    pub fn unit(len: usize, pos: usize) -> Self {
        let mut v = Gf2Vector::zero(len);
        v.set(pos, true);
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn xor_assign(&mut self, other: &Gf2Vector) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Index of the first set bit, if any.
    pub fn pivot(&self) -> Option<usize> {
        for (i, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(i * WORD_BITS + w.trailing_zeros() as usize);
            }
        }
        None
    }

    /// Hex rendering, low word first; used by trace output.
    pub fn to_hex(&self) -> String {
        let nibbles = self.len.div_ceil(4);
        let mut s = String::with_capacity(nibbles);
        for i in 0..nibbles {
            let word = self.words[i * 4 / WORD_BITS];
            let nib = (word >> ((i * 4) % WORD_BITS)) & 0xf;
            s.push(char::from_digit(nib as u32, 16).unwrap());
        }
        s
    }
}

/// An incrementally maintained basis over GF(2), kept in reduced echelon
/// form: every stored row has a unique pivot column and that column is
/// zero in all other rows. Rank queries and innovation checks are O(rank)
/// word operations, and the structure is cheap to clone so the metric
/// enumeration can snapshot receiver state per term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gf2Basis {
    rows: Vec<Gf2Vector>,
    pivots: Vec<usize>,
}

impl Gf2Basis {
    pub fn new() -> Self {
        Gf2Basis::default()
    }

    /// Basis spanning the full space GF(2)^len (the source node's view of
    /// its own chunk).
    pub fn full(len: usize) -> Self {
        let mut b = Gf2Basis::new();
        for i in 0..len {
            b.insert(&Gf2Vector::unit(len, i)).unwrap();
        }
        b
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Gf2Vector] {
        &self.rows
    }

    pub fn vector_len(&self) -> Option<usize> {
        self.rows.first().map(|r| r.len())
    }

    fn check_len(&self, v: &Gf2Vector) -> Result<()> {
        match self.vector_len() {
            Some(expected) if expected != v.len() => Err(Error::DimensionMismatch {
                expected,
                got: v.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Reduce `v` against the stored rows; the residue is zero iff `v`
    /// lies in the span.
    fn residue(&self, v: &Gf2Vector) -> Gf2Vector {
        let mut r = v.clone();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            if r.get(p) {
                r.xor_assign(row);
            }
        }
        r
    }

    /// True iff `v` is outside the span of the basis. The zero vector is
    /// never innovative. Does not modify the basis.
    pub fn is_innovative(&self, v: &Gf2Vector) -> Result<bool> {
        self.check_len(v)?;
        Ok(!self.residue(v).is_zero())
    }

    /// Insert `v` if innovative; returns whether the rank grew.
    pub fn insert(&mut self, v: &Gf2Vector) -> Result<bool> {
        self.check_len(v)?;
        let r = self.residue(v);
        let Some(p) = r.pivot() else {
            return Ok(false);
        };
        // Clear the new pivot column from existing rows to stay reduced.
        for row in &mut self.rows {
            if row.get(p) {
                row.xor_assign(&r);
            }
        }
        self.rows.push(r);
        self.pivots.push(p);
        Ok(true)
    }

    /// Uniformly random element of the span (zero included): XOR of a
    /// uniform subset of the rows.
    pub fn random_member<R: RngCore>(&self, rng: &mut R) -> Gf2Vector {
        let len = self.vector_len().expect("random_member on empty basis");
        let mut v = Gf2Vector::zero(len);
        let mask = rng.next_u64();
        for (i, row) in self.rows.iter().enumerate() {
            debug_assert!(i < WORD_BITS, "rank exceeds mask width");
            if mask >> i & 1 == 1 {
                v.xor_assign(row);
            }
        }
        v
    }
}

/// Rank of a matrix given as rows; equals the result of sequential insert.
pub fn rank_of(rows: &[Gf2Vector]) -> Result<usize> {
    let mut basis = Gf2Basis::new();
    for row in rows {
        basis.insert(row)?;
    }
    Ok(basis.rank())
}

/// Append-only echelon scratch used by the metric's subset recursion:
/// rows keep unique pivots but are not back-reduced, so an insert can be
/// undone by popping. Confined to this crate.
#[derive(Debug, Clone, Default)]
pub(crate) struct ScratchBasis {
    rows: Vec<(usize, Gf2Vector)>,
}

impl ScratchBasis {
    pub(crate) fn from_basis(basis: &Gf2Basis) -> Self {
        ScratchBasis {
            rows: basis
                .rows
                .iter()
                .zip(&basis.pivots)
                .map(|(r, &p)| (p, r.clone()))
                .collect(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.rows.truncate(len);
    }

    /// Insert if independent; true iff the rank grew.
    pub(crate) fn insert(&mut self, v: &Gf2Vector) -> bool {
        let mut r = v.clone();
        loop {
            let Some(p) = r.pivot() else {
                return false;
            };
            match self.rows.iter().find(|(q, _)| *q == p) {
                Some((_, row)) => {
                    // Clone avoids aliasing; rows are one or two words.
                    let row = row.clone();
                    r.xor_assign(&row);
                }
                None => {
                    self.rows.push((p, r));
                    return true;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn v(bits: &str) -> Gf2Vector {
        Gf2Vector::from_bits(
            &bits
                .bytes()
                .map(|b| match b {
                    b'0' => 0,
                    b'1' => 1,
                    _ => panic!("bad bit"),
                })
                .collect::<Vec<_>>(),
        )
    }

    /// Brute-force span: all XOR-subsets of the rows.
    fn span(rows: &[Gf2Vector]) -> HashSet<Gf2Vector> {
        let len = rows.first().map_or(1, |r| r.len());
        let mut out = HashSet::new();
        for mask in 0u32..1 << rows.len() {
            let mut acc = Gf2Vector::zero(len);
            for (i, row) in rows.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    acc.xor_assign(row);
                }
            }
            out.insert(acc);
        }
        out
    }

    #[test]
    fn full_rank_space_rejects_everything() {
        let mut b = Gf2Basis::new();
        b.insert(&v("10")).unwrap();
        b.insert(&v("01")).unwrap();
        assert_eq!(b.rank(), 2);
        assert!(!b.is_innovative(&v("11")).unwrap());
    }

    #[test]
    fn zero_vector_never_innovative() {
        let b = Gf2Basis::new();
        assert!(!b.is_innovative(&v("0000")).unwrap());
    }

    #[test]
    fn innovation_matches_span_enumeration() {
        let rows = [v("1100"), v("0011")];
        let mut b = Gf2Basis::new();
        for r in &rows {
            assert!(b.insert(r).unwrap());
        }
        let sp = span(&rows);
        assert_eq!(sp.len(), 4);
        assert!(sp.contains(&v("1111")));
        assert!(!b.is_innovative(&v("1111")).unwrap());
        assert!(!sp.contains(&v("1000")));
        assert!(b.is_innovative(&v("1000")).unwrap());
    }

    #[test]
    fn insert_grows_rank_by_one_or_not_at_all() {
        let mut b = Gf2Basis::new();
        assert!(b.insert(&v("1000")).unwrap());
        assert_eq!(b.rank(), 1);
        assert!(b.insert(&v("1100")).unwrap());
        assert!(!b.insert(&v("1100")).unwrap());
        assert_eq!(b.rank(), 2);
    }

    #[test]
    fn all_sixteen_vectors_reach_full_rank() {
        let mut rng = SeedTree::from_master(11).rng();
        let mut vectors: Vec<Gf2Vector> = (0..16u8)
            .map(|m| {
                Gf2Vector::from_bits(&[(m & 1), (m >> 1 & 1), (m >> 2 & 1), (m >> 3 & 1)])
            })
            .collect();
        // Shuffle into a random insertion order.
        for i in (1..vectors.len()).rev() {
            let j = crate::rng::uniform_index(&mut rng, i + 1);
            vectors.swap(i, j);
        }
        let mut b = Gf2Basis::new();
        for vec in &vectors {
            b.insert(vec).unwrap();
        }
        assert_eq!(b.rank(), 4);
    }

    #[test]
    fn rank_of_identity_and_duplicates() {
        assert_eq!(rank_of(&[v("10"), v("01")]).unwrap(), 2);
        assert_eq!(rank_of(&[v("11"), v("11")]).unwrap(), 1);
    }

    #[test]
    fn rank_matches_span_size_on_random_matrices() {
        let mut rng = SeedTree::from_master(5).rng();
        for _ in 0..50 {
            let rows: Vec<Gf2Vector> = (0..5).map(|_| Gf2Vector::random(8, &mut rng)).collect();
            let rank = rank_of(&rows).unwrap();
            assert_eq!(1usize << rank, span(&rows).len());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut b = Gf2Basis::new();
        b.insert(&v("101")).unwrap();
        assert_eq!(
            b.is_innovative(&v("10")),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        );
        assert!(b.insert(&v("1010")).is_err());
    }

    #[test]
    fn reduced_form_has_unique_pivot_columns() {
        let mut rng = SeedTree::from_master(9).rng();
        let mut b = Gf2Basis::new();
        for _ in 0..20 {
            b.insert(&Gf2Vector::random(10, &mut rng)).unwrap();
        }
        for (i, &p) in b.pivots.iter().enumerate() {
            for (j, row) in b.rows.iter().enumerate() {
                assert_eq!(row.get(p), i == j, "pivot {p} not exclusive to row {i}");
            }
        }
    }

    #[test]
    fn scratch_basis_insert_and_undo() {
        let mut b = Gf2Basis::new();
        b.insert(&v("1100")).unwrap();
        let mut s = ScratchBasis::from_basis(&b);
        let mark = s.len();
        assert!(s.insert(&v("0011")));
        assert!(!s.insert(&v("1111")));
        s.truncate(mark);
        assert!(s.insert(&v("1111")));
    }

    proptest! {
        #[test]
        fn final_rank_is_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(0u8..2, 6), 1..8),
            seed in 0u64..1000,
        ) {
            let vectors: Vec<Gf2Vector> = rows.iter().map(|r| Gf2Vector::from_bits(r)).collect();
            let rank = rank_of(&vectors).unwrap();
            let mut shuffled = vectors.clone();
            let mut rng = SeedTree::from_master(seed).rng();
            for i in (1..shuffled.len()).rev() {
                let j = crate::rng::uniform_index(&mut rng, i + 1);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(rank_of(&shuffled).unwrap(), rank);
        }

        #[test]
        fn rank_is_log2_of_span(
            rows in prop::collection::vec(prop::collection::vec(0u8..2, 5), 0..7),
        ) {
            let vectors: Vec<Gf2Vector> = rows.iter().map(|r| Gf2Vector::from_bits(r)).collect();
            let rank = rank_of(&vectors).unwrap();
            prop_assert_eq!(1usize << rank, span(&vectors).len());
        }

        #[test]
        fn innovative_iff_insert_grows_rank(
            rows in prop::collection::vec(prop::collection::vec(0u8..2, 6), 1..6),
            probe in prop::collection::vec(0u8..2, 6),
        ) {
            let mut b = Gf2Basis::new();
            for r in &rows {
                b.insert(&Gf2Vector::from_bits(r)).unwrap();
            }
            let p = Gf2Vector::from_bits(&probe);
            let innovative = b.is_innovative(&p).unwrap();
            let before = b.rank();
            let grew = b.insert(&p).unwrap();
            prop_assert_eq!(innovative, grew);
            prop_assert_eq!(b.rank(), before + grew as usize);
        }
    }
}
