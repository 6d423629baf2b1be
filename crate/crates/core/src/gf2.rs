//! Bit-packed vectors and matrices over GF(2).
//!
//! Bits are stored little-endian inside `u64` words (bit `i` lives in word
//! `i / 64`, position `i % 64`). When a vector is read as an integer, bit 0 is
//! the most significant bit, so `"1011"` is 11.

use crate::error::{CcsError, Result};
use rand::Rng;
use std::fmt;

const W: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(W)
}

// Field order matters for the derived Ord: equal lengths compare word-wise.
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector { words: vec![0; words_for(len)], len }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut v = BitVector::zeros(0);
        for b in bits {
            v.push(b);
        }
        v
    }

    /// Parses a string of `0`/`1` characters; anything else is ignored.
    pub fn parse(s: &str) -> Self {
        Self::from_bits(s.chars().filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        }))
    }

    /// The low `len` bits of `value`, most significant first.
    pub fn from_u64_msb(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        Self::from_bits((0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1))
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = BitVector::zeros(len);
        for w in v.words.iter_mut() {
            *w = rng.random();
        }
        v.mask_tail();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i / W] >> (i % W)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let m = 1u64 << (i % W);
        if bit {
            self.words[i / W] |= m;
        } else {
            self.words[i / W] &= !m;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(W) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Bits `[start, start + len)` as a new vector.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len);
        Self::from_bits((start..start + len).map(|i| self.get(i)))
    }

    pub fn concat(&self, other: &BitVector) -> Self {
        let mut v = self.clone();
        for b in other.iter() {
            v.push(b);
        }
        v
    }

    /// Reads the vector as an unsigned integer, first bit most significant.
    pub fn to_u64_msb(&self) -> u64 {
        assert!(self.len <= 64, "vector of {} bits does not fit in u64", self.len);
        self.iter().fold(0u64, |acc, b| (acc << 1) | b as u64)
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector> {
        if self.len != other.len {
            return Err(CcsError::DimensionMismatch { expected: self.len, got: other.len });
        }
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(BitVector { words, len: self.len })
    }

    fn xor_words(&mut self, other: &[u64]) {
        for (a, b) in self.words.iter_mut().zip(other) {
            *a ^= b;
        }
    }

    fn mask_tail(&mut self) {
        let r = self.len % W;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(")?;
        for b in self.iter() {
            write!(f, "{}", b as u8)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            write!(f, "{}", b as u8)?;
        }
        Ok(())
    }
}

/// Dense row-major bit matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        BitMatrix { rows, cols, stride, data: vec![0; rows * stride] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn from_rows(rows: &[BitVector]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(CcsError::DimensionMismatch { expected: cols, got: r.len() });
            }
            m.row_words_mut(i).copy_from_slice(&r.words);
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        (self.data[r * self.stride + c / W] >> (c % W)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, bit: bool) {
        assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[r * self.stride + c / W];
        let m = 1u64 << (c % W);
        if bit {
            *w |= m;
        } else {
            *w &= !m;
        }
    }

    pub fn row(&self, r: usize) -> BitVector {
        BitVector { words: self.row_words(r).to_vec(), len: self.cols }
    }

    fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    /// Row `r` as an integer with column 0 most significant (`cols <= 64`).
    pub fn row_u64_msb(&self, r: usize) -> u64 {
        self.row(r).to_u64_msb()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {}", self.row(r))?;
        }
        Ok(())
    }
}

/// Each entry an independent fair coin flip.
pub fn sample_rademacher<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> BitMatrix {
    let mut m = BitMatrix::zeros(rows, cols);
    for r in 0..rows {
        let row = BitVector::random(cols, rng);
        m.row_words_mut(r).copy_from_slice(&row.words);
    }
    m
}

/// `v · G` over GF(2): the XOR of the rows of `G` selected by `v`.
pub fn matvec_mod2(v: &BitVector, g: &BitMatrix) -> Result<BitVector> {
    if v.len() != g.rows {
        return Err(CcsError::DimensionMismatch { expected: g.rows, got: v.len() });
    }
    let mut out = BitVector::zeros(g.cols);
    for r in 0..g.rows {
        if v.get(r) {
            out.xor_words(g.row_words(r));
        }
    }
    Ok(out)
}

pub fn rank_mod2(g: &BitMatrix) -> usize {
    let mut m = g.clone();
    let mut rank = 0;
    for c in 0..m.cols {
        let Some(p) = (rank..m.rows).find(|&r| m.get(r, c)) else {
            continue;
        };
        if p != rank {
            for k in 0..m.stride {
                m.data.swap(p * m.stride + k, rank * m.stride + k);
            }
        }
        let pivot = m.row_words(rank).to_vec();
        for r in 0..m.rows {
            if r != rank && m.get(r, c) {
                for (a, b) in m.row_words_mut(r).iter_mut().zip(&pivot) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
        if rank == m.rows {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    // Plain Vec<Vec<u8>> elimination, kept deliberately naive.
    fn rank_oracle(rows: Vec<Vec<u8>>) -> usize {
        let mut a = rows;
        let ncols = a.first().map_or(0, |r| r.len());
        let mut rank = 0;
        for c in 0..ncols {
            let mut pivot = None;
            for (r, row) in a.iter().enumerate().skip(rank) {
                if row[c] == 1 {
                    pivot = Some(r);
                    break;
                }
            }
            let Some(p) = pivot else { continue };
            a.swap(p, rank);
            let (top, rest) = a.split_at_mut(rank + 1);
            for row in rest.iter_mut().filter(|row| row[c] == 1) {
                for (x, &y) in row.iter_mut().zip(&top[rank]) {
                    *x ^= y;
                }
            }
            rank += 1;
        }
        rank
    }

    fn to_rows(m: &BitMatrix) -> Vec<Vec<u8>> {
        (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c) as u8).collect()).collect()
    }

    #[test]
    fn rademacher_shapes_and_determinism() {
        let m = sample_rademacher(0, 5, &mut seeded(1));
        assert_eq!((m.rows(), m.cols()), (0, 5));

        let a = sample_rademacher(3, 2, &mut seeded(42));
        let b = sample_rademacher(3, 2, &mut seeded(42));
        assert_eq!(a, b);
    }

    #[test]
    fn rademacher_balance() {
        let m = sample_rademacher(1000, 1000, &mut seeded(7));
        let frac = m.count_ones() as f64 / 1e6;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
    }

    #[test]
    fn matvec_examples() {
        let v = BitVector::parse("101");
        assert_eq!(matvec_mod2(&v, &BitMatrix::identity(3)).unwrap(), v);
        assert_eq!(matvec_mod2(&v, &BitMatrix::ones(3, 2)).unwrap(), BitVector::parse("00"));
        let g = sample_rademacher(3, 7, &mut seeded(3));
        assert!(matvec_mod2(&BitVector::zeros(3), &g).unwrap().is_zero());
        assert!(matches!(matvec_mod2(&BitVector::zeros(2), &g), Err(CcsError::DimensionMismatch { .. })));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_mod2(&BitMatrix::identity(4)), 4);
        assert_eq!(rank_mod2(&BitMatrix::ones(3, 3)), 1);
        let g = sample_rademacher(6, 4, &mut seeded(11));
        assert_eq!(rank_mod2(&g), rank_oracle(to_rows(&g)));
    }

    #[test]
    fn msb_round_trip() {
        let v = BitVector::parse("1011");
        assert_eq!(v.to_u64_msb(), 11);
        assert_eq!(BitVector::from_u64_msb(11, 4), v);
        assert_eq!(BitVector::from_u64_msb(1, 70 - 6).to_u64_msb(), 1);
        let long = BitVector::random(130, &mut seeded(5));
        assert_eq!(long.slice(0, 60).concat(&long.slice(60, 70)), long);
    }

    #[test]
    fn collision_rate_tracks_rank() {
        // Distinct messages collide on parity exactly when their difference
        // lies in the left kernel of G, which happens with rate 2^-rank.
        let mut rng = seeded(99);
        let g = sample_rademacher(5, 3, &mut rng);
        let r = rank_mod2(&g);
        let trials = 20_000;
        let mut hits = 0;
        for _ in 0..trials {
            let w = BitVector::random(5, &mut rng);
            let mut wr = BitVector::random(5, &mut rng);
            while wr == w {
                wr = BitVector::random(5, &mut rng);
            }
            if matvec_mod2(&w, &g).unwrap() == matvec_mod2(&wr, &g).unwrap() {
                hits += 1;
            }
        }
        // Over distinct pairs the kernel has 2^(5-r) - 1 nonzero members out of 31.
        let p = ((1u32 << (5 - r)) - 1) as f64 / 31.0;
        let f = hits as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * sigma + 1e-12, "f={f} p={p}");
    }

    #[test]
    fn collision_rate_fresh_generator() {
        let mut rng = seeded(123);
        let trials = 20_000;
        let l = 3;
        let mut hits = 0;
        for _ in 0..trials {
            let g = sample_rademacher(6, l, &mut rng);
            let w = BitVector::random(6, &mut rng);
            let mut wr = BitVector::random(6, &mut rng);
            while wr == w {
                wr = BitVector::random(6, &mut rng);
            }
            if matvec_mod2(&w, &g).unwrap() == matvec_mod2(&wr, &g).unwrap() {
                hits += 1;
            }
        }
        let p = 0.125;
        let f = hits as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * sigma, "f={f}");
    }

    proptest! {
        #[test]
        fn matvec_is_linear(seed in any::<u64>(), rows in 1usize..80, cols in 0usize..80) {
            let mut rng = seeded(seed);
            let g = sample_rademacher(rows, cols, &mut rng);
            let a = BitVector::random(rows, &mut rng);
            let b = BitVector::random(rows, &mut rng);
            let lhs = matvec_mod2(&a.xor(&b).unwrap(), &g).unwrap();
            let rhs = matvec_mod2(&a, &g).unwrap().xor(&matvec_mod2(&b, &g).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn rank_matches_oracle(seed in any::<u64>(), rows in 0usize..20, cols in 0usize..70) {
            let g = sample_rademacher(rows, cols, &mut seeded(seed));
            let r = rank_mod2(&g);
            prop_assert!(r <= rows.min(cols));
            prop_assert_eq!(r, rank_oracle(to_rows(&g)));
        }
    }
}
