//! Per-slot compressed sensing: sensing matrices, superposition, NNLS, top-K lists.

use crate::error::{CcsError, Result};
use crate::treecode::Fragment;
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Debug;
use std::io::{Read, Write};
use std::iter::Sum;
use std::sync::OnceLock;

/// Floating-point element of a sensing matrix.
pub trait CsFloat: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static> CsFloat for T {}

/// Largest matrix (in entries) built without an explicit budget: 2^27, i.e. 1 GiB of f64.
pub const DEFAULT_ENTRY_BUDGET: usize = 1 << 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Antipodal,
    Gaussian,
}

/// Column-major `rows x 2^J` real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix<T> {
    rows: usize,
    cols: usize,
    kind: MatrixKind,
    es: f64,
    data: Vec<T>,
    gram: OnceLock<T>,
}

impl<T: CsFloat> SensingMatrix<T> {
    /// Wraps column-major data. Used for fixtures and imported matrices.
    pub fn from_columns(rows: usize, cols: usize, kind: MatrixKind, es: f64, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CcsError::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(SensingMatrix { rows, cols, kind, es, data, gram: OnceLock::new() })
    }

    /// The same matrix with every entry scaled so the symbol energy becomes `es`.
    pub fn rescaled(&self, es: f64) -> Result<Self> {
        if !(es >= 0.0) || !(self.es > 0.0) {
            return Err(CcsError::Domain(format!("cannot rescale from Es={} to Es={es}", self.es)));
        }
        let f = T::from_f64((es / self.es).sqrt()).unwrap();
        let data = self.data.iter().map(|&v| v * f).collect();
        Self::from_columns(self.rows, self.cols, self.kind, es, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn es(&self) -> f64 {
        self.es
    }

    pub fn column(&self, c: usize) -> &[T] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[c * self.rows + r]
    }

    /// `A x`, skipping zero entries of `x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc != T::zero() {
                for (o, &a) in out.iter_mut().zip(self.column(c)) {
                    *o = *o + a * xc;
                }
            }
        }
        out
    }

    /// `Aᵀ r`.
    pub fn apply_transpose(&self, r: &[T]) -> Vec<T> {
        (0..self.cols).map(|c| dot(self.column(c), r)).collect()
    }

    /// Estimate of the largest eigenvalue of `AᵀA` by power iteration,
    /// computed once per matrix.
    pub fn gram_norm(&self) -> T {
        *self.gram.get_or_init(|| self.power_iteration())
    }

    fn power_iteration(&self) -> T {
        let mut v = vec![T::one(); self.cols];
        let mut lambda = T::zero();
        for _ in 0..50 {
            let w = self.apply_transpose(&self.apply(&v));
            let norm = dot(&w, &w).sqrt();
            if norm == T::zero() {
                return T::zero();
            }
            let next = norm / dot(&v, &v).sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
            let done = (next - lambda).abs() <= T::from_f64(1e-6).unwrap() * next;
            lambda = next;
            if done {
                break;
            }
        }
        lambda
    }
}

/// Eight independent accumulators let the compiler vectorise the loop.
fn dot<T: CsFloat>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let tail: T = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
    acc.iter().fold(tail, |s, &v| s + v)
}

fn norm2<T: CsFloat>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn build_sensing_matrix<T: CsFloat, R: Rng + ?Sized>(
    kind: MatrixKind,
    j: u32,
    rows: usize,
    es: f64,
    rng: &mut R,
) -> Result<SensingMatrix<T>> {
    build_sensing_matrix_with_budget(kind, j, rows, es, DEFAULT_ENTRY_BUDGET, rng)
}

pub fn build_sensing_matrix_with_budget<T: CsFloat, R: Rng + ?Sized>(
    kind: MatrixKind,
    j: u32,
    rows: usize,
    es: f64,
    budget: usize,
    rng: &mut R,
) -> Result<SensingMatrix<T>> {
    if rows == 0 || j == 0 {
        return Err(CcsError::Domain(format!("sensing matrix needs rows >= 1 and J >= 1, got {rows}, {j}")));
    }
    if es < 0.0 {
        return Err(CcsError::Domain(format!("Es={es} is negative")));
    }
    let too_big = CcsError::MatrixTooLarge { j, rows, budget };
    if j >= usize::BITS - 1 {
        return Err(too_big);
    }
    let cols = 1usize << j;
    match cols.checked_mul(rows) {
        Some(n) if n <= budget => {}
        _ => return Err(too_big),
    }
    let amp = es.sqrt();
    let mut data = Vec::with_capacity(rows * cols);
    match kind {
        MatrixKind::Antipodal => {
            let (pos, neg) = (T::from_f64(amp).unwrap(), T::from_f64(-amp).unwrap());
            let mut left = 0;
            let mut word = 0u64;
            for _ in 0..rows * cols {
                if left == 0 {
                    word = rng.random();
                    left = 64;
                }
                data.push(if word & 1 == 1 { pos } else { neg });
                word >>= 1;
                left -= 1;
            }
        }
        MatrixKind::Gaussian => {
            for _ in 0..rows * cols {
                let z: f64 = StandardNormal.sample(rng);
                data.push(T::from_f64(amp * z).unwrap());
            }
        }
    }
    SensingMatrix::from_columns(rows, cols, kind, es, data)
}

/// Sparse `b(j)`: column index to number of users sending it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotIndexVector {
    len: usize,
    counts: BTreeMap<Fragment, u32>,
}

impl SlotIndexVector {
    pub fn new(len: usize) -> Self {
        SlotIndexVector { len, counts: BTreeMap::new() }
    }

    pub fn from_fragments(len: usize, frags: impl IntoIterator<Item = Fragment>) -> Result<Self> {
        let mut b = Self::new(len);
        for f in frags {
            b.add(f)?;
        }
        Ok(b)
    }

    pub fn add(&mut self, f: Fragment) -> Result<()> {
        if f as usize >= self.len {
            return Err(CcsError::DimensionMismatch { expected: self.len, got: f as usize + 1 });
        }
        *self.counts.entry(f).or_default() += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Fragment, u32)> + '_ {
        self.counts.iter().map(|(&f, &c)| (f, c))
    }

    pub fn to_dense(&self) -> Vec<u32> {
        let mut v = vec![0; self.len];
        for (f, c) in self.iter() {
            v[f as usize] = c;
        }
        v
    }
}

/// `A b`, summing active columns with multiplicity.
pub fn slot_superimpose<T: CsFloat>(a: &SensingMatrix<T>, b: &SlotIndexVector) -> Result<Vec<T>> {
    if b.len() != a.cols() {
        return Err(CcsError::DimensionMismatch { expected: a.cols(), got: b.len() });
    }
    let mut y = vec![T::zero(); a.rows()];
    for (f, c) in b.iter() {
        let w = T::from_u32(c).unwrap();
        for (o, &x) in y.iter_mut().zip(a.column(f as usize)) {
            *o = *o + w * x;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnlsOptions {
    /// Stop once `‖Ax − y‖ <= tol·‖y‖` or the iterate moves less than `tol·‖x‖`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions { tol: 1e-6, max_iters: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsResult<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Ax − y‖` after each accepted iterate, starting from `x = 0`.
    pub residuals: Vec<T>,
}

/// Non-negative least squares by accelerated projected gradient.
///
/// Nesterov momentum with a restart whenever the objective would rise, so the
/// residual history is non-increasing. The step is `1/L` with `L` the power
/// iteration estimate of `‖AᵀA‖`.
pub fn nnls<T: CsFloat>(a: &SensingMatrix<T>, y: &[T], opts: NnlsOptions) -> Result<NnlsResult<T>> {
    if y.len() != a.rows() {
        return Err(CcsError::DimensionMismatch { expected: a.rows(), got: y.len() });
    }
    if !(opts.tol > 0.0) {
        return Err(CcsError::Domain(format!("nnls tolerance {} must be positive", opts.tol)));
    }
    let n = a.cols();
    let tol = T::from_f64(opts.tol).unwrap();
    let zero = T::zero();
    let ynorm = norm2(y);
    let mut x = vec![zero; n];
    let mut residuals = vec![ynorm];
    if ynorm == zero {
        return Ok(NnlsResult { x, iterations: 0, converged: true, residuals });
    }
    let lip = a.gram_norm() * T::from_f64(1.01).unwrap();
    if lip == zero {
        return Ok(NnlsResult { x, iterations: 0, converged: true, residuals });
    }
    let step = T::one() / lip;

    // ax tracks A·x; the extrapolated point's image is formed by linearity.
    let mut ax = vec![zero; a.rows()];
    let mut z = x.clone();
    let mut az = ax.clone();
    let mut t = T::one();
    let mut fx = ynorm * ynorm;

    for it in 1..=opts.max_iters {
        let mut candidate = None;
        for restart in [false, true] {
            let (base, abase) = if restart { (&x, &ax) } else { (&z, &az) };
            let r: Vec<T> = abase.iter().zip(y).map(|(&p, &q)| p - q).collect();
            let g = a.apply_transpose(&r);
            let xn: Vec<T> = base.iter().zip(&g).map(|(&b, &gi)| (b - step * gi).max(zero)).collect();
            let axn = a.apply(&xn);
            let fxn: T = axn.iter().zip(y).map(|(&p, &q)| (p - q) * (p - q)).sum();
            if fxn <= fx || restart {
                candidate = Some((xn, axn, fxn, restart));
                break;
            }
        }
        let (xn, axn, fxn, restarted) = candidate.expect("restart step always accepted");
        if restarted {
            t = T::one();
        }
        // A plain projected-gradient step from x never increases the objective;
        // guard against round-off anyway.
        let (xn, axn, fxn) = if fxn > fx { (x.clone(), ax.clone(), fx) } else { (xn, axn, fxn) };

        let tn = (T::one() + (T::one() + T::from_f64(4.0).unwrap() * t * t).sqrt()) / T::from_f64(2.0).unwrap();
        let beta = (t - T::one()) / tn;
        let dx: Vec<T> = xn.iter().zip(&x).map(|(&p, &q)| p - q).collect();
        let moved = norm2(&dx);
        z = xn.iter().zip(&dx).map(|(&p, &d)| p + beta * d).collect();
        az = axn.iter().zip(&ax).map(|(&p, &q)| p + beta * (p - q)).collect();
        t = tn;

        x = xn;
        ax = axn;
        fx = fxn;
        let res = fx.max(zero).sqrt();
        residuals.push(res);
        if res <= tol * ynorm || moved <= tol * norm2(&x).max(T::min_positive_value()) {
            return Ok(NnlsResult { x, iterations: it, converged: true, residuals });
        }
    }
    Ok(NnlsResult { x, iterations: opts.max_iters, converged: false, residuals })
}

/// Up to K fragments with their recovered magnitudes, largest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FragmentList {
    pub fragments: Vec<Fragment>,
    pub magnitudes: Vec<f64>,
}

impl FragmentList {
    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn contains(&self, f: Fragment) -> bool {
        self.fragments.contains(&f)
    }
}

impl AsRef<[Fragment]> for FragmentList {
    fn as_ref(&self) -> &[Fragment] {
        &self.fragments
    }
}

/// Indices of the `k` largest entries; ties go to the lower index.
pub fn top_k<T: CsFloat>(x: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    let cmp = |&a: &usize, &b: &usize| x[b].partial_cmp(&x[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b));
    let k = k.min(x.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    } else {
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecode {
    pub list: FragmentList,
    pub converged: bool,
    pub iterations: usize,
}

/// NNLS followed by keeping the K largest coefficients.
pub fn cs_decode_slot<T: CsFloat>(y: &[T], a: &SensingMatrix<T>, k: usize, opts: NnlsOptions) -> Result<SlotDecode> {
    if k == 0 {
        return Err(CcsError::Domain("list size K must be at least 1".into()));
    }
    let sol = nnls(a, y, opts)?;
    let idx = top_k(&sol.x, k);
    let list = FragmentList {
        fragments: idx.iter().map(|&i| i as Fragment).collect(),
        magnitudes: idx.iter().map(|&i| sol.x[i].to_f64().unwrap_or(0.0)).collect(),
    };
    Ok(SlotDecode { list, converged: sol.converged, iterations: sol.iterations })
}

const MAGIC: &[u8; 8] = b"CCSMAT1\0";

/// Writes the matrix as `CCSMAT1\0`, rows (u32 LE), cols (u32 LE), then
/// row-major little-endian f32 entries.
pub fn write_matrix<T: CsFloat, W: Write>(a: &SensingMatrix<T>, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| CcsError::MatrixFile(e.to_string());
    let dims = |v: usize| u32::try_from(v).map_err(|_| CcsError::MatrixFile(format!("dimension {v} exceeds u32")));
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&dims(a.rows)?.to_le_bytes()).map_err(io)?;
    out.write_all(&dims(a.cols)?.to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(a.cols * 4);
    for r in 0..a.rows {
        buf.clear();
        for c in 0..a.cols {
            buf.extend_from_slice(&a.get(r, c).to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads the format of [`write_matrix`]. The column count must be a power of two.
///
/// A matrix whose entries all share one magnitude is tagged antipodal with
/// `Es` equal to that magnitude squared; otherwise it is tagged Gaussian with
/// `Es` equal to the mean squared entry.
pub fn read_matrix<T: CsFloat, R: Read>(mut input: R) -> Result<SensingMatrix<T>> {
    let io = |e: std::io::Error| CcsError::MatrixFile(e.to_string());
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(io)?;
    if &header[..8] != MAGIC {
        return Err(CcsError::MatrixFile("bad magic".into()));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if rows == 0 || !cols.is_power_of_two() {
        return Err(CcsError::MatrixFile(format!("unsupported shape {rows}x{cols}")));
    }
    let mut raw = vec![0u8; rows * cols * 4];
    input.read_exact(&mut raw).map_err(io)?;
    let mut data = vec![T::zero(); rows * cols];
    let mut sum_sq = 0.0f64;
    let mut first_mag = None;
    let mut uniform = true;
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        let (r, c) = (i / cols, i % cols);
        data[c * rows + r] = T::from_f32(v).unwrap();
        sum_sq += (v as f64) * (v as f64);
        let mag = v.abs();
        match first_mag {
            None => first_mag = Some(mag),
            Some(m) if m != mag => uniform = false,
            _ => {}
        }
    }
    let (kind, es) = match (uniform, first_mag) {
        (true, Some(m)) => (MatrixKind::Antipodal, (m as f64) * (m as f64)),
        _ => (MatrixKind::Gaussian, sum_sq / (rows * cols) as f64),
    };
    SensingMatrix::from_columns(rows, cols, kind, es, data)
}
