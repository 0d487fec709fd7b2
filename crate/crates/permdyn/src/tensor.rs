//! Dense row-major f64 matrices and the handful of GEMM kernels the
//! training loop lives on.
//!
//! All reductions run in a fixed order (ascending row / ascending k), and the
//! parallel paths partition output rows so each element is produced by exactly
//! one thread. Results are therefore bitwise identical regardless of thread
//! count.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Worker threads used by row-partitioned kernels and trajectory generation.
/// Capped by the `PERMDYN_THREADS` environment variable when set.
pub fn thread_limit() -> usize {
    static LIMIT: OnceLock<usize> = OnceLock::new();
    *LIMIT.get_or_init(|| {
        let cap = std::env::var("PERMDYN_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        let n = cap.unwrap_or_else(rayon::current_num_threads);
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        rayon::current_num_threads()
    })
}

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "Tensor2::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::LengthMismatch {
                    op: "Tensor2::from_rows",
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor2 { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`, shapes `[m×k]·[k×n] -> [m×n]`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        gemm(
            self.rows, self.cols, other.cols,
            &self.data, &other.data, &mut out.data,
        );
        Ok(out)
    }
}

/// Sequential work below this many multiply-adds is not worth fanning out.
const PAR_THRESHOLD: usize = 1 << 18;

fn row_chunk(m: usize, work_per_row: usize) -> usize {
    let threads = thread_limit();
    if threads <= 1 || m * work_per_row < PAR_THRESHOLD {
        return m.max(1);
    }
    // A few chunks per thread for load balance; each chunk stays sequential.
    (m / (threads * 4)).max(16).min(m.max(1))
}

/// `c = a·b` with `a [m×k]`, `b [k×n]`, both row-major. Overwrites `c`.
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let chunk = row_chunk(m, k * n);
    if chunk >= m {
        gemm_serial(k, n, a, b, c);
    } else {
        c.par_chunks_mut(chunk * n)
            .zip(a.par_chunks(chunk * k))
            .for_each(|(c_blk, a_blk)| gemm_serial(k, n, a_blk, b, c_blk));
    }
}

fn gemm_serial(k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for (c_row, a_row) in c.chunks_exact_mut(n).zip(a.chunks_exact(k)) {
        c_row.fill(0.0);
        let mut kk = 0;
        // Four b-rows per pass keeps the c-row store traffic off the critical path.
        while kk + 4 <= k {
            let (a0, a1, a2, a3) = (a_row[kk], a_row[kk + 1], a_row[kk + 2], a_row[kk + 3]);
            let b0 = &b[kk * n..kk * n + n];
            let b1 = &b[(kk + 1) * n..(kk + 1) * n + n];
            let b2 = &b[(kk + 2) * n..(kk + 2) * n + n];
            let b3 = &b[(kk + 3) * n..(kk + 3) * n + n];
            for (j, cv) in c_row.iter_mut().enumerate() {
                *cv += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            kk += 4;
        }
        while kk < k {
            let aik = a_row[kk];
            let b_row = &b[kk * n..kk * n + n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
            kk += 1;
        }
    }
}

/// `c += a·bᵀ` with `a [m×k]`, `b [n×k]`, `c [m×n]`.
///
/// `b` is transposed into scratch once so the row-major kernel can run at
/// full speed; for the backward passes `m >> k·n` and the copy is noise.
pub fn gemm_abt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let mut bt = vec![0.0f64; k * n];
    for (j, b_row) in b.chunks_exact(k).enumerate() {
        for (i, bv) in b_row.iter().enumerate() {
            bt[i * n + j] = *bv;
        }
    }
    let chunk = row_chunk(m, k * n);
    if chunk >= m {
        gemm_serial_acc(k, n, a, &bt, c);
    } else {
        c.par_chunks_mut(chunk * n)
            .zip(a.par_chunks(chunk * k))
            .for_each(|(c_blk, a_blk)| gemm_serial_acc(k, n, a_blk, &bt, c_blk));
    }
}

fn gemm_serial_acc(k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for (c_row, a_row) in c.chunks_exact_mut(n).zip(a.chunks_exact(k)) {
        let mut kk = 0;
        while kk + 4 <= k {
            let (a0, a1, a2, a3) = (a_row[kk], a_row[kk + 1], a_row[kk + 2], a_row[kk + 3]);
            let b0 = &b[kk * n..kk * n + n];
            let b1 = &b[(kk + 1) * n..(kk + 1) * n + n];
            let b2 = &b[(kk + 2) * n..(kk + 2) * n + n];
            let b3 = &b[(kk + 3) * n..(kk + 3) * n + n];
            for (j, cv) in c_row.iter_mut().enumerate() {
                *cv += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            kk += 4;
        }
        while kk < k {
            let aik = a_row[kk];
            let b_row = &b[kk * n..kk * n + n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
            kk += 1;
        }
    }
}

/// `c += aᵀ·b` with `a [r×m]`, `b [r×n]`, `c [m×n]`.
///
/// Threads partition the `m` axis; every thread walks the `r` rows in
/// ascending order, so the accumulation order per output element is fixed.
pub fn gemm_atb_acc(r: usize, m: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), r * m);
    debug_assert_eq!(b.len(), r * n);
    debug_assert_eq!(c.len(), m * n);
    let chunk = row_chunk(m, r * n);
    if chunk >= m {
        atb_serial(r, m, n, 0, m, a, b, c);
    } else {
        c.par_chunks_mut(chunk * n)
            .enumerate()
            .for_each(|(blk, c_blk)| {
                let i0 = blk * chunk;
                let i1 = (i0 + chunk).min(m);
                atb_serial(r, m, n, i0, i1, a, b, c_blk);
            });
    }
}

fn atb_serial(r: usize, m: usize, n: usize, i0: usize, i1: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for rr in 0..r {
        let a_row = &a[rr * m..rr * m + m];
        let b_row = &b[rr * n..rr * n + n];
        for i in i0..i1 {
            let av = a_row[i];
            let c_row = &mut c[(i - i0) * n..(i - i0) * n + n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// Column sums of `a [r×n]` accumulated into `out [n]`.
pub fn col_sums_acc(n: usize, a: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), n);
    for row in a.chunks_exact(n) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor2::from_vec(rows, cols, data).unwrap()
    }

    /// Plain triple loop, kept deliberately independent of the kernels.
    fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(m, k, n) in &[(1, 1, 1), (3, 4, 2), (5, 7, 9), (17, 33, 6)] {
            let a = random(m, k, &mut rng);
            let b = random(k, n, &mut rng);
            let got = a.matmul(&b).unwrap();
            let want = naive_matmul(&a, &b);
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12, "{} vs {}", g, w);
            }
        }
    }

    #[test]
    fn matmul_rejects_shape_mismatch() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
    }

    #[test]
    fn abt_and_atb_match_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random(6, 5, &mut rng);
        let b = random(7, 5, &mut rng);
        // a·bᵀ
        let mut c = vec![0.0; 6 * 7];
        gemm_abt_acc(6, 5, 7, a.data(), b.data(), &mut c);
        let mut bt = Tensor2::zeros(5, 7);
        for i in 0..7 {
            for j in 0..5 {
                bt.set(j, i, b.get(i, j));
            }
        }
        let want = naive_matmul(&a, &bt);
        for (g, w) in c.iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12);
        }
        // aᵀ·b with a [r×m], b [r×n]
        let a2 = random(8, 3, &mut rng);
        let b2 = random(8, 4, &mut rng);
        let mut c2 = vec![0.0; 3 * 4];
        gemm_atb_acc(8, 3, 4, a2.data(), b2.data(), &mut c2);
        let mut a2t = Tensor2::zeros(3, 8);
        for i in 0..8 {
            for j in 0..3 {
                a2t.set(j, i, a2.get(i, j));
            }
        }
        let want2 = naive_matmul(&a2t, &b2);
        for (g, w) in c2.iter().zip(want2.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor2::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
