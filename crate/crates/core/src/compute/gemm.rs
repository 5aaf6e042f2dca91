//! Deterministic batched matrix products.
//!
//! All entry points split work into fixed-size row chunks and reduce
//! partial results in chunk order, so outputs are bit-identical
//! regardless of how many rayon workers execute them. The per-chunk
//! product is delegated to `matrixmultiply::dgemm`.

use rayon::prelude::*;

use super::matrix::DenseMatrix;

/// Fixed work granularity; part of the determinism contract.
const ROW_CHUNK: usize = 2048;

fn dgemm_chunk(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// out = x · wᵀ + b, where `x` is (batch × in), `w` is (out × in) and
/// `b` is a length-`out` bias row broadcast over the batch.
pub fn linear_batch(x: &DenseMatrix, w: &DenseMatrix, b: &[f64]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), w.rows());
    linear_batch_into(x, w, b, &mut out);
    out
}

/// [`linear_batch`] writing into a preallocated output (fully
/// overwritten).
pub fn linear_batch_into(x: &DenseMatrix, w: &DenseMatrix, b: &[f64], out: &mut DenseMatrix) {
    assert_eq!(x.cols(), w.cols(), "linear_batch: inner dims");
    assert_eq!(w.rows(), b.len(), "linear_batch: bias length");
    assert_eq!(out.shape(), (x.rows(), w.rows()), "linear_batch: output shape");
    let k = x.cols();
    let n = w.rows();
    // a contiguous wᵀ packs measurably faster than a strided view
    let wt = w.transposed();
    out.data_mut()
        .par_chunks_mut(ROW_CHUNK * n)
        .zip(x.data().par_chunks(ROW_CHUNK * k))
        .for_each(|(oc, xc)| {
            let rows = xc.len() / k;
            dgemm_chunk(rows, k, n, xc, k as isize, 1, wt.data(), n as isize, 1, 0.0, oc);
            for r in 0..rows {
                for (o, &bv) in oc[r * n..(r + 1) * n].iter_mut().zip(b.iter()) {
                    *o += bv;
                }
            }
        });
}

/// out = a · b for (m × k) · (k × n).
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    matmul_into(a, b, &mut out);
    out
}

/// [`matmul`] writing into a preallocated output (fully overwritten).
pub fn matmul_into(a: &DenseMatrix, b: &DenseMatrix, out: &mut DenseMatrix) {
    assert_eq!(a.cols(), b.rows(), "matmul: inner dims");
    assert_eq!(out.shape(), (a.rows(), b.cols()), "matmul: output shape");
    let k = a.cols();
    let n = b.cols();
    out.data_mut()
        .par_chunks_mut(ROW_CHUNK * n)
        .zip(a.data().par_chunks(ROW_CHUNK * k))
        .for_each(|(oc, ac)| {
            let rows = ac.len() / k;
            dgemm_chunk(rows, k, n, ac, k as isize, 1, b.data(), n as isize, 1, 0.0, oc);
        });
}

/// out = aᵀ · b for (batch × m)ᵀ · (batch × n), i.e. the (m × n) sum of
/// per-row outer products. Used for weight gradients.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.rows(), b.rows(), "matmul_tn: batch dims");
    let (batch, m) = a.shape();
    let n = b.cols();
    let partials: Vec<DenseMatrix> = a
        .data()
        .par_chunks(ROW_CHUNK * m)
        .zip(b.data().par_chunks(ROW_CHUNK * n))
        .map(|(ac, bc)| {
            let rows = ac.len() / m;
            let mut part = DenseMatrix::zeros(m, n);
            // aᵀ view via swapped strides; no copy
            dgemm_chunk(m, rows, n, ac, 1, m as isize, bc, n as isize, 1, 0.0, part.data_mut());
            part
        })
        .collect();
    let _ = batch;
    let mut out = DenseMatrix::zeros(m, n);
    for part in partials {
        for (o, p) in out.data_mut().iter_mut().zip(part.data()) {
            *o += p;
        }
    }
    out
}

/// Column sums of a (batch × n) matrix, reduced in fixed chunk order.
pub fn colsum(a: &DenseMatrix) -> Vec<f64> {
    let n = a.cols();
    let partials: Vec<Vec<f64>> = a
        .data()
        .par_chunks(ROW_CHUNK * n)
        .map(|ac| {
            let mut part = vec![0.0; n];
            for row in ac.chunks_exact(n) {
                for (p, &v) in part.iter_mut().zip(row) {
                    *p += v;
                }
            }
            part
        })
        .collect();
    let mut out = vec![0.0; n];
    for part in partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn test_mats(m: usize, k: usize, n: usize) -> (DenseMatrix, DenseMatrix) {
        let a = DenseMatrix::from_fn(m, k, |i, j| ((i * 7 + j * 3) % 13) as f64 * 0.25 - 1.0);
        let b = DenseMatrix::from_fn(k, n, |i, j| ((i * 5 + j * 11) % 17) as f64 * 0.125 - 0.9);
        (a, b)
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_matches_naive() {
        for &(m, k, n) in &[(1, 1, 1), (3, 4, 5), (130, 64, 33), (4097, 16, 8)] {
            let (a, b) = test_mats(m, k, n);
            assert_close(&matmul(&a, &b), &naive_matmul(&a, &b), 1e-12);
        }
    }

    #[test]
    fn linear_batch_matches_naive() {
        let (x, wt) = test_mats(300, 24, 16);
        let w = wt.transposed(); // (16 x 24)
        let bias: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let got = linear_batch(&x, &w, &bias);
        let mut want = naive_matmul(&x, &wt);
        for i in 0..want.rows() {
            for j in 0..want.cols() {
                let v = want.get(i, j) + bias[j];
                want.set(i, j, v);
            }
        }
        assert_close(&got, &want, 1e-12);
    }

    #[test]
    fn matmul_tn_matches_naive() {
        let (a, _) = test_mats(5000, 24, 1);
        let (b, _) = test_mats(5000, 18, 1);
        let got = matmul_tn(&a, &b);
        let want = naive_matmul(&a.transposed(), &b);
        assert_close(&got, &want, 1e-10);
    }

    #[test]
    fn colsum_matches_naive() {
        let (a, _) = test_mats(4100, 7, 1);
        let got = colsum(&a);
        for j in 0..7 {
            let want: f64 = (0..a.rows()).map(|i| a.get(i, j)).sum();
            assert!((got[j] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn products_are_thread_count_invariant() {
        let (a, b) = test_mats(5000, 128, 128);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| (matmul(&a, &b), matmul_tn(&a, &a), colsum(&a)));
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| (matmul(&a, &b), matmul_tn(&a, &a), colsum(&a)));
        assert_eq!(one.0.data(), four.0.data());
        assert_eq!(one.1.data(), four.1.data());
        assert_eq!(one.2, four.2);
    }
}
