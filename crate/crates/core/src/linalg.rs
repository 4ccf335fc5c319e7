//! Small dense kernels for the cycle fits (n is the number of phases, ~13).
//! Matrices are row-major `Vec<f64>`.

/// Lower Cholesky factor of the SPD matrix `a` (n×n); `None` if a pivot is
/// not strictly positive.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves L y = b.
pub(crate) fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves Lᵀ x = y.
pub(crate) fn backward_sub_t(l: &[f64], n: usize, y: &[f64]) -> Vec<f64> {
    let mut x = y.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves (L Lᵀ) x = b.
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    backward_sub_t(l, n, &forward_sub(l, n, b))
}

/// log det(L Lᵀ).
pub(crate) fn cholesky_log_det(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

/// Dot product in twice the working precision (Ogita–Rump–Oishi Dot2).
pub(crate) fn dot2(a: &[f64], b: &[f64]) -> f64 {
    dot2_iter(a.iter().copied().zip(b.iter().copied()))
}

fn dot2_iter(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (x, y) in pairs {
        let p = x * y;
        let ep = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        let es = (s - (t - z)) + (p - z);
        s = t;
        c += ep + es;
    }
    s + c
}

/// Solves A x = b given the Cholesky factor of A, with iterative refinement
/// on residuals computed by Dot2.
pub(crate) fn cholesky_solve_refined(a: &[f64], l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = cholesky_solve(l, n, b);
    let mut r = vec![0.0; n];
    for _ in 0..3 {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            let ax = row.iter().copied().zip(x.iter().copied());
            r[i] = -dot2_iter(ax.chain(std::iter::once((-1.0, b[i]))));
        }
        let dx = cholesky_solve(l, n, &r);
        let mut changed = false;
        for (xi, d) in x.iter_mut().zip(&dx) {
            let next = *xi + d;
            changed |= next != *xi;
            *xi = next;
        }
        if !changed {
            break;
        }
    }
    x
}

/// Least-squares solution of min ‖A x − b‖ via Householder QR.
/// `a` is rows×cols with rows ≥ cols and full column rank; returns `None`
/// on a (numerically) rank-deficient design.
pub(crate) fn lstsq_qr(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut r = a.to_vec();
    let mut qtb = b.to_vec();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for k in 0..cols {
        let norm = (k..rows).map(|i| r[i * cols + k].powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-13 * scale {
            return None;
        }
        let alpha = if r[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| r[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2 = v.iter().map(|x| x * x).sum::<f64>();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..cols {
            let d = (k..rows).map(|i| v[i - k] * r[i * cols + j]).sum::<f64>();
            let f = 2.0 * d / vnorm2;
            for i in k..rows {
                r[i * cols + j] -= f * v[i - k];
            }
        }
        let d = (k..rows).map(|i| v[i - k] * qtb[i]).sum::<f64>();
        let f = 2.0 * d / vnorm2;
        for i in k..rows {
            qtb[i] -= f * v[i - k];
        }
    }
    let mut x = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = qtb[i];
        for j in i + 1..cols {
            s -= r[i * cols + j] * x[j];
        }
        x[i] = s / r[i * cols + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_known_factor() {
        let a = [4.0, 12.0, -16.0, 12.0, 37.0, -43.0, -16.0, -43.0, 98.0];
        let l = cholesky(&a, 3).unwrap();
        let want = [2.0, 0.0, 0.0, 6.0, 1.0, 0.0, -8.0, 5.0, 3.0];
        for (x, w) in l.iter().zip(want) {
            assert!((x - w).abs() < 1e-12);
        }
        assert!((cholesky_log_det(&l, 3) - (36.0f64).ln()).abs() < 1e-12);
        let x = cholesky_solve(&l, 3, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-9);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(cholesky(&[0.0], 1).is_none());
    }

    #[test]
    fn dot2_recovers_cancellation() {
        let a = [1e16, 1.0, -1e16];
        let b = [1.0, 1.0, 1.0];
        assert_eq!(dot2(&a, &b), 1.0);
        assert_eq!(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>(), 0.0);
    }

    #[test]
    fn qr_line_fit() {
        // y = 1 + 2x exactly.
        let xs = [0.0, 1.0, 2.0, 3.0];
        let a: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let b: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x).collect();
        let c = lstsq_qr(&a, 4, 2, &b).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
        // Rank deficient: duplicated column.
        let a: Vec<f64> = xs.iter().flat_map(|&x| [x, x]).collect();
        assert!(lstsq_qr(&a, 4, 2, &b).is_none());
    }
}
