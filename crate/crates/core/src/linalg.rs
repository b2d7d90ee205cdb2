//! Small dense linear algebra used by the GP sampler.

use ndarray::{s, Array2};

/// In-place lower Cholesky factorization, blocked so the trailing update
/// runs through the matmul kernel. Returns `Err(k)` with the failing pivot
/// index when the matrix is not positive definite.
///
/// On success the lower triangle of `a` holds `L` with `L L^T = A`; the
/// strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut Array2<f64>) -> Result<(), usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    const BLOCK: usize = 48;

    let mut k = 0;
    while k < n {
        let nb = BLOCK.min(n - k);

        // Factor the diagonal block (unblocked).
        for j in k..k + nb {
            let mut d = a[[j, j]];
            for p in k..j {
                let v = a[[j, p]];
                d -= v * v;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            a[[j, j]] = d;
            for i in j + 1..k + nb {
                let mut v = a[[i, j]];
                for p in k..j {
                    v -= a[[i, p]] * a[[j, p]];
                }
                a[[i, j]] = v / d;
            }
        }

        let rest = k + nb;
        if rest < n {
            // Panel solve: A[rest.., k..rest] <- A[rest.., k..rest] * L_kk^-T
            for j in k..rest {
                let d = a[[j, j]];
                for i in rest..n {
                    let mut v = a[[i, j]];
                    for p in k..j {
                        v -= a[[i, p]] * a[[j, p]];
                    }
                    a[[i, j]] = v / d;
                }
            }
            // Trailing update: A[rest.., rest..] -= P P^T with P the panel.
            let panel = a.slice(s![rest.., k..rest]).to_owned();
            let update = panel.dot(&panel.t());
            let mut trailing = a.slice_mut(s![rest.., rest..]);
            trailing -= &update;
        }
        k = rest;
    }

    // Zero the strict upper triangle so the factor is directly usable.
    for i in 0..n {
        for j in i + 1..n {
            a[[i, j]] = 0.0;
        }
    }
    Ok(())
}

/// `y = L z` for lower-triangular `L` (full matrix with zeroed upper part).
pub fn lower_triangular_matvec(l: &Array2<f64>, z: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = l.row(i);
        let mut acc = 0.0;
        for j in 0..=i {
            acc += row[j] * z[j];
        }
        y[i] = acc;
    }
    y
}
