//! Householder QR with column pivoting for least squares.

pub(crate) struct PivotedQr {
    /// Upper-triangular factor in pivoted order, `r[i][j]` for `i <= j < rank`.
    pub r: Vec<Vec<f64>>,
    /// `perm[k]` is the original column placed at position `k`.
    pub perm: Vec<usize>,
    pub rank: usize,
    /// First `rank` entries of Qᵀy.
    pub qty: Vec<f64>,
}

/// Factors the column-major `cols` (each of length n) and applies the same
/// reflections to `y`. Columns whose remaining norm falls below
/// `tol` times the largest initial column norm are left unfactored.
pub(crate) fn factor(mut cols: Vec<Vec<f64>>, y: &[f64], tol: f64) -> PivotedQr {
    let p = cols.len();
    let n = y.len();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut scale = 0.0f64;
    let mut rank = p.min(n);

    for k in 0..p.min(n) {
        let (mut best, mut best_norm) = (k, -1.0);
        for (j, col) in cols.iter().enumerate().skip(k) {
            let s: f64 = col[k..].iter().map(|v| v * v).sum();
            if s > best_norm {
                best = j;
                best_norm = s;
            }
        }
        cols.swap(k, best);
        perm.swap(k, best);
        let norm = best_norm.sqrt();
        if k == 0 {
            scale = norm;
        }
        if norm == 0.0 || norm <= tol * scale {
            rank = k;
            break;
        }

        let x0 = cols[k][k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        cols[k][k] = alpha;
        for t in &mut cols[k][k + 1..] {
            *t = 0.0;
        }
        if vnorm2 > 0.0 {
            for col in cols.iter_mut().skip(k + 1) {
                reflect(&v, vnorm2, &mut col[k..]);
            }
            reflect(&v, vnorm2, &mut qty[k..]);
        }
    }

    let r = (0..rank).map(|i| (0..rank).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect()).collect();
    qty.truncate(rank);
    PivotedQr { r, perm, rank, qty }
}

fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let s = 2.0 * v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

impl PivotedQr {
    /// Solves R b = Qᵀy and returns coefficients in original column order.
    pub fn solve(&self) -> Vec<f64> {
        let k = self.rank;
        let mut b = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| self.r[i][j] * b[j]).sum();
            b[i] = (self.qty[i] - s) / self.r[i][i];
        }
        let mut out = vec![0.0; self.perm.len()];
        for (pos, &col) in self.perm.iter().take(k).enumerate() {
            out[col] = b[pos];
        }
        out
    }

    /// (XᵀX)⁻¹ = R⁻¹R⁻ᵀ, returned in original column order. Full rank only.
    pub fn xtx_inverse(&self) -> Vec<Vec<f64>> {
        let k = self.rank;
        // Columns of R⁻¹ by back substitution on unit vectors.
        let mut rinv = vec![vec![0.0; k]; k];
        for c in 0..k {
            for i in (0..=c).rev() {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let s: f64 = (i + 1..=c).map(|j| self.r[i][j] * rinv[j][c]).sum();
                rinv[i][c] = (rhs - s) / self.r[i][i];
            }
        }
        let mut out = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in 0..k {
                let s: f64 = (a.max(b)..k).map(|m| rinv[a][m] * rinv[b][m]).sum();
                out[self.perm[a]][self.perm[b]] = s;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_of_square_system() {
        // x1 = (1,0,0), x2 = (1,1,0), x3 = (1,1,1); y = 2 x1 - x2 + 3 x3.
        let cols = vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]];
        let y = vec![4.0, 2.0, 3.0];
        let qr = factor(cols, &y, 1e-10);
        assert_eq!(qr.rank, 3);
        let b = qr.solve();
        for (got, want) in b.iter().zip([2.0, -1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn duplicate_column_lowers_rank() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let qr = factor(vec![c.clone(), vec![1.0, 0.0, 1.0, 0.0], c.iter().map(|v| 2.0 * v).collect()], &[1.0; 4], 1e-10);
        assert_eq!(qr.rank, 2);
    }

    #[test]
    fn inverse_of_orthogonal_design() {
        let cols = vec![vec![1.0, -1.0, 0.0, 0.0], vec![0.0, 0.0, 2.0, -2.0]];
        let qr = factor(cols, &[0.0; 4], 1e-10);
        let inv = qr.xtx_inverse();
        assert!((inv[0][0] - 0.5).abs() < 1e-15);
        assert!((inv[1][1] - 0.125).abs() < 1e-15);
        assert!(inv[0][1].abs() < 1e-15);
    }
}
