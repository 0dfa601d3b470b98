//! Banded LU with partial pivoting (the LAPACK `gbsv` scheme) for the
//! Newton systems of the radial solver.

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals plus `kl`
/// extra super-diagonals of room for pivoting fill-in.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // column-major: entry (r, c) lives at data[c * ld + (kl + ku + r - c)]
    ld: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self { n, kl, ku, ld, data: vec![0.0; ld * n] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(r + self.kl + self.ku >= c && r <= c + self.kl, "({r}, {c}) outside band");
        c * self.ld + (self.kl + self.ku + r - c)
    }

    #[inline]
    pub(crate) fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.idx(r, c)]
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.data[i] = v;
    }

    /// Solves `A x = b` in place, destroying the matrix; `b` becomes `x`.
    pub(crate) fn solve_in_place(mut self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let reach = self.kl + self.ku;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut pivot = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Integration(format!("singular banded system at column {k}")));
            }
            let last_col = (k + reach).min(n - 1);
            if pivot != k {
                for c in k..=last_col {
                    let (a, p) = (self.idx(k, c), self.idx(pivot, c));
                    self.data.swap(a, p);
                }
                b.swap(k, pivot);
            }
            let diag = self.get(k, k);
            for r in k + 1..=last_row {
                let factor = self.get(r, k) / diag;
                if factor == 0.0 {
                    continue;
                }
                self.set(r, k, 0.0);
                for c in k + 1..=last_col {
                    let v = self.get(r, c) - factor * self.get(k, c);
                    self.set(r, c, v);
                }
                b[r] -= factor * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = b[k];
            for c in k + 1..=last_col {
                acc -= self.get(k, c) * b[c];
            }
            b[k] = acc / self.get(k, k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for r in k + 1..n {
                let f = a[r][k] / a[k][k];
                for c in k..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| a[k][c] * b[c]).sum();
            b[k] = (b[k] - s) / a[k][k];
        }
        b
    }

    #[test]
    fn matches_dense_elimination_with_pivoting() {
        let n = 23;
        let (kl, ku) = (2, 2);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // small diagonal forces row swaps
                let v = if r == c { 1e-3 * (r as f64 + 1.0) } else { ((r * 7 + c * 3) % 11) as f64 - 5.0 };
                band.set(r, c, v);
                dense[r][c] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let expected = dense_solve(dense, b.clone());
        let mut x = b;
        band.solve_in_place(&mut x).unwrap();
        for (got, want) in x.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn singular_is_reported() {
        let band = BandMatrix::zeros(4, 1, 1);
        let mut b = vec![1.0; 4];
        assert!(band.solve_in_place(&mut b).is_err());
    }
}
