//! Symmetric matrices that are banded except for a few dense trailing
//! rows/columns ("arrowhead" structure).
//!
//! Only the lower triangle is stored:
//! - `band[i * (bw + 1) + (i - j)]` holds `A[i][j]` for `i - bw <= j <= i < n_band`
//! - `border[r * n_band + j]` holds `A[n_band + r][j]` for `j < n_band`
//! - `corner[r * k + c]` holds `A[n_band + r][n_band + c]` for `c <= r`

#[derive(Debug, Clone, PartialEq)]
pub struct BandedBordered {
    n_band: usize,
    bw: usize,
    n_border: usize,
    band: Vec<f64>,
    border: Vec<f64>,
    corner: Vec<f64>,
}

impl BandedBordered {
    pub fn zeros(n_band: usize, bw: usize, n_border: usize) -> Self {
        Self {
            n_band,
            bw,
            n_border,
            band: vec![0.0; n_band * (bw + 1)],
            border: vec![0.0; n_border * n_band],
            corner: vec![0.0; n_border * n_border],
        }
    }

    pub fn dim(&self) -> usize {
        self.n_band + self.n_border
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn n_border(&self) -> usize {
        self.n_border
    }

    pub fn clear(&mut self) {
        self.band.fill(0.0);
        self.border.fill(0.0);
        self.corner.fill(0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> &f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i < self.n_band {
            debug_assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
            &self.band[i * (self.bw + 1) + (i - j)]
        } else if j < self.n_band {
            &self.border[(i - self.n_band) * self.n_band + j]
        } else {
            &self.corner[(i - self.n_band) * self.n_border + (j - self.n_band)]
        }
    }

    #[inline]
    fn slot_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i < self.n_band {
            assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
            &mut self.band[i * (self.bw + 1) + (i - j)]
        } else if j < self.n_band {
            &mut self.border[(i - self.n_band) * self.n_band + j]
        } else {
            &mut self.corner[(i - self.n_band) * self.n_border + (j - self.n_band)]
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n_band && j < self.n_band && i.abs_diff(j) > self.bw {
            return 0.0;
        }
        *self.slot(i, j)
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`). Off-diagonal entries
    /// are added once; the symmetric counterpart is the same storage slot.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.slot_mut(i, j) += v;
    }

    pub fn diag(&self, i: usize) -> f64 {
        *self.slot(i, i)
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        y[..n].fill(0.0);
        for i in 0..self.n_band {
            let lo = i.saturating_sub(self.bw);
            let row = &self.band[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            for j in lo..i {
                let a = row[i - j];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += row[0] * x[i];
        }
        for r in 0..self.n_border {
            let i = self.n_band + r;
            let row = &self.border[r * self.n_band..(r + 1) * self.n_band];
            for j in 0..self.n_band {
                y[i] += row[j] * x[j];
                y[j] += row[j] * x[i];
            }
            for c in 0..=r {
                let a = self.corner[r * self.n_border + c];
                let jj = self.n_band + c;
                y[i] += a * x[jj];
                if c != r {
                    y[jj] += a * x[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn random_spd(n_band: usize, bw: usize, k: usize, seed: u64) -> (BandedBordered, DMatrix<f64>) {
        let n = n_band + k;
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = BandedBordered::zeros(n_band, bw, k);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let in_pattern = i >= n_band || i - j <= bw;
                if !in_pattern {
                    continue;
                }
                let v = if i == j { n as f64 + 1.0 } else { next() };
                m.add(i, j, v);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        (m, dense)
    }

    #[test]
    fn product_matches_dense() {
        for (n_band, bw, k) in [(1, 0, 0), (10, 0, 1), (30, 4, 1), (25, 7, 3), (12, 20, 2)] {
            let (m, dense) = random_spd(n_band, bw.min(n_band), k, 17 + n_band as u64);
            let n = n_band + k;
            let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let expected = &dense * DVector::from_vec(x.clone());
            let mut y = vec![0.0; n];
            m.mul_vec(&x, &mut y);
            for i in 0..n {
                assert!((y[i] - expected[i]).abs() < 1e-12);
                for j in 0..n {
                    assert_eq!(m.get(i, j), dense[(i, j)]);
                }
            }
        }
    }
}
