//! Newton (KKT) systems
//!
//! ```text
//! [ H + δw·I   Jᵀ    ] [dz]   [r_z]
//! [ J         −δc·I  ] [dy] = [r_y]
//! ```
//!
//! with `H` banded except for a few trailing border variables. Unknowns are
//! reordered so each equality row sits between the variables it touches,
//! which keeps the core matrix banded; the border is eliminated through a
//! small dense Schur complement. The core is factorized by a band LU with
//! partial pivoting, so the indefinite saddle structure needs no special care.

use super::banded::BandedBordered;
use super::problem::SparseRows;
use nalgebra::{DMatrix, DVector};

/// Band LU with partial pivoting (the classic `gbtrf` scheme).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular (column {column})")]
pub struct Singular {
    pub column: usize,
}

impl BandLu {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
        }
    }

    pub fn clear(&mut self) {
        self.ab.fill(0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.kl + self.ku >= j && i <= j + self.kl, "({i},{j}) outside band");
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    /// Adds `v` to `A[i][j]`; `|i − j|` must lie within the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i + self.ku && i <= j + self.kl, "({i},{j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn factorize(&mut self) -> Result<(), Singular> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = 0.0f64;
            for k in 0..=km {
                let v = self.ab[self.idx(j + k, j)].abs();
                if v > best {
                    best = v;
                    p = k;
                }
            }
            self.ipiv[j] = j + p;
            if !(best > 0.0) || !best.is_finite() {
                return Err(Singular { column: j });
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            for k in 1..=km {
                let t = self.idx(j + k, j);
                self.ab[t] /= pivot;
            }
            for c in j + 1..=ju {
                let a = self.ab[self.idx(j, c)];
                if a == 0.0 {
                    continue;
                }
                for k in 1..=km {
                    let l = self.ab[self.idx(j + k, j)];
                    let t = self.idx(j + k, c);
                    self.ab[t] -= l * a;
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for k in 1..=km {
                    b[j + k] -= self.ab[self.idx(j + k, j)] * bj;
                }
            }
        }
        let span = self.kl + self.ku;
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(span)..j {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
    }
}

/// Permutation and band layout of the KKT matrix for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct KktLayout {
    n_vars: usize,
    n_eq: usize,
    n_border: usize,
    /// Core position of each core unknown (`z` without the border, then `y`).
    position: Vec<usize>,
    pub half_bandwidth: usize,
}

impl KktLayout {
    /// `jac` holds the equality rows first; only those are used.
    pub fn new(n_vars: usize, n_border: usize, hessian_bandwidth: usize, jac: &SparseRows, n_eq: usize) -> Self {
        let n_core_vars = n_vars - n_border;
        let n_core = n_core_vars + n_eq;
        // twice the column index for variables, midpoint of the touched
        // columns (plus one, so it lands after a tied variable) for rows
        let mut keys: Vec<(usize, usize)> = (0..n_core_vars).map(|i| (2 * i, i)).collect();
        for r in 0..n_eq {
            let (cols, _) = jac.row(r);
            let core = cols.iter().filter(|c| **c < n_core_vars);
            let lo = core.clone().min();
            let hi = core.max();
            let key = match (lo, hi) {
                (Some(a), Some(b)) => a + b + 1,
                _ => 2 * n_core_vars,
            };
            keys.push((key, n_core_vars + r));
        }
        keys.sort();
        let mut position = vec![0; n_core];
        for (p, (_, u)) in keys.iter().enumerate() {
            position[*u] = p;
        }
        let mut bw = 0usize;
        for i in 0..n_core_vars {
            for j in i..(i + hessian_bandwidth + 1).min(n_core_vars) {
                bw = bw.max(position[i].abs_diff(position[j]));
            }
        }
        for r in 0..n_eq {
            let (cols, _) = jac.row(r);
            for c in cols.iter().filter(|c| **c < n_core_vars) {
                bw = bw.max(position[n_core_vars + r].abs_diff(position[*c]));
            }
        }
        Self {
            n_vars,
            n_eq,
            n_border,
            position,
            half_bandwidth: bw,
        }
    }

    fn n_core(&self) -> usize {
        self.n_vars - self.n_border + self.n_eq
    }
}

/// Factorized KKT matrix.
#[derive(Debug, Clone)]
pub struct KktFactor {
    layout: KktLayout,
    lu: BandLu,
    /// `A⁻¹ B` for each border column, in core ordering.
    border_solves: Vec<Vec<f64>>,
    /// Border columns `B`, in core ordering.
    border_cols: Vec<Vec<f64>>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl KktFactor {
    pub fn new(layout: KktLayout) -> Self {
        let n = layout.n_core();
        let bw = layout.half_bandwidth;
        let k = layout.n_border;
        Self {
            lu: BandLu::zeros(n, bw, bw),
            border_solves: vec![vec![0.0; n]; k],
            border_cols: vec![vec![0.0; n]; k],
            schur: None,
            layout,
        }
    }

    /// Assembles and factorizes the matrix for Hessian `h`, primal shift
    /// `delta_w`, equality Jacobian rows of `jac` and dual regularization
    /// `delta_c`.
    pub fn factorize(&mut self, h: &BandedBordered, delta_w: f64, jac: &SparseRows, delta_c: f64) -> Result<(), Singular> {
        let l = &self.layout;
        let n_core_vars = l.n_vars - l.n_border;
        let bw = h.bandwidth();
        let pos = &l.position;
        self.lu.clear();
        for i in 0..n_core_vars {
            let pi = pos[i];
            self.lu.add(pi, pi, h.get(i, i) + delta_w);
            for j in i + 1..(i + bw + 1).min(n_core_vars) {
                let v = h.get(i, j);
                if v != 0.0 {
                    let pj = pos[j];
                    self.lu.add(pi, pj, v);
                    self.lu.add(pj, pi, v);
                }
            }
        }
        for b in 0..l.n_border {
            self.border_cols[b].fill(0.0);
            for j in 0..n_core_vars {
                self.border_cols[b][pos[j]] = h.get(n_core_vars + b, j);
            }
        }
        for r in 0..l.n_eq {
            let pr = pos[n_core_vars + r];
            self.lu.add(pr, pr, -delta_c);
            let (cols, vals) = jac.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c < n_core_vars {
                    let pc = pos[*c];
                    self.lu.add(pr, pc, *v);
                    self.lu.add(pc, pr, *v);
                } else {
                    self.border_cols[c - n_core_vars][pr] += v;
                }
            }
        }
        self.lu.factorize()?;
        let k = l.n_border;
        if k == 0 {
            self.schur = None;
            return Ok(());
        }
        for b in 0..k {
            self.border_solves[b].copy_from_slice(&self.border_cols[b]);
            self.lu.solve_in_place(&mut self.border_solves[b]);
        }
        let mut s = DMatrix::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                let corner = h.get(n_core_vars + r, n_core_vars + c) + if r == c { delta_w } else { 0.0 };
                let cross: f64 = self.border_cols[r].iter().zip(&self.border_solves[c]).map(|(a, b)| a * b).sum();
                s[(r, c)] = corner - cross;
            }
        }
        let lu = s.lu();
        if !lu.is_invertible() {
            return Err(Singular { column: self.lu.n });
        }
        self.schur = Some(lu);
        Ok(())
    }

    /// Solves for `(dz, dy)` given `(r_z, r_y)`.
    pub fn solve(&self, rz: &[f64], ry: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let n_core_vars = l.n_vars - l.n_border;
        let pos = &l.position;
        let mut core = vec![0.0; l.n_core()];
        for i in 0..n_core_vars {
            core[pos[i]] = rz[i];
        }
        for r in 0..l.n_eq {
            core[pos[n_core_vars + r]] = ry[r];
        }
        self.lu.solve_in_place(&mut core);
        let k = l.n_border;
        let mut tb = vec![0.0; k];
        if let Some(schur) = &self.schur {
            let rhs = DVector::from_fn(k, |b, _| rz[n_core_vars + b] - self.border_cols[b].iter().zip(&core).map(|(a, x)| a * x).sum::<f64>());
            let t = schur.solve(&rhs).unwrap_or_else(|| DVector::zeros(k));
            for b in 0..k {
                tb[b] = t[b];
                for (c, s) in core.iter_mut().zip(&self.border_solves[b]) {
                    *c -= t[b] * s;
                }
            }
        }
        let mut dz = vec![0.0; l.n_vars];
        for i in 0..n_core_vars {
            dz[i] = core[pos[i]];
        }
        dz[n_core_vars..].copy_from_slice(&tb);
        let dy = (0..l.n_eq).map(|r| core[pos[n_core_vars + r]]).collect();
        (dz, dy)
    }
}
