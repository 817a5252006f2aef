use super::banded::BandedBordered;

/// Row-compressed sparse matrix with a fixed pattern.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn n_rows(&self) -> usize {
        self.row_start.len().saturating_sub(1)
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_start[r]..self.row_start[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    /// `out += Jᵀ w`
    pub fn add_transpose_product(&self, w: &[f64], out: &mut [f64]) {
        for r in 0..self.n_rows() {
            if w[r] == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                out[*c] += w[r] * v;
            }
        }
    }

    /// `H += Σ_r scale_r · J_rᵀ J_r` for rows with nonzero scale.
    pub fn add_gram(&self, scale: &[f64], h: &mut BandedBordered) {
        for r in 0..self.n_rows() {
            let s = scale[r];
            if s == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for a in 0..cols.len() {
                let va = s * vals[a];
                for b in 0..=a {
                    let v = va * vals[b];
                    if a == b {
                        h.add(cols[a], cols[a], v);
                    } else if cols[a] == cols[b] {
                        h.add(cols[a], cols[a], 2.0 * v);
                    } else {
                        h.add(cols[a], cols[b], v);
                    }
                }
            }
        }
    }
}

/// Sparsity of the Lagrangian Hessian: the first `n_vars - n_border`
/// variables form a band of half-width `bandwidth`, the trailing
/// `n_border` variables couple densely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HessianShape {
    pub bandwidth: usize,
    pub n_border: usize,
}

/// A smooth NLP
///
/// ```text
/// minimize f(z)  subject to  c(z) = 0,  g(z) <= 0,  lower <= z <= upper
/// ```
///
/// Constraint Jacobian rows are ordered equality rows first, then
/// inequality rows.
pub trait SmoothNlp {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn objective(&self, z: &[f64]) -> f64;
    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]);
    fn constraints(&self, z: &[f64], eq: &mut [f64], ineq: &mut [f64]);
    fn constraint_jacobian(&self, z: &[f64], jac: &mut SparseRows);

    fn hessian_shape(&self) -> HessianShape;
    /// Adds `obj_weight·∇²f + Σ eq_w·∇²c + Σ ineq_w·∇²g` to `h`.
    fn add_lagrangian_hessian(&self, z: &[f64], obj_weight: f64, eq_w: &[f64], ineq_w: &[f64], h: &mut BandedBordered);
}
