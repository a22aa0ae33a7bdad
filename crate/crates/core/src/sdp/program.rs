use nalgebra::{DMatrix, DVector};

use super::SdpError;
use crate::scalar::Scalar;

/// A named group of consecutive scalar decision variables (a scalar or a matrix, row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl VariableBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols);
        self.offset + r * self.cols + c
    }
}

/// `min  k + c'x + 1/2 x'Qx   s.t.  A0 + sum_k x_k A_k <= 0 (NSD),  x_j >= 0 for j in nonneg`.
///
/// Coefficient matrices are stored sparsely as upper-triangle triplets.
#[derive(Debug, Clone)]
pub struct LmiProgram<S: Scalar> {
    dim: usize,
    blocks: Vec<VariableBlock>,
    constant: DMatrix<S>,
    coeffs: Vec<Vec<(usize, usize, S)>>,
    objective_constant: S,
    linear: Vec<S>,
    quadratic: Vec<(usize, usize, S)>,
    nonneg: Vec<usize>,
    strict_point: Option<DVector<S>>,
}

impl<S: Scalar> LmiProgram<S> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            blocks: Vec::new(),
            constant: DMatrix::zeros(dim, dim),
            coeffs: Vec::new(),
            objective_constant: S::zero(),
            linear: Vec::new(),
            quadratic: Vec::new(),
            nonneg: Vec::new(),
            strict_point: None,
        }
    }

    /// Adds a `rows x cols` variable block and returns it.
    pub fn add_variable(&mut self, name: &str, rows: usize, cols: usize) -> VariableBlock {
        let block = VariableBlock {
            name: name.to_string(),
            rows,
            cols,
            offset: self.num_vars(),
        };
        let n = block.len();
        self.coeffs.extend(std::iter::repeat_with(Vec::new).take(n));
        self.linear.extend(std::iter::repeat_n(S::zero(), n));
        self.blocks.push(block.clone());
        block
    }

    pub fn set_constant(&mut self, a0: DMatrix<S>) {
        assert_eq!(a0.shape(), (self.dim, self.dim), "constant term shape");
        self.constant = a0;
    }

    /// Adds `value` to entries `(i, j)` and `(j, i)` of the coefficient matrix of variable `k`.
    pub fn add_coefficient(&mut self, k: usize, i: usize, j: usize, value: S) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.coeffs[k].push((i, j, value));
    }

    pub fn set_objective_constant(&mut self, value: S) {
        self.objective_constant = value;
    }

    pub fn add_linear(&mut self, k: usize, value: S) {
        self.linear[k] += value;
    }

    /// Adds `value` to `Q[k][l]` and `Q[l][k]`; the objective carries `1/2 x'Qx`.
    pub fn add_quadratic(&mut self, k: usize, l: usize, value: S) {
        let (k, l) = if k <= l { (k, l) } else { (l, k) };
        self.quadratic.push((k, l, value));
    }

    pub fn require_nonneg(&mut self, k: usize) {
        if !self.nonneg.contains(&k) {
            self.nonneg.push(k);
        }
    }

    /// A point known to satisfy the constraints strictly; enables feasibility repair.
    pub fn set_strict_point(&mut self, x: DVector<S>) {
        self.strict_point = Some(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&VariableBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn constant(&self) -> &DMatrix<S> {
        &self.constant
    }

    pub fn coefficients(&self, k: usize) -> &[(usize, usize, S)] {
        &self.coeffs[k]
    }

    pub fn linear(&self) -> &[S] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[(usize, usize, S)] {
        &self.quadratic
    }

    pub fn objective_constant(&self) -> S {
        self.objective_constant
    }

    pub fn nonneg(&self) -> &[usize] {
        &self.nonneg
    }

    pub fn strict_point(&self) -> Option<&DVector<S>> {
        self.strict_point.as_ref()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let m = self.dim;
        if m == 0 {
            return Err(SdpError::Malformed("constraint dimension is zero".into()));
        }
        let tol = S::lit(1e3) * S::machine_eps() * (S::one() + self.constant.amax());
        if (&self.constant - self.constant.transpose()).amax() > tol {
            return Err(SdpError::Malformed("constant term is not symmetric".into()));
        }
        for (k, entries) in self.coeffs.iter().enumerate() {
            if let Some(&(i, j, _)) = entries.iter().find(|&&(i, j, _)| i >= m || j >= m) {
                return Err(SdpError::Malformed(format!(
                    "coefficient of variable {k} touches ({i}, {j}) outside {m}x{m}"
                )));
            }
            if entries.iter().any(|e| !e.2.is_finite()) {
                return Err(SdpError::Malformed(format!("non-finite coefficient for variable {k}")));
            }
        }
        let n = self.num_vars();
        if let Some(&(k, l, _)) = self.quadratic.iter().find(|&&(k, l, _)| k >= n || l >= n) {
            return Err(SdpError::Malformed(format!("quadratic term ({k}, {l}) out of range")));
        }
        if let Some(&k) = self.nonneg.iter().find(|&&k| k >= n) {
            return Err(SdpError::Malformed(format!("sign constraint on missing variable {k}")));
        }
        if !self.quadratic_is_convex() {
            return Err(SdpError::Malformed("quadratic objective part is not PSD".into()));
        }
        if let Some(x) = &self.strict_point {
            if x.len() != n {
                return Err(SdpError::Malformed(format!(
                    "strict point has {} entries for {n} variables",
                    x.len()
                )));
            }
        }
        Ok(())
    }

    fn quadratic_is_convex(&self) -> bool {
        if self.quadratic.iter().all(|&(k, l, _)| k == l) {
            let mut diag = vec![S::zero(); self.num_vars()];
            for &(k, _, v) in &self.quadratic {
                diag[k] += v;
            }
            return diag.iter().all(|&d| d >= S::zero());
        }
        let q = self.dense_quadratic();
        let tol = S::lit(1e3) * S::machine_eps() * (S::one() + q.amax());
        q.symmetric_eigenvalues().iter().all(|&e| e >= -tol)
    }

    pub fn dense_quadratic(&self) -> DMatrix<S> {
        let n = self.num_vars();
        let mut q = DMatrix::zeros(n, n);
        for &(k, l, v) in &self.quadratic {
            q[(k, l)] += v;
            if k != l {
                q[(l, k)] += v;
            }
        }
        q
    }

    /// `Q x`
    pub fn quadratic_apply(&self, x: &DVector<S>) -> DVector<S> {
        let mut out = DVector::zeros(self.num_vars());
        for &(k, l, v) in &self.quadratic {
            out[k] += v * x[l];
            if k != l {
                out[l] += v * x[k];
            }
        }
        out
    }

    pub fn objective(&self, x: &DVector<S>) -> S {
        let lin = self.linear.iter().zip(x.iter()).fold(S::zero(), |a, (&c, &v)| a + c * v);
        self.objective_constant + lin + S::lit(0.5) * x.dot(&self.quadratic_apply(x))
    }

    /// `sum_k x_k A_k` (without the constant term).
    pub fn linear_map(&self, x: &DVector<S>) -> DMatrix<S> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for (k, entries) in self.coeffs.iter().enumerate() {
            let xk = x[k];
            if xk == S::zero() {
                continue;
            }
            for &(i, j, v) in entries {
                g[(i, j)] += xk * v;
                if i != j {
                    g[(j, i)] += xk * v;
                }
            }
        }
        g
    }

    /// Constraint matrix `A0 + sum_k x_k A_k`.
    pub fn constraint_at(&self, x: &DVector<S>) -> DMatrix<S> {
        self.linear_map(x) + &self.constant
    }

    /// Adjoint of [`Self::linear_map`] under the Frobenius inner product.
    pub fn adjoint(&self, z: &DMatrix<S>) -> DVector<S> {
        let two = S::lit(2.0);
        DVector::from_iterator(
            self.num_vars(),
            self.coeffs.iter().map(|entries| {
                entries.iter().fold(S::zero(), |acc, &(i, j, v)| {
                    if i == j {
                        acc + v * z[(i, j)]
                    } else {
                        acc + two * v * z[(i, j)]
                    }
                })
            }),
        )
    }

    /// `||A_k||_F^2` per variable.
    pub fn coefficient_norms_sq(&self) -> DVector<S> {
        DVector::from_iterator(
            self.num_vars(),
            self.coeffs.iter().map(|entries| {
                let mut dense = std::collections::BTreeMap::new();
                for &(i, j, v) in entries {
                    *dense.entry((i, j)).or_insert(S::zero()) += v;
                }
                dense.iter().fold(S::zero(), |acc, (&(i, j), &v)| {
                    if i == j {
                        acc + v * v
                    } else {
                        acc + S::lit(2.0) * v * v
                    }
                })
            }),
        )
    }

    /// Largest eigenvalue of the constraint, also counting violated sign constraints.
    pub fn margin(&self, x: &DVector<S>) -> S {
        let lmi = super::max_eigenvalue(&self.constraint_at(x));
        self.nonneg.iter().fold(lmi, |acc, &k| acc.max(-x[k]))
    }

    /// Default feasibility tolerance at `x`: `eps_feas * (1 + max |entry|)`.
    pub fn feasibility_tolerance(&self, x: &DVector<S>, eps_feas: S) -> S {
        eps_feas * (S::one() + self.constraint_at(x).amax())
    }

    /// Copies the entries of a named block out of `x`.
    pub fn extract(&self, x: &DVector<S>, name: &str) -> Option<DMatrix<S>> {
        let b = self.block(name)?;
        Some(DMatrix::from_fn(b.rows, b.cols, |r, c| x[b.index(r, c)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoint_matches_inner_product() {
        let mut p = LmiProgram::<f64>::new(3);
        let a = p.add_variable("a", 1, 1);
        let w = p.add_variable("w", 1, 2);
        p.add_coefficient(a.offset, 0, 0, -1.0);
        p.add_coefficient(w.index(0, 0), 0, 1, 2.0);
        p.add_coefficient(w.index(0, 1), 2, 1, 0.5);
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let z = DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 + if i == j { 1.0 } else { 0.0 });
        let z = (&z + z.transpose()) * 0.5;
        let lhs = p.linear_map(&x).dot(&z);
        let rhs = x.dot(&p.adjoint(&z));
        assert!((lhs - rhs).abs() < 1e-12);
        let norms = p.coefficient_norms_sq();
        assert_eq!(norms.as_slice(), &[1.0, 8.0, 0.5]);
    }

    #[test]
    fn rejects_nonconvex_objective() {
        let mut p = LmiProgram::<f64>::new(1);
        p.add_variable("x", 1, 2);
        p.add_quadratic(0, 1, 1.0);
        assert!(matches!(p.validate(), Err(SdpError::Malformed(_))));
        p.add_quadratic(0, 0, 1.0);
        p.add_quadratic(1, 1, 1.0);
        assert!(p.validate().is_ok());
    }
}
