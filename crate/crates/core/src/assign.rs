//! Pairwise cost matrix and exact linear assignment.
//!
//! Entry `(i, j)` of the cost matrix is the tempered negative log-density of
//! response `i` when paired with covariate row `j`. The minimum-cost assignment is
//! the mode of the permutation given `(beta, sigma2)`, and `exp(-L)` is the weight
//! matrix of its full conditional.

use crate::error::{Error, Result};
use crate::model::{check_loss, Dataset, LikelihoodFamily, Permutation, RegressionState};

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "square matrix row length",
                expected: n,
                got: r.len(),
            });
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }

    /// `sum_i M[i, sigma(i)]`.
    pub fn trace_along(&self, perm: &Permutation) -> f64 {
        perm.as_slice()
            .iter()
            .enumerate()
            .map(|(i, &j)| self.get(i, j))
            .sum()
    }
}

/// Tempered pairwise negative log-densities.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(SquareMatrix);

impl CostMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        if m.iter().all(|v| v.is_finite()) {
            Ok(Self(m))
        } else {
            Err(Error::NonFinite("cost matrix"))
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    /// Assignment objective `<B, L>` for the permutation matrix of `perm`.
    pub fn objective(&self, perm: &Permutation) -> f64 {
        self.0.trace_along(perm)
    }
}

/// `W = -L`, i.e. `log(omega_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightMatrix(SquareMatrix);

impl LogWeightMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        if m.iter().all(|v| v.is_finite()) {
            Ok(Self(m))
        } else {
            Err(Error::NonFinite("log-weight matrix"))
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self(SquareMatrix::from_fn(n, |_, _| 0.0))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// Unnormalized log-probability `sum_i W[i, sigma(i)]`.
    pub fn log_weight(&self, perm: &Permutation) -> f64 {
        self.0.trace_along(perm)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }
}

/// Builds `l_ij = alpha * [ (y_i - x_j^T beta)^2 / (2 s) + log s ]` (Gaussian) or
/// `alpha * [ rho_tau(y_i - x_j^T beta) / sigma + log sigma ]` (ALD).
pub fn build_cost_matrix(
    data: &Dataset,
    state: &RegressionState,
    alpha: f64,
    family: LikelihoodFamily,
) -> Result<CostMatrix> {
    if state.beta.len() != data.d() {
        return Err(Error::DimensionMismatch {
            what: "beta length",
            expected: data.d(),
            got: state.beta.len(),
        });
    }
    let fitted = data.fitted(&state.beta);
    let y = data.y();
    let s = state.sigma2;
    let m = match family {
        LikelihoodFamily::Gaussian => {
            let (inv, offset) = (alpha / (2.0 * s), alpha * s.ln());
            SquareMatrix::from_fn(data.n(), |i, j| {
                let r = y[i] - fitted[j];
                r * r * inv + offset
            })
        }
        LikelihoodFamily::Ald { tau } => {
            let sigma = s.sqrt();
            let (inv, offset) = (alpha / sigma, alpha * sigma.ln());
            SquareMatrix::from_fn(data.n(), |i, j| {
                check_loss(y[i] - fitted[j], tau) * inv + offset
            })
        }
    };
    CostMatrix::new(m)
}

/// `W = -L` entrywise.
pub fn log_weights(cost: &CostMatrix) -> LogWeightMatrix {
    let n = cost.n();
    LogWeightMatrix(SquareMatrix::from_fn(n, |i, j| -cost.get(i, j)))
}

/// Exact minimum-cost perfect matching.
///
/// Shortest augmenting paths with row/column potentials (the Jonker-Volgenant
/// formulation of the Hungarian method), O(n^3). Rows are inserted in index order and
/// ties resolve to the lowest column index, so the result is a deterministic
/// function of the input.
pub fn solve_assignment(cost: &CostMatrix) -> Permutation {
    let n = cost.n();
    if n == 0 {
        return Permutation::identity(0);
    }
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let cost_row = cost.0.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost_row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut sigma = vec![0usize; n];
    for j in 1..=n {
        sigma[row_of_col[j] - 1] = j - 1;
    }
    Permutation::new(sigma).expect("augmenting paths yield a perfect matching")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn zero_beta_costs_constant_across_columns() {
        let data = Dataset::new(
            vec![1.0, -2.0, 0.5],
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        )
        .unwrap();
        let state = RegressionState::new(vec![0.0, 0.0], 1.0).unwrap();
        let l = build_cost_matrix(&data, &state, 0.3, LikelihoodFamily::Gaussian).unwrap();
        for i in 0..3 {
            let expect = 0.3 * data.y()[i].powi(2) / 2.0;
            for j in 0..3 {
                assert!((l.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn residual_two_costs_two() {
        let data = Dataset::from_rows(vec![3.0, 0.0], &[vec![1.0], vec![0.0]]).unwrap();
        let state = RegressionState::new(vec![1.0], 1.0).unwrap();
        let l = build_cost_matrix(&data, &state, 1.0, LikelihoodFamily::Gaussian).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
    }

    #[test]
    fn two_by_two_diagonal_free() {
        let l = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = solve_assignment(&l);
        assert_eq!(p, Permutation::identity(2));
        assert_eq!(l.objective(&p), 0.0);
    }

    #[test]
    fn dominant_antidiagonal_gives_reversal() {
        let n = 6;
        let l = CostMatrix::new(SquareMatrix::from_fn(n, |i, j| {
            if i + j == n - 1 {
                -10.0
            } else {
                (i * j) as f64 * 0.01
            }
        }))
        .unwrap();
        let p = solve_assignment(&l);
        assert_eq!(p.as_slice(), &[5, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn weights_negate_costs() {
        let l = CostMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let w = log_weights(&l);
        assert_eq!(w.get(0, 0), -3.0);
        let zero = log_weights(&CostMatrix::from_rows(&[vec![0.0; 2], vec![0.0; 2]]).unwrap());
        assert_eq!(zero, LogWeightMatrix::zeros(2));
    }

    #[test]
    fn non_finite_cost_rejected() {
        assert!(CostMatrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 0.0]]).is_err());
        let data = Dataset::from_rows(vec![1e200, 0.0], &[vec![0.0], vec![0.0]]).unwrap();
        let state = RegressionState::new(vec![0.0], 1e-200).unwrap();
        assert!(build_cost_matrix(&data, &state, 1.0, LikelihoodFamily::Gaussian).is_err());
    }
}
