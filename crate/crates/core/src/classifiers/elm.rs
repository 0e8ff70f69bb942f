//! Extreme learning machine: a single hidden layer with weights and biases
//! drawn uniform [−1,1] from the spec seed, sigmoid activation, and a
//! ridge-regularized least-squares output layer solved by normal equations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Label};
use crate::error::{Error, Result};
use crate::seed;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The random hidden layer: weights (hidden×dim, row-major) and biases.
/// Deterministic in (seed, hidden, dim); shared by batch fits and the
/// incremental self-training engine so both see identical features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ElmBasis {
    pub(crate) hidden: usize,
    pub(crate) dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl ElmBasis {
    pub(crate) fn new(weight_seed: u64, hidden: usize, dim: usize) -> ElmBasis {
        let mut rng = seed::rng(seed::derive(weight_seed, &["elm"]));
        let w = (0..hidden * dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let b = (0..hidden).map(|_| rng.random_range(-1.0..=1.0)).collect();
        ElmBasis { hidden, dim, w, b }
    }

    /// Hidden activations σ(W·x + b) for one input row.
    pub(crate) fn map(&self, row: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let mut acc = self.b[h];
                let wrow = &self.w[h * self.dim..(h + 1) * self.dim];
                for (w, x) in wrow.iter().zip(row) {
                    acc += w * x;
                }
                sigmoid(acc)
            })
            .collect()
    }
}

/// Solves A·x = rhs for square A (flat row-major) by LU decomposition with
/// partial pivoting. A is overwritten.
pub(crate) fn solve_linear(mut a: Vec<f64>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot = col;
        let mut max = a[col * n + col].abs();
        for r in (col + 1)..n {
            let v = a[r * n + col].abs();
            if v > max {
                max = v;
                pivot = r;
            }
        }
        if max == 0.0 {
            return Err(Error::Numeric("singular linear system".into()));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            rhs.swap(col, pivot);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let factor = a[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for c in (col + 1)..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in (row + 1)..n {
            acc -= a[row * n + c] * x[c];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct ElmState {
    pub(crate) basis: ElmBasis,
    pub(crate) beta: Vec<f64>,
}

/// Targets are +1 for Peak, −1 for FalsePeak.
pub(crate) fn target(label: Label) -> f64 {
    match label {
        Label::Peak => 1.0,
        Label::FalsePeak => -1.0,
    }
}

pub(super) fn fit(
    x: &FeatureMatrix,
    y: &[Label],
    hidden: usize,
    lambda: f64,
    weight_seed: u64,
) -> Result<ElmState> {
    let basis = ElmBasis::new(weight_seed, hidden, x.cols);
    let n = x.rows();
    // Normal equations (HᵀH + λI)β = Hᵀt, accumulated row by row so the full
    // n×hidden activation matrix is never materialized.
    let mut a = vec![0.0f64; hidden * hidden];
    let mut rhs = vec![0.0f64; hidden];
    for (i, yi) in y.iter().enumerate().take(n) {
        let h = basis.map(x.row(i));
        let t = target(*yi);
        for p in 0..hidden {
            rhs[p] += h[p] * t;
            let hp = h[p];
            for q in p..hidden {
                a[p * hidden + q] += hp * h[q];
            }
        }
    }
    for p in 0..hidden {
        for q in 0..p {
            a[p * hidden + q] = a[q * hidden + p];
        }
        a[p * hidden + p] += lambda;
    }
    let beta = solve_linear(a, rhs)?;
    Ok(ElmState { basis, beta })
}

impl ElmState {
    /// Raw real-valued network output for one row.
    pub(crate) fn raw_score(&self, row: &[f64]) -> f64 {
        self.basis
            .map(row)
            .iter()
            .zip(&self.beta)
            .map(|(h, b)| h * b)
            .sum()
    }

    pub(super) fn posterior(&self, row: &[f64]) -> [f64; 2] {
        let p = sigmoid(self.raw_score(row));
        [1.0 - p, p]
    }
}
