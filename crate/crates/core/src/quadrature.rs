//! Gauss-Hermite quadrature against the standard Normal density.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights such that `E[f(V)] ≈ Σ w_k f(v_k)` for `V ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

pub const DEFAULT_NODES: usize = 99;

impl Quadrature {
    /// Probabilist's Gauss-Hermite rule with `n` nodes (weights sum to one).
    ///
    /// Nodes start as eigenvalues of the Jacobi matrix and are polished by
    /// Newton on the orthonormal recurrence; weights come from the
    /// Christoffel sum `1/Σ_k q_k(x)²`, which keeps full relative accuracy
    /// for the far nodes.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n > 0, "quadrature needs at least one node");
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut x: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        x.sort_by(f64::total_cmp);
        let mut w = vec![0.0; n];
        for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
            for _ in 0..3 {
                let (qn, qn1, _) = orthonormal(n, *xi);
                if qn1 == 0.0 {
                    break;
                }
                *xi -= qn / ((n as f64).sqrt() * qn1);
            }
            *wi = 1.0 / orthonormal(n, *xi).2;
        }
        for i in 0..n / 2 {
            let z = 0.5 * (x[n - 1 - i] - x[i]);
            let v = 0.5 * (w[i] + w[n - 1 - i]);
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = v;
            w[n - 1 - i] = v;
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Quadrature { nodes: x, weights: w }
    }

    /// A single node at `v = 0`: exact for factor-free models.
    pub fn point() -> Self {
        Quadrature {
            nodes: vec![0.0],
            weights: vec![1.0],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(v, w)| w * f(v)).sum()
    }
}

/// `(q_n(x), q_{n-1}(x), Σ_{k<n} q_k(x)²)` for the orthonormal Hermite polynomials.
fn orthonormal(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum)
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::gauss_hermite(DEFAULT_NODES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_and_symmetry() {
        for n in [1, 2, 5, 20, 99, 199, 301] {
            let q = Quadrature::gauss_hermite(n);
            let total: f64 = q.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n} sum={total}");
            assert!(q.weights().iter().all(|&w| w > 0.0));
            for k in 0..n {
                assert!((q.nodes()[k] + q.nodes()[n - 1 - k]).abs() < 1e-12);
            }
            assert!(q.nodes().windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn normal_moments() {
        let q = Quadrature::gauss_hermite(99);
        assert!((q.expect(|v| v * v) - 1.0).abs() < 1e-12);
        assert!((q.expect(|v| v.powi(4)) - 3.0).abs() < 1e-11);
        assert!((q.expect(|v| v.powi(6)) - 15.0).abs() < 1e-10);
        // E[e^V] = e^{1/2}
        assert!((q.expect(f64::exp) - 0.5f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn small_rules_match_tables() {
        let q = Quadrature::gauss_hermite(3);
        let r3 = 3f64.sqrt();
        assert!((q.nodes()[2] - r3).abs() < 1e-14);
        assert!((q.weights()[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((q.weights()[0] - 1.0 / 6.0).abs() < 1e-14);
    }
}
