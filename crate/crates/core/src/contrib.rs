//! Risk contributions: VaR and shortfall deltas, the shortfall Hessian and
//! conditional covariances, by saddlepoint and by conditional Normal.
//!
//! Derivatives are with respect to the effective exposures `a_j`, so every
//! delta is per unit of exposure and `Σ a_j δ_j` reproduces the risk.
//!
//! With `K(s) = Σ_j K_j(a_j s)` and Bernoulli default indicators, the
//! allocation partials have closed forms in the tilted pds:
//!
//! - `(1/s) ∂K/∂a_j = p̃_j`
//! - `(1/s²) ∂²K/∂a_j∂a_k = δ_jk p̃_j q̃_j`
//! - `∂/∂s p̃_j = a_j p̃_j q̃_j`
//!
//! so per node `H^U = diag(p̃q̃) − (a∘p̃q̃)(a∘p̃q̃)ᵀ / K''(ŝ)`. The two terms in
//! `(∂/∂s)²(s⁻¹ ∂K/∂a_j)` are left out; dropping them keeps `H a = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kgf::tilt;
pub use crate::kgf::tilted_pd;
use crate::mixer::{clt_nodes, effective_quadrature, solve_var, Method, Mixture, NodeFit, MIN_TAIL};
use crate::model::{FactorModel, Portfolio};
use crate::normal;
use crate::quadrature::Quadrature;
use crate::saddle::{SaddleOptions, Side};

/// Smallest mixed density at which a delta is defined.
pub const MIN_DENSITY: f64 = 1e-300;

/// One node of the tilted view.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedNode {
    pub v: f64,
    pub weight: f64,
    /// `None` when the threshold sits outside the node's continuous range.
    pub shat: Option<f64>,
    /// `f_{Y|V}(y)`.
    pub density: f64,
    /// `P[Y ⋗ y | V]`.
    pub tail: f64,
    pub pds: Vec<f64>,
    pub ptilde: Vec<f64>,
    pub qtilde: Vec<f64>,
    /// `E[B_j 1{Y ⋗ y} | V]` per unit exposure.
    pub upper: Vec<f64>,
}

impl TiltedNode {
    /// `Ê_V[X_j] = a_j p̃_j` in loss units; sums to `y` at a solved node.
    pub fn tilted_loss(&self, exposures: &[f64]) -> Vec<f64> {
        exposures.iter().zip(&self.ptilde).map(|(a, p)| a * p).collect()
    }

    /// `K''(ŝ)` rebuilt from the cached tilts.
    fn k2(&self, exposures: &[f64]) -> f64 {
        exposures
            .iter()
            .zip(self.ptilde.iter().zip(&self.qtilde))
            .map(|(a, (p, q))| a * a * p * q)
            .sum()
    }
}

/// `(p̃ − p)/s` for one asset; its limit `a p q` at `s = 0`.
fn tilt_slope(p: f64, a: f64, s: f64, pt: f64) -> f64 {
    let t = a * s;
    if t == 0.0 {
        a * p * (1.0 - p)
    } else if t.abs() < 1.0 {
        let e = t.exp_m1();
        a * p * (1.0 - p) * (e / t) / (1.0 + p * e)
    } else {
        (pt - p) / s
    }
}

/// Saddlepoints and tilted pds at every node, cached for all contributions at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedView {
    y: f64,
    exposures: Vec<f64>,
    nodes: Vec<TiltedNode>,
    density: f64,
    tail: f64,
    mean: f64,
    partial: f64,
}

impl TiltedView {
    pub fn new(
        portfolio: &Portfolio,
        model: &FactorModel,
        quad: &Quadrature,
        y: f64,
        opts: SaddleOptions,
    ) -> Result<Self> {
        Ok(Self::from_mixture(&Mixture::new(portfolio, model, quad, y, opts)?))
    }

    pub fn from_mixture(m: &Mixture) -> Self {
        let opts = m.options();
        let exposures = m.exposures().to_vec();
        let nodes = m
            .nodes()
            .iter()
            .map(|n| {
                let tail = n.tail(opts);
                let density = n.density(opts);
                let shat = n.shat();
                let (ptilde, qtilde): (Vec<f64>, Vec<f64>) = exposures
                    .iter()
                    .zip(&n.pds)
                    .map(|(&a, &p)| tilt(p, a, shat.unwrap_or(0.0)))
                    .unzip();
                let upper = match &n.fit {
                    NodeFit::Solved(_) => {
                        let s = shat.unwrap_or(0.0);
                        exposures
                            .iter()
                            .zip(n.pds.iter().zip(&ptilde))
                            .map(|(&a, (&p, &pt))| p * tail + tilt_slope(p, a, s, pt) * density)
                            .collect()
                    }
                    NodeFit::Below => n.pds.clone(),
                    NodeFit::Above => vec![0.0; exposures.len()],
                    NodeFit::Gap { joint, .. } => joint.clone(),
                };
                TiltedNode {
                    v: n.v,
                    weight: n.weight,
                    shat,
                    density,
                    tail,
                    pds: n.pds.clone(),
                    ptilde,
                    qtilde,
                    upper,
                }
            })
            .collect::<Vec<_>>();
        TiltedView {
            y: m.y(),
            exposures,
            nodes,
            density: m.density(),
            tail: m.tail(Side::Upper),
            mean: m.mean(),
            partial: m.partial_expectation(Side::Upper),
        }
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn nodes(&self) -> &[TiltedNode] {
        &self.nodes
    }

    /// `f_Y(y)`.
    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn tail(&self, side: Side) -> f64 {
        match side {
            Side::Upper => self.tail,
            Side::Lower => 1.0 - self.tail,
        }
    }

    pub fn esf(&self, side: Side) -> Result<f64> {
        let p = self.side_tail(side)?;
        Ok(match side {
            Side::Upper => self.partial / p,
            Side::Lower => (self.mean - self.partial) / p,
        })
    }

    fn side_tail(&self, side: Side) -> Result<f64> {
        let p = self.tail(side);
        if p < MIN_TAIL {
            return Err(Error::DegenerateTail { prob: p });
        }
        Ok(p)
    }

    fn checked_density(&self) -> Result<f64> {
        if !(self.density >= MIN_DENSITY) {
            return Err(Error::DegenerateTail { prob: self.density });
        }
        Ok(self.density)
    }

    /// `∂VaR/∂a_j = E[p̃_j f_{Y|V}(y)] / f_Y(y)`.
    pub fn var_delta(&self) -> Result<Vec<f64>> {
        let f = self.checked_density()?;
        let mut out = vec![0.0; self.exposures.len()];
        for n in &self.nodes {
            let w = n.weight * n.density;
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&n.ptilde) {
                *o += w * p;
            }
        }
        Ok(out.into_iter().map(|x| x / f).collect())
    }

    /// Shortfall deltas split into the systematic part `E[μ_j P[Y ⋛ y | V]]/P`
    /// and the unsystematic remainder.
    pub fn esf_delta(&self, side: Side) -> Result<EsfDelta> {
        let p = self.side_tail(side)?;
        let n_assets = self.exposures.len();
        let mut systematic = vec![0.0; n_assets];
        let mut unsystematic = vec![0.0; n_assets];
        for n in &self.nodes {
            let node_tail = match side {
                Side::Upper => n.tail,
                Side::Lower => 1.0 - n.tail,
            };
            for j in 0..n_assets {
                let sys = n.pds[j] * node_tail;
                let part = match side {
                    Side::Upper => n.upper[j],
                    Side::Lower => n.pds[j] - n.upper[j],
                };
                systematic[j] += n.weight * sys;
                unsystematic[j] += n.weight * (part - sys);
            }
        }
        for x in systematic.iter_mut().chain(unsystematic.iter_mut()) {
            *x /= p;
        }
        Ok(EsfDelta { systematic, unsystematic })
    }

    fn mixed_quadratic(&self, naive: bool) -> Result<DMatrix<f64>> {
        let delta = DVector::from_vec(self.var_delta()?);
        let a = DVector::from_column_slice(&self.exposures);
        let m = self.exposures.len();
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for n in &self.nodes {
            let w = n.weight * n.density;
            if w == 0.0 {
                continue;
            }
            let pq = DVector::from_iterator(m, n.ptilde.iter().zip(&n.qtilde).map(|(p, q)| p * q));
            let centred = DVector::from_column_slice(&n.ptilde) - &delta;
            acc += w * (&centred * centred.transpose());
            for j in 0..m {
                acc[(j, j)] += w * pq[j];
            }
            if !naive {
                let k2 = n.k2(&self.exposures);
                if k2 > 0.0 {
                    let g = a.component_mul(&pq);
                    acc -= (w / k2) * (&g * g.transpose());
                }
            }
        }
        Ok(acc)
    }

    /// `Cov[B_j, B_k | Y = y] ≈ E[(H^S + H^U) f_{Y|V}] / f_Y`.
    pub fn conditional_cov(&self) -> Result<DMatrix<f64>> {
        let f = self.checked_density()?;
        Ok(self.mixed_quadratic(false)? / f)
    }

    /// `∂²ESF/∂a_j∂a_k = (±1/P±) E[(H^S + H^U) f_{Y|V}]`.
    pub fn esf_hessian(&self, side: Side) -> Result<DMatrix<f64>> {
        let p = self.side_tail(side)?;
        Ok(self.mixed_quadratic(false)? * (side.sign() / p))
    }

    /// The Hessian without the `H^U` cross term. It does not annihilate `a`;
    /// kept only to show why the term is needed.
    pub fn naive_hessian(&self, side: Side) -> Result<DMatrix<f64>> {
        let p = self.side_tail(side)?;
        Ok(self.mixed_quadratic(true)? * (side.sign() / p))
    }
}

/// Shortfall deltas per unit exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct EsfDelta {
    pub systematic: Vec<f64>,
    pub unsystematic: Vec<f64>,
}

impl EsfDelta {
    pub fn total(&self) -> Vec<f64> {
        self.systematic.iter().zip(&self.unsystematic).map(|(s, u)| s + u).collect()
    }
}

pub fn var_delta(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<Vec<f64>> {
    TiltedView::new(portfolio, model, quad, y, SaddleOptions::default())?.var_delta()
}

pub fn esf_delta(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    y: f64,
    side: Side,
) -> Result<EsfDelta> {
    TiltedView::new(portfolio, model, quad, y, SaddleOptions::default())?.esf_delta(side)
}

pub fn esf_hessian(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    y: f64,
    side: Side,
) -> Result<DMatrix<f64>> {
    TiltedView::new(portfolio, model, quad, y, SaddleOptions::default())?.esf_hessian(side)
}

pub fn conditional_cov(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<DMatrix<f64>> {
    TiltedView::new(portfolio, model, quad, y, SaddleOptions::default())?.conditional_cov()
}

/// `Ω − (Ωa)(Ωa)ᵀ / aᵀΩa`: removes the direction `a` from a PSD matrix.
pub fn deflate(omega: &DMatrix<f64>, a: &[f64]) -> Result<DMatrix<f64>> {
    let n = a.len();
    if omega.nrows() != n || omega.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, vector has {n} entries",
            omega.nrows(),
            omega.ncols()
        )));
    }
    let a = DVector::from_column_slice(a);
    let oa = omega * &a;
    let value = a.dot(&oa);
    let scale = omega.norm() * a.norm_squared();
    if !(value > 1e-12 * scale) {
        return Err(Error::SingularDirection { value });
    }
    let mut out = omega - (&oa * oa.transpose()) / value;
    // exact symmetry
    for j in 0..n {
        for k in 0..j {
            let m = 0.5 * (out[(j, k)] + out[(k, j)]);
            out[(j, k)] = m;
            out[(k, j)] = m;
        }
    }
    Ok(out)
}

/// Per-node conditional moments for the Normal approximation.
struct CltView {
    exposures: Vec<f64>,
    nodes: Vec<CltTerm>,
}

struct CltTerm {
    weight: f64,
    pds: Vec<f64>,
    sd: f64,
    z: f64,
    /// `φ(z)/σ`.
    density: f64,
    /// `Φ(−z)`.
    tail: f64,
}

impl CltView {
    fn new(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Self {
        let exposures = portfolio.exposures();
        let coupling = model.coupling(portfolio);
        let quad = effective_quadrature(model, quad);
        let moments = clt_nodes(portfolio, model, &quad);
        let nodes = moments
            .iter()
            .map(|n| CltTerm {
                weight: n.weight,
                pds: coupling.pds(n.v),
                sd: n.sd,
                z: if n.sd > 0.0 { n.z(y) } else { 0.0 },
                density: n.density(y),
                tail: n.tail(y),
            })
            .collect();
        CltView { exposures, nodes }
    }

    fn density(&self) -> Result<f64> {
        let f: f64 = self.nodes.iter().map(|n| n.weight * n.density).sum();
        if !(f >= MIN_DENSITY) {
            return Err(Error::DegenerateTail { prob: f });
        }
        Ok(f)
    }

    fn side_tail(&self, side: Side) -> Result<f64> {
        let up: f64 = self.nodes.iter().map(|n| n.weight * n.tail).sum();
        let p = match side {
            Side::Upper => up,
            Side::Lower => 1.0 - up,
        };
        if p < MIN_TAIL {
            return Err(Error::DegenerateTail { prob: p });
        }
        Ok(p)
    }

    /// `∂σ/∂a_j = a_j p_j q_j / σ`.
    fn sd_slope(&self, n: &CltTerm, j: usize) -> f64 {
        let p = n.pds[j];
        self.exposures[j] * p * (1.0 - p) / n.sd
    }

    fn var_delta(&self) -> Result<Vec<f64>> {
        let f = self.density()?;
        let mut out = vec![0.0; self.exposures.len()];
        for n in self.nodes.iter().filter(|n| n.sd > 0.0) {
            for (j, o) in out.iter_mut().enumerate() {
                *o += n.weight * (n.pds[j] + n.z * self.sd_slope(n, j)) * n.density;
            }
        }
        Ok(out.into_iter().map(|x| x / f).collect())
    }

    fn esf_delta(&self, side: Side) -> Result<EsfDelta> {
        let p = self.side_tail(side)?;
        let m = self.exposures.len();
        let mut systematic = vec![0.0; m];
        let mut unsystematic = vec![0.0; m];
        for n in &self.nodes {
            let node_tail = match side {
                Side::Upper => n.tail,
                Side::Lower => 1.0 - n.tail,
            };
            let phi = normal::pdf(n.z);
            for j in 0..m {
                systematic[j] += n.weight * n.pds[j] * node_tail;
                if n.sd > 0.0 {
                    unsystematic[j] += n.weight * side.sign() * self.sd_slope(n, j) * phi;
                }
            }
        }
        for x in systematic.iter_mut().chain(unsystematic.iter_mut()) {
            *x /= p;
        }
        Ok(EsfDelta { systematic, unsystematic })
    }

    fn esf_hessian(&self, side: Side) -> Result<DMatrix<f64>> {
        let p = self.side_tail(side)?;
        let delta = DVector::from_vec(self.var_delta()?);
        let m = self.exposures.len();
        let a = DVector::from_column_slice(&self.exposures);
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for n in self.nodes.iter().filter(|n| n.sd > 0.0 && n.density > 0.0) {
            let var = DVector::from_iterator(m, n.pds.iter().map(|p| p * (1.0 - p)));
            // σ ∂z/∂a_j = ∂y/∂a_j − μ_j − z ∂σ/∂a_j
            let dz = DVector::from_iterator(
                m,
                (0..m).map(|j| delta[j] - n.pds[j] - n.z * self.sd_slope(n, j)),
            );
            let g = a.component_mul(&var);
            let w = n.weight * n.density;
            acc += w * (&dz * dz.transpose());
            acc -= (w / (n.sd * n.sd)) * (&g * g.transpose());
            for j in 0..m {
                acc[(j, j)] += w * var[j];
            }
        }
        Ok(acc * (side.sign() / p))
    }
}

pub fn clt_var_delta(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<Vec<f64>> {
    CltView::new(portfolio, model, quad, y).var_delta()
}

pub fn clt_esf_delta(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    y: f64,
    side: Side,
) -> Result<EsfDelta> {
    CltView::new(portfolio, model, quad, y).esf_delta(side)
}

pub fn clt_esf_hessian(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    y: f64,
    side: Side,
) -> Result<DMatrix<f64>> {
    CltView::new(portfolio, model, quad, y).esf_hessian(side)
}

/// VaR, shortfall and their first and second derivatives at one tail probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    /// Upper tail probability the VaR was solved for.
    pub level: f64,
    pub method: Method,
    pub var: f64,
    pub esf: f64,
    pub var_delta: Vec<f64>,
    pub esf_delta_systematic: Vec<f64>,
    pub esf_delta_unsystematic: Vec<f64>,
    pub esf_hessian: DMatrix<f64>,
    /// Mixed upper tail at the solved VaR.
    pub tail: f64,
    pub nodes: usize,
}

impl RiskReport {
    pub fn esf_delta(&self) -> Vec<f64> {
        self.esf_delta_systematic
            .iter()
            .zip(&self.esf_delta_unsystematic)
            .map(|(s, u)| s + u)
            .collect()
    }
}

pub fn risk_report(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    level: f64,
    method: Method,
    opts: SaddleOptions,
) -> Result<RiskReport> {
    let var = solve_var(portfolio, model, quad, level, method, opts)?;
    let nodes = effective_quadrature(model, quad).len();
    match method {
        Method::Saddlepoint => {
            let view = TiltedView::new(portfolio, model, quad, var, opts)?;
            let d = view.esf_delta(Side::Upper)?;
            Ok(RiskReport {
                level,
                method,
                var,
                esf: view.esf(Side::Upper)?,
                var_delta: view.var_delta()?,
                esf_delta_systematic: d.systematic,
                esf_delta_unsystematic: d.unsystematic,
                esf_hessian: view.esf_hessian(Side::Upper)?,
                tail: view.tail(Side::Upper),
                nodes,
            })
        }
        Method::Clt => {
            let view = CltView::new(portfolio, model, quad, var);
            let d = view.esf_delta(Side::Upper)?;
            let tail = view.side_tail(Side::Upper)?;
            let esf = crate::mixer::clt_esf(portfolio, model, quad, var)?.0;
            Ok(RiskReport {
                level,
                method,
                var,
                esf,
                var_delta: view.var_delta()?,
                esf_delta_systematic: d.systematic,
                esf_delta_unsystematic: d.unsystematic,
                esf_hessian: view.esf_hessian(Side::Upper)?,
                tail,
                nodes,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_distribution, exact_conditional_cov, exact_esf_delta};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BOOK10: [f64; 10] = [9.0, 8.0, 18.0, 9.0, 8.0, 20.0, 17.0, 16.0, 12.0, 12.0];

    fn book10() -> Portfolio {
        Portfolio::uniform(&BOOK10, 0.1, 0.0).unwrap()
    }

    fn mixed() -> Portfolio {
        let exposures = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let pds = [0.01, 0.03, 0.02, 0.05, 0.01, 0.004, 0.02, 0.01];
        let loadings = [0.5, 0.3, 0.6, 0.2, 0.5, 0.4, 0.5, 0.6];
        Portfolio::from_parts(&exposures, &pds, &loadings).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn min_eigen(h: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(h.clone()).eigenvalues.min()
    }

    #[test]
    fn tilted_pd_values() {
        assert_eq!(tilted_pd(0.1, 2.0, 0.0), 0.1);
        assert!((tilted_pd(0.1, 2.0, 0.7) - 0.310_619_521_504_332_8).abs() < 1e-15);
        assert!(tilted_pd(0.1, 2.0, 400.0) == 1.0);
    }

    #[test]
    fn tilt_slope_is_continuous_at_zero() {
        let (p, a) = (0.03, 4.0);
        let limit = tilt_slope(p, a, 0.0, p);
        for s in [1e-12, 1e-6, 1e-3, 0.1, 0.26, 0.24, 1.0] {
            let pt = tilted_pd(p, a, s);
            let direct = (pt - p) / s;
            let stable = tilt_slope(p, a, s, pt);
            if s > 1e-3 {
                assert!((stable / direct - 1.0).abs() < 1e-12, "{s}");
            }
            assert!((stable - limit).abs() <= 2.0 * a * a * s * limit + 1e-15);
        }
    }

    #[test]
    fn contributions_add_up() {
        let quad = Quadrature::default();
        let opts = SaddleOptions::default();
        for (pf, model) in [
            (book10(), FactorModel::Independent),
            (book10().with_loading(0.5).unwrap(), FactorModel::GaussianCopula),
            (mixed(), FactorModel::GaussianCopula),
            (mixed(), FactorModel::CreditRiskPlusScaled { sigma: 0.8 }),
        ] {
            let a = pf.exposures();
            for level in [0.1, 0.01, 0.001] {
                let y = solve_var(&pf, &model, &quad, level, Method::Saddlepoint, opts).unwrap();
                let view = TiltedView::new(&pf, &model, &quad, y, opts).unwrap();
                let dv = view.var_delta().unwrap();
                assert!((dot(&a, &dv) / y - 1.0).abs() < 1e-9);
                for side in [Side::Upper, Side::Lower] {
                    let d = view.esf_delta(side).unwrap();
                    let esf = view.esf(side).unwrap();
                    assert!((dot(&a, &d.total()) / esf - 1.0).abs() < 1e-9, "{level} {side:?}");
                }
                let d = view.esf_delta(Side::Upper).unwrap();
                assert!(d.unsystematic.iter().all(|&u| u >= 0.0));
            }
        }
    }

    #[test]
    fn hessian_null_vector_and_convexity() {
        let quad = Quadrature::default();
        for (pf, model) in [
            (book10(), FactorModel::Independent),
            (mixed(), FactorModel::GaussianCopula),
        ] {
            let a = DVector::from_vec(pf.exposures());
            for y in [20.0f64, 40.0] {
                let y = y.min(0.8 * pf.max_loss());
                let view = TiltedView::new(&pf, &model, &quad, y, SaddleOptions::default()).unwrap();
                let h = view.esf_hessian(Side::Upper).unwrap();
                let norm = h.norm();
                assert!((&h * &a).norm() <= 1e-8 * norm * a.norm());
                assert!(min_eigen(&h) >= -1e-8 * norm);
                let c = view.conditional_cov().unwrap();
                assert!(a.dot(&(&c * &a)).abs() <= 1e-8 * c.norm() * a.norm_squared());
                let naive = view.naive_hessian(Side::Upper).unwrap();
                assert!((&naive * &a).norm() > 10.0 * 1e-8 * naive.norm() * a.norm());
            }
        }
    }

    #[test]
    fn single_asset_has_no_conditional_spread() {
        let pf = Portfolio::uniform(&[2.0], 0.1, 0.0).unwrap();
        let quad = Quadrature::default();
        let c = conditional_cov(&pf, &FactorModel::Independent, &quad, 1.2).unwrap();
        assert!(c[(0, 0)].abs() < 1e-15);
        assert!((var_delta(&pf, &FactorModel::Independent, &quad, 1.2).unwrap()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_asset_is_mostly_unsystematic() {
        let pf = Portfolio::from_parts(&[5.0, 5.0, 5.0, 5.0, 10.0], &[0.02; 5], &[0.6, 0.6, 0.6, 0.6, 0.0]).unwrap();
        let quad = Quadrature::default();
        let d = esf_delta(&pf, &FactorModel::GaussianCopula, &quad, 12.0, Side::Upper).unwrap();
        // no factor dependence: the systematic part is the plain pd
        assert!((d.systematic[4] - 0.02).abs() < 1e-12);
        assert!(d.unsystematic[4] > 5.0 * d.systematic[4]);
        assert!(d.systematic[0] > d.systematic[4]);
    }

    #[test]
    fn var_delta_increases_with_threshold() {
        let pf = book10();
        let quad = Quadrature::default();
        let mut last = 0.0;
        for y in 10..100 {
            let d = var_delta(&pf, &FactorModel::Independent, &quad, y as f64).unwrap()[0];
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn esf_delta_tracks_enumeration() {
        // the exact delta is a step function of y; compare with its local mean
        let pf = book10();
        let quad = Quadrature::default();
        for y in [30.0, 40.0, 50.0, 60.0] {
            let window: Vec<f64> = (-10..=10).map(|k| y + 0.5 * k as f64).collect();
            let mut exact = vec![0.0; 10];
            for &t in &window {
                for (e, x) in exact.iter_mut().zip(exact_esf_delta(&BOOK10, &[0.1; 10], t).unwrap()) {
                    *e += x / window.len() as f64;
                }
            }
            let d = esf_delta(&pf, &FactorModel::Independent, &quad, y, Side::Upper).unwrap().total();
            for (j, (a, b)) in d.iter().zip(&exact).enumerate() {
                assert!((a / b - 1.0).abs() < 0.06, "y={y} asset {j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn conditional_cov_against_enumeration() {
        // the exact object jumps around; only the overall scale is comparable
        let pf = book10();
        let quad = Quadrature::default();
        let exact = exact_conditional_cov(&BOOK10, &[0.1; 10], 40.0).unwrap();
        let approx = conditional_cov(&pf, &FactorModel::Independent, &quad, 40.0).unwrap();
        let ratio = approx.trace() / exact.trace();
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
    }

    #[test]
    fn deflate_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let d = deflate(&eye, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(d, DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0])));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let omega = &b * b.transpose();
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..2.0)).collect();
        let d = deflate(&omega, &a).unwrap();
        assert!((&d * DVector::from_column_slice(&a)).norm() < 1e-12 * omega.norm());
        assert!(min_eigen(&d) >= -1e-10);

        assert!(matches!(deflate(&d, &a), Err(Error::SingularDirection { .. })));
    }

    #[test]
    fn clt_contributions() {
        let pf = Portfolio::uniform(&vec![1.0; 100], 0.02, 0.5).unwrap();
        let quad = Quadrature::default();
        let model = FactorModel::GaussianCopula;
        let a = pf.exposures();
        let y = solve_var(&pf, &model, &quad, 0.1, Method::Clt, SaddleOptions::default()).unwrap();
        let dv = clt_var_delta(&pf, &model, &quad, y).unwrap();
        assert!((dot(&a, &dv) / y - 1.0).abs() < 1e-9);
        let d = clt_esf_delta(&pf, &model, &quad, y, Side::Upper).unwrap();
        let esf = crate::mixer::clt_esf(&pf, &model, &quad, y).unwrap().0;
        assert!((dot(&a, &d.total()) / esf - 1.0).abs() < 1e-9);
        let h = clt_esf_hessian(&pf, &model, &quad, y, Side::Upper).unwrap();
        let av = DVector::from_vec(a.clone());
        assert!((&h * &av).norm() <= 1e-8 * h.norm() * av.norm());
        assert!(min_eigen(&h) >= -1e-8 * h.norm());

        // against the saddlepoint at the same level
        let ys = solve_var(&pf, &model, &quad, 0.1, Method::Saddlepoint, SaddleOptions::default()).unwrap();
        let sp = var_delta(&pf, &model, &quad, ys).unwrap();
        assert!((sp[0] / dv[0] - 1.0).abs() < 0.15);
    }

    #[test]
    fn report_is_consistent() {
        let pf = mixed();
        let quad = Quadrature::default();
        let r = risk_report(&pf, &FactorModel::GaussianCopula, &quad, 0.01, Method::Saddlepoint, Default::default())
            .unwrap();
        let a = pf.exposures();
        assert!((r.tail - 0.01).abs() < 1e-10);
        assert!((dot(&a, &r.var_delta) / r.var - 1.0).abs() < 1e-9);
        assert!((dot(&a, &r.esf_delta()) / r.esf - 1.0).abs() < 1e-9);
        assert!(r.esf > r.var);
        let c = risk_report(&pf, &FactorModel::GaussianCopula, &quad, 0.01, Method::Clt, Default::default()).unwrap();
        assert!((dot(&a, &c.esf_delta()) / c.esf - 1.0).abs() < 1e-9);
    }
}
