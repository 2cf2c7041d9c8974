//! Integration over the risk factor: mixed saddlepoint and CLT distributions,
//! the VaR outer loop, the granularity adjustment and the direct saddlepoint
//! path for the compound Poisson-Gamma model.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::kgf::{BernoulliSum, CompoundPoissonGammaKgf, Kgf};
use crate::model::{FactorModel, Portfolio};
use crate::normal;
use crate::quadrature::Quadrature;
use crate::saddle::{SaddleOptions, SaddleSolution, Side};

/// Smallest mixed tail probability for which a shortfall is reported.
pub const MIN_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Saddlepoint,
    Clt,
}

/// The quadrature actually used: a factor-free model needs one node.
pub fn effective_quadrature<'a>(model: &FactorModel, quad: &'a Quadrature) -> Cow<'a, Quadrature> {
    match model {
        FactorModel::Independent => Cow::Owned(Quadrature::point()),
        _ => Cow::Borrowed(quad),
    }
}

/// Where the threshold sits relative to one node's conditional support.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeFit {
    Solved(SaddleSolution),
    /// At or below the certain losses: the upper tail is 1.
    Below,
    /// At or above every possible loss: the upper tail is 0.
    Above,
    /// Within the smallest uncertain exposure of either end of the support.
    /// The tail there is exact: any uncertain default (lower end) or all of
    /// them (upper end). The saddlepoint, when it exists, still supplies the
    /// smoothed density and tilt.
    Gap {
        tail: f64,
        /// `E[Y 1{Y ⋗ y} | V]`.
        partial: f64,
        /// Per-asset `P(D_j, Y ⋗ y | V)`.
        joint: Vec<f64>,
        solution: Option<SaddleSolution>,
    },
}

/// Conditional state at one quadrature node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub v: f64,
    pub weight: f64,
    pub pds: Vec<f64>,
    /// `μ_{Y|V}`.
    pub mean: f64,
    pub fit: NodeFit,
}

impl NodeState {
    pub fn shat(&self) -> Option<f64> {
        match &self.fit {
            NodeFit::Solved(s) | NodeFit::Gap { solution: Some(s), .. } => Some(s.shat),
            _ => None,
        }
    }

    pub fn tail(&self, opts: SaddleOptions) -> f64 {
        match &self.fit {
            NodeFit::Solved(s) => s.tail(opts.tail_form),
            NodeFit::Below => 1.0,
            NodeFit::Above => 0.0,
            NodeFit::Gap { tail, .. } => *tail,
        }
    }

    pub fn density(&self, opts: SaddleOptions) -> f64 {
        match &self.fit {
            NodeFit::Solved(s) | NodeFit::Gap { solution: Some(s), .. } => {
                s.density(opts.density_correction)
            }
            _ => 0.0,
        }
    }

    /// `E[Y 1{Y ⋗ y} | V]`.
    pub fn partial_upper(&self, opts: SaddleOptions) -> f64 {
        match &self.fit {
            NodeFit::Solved(s) => s.partial_expectation(Side::Upper, opts),
            NodeFit::Below => self.mean,
            NodeFit::Above => 0.0,
            NodeFit::Gap { partial, .. } => *partial,
        }
    }
}

/// Saddlepoints at every node for one threshold, ready to be mixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    y: f64,
    opts: SaddleOptions,
    exposures: Vec<f64>,
    nodes: Vec<NodeState>,
}

fn check_threshold(portfolio: &Portfolio, y: f64) -> Result<()> {
    let hi = portfolio.max_loss();
    if !(y > 0.0 && y < hi) {
        return Err(Error::OutOfRange { y, lo: 0.0, hi });
    }
    Ok(())
}

/// The exact conditional law for `lo < y < lo + min a_j` over uncertain assets.
/// A saddlepoint there has `ŝ → −∞` and a tail falling to zero, while the true
/// tail stays at `P[Y > lo]`.
fn lattice_gap(sum: &BernoulliSum, y: f64) -> Option<NodeFit> {
    let (lo, hi) = sum.support();
    let mut smallest = f64::INFINITY;
    let mut none = 1.0;
    let mut all = 1.0;
    for (&a, &p) in sum.exposures().iter().zip(sum.pds()) {
        if p > 0.0 && p < 1.0 && a > 0.0 {
            smallest = smallest.min(a);
            none *= 1.0 - p;
            all *= p;
        }
    }
    let (tail, partial, joint) = if y < lo + smallest {
        let tail = 1.0 - none;
        let joint = sum.pds().iter().map(|&p| if p >= 1.0 { tail } else { p }).collect();
        (tail, sum.conditional_mean() - lo * none, joint)
    } else if y > hi - smallest {
        let joint = sum.pds().iter().map(|&p| if p > 0.0 { all } else { 0.0 }).collect();
        (all, hi * all, joint)
    } else {
        return None;
    };
    let solution = SaddleSolution::new(sum, y).ok();
    Some(NodeFit::Gap { tail, partial, joint, solution })
}

impl Mixture {
    pub fn new(
        portfolio: &Portfolio,
        model: &FactorModel,
        quad: &Quadrature,
        y: f64,
        opts: SaddleOptions,
    ) -> Result<Self> {
        model.validate()?;
        check_threshold(portfolio, y)?;
        let quad = effective_quadrature(model, quad);
        let exposures = portfolio.exposures();
        let coupling = model.coupling(portfolio);
        let points: Vec<(f64, f64)> = quad.iter().collect();
        let nodes = crate::par::map(&points, |&(v, weight)| {
            let pds = coupling.pds(v);
            let sum = BernoulliSum::new(exposures.clone(), pds);
            let (lo, hi) = sum.support();
            let fit = if y <= lo {
                NodeFit::Below
            } else if y >= hi {
                NodeFit::Above
            } else if let Some(gap) = lattice_gap(&sum, y) {
                gap
            } else {
                NodeFit::Solved(SaddleSolution::new(&sum, y)?)
            };
            Ok(NodeState {
                v,
                weight,
                mean: sum.conditional_mean(),
                pds: sum.pds().to_vec(),
                fit,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Mixture { y, opts, exposures, nodes })
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn options(&self) -> SaddleOptions {
        self.opts
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    fn mix(&self, f: impl Fn(&NodeState) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).sum()
    }

    /// `E[μ_{Y|V}]`.
    pub fn mean(&self) -> f64 {
        self.mix(|n| n.mean)
    }

    /// `P[Y ⋗ y]` or `P[Y ⋖ y]`.
    pub fn tail(&self, side: Side) -> f64 {
        let up = self.mix(|n| n.tail(self.opts));
        match side {
            Side::Upper => up,
            Side::Lower => 1.0 - up,
        }
    }

    pub fn density(&self) -> f64 {
        self.mix(|n| n.density(self.opts))
    }

    /// `E[Y 1{Y ⋗ y}]` or `E[Y 1{Y ⋖ y}]`.
    pub fn partial_expectation(&self, side: Side) -> f64 {
        let up = self.mix(|n| n.partial_upper(self.opts));
        match side {
            Side::Upper => up,
            Side::Lower => self.mean() - up,
        }
    }

    pub fn esf(&self, side: Side) -> Result<f64> {
        let p = self.tail(side);
        if p < MIN_TAIL {
            return Err(Error::DegenerateTail { prob: p });
        }
        Ok(self.partial_expectation(side) / p)
    }

    /// `(E[(Y − y)⁺], E[(y − Y)⁺])`.
    pub fn tranche(&self) -> (f64, f64) {
        let call = self.partial_expectation(Side::Upper) - self.y * self.tail(Side::Upper);
        (call, call - self.mean() + self.y)
    }

    /// Smallest and largest saddlepoint over the solved nodes.
    pub fn shat_range(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .filter_map(NodeState::shat)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)))
    }
}

/// Mixed saddlepoint `P[Y ⋗ y]` with default options.
pub fn mixed_tail(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<f64> {
    Ok(Mixture::new(portfolio, model, quad, y, SaddleOptions::default())?.tail(Side::Upper))
}

/// Mixed saddlepoint density with default options.
pub fn mixed_density(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<f64> {
    Ok(Mixture::new(portfolio, model, quad, y, SaddleOptions::default())?.density())
}

/// Mixed saddlepoint shortfall `(E[Y | Y ⋗ y], E[Y | Y ⋖ y])`.
pub fn mixed_esf(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<(f64, f64)> {
    let m = Mixture::new(portfolio, model, quad, y, SaddleOptions::default())?;
    Ok((m.esf(Side::Upper)?, m.esf(Side::Lower)?))
}

/// Conditional mean and standard deviation at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltNode {
    pub v: f64,
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl CltNode {
    pub fn z(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }

    pub fn tail(&self, y: f64) -> f64 {
        if self.sd > 0.0 {
            normal::sf(self.z(y))
        } else if self.mean > y {
            1.0
        } else if self.mean < y {
            0.0
        } else {
            0.5
        }
    }

    pub fn density(&self, y: f64) -> f64 {
        if self.sd > 0.0 {
            normal::pdf(self.z(y)) / self.sd
        } else {
            0.0
        }
    }

    /// `E[Y 1{Y > y}]` under the Normal approximation.
    pub fn partial_upper(&self, y: f64) -> f64 {
        if self.sd > 0.0 {
            let z = self.z(y);
            self.mean * normal::sf(z) + self.sd * normal::pdf(z)
        } else {
            self.mean * self.tail(y)
        }
    }
}

/// Conditional moments at every node.
pub fn clt_nodes(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature) -> Vec<CltNode> {
    let quad = effective_quadrature(model, quad);
    let exposures = portfolio.exposures();
    let coupling = model.coupling(portfolio);
    quad.iter()
        .map(|(v, weight)| {
            let sum = BernoulliSum::new(exposures.clone(), coupling.pds(v));
            CltNode {
                v,
                weight,
                mean: sum.conditional_mean(),
                sd: sum.conditional_variance().sqrt(),
            }
        })
        .collect()
}

fn clt_mix(nodes: &[CltNode], f: impl Fn(&CltNode) -> f64) -> f64 {
    nodes.iter().map(|n| n.weight * f(n)).sum()
}

/// `E[Φ(−z_V)]`.
pub fn clt_tail(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> f64 {
    clt_mix(&clt_nodes(portfolio, model, quad), |n| n.tail(y))
}

pub fn clt_density(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> f64 {
    clt_mix(&clt_nodes(portfolio, model, quad), |n| n.density(y))
}

/// Conditional-Normal shortfall `(upper, lower)`.
pub fn clt_esf(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature, y: f64) -> Result<(f64, f64)> {
    let nodes = clt_nodes(portfolio, model, quad);
    let up = clt_mix(&nodes, |n| n.tail(y));
    let part = clt_mix(&nodes, |n| n.partial_upper(y));
    let mean = clt_mix(&nodes, |n| n.mean);
    if up < MIN_TAIL {
        return Err(Error::DegenerateTail { prob: up });
    }
    if 1.0 - up < MIN_TAIL {
        return Err(Error::DegenerateTail { prob: 1.0 - up });
    }
    Ok((part / up, (mean - part) / (1.0 - up)))
}

/// Loss level whose mixed upper tail equals `p_tail`.
pub fn solve_var(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    p_tail: f64,
    method: Method,
    opts: SaddleOptions,
) -> Result<f64> {
    if !(p_tail > 0.0 && p_tail < 1.0) {
        return Err(Error::InvalidInput(format!("tail probability {p_tail} not in (0, 1)")));
    }
    match method {
        Method::Saddlepoint => {
            let hi = portfolio.max_loss() * (1.0 - 1e-9);
            let lo = portfolio.max_loss() * 1e-9;
            let f = |y: f64| -> Result<f64> {
                Ok(Mixture::new(portfolio, model, quad, y, opts)?.tail(Side::Upper) - p_tail)
            };
            brent(f, lo, hi, p_tail)
        }
        Method::Clt => {
            let nodes = clt_nodes(portfolio, model, quad);
            let lo = nodes.iter().map(|n| n.mean - 40.0 * n.sd).fold(f64::INFINITY, f64::min);
            let hi = nodes.iter().map(|n| n.mean + 40.0 * n.sd).fold(f64::NEG_INFINITY, f64::max);
            let f = |y: f64| -> Result<f64> { Ok(clt_mix(&nodes, |n| n.tail(y)) - p_tail) };
            brent(f, lo, hi, p_tail)
        }
    }
}

/// Brent's method on a decreasing function, run to machine resolution; the
/// final residual must be within `1e-10`.
fn brent(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, target: f64) -> Result<f64> {
    let fail = || Error::BracketFailure { target, lo, hi };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(fail());
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            // A residual left at resolution is a jump of the tail across the
            // target; the quantile is the point where it drops below.
            return Ok(if fb.abs() <= 1e-10 || fb < 0.0 { b } else { c });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    if fb.abs() <= 1e-10 {
        Ok(b)
    } else {
        Err(fail())
    }
}

/// Conditional mean, its factor slope and the conditional variance at `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorMoments {
    pub mean: f64,
    pub slope: f64,
    pub variance: f64,
}

/// Infinitely granular quantities and their second-order corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GranularityAdjustment {
    pub level: f64,
    /// Factor value at which `μ_{Y|V}` equals the granular VaR.
    pub factor: f64,
    pub var_infinite: f64,
    pub var_adjusted: f64,
    pub esf_infinite: f64,
    pub esf_adjusted: f64,
    /// Density of `μ_{Y|V}(V)` at the granular VaR.
    pub density: f64,
}

/// Granularity adjustment of VaR and shortfall for a portfolio.
pub fn granularity_adjust(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    p_tail: f64,
) -> Result<GranularityAdjustment> {
    model.validate()?;
    let quad = effective_quadrature(model, quad);
    let exposures = portfolio.exposures();
    let coupling = model.coupling(portfolio);
    let moments = |v: f64| {
        let pds = coupling.pds(v);
        let slopes = coupling.pd_slopes(v);
        let mut m = FactorMoments { mean: 0.0, slope: 0.0, variance: 0.0 };
        for ((a, p), dp) in exposures.iter().zip(&pds).zip(&slopes) {
            m.mean += a * p;
            m.slope += a * dp;
            m.variance += a * a * p * (1.0 - p);
        }
        m
    };
    granularity_adjust_with(moments, quad.nodes(), p_tail)
}

/// Granularity adjustment from the factor curves `v ↦ (μ, dμ/dv, σ²)`.
///
/// `μ` must be strictly monotone across `nodes`. With `x = μ(v*)` the granular
/// VaR, `f(x) = φ(v*)/|μ'(v*)|` and the x-derivative of `σ²f` is taken as
/// `(d/dv)[σ²φ/|μ'|] / μ'` by central differences in `v`.
pub fn granularity_adjust_with(
    moments: impl Fn(f64) -> FactorMoments,
    nodes: &[f64],
    p_tail: f64,
) -> Result<GranularityAdjustment> {
    if !(p_tail > 0.0 && p_tail < 1.0) {
        return Err(Error::InvalidInput(format!("tail probability {p_tail} not in (0, 1)")));
    }
    let means: Vec<f64> = nodes.iter().map(|&v| moments(v).mean).collect();
    let (first, last) = match (means.first(), means.last()) {
        (Some(&a), Some(&b)) if nodes.len() > 1 => (a, b),
        _ => return Err(Error::NotMonotone),
    };
    let scale = first.abs().max(last.abs());
    if (last - first).abs() <= 1e-12 * scale {
        return Err(Error::NotMonotone);
    }
    let decreasing = last < first;
    let monotone = means.windows(2).all(|w| if decreasing { w[1] <= w[0] } else { w[1] >= w[0] });
    if !monotone {
        return Err(Error::NotMonotone);
    }

    // Upper tail of μ(V) is the lower tail of V when μ decreases.
    let v = if decreasing {
        normal::quantile(p_tail)
    } else {
        normal::quantile(1.0 - p_tail)
    };
    let at = moments(v);
    if at.slope == 0.0 {
        return Err(Error::NotMonotone);
    }
    let x = at.mean;
    let density = normal::pdf(v) / at.slope.abs();
    let g = |v: f64| {
        let m = moments(v);
        m.variance * normal::pdf(v) / m.slope.abs()
    };
    let h = 1e-4;
    let dg_dx = (g(v + h) - g(v - h)) / (2.0 * h) / at.slope;
    let var_adjusted = x - dg_dx / (2.0 * density);

    // ESF of μ(V): (1/P) ∫ μ(u) φ(u) du over the tail side of v.
    let n = 4000;
    let (a, b) = if decreasing { (v - 12.0, v) } else { (v, v + 12.0) };
    let step = (b - a) / n as f64;
    let integrand = |u: f64| moments(u).mean * normal::pdf(u);
    let mut sum = integrand(a) + integrand(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(a + i as f64 * step);
    }
    let esf_infinite = sum * step / 3.0 / p_tail;
    let esf_adjusted = esf_infinite + at.variance * density / (2.0 * p_tail);
    Ok(GranularityAdjustment {
        level: p_tail,
        factor: v,
        var_infinite: x,
        var_adjusted,
        esf_infinite,
        esf_adjusted,
        density,
    })
}

/// Unconditional saddlepoint results at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectResult {
    pub shat: f64,
    pub density: f64,
    /// `P[Y > y]`.
    pub tail: f64,
    /// `E[Y | Y > y]`.
    pub esf: f64,
    /// Relative density correction `K''''/(8K''²) − 5K'''²/(24K''³)` at `ŝ`.
    pub correction: f64,
}

/// Saddlepoint approximation applied directly to the unconditional KGF of a
/// compound Poisson-Gamma loss, with the saddlepoint in closed form.
pub fn direct_saddlepoint(kgf: &CompoundPoissonGammaKgf, y: f64, opts: SaddleOptions) -> Result<DirectResult> {
    let CompoundPoissonGammaKgf { rate, shape, scale } = *kgf;
    for (name, x) in [("rate", rate), ("shape", shape), ("scale", scale)] {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {x}")));
        }
    }
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::OutOfRange { y, lo: 0.0, hi: f64::INFINITY });
    }
    let sol = SaddleSolution::at(kgf, y, kgf.algebraic_saddlepoint(y), 0);
    let tail = sol.tail(opts.tail_form);
    Ok(DirectResult {
        shat: sol.shat,
        density: sol.density(opts.density_correction),
        tail,
        esf: sol.partial_expectation(Side::Upper, opts) / tail,
        correction: sol.correction_term(),
    })
}

/// One row of a distribution curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub y: f64,
    pub tail: f64,
    pub density: f64,
    pub esf: f64,
    pub shat_min: f64,
    pub shat_max: f64,
}

/// Tail, density and shortfall over a set of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionCurve {
    pub points: Vec<CurvePoint>,
}

pub fn distribution_curve(
    portfolio: &Portfolio,
    model: &FactorModel,
    quad: &Quadrature,
    ys: &[f64],
    opts: SaddleOptions,
) -> Result<DistributionCurve> {
    let points = ys
        .iter()
        .map(|&y| {
            let m = Mixture::new(portfolio, model, quad, y, opts)?;
            let (shat_min, shat_max) = m.shat_range();
            Ok(CurvePoint {
                y,
                tail: m.tail(Side::Upper),
                density: m.density(),
                esf: m.esf(Side::Upper)?,
                shat_min,
                shat_max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistributionCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{convolve_independent, AnalyticFamily};

    const BOOK10: [f64; 10] = [9.0, 8.0, 18.0, 9.0, 8.0, 20.0, 17.0, 16.0, 12.0, 12.0];

    fn book10() -> Portfolio {
        Portfolio::uniform(&BOOK10, 0.1, 0.0).unwrap()
    }

    #[test]
    fn independent_model_is_a_single_node() {
        let pf = book10();
        let quad = Quadrature::default();
        let mixed = mixed_tail(&pf, &FactorModel::Independent, &quad, 40.0).unwrap();
        let sum = BernoulliSum::new(BOOK10.to_vec(), vec![0.1; 10]);
        let direct = SaddleSolution::new(&sum, 40.0).unwrap().tail(Default::default());
        assert_eq!(mixed, direct);
        // zero loadings under the copula give the same answer to quadrature rounding
        let copula = mixed_tail(&pf, &FactorModel::GaussianCopula, &quad, 40.0).unwrap();
        assert!((copula - direct).abs() < 1e-13);
    }

    #[test]
    fn var_round_trip() {
        let pf = book10();
        let quad = Quadrature::default();
        let opts = SaddleOptions::default();
        let y = solve_var(&pf, &FactorModel::Independent, &quad, 0.05, Method::Saddlepoint, opts).unwrap();
        let t = mixed_tail(&pf, &FactorModel::Independent, &quad, y).unwrap();
        assert!((t - 0.05).abs() <= 1e-10);
        let y = solve_var(&pf, &FactorModel::Independent, &quad, 0.05, Method::Clt, opts).unwrap();
        assert!((clt_tail(&pf, &FactorModel::Independent, &quad, y) - 0.05).abs() <= 1e-10);
    }

    #[test]
    fn clt_single_symmetric_asset() {
        let pf = Portfolio::uniform(&[1.0], 0.5, 0.0).unwrap();
        let quad = Quadrature::default();
        assert!((clt_tail(&pf, &FactorModel::Independent, &quad, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn esf_exceeds_var_and_tracks_convolution() {
        let pf = book10();
        let quad = Quadrature::default();
        let grid = convolve_independent(&pf, &[0.1; 10]).unwrap();
        for p in [0.2, 0.1, 0.05, 0.01, 0.005] {
            let y = grid.var(p).unwrap();
            let (up, lo) = mixed_esf(&pf, &FactorModel::Independent, &quad, y).unwrap();
            assert!(up > y && lo < y);
            let exact = grid.esf(y);
            assert!((up / exact - 1.0).abs() < 0.05, "p={p}: {up} vs {exact}");
        }
    }

    #[test]
    fn tranche_parity() {
        let pf = book10().with_loading(0.4).unwrap();
        let quad = Quadrature::default();
        for y in [5.0, 20.0, 60.0] {
            let m = Mixture::new(&pf, &FactorModel::GaussianCopula, &quad, y, Default::default()).unwrap();
            let (call, put) = m.tranche();
            assert!((call - put - (m.mean() - y)).abs() < 1e-10);
            assert!((m.mean() - pf.expected_loss()).abs() < 1e-9);
        }
    }

    #[test]
    fn mixed_tail_near_zero_loss() {
        // P[Y > 0] = 1 − E[Π (1 − p_j(V))]
        let pf = book10().with_loading(0.5).unwrap();
        let quad = Quadrature::default();
        let coupling = FactorModel::GaussianCopula.coupling(&pf);
        let none = quad.expect(|v| coupling.pds(v).iter().map(|p| 1.0 - p).product());
        let t = mixed_tail(&pf, &FactorModel::GaussianCopula, &quad, 1e-6).unwrap();
        assert!((t - (1.0 - none)).abs() < 0.02, "{t} vs {}", 1.0 - none);
    }

    #[test]
    fn tail_is_monotone_and_not_log_concave_when_mixed() {
        // two well separated regimes make the mixed tail bend the wrong way
        let pf = Portfolio::uniform(&[1.0; 40], 0.02, 0.9).unwrap();
        let quad = Quadrature::default();
        let ys: Vec<f64> = (1..39).map(|i| i as f64).collect();
        let tails: Vec<f64> = ys
            .iter()
            .map(|&y| mixed_tail(&pf, &FactorModel::GaussianCopula, &quad, y).unwrap())
            .collect();
        assert!(tails.windows(2).all(|w| w[1] < w[0]));
        assert!(crate::saddle::log_second_differences(&tails).iter().any(|&d| d > 0.0));
    }

    #[test]
    fn quadrature_converges() {
        let pf = book10().with_loading(0.5).unwrap();
        let a = mixed_tail(&pf, &FactorModel::GaussianCopula, &Quadrature::gauss_hermite(99), 60.0).unwrap();
        let b = mixed_tail(&pf, &FactorModel::GaussianCopula, &Quadrature::gauss_hermite(199), 60.0).unwrap();
        assert!((a / b - 1.0).abs() < 1e-8);
    }

    #[test]
    fn granularity_without_idiosyncratic_variance() {
        let moments = |v: f64| FactorMoments { mean: 10.0 - v, slope: -1.0, variance: 0.0 };
        let nodes: Vec<f64> = (-5..=5).map(f64::from).collect();
        let ga = granularity_adjust_with(moments, &nodes, 0.01).unwrap();
        assert!((ga.var_adjusted - ga.var_infinite).abs() < 1e-12);
        assert!((ga.esf_adjusted - ga.esf_infinite).abs() < 1e-12);
        // μ(V) = 10 − V is Normal(10, 1)
        assert!((ga.var_infinite - (10.0 + 2.326_347_874_040_841)).abs() < 1e-12);
        assert!((ga.esf_infinite - (10.0 + normal::pdf(2.326_347_874_040_841) / 0.01)).abs() < 1e-9);
    }

    #[test]
    fn granularity_rejects_flat_curves() {
        let pf = book10();
        let quad = Quadrature::default();
        assert_eq!(
            granularity_adjust(&pf, &FactorModel::GaussianCopula, &quad, 0.01),
            Err(Error::NotMonotone)
        );
        let flat = |_v: f64| FactorMoments { mean: 1.0, slope: 0.0, variance: 1.0 };
        assert_eq!(granularity_adjust_with(flat, &[0.0, 1.0], 0.1), Err(Error::NotMonotone));
        let bumpy = |v: f64| FactorMoments { mean: v * v, slope: 2.0 * v, variance: 1.0 };
        assert_eq!(granularity_adjust_with(bumpy, &[-1.0, 0.0, 1.0], 0.1), Err(Error::NotMonotone));
    }

    #[test]
    fn direct_compound_method() {
        let kgf = CompoundPoissonGammaKgf { rate: 5.0, shape: 1.0, scale: 0.5 };
        let fam = AnalyticFamily::CompoundPoissonGamma { rate: 5.0, shape: 1.0, scale: 0.5 };
        let r = direct_saddlepoint(&kgf, 5.0, SaddleOptions::default()).unwrap();
        let exact = fam.at(5.0);
        assert!((r.tail / exact.tail - 1.0).abs() < 0.01, "{} vs {}", r.tail, exact.tail);
        // at the mean the saddlepoint is zero
        let r = direct_saddlepoint(&kgf, 2.5, SaddleOptions::default()).unwrap();
        assert!(r.shat.abs() < 1e-15);
        assert!(direct_saddlepoint(&kgf, 0.0, SaddleOptions::default()).is_err());
    }

    #[test]
    fn direct_correction_shrinks_with_rate() {
        let c: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&t| {
                let kgf = CompoundPoissonGammaKgf { rate: t, shape: 1.0, scale: 0.5 };
                direct_saddlepoint(&kgf, 1.5 * t, SaddleOptions::default()).unwrap().correction
            })
            .collect();
        for w in c.windows(2) {
            assert!((w[0] / w[1] / 10.0 - 1.0).abs() < 0.2, "{c:?}");
        }
    }
}
