//! Cumulant-generating functions and their first four derivatives.
//!
//! The portfolio KGF conditional on the factor is a sum of Bernoulli terms,
//! `K(s) = Σ_j ln(1 − p_j + p_j e^{a_j s})`. All derivatives are expressed
//! through the tilted default probability `p̃_j`, and its complement `q̃_j` is
//! computed directly so that neither loses precision deep in a tail.

use crate::model::{FactorModel, Portfolio};

/// `K(s)` and its first four derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivs {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl std::ops::AddAssign for Derivs {
    fn add_assign(&mut self, o: Derivs) {
        self.k0 += o.k0;
        self.k1 += o.k1;
        self.k2 += o.k2;
        self.k3 += o.k3;
        self.k4 += o.k4;
    }
}

/// Anything with a real-axis KGF the saddlepoint machinery can work with.
pub trait Kgf {
    fn eval(&self, s: f64) -> Derivs;

    /// Open interval of `s` on which the KGF is finite.
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Open interval of thresholds `y` that have a saddlepoint.
    fn support(&self) -> (f64, f64);

    /// Closed-form root of `K'(s) = y`, when the family has one.
    fn saddlepoint_hint(&self, _y: f64) -> Option<f64> {
        None
    }

    /// Typical size of a tilt that changes the distribution appreciably.
    fn tilt_scale(&self) -> f64 {
        let v = self.variance();
        if v > 0.0 {
            1.0 / v.sqrt()
        } else {
            1.0
        }
    }

    fn mean(&self) -> f64 {
        self.eval(0.0).k1
    }

    fn variance(&self) -> f64 {
        self.eval(0.0).k2
    }
}

/// `(p̃, 1 − p̃)` for a Bernoulli loss of size `a` tilted by `s`.
pub fn tilt(p: f64, a: f64, s: f64) -> (f64, f64) {
    if p <= 0.0 {
        return (0.0, 1.0);
    }
    if p >= 1.0 {
        return (1.0, 0.0);
    }
    let t = a * s;
    if p < 1e-290 || t.abs() > 650.0 {
        // the ratio form would divide subnormals; go through the logit
        let x = t + p.ln() - (-p).ln_1p();
        let e = (-x.abs()).exp();
        let (big, small) = (1.0 / (1.0 + e), e / (1.0 + e));
        return if x > 0.0 { (big, small) } else { (small, big) };
    }
    if t > 0.0 {
        let e = (-t).exp();
        let den = p + (1.0 - p) * e;
        (p / den, (1.0 - p) * e / den)
    } else {
        let e = t.exp();
        let den = (1.0 - p) + p * e;
        (p * e / den, (1.0 - p) / den)
    }
}

/// Tilted default probability `p e^{a s} / (1 − p + p e^{a s})`.
pub fn tilted_pd(p: f64, a: f64, s: f64) -> f64 {
    tilt(p, a, s).0
}

/// `ln(1 − p + p e^{t})` without overflow or cancellation.
fn bernoulli_log_mgf(p: f64, t: f64) -> f64 {
    if p < 1e-290 || t.abs() > 650.0 {
        // ln(1 − p) + softplus(t + logit p)
        let q = (-p).ln_1p();
        let x = t + p.ln() - q;
        return q + x.max(0.0) + (-x.abs()).exp().ln_1p();
    }
    if t > 0.0 {
        // t + ln(p + (1 − p) e^{−t})
        let x = (1.0 - p) * (-t).exp_m1();
        if x > -0.5 {
            t + x.ln_1p()
        } else {
            t + (p + (1.0 - p) * (-t).exp()).ln()
        }
    } else {
        let x = p * t.exp_m1();
        if x > -0.5 {
            x.ln_1p()
        } else {
            ((1.0 - p) + p * t.exp()).ln()
        }
    }
}

/// KGF of `a · Bernoulli(p)` and its s-derivatives, orders 0 to 4.
pub fn kgf_bernoulli(p: f64, a: f64, s: f64) -> Derivs {
    if p <= 0.0 {
        return Derivs::default();
    }
    if p >= 1.0 {
        return Derivs {
            k0: a * s,
            k1: a,
            ..Derivs::default()
        };
    }
    let (pt, qt) = tilt(p, a, s);
    bernoulli_from_tilt(p, a, s, pt, qt)
}

#[inline]
fn bernoulli_from_tilt(p: f64, a: f64, s: f64, pt: f64, qt: f64) -> Derivs {
    let v = pt * qt;
    let a2 = a * a;
    Derivs {
        k0: bernoulli_log_mgf(p, a * s),
        k1: a * pt,
        k2: a2 * v,
        k3: a2 * a * v * (qt - pt),
        k4: a2 * a2 * v * (1.0 - 6.0 * v),
    }
}

/// Per-asset quantities cached at one tilt point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetTilt {
    /// Tilted default probability `p̃_j`.
    pub ptilde: f64,
    /// `1 − p̃_j`, computed without cancellation.
    pub qtilde: f64,
    /// `a_j p̃_j`: this asset's share of `K'` (loss units).
    pub k1: f64,
}

/// Portfolio KGF derivatives at `s` plus the per-asset cache.
#[derive(Debug, Clone, PartialEq)]
pub struct KgfEval {
    pub s: f64,
    pub derivs: Derivs,
    pub per_asset: Vec<AssetTilt>,
}

/// Conditional KGF of a default/no-default portfolio at fixed default probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliSum {
    exposures: Vec<f64>,
    pds: Vec<f64>,
}

impl BernoulliSum {
    pub fn new(exposures: Vec<f64>, pds: Vec<f64>) -> Self {
        assert_eq!(exposures.len(), pds.len());
        BernoulliSum { exposures, pds }
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn pds(&self) -> &[f64] {
        &self.pds
    }

    /// Evaluate and keep the per-asset tilts.
    pub fn eval_detailed(&self, s: f64) -> KgfEval {
        let mut derivs = Derivs::default();
        let mut per_asset = Vec::with_capacity(self.pds.len());
        for (&a, &p) in self.exposures.iter().zip(&self.pds) {
            let (pt, qt) = tilt(p, a, s);
            let d = if p <= 0.0 || p >= 1.0 {
                kgf_bernoulli(p, a, s)
            } else {
                bernoulli_from_tilt(p, a, s, pt, qt)
            };
            derivs += d;
            per_asset.push(AssetTilt {
                ptilde: pt,
                qtilde: qt,
                k1: a * pt,
            });
        }
        KgfEval { s, derivs, per_asset }
    }

    /// Conditional mean `Σ a_j p_j`.
    pub fn conditional_mean(&self) -> f64 {
        self.exposures.iter().zip(&self.pds).map(|(a, p)| a * p).sum()
    }

    /// Conditional variance `Σ a_j² p_j (1 − p_j)`.
    pub fn conditional_variance(&self) -> f64 {
        self.exposures
            .iter()
            .zip(&self.pds)
            .map(|(a, p)| a * a * p * (1.0 - p))
            .sum()
    }
}

impl Kgf for BernoulliSum {
    fn eval(&self, s: f64) -> Derivs {
        let mut d = Derivs::default();
        for (&a, &p) in self.exposures.iter().zip(&self.pds) {
            d += kgf_bernoulli(p, a, s);
        }
        d
    }

    /// A tilt of `1/max a_j` moves every tilted pd by at most a factor `e`.
    fn tilt_scale(&self) -> f64 {
        let amax = self.exposures.iter().fold(0.0f64, |m, &a| m.max(a));
        if amax > 0.0 {
            1.0 / amax
        } else {
            1.0
        }
    }

    /// Between the certain losses and every loss that can occur.
    fn support(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (&a, &p) in self.exposures.iter().zip(&self.pds) {
            if p >= 1.0 {
                lo += a;
            }
            if p > 0.0 {
                hi += a;
            }
        }
        (lo, hi)
    }
}

/// KGF of the portfolio conditional on factor value `v`, evaluated at `s`.
pub fn kgf_portfolio(portfolio: &Portfolio, model: &FactorModel, v: f64, s: f64) -> KgfEval {
    let pds = model.coupling(portfolio).pds(v);
    BernoulliSum::new(portfolio.exposures(), pds).eval_detailed(s)
}

/// `N(mean, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalKgf {
    pub mean: f64,
    pub sd: f64,
}

impl Kgf for NormalKgf {
    fn eval(&self, s: f64) -> Derivs {
        let v = self.sd * self.sd;
        Derivs {
            k0: self.mean * s + 0.5 * v * s * s,
            k1: self.mean + v * s,
            k2: v,
            k3: 0.0,
            k4: 0.0,
        }
    }

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn saddlepoint_hint(&self, y: f64) -> Option<f64> {
        Some((y - self.mean) / (self.sd * self.sd))
    }
}

/// Gamma with shape `shape` and scale `scale`: `K(s) = −α ln(1 − β s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaKgf {
    pub shape: f64,
    pub scale: f64,
}

impl Kgf for GammaKgf {
    fn eval(&self, s: f64) -> Derivs {
        let (a, b) = (self.shape, self.scale);
        let u = 1.0 / (1.0 - b * s);
        Derivs {
            k0: -a * (-b * s).ln_1p(),
            k1: a * b * u,
            k2: a * (b * u).powi(2),
            k3: 2.0 * a * (b * u).powi(3),
            k4: 6.0 * a * (b * u).powi(4),
        }
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, 1.0 / self.scale)
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn saddlepoint_hint(&self, y: f64) -> Option<f64> {
        Some((1.0 - self.shape * self.scale / y) / self.scale)
    }
}

/// Poisson(θ) number of Gamma(α, β) losses: `K(s) = θ((1 − β s)^{−α} − 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundPoissonGammaKgf {
    pub rate: f64,
    pub shape: f64,
    pub scale: f64,
}

impl CompoundPoissonGammaKgf {
    /// Root of `K'(s) = y` by rearrangement: `(1 − β s)^{−(α+1)} = y / (θ α β)`.
    pub fn algebraic_saddlepoint(&self, y: f64) -> f64 {
        let (t, a, b) = (self.rate, self.shape, self.scale);
        (1.0 - (t * a * b / y).powf(1.0 / (a + 1.0))) / b
    }
}

impl Kgf for CompoundPoissonGammaKgf {
    fn eval(&self, s: f64) -> Derivs {
        let (t, a, b) = (self.rate, self.shape, self.scale);
        let u = 1.0 / (1.0 - b * s);
        // ln((1 − βs)^{−α}) = −α ln_1p(−βs)
        let m = (-a * (-b * s).ln_1p()).exp();
        let bu = b * u;
        Derivs {
            k0: t * (-a * (-b * s).ln_1p()).exp_m1(),
            k1: t * a * bu * m,
            k2: t * a * (a + 1.0) * bu * bu * m,
            k3: t * a * (a + 1.0) * (a + 2.0) * bu.powi(3) * m,
            k4: t * a * (a + 1.0) * (a + 2.0) * (a + 3.0) * bu.powi(4) * m,
        }
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, 1.0 / self.scale)
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn saddlepoint_hint(&self, y: f64) -> Option<f64> {
        Some(self.algebraic_saddlepoint(y))
    }
}
