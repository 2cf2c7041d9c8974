//! Saddlepoint root-finding and the density, tail, shortfall and tranche
//! formulas built on a solved saddlepoint.
//!
//! Tail probabilities follow the continuity convention
//! `P[Y ⋗ y] = P[Y > y] + ½ P[Y = y]`.
//!
//! Both tail forms are 0/0 at `ŝ = 0`. Below `|ŝ|√K'' < NEAR_ZERO` (at both 0 and `ŝ`) each form
//! is replaced by its first-order expansion in `r = ŝ√K''(ŝ)`, with
//! standardized cumulants `λ₃, λ₄` taken at `ŝ`:
//!
//! - Barndorff-Nielsen: `Φ(−ẑ − λ₃/6 + r(λ₄/24 − λ₃²/18))`, which is
//!   `Φ(−K'''(0)/(6K''(0)^{3/2}))` at `ŝ = 0`;
//! - Lugannani-Rice: `Φ(−ẑ) + φ(ẑ)(−λ₃/6 + r(λ₄ − λ₃²)/24)`.
//!
//! The two forms agree to first order in `λ₃` only, so each keeps its own
//! limit. Between `NEAR_ZERO` and `10·NEAR_ZERO` the expansion and the exact
//! form are blended linearly.

use crate::error::{Error, Result};
use crate::kgf::{Derivs, Kgf};
use crate::normal;

/// Switch point in `u = ŝ√K''(0)` for the near-mean expansion.
pub const NEAR_ZERO: f64 = 1e-3;

const MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailForm {
    LugannaniRice,
    #[default]
    BarndorffNielsen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    #[default]
    Upper,
    Lower,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

/// How conditional quantities are assembled from a saddlepoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaddleOptions {
    pub tail_form: TailForm,
    /// Apply the `K''''/(8K''²) − 5K'''²/(24K''³)` factor to the density.
    pub density_correction: bool,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            tail_form: TailForm::BarndorffNielsen,
            density_correction: false,
        }
    }
}

/// Root of `K'(s) = y` and the number of iterations used.
///
/// Starts from the quadratic guess `(y − K'(0))/K''(0)` and iterates Halley's
/// method with `K'''`. Every evaluation shrinks a bracket around the root;
/// steps are limited to a trust region that grows while the iteration is far
/// from the root, and a step that leaves the bracket is replaced by bisection
/// (geometric when the bracket spans several orders of magnitude).
pub fn solve_saddlepoint_counted<K: Kgf + ?Sized>(kgf: &K, y: f64) -> Result<(f64, usize)> {
    let (ylo, yhi) = kgf.support();
    if !(y > ylo && y < yhi) {
        return Err(Error::OutOfRange { y, lo: ylo, hi: yhi });
    }
    let (dlo, dhi) = kgf.domain();
    let d0 = kgf.eval(0.0);
    let sd0 = d0.k2.sqrt();
    let tol = (1e-12 * sd0).max(1e-13 * y.abs());

    // bracket in s and the values of K' at its ends
    let (mut lo, mut hi) = (dlo, dhi);
    let (mut klo, mut khi) = (ylo, yhi);
    if y > d0.k1 {
        lo = 0.0;
        klo = d0.k1;
    } else if y < d0.k1 {
        hi = 0.0;
        khi = d0.k1;
    } else {
        return Ok((0.0, 0));
    }
    let unit = kgf.tilt_scale();
    let mut reach = 4.0 * unit;
    let guess = if d0.k2 > 0.0 { (y - d0.k1) / d0.k2 } else { f64::NAN };
    let mut s = if guess.is_finite() { guess.clamp(-reach, reach) } else { reach.copysign(y - d0.k1) };
    // residuals two and one iterations back
    let mut past = [f64::INFINITY; 2];

    for it in 1..=MAX_ITER {
        if !(s > lo && s < hi) || !s.is_finite() {
            s = inside(lo, hi, reach);
        }
        let d = kgf.eval(s);
        let f = d.k1 - y;
        if f == 0.0 {
            return Ok((s, it));
        }
        let halley = {
            let den = 2.0 * d.k2 * d.k2 - f * d.k3;
            if d.k2 > 0.0 && den > 0.0 {
                2.0 * f * d.k2 / den
            } else if d.k2 > 0.0 {
                f / d.k2
            } else {
                f64::NAN
            }
        };
        let stalled = lo.is_finite() && hi.is_finite() && f.abs() > 0.5 * past[0];
        past = [past[1], f.abs()];
        // Between two plateaus K' looks logistic in s, and at the edges of the
        // support exponential. When Halley leaves the bracket, take a Newton
        // step on the logit of K' relative to the bracket values instead.
        let (below, above) = (d.k1 - klo, khi - d.k1);
        let target = s - halley;
        let step = if target > lo && target < hi && !(f < 0.0 && below < 0.1 * (y - klo)) && !(f > 0.0 && above < 0.1 * (khi - y)) {
            halley
        } else if d.k2 > 0.0 {
            let (mut h, mut dh) = (0.0, 0.0);
            if klo.is_finite() && below > 0.0 {
                h += (below / (y - klo)).ln();
                dh += d.k2 / below;
            }
            if khi.is_finite() && above > 0.0 {
                h -= (above / (khi - y)).ln();
                dh += d.k2 / above;
            }
            if dh > 0.0 { h / dh } else { halley }
        } else {
            halley
        };
        if f > 0.0 {
            hi = s;
            khi = d.k1;
        } else {
            lo = s;
            klo = d.k1;
        }
        if f.abs() <= tol || f.abs() <= 1e-13 * s.abs() * d.k2 {
            // one last step takes the root to machine precision
            let polished = s - step;
            if step.is_finite() && polished > lo && polished < hi {
                let g = kgf.eval(polished).k1 - y;
                if g.abs() <= f.abs() {
                    return Ok((polished, it + 1));
                }
            }
            return Ok((s, it));
        }
        if lo.is_finite() && hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            // bracket at machine resolution; K' is noisier than tol here
            // (subnormal probabilities), and s is as good as it gets
            return Ok((s, it));
        }
        let limit = reach.max(s.abs());
        s = if stalled {
            // slow progress across a flat stretch of K': bisect instead
            past = [f64::INFINITY; 2];
            inside(lo, hi, reach)
        } else if step.is_finite() && step.abs() <= limit {
            s - step
        } else {
            reach *= 4.0;
            s - limit.copysign(step.signum() * if step.is_finite() { 1.0 } else { f.signum() })
        };
    }
    Err(Error::NoConvergence {
        y,
        iterations: MAX_ITER,
    })
}

/// A point strictly inside `(lo, hi)`.
fn inside(lo: f64, hi: f64, reach: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let (a, b) = (lo.abs(), hi.abs());
            if lo.signum() == hi.signum() && a.max(b) > 8.0 * a.min(b) && a.min(b) > 0.0 {
                (lo * hi).sqrt().copysign(hi)
            } else if (lo == 0.0 || hi == 0.0) && a.max(b) > 64.0 * reach {
                0.125 * (lo + hi)
            } else {
                0.5 * (lo + hi)
            }
        }
        (true, false) => lo + 2.0 * (lo.abs() + reach),
        (false, true) => hi - 2.0 * (hi.abs() + reach),
        (false, false) => 0.0,
    }
}

/// Root of `K'(s) = y`.
pub fn solve_saddlepoint<K: Kgf + ?Sized>(kgf: &K, y: f64) -> Result<f64> {
    solve_saddlepoint_counted(kgf, y).map(|(s, _)| s)
}

/// A solved saddlepoint and the KGF derivatives needed downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleSolution {
    pub y: f64,
    pub shat: f64,
    /// `sign(ŝ)·√(2(ŝy − K(ŝ)))`.
    pub zhat: f64,
    pub at_shat: Derivs,
    pub at_zero: Derivs,
    pub iterations: usize,
}

impl SaddleSolution {
    pub fn new<K: Kgf + ?Sized>(kgf: &K, y: f64) -> Result<Self> {
        let (shat, iterations) = solve_saddlepoint_counted(kgf, y)?;
        Ok(Self::at(kgf, y, shat, iterations))
    }

    /// Build from a known saddlepoint (e.g. a closed-form root).
    pub fn at<K: Kgf + ?Sized>(kgf: &K, y: f64, shat: f64, iterations: usize) -> Self {
        let at_shat = kgf.eval(shat);
        let at_zero = kgf.eval(0.0);
        let zhat = companion(y, shat, &at_shat);
        SaddleSolution {
            y,
            shat,
            zhat,
            at_shat,
            at_zero,
            iterations,
        }
    }

    pub fn mean(&self) -> f64 {
        self.at_zero.k1
    }

    /// `u = ŝ√K''(0)`, the tilt in standard-deviation units.
    pub fn standardized_tilt(&self) -> f64 {
        self.shat * self.at_zero.k2.sqrt()
    }

    /// `max(|u|, |ŝ|√K''(ŝ))`: the tilt is small only if it is small on both
    /// scales. Far out in a factor model `K''(0)` can be many orders below
    /// `K''(ŝ)`, and `u` alone would call a large tilt small.
    fn switch_variable(&self) -> f64 {
        self.standardized_tilt()
            .abs()
            .max((self.shat * self.at_shat.k2.sqrt()).abs())
    }

    fn near_zero_weight(&self) -> f64 {
        let u = self.switch_variable();
        if u < NEAR_ZERO {
            0.0
        } else if u < 10.0 * NEAR_ZERO {
            (u - NEAR_ZERO) / (9.0 * NEAR_ZERO)
        } else {
            1.0
        }
    }

    /// `K''''/(8K''²) − 5K'''²/(24K''³)` at `ŝ`.
    pub fn correction_term(&self) -> f64 {
        let d = &self.at_shat;
        d.k4 / (8.0 * d.k2 * d.k2) - 5.0 * d.k3 * d.k3 / (24.0 * d.k2.powi(3))
    }

    /// Saddlepoint density `e^{K(ŝ) − ŝy}/√(2πK''(ŝ))`, optionally corrected.
    pub fn density(&self, with_correction: bool) -> f64 {
        let base = (-0.5 * self.zhat * self.zhat).exp()
            / (2.0 * std::f64::consts::PI * self.at_shat.k2).sqrt();
        if with_correction {
            base * (1.0 + self.correction_term())
        } else {
            base
        }
    }

    /// `P[Y ⋗ y]`.
    pub fn tail(&self, form: TailForm) -> f64 {
        let w = self.near_zero_weight();
        let p = if w == 0.0 {
            self.tail_near_zero(form)
        } else if w == 1.0 {
            self.tail_regular(form)
        } else {
            (1.0 - w) * self.tail_near_zero(form) + w * self.tail_regular(form)
        };
        p.clamp(0.0, 1.0)
    }

    /// Upper or lower tail; the lower tail is the complement of the upper.
    pub fn tail_side(&self, form: TailForm, side: Side) -> f64 {
        match side {
            Side::Upper => self.tail(form),
            Side::Lower => 1.0 - self.tail(form),
        }
    }

    fn tail_regular(&self, form: TailForm) -> f64 {
        let z = self.zhat;
        let r = self.shat * self.at_shat.k2.sqrt();
        match form {
            TailForm::LugannaniRice => normal::sf(z) + normal::pdf(z) * (1.0 / r - 1.0 / z),
            TailForm::BarndorffNielsen => normal::sf(z - (z / r).ln() / z),
        }
    }

    fn tail_near_zero(&self, form: TailForm) -> f64 {
        let d = &self.at_shat;
        let r = self.shat * d.k2.sqrt();
        let l3 = d.k3 / d.k2.powf(1.5);
        let l4 = d.k4 / (d.k2 * d.k2);
        let z = self.zhat;
        match form {
            TailForm::BarndorffNielsen => normal::sf(z + l3 / 6.0 - r * (l4 / 24.0 - l3 * l3 / 18.0)),
            TailForm::LugannaniRice => {
                normal::sf(z) + normal::pdf(z) * (-l3 / 6.0 + r * (l4 - l3 * l3) / 24.0)
            }
        }
    }

    /// `(y − μ)/ŝ`, with its limit `K''(0)` at `ŝ = 0`.
    pub fn shift_ratio(&self) -> f64 {
        if self.switch_variable() < NEAR_ZERO {
            let d = &self.at_shat;
            let s = self.shat;
            d.k2 - 0.5 * s * d.k3 + s * s * d.k4 / 6.0
        } else {
            (self.y - self.mean()) / self.shat
        }
    }

    /// `(μ P[Y ⋗ y], ((y − μ)/ŝ) f(y))`.
    pub fn esf_terms(&self, opts: SaddleOptions) -> (f64, f64) {
        let tail_term = self.mean() * self.tail(opts.tail_form);
        let density_term = self.shift_ratio() * self.density(opts.density_correction);
        (tail_term, density_term)
    }

    /// `E[Y 1{Y ⋗ y}]` (upper) or `E[Y 1{Y ⋖ y}]` (lower).
    pub fn partial_expectation(&self, side: Side, opts: SaddleOptions) -> f64 {
        let p = self.tail_side(opts.tail_form, side);
        let d = self.shift_ratio() * self.density(opts.density_correction);
        self.mean() * p + side.sign() * d
    }

    /// `E[Y | Y ⋗ y]` or `E[Y | Y ⋖ y]`.
    pub fn expected_shortfall(&self, side: Side, opts: SaddleOptions) -> f64 {
        self.partial_expectation(side, opts) / self.tail_side(opts.tail_form, side)
    }

    /// `(E[(Y − y)⁺], E[(y − Y)⁺])`; the pair satisfies put-call parity by construction.
    pub fn tranche(&self, opts: SaddleOptions) -> (f64, f64) {
        let up = self.tail(opts.tail_form);
        let dn = 1.0 - up;
        let d = self.shift_ratio() * self.density(opts.density_correction);
        let gap = self.mean() - self.y;
        (gap * up + d, -gap * dn + d)
    }
}

/// `ẑ = sign(ŝ)√(2(ŝy − K(ŝ)))`, using the Taylor form of `ŝK'(ŝ) − K(ŝ)` near zero.
fn companion(y: f64, shat: f64, d: &Derivs) -> f64 {
    if shat == 0.0 {
        return 0.0;
    }
    let r = shat * d.k2.sqrt();
    let h = if r.abs() < NEAR_ZERO {
        let s2 = shat * shat;
        s2 * (0.5 * d.k2 - shat * d.k3 / 6.0 + s2 * d.k4 / 24.0)
    } else {
        shat * y - d.k0
    };
    shat.signum() * (2.0 * h.max(0.0)).sqrt()
}

/// Second differences of `ln P` on an equally spaced grid; all negative for a
/// log-concave tail.
pub fn log_second_differences(tails: &[f64]) -> Vec<f64> {
    tails
        .windows(3)
        .map(|w| w[2].ln() - 2.0 * w[1].ln() + w[0].ln())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgf::{BernoulliSum, CompoundPoissonGammaKgf, GammaKgf, NormalKgf};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn normal_saddlepoint_is_immediate() {
        let k = NormalKgf { mean: 1.0, sd: 2.0 };
        let (s, it) = solve_saddlepoint_counted(&k, 4.0).unwrap();
        assert_eq!(s, 0.75);
        assert_eq!(it, 1);
    }

    #[test]
    fn mean_gives_zero() {
        let k = BernoulliSum::new(vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3]);
        let s = solve_saddlepoint(&k, k.mean()).unwrap();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn compound_matches_algebraic_root() {
        let k = CompoundPoissonGammaKgf { rate: 1.0, shape: 1.0, scale: 0.5 };
        for y in [0.05, 0.3, 2.0, 6.0, 25.0] {
            let s = solve_saddlepoint(&k, y).unwrap();
            assert!((s - k.algebraic_saddlepoint(y)).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn out_of_range_thresholds() {
        let k = BernoulliSum::new(vec![1.0, 2.0], vec![0.1, 0.2]);
        for y in [-1.0, 0.0, 3.0, 4.0] {
            assert!(matches!(solve_saddlepoint(&k, y), Err(Error::OutOfRange { .. })));
        }
    }

    #[test]
    fn converges_quickly_and_far_out() {
        let a: Vec<f64> = (0..100).map(|i| 1.0 + (i % 7) as f64).collect();
        let p: Vec<f64> = (0..100).map(|i| 0.002 + 0.0003 * i as f64).collect();
        let k = BernoulliSum::new(a.clone(), p);
        let max: f64 = a.iter().sum();
        let mut total = 0;
        let mut n = 0;
        for frac in [0.02, 0.05, 0.1, 0.2, 0.5, 0.9, 0.999, 0.999_999] {
            let y = frac * max;
            let (s, it) = solve_saddlepoint_counted(&k, y).unwrap();
            let tol = (1e-12 * k.variance().sqrt()).max(1e-14 * y);
            assert!((k.eval(s).k1 - y).abs() <= tol, "frac={frac}");
            total += it;
            n += 1;
        }
        assert!(total as f64 / n as f64 <= 12.0, "mean iterations {}", total as f64 / n as f64);
    }

    #[test]
    fn exponential_density_at_mean() {
        let k = GammaKgf { shape: 1.0, scale: 1.0 };
        let sol = SaddleSolution::new(&k, 1.0).unwrap();
        let base = sol.density(false);
        assert!((base - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((base / (-1.0f64).exp() - 1.084_438).abs() < 1e-6);
        assert!((sol.correction_term() + 1.0 / 12.0).abs() < 1e-12);
        assert!((sol.density(true) - base * 11.0 / 12.0).abs() < 1e-15);
        // the correction leaves (11/12)·e/√(2π) − 1 ≈ −0.593% against e⁻¹
        let ratio = sol.density(true) / (-1.0f64).exp();
        assert!((ratio - 11.0 / 12.0 * std::f64::consts::E / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((ratio - 1.0).abs() < 0.006);
    }

    #[test]
    fn normal_tail_is_exact() {
        let k = NormalKgf { mean: 0.0, sd: 1.0 };
        for y in [-3.0, -0.5, 0.2, 1.7, 4.0] {
            let sol = SaddleSolution::new(&k, y).unwrap();
            for form in [TailForm::LugannaniRice, TailForm::BarndorffNielsen] {
                assert!((sol.tail(form) - normal::sf(y)).abs() < 1e-14, "y={y}");
            }
            assert!((sol.density(true) - normal::pdf(y)).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_at_mean_uses_skewness() {
        let k = BernoulliSum::new(vec![1.0, 2.0, 5.0], vec![0.1, 0.05, 0.02]);
        let sol = SaddleSolution::new(&k, k.mean()).unwrap();
        let d = k.eval(0.0);
        let l3 = d.k3 / d.k2.powf(1.5);
        assert!((sol.tail(TailForm::BarndorffNielsen) - normal::sf(l3 / 6.0)).abs() < 1e-15);
        assert!((sol.tail(TailForm::LugannaniRice) - (0.5 - normal::pdf(0.0) * l3 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn tail_is_continuous_through_the_mean() {
        let k = BernoulliSum::new(vec![1.0, 2.0, 5.0, 3.0], vec![0.1, 0.05, 0.02, 0.2]);
        let sd = k.variance().sqrt();
        let mu = k.mean();
        // sweep u across the switch and blend zones; each step should move the
        // tail by about density × step, with no jumps at the switch points
        let step = 5e-5 * sd;
        let slope = SaddleSolution::new(&k, mu).unwrap().density(true) * step;
        for form in [TailForm::LugannaniRice, TailForm::BarndorffNielsen] {
            let mut last = SaddleSolution::new(&k, mu - 401.0 * step).unwrap().tail(form);
            for i in -400..=400 {
                let t = SaddleSolution::new(&k, mu + i as f64 * step).unwrap().tail(form);
                let jump = last - t;
                assert!(jump > 0.0 && jump < 1.5 * slope, "{form:?} i={i} jump={jump:e}");
                last = t;
            }
        }
    }

    #[test]
    fn gamma_tail_against_incomplete_gamma() {
        let k = GammaKgf { shape: 2.0, scale: 1.0 };
        let sol = SaddleSolution::new(&k, 4.0).unwrap();
        let exact = 0.091_578_194_443_670_9; // Q(2, 4)
        let bn = sol.tail(TailForm::BarndorffNielsen);
        let lr = sol.tail(TailForm::LugannaniRice);
        assert!(rel(bn, exact) < 0.01, "bn={bn}");
        assert!(rel(lr, exact) < 0.01, "lr={lr}");
    }

    #[test]
    fn normal_esf_and_tranche() {
        let k = NormalKgf { mean: 0.0, sd: 1.0 };
        let opts = SaddleOptions::default();
        let y = 1.644_853_626_951_472_2;
        let sol = SaddleSolution::new(&k, y).unwrap();
        assert!((sol.expected_shortfall(Side::Upper, opts) - 2.062_712_807_507_427_8).abs() < 1e-12);

        let sol = SaddleSolution::new(&k, 0.5).unwrap();
        let (call, put) = sol.tranche(opts);
        assert!((call - 0.197_796_557_401_306).abs() < 1e-13);
        assert!((call - put - (0.0 - 0.5)).abs() < 1e-15);

        // symmetric distribution at its mean
        let k = NormalKgf { mean: 3.0, sd: 2.0 };
        let sol = SaddleSolution::new(&k, 3.0).unwrap();
        assert!((sol.partial_expectation(Side::Upper, opts) - 1.5 - 2.0 * normal::pdf(0.0)).abs() < 1e-14);
        let (tail_term, _) = sol.esf_terms(opts);
        assert!((tail_term - 1.5).abs() < 1e-15);
    }

    #[test]
    fn exponential_partial_expectation() {
        // E[Y 1{Y > 2}] = 3 e^{-2} for Exp(1)
        let k = GammaKgf { shape: 1.0, scale: 1.0 };
        let sol = SaddleSolution::new(&k, 2.0).unwrap();
        let exact = 3.0 * (-2.0f64).exp();
        let approx = sol.partial_expectation(Side::Upper, SaddleOptions { density_correction: true, ..Default::default() });
        assert!(rel(approx, exact) < 0.02, "{approx} vs {exact}");
    }

    #[test]
    fn conditional_tail_is_log_concave() {
        let k = BernoulliSum::new(vec![9., 8., 18., 9., 8., 20., 17., 16., 12., 12.], vec![0.1; 10]);
        let ys: Vec<f64> = (0..60).map(|i| 3.0 + 2.0 * i as f64).collect();
        let tails: Vec<f64> = ys
            .iter()
            .map(|&y| SaddleSolution::new(&k, y).unwrap().tail(TailForm::LugannaniRice))
            .collect();
        assert!(tails.windows(2).all(|w| w[1] < w[0]));
        assert!(log_second_differences(&tails).iter().all(|&d| d < 0.0));
    }

    #[test]
    fn density_is_minus_tail_slope() {
        let book10 = BernoulliSum::new(vec![9., 8., 18., 9., 8., 20., 17., 16., 12., 12.], vec![0.1; 10]);
        let mixed = BernoulliSum::new((1..=30).map(|i| (i % 5 + 1) as f64).collect(), vec![0.05; 30]);
        for k in [book10, mixed] {
            for target in [0.1, 0.05, 0.01, 0.005] {
                let mut y = k.mean();
                while SaddleSolution::new(&k, y).unwrap().tail(TailForm::BarndorffNielsen) > target {
                    y += 0.01;
                }
                let h = 1e-4;
                let up = SaddleSolution::new(&k, y + h).unwrap().tail(TailForm::BarndorffNielsen);
                let dn = SaddleSolution::new(&k, y - h).unwrap().tail(TailForm::BarndorffNielsen);
                let f = SaddleSolution::new(&k, y).unwrap().density(true);
                assert!(rel(-(up - dn) / (2.0 * h), f) < 0.02, "target={target}");
            }
        }
    }
}
