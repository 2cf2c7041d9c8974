//! Reference answers: lattice convolution, exhaustive enumeration, closed-form
//! families and Monte Carlo simulation.
//!
//! Discrete tails use the same continuity convention as the saddlepoint code,
//! `P[Y ⋗ y] = P[Y > y] + ½ P[Y = y]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{FactorModel, Portfolio};
use crate::normal;
use crate::quadrature::Quadrature;

/// Loss distribution on the lattice `0, q, 2q, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid {
    quantum: f64,
    probs: Vec<f64>,
}

/// Exposures as integer multiples of `quantum`.
pub fn lattice_cells(exposures: &[f64], quantum: f64) -> Result<Vec<usize>> {
    exposures
        .iter()
        .map(|&a| {
            let k = a / quantum;
            let r = k.round();
            if r < 1.0 || (k - r).abs() > 1e-9 * k.abs() {
                Err(Error::NonIntegerExposure { exposure: a, quantum })
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}

impl LossGrid {
    /// Exact distribution of `Σ a_j B_j`, `B_j ~ Bernoulli(p_j)` independent,
    /// built up one asset at a time.
    pub fn convolve(exposures: &[f64], pds: &[f64], quantum: f64) -> Result<Self> {
        let cells = lattice_cells(exposures, quantum)?;
        let total: usize = cells.iter().sum();
        let mut probs = vec![0.0; total + 1];
        probs[0] = 1.0;
        let mut top = 0;
        for (&k, &p) in cells.iter().zip(pds) {
            top += k;
            for i in (0..=top).rev() {
                let shifted = if i >= k { probs[i - k] * p } else { 0.0 };
                probs[i] = probs[i] * (1.0 - p) + shifted;
            }
        }
        Ok(LossGrid { quantum, probs })
    }

    /// Mixture `Σ w_k G_k` of grids on the same lattice.
    pub fn mix(parts: &[(f64, LossGrid)]) -> Self {
        let len = parts.iter().map(|(_, g)| g.probs.len()).max().unwrap_or(1);
        let mut probs = vec![0.0; len];
        for (w, g) in parts {
            for (o, p) in probs.iter_mut().zip(&g.probs) {
                *o += w * p;
            }
        }
        LossGrid {
            quantum: parts.first().map_or(1.0, |(_, g)| g.quantum),
            probs,
        }
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    /// `P[Y = k q]` for `k = 0..`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * self.quantum * p)
            .sum()
    }

    fn cell(&self, y: f64) -> (f64, bool) {
        let x = y / self.quantum;
        let r = x.round();
        (x, (x - r).abs() <= 1e-9 * x.abs().max(1.0))
    }

    /// `P[Y > y]`.
    pub fn exceedance(&self, y: f64) -> f64 {
        let (x, on) = self.cell(y);
        let first = if x < 0.0 {
            0
        } else if on {
            x.round() as usize + 1
        } else {
            x.floor() as usize + 1
        };
        self.probs.iter().skip(first).sum()
    }

    /// `P[Y ⋗ y]`.
    pub fn tail(&self, y: f64) -> f64 {
        let (x, on) = self.cell(y);
        let at = if on && x >= 0.0 {
            self.probs.get(x.round() as usize).copied().unwrap_or(0.0)
        } else {
            0.0
        };
        self.exceedance(y) + 0.5 * at
    }

    /// `E[Y 1{Y ⋗ y}]`.
    pub fn partial_expectation(&self, y: f64) -> f64 {
        let (x, on) = self.cell(y);
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let l = k as f64;
                let w = if on && (l - x).abs() < 0.5 {
                    0.5
                } else if l > x {
                    1.0
                } else {
                    0.0
                };
                w * l * self.quantum * p
            })
            .sum()
    }

    /// `E[Y | Y ⋗ y]`.
    pub fn esf(&self, y: f64) -> f64 {
        self.partial_expectation(y) / self.tail(y)
    }

    /// Threshold at which the continuity-corrected tail, linearly interpolated
    /// between lattice points, equals `p`.
    pub fn var(&self, p: f64) -> Result<f64> {
        let n = self.probs.len();
        let mut above = 1.0 - self.probs[0];
        let mut prev = above + 0.5 * self.probs[0];
        if p >= prev {
            return Err(Error::BracketFailure { target: p, lo: 0.0, hi: (n - 1) as f64 * self.quantum });
        }
        for k in 1..n {
            above -= self.probs[k];
            let t = above.max(0.0) + 0.5 * self.probs[k];
            if t <= p {
                let frac = (prev - p) / (prev - t);
                return Ok((k as f64 - 1.0 + frac) * self.quantum);
            }
            prev = t;
        }
        Err(Error::BracketFailure { target: p, lo: 0.0, hi: (n - 1) as f64 * self.quantum })
    }

    /// Lattice point whose continuity-corrected tail is closest to `p` in log terms.
    pub fn nearest_level(&self, p: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..self.probs.len() {
            let y = k as f64 * self.quantum;
            let t = self.tail(y);
            if t > 0.0 {
                let d = (t.ln() - p.ln()).abs();
                if d < best.0 {
                    best = (d, y);
                }
            }
        }
        best.1
    }
}

/// Exact distribution of an independent portfolio at the given default probabilities.
pub fn convolve_independent(portfolio: &Portfolio, pds: &[f64]) -> Result<LossGrid> {
    LossGrid::convolve(&portfolio.exposures(), pds, 1.0)
}

/// Factor-mixed convolution: exact up to quadrature error.
pub fn mixed_exact(portfolio: &Portfolio, model: &FactorModel, quad: &Quadrature) -> Result<LossGrid> {
    let exposures = portfolio.exposures();
    if matches!(model, FactorModel::Independent) {
        let pds: Vec<f64> = portfolio.assets().iter().map(|a| a.pd).collect();
        return LossGrid::convolve(&exposures, &pds, 1.0);
    }
    let coupling = model.coupling(portfolio);
    let parts = crate::par::map(quad.nodes(), |&v| LossGrid::convolve(&exposures, &coupling.pds(v), 1.0))
        .into_iter()
        .zip(quad.weights())
        .map(|(g, &w)| g.map(|g| (w, g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LossGrid::mix(&parts))
}

const MAX_ENUMERATION: usize = 24;

/// Walk all `2ⁿ` default patterns, calling `f(mask, loss_cells, probability)`.
fn enumerate(cells: &[usize], pds: &[f64], mut f: impl FnMut(u32, usize, f64)) -> Result<()> {
    let n = cells.len();
    if n > MAX_ENUMERATION {
        return Err(Error::InvalidInput(format!("enumeration over {n} assets is too large")));
    }
    for mask in 0u32..(1u32 << n) {
        let mut prob = 1.0;
        let mut loss = 0;
        for j in 0..n {
            if mask >> j & 1 == 1 {
                prob *= pds[j];
                loss += cells[j];
            } else {
                prob *= 1.0 - pds[j];
            }
        }
        f(mask, loss, prob);
    }
    Ok(())
}

fn integer_level(y: f64) -> Result<usize> {
    if y < 0.0 || (y - y.round()).abs() > 1e-9 {
        return Err(Error::ImpossibleLoss { y });
    }
    Ok(y.round() as usize)
}

/// Distribution by enumeration (unit lattice).
pub fn enumerate_distribution(exposures: &[f64], pds: &[f64]) -> Result<LossGrid> {
    let cells = lattice_cells(exposures, 1.0)?;
    let mut probs = vec![0.0; cells.iter().sum::<usize>() + 1];
    enumerate(&cells, pds, |_, l, p| probs[l] += p)?;
    Ok(LossGrid { quantum: 1.0, probs })
}

/// `E[B_j | Y = y]` for every asset, where `B_j` is the default indicator.
pub fn exact_var_delta(exposures: &[f64], pds: &[f64], y: f64) -> Result<Vec<f64>> {
    let cells = lattice_cells(exposures, 1.0)?;
    let target = integer_level(y)?;
    let n = cells.len();
    let mut hits = 0usize;
    let mut mass = 0.0;
    let mut acc = vec![0.0; n];
    enumerate(&cells, pds, |mask, l, p| {
        if l == target {
            hits += 1;
            mass += p;
            for (j, a) in acc.iter_mut().enumerate() {
                if mask >> j & 1 == 1 {
                    *a += p;
                }
            }
        }
    })?;
    if hits == 0 || mass == 0.0 {
        return Err(Error::ImpossibleLoss { y });
    }
    Ok(acc.into_iter().map(|a| a / mass).collect())
}

/// `E[B_j | Y ⋗ y]`, with half weight on outcomes exactly at `y`.
pub fn exact_esf_delta(exposures: &[f64], pds: &[f64], y: f64) -> Result<Vec<f64>> {
    let cells = lattice_cells(exposures, 1.0)?;
    let n = cells.len();
    let mut mass = 0.0;
    let mut acc = vec![0.0; n];
    enumerate(&cells, pds, |mask, l, p| {
        let lf = l as f64;
        let w = if (lf - y).abs() < 1e-9 {
            0.5
        } else if lf > y {
            1.0
        } else {
            0.0
        };
        if w > 0.0 {
            mass += w * p;
            for (j, a) in acc.iter_mut().enumerate() {
                if mask >> j & 1 == 1 {
                    *a += w * p;
                }
            }
        }
    })?;
    if mass == 0.0 {
        return Err(Error::DegenerateTail { prob: 0.0 });
    }
    Ok(acc.into_iter().map(|a| a / mass).collect())
}

/// `Cov[B_j, B_k | Y = y]`.
pub fn exact_conditional_cov(exposures: &[f64], pds: &[f64], y: f64) -> Result<DMatrix<f64>> {
    let cells = lattice_cells(exposures, 1.0)?;
    let target = integer_level(y)?;
    let n = cells.len();
    let mut mass = 0.0;
    let mut first = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    enumerate(&cells, pds, |mask, l, p| {
        if l == target {
            mass += p;
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    first[j] += p;
                    for k in 0..n {
                        if mask >> k & 1 == 1 {
                            second[(j, k)] += p;
                        }
                    }
                }
            }
        }
    })?;
    if mass == 0.0 {
        return Err(Error::ImpossibleLoss { y });
    }
    Ok(DMatrix::from_fn(n, n, |j, k| {
        second[(j, k)] / mass - first[j] * first[k] / (mass * mass)
    }))
}

/// Closed-form reference distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticFamily {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    /// Poisson(`rate`) count of Gamma(`shape`, `scale`) losses.
    CompoundPoissonGamma { rate: f64, shape: f64, scale: f64 },
}

/// Density, `P[Y > y]` and `E[Y | Y > y]` at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyPoint {
    pub density: f64,
    pub tail: f64,
    pub esf: f64,
}

fn gamma_pdf(shape: f64, scale: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * y.ln() - y / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

impl AnalyticFamily {
    pub fn mean(&self) -> f64 {
        match *self {
            AnalyticFamily::Normal { mean, .. } => mean,
            AnalyticFamily::Exponential { rate } => 1.0 / rate,
            AnalyticFamily::Gamma { shape, scale } => shape * scale,
            AnalyticFamily::CompoundPoissonGamma { rate, shape, scale } => rate * shape * scale,
        }
    }

    /// Point mass at zero (compound family only).
    pub fn zero_mass(&self) -> f64 {
        match *self {
            AnalyticFamily::CompoundPoissonGamma { rate, .. } => (-rate).exp(),
            _ => 0.0,
        }
    }

    /// Reference values at `y`. For the compound family at `y = 0` the tail is
    /// `P[Y > 0] = 1 − e^{−θ}` and the density is that of the continuous part.
    pub fn at(&self, y: f64) -> FamilyPoint {
        match *self {
            AnalyticFamily::Normal { mean, sd } => {
                let z = (y - mean) / sd;
                let tail = normal::sf(z);
                let part = mean * tail + sd * normal::pdf(z);
                FamilyPoint {
                    density: normal::pdf(z) / sd,
                    tail,
                    esf: part / tail,
                }
            }
            AnalyticFamily::Exponential { rate } => FamilyPoint {
                density: rate * (-rate * y).exp(),
                tail: (-rate * y).exp(),
                esf: y + 1.0 / rate,
            },
            AnalyticFamily::Gamma { shape, scale } => {
                let tail = gamma_ur(shape, y / scale);
                FamilyPoint {
                    density: gamma_pdf(shape, scale, y),
                    tail,
                    esf: shape * scale * gamma_ur(shape + 1.0, y / scale) / tail,
                }
            }
            AnalyticFamily::CompoundPoissonGamma { rate, shape, scale } => {
                compound_series(rate, shape, scale, y)
            }
        }
    }
}

/// Sum over the Poisson count of Gamma(rα, β) densities and tails.
fn compound_series(rate: f64, shape: f64, scale: f64, y: f64) -> FamilyPoint {
    let x = y.max(0.0) / scale;
    let mut density = 0.0;
    let mut tail = 0.0;
    let mut part = 0.0;
    let mut log_w = -rate; // ln P[N = 0]
    for r in 1..100_000usize {
        let rf = r as f64;
        log_w += rate.ln() - rf.ln();
        let w = log_w.exp();
        let a = rf * shape;
        let (dt, tt, pt) = if y > 0.0 {
            (
                w * gamma_pdf(a, scale, y),
                w * gamma_ur(a, x),
                w * a * scale * gamma_ur(a + 1.0, x),
            )
        } else {
            (0.0, w, w * a * scale)
        };
        density += dt;
        tail += tt;
        part += pt;
        // past the Poisson mode every later term is bounded by a geometric tail
        if rf > rate && w * (1.0 + a * scale) < 1e-16 * tail.max(1e-300) {
            break;
        }
    }
    FamilyPoint {
        density,
        tail,
        esf: part / tail,
    }
}

/// Empirical loss distribution from simulation.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    losses: Vec<f64>,
}

/// A simulated quantity and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn contains(&self, x: f64, sigmas: f64) -> bool {
        (x - self.value).abs() <= sigmas * self.std_error
    }
}

const BLOCK: usize = 1 << 12;

/// Simulate `paths` portfolio losses.
///
/// Paths are generated in blocks of 4096; block `b` uses a ChaCha8 generator
/// seeded with `seed` on stream `b`, so the result does not depend on how the
/// blocks are scheduled across threads.
pub fn monte_carlo(portfolio: &Portfolio, model: &FactorModel, paths: usize, seed: u64) -> Result<MonteCarlo> {
    if paths < 10_000 {
        return Err(Error::InvalidInput(format!("need at least 10000 paths, got {paths}")));
    }
    let exposures = portfolio.exposures();
    let coupling = model.coupling(portfolio);
    let blocks: Vec<usize> = (0..paths.div_ceil(BLOCK)).collect();
    let chunks = crate::par::map(&blocks, |&b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let count = BLOCK.min(paths - b * BLOCK);
        let mut pds = vec![0.0; exposures.len()];
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v: f64 = rng.sample(StandardNormal);
            coupling.fill(v, &mut pds);
            let mut loss = 0.0;
            for (a, &p) in exposures.iter().zip(&pds) {
                if rng.random::<f64>() < p {
                    loss += a;
                }
            }
            out.push(loss);
        }
        out
    });
    let mut losses: Vec<f64> = chunks.into_iter().flatten().collect();
    losses.sort_unstable_by(f64::total_cmp);
    Ok(MonteCarlo { losses })
}

impl MonteCarlo {
    pub fn paths(&self) -> usize {
        self.losses.len()
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    fn counts(&self, y: f64) -> (usize, usize) {
        let below = self.losses.partition_point(|&l| l < y);
        let upto = self.losses.partition_point(|&l| l <= y);
        (self.losses.len() - upto, upto - below)
    }

    /// `P[Y ⋗ y]` with its binomial standard error.
    pub fn tail(&self, y: f64) -> Estimate {
        let n = self.losses.len() as f64;
        let (above, at) = self.counts(y);
        let p = (above as f64 + 0.5 * at as f64) / n;
        Estimate {
            value: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// `P[Y > y]`.
    pub fn exceedance(&self, y: f64) -> Estimate {
        let n = self.losses.len() as f64;
        let p = self.counts(y).0 as f64 / n;
        Estimate {
            value: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// `E[Y | Y ⋗ y]`; the error is the sample deviation of the tail losses over √count.
    pub fn esf(&self, y: f64) -> Estimate {
        let (above, at) = self.counts(y);
        let upto = self.losses.len() - above;
        let tail = &self.losses[upto..];
        let at_sum = 0.5 * at as f64 * y;
        let mass = above as f64 + 0.5 * at as f64;
        if mass == 0.0 {
            return Estimate { value: f64::NAN, std_error: f64::NAN };
        }
        let mean = (tail.iter().sum::<f64>() + at_sum) / mass;
        let var = tail.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / mass.max(2.0);
        Estimate {
            value: mean,
            std_error: (var / mass).sqrt(),
        }
    }

    /// Smallest simulated loss `l` with `P[Y > l] ≤ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.losses.len();
        let k = ((1.0 - p) * n as f64).ceil() as usize;
        self.losses[k.clamp(1, n) - 1]
    }

    /// Order-statistic band `(lo, hi)` around the upper-`p` quantile at `z` sigmas.
    pub fn quantile_band(&self, p: f64, z: f64) -> (f64, f64) {
        let n = self.losses.len() as f64;
        let centre = (1.0 - p) * n;
        let half = z * (n * p * (1.0 - p)).sqrt();
        let at = |x: f64| self.losses[(x.round().max(1.0) as usize).min(self.losses.len()) - 1];
        (at(centre - half), at(centre + half))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOOK10: [f64; 10] = [9.0, 8.0, 18.0, 9.0, 8.0, 20.0, 17.0, 16.0, 12.0, 12.0];

    #[test]
    fn small_grids() {
        let g = LossGrid::convolve(&[2.0], &[0.3], 1.0).unwrap();
        assert_eq!(g.probs(), &[0.7, 0.0, 0.3]);
        let g = LossGrid::convolve(&[1.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(g.probs(), &[0.25, 0.5, 0.25]);
        assert!(LossGrid::convolve(&[1.5], &[0.5], 1.0).is_err());
        let g = LossGrid::convolve(&[1.5, 3.0], &[0.5, 0.5], 1.5).unwrap();
        assert_eq!(g.probs().len(), 4);
    }

    #[test]
    fn convolution_matches_enumeration() {
        let pds: Vec<f64> = (0..10).map(|i| 0.05 + 0.02 * i as f64).collect();
        let g = LossGrid::convolve(&BOOK10, &pds, 1.0).unwrap();
        let e = enumerate_distribution(&BOOK10, &pds).unwrap();
        assert!((g.total() - 1.0).abs() < 1e-12);
        for (a, b) in g.probs().iter().zip(e.probs()) {
            assert!((a - b).abs() < 1e-15);
            assert_eq!(*a == 0.0, *b == 0.0);
        }
        // 40 reachable, 39 = 9+12+18 reachable, 11 not
        assert!(g.probs()[40] > 0.0);
        assert_eq!(g.probs()[11], 0.0);
    }

    #[test]
    fn continuity_corrected_tail() {
        let g = LossGrid::convolve(&[1.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(g.tail(1.0), 0.25 + 0.25);
        assert_eq!(g.tail(0.5), 0.75);
        assert_eq!(g.exceedance(1.0), 0.25);
        assert!((g.mean() - 1.0).abs() < 1e-15);
        assert!((g.var(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((g.esf(1.0) - (0.25 * 2.0 + 0.5 * 0.5) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn pathology_of_exact_var_delta() {
        let pds = [0.1; 10];
        assert_eq!(exact_var_delta(&BOOK10, &pds, 40.0).unwrap()[0], 0.0);
        assert!(exact_var_delta(&BOOK10, &pds, 38.0).unwrap()[0] > 0.0);
        assert!(exact_var_delta(&BOOK10, &pds, 41.0).unwrap()[0] > 0.0);
        assert_eq!(exact_var_delta(&BOOK10, &pds, 11.0), Err(Error::ImpossibleLoss { y: 11.0 }));
        let mut reduced = BOOK10;
        reduced[0] = 8.0;
        assert!(exact_var_delta(&reduced, &pds, 40.0).unwrap()[0] > 0.0);
        // contributions add up to the loss
        let d = exact_var_delta(&BOOK10, &pds, 41.0).unwrap();
        let sum: f64 = d.iter().zip(&BOOK10).map(|(d, a)| d * a).sum();
        assert!((sum - 41.0).abs() < 1e-12);
        let c = exact_conditional_cov(&BOOK10, &pds, 41.0).unwrap();
        let a = nalgebra::DVector::from_column_slice(&BOOK10);
        assert!((a.transpose() * &c * &a)[(0, 0)].abs() < 1e-10);
    }

    #[test]
    fn exact_esf_delta_is_homogeneous() {
        let pds = [0.1; 10];
        let g = LossGrid::convolve(&BOOK10, &pds, 1.0).unwrap();
        for y in [20.0, 40.0, 55.5] {
            let d = exact_esf_delta(&BOOK10, &pds, y).unwrap();
            let sum: f64 = d.iter().zip(&BOOK10).map(|(d, a)| d * a).sum();
            assert!((sum - g.esf(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_families() {
        let e = AnalyticFamily::Exponential { rate: 1.0 }.at(1.0);
        assert!((e.density - (-1.0f64).exp()).abs() < 1e-16);
        let g = AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }.at(4.0);
        assert!((g.tail - 0.091_578_194_443_670_9).abs() < 1e-15);
        // Q(2,4) = e^{-4}(1 + 4); E[Y 1{Y>4}] = 2 Q(3,4) = 2 e^{-4}(1 + 4 + 8)
        assert!((g.esf * g.tail - 26.0 * (-4.0f64).exp()).abs() < 1e-14);
        // integer shapes against the Poisson-sum form
        for k in 1..12 {
            for x in [0.1, 1.0, 5.0, 20.0] {
                let mut s = 0.0;
                let mut t = 1.0;
                for i in 0..k {
                    if i > 0 {
                        t *= x / i as f64;
                    }
                    s += t;
                }
                let q = s * (-x).exp();
                assert!((gamma_ur(k as f64, x) / q - 1.0).abs() < 1e-12, "k={k} x={x}");
            }
        }
        let c = AnalyticFamily::CompoundPoissonGamma { rate: 1.0, shape: 1.0, scale: 0.5 };
        assert!((c.zero_mass() - (-1.0f64).exp()).abs() < 1e-16);
        assert!((c.at(0.0).tail - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((c.at(0.0).esf * c.at(0.0).tail - c.mean()).abs() < 1e-14);
    }

    #[test]
    fn compound_density_integrates_to_tail() {
        let c = AnalyticFamily::CompoundPoissonGamma { rate: 2.0, shape: 1.5, scale: 0.7 };
        let (a, b) = (1.0, 3.0);
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut s = c.at(a).density + c.at(b).density;
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * c.at(a + i as f64 * h).density;
        }
        let integral = s * h / 3.0;
        assert!((integral - (c.at(a).tail - c.at(b).tail)).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_basics() {
        let pf = Portfolio::uniform(&[1.0], 0.02, 0.0).unwrap();
        let mc = monte_carlo(&pf, &FactorModel::GaussianCopula, 200_000, 7).unwrap();
        let f = mc.exceedance(0.5);
        assert!(f.contains(0.02, 4.0), "{f:?}");
        let again = monte_carlo(&pf, &FactorModel::GaussianCopula, 200_000, 7).unwrap();
        assert_eq!(mc.losses(), again.losses());
        assert!(monte_carlo(&pf, &FactorModel::GaussianCopula, 10, 7).is_err());
    }
}
