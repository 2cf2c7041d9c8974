//! Portfolios, assets and one-factor coupling models.
//!
//! Every model is written against a standard Normal risk factor `V`. A higher
//! factor value is a better state: conditional default probabilities are
//! non-increasing in `v` whenever the asset's factor sensitivity is positive.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normal;

/// One obligor.
#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub id: String,
    /// Loss net of recovery if the obligor defaults.
    pub exposure: f64,
    /// Unconditional default probability.
    pub pd: f64,
    /// Factor loading, in `[0, 1)`.
    pub loading: f64,
}

impl Asset {
    pub fn new(id: impl Into<String>, exposure: f64, pd: f64, loading: f64) -> Result<Self> {
        let asset = Asset {
            id: id.into(),
            exposure,
            pd,
            loading,
        };
        asset.validate()?;
        Ok(asset)
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidAsset {
                id: self.id.clone(),
                reason,
            })
        };
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            return fail(format!("exposure must be positive, got {}", self.exposure));
        }
        if !(self.pd > 0.0 && self.pd < 1.0) {
            return fail(format!("pd must lie in (0, 1), got {}", self.pd));
        }
        if !(self.loading >= 0.0 && self.loading < 1.0) {
            return fail(format!("beta must lie in [0, 1), got {}", self.loading));
        }
        Ok(())
    }
}

/// An ordered, non-empty set of assets with per-asset allocation multipliers.
///
/// The effective exposure of asset `j` is `allocation_j * exposure_j`; risk
/// derivatives are taken with respect to these effective exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    assets: Vec<Asset>,
    allocations: Vec<f64>,
}

impl Portfolio {
    pub fn new(assets: Vec<Asset>) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::InvalidInput("portfolio has no assets".into()));
        }
        let mut seen = HashSet::new();
        for a in &assets {
            a.validate()?;
            if !seen.insert(a.id.as_str()) {
                return Err(Error::DuplicateId(a.id.clone()));
            }
        }
        let allocations = vec![1.0; assets.len()];
        Ok(Portfolio {
            assets,
            allocations,
        })
    }

    /// Build a portfolio with generated ids `a1, a2, ...`.
    pub fn from_parts(exposures: &[f64], pds: &[f64], loadings: &[f64]) -> Result<Self> {
        if exposures.len() != pds.len() || exposures.len() != loadings.len() {
            return Err(Error::InvalidInput("length mismatch".into()));
        }
        let assets = exposures
            .iter()
            .zip(pds)
            .zip(loadings)
            .enumerate()
            .map(|(i, ((&a, &p), &b))| Asset::new(format!("a{}", i + 1), a, p, b))
            .collect::<Result<Vec<_>>>()?;
        Portfolio::new(assets)
    }

    /// Homogeneous pd and loading.
    pub fn uniform(exposures: &[f64], pd: f64, loading: f64) -> Result<Self> {
        let n = exposures.len();
        Portfolio::from_parts(exposures, &vec![pd; n], &vec![loading; n])
    }

    pub fn with_allocations(mut self, allocations: Vec<f64>) -> Result<Self> {
        if allocations.len() != self.assets.len() {
            return Err(Error::InvalidInput("allocation length mismatch".into()));
        }
        if let Some(i) = allocations.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::InvalidAsset {
                id: self.assets[i].id.clone(),
                reason: format!("allocation must be positive, got {}", allocations[i]),
            });
        }
        self.allocations = allocations;
        Ok(self)
    }

    /// Same portfolio with every loading replaced by `loading`.
    pub fn with_loading(&self, loading: f64) -> Result<Self> {
        let assets = self
            .assets
            .iter()
            .map(|a| Asset::new(a.id.clone(), a.exposure, a.pd, loading))
            .collect::<Result<Vec<_>>>()?;
        Portfolio::new(assets)?.with_allocations(self.allocations.clone())
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn allocations(&self) -> &[f64] {
        &self.allocations
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    /// Effective exposures `allocation_j * exposure_j`.
    pub fn exposures(&self) -> Vec<f64> {
        self.assets
            .iter()
            .zip(&self.allocations)
            .map(|(a, w)| a.exposure * w)
            .collect()
    }

    pub fn max_loss(&self) -> f64 {
        self.exposures().iter().sum()
    }

    pub fn expected_loss(&self) -> f64 {
        self.exposures()
            .iter()
            .zip(&self.assets)
            .map(|(e, a)| e * a.pd)
            .sum()
    }
}

/// Coupling between the standard Normal factor and conditional default probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorModel {
    /// `p_j(v) = p̄_j`.
    Independent,
    /// `p_j(v) = Φ((Φ⁻¹(p̄_j) − β_j v) / √(1 − β_j²))`.
    GaussianCopula,
    /// `p_j(v) = min(p̄_j · exp(−σ v − σ²/2), 1)`: a unit-mean lognormal scaling
    /// of the default probabilities.
    CreditRiskPlusScaled { sigma: f64 },
}

impl FactorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FactorModel::CreditRiskPlusScaled { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::InvalidInput(format!("sigma_f must be >= 0, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn conditional_pd(&self, asset: &Asset, v: f64) -> f64 {
        match *self {
            FactorModel::Independent => asset.pd,
            FactorModel::GaussianCopula => {
                gaussian_pd(normal::quantile(asset.pd), asset.pd, asset.loading, v)
            }
            FactorModel::CreditRiskPlusScaled { sigma } => {
                (asset.pd * lognormal_scale(sigma, v)).min(1.0)
            }
        }
    }

    /// Precompute the per-asset constants needed to evaluate `p_j(v)` quickly.
    pub fn coupling(&self, portfolio: &Portfolio) -> Coupling {
        let assets = portfolio.assets();
        Coupling {
            model: *self,
            pd: assets.iter().map(|a| a.pd).collect(),
            loading: assets.iter().map(|a| a.loading).collect(),
            threshold: match self {
                FactorModel::GaussianCopula => {
                    assets.iter().map(|a| normal::quantile(a.pd)).collect()
                }
                _ => Vec::new(),
            },
        }
    }
}

fn gaussian_pd(threshold: f64, pd: f64, beta: f64, v: f64) -> f64 {
    if beta == 0.0 {
        return pd;
    }
    normal::cdf((threshold - beta * v) / (1.0 - beta * beta).sqrt())
}

fn lognormal_scale(sigma: f64, v: f64) -> f64 {
    (-sigma * v - 0.5 * sigma * sigma).exp()
}

/// Conditional default probabilities of one portfolio under one model.
#[derive(Debug, Clone)]
pub struct Coupling {
    model: FactorModel,
    pd: Vec<f64>,
    loading: Vec<f64>,
    threshold: Vec<f64>,
}

impl Coupling {
    pub fn model(&self) -> FactorModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.pd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pd.is_empty()
    }

    pub fn pds(&self, v: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.pd.len()];
        self.fill(v, &mut out);
        out
    }

    pub fn fill(&self, v: f64, out: &mut [f64]) {
        match self.model {
            FactorModel::Independent => out.copy_from_slice(&self.pd),
            FactorModel::GaussianCopula => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = gaussian_pd(self.threshold[j], self.pd[j], self.loading[j], v);
                }
            }
            FactorModel::CreditRiskPlusScaled { sigma } => {
                let g = lognormal_scale(sigma, v);
                for (o, &p) in out.iter_mut().zip(&self.pd) {
                    *o = (p * g).min(1.0);
                }
            }
        }
    }

    /// `dp_j/dv` at `v`.
    pub fn pd_slopes(&self, v: f64) -> Vec<f64> {
        match self.model {
            FactorModel::Independent => vec![0.0; self.pd.len()],
            FactorModel::GaussianCopula => (0..self.pd.len())
                .map(|j| {
                    let b = self.loading[j];
                    if b == 0.0 {
                        return 0.0;
                    }
                    let s = (1.0 - b * b).sqrt();
                    -normal::pdf((self.threshold[j] - b * v) / s) * b / s
                })
                .collect(),
            FactorModel::CreditRiskPlusScaled { sigma } => {
                let g = lognormal_scale(sigma, v);
                self.pd
                    .iter()
                    .map(|&p| if p * g < 1.0 { -sigma * p * g } else { 0.0 })
                    .collect()
            }
        }
    }
}

#[derive(Debug, serde::Deserialize)]
struct Row {
    id: String,
    exposure: f64,
    pd: f64,
    beta: f64,
}

/// Read a portfolio CSV with header `id,exposure,pd,beta`.
pub fn load_portfolio(path: impl AsRef<Path>) -> Result<Portfolio> {
    let file = std::fs::File::open(path.as_ref())?;
    read_portfolio(file)
}

/// Parse portfolio CSV from any reader.
pub fn read_portfolio<R: std::io::Read>(reader: R) -> Result<Portfolio> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let expected = ["id", "exposure", "pd", "beta"];
    if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `id,exposure,pd,beta`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut assets = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec.deserialize(None).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::DuplicateId(row.id));
        }
        assets.push(Asset::new(row.id, row.exposure, row.pd, row.beta)?);
    }
    Portfolio::new(assets)
}
