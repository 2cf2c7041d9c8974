//! Browser front end: three calls over a small portfolio typed into the page.
//! The `*_rows` functions hold the logic and run natively in the tests; the
//! exported wrappers only translate errors for JavaScript.

use saddlerisk::contrib::risk_report;
use saddlerisk::mixer::{clt_tail, solve_var, Method, Mixture};
use saddlerisk::model::{FactorModel, Portfolio};
use saddlerisk::oracle::mixed_exact;
use saddlerisk::quadrature::Quadrature;
use saddlerisk::saddle::{SaddleOptions, Side};
use wasm_bindgen::prelude::*;

const NODES: usize = 48;

fn portfolio(exposures: &[f64], pds: &[f64], beta: f64) -> Result<Portfolio, String> {
    if exposures.len() != pds.len() {
        return Err(format!("{} exposures but {} pds", exposures.len(), pds.len()));
    }
    Portfolio::from_parts(exposures, pds, &vec![beta; exposures.len()]).map_err(|e| e.to_string())
}

fn model(beta: f64) -> FactorModel {
    if beta == 0.0 {
        FactorModel::Independent
    } else {
        FactorModel::GaussianCopula
    }
}

/// Rows of `(y, saddlepoint, clt, exact)` upper tails at `points` thresholds
/// across the loss range, flattened. The exact column is NaN when the
/// exposures are not on a lattice.
pub fn tail_rows(exposures: &[f64], pds: &[f64], beta: f64, points: usize) -> Result<Vec<f64>, String> {
    let pf = portfolio(exposures, pds, beta)?;
    let m = model(beta);
    let quad = Quadrature::gauss_hermite(NODES);
    let exact = mixed_exact(&pf, &m, &quad).ok();
    let top = pf.max_loss();
    let mut out = Vec::with_capacity(4 * points);
    for k in 1..=points {
        let y = top * k as f64 / (points + 1) as f64;
        let sp = Mixture::new(&pf, &m, &quad, y, SaddleOptions::default())
            .map_err(|e| e.to_string())?
            .tail(Side::Upper);
        let clt = clt_tail(&pf, &m, &quad, y);
        out.extend([y, sp, clt, exact.as_ref().map_or(f64::NAN, |g| g.tail(y))]);
    }
    Ok(out)
}

/// `[VaR, ESF, CLT VaR]` at upper tail probability `level`.
pub fn var_esf_row(exposures: &[f64], pds: &[f64], beta: f64, level: f64) -> Result<Vec<f64>, String> {
    let pf = portfolio(exposures, pds, beta)?;
    let m = model(beta);
    let quad = Quadrature::gauss_hermite(NODES);
    let opts = SaddleOptions::default();
    let var = solve_var(&pf, &m, &quad, level, Method::Saddlepoint, opts).map_err(|e| e.to_string())?;
    let esf = Mixture::new(&pf, &m, &quad, var, opts)
        .and_then(|mix| mix.esf(Side::Upper))
        .map_err(|e| e.to_string())?;
    let clt = solve_var(&pf, &m, &quad, level, Method::Clt, opts).map_err(|e| e.to_string())?;
    Ok(vec![var, esf, clt])
}

/// Per asset `(var_delta, esf_systematic, esf_unsystematic)`, flattened.
pub fn contribution_rows(exposures: &[f64], pds: &[f64], beta: f64, level: f64) -> Result<Vec<f64>, String> {
    let pf = portfolio(exposures, pds, beta)?;
    let quad = Quadrature::gauss_hermite(NODES);
    let r = risk_report(&pf, &model(beta), &quad, level, Method::Saddlepoint, SaddleOptions::default())
        .map_err(|e| e.to_string())?;
    Ok((0..pf.len())
        .flat_map(|j| [r.var_delta[j], r.esf_delta_systematic[j], r.esf_delta_unsystematic[j]])
        .collect())
}

#[wasm_bindgen]
pub fn tail_curve(exposures: &[f64], pds: &[f64], beta: f64, points: usize) -> Result<Vec<f64>, JsError> {
    tail_rows(exposures, pds, beta, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn var_esf(exposures: &[f64], pds: &[f64], beta: f64, level: f64) -> Result<Vec<f64>, JsError> {
    var_esf_row(exposures, pds, beta, level).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn contributions(exposures: &[f64], pds: &[f64], beta: f64, level: f64) -> Result<Vec<f64>, JsError> {
    contribution_rows(exposures, pds, beta, level).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXPOSURES: [f64; 10] = [9.0, 8.0, 18.0, 9.0, 8.0, 20.0, 17.0, 16.0, 12.0, 12.0];

    #[test]
    fn tail_curve_is_decreasing_and_close_to_exact() {
        let rows = tail_rows(&EXPOSURES, &[0.1; 10], 0.0, 40).unwrap();
        assert_eq!(rows.len(), 160);
        let sp: Vec<f64> = rows.chunks(4).map(|r| r[1]).collect();
        assert!(sp.windows(2).all(|w| w[1] <= w[0]));
        assert!(sp[sp.len() - 1] < 1e-3 * sp[0]);
        for r in rows.chunks(4).filter(|r| r[3] > 1e-3) {
            assert!(r[1].is_finite() && r[3].is_finite());
        }
    }

    #[test]
    fn var_and_esf_are_ordered() {
        let v = var_esf_row(&EXPOSURES, &[0.1; 10], 0.5, 0.01).unwrap();
        assert!(v[1] > v[0] && v[0] > 0.0 && v[2] > 0.0);
    }

    #[test]
    fn contributions_add_up() {
        let level = 0.01;
        let v = var_esf_row(&EXPOSURES, &[0.1; 10], 0.5, level).unwrap();
        let c = contribution_rows(&EXPOSURES, &[0.1; 10], 0.5, level).unwrap();
        let var: f64 = c.chunks(3).zip(EXPOSURES).map(|(d, a)| a * d[0]).sum();
        let esf: f64 = c.chunks(3).zip(EXPOSURES).map(|(d, a)| a * (d[1] + d[2])).sum();
        assert!((var / v[0] - 1.0).abs() < 1e-9);
        assert!((esf / v[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(tail_rows(&[1.0, 2.0], &[0.1], 0.0, 5).is_err());
        assert!(var_esf_row(&[1.0], &[1.5], 0.0, 0.01).is_err());
    }
}
