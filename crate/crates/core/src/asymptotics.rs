//! Normal-distribution utilities, rate estimates, second-order predictions
//! and finite-n diagnostics for the analytic (Bryc) condition and the CLT.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::models::{alpha_n, beta_n, divergences, e_n_grid, measure, ModelSequence};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of `normal_cdf`: rational approximation refined by one Halley step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level {p} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let tail = |q: f64| {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    let mut x = if p < 0.02425 {
        tail(p)
    } else if p > 1.0 - 0.02425 {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Halley step on cdf(x) - p, via the lower tail for x > 0
    let e = if x > 0.0 { (1.0 - p) - normal_cdf(-x) } else { normal_cdf(x) - p };
    let u = e / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub w_n: f64,
    pub d_n: f64,
    pub v_n: f64,
    pub d_per_w: f64,
    pub v_per_w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateEstimate {
    /// `D_n / w_n` at the last `n`.
    pub d_hat: f64,
    /// `V_n / w_n` at the last `n`.
    pub v_hat: f64,
    pub per_n: Vec<RateRow>,
    /// `(n, D_n - w_n d_hat)`.
    pub delta_d: Vec<(usize, f64)>,
    /// `(n, |D_n/w_n - D_m/w_m|)` for consecutive entries `m < n`.
    pub cauchy_d: Vec<(usize, f64)>,
    pub cauchy_v: Vec<(usize, f64)>,
}

fn successive(rows: &[RateRow], f: impl Fn(&RateRow) -> f64) -> Vec<(usize, f64)> {
    rows.windows(2).map(|w| (w[1].n, (f(&w[1]) - f(&w[0])).abs())).collect()
}

pub fn rate_estimates(model: &dyn ModelSequence, n_list: &[usize]) -> Result<RateEstimate> {
    if n_list.is_empty() {
        return Err(Error::Domain("empty n list".into()));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let per_n = ns
        .par_iter()
        .map(|&n| {
            let (d_n, v_n) = divergences(model, n)?;
            let w_n = model.weight(n);
            Ok(RateRow { n, w_n, d_n, v_n, d_per_w: d_n / w_n, v_per_w: v_n / w_n })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = per_n.last().unwrap();
    let (d_hat, v_hat) = (last.d_per_w, last.v_per_w);
    let delta_d = per_n.iter().map(|r| (r.n, r.d_n - r.w_n * d_hat)).collect();
    Ok(RateEstimate {
        d_hat,
        v_hat,
        delta_d,
        cauchy_d: successive(&per_n, |r| r.d_per_w),
        cauchy_v: successive(&per_n, |r| r.v_per_w),
        per_n,
    })
}

/// `first + sqrt(w_n v) Phi^{-1}(eps)` with `first = w_n d`.
pub fn second_order_prediction(d: f64, v: f64, w_n: f64, eps: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::Domain(format!("variance {v} is negative")));
    }
    let first = w_n * d;
    if v == 0.0 {
        return Ok(first);
    }
    Ok(first + (w_n * v).sqrt() * normal_quantile(eps)?)
}

/// First-order term of the prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstOrder {
    /// `D(rho_n||sigma_n)` at each `n`.
    #[default]
    PerN,
    /// `w_n d` with the rate `d`.
    Rate,
}

/// Where the rates `(d, v)` of the prediction come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// `D_n/w_n`, `V_n/w_n` at the largest `n` of the run.
    #[default]
    LastN,
    /// The model's analytic rates, falling back to `LastN`.
    Model,
    Fixed {
        d: f64,
        v: f64,
    },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExpansionOptions {
    pub first_order: FirstOrder,
    pub rates: RateSource,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionRow {
    pub n: usize,
    pub w_n: f64,
    /// `-log beta_n(eps)`.
    pub exact: f64,
    pub first_order: f64,
    pub second_order_pred: f64,
    pub residual: f64,
    pub residual_over_sqrt_wn: f64,
    /// `None` when `log w_n <= 0`.
    pub residual_over_log_wn: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub eps: f64,
    pub d: f64,
    pub v: f64,
    pub rows: Vec<ExpansionRow>,
}

/// Resolves `(d, v)` for predictions over `n_list`.
pub fn prediction_rates(model: &dyn ModelSequence, n_list: &[usize], source: RateSource) -> Result<(f64, f64)> {
    match source {
        RateSource::Fixed { d, v } => Ok((d, v)),
        RateSource::Model => match model.rate_override() {
            Some(r) => r,
            None => prediction_rates(model, n_list, RateSource::LastN),
        },
        RateSource::LastN => {
            let n = *n_list.iter().max().ok_or_else(|| Error::Domain("empty n list".into()))?;
            let (d_n, v_n) = divergences(model, n)?;
            let w = model.weight(n);
            Ok((d_n / w, v_n / w))
        }
    }
}

/// Compares `-log beta_n(eps)` with the second-order expansion.
pub fn expansion_experiment(
    model: &dyn ModelSequence,
    eps: f64,
    n_list: &[usize],
    opts: ExpansionOptions,
) -> Result<ExpansionReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsilonOutOfRange(eps));
    }
    let (d, v) = prediction_rates(model, n_list, opts.rates)?;
    let shift = if v > 0.0 { v.sqrt() * normal_quantile(eps)? } else { 0.0 };
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let w_n = model.weight(n);
            let exact = -beta_n(model, n, eps)?.ln();
            let first_order = match opts.first_order {
                FirstOrder::PerN => divergences(model, n)?.0,
                FirstOrder::Rate => w_n * d,
            };
            let second_order_pred = first_order + w_n.sqrt() * shift;
            let residual = exact - second_order_pred;
            let log_w = w_n.ln();
            Ok(ExpansionRow {
                n,
                w_n,
                exact,
                first_order,
                second_order_pred,
                residual,
                residual_over_sqrt_wn: residual / w_n.sqrt(),
                residual_over_log_wn: (log_w > 0.0).then(|| residual / log_w),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpansionReport { eps, d, v, rows })
}

/// Envelope `|residual| <= c log w + c0` over `(w, residual)` points: `c` is
/// the least-squares slope of `|residual|` against `log w` (floored at 0),
/// `c0` the smallest offset covering every point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogBand {
    pub c: f64,
    pub c0: f64,
}

impl LogBand {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("a log band needs at least two points".into()));
        }
        let k = points.len() as f64;
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.abs()).collect();
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let c = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
        let c0 = xs.iter().zip(&ys).map(|(x, y)| y - c * x).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { c, c0 })
    }

    pub fn bound(&self, w: f64) -> f64 {
        self.c * w.ln() + self.c0
    }

    pub fn contains(&self, w: f64, residual: f64) -> bool {
        residual.abs() <= self.bound(w)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrycReport {
    pub r: f64,
    pub grid: Vec<C64>,
    /// `max_{n, z} |E_n(z)| / w_n`.
    pub sup_bound: f64,
    /// `(n, max_z |E_n(z)/w_n - E_m(z)/w_m|)` for consecutive `m < n`.
    pub cauchy_decay: Vec<(usize, f64)>,
    pub analytic_ok: bool,
}

/// Square-lattice points of `[-r, r]^2` inside the closed disk of radius `r`.
pub fn disk_grid(r: f64, grid_size: usize) -> Vec<C64> {
    if grid_size <= 1 {
        return vec![C64::new(0.0, 0.0)];
    }
    let step = 2.0 * r / (grid_size - 1) as f64;
    let mut pts = Vec::new();
    for i in 0..grid_size {
        for j in 0..grid_size {
            let z = C64::new(-r + step * i as f64, -r + step * j as f64);
            if z.norm() <= r * (1.0 + 1e-12) {
                pts.push(z);
            }
        }
    }
    pts
}

/// Evaluates `E_n(z)/w_n` on a disk grid for each `n`.
pub fn bryc_check(model: &dyn ModelSequence, r: f64, n_list: &[usize], grid_size: usize) -> Result<BrycReport> {
    if r.is_nan() || r <= 0.0 {
        return Err(Error::Domain(format!("radius {r} must be positive")));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let grid = disk_grid(r, grid_size);
    let values = ns
        .par_iter()
        .map(|&n| {
            let w = model.weight(n);
            Ok(e_n_grid(model, n, &grid)?.into_iter().map(|e| e / w).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let analytic_ok = values.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite());
    let sup_bound = values.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    let cauchy_decay = values
        .windows(2)
        .zip(ns.iter().skip(1))
        .map(|(w, &n)| {
            let diff = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            (n, diff)
        })
        .collect();
    Ok(BrycReport { r, grid, sup_bound, cauchy_decay, analytic_ok })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CltDiagnostic {
    pub n: usize,
    pub w_n: f64,
    /// Variance of the limiting normal law.
    pub v: f64,
    /// `sup_t |P(Y_n <= t) - Phi(t / sqrt v)|`.
    pub distance: f64,
}

/// Kolmogorov distance of `Y_n = (X_n - D_n)/sqrt(w_n)`, `X_n ~ mu_{sigma_n|rho_n}`,
/// to `N(0, v)`, exact over the atoms. `v` defaults to `V_n / w_n`; for
/// `v = 0` the reference is the unit step at 0.
pub fn clt_diagnostic(model: &dyn ModelSequence, n: usize, v: Option<f64>) -> Result<CltDiagnostic> {
    let m = measure(model, n)?;
    let w_n = model.weight(n);
    let mean = m.mean();
    let v = v.unwrap_or_else(|| m.variance() / w_n);
    if v < 0.0 {
        return Err(Error::Domain(format!("variance {v} is negative")));
    }
    let reference = |t: f64| {
        if v > 0.0 {
            normal_cdf(t / v.sqrt())
        } else if t >= 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let total = m.total();
    let mut below = 0.0;
    let mut distance = 0.0f64;
    for &(x, p) in m.atoms() {
        let t = (x - mean) / w_n.sqrt();
        // the empirical cdf jumps at t; compare both one-sided limits
        let f_left = below / total;
        below += p;
        let f_right = below / total;
        let g = reference(t);
        let g_left = if v > 0.0 {
            g
        } else if t > 0.0 {
            1.0
        } else {
            0.0
        };
        distance = distance.max((f_left - g_left).abs()).max((f_right - g).abs());
    }
    if v == 0.0 {
        // the step at 0 may sit between atoms
        distance = distance.max(m.cdf(mean - 1e-300) / total).max(1.0 - m.cdf(mean) / total);
    }
    Ok(CltDiagnostic { n, w_n, v, distance })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaRow {
    pub t2: f64,
    pub alpha_proxy: f64,
    pub phi_prediction: f64,
}

/// Finite-n proxy of the minimal asymptotic type-I error: for each `t2`,
/// the least type-I error over tests with
/// `-log beta(T) >= D_n + sqrt(w_n) t2`, next to `Phi(t2 / sqrt v)`.
pub fn alpha_curve(model: &dyn ModelSequence, n: usize, t2_grid: &[f64], v: Option<f64>) -> Result<Vec<AlphaRow>> {
    let (d_n, v_n) = divergences(model, n)?;
    let w_n = model.weight(n);
    let v = v.unwrap_or(v_n / w_n);
    t2_grid
        .par_iter()
        .map(|&t2| {
            let b = (-(d_n + w_n.sqrt() * t2)).exp();
            let phi_prediction = if v > 0.0 {
                normal_cdf(t2 / v.sqrt())
            } else if t2 >= 0.0 {
                1.0
            } else {
                0.0
            };
            Ok(AlphaRow { t2, alpha_proxy: alpha_n(model, n, b)?, phi_prediction })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Caps, IidModel};
    use crate::operator::{DensityMatrix, HermitianOperator};

    fn diag_model() -> IidModel {
        let rho = DensityMatrix::new(&HermitianOperator::diag(&[0.75, 0.25])).unwrap();
        IidModel::new(rho, DensityMatrix::maximally_mixed(2), Caps::default()).unwrap()
    }

    #[test]
    fn normal_symmetry_and_inverse() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        for k in -40..=40 {
            let x = 0.2 * k as f64;
            assert!((normal_cdf(-x) - (1.0 - normal_cdf(x))).abs() < 1e-15);
        }
        for e in 1..=8 {
            for p in [10f64.powi(-e), 0.3, 0.5 + 0.05 * e as f64, 1.0 - 10f64.powi(-e)] {
                let x = normal_quantile(p).unwrap();
                assert!((normal_cdf(x) - p).abs() < 1e-10 * p.max(1e-2), "p={p}");
            }
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn prediction_examples() {
        assert_eq!(second_order_prediction(0.3, 0.7, 50.0, 0.5).unwrap(), 15.0);
        assert_eq!(second_order_prediction(0.3, 0.0, 50.0, 0.05).unwrap(), 15.0);
        let p = second_order_prediction(0.1308120, 0.226302, 100.0, 0.05).unwrap();
        assert!((p - 5.2564).abs() < 1e-4, "{p}");
    }

    #[test]
    fn iid_rates_are_flat() {
        let est = rate_estimates(&diag_model(), &[1, 2, 5, 9]).unwrap();
        assert!((est.d_hat - 0.1308120).abs() < 1e-6);
        assert!((est.v_hat - 0.226302).abs() < 1e-6);
        assert!(est.cauchy_d.iter().all(|&(_, c)| c < 1e-10));
        assert!(est.delta_d.iter().all(|&(_, c)| c.abs() < 1e-10));
    }

    #[test]
    fn identical_states_expansion() {
        let rho = DensityMatrix::new(&HermitianOperator::diag(&[0.6, 0.4])).unwrap();
        let model = IidModel::new(rho.clone(), rho, Caps::default()).unwrap();
        let rep = expansion_experiment(&model, 0.2, &[1, 3, 6], ExpansionOptions::default()).unwrap();
        for row in rep.rows {
            assert!((row.exact + (0.8f64).ln()).abs() < 1e-12);
            assert_eq!(row.second_order_pred, 0.0);
        }
        let clt = clt_diagnostic(&model, 4, None).unwrap();
        assert_eq!(clt.distance, 0.0);
        let b = bryc_check(&model, 0.5, &[1, 2, 4], 7).unwrap();
        assert_eq!(b.sup_bound, 0.0);
    }

    #[test]
    fn iid_bryc_differences_vanish() {
        let rep = bryc_check(&diag_model(), 0.8, &[1, 2, 3, 5], 9).unwrap();
        assert!(rep.analytic_ok);
        assert!(rep.cauchy_decay.iter().all(|&(_, c)| c < 1e-14), "{:?}", rep.cauchy_decay);
        assert!(rep.grid.iter().all(|z| z.norm() <= 0.8 + 1e-12));
        assert!(rep.grid.len() > 40);
    }

    #[test]
    fn clt_distance_shrinks() {
        let m = diag_model();
        let d: Vec<f64> = [2, 8, 32, 128].iter().map(|&n| clt_diagnostic(&m, n, None).unwrap().distance).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    }

    #[test]
    fn alpha_curve_edges() {
        let m = diag_model();
        let rows = alpha_curve(&m, 10, &[-6.0, 0.0, 0.5], None).unwrap();
        assert!(rows[0].alpha_proxy < 1e-6);
        assert_eq!(rows[1].phi_prediction, 0.5);
        assert!(rows[2].alpha_proxy > rows[1].alpha_proxy);
    }

    #[test]
    fn log_band() {
        let band = LogBand::fit(&[(10.0, 1.0), (20.0, 1.5), (40.0, 1.8)]).unwrap();
        assert!(band.c > 0.0);
        assert!(band.contains(40.0, 1.8));
        assert!(band.contains(20.0, -1.5));
    }
}
