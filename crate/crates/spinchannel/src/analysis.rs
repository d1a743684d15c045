//! Physics extraction on top of the channel quantities: short-time Gaussian
//! decay rates, their field derivative and the criticality signature,
//! revival detection, the polarized-limit closed form, and the
//! generalized-model fidelity differences.

use rayon::prelude::*;

use crate::channel::{
    exact_fidelity_series, exact_purity_series, sampled_fidelity, sampled_fidelity_series,
    sampled_purity_series,
};
use crate::echo::EchoEngine;
use crate::error::{Error, Result};
use crate::freefermion::ZeroModePolicy;
use crate::model::ModelParams;

/// Signals below this fraction of the initial value leave the short-time
/// fit window.
pub const DEFAULT_FIT_THRESHOLD: f64 = 0.9;
const MIN_FIT_POINTS: usize = 4;

/// Result of a short-time Gaussian fit `value ~ e^{-rate * t^2}`.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub rate: f64,
    /// Fitted time window (first and last time used).
    pub window: (f64, f64),
    /// Root-mean-square residual of `ln(value)` against the fit.
    pub residual: f64,
    pub n_points: usize,
}

/// Least-squares fit of `ln(value) = c - rate * t^2` over the leading window
/// where `value >= threshold`.
pub fn gaussian_rate(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    gaussian_rate_with_threshold(times, values, DEFAULT_FIT_THRESHOLD)
}

pub fn gaussian_rate_with_threshold(
    times: &[f64],
    values: &[f64],
    threshold: f64,
) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::InvalidParams(
            "times and values must have equal length".into(),
        ));
    }
    // leading window only: the short-time regime ends at the first dip below
    // threshold (later recoveries are revivals, not short-time decay)
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = (f64::NAN, f64::NAN);
    for (&t, &v) in times.iter().zip(values) {
        if v < threshold || v <= 0.0 {
            break;
        }
        if xs.is_empty() {
            window.0 = t;
        }
        window.1 = t;
        xs.push(t * t);
        ys.push(v.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientWindow {
            points: xs.len(),
            threshold,
            min_points: MIN_FIT_POINTS,
        });
    }
    let n = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / n;
    let mean_y: f64 = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientWindow {
            points: xs.len(),
            threshold,
            min_points: MIN_FIT_POINTS,
        });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        window,
        residual,
        n_points: xs.len(),
    })
}

/// Which channel quantity a rate scan fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateQuantity {
    Fidelity,
    Purity,
}

/// Configuration of a decay-rate scan over the transverse field.
#[derive(Debug, Clone)]
pub struct RateScanConfig {
    pub base: ModelParams,
    pub lambda_grid: Vec<f64>,
    pub times: Vec<f64>,
    /// 0 requests the exact average (guarded by the qubit limit).
    pub n_samples: u64,
    pub seed: u64,
    pub quantity: RateQuantity,
    pub threshold: f64,
    pub policy: ZeroModePolicy,
}

/// Decay rates on a field grid with their centered-difference derivative.
#[derive(Debug, Clone)]
pub struct CriticalityScan {
    pub lambda_grid: Vec<f64>,
    /// Fitted rate per grid point; `None` records a fit failure.
    pub rates: Vec<Option<f64>>,
    /// Centered differences on interior points, one-sided at the ends.
    pub derivative: Vec<Option<f64>>,
    /// Location of the derivative maximum.
    pub peak_location: Option<f64>,
    pub fit_failures: Vec<(f64, String)>,
}

impl CriticalityScan {
    /// Peak height of the derivative above its median; the criticality
    /// signature strength.
    pub fn peak_prominence(&self) -> Option<f64> {
        let mut finite: Vec<f64> = self.derivative.iter().flatten().copied().collect();
        if finite.is_empty() {
            return None;
        }
        let peak = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        finite.sort_by(f64::total_cmp);
        let median = finite[finite.len() / 2];
        Some(peak - median)
    }
}

/// Fits the decay rate at every field value of the grid. Sampled scans
/// reuse one pair sample across the whole grid (common random numbers), so
/// the finite-sample error varies smoothly with lambda and largely cancels
/// in the derivative.
pub fn rate_scan(cfg: &RateScanConfig) -> Result<CriticalityScan> {
    if cfg.lambda_grid.is_empty() || cfg.times.is_empty() {
        return Err(Error::InvalidParams("rate scan needs nonempty grids".into()));
    }
    let fits: Vec<std::result::Result<DecayFit, String>> = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let run = || -> Result<DecayFit> {
                let params = cfg.base.with_lambda(lambda)?;
                let engine = EchoEngine::with_policy(params, cfg.policy)?;
                let values: Vec<f64> = match (cfg.quantity, cfg.n_samples) {
                    (RateQuantity::Fidelity, 0) => exact_fidelity_series(&engine, &cfg.times)?,
                    (RateQuantity::Purity, 0) => exact_purity_series(&engine, &cfg.times)?,
                    (RateQuantity::Fidelity, n) => {
                        sampled_fidelity_series(&engine, &cfg.times, n, cfg.seed)?
                            .into_iter()
                            .map(|e| e.value)
                            .collect()
                    }
                    (RateQuantity::Purity, n) => {
                        sampled_purity_series(&engine, &cfg.times, n, cfg.seed)?
                            .into_iter()
                            .map(|e| e.value)
                            .collect()
                    }
                };
                gaussian_rate_with_threshold(&cfg.times, &values, cfg.threshold)
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let mut rates = Vec::with_capacity(fits.len());
    let mut fit_failures = Vec::new();
    for (fit, &lambda) in fits.iter().zip(&cfg.lambda_grid) {
        match fit {
            Ok(f) => rates.push(Some(f.rate)),
            Err(msg) => {
                rates.push(None);
                fit_failures.push((lambda, msg.clone()));
            }
        }
    }
    let derivative = centered_derivative(&cfg.lambda_grid, &rates);
    let peak_location = derivative
        .iter()
        .zip(&cfg.lambda_grid)
        .filter_map(|(d, &l)| d.map(|v| (v, l)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l)| l);
    Ok(CriticalityScan {
        lambda_grid: cfg.lambda_grid.clone(),
        rates,
        derivative,
        peak_location,
        fit_failures,
    })
}

fn centered_derivative(grid: &[f64], rates: &[Option<f64>]) -> Vec<Option<f64>> {
    let n = grid.len();
    let mut out = vec![None; n];
    if n < 2 {
        return out;
    }
    let diff = |a: Option<f64>, b: Option<f64>, dx: f64| -> Option<f64> {
        match (a, b) {
            (Some(lo), Some(hi)) if dx != 0.0 => Some((hi - lo) / dx),
            _ => None,
        }
    };
    for i in 0..n {
        out[i] = if i == 0 {
            diff(rates[0], rates[1], grid[1] - grid[0])
        } else if i == n - 1 {
            diff(rates[n - 2], rates[n - 1], grid[n - 1] - grid[n - 2])
        } else {
            diff(rates[i - 1], rates[i + 1], grid[i + 1] - grid[i - 1])
        };
    }
    out
}

/// Closed-form channel fidelity in the fully polarized (large-field) limit,
/// summed over the combinatorial pair classes: pairs differing on k qubits
/// with `a` of the differing positions excited in x contribute
/// `C(n,k) C(k,a) 2^{n-k} cos((2a - k) eps t)`; the sum reduces to
/// `cos^{2n}(eps t / 2)`.
pub fn analytic_large_lambda_fidelity(n_qubits: usize, epsilon: f64, t: f64) -> f64 {
    let mut total = 0.0f64;
    for k in 0..=n_qubits {
        let weight = binomial(n_qubits, k) * ((n_qubits - k) as f64).exp2();
        for a in 0..=k {
            let count = weight * binomial(k, a);
            let freq = (2.0 * a as f64 - k as f64) * epsilon;
            total += count * (freq * t).cos();
        }
    }
    total / (2.0 * n_qubits as f64).exp2()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// A detected fidelity revival.
#[derive(Debug, Clone, Copy)]
pub struct Revival {
    pub time: f64,
    pub value: f64,
    /// True when the recovered value stays below 0.99.
    pub imperfect: bool,
}

/// Finds the first strong recurrence after the initial decay: the first
/// local maximum reaching 99% of the best post-decay value, provided it
/// recovers at least half of the lost amplitude (prominence rule; finite
/// fields revive imperfectly).
pub fn revival_period(times: &[f64], values: &[f64]) -> Result<Revival> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::NoRevivalFound);
    }
    let n = values.len();
    // end of the initial decay: first local minimum
    let mut i_min = None;
    for i in 1..n - 1 {
        if values[i] <= values[i - 1] && values[i] <= values[i + 1] {
            i_min = Some(i);
            break;
        }
    }
    let i_min = i_min.ok_or(Error::NoRevivalFound)?;
    let v_min = values[i_min];
    let best_after = values[i_min..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = v_min + 0.5 * (values[0] - v_min);
    for i in i_min + 1..n - 1 {
        let is_peak = values[i] >= values[i - 1] && values[i] >= values[i + 1];
        if is_peak && values[i] >= 0.99 * best_after && values[i] >= floor {
            return Ok(Revival {
                time: times[i],
                value: values[i],
                imperfect: values[i] < 0.99,
            });
        }
    }
    Err(Error::NoRevivalFound)
}

/// One pair of spacer counts compared across the field grid.
#[derive(Debug, Clone)]
pub struct SpacingDifference {
    pub m_a: usize,
    pub m_b: usize,
    /// |F_av(m_a) - F_av(m_b)| per field value.
    pub values: Vec<f64>,
    /// Field value with the largest difference.
    pub peak_lambda: f64,
}

/// Fidelity-difference scan of the generalized model.
#[derive(Debug, Clone)]
pub struct FidelityDifferenceScan {
    pub lambda_grid: Vec<f64>,
    pub m_values: Vec<usize>,
    /// `fidelities[i][j]`: F_av at `m_values[i]`, `lambda_grid[j]`.
    pub fidelities: Vec<Vec<f64>>,
    pub differences: Vec<SpacingDifference>,
}

/// Sampled fidelity at fixed time `t_star` for every spacer count and field
/// value, with the pairwise absolute differences. A single pair sample (one
/// seed) is shared by every grid point, so identical spacer counts give
/// exactly identical values and sampling noise cancels in the differences.
pub fn fidelity_difference_scan(
    base: &ModelParams,
    m_values: &[usize],
    lambda_grid: &[f64],
    t_star: f64,
    n_samples: u64,
    seed: u64,
    policy: ZeroModePolicy,
) -> Result<FidelityDifferenceScan> {
    if m_values.len() < 2 {
        return Err(Error::InvalidParams(
            "difference scan needs at least two spacer counts".into(),
        ));
    }
    let points: Vec<(usize, f64)> = m_values
        .iter()
        .flat_map(|&m| lambda_grid.iter().map(move |&l| (m, l)))
        .collect();
    let flat: Vec<f64> = points
        .par_iter()
        .map(|&(m, lambda)| {
            let params = base.with_spacing(m)?.with_lambda(lambda)?;
            let engine = EchoEngine::with_policy(params, policy)?;
            Ok(sampled_fidelity(&engine, t_star, n_samples, seed)?.value)
        })
        .collect::<Result<_>>()?;
    let fidelities: Vec<Vec<f64>> = flat
        .chunks(lambda_grid.len())
        .map(|row| row.to_vec())
        .collect();
    let mut differences = Vec::new();
    for i in 0..m_values.len() {
        for j in i + 1..m_values.len() {
            let values: Vec<f64> = fidelities[i]
                .iter()
                .zip(&fidelities[j])
                .map(|(a, b)| (a - b).abs())
                .collect();
            let peak_idx = values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(idx, _)| idx)
                .unwrap_or(0);
            differences.push(SpacingDifference {
                m_a: m_values[i],
                m_b: m_values[j],
                values,
                peak_lambda: lambda_grid[peak_idx],
            });
        }
    }
    Ok(FidelityDifferenceScan {
        lambda_grid: lambda_grid.to_vec(),
        m_values: m_values.to_vec(),
        fidelities,
        differences,
    })
}

/// Grows a probe time until the fidelity drops below `edge`, then returns a
/// uniform grid over that short-time window (used to set up rate fits).
pub fn short_time_grid(
    engine: &EchoEngine,
    n_samples: u64,
    seed: u64,
    edge: f64,
    points: usize,
) -> Result<Vec<f64>> {
    let mut t_edge = 0.25;
    for _ in 0..24 {
        let value = if n_samples == 0 {
            crate::channel::exact_fidelity(engine, t_edge)?
        } else {
            sampled_fidelity(engine, t_edge, n_samples, seed)?.value
        };
        if value < edge {
            break;
        }
        t_edge *= 1.6;
    }
    Ok((0..points)
        .map(|i| t_edge * (i + 1) as f64 / points as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_synthetic_gaussian_rate() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|&t| (-3.0 * t * t).exp()).collect();
        let fit = gaussian_rate(&times, &values).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-6, "rate {}", fit.rate);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn single_qubit_rate_is_quarter_epsilon_squared() {
        // F(t) = cos^2(eps t / 2) ~ e^{-eps^2 t^2 / 4} in the fit window
        let eps = 0.4f64;
        // F = 0.9 edge: cos^2(eps t/2) = 0.9
        let t_edge = 2.0 * (0.9f64.sqrt()).acos() / eps;
        let times: Vec<f64> = (1..=40).map(|i| i as f64 * t_edge / 40.0).collect();
        let values: Vec<f64> = times.iter().map(|&t| (eps * t / 2.0).cos().powi(2)).collect();
        let fit = gaussian_rate(&times, &values).unwrap();
        let want = eps * eps / 4.0;
        assert!(
            (fit.rate - want).abs() < 0.02 * want,
            "rate {} want {want}",
            fit.rate
        );
    }

    #[test]
    fn insufficient_window_is_reported() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let values = [1.0, 0.5, 0.2, 0.1];
        assert!(matches!(
            gaussian_rate(&times, &values),
            Err(Error::InsufficientWindow { .. })
        ));
    }

    #[test]
    fn large_lambda_closed_form_and_brute_force() {
        for n in 1..=8usize {
            let eps = 0.3;
            for &t in &[0.0, 0.7, 2.0, 5.5] {
                let from_classes = analytic_large_lambda_fidelity(n, eps, t);
                let closed = (eps * t / 2.0).cos().powi(2 * n as i32);
                assert!(
                    (from_classes - closed).abs() < 1e-12,
                    "n={n} t={t}: classes {from_classes} closed {closed}"
                );
                // brute force over all 4^n ordered pairs
                let count = 1u64 << n;
                let mut total = 0.0;
                for x in 0..count {
                    for y in 0..count {
                        let nx = x.count_ones() as f64;
                        let ny = y.count_ones() as f64;
                        total += ((nx - ny) * eps * t).cos();
                    }
                }
                total /= (count * count) as f64;
                assert!(
                    (from_classes - total).abs() < 1e-12,
                    "n={n} t={t}: classes {from_classes} brute {total}"
                );
            }
        }
    }

    #[test]
    fn perfect_revival_at_two_pi() {
        let eps = 0.3;
        for n in [1usize, 3, 5] {
            let t_r = std::f64::consts::TAU / eps;
            assert!((analytic_large_lambda_fidelity(n, eps, t_r) - 1.0).abs() < 1e-12);
            assert!((analytic_large_lambda_fidelity(n, eps, 0.0) - 1.0).abs() < 1e-15);
        }
        // n=1 at eps*t = pi vanishes
        assert!(analytic_large_lambda_fidelity(1, 0.3, std::f64::consts::PI / 0.3).abs() < 1e-12);
    }

    #[test]
    fn revival_detection_on_cosine() {
        let eps = 0.05;
        let times: Vec<f64> = (0..=600).map(|i| i as f64 * 0.25).collect();
        let values: Vec<f64> = times.iter().map(|&t| (eps * t / 2.0).cos().powi(2)).collect();
        let revival = revival_period(&times, &values).unwrap();
        let want = std::f64::consts::TAU / eps;
        assert!(
            (revival.time - want).abs() <= 0.25 + 1e-12,
            "revival at {} want {want}",
            revival.time
        );
        assert!(!revival.imperfect);
    }

    #[test]
    fn no_revival_in_monotonic_decay() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|&t| (-0.05 * t * t).exp()).collect();
        assert!(matches!(
            revival_period(&times, &values),
            Err(Error::NoRevivalFound)
        ));
    }

    #[test]
    fn flat_scan_has_no_meaningful_peak() {
        let grid: Vec<f64> = (0..9).map(|i| 0.6 + 0.1 * i as f64).collect();
        let rates: Vec<Option<f64>> = vec![Some(2.0); 9];
        let derivative = centered_derivative(&grid, &rates);
        for d in derivative.iter().flatten() {
            assert!(d.abs() < 1e-12);
        }
        let scan = CriticalityScan {
            lambda_grid: grid,
            rates,
            derivative,
            peak_location: None,
            fit_failures: Vec::new(),
        };
        assert!(scan.peak_prominence().unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_spacings_difference_is_zero() {
        let base = ModelParams::new(3, 1.0, 1.0, 1.0, 0.05, 0).unwrap();
        let scan = fidelity_difference_scan(
            &base,
            &[1, 1],
            &[0.8, 1.0, 1.2],
            3.0,
            400,
            9,
            ZeroModePolicy::Reject,
        )
        .unwrap();
        assert_eq!(scan.differences.len(), 1);
        for v in &scan.differences[0].values {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn rate_scan_on_small_exact_model() {
        let base = ModelParams::new(4, 1.0, 1.0, 1.0, 0.4, 0).unwrap();
        let times: Vec<f64> = (1..=12).map(|i| i as f64 * 0.15).collect();
        let cfg = RateScanConfig {
            base,
            lambda_grid: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            times,
            n_samples: 0,
            seed: 0,
            quantity: RateQuantity::Fidelity,
            threshold: 0.9,
            policy: ZeroModePolicy::Reject,
        };
        let scan = rate_scan(&cfg).unwrap();
        assert!(scan.fit_failures.is_empty(), "{:?}", scan.fit_failures);
        assert!(scan.rates.iter().all(|r| r.is_some()));
        for r in scan.rates.iter().flatten() {
            assert!(*r > 0.0);
        }
        let peak = scan.peak_location.unwrap();
        assert!((0.8..=1.2).contains(&peak));
    }
}
