//! Channel-level quantities built from the echoes: exact and sampled
//! fidelity and purity, the Choi state and its entropy, capacity-flavored
//! bounds, and the Haar pair weights.
//!
//! Sampling draws x and y independently and uniformly with replacement
//! (including x = y), which makes the estimators exactly unbiased for the
//! definitional double sums. Pairs are generated in fixed chunks, one
//! counter-based stream per chunk, and chunk partials are folded in chunk
//! order: a given seed yields bit-identical results for any worker count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::echo::EchoEngine;
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Pairs per deterministic sampling chunk.
const CHUNK: u64 = 1024;

/// Eigenvalues below this are treated as exact zeros in entropies.
const ENTROPY_FLOOR: f64 = 1e-12;
/// Most negative eigenvalue tolerated from a positive-semidefinite matrix.
const PSD_FLOOR: f64 = -1e-10;

/// A Monte-Carlo estimate with its statistical error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Sample standard deviation divided by sqrt(n_samples).
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

/// Exact channel fidelity `F = <+| J |+> = (1/N^2) sum_xy L_xy`.
pub fn exact_fidelity(engine: &EchoEngine, t: f64) -> Result<f64> {
    let dim = engine.hilbert_dim();
    Ok(engine.pair_sum(t, |e| e.re)? / (dim * dim))
}

/// Exact Choi purity `P2 = (1/N^2) sum_xy |L_xy|^2`, through the
/// phase-free modulus route.
pub fn exact_purity(engine: &EchoEngine, t: f64) -> Result<f64> {
    let dim = engine.hilbert_dim();
    Ok(engine.pair_sum_mag_sq(t, |l2| l2)? / (dim * dim))
}

/// Per-chunk accumulation of sums and sums of squares at every grid time.
fn sampled_series(
    engine: &EchoEngine,
    ts: &[f64],
    n_samples: u64,
    seed: u64,
    use_phase: bool,
) -> Result<Vec<Estimate>> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be >= 1".into()));
    }
    let n = engine.params().n_qubits();
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<Result<Vec<(f64, f64)>>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(n_samples - chunk * CHUNK) as usize;
            let pairs: Vec<(u64, u64)> = (0..count)
                .map(|_| (rng.random::<u64>() & mask, rng.random::<u64>() & mask))
                .collect();
            let mut acc = vec![(0.0f64, 0.0f64); ts.len()];
            for &(x, y) in &pairs {
                if use_phase {
                    let series = engine.echo_series(x, y, ts)?;
                    for (slot, value) in acc.iter_mut().zip(series) {
                        let v = value.re;
                        slot.0 += v;
                        slot.1 += v * v;
                    }
                } else {
                    for (slot, &t) in acc.iter_mut().zip(ts) {
                        let v = engine.echo_mag_sq(x, y, t)?;
                        slot.0 += v;
                        slot.1 += v * v;
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut sums = vec![(0.0f64, 0.0f64); ts.len()];
    for partial in partials {
        for (slot, (s, s2)) in sums.iter_mut().zip(partial?) {
            slot.0 += s;
            slot.1 += s2;
        }
    }
    let count = n_samples as f64;
    Ok(sums
        .into_iter()
        .map(|(sum, sum_sq)| {
            let mean = sum / count;
            let std_error = if n_samples > 1 {
                let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
                (var / count).sqrt()
            } else {
                0.0
            };
            Estimate {
                value: mean,
                std_error,
                n_samples,
                seed,
            }
        })
        .collect())
}

/// Sampled fidelity `F_av = (1/N_av) sum Re L_xy` over uniform pairs.
pub fn sampled_fidelity(engine: &EchoEngine, t: f64, n_samples: u64, seed: u64) -> Result<Estimate> {
    Ok(sampled_series(engine, &[t], n_samples, seed, true)?.remove(0))
}

/// Sampled fidelity along a time grid; the same pair sample is walked
/// through every grid point.
pub fn sampled_fidelity_series(
    engine: &EchoEngine,
    ts: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<Estimate>> {
    sampled_series(engine, ts, n_samples, seed, true)
}

/// Sampled purity `P_av = (1/N_av) sum |L_xy|^2` over uniform pairs.
pub fn sampled_purity(engine: &EchoEngine, t: f64, n_samples: u64, seed: u64) -> Result<Estimate> {
    Ok(sampled_series(engine, &[t], n_samples, seed, false)?.remove(0))
}

/// Sampled purity along a time grid.
pub fn sampled_purity_series(
    engine: &EchoEngine,
    ts: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<Estimate>> {
    sampled_series(engine, ts, n_samples, seed, false)
}

/// Exact fidelity along a time grid (per-pair continuation over the grid).
pub fn exact_fidelity_series(engine: &EchoEngine, ts: &[f64]) -> Result<Vec<f64>> {
    let dim = engine.hilbert_dim();
    let sums = engine.pair_sum_series(ts)?;
    Ok(sums.into_iter().map(|s| s / (dim * dim)).collect())
}

/// Exact purity along a time grid.
pub fn exact_purity_series(engine: &EchoEngine, ts: &[f64]) -> Result<Vec<f64>> {
    ts.iter().map(|&t| exact_purity(engine, t)).collect()
}

/// Haar-average transmission fidelity `<F> = N/(N+2) F + 2/(N+2)`.
pub fn average_transmission_fidelity(fidelity: f64, dim: f64) -> f64 {
    (dim * fidelity + 2.0) / (dim + 2.0)
}

/// Haar-average output purity `<P2> = N/(N+2) P2 + 2/(N+2)`.
pub fn average_output_purity(purity: f64, dim: f64) -> f64 {
    (dim * purity + 2.0) / (dim + 2.0)
}

/// Choi-Jamiolkowski state `J = [L_xy / N]`; trace one, Hermitian, PSD.
pub fn choi_state(engine: &EchoEngine, t: f64) -> Result<DMatrix<C64>> {
    let mut m = engine.echo_matrix(t)?;
    m.unscale_mut(engine.hilbert_dim());
    Ok(m)
}

/// Von Neumann entropy (base 2) of a density matrix given as a Hermitian,
/// approximately PSD complex matrix. Eigenvalues in `(-1e-10, 1e-12)` are
/// clamped to zero; anything more negative panics in debug builds only via
/// the caller's invariants, here it is clamped as well.
pub fn entropy_of_density(rho: &DMatrix<C64>) -> f64 {
    let eig = rho.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .map(|&p| {
            if p <= ENTROPY_FLOOR {
                0.0
            } else {
                -p * p.log2()
            }
        })
        .sum()
}

/// Smallest eigenvalue of a Hermitian matrix (diagnostic for the PSD floor).
pub fn min_eigenvalue(rho: &DMatrix<C64>) -> f64 {
    let eig = rho.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Channel entropy `H(J)`, the von Neumann entropy of the Choi state.
pub fn channel_entropy(engine: &EchoEngine, t: f64) -> Result<f64> {
    let choi = choi_state(engine, t)?;
    let floor = min_eigenvalue(&choi);
    if floor < PSD_FLOOR {
        return Err(Error::Numerical {
            context: "channel entropy".into(),
            detail: format!("Choi eigenvalue {floor:.3e} below the PSD floor"),
        });
    }
    Ok(entropy_of_density(&choi))
}

/// Hashing bound `D_1 = log2 N - H(J) = n - H(J)`.
pub fn hashing_bound(engine: &EchoEngine, t: f64) -> Result<f64> {
    Ok(engine.params().n_qubits() as f64 - channel_entropy(engine, t)?)
}

/// Finite-n estimate `1 - H(J)/n` of the regularized capacity lower bound.
pub fn capacity_rate_estimate(engine: &EchoEngine, t: f64) -> Result<f64> {
    let n = engine.params().n_qubits() as f64;
    Ok(1.0 - channel_entropy(engine, t)? / n)
}

/// Binary entropy with the 0 log 0 = 0 convention.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

/// Quantum-Fano upper bound `H(J) <= H2(F) + (1 - F) log2(4^n - 1)`.
pub fn fano_upper_bound(fidelity: f64, n_qubits: usize) -> f64 {
    let log_arg = 2.0 * n_qubits as f64 + (1.0 - 0.25f64.powi(n_qubits as i32)).log2();
    binary_entropy(fidelity) + (1.0 - fidelity) * log_arg
}

/// Looser finite-n combination of the Fano bound with the rate estimate,
/// `1 - H2(F)/n - 2(1 - F)`. Display-only diagnostic; not a tight bound.
pub fn loose_capacity_bound(fidelity: f64, n_qubits: usize) -> f64 {
    1.0 - binary_entropy(fidelity) / n_qubits as f64 - 2.0 * (1.0 - fidelity)
}

/// Renyi-2 lower bound `H(J) >= -log2 P2`.
pub fn renyi_lower_bound(purity: f64) -> Result<f64> {
    if purity <= 0.0 || purity > 1.0 + 1e-9 {
        return Err(Error::NonPositivePurity(purity));
    }
    Ok(-purity.min(1.0).log2())
}

/// Haar pair weight `p_xy = (1 + 2 delta_xy) / (N (N + 2))`.
pub fn haar_pair_probability(dim: f64, equal: bool) -> f64 {
    let numerator = if equal { 3.0 } else { 1.0 };
    numerator / (dim * (dim + 2.0))
}

/// A random pure state as amplitudes in the computational basis.
///
/// The moduli `|a_x|` are uniform on the positive orthant of the real unit
/// hypersphere (normalized real Gaussians) and the phases independent and
/// uniform. This is the input ensemble behind the pair weights
/// `p_xy = (1 + 2 delta_xy)/(N(N+2))` and the affine `<F>`/`<P2>` relations;
/// note it is not the unitary-invariant ensemble, whose moduli would give
/// `(1 + delta_xy)/(N(N+1))` instead.
#[derive(Debug, Clone)]
pub struct HaarSample {
    pub amplitudes: Vec<C64>,
}

impl HaarSample {
    pub fn draw(rng: &mut impl Rng, dim: usize) -> Self {
        let moduli: Vec<f64> = (0..dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(rng);
                g
            })
            .collect();
        let norm: f64 = moduli.iter().map(|r| r * r).sum::<f64>().sqrt();
        let amplitudes: Vec<C64> = moduli
            .iter()
            .map(|&r| {
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                C64::from_polar(r.abs() / norm, phase)
            })
            .collect();
        Self { amplitudes }
    }
}

/// One row of the Haar-weight Monte-Carlo audit.
#[derive(Debug, Clone, Copy)]
pub struct HaarClassEstimate {
    /// true for the x = y class.
    pub equal: bool,
    pub expected: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Number of ordered pairs in the class.
    pub pair_count: u64,
}

/// Monte-Carlo check of the Haar pair weights for `N = 2^n_qubits`,
/// averaging `|a_x|^2 |a_y|^2` within each pair class over `n_states`
/// Haar-random states.
pub fn haar_probability_check(
    n_qubits: usize,
    n_states: u64,
    seed: u64,
) -> Result<Vec<HaarClassEstimate>> {
    if n_qubits == 0 || n_qubits > 3 {
        return Err(Error::SizeLimitExceeded {
            what: "haar check qubits",
            requested: n_qubits,
            max: 3,
        });
    }
    if n_states == 0 {
        return Err(Error::InvalidParams("n_states must be >= 1".into()));
    }
    let dim = 1usize << n_qubits;
    let chunks = n_states.div_ceil(CHUNK);
    let partials: Vec<(f64, f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(n_states - chunk * CHUNK);
            let mut eq_sum = 0.0;
            let mut eq_sq = 0.0;
            let mut ne_sum = 0.0;
            let mut ne_sq = 0.0;
            for _ in 0..count {
                let state = HaarSample::draw(&mut rng, dim);
                let probs: Vec<f64> = state.amplitudes.iter().map(|a| a.norm_sqr()).collect();
                let sum_p: f64 = probs.iter().sum();
                let sum_p2: f64 = probs.iter().map(|p| p * p).sum();
                // per-state class means over all ordered pairs
                let eq = sum_p2 / dim as f64;
                let ne = (sum_p * sum_p - sum_p2) / (dim * (dim - 1)) as f64;
                eq_sum += eq;
                eq_sq += eq * eq;
                ne_sum += ne;
                ne_sq += ne * ne;
            }
            (eq_sum, eq_sq, ne_sum, ne_sq)
        })
        .collect();
    let mut eq_sum = 0.0;
    let mut eq_sq = 0.0;
    let mut ne_sum = 0.0;
    let mut ne_sq = 0.0;
    for (a, b, c, d) in partials {
        eq_sum += a;
        eq_sq += b;
        ne_sum += c;
        ne_sq += d;
    }
    let count = n_states as f64;
    let stats = |sum: f64, sq: f64| {
        let mean = sum / count;
        let se = if n_states > 1 {
            (((sq - count * mean * mean) / (count - 1.0)).max(0.0) / count).sqrt()
        } else {
            0.0
        };
        (mean, se)
    };
    let (eq_mean, eq_se) = stats(eq_sum, eq_sq);
    let (ne_mean, ne_se) = stats(ne_sum, ne_sq);
    let dimf = dim as f64;
    Ok(vec![
        HaarClassEstimate {
            equal: true,
            expected: haar_pair_probability(dimf, true),
            estimate: eq_mean,
            std_error: eq_se,
            pair_count: dim as u64,
        },
        HaarClassEstimate {
            equal: false,
            expected: haar_pair_probability(dimf, false),
            estimate: ne_mean,
            std_error: ne_se,
            pair_count: (dim * (dim - 1)) as u64,
        },
    ])
}

/// Direct Haar-weighted average `sum_xy f(L_xy) p_xy` from the full echo
/// matrix; used to cross-check the affine relations.
pub fn haar_weighted_average(
    engine: &EchoEngine,
    t: f64,
    f: impl Fn(C64) -> f64,
) -> Result<f64> {
    let m = engine.echo_matrix(t)?;
    let dim = m.nrows() as f64;
    let p_eq = haar_pair_probability(dim, true);
    let p_ne = haar_pair_probability(dim, false);
    let mut total = 0.0;
    for x in 0..m.nrows() {
        for y in 0..m.ncols() {
            total += f(m[(x, y)]) * if x == y { p_eq } else { p_ne };
        }
    }
    Ok(total)
}

/// Diagnostic spectrum of the Choi state, ascending.
pub fn choi_spectrum(engine: &EchoEngine, t: f64) -> Result<DVector<f64>> {
    let choi = choi_state(engine, t)?;
    let mut vals: Vec<f64> = choi.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(vals))
}
