//! Dense kernels shared by the echo and channel paths.
//!
//! Complex matrices on the hot paths are kept as separate real and imaginary
//! parts so products run through the fast real gemm; the naive complex gemm
//! is an order of magnitude slower on this dependency stack.

use nalgebra::{Complex, DMatrix};

pub(crate) type C64 = Complex<f64>;

/// A complex matrix stored as split real/imaginary parts.
#[derive(Debug, Clone)]
pub(crate) struct SplitMat {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl SplitMat {
    /// `adjoint(self) * other`, assembled into a complex matrix.
    pub fn adjoint_mul(&self, other: &SplitMat) -> DMatrix<C64> {
        // (Ar - i Ai)^T (Br + i Bi) = (Ar^T Br + Ai^T Bi) + i (Ar^T Bi - Ai^T Br)
        let re = self.re.tr_mul(&other.re) + self.im.tr_mul(&other.im);
        let im = self.re.tr_mul(&other.im) - self.im.tr_mul(&other.re);
        assemble(&re, &im)
    }

    #[cfg(test)]
    pub fn to_complex(&self) -> DMatrix<C64> {
        assemble(&self.re, &self.im)
    }
}

/// `real * split` as a split matrix (two real gemms).
pub(crate) fn real_mul_split(a: &DMatrix<f64>, b: &SplitMat) -> SplitMat {
    SplitMat {
        re: a * &b.re,
        im: a * &b.im,
    }
}

pub(crate) fn assemble(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<C64> {
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// Determinant of a square complex matrix by partially pivoted Gaussian
/// elimination, accumulating the magnitude in log space so that strongly
/// decayed echoes neither underflow nor overflow.
///
/// Returns `exp(log_mag) * phase`; a singular pivot yields exactly zero.
pub(crate) fn det_log_lu(mut a: DMatrix<C64>) -> C64 {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut log_mag = 0.0f64;
    let mut phase = C64::new(1.0, 0.0);
    for k in 0..n {
        // partial pivot on |.|
        let mut pivot_row = k;
        let mut pivot_norm = a[(k, k)].norm_sqr();
        for i in k + 1..n {
            let v = a[(i, k)].norm_sqr();
            if v > pivot_norm {
                pivot_norm = v;
                pivot_row = i;
            }
        }
        if pivot_norm == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot_row != k {
            a.swap_rows(pivot_row, k);
            phase = -phase;
        }
        let pivot = a[(k, k)];
        let pivot_abs = pivot.norm();
        log_mag += pivot_abs.ln();
        phase *= pivot / pivot_abs;
        let inv_pivot = pivot.inv();
        for i in k + 1..n {
            let factor = a[(i, k)] * inv_pivot;
            if factor.norm_sqr() == 0.0 {
                continue;
            }
            for j in k + 1..n {
                let sub = factor * a[(k, j)];
                a[(i, j)] -= sub;
            }
        }
    }
    if log_mag < -700.0 {
        return C64::new(0.0, 0.0);
    }
    phase * log_mag.exp()
}

/// A complex value kept as `exp(log_mag) * phase` to survive extreme
/// magnitudes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogComplex {
    pub log_mag: f64,
    pub phase: C64,
}

impl LogComplex {
    pub fn zero() -> Self {
        Self {
            log_mag: f64::NEG_INFINITY,
            phase: C64::new(0.0, 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_mag == f64::NEG_INFINITY
    }

    /// `self / other` collapsed to a plain complex number.
    pub fn ratio(&self, other: &LogComplex) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        debug_assert!(!other.is_zero());
        let mag = (self.log_mag - other.log_mag).exp();
        self.phase * other.phase.conj() * mag
    }
}

/// Pfaffian of a complex antisymmetric matrix by skew-symmetric Gaussian
/// elimination (Parlett-Reid) with partial pivoting, magnitude kept in log
/// space. The input dimension must be even; odd dimensions have Pf = 0.
pub(crate) fn pfaffian_log(mut a: DMatrix<C64>) -> LogComplex {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    if n % 2 == 1 {
        return LogComplex::zero();
    }
    let mut log_mag = 0.0f64;
    let mut phase = C64::new(1.0, 0.0);
    let mut k = 0usize;
    while k + 1 < n {
        // pivot: bring the largest |a[k, j]| (j > k) into column k+1
        let mut pivot_col = k + 1;
        let mut pivot_norm = a[(k, k + 1)].norm_sqr();
        for j in k + 2..n {
            let v = a[(k, j)].norm_sqr();
            if v > pivot_norm {
                pivot_norm = v;
                pivot_col = j;
            }
        }
        if pivot_norm == 0.0 {
            // row k decoupled from everything remaining
            return LogComplex::zero();
        }
        if pivot_col != k + 1 {
            a.swap_columns(pivot_col, k + 1);
            a.swap_rows(pivot_col, k + 1);
            phase = -phase;
        }
        let pivot = a[(k, k + 1)];
        let pivot_abs = pivot.norm();
        log_mag += pivot_abs.ln();
        phase *= pivot / pivot_abs;
        let inv_pivot = pivot.inv();
        // skew Schur complement on the trailing block:
        // C'_{ij} = A_{ij} + (A_{k+1,i} A_{k,j} - A_{k,i} A_{k+1,j}) / a
        for i in k + 2..n {
            let row_k = a[(k, i)];
            let row_k1 = a[(k + 1, i)];
            if row_k.norm_sqr() == 0.0 && row_k1.norm_sqr() == 0.0 {
                continue;
            }
            for j in i + 1..n {
                let delta = (row_k1 * a[(k, j)] - row_k * a[(k + 1, j)]) * inv_pivot;
                let updated = a[(i, j)] + delta;
                a[(i, j)] = updated;
                a[(j, i)] = -updated;
            }
        }
        k += 2;
    }
    LogComplex { log_mag, phase }
}
