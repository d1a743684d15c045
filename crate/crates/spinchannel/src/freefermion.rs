//! Jordan-Wigner mapping of the conditional chain Hamiltonians to quadratic
//! fermion form, their diagonalization, and the ground-state correlation
//! matrix feeding the echo formula.
//!
//! Conventions. With `sigma^z = 2 c^dag c - 1` and the operator vector
//! `Psi^dag = (c_1^dag .. c_L^dag, c_1 .. c_L)`, the chain Hamiltonian
//!
//! ```text
//! H = -J sum_bonds [ c_j^dag c_{j+1} + h.c. + gamma (c_j^dag c_{j+1}^dag + h.c.) ]
//!     - sum_j h_j (2 c_j^dag c_j - 1),     h_j = J*lambda + epsilon*[j perturbed]
//! ```
//!
//! equals `Psi^dag H_N Psi` exactly (no leftover constant) for the 2L x 2L
//! Nambu matrix `H_N = 1/2 [[alpha, beta], [-beta, -alpha]]` with
//! `alpha_jj = -2 h_j`, `alpha_{j,j+1} = -J`, `beta_{j,j+1} = -J*gamma`
//! antisymmetric. All couplings are real, so `H_N` is real symmetric; its
//! spectrum pairs as ±E_k, the many-body energies are `sum_k E_k (2 n_k - 1)`
//! and the ground state fills every negative-energy Bogoliubov mode.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{assemble, C64};
use crate::model::ModelParams;

/// Quasiparticle energies below this threshold are treated as zero modes.
pub const ZERO_MODE_THRESHOLD: f64 = 1e-10;

/// What to do when the unperturbed chain has a quasiparticle energy below
/// [`ZERO_MODE_THRESHOLD`], i.e. a (numerically) degenerate ground state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroModePolicy {
    /// Refuse to pick a ground state (default).
    #[default]
    Reject,
    /// Leave zero modes unoccupied: one parity sector is selected
    /// deterministically by splitting the zero eigenspace with the
    /// particle-hole involution.
    LeaveEmpty,
}

/// Single-particle matrix of the quadratic form `Psi^dag H Psi`.
#[derive(Debug, Clone)]
pub struct NambuMatrix {
    sites: usize,
    matrix: DMatrix<f64>,
}

impl NambuMatrix {
    /// Number of chain sites L.
    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Matrix dimension 2L.
    pub fn dim(&self) -> usize {
        2 * self.sites
    }

    /// The real entries; the generic quadratic form is complex but every
    /// coupling of this model is real.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigendecomposition with eigenvalues ascending; eigenvectors are the
    /// corresponding columns.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        let eig = self.matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(self.dim(), order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        (values, vectors)
    }

    /// Ground-state energy implied by filling all negative modes
    /// (sum of negative eigenvalues).
    pub fn ground_energy(&self) -> f64 {
        let (vals, _) = self.eigen();
        vals.iter().filter(|&&e| e < 0.0).sum()
    }
}

/// Builds the Nambu matrix of the conditional Hamiltonian with the given
/// perturbed sites (the chain sites coupled to excited qubits).
pub fn build_nambu(
    params: &ModelParams,
    perturbed: impl IntoIterator<Item = usize>,
) -> Result<NambuMatrix> {
    let length = params.chain_length();
    let j = params.coupling();
    let gamma = params.gamma();
    let mut field = vec![j * params.lambda(); length];
    for site in perturbed {
        if site == 0 || site > length {
            return Err(Error::SiteOutOfRange { site, length });
        }
        field[site - 1] += params.epsilon();
    }

    let dim = 2 * length;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (idx, &f) in field.iter().enumerate() {
        h[(idx, idx)] = -f;
        h[(length + idx, length + idx)] = f;
    }
    for b in params.active_bonds() {
        let (p, q) = (b - 1, b); // 0-based sites of bond b
        // hopping: alpha_{p,q} = -J
        h[(p, q)] = -0.5 * j;
        h[(q, p)] = -0.5 * j;
        h[(length + p, length + q)] = 0.5 * j;
        h[(length + q, length + p)] = 0.5 * j;
        // pairing: beta_{p,q} = -J*gamma, antisymmetric
        h[(p, length + q)] = -0.5 * j * gamma;
        h[(q, length + p)] = 0.5 * j * gamma;
        h[(length + q, p)] = -0.5 * j * gamma;
        h[(length + p, q)] = 0.5 * j * gamma;
    }
    Ok(NambuMatrix { sites: length, matrix: h })
}

/// Canonical Bogoliubov mode frame: the L annihilator modes `(u_k; v_k)`
/// with energies E_k >= 0, plus the derived Majorana rotation blocks
/// `P` (rows `(u+v)^T`) and `Q` (rows `(u-v)^T`), both orthogonal.
///
/// Zero modes (E below threshold) are split deterministically with the
/// particle-hole involution `sigma(w) = swap halves of w`, pairing its +1
/// and -1 eigenvectors within the zero eigenspace.
#[derive(Debug, Clone)]
pub(crate) struct ModeFrame {
    pub energies: DVector<f64>,
    /// 2L x L annihilator columns (u_k; v_k).
    pub annihilators: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

pub(crate) enum ZeroHandling {
    Reject,
    SigmaSplit,
}

impl ModeFrame {
    pub fn from_nambu(nambu: &NambuMatrix, zeros: ZeroHandling) -> Result<Self> {
        let sites = nambu.sites();
        let dim = nambu.dim();
        let (vals, vecs) = nambu.eigen();
        let min_abs = vals.iter().fold(f64::INFINITY, |m, &e| m.min(e.abs()));
        let zero_idx: Vec<usize> = (0..dim)
            .filter(|&i| vals[i].abs() < ZERO_MODE_THRESHOLD)
            .collect();
        if !zero_idx.is_empty() {
            if let ZeroHandling::Reject = zeros {
                return Err(Error::DegenerateGroundState {
                    energy: min_abs,
                    threshold: ZERO_MODE_THRESHOLD,
                    gamma: f64::NAN,
                    lambda: f64::NAN,
                    length: sites,
                });
            }
        }
        let mut energies = Vec::with_capacity(sites);
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(sites);
        for i in 0..dim {
            if vals[i] >= ZERO_MODE_THRESHOLD {
                energies.push(vals[i]);
                columns.push(vecs.column(i).into_owned());
            }
        }
        if !zero_idx.is_empty() {
            let count = zero_idx.len();
            if !count.is_multiple_of(2) {
                return Err(Error::Numerical {
                    context: "mode frame".into(),
                    detail: format!("odd zero-mode multiplicity {count}"),
                });
            }
            // particle-hole involution restricted to the zero eigenspace
            let z = DMatrix::from_columns(
                &zero_idx.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>(),
            );
            let sigma_z = swap_halves(&z);
            let overlap = z.tr_mul(&sigma_z); // symmetric, eigenvalues ±1
            let eig = overlap.symmetric_eigen();
            let mut plus: Vec<DVector<f64>> = Vec::new();
            let mut minus: Vec<DVector<f64>> = Vec::new();
            for i in 0..count {
                let coeff = eig.eigenvectors.column(i).into_owned();
                let vector = &z * &coeff;
                if eig.eigenvalues[i] > 0.5 {
                    plus.push(vector);
                } else if eig.eigenvalues[i] < -0.5 {
                    minus.push(vector);
                } else {
                    return Err(Error::Numerical {
                        context: "mode frame".into(),
                        detail: format!(
                            "particle-hole involution eigenvalue {} not ±1",
                            eig.eigenvalues[i]
                        ),
                    });
                }
            }
            if plus.len() != minus.len() {
                return Err(Error::Numerical {
                    context: "mode frame".into(),
                    detail: "unbalanced particle-hole split of the zero eigenspace".into(),
                });
            }
            let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
            for (a, b) in plus.into_iter().zip(minus) {
                energies.push(0.0);
                columns.push((a + b) * inv_sqrt2);
            }
        }
        debug_assert_eq!(columns.len(), sites);
        let annihilators = DMatrix::from_columns(&columns);
        let u = annihilators.rows(0, sites).into_owned();
        let v = annihilators.rows(sites, sites).into_owned();
        let p = (&u + &v).transpose();
        let q = (&u - &v).transpose();
        Ok(Self {
            energies: DVector::from_vec(energies),
            annihilators,
            p,
            q,
        })
    }

    /// Orthonormal filled-mode frame: the particle-hole partners
    /// `sigma(a_k) = (v_k; u_k)` of the annihilator columns.
    pub fn filled_partners(&self) -> DMatrix<f64> {
        swap_halves(&self.annihilators)
    }
}

fn swap_halves(m: &DMatrix<f64>) -> DMatrix<f64> {
    let half = m.nrows() / 2;
    let mut out = m.clone_owned();
    for col in 0..m.ncols() {
        for row in 0..half {
            out[(row, col)] = m[(half + row, col)];
            out[(half + row, col)] = m[(row, col)];
        }
    }
    out
}

/// Ground-state two-point functions `[rho_0]_{ij} = <Psi_i^dag Psi_j>` of the
/// unperturbed chain, held as the filled-mode frame `W` with `rho_0 = W W^T`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    sites: usize,
    frame: ModeFrame,
    filled: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        2 * self.sites
    }

    /// Orthonormal frame of filled Bogoliubov modes (2L x L).
    pub fn filled_modes(&self) -> &DMatrix<f64> {
        &self.filled
    }

    /// Annihilator mode frame of the same state.
    pub(crate) fn mode_frame(&self) -> &ModeFrame {
        &self.frame
    }

    /// Number of filled modes, always L.
    pub fn rank(&self) -> usize {
        self.filled.ncols()
    }

    /// Materializes `rho_0 = W W^T`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.filled * self.filled.transpose()
    }

    /// Occupation `<c_j^dag c_j>` of site `j` (1-based).
    pub fn occupation(&self, site: usize) -> f64 {
        self.filled.row(site - 1).iter().map(|v| v * v).sum()
    }
}

/// Correlation matrix of the unperturbed ground state, rejecting zero modes.
pub fn ground_correlations(params: &ModelParams) -> Result<CorrelationMatrix> {
    ground_correlations_with_policy(params, ZeroModePolicy::Reject)
}

/// As [`ground_correlations`] with an explicit zero-mode policy.
pub fn ground_correlations_with_policy(
    params: &ModelParams,
    policy: ZeroModePolicy,
) -> Result<CorrelationMatrix> {
    let nambu = build_nambu(params, [])?;
    let handling = match policy {
        ZeroModePolicy::Reject => ZeroHandling::Reject,
        ZeroModePolicy::LeaveEmpty => ZeroHandling::SigmaSplit,
    };
    let frame = ModeFrame::from_nambu(&nambu, handling).map_err(|e| match e {
        Error::DegenerateGroundState { energy, threshold, length, .. } => {
            Error::DegenerateGroundState {
                energy,
                threshold,
                gamma: params.gamma(),
                lambda: params.lambda(),
                length,
            }
        }
        other => other,
    })?;
    let filled = frame.filled_partners();
    Ok(CorrelationMatrix {
        sites: params.chain_length(),
        frame,
        filled,
    })
}

/// Unitary single-particle propagator `e^{i H t}`.
#[derive(Debug, Clone)]
pub struct Propagator {
    matrix: DMatrix<C64>,
}

impl Propagator {
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `e^{i H t}` by eigendecomposition; exact group properties hold to
/// rounding (`U(t) U(-t) = 1`, `U(0) = 1`).
pub fn propagator(h: &NambuMatrix, t: f64) -> Propagator {
    let (vals, vecs) = h.eigen();
    let dim = h.dim();
    let mut scaled_cos = vecs.clone();
    let mut scaled_sin = vecs.clone();
    for k in 0..dim {
        let (s, c) = (vals[k] * t).sin_cos();
        scaled_cos.column_mut(k).scale_mut(c);
        scaled_sin.column_mut(k).scale_mut(s);
    }
    let re = &scaled_cos * vecs.transpose();
    let im = &scaled_sin * vecs.transpose();
    Propagator { matrix: assemble(&re, &im) }
}
