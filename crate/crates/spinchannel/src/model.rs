//! Physical configuration, basis strings, and the qubit-to-site layout.
//!
//! The environment is an open spin-1/2 XY chain of `L = n + (n-1)*m` sites:
//! `n` qubits couple to every `(m+1)`-th site, with `m` spacer spins between
//! consecutive coupled sites. Qubit `j` couples to the first site of its
//! block, `site = 1 + (j-1)(m+1)`. Sites, qubits and bonds are 1-based in
//! the API; serialized configuration uses 0-based indices (see `config`).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximum number of qubits a basis string can address (bit-packed in a u64).
pub const MAX_QUBITS: usize = 64;

/// Full physical configuration of the chain-environment channel.
///
/// Immutable after construction; cheap to clone and safe to share across
/// parallel workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n_qubits: usize,
    gamma: f64,
    lambda: f64,
    coupling: f64,
    epsilon: f64,
    spacing: usize,
    broken_bonds: BTreeSet<usize>,
}

impl ModelParams {
    /// Validates and builds a parameter set with no broken bonds.
    ///
    /// `gamma` is the XY anisotropy in [0, 1], `lambda` the transverse field
    /// (>= 0), `coupling` the exchange energy J (> 0), `epsilon` the
    /// qubit-chain coupling, `spacing` the number m of spacer spins between
    /// consecutive coupled sites.
    pub fn new(
        n_qubits: usize,
        gamma: f64,
        lambda: f64,
        coupling: f64,
        epsilon: f64,
        spacing: usize,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidParams("n_qubits must be >= 1".into()));
        }
        if n_qubits > MAX_QUBITS {
            return Err(Error::SizeLimitExceeded {
                what: "n_qubits",
                requested: n_qubits,
                max: MAX_QUBITS,
            });
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParams(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidParams(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if !coupling.is_finite() || coupling <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "coupling J must be > 0, got {coupling}"
            )));
        }
        if !epsilon.is_finite() {
            return Err(Error::InvalidParams(format!(
                "epsilon must be finite, got {epsilon}"
            )));
        }
        Ok(Self {
            n_qubits,
            gamma,
            lambda,
            coupling,
            epsilon,
            spacing,
            broken_bonds: BTreeSet::new(),
        })
    }

    /// Replaces the set of broken bonds. Bond `b` (1-based, `1..=L-1`)
    /// couples sites `b` and `b+1`; broken bonds are removed from the chain
    /// Hamiltonian.
    pub fn with_broken_bonds(mut self, bonds: impl IntoIterator<Item = usize>) -> Result<Self> {
        let length = self.chain_length();
        let bonds: BTreeSet<usize> = bonds.into_iter().collect();
        for &b in &bonds {
            if b == 0 || b >= length {
                return Err(Error::InvalidParams(format!(
                    "broken bond {b} outside 1..={}",
                    length - 1
                )));
            }
        }
        self.broken_bonds = bonds;
        Ok(self)
    }

    /// Returns a copy with a different transverse field (used by lambda scans).
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut p = Self::new(
            self.n_qubits,
            self.gamma,
            lambda,
            self.coupling,
            self.epsilon,
            self.spacing,
        )?;
        p.broken_bonds = self.broken_bonds.clone();
        Ok(p)
    }

    /// Returns a copy with a different spacer count. Broken bonds are
    /// dropped since bond indices change meaning with the geometry.
    pub fn with_spacing(&self, spacing: usize) -> Result<Self> {
        Self::new(
            self.n_qubits,
            self.gamma,
            self.lambda,
            self.coupling,
            self.epsilon,
            spacing,
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn broken_bonds(&self) -> &BTreeSet<usize> {
        &self.broken_bonds
    }

    /// Chain length `L = n + (n-1)*m`.
    pub fn chain_length(&self) -> usize {
        self.n_qubits + (self.n_qubits - 1) * self.spacing
    }

    /// Chain site coupled to qubit `j` (1-based): `1 + (j-1)(m+1)`.
    pub fn qubit_site(&self, qubit: usize) -> Result<usize> {
        if qubit == 0 || qubit > self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(1 + (qubit - 1) * (self.spacing + 1))
    }

    /// Chain sites whose transverse field is shifted by `-epsilon` when the
    /// qubits excited in `x` are traced through the site map.
    pub fn perturbed_sites(&self, x: &BasisString) -> Result<BTreeSet<usize>> {
        if x.len() != self.n_qubits {
            return Err(Error::InvalidParams(format!(
                "basis string has {} qubits, model has {}",
                x.len(),
                self.n_qubits
            )));
        }
        x.excited_qubits()
            .into_iter()
            .map(|j| self.qubit_site(j))
            .collect()
    }

    /// Active (unbroken) bonds as 1-based indices; bond `b` couples sites
    /// `b` and `b+1`.
    pub fn active_bonds(&self) -> Vec<usize> {
        (1..self.chain_length())
            .filter(|b| !self.broken_bonds.contains(b))
            .collect()
    }

    /// Connected components of the chain under the active bonds, as inclusive
    /// 1-based site ranges in ascending order. A fully connected chain yields
    /// a single block `(1, L)`.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let length = self.chain_length();
        let mut blocks = Vec::new();
        let mut start = 1;
        for b in 1..length {
            if self.broken_bonds.contains(&b) {
                blocks.push((start, b));
                start = b + 1;
            }
        }
        blocks.push((start, length));
        blocks
    }

    /// Generalized-model preset: `m = 4` spacers with the middle spacer link
    /// of every gap removed, so the environment decomposes into disconnected
    /// blocks of at most 5 spins, one coupled site each. Used to switch off
    /// the chain's critical behavior.
    pub fn broken_five_site_blocks(
        n_qubits: usize,
        gamma: f64,
        lambda: f64,
        coupling: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let params = Self::new(n_qubits, gamma, lambda, coupling, epsilon, 4)?;
        // Gap after qubit j spans spacer sites s+1..s+4 with s = 1 + 5(j-1);
        // cut the middle spacer link (s+2, s+3).
        let cuts: Vec<usize> = (1..n_qubits).map(|j| 5 * (j - 1) + 3).collect();
        params.with_broken_bonds(cuts)
    }
}

/// An n-qubit computational-basis label over the alphabet {g, e},
/// bit-packed with qubit `j` (1-based) at bit `j-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisString {
    bits: u64,
    len: usize,
}

impl BasisString {
    /// Builds from a bit pattern; bits above `len` must be clear.
    pub fn from_bits(bits: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_QUBITS {
            return Err(Error::InvalidParams(format!(
                "basis string length {len} outside 1..={MAX_QUBITS}"
            )));
        }
        if len < 64 && bits >> len != 0 {
            return Err(Error::InvalidParams(format!(
                "bit pattern {bits:#x} does not fit in {len} qubits"
            )));
        }
        Ok(Self { bits, len })
    }

    /// The all-ground string `gg...g`.
    pub fn all_ground(len: usize) -> Result<Self> {
        Self::from_bits(0, len)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when qubit `j` (1-based) is excited.
    pub fn is_excited(&self, qubit: usize) -> bool {
        qubit >= 1 && qubit <= self.len && (self.bits >> (qubit - 1)) & 1 == 1
    }

    /// 1-based indices of excited qubits, ascending.
    pub fn excited_qubits(&self) -> Vec<usize> {
        (1..=self.len).filter(|&j| self.is_excited(j)).collect()
    }

    /// Number of excited qubits.
    pub fn excited_count(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl fmt::Display for BasisString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 1..=self.len {
            f.write_str(if self.is_excited(j) { "e" } else { "g" })?;
        }
        Ok(())
    }
}

impl FromStr for BasisString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let mut len = 0usize;
        for (i, c) in s.chars().enumerate() {
            match c {
                'e' => bits |= 1 << i,
                'g' => {}
                other => {
                    return Err(Error::InvalidParams(format!(
                        "basis string symbol '{other}' (expected 'g' or 'e')"
                    )))
                }
            }
            len += 1;
            if len > MAX_QUBITS {
                return Err(Error::InvalidParams(format!(
                    "basis string longer than {MAX_QUBITS} qubits"
                )));
            }
        }
        Self::from_bits(bits, len)
    }
}
