//! Disorder sampling and dense assembly of the sector Hamiltonian
//!
//! ```text
//! H = (1/W) sum_j (S^x_j S^x_{j+1} + S^y_j S^y_{j+1} + delta S^z_j S^z_{j+1}) + sum_j h_j S^z_j
//! ```
//!
//! with `h_j` uniform on `[-1, 1]`.

use crate::basis::SectorBasis;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Anisotropy used throughout unless overridden.
pub const DEFAULT_DELTA: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingParams {
    /// Disorder strength `W`; the exchange terms carry `1/W`.
    pub w: f64,
    pub delta: f64,
    pub sites: usize,
    pub periodic: bool,
}

impl CouplingParams {
    pub fn new(sites: usize, w: f64) -> Result<Self> {
        let p = Self {
            w,
            delta: DEFAULT_DELTA,
            sites,
            periodic: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(Error::invalid(format!("W must be finite and > 0, got {}", self.w)));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        Ok(())
    }

    /// Bonds `(j, j+1)`; the wrap-around bond is included for periodic chains.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_bonds = if self.periodic {
            self.sites
        } else {
            self.sites.saturating_sub(1)
        };
        (0..n_bonds).map(move |j| (j, (j + 1) % self.sites))
    }
}

/// One draw of the random fields `h_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderRealization {
    pub fields: Vec<f64>,
    pub seed: u64,
}

impl DisorderRealization {
    pub fn sites(&self) -> usize {
        self.fields.len()
    }
}

/// Draw `sites` fields i.i.d. uniform on `[-1, 1]` from a SplitMix64 stream.
pub fn sample_disorder(seed: u64, sites: usize) -> DisorderRealization {
    let mut rng = SplitMix64::new(seed);
    let fields = (0..sites).map(|_| rng.next_symmetric()).collect();
    DisorderRealization { fields, seed }
}

/// Row-major dense real symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DenseSymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// Build from row-major data; fails unless the data is exactly symmetric.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                data.len()
            )));
        }
        let m = Self { dim, data };
        if !m.is_symmetric() {
            return Err(Error::invalid("matrix is not symmetric"));
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    /// Sets both `(row, col)` and `(col, row)`.
    pub fn set_sym(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
        self.data[col * self.dim + row] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `y = H x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Assemble the sector Hamiltonian in the z-product basis.
pub fn build_hamiltonian(
    params: &CouplingParams,
    realization: &DisorderRealization,
    basis: &SectorBasis,
) -> Result<DenseSymmetricMatrix> {
    params.validate()?;
    if params.sites != basis.sites() || realization.sites() != basis.sites() {
        return Err(Error::invalid(format!(
            "site counts disagree: params {}, realization {}, basis {}",
            params.sites,
            realization.sites(),
            basis.sites()
        )));
    }
    let dim = basis.dim();
    let zz = params.delta / params.w;
    let flip = 0.5 / params.w;
    let bonds: Vec<(usize, usize)> = params.bonds().collect();
    let mut h = DenseSymmetricMatrix::zeros(dim);

    for (a, cfg) in basis.states().enumerate() {
        let bits = cfg.bits();
        let mut bond_sum = 0.0;
        for &(i, j) in &bonds {
            bond_sum += cfg.sz_unchecked(i) * cfg.sz_unchecked(j);
        }
        let field_sum: f64 = realization
            .fields
            .iter()
            .enumerate()
            .map(|(j, hj)| hj * cfg.sz_unchecked(j))
            .sum();
        h.data[a * dim + a] = zz * bond_sum + field_sum;

        for &(i, j) in &bonds {
            if ((bits >> i) ^ (bits >> j)) & 1 == 1 {
                let partner = bits ^ ((1 << i) | (1 << j));
                let b = basis
                    .index_of_bits(partner)
                    .expect("flip-flop preserves magnetization");
                // Each pair is reached once from either end, so both halves
                // receive the same sum in the same order.
                h.data[a * dim + b] += flip;
            }
        }
    }
    debug_assert!(h.is_symmetric());
    Ok(h)
}

/// The probe `S^z_site` in the product basis, one entry per sector state.
pub fn sz_diagonal(basis: &SectorBasis, site: usize) -> Result<Vec<f64>> {
    if site >= basis.sites() {
        return Err(Error::invalid(format!(
            "site {site} out of range for L = {}",
            basis.sites()
        )));
    }
    Ok(basis.states().map(|c| c.sz_unchecked(site)).collect())
}
