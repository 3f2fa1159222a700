//! Fixed-magnetization sectors of an `L`-site spin-1/2 chain.
//!
//! A z-product state is stored as a bitmask: bit `j` set means spin `j` is up.
//! Sector states are kept in ascending integer order, so `index_of` is a
//! binary search.

use crate::error::{Error, Result};

/// Largest supported chain length. Keeps every configuration in a `u32`.
pub const MAX_SITES: usize = 24;

/// A z-product state `|z_n>` of an `L`-site chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfiguration {
    bits: u32,
    sites: u8,
}

impl SpinConfiguration {
    pub fn new(bits: u32, sites: usize) -> Result<Self> {
        if sites == 0 || sites > MAX_SITES {
            return Err(Error::invalid(format!(
                "site count {sites} outside 1..={MAX_SITES}"
            )));
        }
        if bits >> sites != 0 {
            return Err(Error::invalid(format!(
                "bits {bits:#b} exceed {sites} sites"
            )));
        }
        Ok(Self {
            bits,
            sites: sites as u8,
        })
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.sites as usize
    }

    /// Number of up spins.
    #[inline]
    pub fn up_count(&self) -> u32 {
        self.bits.count_ones()
    }

    #[inline]
    pub(crate) fn sz_unchecked(&self, site: usize) -> f64 {
        if (self.bits >> site) & 1 == 1 {
            0.5
        } else {
            -0.5
        }
    }
}

/// `S^z` eigenvalue (+1/2 or -1/2) of `config` at `site`.
pub fn sz_at(config: SpinConfiguration, site: usize) -> Result<f64> {
    if site >= config.sites() {
        return Err(Error::invalid(format!(
            "site {site} out of range for L = {}",
            config.sites()
        )));
    }
    Ok(config.sz_unchecked(site))
}

/// A total-magnetization sector, enumerated in ascending bit order.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    sites: usize,
    two_m: i32,
    states: Vec<u32>,
}

/// Sector used when none is requested: `2M = 0` for even `L`, `2M = 1` for odd.
pub fn default_two_m(sites: usize) -> i32 {
    (sites % 2) as i32
}

/// Enumerate all configurations of `sites` spins with `sum_j 2 s_j = two_m`.
pub fn enumerate_sector(sites: usize, two_m: i32) -> Result<SectorBasis> {
    if sites == 0 || sites > MAX_SITES {
        return Err(Error::invalid(format!(
            "site count {sites} outside 1..={MAX_SITES}"
        )));
    }
    let l = sites as i32;
    if two_m.abs() > l || (two_m - l).rem_euclid(2) != 0 {
        return Err(Error::invalid(format!(
            "2M = {two_m} incompatible with L = {sites} (need |2M| <= L and equal parity)"
        )));
    }
    let ups = ((l + two_m) / 2) as u32;
    let limit: u64 = 1u64 << sites;
    let mut states = Vec::with_capacity(binomial(sites as u64, ups as u64) as usize);
    if ups == 0 {
        states.push(0);
    } else {
        // Gosper's hack: next integer with the same popcount.
        let mut v: u64 = (1u64 << ups) - 1;
        while v < limit {
            states.push(v as u32);
            let c = v & v.wrapping_neg();
            let r = v + c;
            v = (((r ^ v) >> 2) / c) | r;
        }
    }
    Ok(SectorBasis {
        sites,
        two_m,
        states,
    })
}

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

impl SectorBasis {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn two_m(&self) -> i32 {
        self.two_m
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn up_count(&self) -> u32 {
        ((self.sites as i32 + self.two_m) / 2) as u32
    }

    /// Raw bitmasks in ascending order.
    pub fn raw_states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, index: usize) -> SpinConfiguration {
        SpinConfiguration {
            bits: self.states[index],
            sites: self.sites as u8,
        }
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = SpinConfiguration> + '_ {
        self.states.iter().map(move |&bits| SpinConfiguration {
            bits,
            sites: self.sites as u8,
        })
    }

    /// Position of `config` in the sector.
    pub fn index_of(&self, config: SpinConfiguration) -> Result<usize> {
        if config.sites() != self.sites {
            return Err(Error::NotFound(format!(
                "configuration has {} sites, sector has {}",
                config.sites(),
                self.sites
            )));
        }
        self.index_of_bits(config.bits)
            .ok_or_else(|| Error::NotFound(format!("{:#b} not in sector", config.bits)))
    }

    #[inline]
    pub(crate) fn index_of_bits(&self, bits: u32) -> Option<usize> {
        self.states.binary_search(&bits).ok()
    }
}
