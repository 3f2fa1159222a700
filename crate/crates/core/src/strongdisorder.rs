//! Strong-disorder perturbation theory for the typical log-susceptibility.
//!
//! At `W -> infinity` eigenstates are z-product states. To first order in
//! `1/W` only a flip-flop across a bond touching the probe site contributes,
//! giving
//!
//! ```text
//! chi1 = 1/(4 W^2) * [ (s_l - s_{l+1})^2 / (h_l - h_{l+1})^4 + (s_l - s_{l-1})^2 / (h_l - h_{l-1})^4 ]
//! ```
//!
//! States whose probe site sits inside a polarized domain of `2i - 1` spins
//! first respond at order `W^{-2i}`. Weighting each order by the probability
//! that the domain has exactly that size gives the prefactor `C(L)` in
//! `zeta = -C(L) log W + B`, which tends to `8/3` for an unconstrained chain.

use crate::basis::SpinConfiguration;
use crate::error::{Error, Result};

/// `lim_{L -> inf} C(L)`.
pub const INFINITE_CHAIN_PREFACTOR: f64 = 8.0 / 3.0;

/// First-order susceptibility of the product state `config` to a field on `site`.
pub fn first_order_chi(
    config: SpinConfiguration,
    fields: &[f64],
    w: f64,
    site: usize,
) -> Result<f64> {
    let l = config.sites();
    if fields.len() != l {
        return Err(Error::invalid(format!(
            "{} fields for a {l}-site configuration",
            fields.len()
        )));
    }
    if site >= l {
        return Err(Error::invalid(format!("site {site} out of range for L = {l}")));
    }
    if !(w > 0.0) {
        return Err(Error::invalid("W must be > 0"));
    }
    let s = |j: usize| config.sz_unchecked(j);
    let mut total = 0.0;
    for nb in [(site + 1) % l, (site + l - 1) % l] {
        if nb == site {
            continue;
        }
        let ds = s(site) - s(nb);
        if ds == 0.0 {
            continue;
        }
        let dh = fields[site] - fields[nb];
        if dh == 0.0 {
            return Err(Error::Resonance(format!(
                "h_{site} = h_{nb} with anti-aligned spins"
            )));
        }
        total += ds * ds / dh.powi(4);
    }
    Ok(total / (4.0 * w * w))
}

/// Probability `p_i` that a polarized domain of `2i - 1` spins in the
/// zero-magnetization sector of an `L`-site chain is flanked on both sides
/// by spins of the same polarization. Factors with a non-positive numerator
/// are clamped to zero. `p_0 = 1` by convention.
pub fn sector_probability(sites: usize, i: usize) -> f64 {
    if i == 0 {
        return 1.0;
    }
    let l = sites as f64;
    let half = l / 2.0;
    let factor = |k: f64| {
        let num = half - k;
        let den = l - k;
        if num <= 0.0 || den <= 0.0 {
            0.0
        } else {
            num / den
        }
    };
    let i = i as f64;
    factor(2.0 * i - 1.0) * factor(2.0 * i)
}

/// `C(L)` together with its per-order contributions.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefactorCurve {
    pub sites: usize,
    pub c_of_l: f64,
    /// `terms[i - 1] = (prod_{j<i} p_j) (1 - p_i) 2i`.
    pub terms: Vec<f64>,
}

/// Finite-size prefactor of `-log W` in the strong-disorder `zeta`.
///
/// The sum runs over `i = 1..=ceil(L/4)`; the last factor `p_i` vanishes
/// there for every even `L`, so the domain-size probabilities are normalized.
pub fn log_w_prefactor(sites: usize) -> Result<PrefactorCurve> {
    if sites < 4 || sites % 2 != 0 {
        return Err(Error::invalid(format!(
            "prefactor needs an even L >= 4, got {sites}"
        )));
    }
    let top = sites.div_ceil(4);
    let mut reach = 1.0;
    let mut terms = Vec::with_capacity(top);
    for i in 1..=top {
        let p = sector_probability(sites, i);
        terms.push(reach * (1.0 - p) * 2.0 * i as f64);
        reach *= p;
    }
    Ok(PrefactorCurve {
        sites,
        c_of_l: terms.iter().sum(),
        terms,
    })
}

/// Prefactor with every `p_i = 1/4`, truncated after `orders` terms.
pub fn unconstrained_prefactor(orders: usize) -> f64 {
    (1..=orders)
        .map(|i| 0.75 * 0.25f64.powi(i as i32 - 1) * 2.0 * i as f64)
        .sum()
}

/// `-c log W + b`.
pub fn asymptote_zeta_with(c: f64, w: f64, b: f64) -> f64 {
    -c * w.ln() + b
}

/// `-C(L) log W + b`.
pub fn asymptote_zeta(w: f64, sites: usize, b: f64) -> Result<f64> {
    Ok(asymptote_zeta_with(log_w_prefactor(sites)?.c_of_l, w, b))
}
