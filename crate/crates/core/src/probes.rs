//! Per-realization localization probes built from an eigendecomposition and
//! the rotated probe operator `M_nm = <n|S^z_l|m>`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::eigen::ObservableMatrix;
use crate::error::{Error, Result};
use crate::model::CouplingParams;
use crate::stats::{fit_line, quantile_sorted, SlopeFit};

/// Probe values attached to one eigenstate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenstateProbe {
    pub chi: f64,
    /// `log chi`, absent when `chi` is zero or infinite.
    pub zeta: Option<f64>,
    pub diag_sz: f64,
    /// Absent for the two spectrum edges.
    pub gap_ratio: Option<f64>,
}

/// Collect the per-state probes for one realization.
pub fn eigenstate_probes(m: &ObservableMatrix, energies: &[f64], mu: f64) -> Result<Vec<EigenstateProbe>> {
    let chis = all_susceptibilities(m, energies, mu)?;
    let gaps = if energies.len() >= 3 {
        Some(gap_ratios(energies)?)
    } else {
        None
    };
    Ok((0..energies.len())
        .map(|n| {
            let chi = chis[n];
            EigenstateProbe {
                chi,
                zeta: (chi > 0.0 && chi.is_finite()).then(|| chi.ln()),
                diag_sz: m.get(n, n),
                gap_ratio: gaps.as_ref().and_then(|g| {
                    (n >= 1 && n + 1 < energies.len()).then(|| g.ratios[n - 1])
                }),
            }
        })
        .collect())
}

fn check_inputs(m: &ObservableMatrix, energies: &[f64], mu: f64) -> Result<()> {
    if m.dim() != energies.len() {
        return Err(Error::invalid(format!(
            "observable dimension {} but {} energies",
            m.dim(),
            energies.len()
        )));
    }
    if !(mu >= 0.0) {
        return Err(Error::invalid(format!("cutoff mu must be >= 0, got {mu}")));
    }
    Ok(())
}

#[inline]
fn chi_row(row: &[f64], energies: &[f64], n: usize, mu: f64) -> f64 {
    let en = energies[n];
    let mu2 = mu * mu;
    let mut total = 0.0;
    for (m, (&x, &em)) in row.iter().zip(energies).enumerate() {
        if m == n {
            continue;
        }
        let w2 = (em - en) * (em - en);
        let x2 = x * x;
        if mu == 0.0 {
            if w2 == 0.0 {
                if x2 != 0.0 {
                    return f64::INFINITY;
                }
                continue;
            }
            total += x2 / w2;
        } else {
            let den = w2 + mu2;
            total += w2 * x2 / (den * den);
        }
    }
    total
}

/// Fidelity susceptibility of eigenstate `n`,
/// `chi_n = sum_{m != n} w^2 M_nm^2 / (w^2 + mu^2)^2` with `w = E_m - E_n`.
///
/// At `mu = 0` an exact degeneracy with a nonzero matrix element yields
/// `f64::INFINITY`, which callers count and exclude.
pub fn fidelity_susceptibility(m: &ObservableMatrix, energies: &[f64], n: usize, mu: f64) -> Result<f64> {
    check_inputs(m, energies, mu)?;
    if n >= energies.len() {
        return Err(Error::invalid(format!("state {n} out of range")));
    }
    Ok(chi_row(m.row(n), energies, n, mu))
}

pub fn all_susceptibilities(m: &ObservableMatrix, energies: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_inputs(m, energies, mu)?;
    Ok((0..energies.len())
        .map(|n| chi_row(m.row(n), energies, n, mu))
        .collect())
}

/// Typical and mean susceptibility over a collection of eigenstates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalSusceptibility {
    /// Mean of `log chi` over the finite, positive entries.
    pub zeta: f64,
    /// Arithmetic mean of the same entries.
    pub mean_chi: f64,
    pub used: usize,
    pub zero: usize,
    pub infinite: usize,
}

pub fn typical_log_susceptibility(chis: &[f64]) -> Result<TypicalSusceptibility> {
    let mut log_sum = 0.0;
    let mut sum = 0.0;
    let (mut used, mut zero, mut infinite) = (0usize, 0usize, 0usize);
    for &c in chis {
        if c.is_infinite() {
            infinite += 1;
        } else if c > 0.0 {
            log_sum += c.ln();
            sum += c;
            used += 1;
        } else if c == 0.0 {
            zero += 1;
        } else {
            return Err(Error::invalid(format!("susceptibility {c} is negative or NaN")));
        }
    }
    if used == 0 {
        return Err(Error::invalid(format!(
            "no finite positive susceptibilities ({zero} zero, {infinite} infinite)"
        )));
    }
    Ok(TypicalSusceptibility {
        zeta: log_sum / used as f64,
        mean_chi: sum / used as f64,
        used,
        zero,
        infinite,
    })
}

/// Log-spaced frequency bins anchored at `10^(k / per_decade)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub per_decade: u32,
    /// Exponent index of the first edge.
    pub first: i32,
    pub bins: usize,
}

impl FrequencyGrid {
    /// Smallest anchored grid covering `[lo, hi]`.
    pub fn covering(lo: f64, hi: f64, per_decade: u32) -> Result<Self> {
        if !(lo > 0.0) || !(hi > lo) || per_decade == 0 {
            return Err(Error::invalid(format!(
                "frequency range [{lo}, {hi}] with {per_decade} bins per decade"
            )));
        }
        let pd = per_decade as f64;
        let first = (lo.log10() * pd).floor() as i32;
        let last = (hi.log10() * pd).ceil() as i32;
        Ok(Self {
            per_decade,
            first,
            bins: (last - first).max(1) as usize,
        })
    }

    /// Default binning for a sector: from `1e-3` of the estimated mean level
    /// spacing up to the bandwidth bound, both derived from the couplings
    /// alone so that every realization shares the same edges.
    pub fn for_sector(params: &CouplingParams, dim: usize, per_decade: u32) -> Result<Self> {
        let bandwidth = bandwidth_bound(params);
        let spacing = bandwidth / (dim.max(2) - 1) as f64;
        Self::covering(1e-3 * spacing, bandwidth, per_decade)
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|k| 10f64.powf((self.first + k as i32) as f64 / self.per_decade as f64))
            .collect()
    }
}

/// Upper bound on `E_max - E_min`: twice the operator norm bound
/// `L/2 + n_bonds (1/2 + |delta|/4) / W`.
pub fn bandwidth_bound(params: &CouplingParams) -> f64 {
    let bonds = params.bonds().count() as f64;
    params.sites as f64 + bonds * (2.0 + params.delta.abs()) / (2.0 * params.w)
}

/// Binned `|f(w)|^2` for `w > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralHistogram {
    pub edges: Vec<f64>,
    /// Accumulated `M_nm^2 / D` per bin, over ordered pairs `n != m`.
    pub weight: Vec<f64>,
    /// Ordered pairs landing in each bin.
    pub counts: Vec<u64>,
    /// Pairs with `|w|` below the first edge (including exact degeneracies).
    pub underflow: f64,
    /// Pairs with `|w|` at or above the last edge.
    pub overflow: f64,
    pub norm: f64,
    pub n_realizations: usize,
}

impl SpectralHistogram {
    pub fn empty(edges: Vec<f64>, norm: f64) -> Result<Self> {
        validate_edges(&edges)?;
        let bins = edges.len() - 1;
        Ok(Self {
            edges,
            weight: vec![0.0; bins],
            counts: vec![0; bins],
            underflow: 0.0,
            overflow: 0.0,
            norm,
            n_realizations: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.weight.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    /// Geometric bin center.
    pub fn center(&self, k: usize) -> f64 {
        (self.edges[k] * self.edges[k + 1]).sqrt()
    }

    /// `weight / (2 width)`, so that `2 * integral_0^inf density` is the
    /// binned weight. Averaged over the folded-in realizations.
    pub fn density(&self, k: usize) -> f64 {
        self.weight[k] / (2.0 * self.width(k)) / self.n_realizations.max(1) as f64
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.bins()).map(|k| self.density(k)).collect()
    }

    /// Binned plus sink weight, per realization.
    pub fn total_weight(&self) -> f64 {
        (self.weight.iter().sum::<f64>() + self.underflow + self.overflow)
            / self.n_realizations.max(1) as f64
    }

    /// Weight above `omega`, per realization, splitting the straddling bin
    /// linearly in frequency.
    pub fn weight_above(&self, omega: f64) -> f64 {
        let mut above = self.overflow;
        for k in 0..self.bins() {
            let (lo, hi) = (self.edges[k], self.edges[k + 1]);
            if lo >= omega {
                above += self.weight[k];
            } else if hi > omega {
                above += self.weight[k] * (hi - omega) / (hi - lo);
            }
        }
        if omega < self.edges[0] {
            above += self.underflow;
        }
        above / self.n_realizations.max(1) as f64
    }

    /// Fold another histogram with identical edges into this one.
    pub fn merge(&mut self, other: &SpectralHistogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::invalid("cannot merge histograms with different edges"));
        }
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.n_realizations += other.n_realizations;
        Ok(())
    }

    /// Multiply all weights by `factor` (used for site averaging).
    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weight {
            *w *= factor;
        }
        self.underflow *= factor;
        self.overflow *= factor;
    }
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid("need at least two bin edges"));
    }
    if !(edges[0] > 0.0) || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("bin edges must be positive and strictly ascending"));
    }
    Ok(())
}

/// Bin every ordered pair `n != m` at `|E_m - E_n|` with weight `M_nm^2 / D`.
pub fn spectral_histogram(
    m: &ObservableMatrix,
    energies: &[f64],
    edges: &[f64],
    norm: f64,
) -> Result<SpectralHistogram> {
    spectral_histogram_window(m, energies, edges, norm, 0..energies.len())
}

/// As [`spectral_histogram`], restricted to pairs whose first state `n`
/// lies in `rows`; the partner `m` ranges over the whole spectrum.
pub fn spectral_histogram_window(
    m: &ObservableMatrix,
    energies: &[f64],
    edges: &[f64],
    norm: f64,
    rows: Range<usize>,
) -> Result<SpectralHistogram> {
    check_inputs(m, energies, 0.0)?;
    if !(norm > 0.0) {
        return Err(Error::invalid("normalizing dimension must be > 0"));
    }
    let dim = energies.len();
    if rows.start > rows.end || rows.end > dim {
        return Err(Error::invalid(format!("row window {rows:?} outside 0..{dim}")));
    }
    let mut hist = SpectralHistogram::empty(edges.to_vec(), norm)?;
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    let mut add = |w: f64, x: f64, times: u64| {
        if w < lo {
            hist.underflow += x;
        } else if w >= hi {
            hist.overflow += x;
        } else {
            let bin = edges.partition_point(|&e| e <= w) - 1;
            hist.weight[bin] += x;
            hist.counts[bin] += times;
        }
    };
    if rows == (0..dim) {
        // Both orderings of a pair land in the same bin.
        let pair = 2.0 / norm;
        for n in 0..dim {
            let row = m.row(n);
            for k in n + 1..dim {
                add((energies[k] - energies[n]).abs(), row[k] * row[k] * pair, 2);
            }
        }
    } else {
        for n in rows {
            let row = m.row(n);
            for k in (0..dim).filter(|&k| k != n) {
                add((energies[k] - energies[n]).abs(), row[k] * row[k] / norm, 1);
            }
        }
    }
    hist.n_realizations = 1;
    Ok(hist)
}

/// Both sides of the f-sum rule for one realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumRuleReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `(1/D) sum_n (1/4 - M_nn^2)` against the histogram's total weight. Pass
/// the diagonal elements of the same states the histogram was built from.
pub fn sum_rule(hist: &SpectralHistogram, diag_sz: &[f64]) -> SumRuleReport {
    let lhs = hist.total_weight();
    let rhs = diag_sz.iter().map(|d| 0.25 - d * d).sum::<f64>() / hist.norm;
    SumRuleReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    }
}

/// Per-bin geometric mean of densities across realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalCurve {
    pub edges: Vec<f64>,
    /// `exp(mean log density)` over realizations with nonzero density; zero
    /// when every realization is empty in that bin.
    pub density: Vec<f64>,
    /// Realizations left out of each bin because their density was zero.
    pub empty: Vec<usize>,
    pub n_realizations: usize,
}

pub fn typical_spectral_histogram(hists: &[SpectralHistogram]) -> Result<TypicalCurve> {
    let first = hists
        .first()
        .ok_or_else(|| Error::invalid("no histograms to average"))?;
    if hists.iter().any(|h| h.edges != first.edges) {
        return Err(Error::invalid("histograms have mismatched edges"));
    }
    let bins = first.bins();
    let mut log_sum = vec![0.0; bins];
    let mut used = vec![0usize; bins];
    for h in hists {
        for k in 0..bins {
            let d = h.density(k);
            if d > 0.0 {
                log_sum[k] += d.ln();
                used[k] += 1;
            }
        }
    }
    Ok(TypicalCurve {
        edges: first.edges.clone(),
        density: (0..bins)
            .map(|k| {
                if used[k] > 0 {
                    (log_sum[k] / used[k] as f64).exp()
                } else {
                    0.0
                }
            })
            .collect(),
        empty: used.iter().map(|&u| hists.len() - u).collect(),
        n_realizations: hists.len(),
    })
}

/// `Z = 4 exp(<<log diag_sz^2>>)` with zero entries excluded and counted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedFraction {
    pub z: f64,
    pub mean_log: f64,
    pub used: usize,
    pub zero: usize,
}

pub fn conserved_fraction(diag_sz: &[f64]) -> Result<ConservedFraction> {
    if diag_sz.is_empty() {
        return Err(Error::invalid("no diagonal elements"));
    }
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for &d in diag_sz {
        if d != 0.0 {
            log_sum += (d * d).ln();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Undefined(
            "every diagonal element is zero; conserved fraction undefined".into(),
        ));
    }
    let mean_log = log_sum / used as f64;
    Ok(ConservedFraction {
        z: 4.0 * mean_log.exp(),
        mean_log,
        used,
        zero: diag_sz.len() - used,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapRatios {
    /// `r_n` for `n = 1..dim-1` (one per interior level).
    pub ratios: Vec<f64>,
    /// Entries recorded as zero because a consecutive gap vanished.
    pub degenerate: usize,
}

/// `r_n = min(d_n, d_{n+1}) / max(d_n, d_{n+1})` with `d_n = E_{n+1} - E_n`.
pub fn gap_ratios(energies: &[f64]) -> Result<GapRatios> {
    if energies.len() < 3 {
        return Err(Error::invalid(format!(
            "gap ratios need at least 3 levels, got {}",
            energies.len()
        )));
    }
    let mut degenerate = 0;
    let ratios = energies
        .windows(3)
        .map(|w| {
            let a = w[1] - w[0];
            let b = w[2] - w[1];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo <= 0.0 {
                degenerate += 1;
                0.0
            } else {
                lo / hi
            }
        })
        .collect();
    Ok(GapRatios { ratios, degenerate })
}

/// Normalized histogram of `z = log chi` on bins anchored at multiples of
/// the bin width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaDistribution {
    pub bin_width: f64,
    /// Index of the first bin: it covers `[first * width, (first + 1) * width)`.
    pub first: i64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl ZetaDistribution {
    pub fn lower(&self, k: usize) -> f64 {
        (self.first + k as i64) as f64 * self.bin_width
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lower(k) + 0.5 * self.bin_width
    }

    pub fn density(&self, k: usize) -> f64 {
        self.counts[k] as f64 / (self.total as f64 * self.bin_width)
    }
}

pub fn zeta_distribution(zetas: &[f64], bin_width: f64) -> Result<ZetaDistribution> {
    if zetas.is_empty() {
        return Err(Error::invalid("no zeta values"));
    }
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin width must be > 0"));
    }
    if zetas.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("zeta values must be finite"));
    }
    let index = |z: f64| (z / bin_width).floor() as i64;
    let lo = zetas.iter().map(|&z| index(z)).min().unwrap();
    let hi = zetas.iter().map(|&z| index(z)).max().unwrap();
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &z in zetas {
        counts[(index(z) - lo) as usize] += 1;
    }
    Ok(ZetaDistribution {
        bin_width,
        first: lo,
        counts,
        total: zetas.len() as u64,
    })
}

/// Minimum count of the last bin included in a tail fit.
pub const TAIL_MIN_COUNT: u64 = 20;
/// Quantile of `z` where the tail fit starts.
pub const TAIL_START_QUANTILE: f64 = 0.95;

/// Least-squares slope of `log P(z)` over the tail: from the 95th percentile
/// of `z` up to the last bin holding at least [`TAIL_MIN_COUNT`] entries.
pub fn tail_slope(zetas: &[f64], bin_width: f64) -> Result<SlopeFit> {
    let dist = zeta_distribution(zetas, bin_width)?;
    let mut sorted = zetas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let start = quantile_sorted(&sorted, TAIL_START_QUANTILE).unwrap();
    let last = (0..dist.counts.len())
        .rev()
        .find(|&k| dist.counts[k] >= TAIL_MIN_COUNT)
        .ok_or_else(|| Error::InsufficientData("no bin reaches the minimum count".into()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..=last {
        if dist.center(k) >= start && dist.counts[k] > 0 {
            xs.push(dist.center(k));
            ys.push(dist.density(k).ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} tail bins between the 95th percentile and the last populated bin",
            xs.len()
        )));
    }
    let (slope, intercept, rms) = fit_line(&xs, &ys)?;
    Ok(SlopeFit {
        slope,
        intercept,
        window: (xs[0], xs[xs.len() - 1]),
        rms,
        points: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::EigenDecomposition;
    use crate::rng::SplitMix64;

    fn two_level(v: f64) -> ObservableMatrix {
        ObservableMatrix::from_row_major(2, vec![0.1, v, v, -0.1]).unwrap()
    }

    #[test]
    fn commuting_observable_has_zero_chi() {
        let m = ObservableMatrix::from_row_major(3, vec![0.5, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.5])
            .unwrap();
        let chis = all_susceptibilities(&m, &[0.0, 1.0, 2.0], 0.0).unwrap();
        assert!(chis.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn two_level_chi() {
        let (v, w) = (0.3, 0.7);
        let chi = fidelity_susceptibility(&two_level(v), &[0.0, w], 0, 0.0).unwrap();
        assert!((chi - v * v / (w * w)).abs() < 1e-15);
        let reg = fidelity_susceptibility(&two_level(v), &[0.0, w], 0, 0.2).unwrap();
        let expect = w * w * v * v / (w * w + 0.04f64).powi(2);
        assert!((reg - expect).abs() < 1e-15);
    }

    #[test]
    fn degeneracy_flags_infinity() {
        let chi = fidelity_susceptibility(&two_level(0.1), &[1.0, 1.0], 0, 0.0).unwrap();
        assert!(chi.is_infinite());
        let chi = fidelity_susceptibility(&two_level(0.0), &[1.0, 1.0], 0, 0.0).unwrap();
        assert_eq!(chi, 0.0);
        assert!(fidelity_susceptibility(&two_level(0.1), &[0.0, 1.0], 0, -1.0).is_err());
        let summary = typical_log_susceptibility(&[f64::INFINITY, 0.0, 1.0]).unwrap();
        assert_eq!((summary.used, summary.zero, summary.infinite), (1, 1, 1));
    }

    #[test]
    fn cutoff_is_monotone() {
        let mut rng = SplitMix64::new(3);
        let n = 12;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x = 0.5 * rng.next_symmetric();
                data[i * n + j] = x;
                data[j * n + i] = x;
            }
        }
        let m = ObservableMatrix::from_row_major(n, data).unwrap();
        let mut energies: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        energies.sort_by(f64::total_cmp);
        for state in 0..n {
            let mut prev = f64::INFINITY;
            for mu in [0.0, 1e-4, 1e-2, 0.1, 1.0] {
                let c = fidelity_susceptibility(&m, &energies, state, mu).unwrap();
                assert!(c <= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn typical_values() {
        let t = typical_log_susceptibility(&[2.5; 4]).unwrap();
        assert!((t.zeta - 2.5f64.ln()).abs() < 1e-15);
        let e = std::f64::consts::E;
        let t = typical_log_susceptibility(&[e, e.powi(3)]).unwrap();
        assert!((t.zeta - 2.0).abs() < 1e-14);
        assert!((t.mean_chi - 0.5 * (e + e.powi(3))).abs() < 1e-12);
        assert!(typical_log_susceptibility(&[]).is_err());
        assert!(typical_log_susceptibility(&[0.0]).is_err());
    }

    #[test]
    fn histogram_single_pair() {
        let v = 0.2;
        let m = two_level(v);
        let edges = FrequencyGrid::covering(1e-2, 10.0, 10).unwrap().edges();
        let h = spectral_histogram(&m, &[0.0, 0.5], &edges, 2.0).unwrap();
        let hit: Vec<usize> = (0..h.bins()).filter(|&k| h.weight[k] != 0.0).collect();
        assert_eq!(hit.len(), 1);
        assert!((h.weight[hit[0]] - 2.0 * v * v / 2.0).abs() < 1e-16);
        assert!(h.edges[hit[0]] <= 0.5 && 0.5 < h.edges[hit[0] + 1]);

        let doubled = spectral_histogram(&m, &[0.0, 0.5], &edges, 4.0).unwrap();
        for k in 0..h.bins() {
            assert!((doubled.density(k) - 0.5 * h.density(k)).abs() < 1e-16);
        }
        assert!(spectral_histogram(&m, &[0.0, 0.5], &[1.0, 0.5], 2.0).is_err());
    }

    #[test]
    fn sinks_keep_sum_rule() {
        let n = 20;
        let mut rng = SplitMix64::new(17);
        // Random orthogonal-ish basis from a random symmetric matrix.
        let mut h = crate::model::DenseSymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                h.set_sym(i, j, rng.next_symmetric());
            }
        }
        let dec: EigenDecomposition = crate::eigen::diagonalize(h).unwrap();
        let d: Vec<f64> = (0..n).map(|a| if a < n / 2 { 0.5 } else { -0.5 }).collect();
        let m = crate::eigen::rotate_diagonal_observable(&dec, &d).unwrap();
        // A deliberately narrow window forces both sinks to fill.
        let edges = FrequencyGrid::covering(0.5, 1.0, 20).unwrap().edges();
        let hist = spectral_histogram(&m, dec.energies(), &edges, n as f64).unwrap();
        assert!(hist.underflow > 0.0 && hist.overflow > 0.0);
        let report = sum_rule(&hist, &m.diagonal());
        assert!(report.residual <= 1e-12, "{report:?}");
        assert!(hist.densities().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn window_matches_full_histogram() {
        let n = 16;
        let mut rng = SplitMix64::new(5);
        let mut h = crate::model::DenseSymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                h.set_sym(i, j, rng.next_symmetric());
            }
        }
        let dec = crate::eigen::diagonalize(h).unwrap();
        let d: Vec<f64> = (0..n).map(|a| if a % 3 == 0 { 0.5 } else { -0.5 }).collect();
        let m = crate::eigen::rotate_diagonal_observable(&dec, &d).unwrap();
        let edges = FrequencyGrid::covering(1e-3, 20.0, 20).unwrap().edges();
        let full = spectral_histogram(&m, dec.energies(), &edges, n as f64).unwrap();
        let lower = spectral_histogram_window(&m, dec.energies(), &edges, n as f64, 0..n / 2).unwrap();
        let upper = spectral_histogram_window(&m, dec.energies(), &edges, n as f64, n / 2..n).unwrap();
        let mut joined = lower.clone();
        joined.merge(&upper).unwrap();
        for k in 0..full.bins() {
            assert!((joined.weight[k] - full.weight[k]).abs() < 1e-15);
        }
        assert_eq!(joined.counts, full.counts);
        let diag = m.diagonal();
        let report = sum_rule(&lower, &diag[..n / 2]);
        assert!(report.residual < 1e-13);
        assert!(spectral_histogram_window(&m, dec.energies(), &edges, 1.0, 0..n + 1).is_err());
    }

    #[test]
    fn typical_curve() {
        let edges = vec![1.0, 2.0, 4.0];
        let mut a = SpectralHistogram::empty(edges.clone(), 1.0).unwrap();
        a.weight = vec![2.0, 0.0];
        a.n_realizations = 1;
        let mut b = a.clone();
        b.weight = vec![8.0, 0.0];
        let t = typical_spectral_histogram(&[a.clone(), b.clone()]).unwrap();
        let expect = (a.density(0) * b.density(0)).sqrt();
        assert!((t.density[0] - expect).abs() < 1e-15);
        assert_eq!(t.empty, vec![0, 2]);
        let same = typical_spectral_histogram(&[a.clone(), a.clone()]).unwrap();
        assert!((same.density[0] - a.density(0)).abs() <= 1e-15 * a.density(0));
        let mut c = a.clone();
        c.edges = vec![1.0, 2.0, 5.0];
        assert!(typical_spectral_histogram(&[a, c]).is_err());
    }

    #[test]
    fn conserved_values() {
        assert!((conserved_fraction(&[0.5, -0.5, 0.5]).unwrap().z - 1.0).abs() < 1e-15);
        assert!((conserved_fraction(&[0.25, -0.25]).unwrap().z - 0.25).abs() < 1e-15);
        let c = conserved_fraction(&[0.5, 0.0]).unwrap();
        assert_eq!(c.zero, 1);
        assert!(matches!(conserved_fraction(&[0.0, 0.0]), Err(Error::Undefined(_))));
        assert!(conserved_fraction(&[]).is_err());
    }

    #[test]
    fn gap_ratio_values() {
        let g = gap_ratios(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(g.ratios.iter().all(|&r| r == 1.0));
        let g = gap_ratios(&[0.0, 1.0, 4.0]).unwrap();
        assert!((g.ratios[0] - 1.0 / 3.0).abs() < 1e-15);
        let g = gap_ratios(&[0.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.ratios, vec![0.0, 0.0]);
        assert_eq!(g.degenerate, 2);
        assert!(gap_ratios(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn zeta_histogram_normalized() {
        let zs = [0.1, 0.2, 0.35, 1.7, -0.4];
        let d = zeta_distribution(&zs, 0.25).unwrap();
        let integral: f64 = (0..d.counts.len()).map(|k| d.density(k) * d.bin_width).sum();
        assert!((integral - 1.0).abs() < 1e-15);
        assert_eq!(d.lower(0), -0.5);
        assert!(zeta_distribution(&[], 0.1).is_err());
    }

    #[test]
    fn exponential_tail_calibration() {
        // z = -ln(U) is exponential with rate 1, so P(z) = exp(-z).
        let mut rng = SplitMix64::new(77);
        let zs: Vec<f64> = (0..400_000).map(|_| -(1.0 - rng.next_unit()).ln()).collect();
        let fit = tail_slope(&zs, 0.2).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn frequency_grid_is_anchored() {
        let g = FrequencyGrid::covering(0.013, 7.0, 20).unwrap();
        let edges = g.edges();
        assert!(edges[0] <= 0.013 && *edges.last().unwrap() >= 7.0);
        assert!((edges[0] - 10f64.powf(g.first as f64 / 20.0)).abs() < 1e-16);
        let ratio = edges[1] / edges[0];
        assert!((ratio - 10f64.powf(0.05)).abs() < 1e-12);
    }
}
