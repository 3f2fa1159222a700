//! Fold realization records into per-(L, W) summaries and table files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{tail_slope, zeta_distribution, SpectralHistogram, ZetaDistribution};

use super::record::{RealizationRecord, Status};

/// Mergeable sums over any subset of the records of one `(L, W)` point.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSummary {
    pub sites: usize,
    pub w_index: usize,
    pub w: f64,
    pub dim: usize,
    pub norm: f64,
    pub realizations: usize,
    pub failed: usize,
    pub chi_log_sum: f64,
    pub chi_sum: f64,
    pub chi_used: usize,
    pub chi_zero: usize,
    pub chi_infinite: usize,
    pub diag_log_sum: f64,
    pub diag_used: usize,
    pub diag_zero: usize,
    pub gap_sum: f64,
    pub gap_count: usize,
    pub gap_degenerate: usize,
    pub spacing_sum: f64,
    pub bandwidth_sum: f64,
    pub max_sum_rule_residual: f64,
    /// Merged histogram; each probed site of each realization is one sample.
    pub hist: Option<SpectralHistogram>,
    pub log_density_sum: Vec<f64>,
    pub density_used: Vec<usize>,
    /// Finite `log chi` values; sorted on use, so concatenation order is free.
    pub zetas: Vec<f64>,
}

impl PartialSummary {
    pub fn from_record(r: &RealizationRecord) -> Self {
        let mut s = Self {
            sites: r.key.sites,
            w_index: r.key.w_index,
            w: r.w,
            dim: r.dim,
            norm: r.norm,
            realizations: 0,
            failed: 0,
            chi_log_sum: 0.0,
            chi_sum: 0.0,
            chi_used: 0,
            chi_zero: 0,
            chi_infinite: 0,
            diag_log_sum: 0.0,
            diag_used: 0,
            diag_zero: 0,
            gap_sum: 0.0,
            gap_count: 0,
            gap_degenerate: 0,
            spacing_sum: 0.0,
            bandwidth_sum: 0.0,
            max_sum_rule_residual: 0.0,
            hist: None,
            log_density_sum: Vec::new(),
            density_used: Vec::new(),
            zetas: Vec::new(),
        };
        if r.status == Status::Failed {
            s.failed = 1;
            return s;
        }
        s.realizations = 1;
        s.gap_sum = r.gap_ratios.iter().sum();
        s.gap_count = r.gap_ratios.len();
        s.gap_degenerate = r.gap_degenerate;
        s.spacing_sum = r.mean_spacing;
        s.bandwidth_sum = r.bandwidth;
        for p in &r.probes {
            for &c in &p.chi {
                if c.is_infinite() {
                    s.chi_infinite += 1;
                } else if c > 0.0 {
                    let z = c.ln();
                    s.chi_log_sum += z;
                    s.chi_sum += c;
                    s.chi_used += 1;
                    s.zetas.push(z);
                } else {
                    s.chi_zero += 1;
                }
            }
            for &d in &p.diag_sz {
                if d != 0.0 {
                    s.diag_log_sum += (d * d).ln();
                    s.diag_used += 1;
                } else {
                    s.diag_zero += 1;
                }
            }
            s.max_sum_rule_residual = s.max_sum_rule_residual.max(p.sum_rule.residual);
            let h = p.histogram(&r.grid, r.norm);
            if s.log_density_sum.is_empty() {
                s.log_density_sum = vec![0.0; h.bins()];
                s.density_used = vec![0; h.bins()];
            }
            for k in 0..h.bins() {
                let d = h.density(k);
                if d > 0.0 {
                    s.log_density_sum[k] += d.ln();
                    s.density_used[k] += 1;
                }
            }
            match &mut s.hist {
                None => s.hist = Some(h),
                Some(acc) => acc.merge(&h).expect("one grid per record"),
            }
        }
        s
    }

    pub fn merge(&mut self, o: &PartialSummary) -> Result<()> {
        if (self.sites, self.w_index) != (o.sites, o.w_index) || self.w != o.w {
            return Err(Error::invalid("merging summaries of different (L, W) points"));
        }
        self.realizations += o.realizations;
        self.failed += o.failed;
        self.chi_log_sum += o.chi_log_sum;
        self.chi_sum += o.chi_sum;
        self.chi_used += o.chi_used;
        self.chi_zero += o.chi_zero;
        self.chi_infinite += o.chi_infinite;
        self.diag_log_sum += o.diag_log_sum;
        self.diag_used += o.diag_used;
        self.diag_zero += o.diag_zero;
        self.gap_sum += o.gap_sum;
        self.gap_count += o.gap_count;
        self.gap_degenerate += o.gap_degenerate;
        self.spacing_sum += o.spacing_sum;
        self.bandwidth_sum += o.bandwidth_sum;
        self.max_sum_rule_residual = self.max_sum_rule_residual.max(o.max_sum_rule_residual);
        match (&mut self.hist, &o.hist) {
            (_, None) => {}
            (None, Some(h)) => {
                self.hist = Some(h.clone());
                self.log_density_sum = o.log_density_sum.clone();
                self.density_used = o.density_used.clone();
            }
            (Some(a), Some(b)) => {
                a.merge(b)?;
                for (x, y) in self.log_density_sum.iter_mut().zip(&o.log_density_sum) {
                    *x += y;
                }
                for (x, y) in self.density_used.iter_mut().zip(&o.density_used) {
                    *x += y;
                }
            }
        }
        self.zetas.extend_from_slice(&o.zetas);
        Ok(())
    }

    pub fn finish(&self, zeta_bin_width: f64) -> EnsembleSummary {
        let ratio = |a: f64, n: usize| if n > 0 { Some(a / n as f64) } else { None };
        let zeta = ratio(self.chi_log_sum, self.chi_used);
        let mean_chi = ratio(self.chi_sum, self.chi_used);
        let mean_log_diag = ratio(self.diag_log_sum, self.diag_used);
        let mut zetas = self.zetas.clone();
        zetas.sort_by(f64::total_cmp);
        let tail = if zetas.is_empty() {
            None
        } else {
            tail_slope(&zetas, zeta_bin_width).ok()
        };
        let row = SummaryRow {
            sites: self.sites,
            w_index: self.w_index,
            w: self.w,
            dim: self.dim,
            norm: self.norm,
            realizations: self.realizations,
            failed: self.failed,
            states: self.chi_used,
            zeta,
            mean_chi,
            mean_typical_gap: zeta.zip(mean_chi).map(|(z, m)| m.ln() - z),
            exp_zeta_over_d: zeta.map(|z| z.exp() / self.norm),
            chi_zero: self.chi_zero,
            chi_infinite: self.chi_infinite,
            z: mean_log_diag.map(|m| 4.0 * m.exp()),
            diag_zero: self.diag_zero,
            mean_gap_ratio: ratio(self.gap_sum, self.gap_count),
            gap_degenerate: self.gap_degenerate,
            tail_slope: tail.map(|t| t.slope),
            tail_points: tail.map_or(0, |t| t.points),
            mean_spacing: ratio(self.spacing_sum, self.realizations),
            bandwidth: ratio(self.bandwidth_sum, self.realizations),
            max_sum_rule_residual: self.max_sum_rule_residual,
        };
        let curve = self.hist.as_ref().map(|h| {
            (0..h.bins())
                .map(|k| CurveRow {
                    edge_lo: h.edges[k],
                    edge_hi: h.edges[k + 1],
                    density_mean: h.density(k),
                    density_typical: if self.density_used[k] > 0 {
                        (self.log_density_sum[k] / self.density_used[k] as f64).exp()
                    } else {
                        0.0
                    },
                    typical_empty: h.n_realizations - self.density_used[k],
                    count: h.counts[k],
                })
                .collect()
        });
        let zeta_dist = if zetas.is_empty() {
            None
        } else {
            zeta_distribution(&zetas, zeta_bin_width).ok()
        };
        EnsembleSummary {
            row,
            curve,
            zeta_dist,
        }
    }
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sites: usize,
    pub w_index: usize,
    pub w: f64,
    pub dim: usize,
    pub norm: f64,
    pub realizations: usize,
    pub failed: usize,
    /// Finite positive susceptibilities entering `zeta`.
    pub states: usize,
    pub zeta: Option<f64>,
    pub mean_chi: Option<f64>,
    /// `log(mean chi) - zeta`, the mean/typical separation.
    pub mean_typical_gap: Option<f64>,
    pub exp_zeta_over_d: Option<f64>,
    pub chi_zero: usize,
    pub chi_infinite: usize,
    pub z: Option<f64>,
    pub diag_zero: usize,
    pub mean_gap_ratio: Option<f64>,
    pub gap_degenerate: usize,
    pub tail_slope: Option<f64>,
    pub tail_points: usize,
    pub mean_spacing: Option<f64>,
    pub bandwidth: Option<f64>,
    pub max_sum_rule_residual: f64,
}

/// One line of a spectral curve table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub edge_lo: f64,
    pub edge_hi: f64,
    pub density_mean: f64,
    pub density_typical: f64,
    /// Samples with zero density in this bin, left out of the typical value.
    pub typical_empty: usize,
    pub count: u64,
}

impl CurveRow {
    pub fn center(&self) -> f64 {
        (self.edge_lo * self.edge_hi).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ZetaRow {
    z_lo: f64,
    z_hi: f64,
    density: f64,
    count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub row: SummaryRow,
    pub curve: Option<Vec<CurveRow>>,
    pub zeta_dist: Option<ZetaDistribution>,
}

/// Group records by `(L, W index)` and fold each group in key order.
pub fn aggregate<'a, I>(records: I) -> Result<BTreeMap<(usize, usize), PartialSummary>>
where
    I: IntoIterator<Item = &'a RealizationRecord>,
{
    let mut sorted: Vec<&RealizationRecord> = records.into_iter().collect();
    sorted.sort_by_key(|r| r.key);
    let mut groups: BTreeMap<(usize, usize), PartialSummary> = BTreeMap::new();
    for r in sorted {
        let part = PartialSummary::from_record(r);
        match groups.get_mut(&(r.key.sites, r.key.w_index)) {
            Some(acc) => acc.merge(&part)?,
            None => {
                groups.insert((r.key.sites, r.key.w_index), part);
            }
        }
    }
    Ok(groups)
}

pub const SUMMARY_FILE: &str = "summary.csv";

pub fn spectral_file(sites: usize, w_index: usize) -> String {
    format!("spectral_L{sites}_W{w_index:02}.csv")
}

pub fn zeta_file(sites: usize, w_index: usize) -> String {
    format!("zeta_L{sites}_W{w_index:02}.csv")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Write `summary.csv` and the curve tables into `dir`; returns the summaries.
pub fn write_summaries(
    dir: &Path,
    records: &BTreeMap<super::record::RecordKey, RealizationRecord>,
    zeta_bin_width: f64,
) -> Result<Vec<EnsembleSummary>> {
    let groups = aggregate(records.values())?;
    let summaries: Vec<EnsembleSummary> = groups.values().map(|g| g.finish(zeta_bin_width)).collect();
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for s in &summaries {
        w.serialize(&s.row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    for s in &summaries {
        if let Some(curve) = &s.curve {
            let path = dir.join(spectral_file(s.row.sites, s.row.w_index));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            for row in curve {
                w.serialize(row).map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        if let Some(d) = &s.zeta_dist {
            let path = dir.join(zeta_file(s.row.sites, s.row.w_index));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            for k in 0..d.counts.len() {
                w.serialize(ZetaRow {
                    z_lo: d.lower(k),
                    z_hi: d.lower(k) + d.bin_width,
                    density: d.density(k),
                    count: d.counts[k],
                })
                .map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(summaries)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<CurveRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

/// Curve table belonging to a summary row, next to the summary file.
pub fn curve_path(summary: &Path, row: &SummaryRow) -> PathBuf {
    summary
        .parent()
        .unwrap_or(Path::new("."))
        .join(spectral_file(row.sites, row.w_index))
}

/// Rebuild a histogram from a curve table (weights recovered from the mean
/// density).
pub fn histogram_from_curve(curve: &[CurveRow], norm: f64) -> Result<SpectralHistogram> {
    let mut edges: Vec<f64> = curve.iter().map(|c| c.edge_lo).collect();
    edges.push(curve.last().ok_or_else(|| Error::invalid("empty curve"))?.edge_hi);
    let mut h = SpectralHistogram::empty(edges, norm)?;
    for (k, c) in curve.iter().enumerate() {
        h.weight[k] = c.density_mean * 2.0 * (c.edge_hi - c.edge_lo);
        h.counts[k] = c.count;
    }
    h.n_realizations = 1;
    Ok(h)
}
