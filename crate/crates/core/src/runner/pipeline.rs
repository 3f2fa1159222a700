//! The per-realization pipeline: sample, assemble, diagonalize, probe.

use crate::basis::SectorBasis;
use crate::eigen::{diagonalize, rotate_diagonal_observable};
use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, sample_disorder, sz_diagonal, CouplingParams};
use crate::probes::{
    all_susceptibilities, gap_ratios, spectral_histogram_window, sum_rule, FrequencyGrid,
};
use crate::rng::mix64;

use super::config::{EnergyWindow, Normalization, RunConfig};
use super::record::{RealizationRecord, RecordKey, SiteProbes, Status};

/// Seed of realization `k` at `(L, W index)`: the base seed offset by a
/// stable hash of the key, so seeds never depend on scheduling.
pub fn realization_seed(base_seed: u64, key: RecordKey) -> u64 {
    let h = mix64(mix64(mix64(key.sites as u64) ^ key.w_index as u64) ^ key.k as u64);
    base_seed.wrapping_add(h)
}

/// Eigenstate range selected by the window flag.
pub fn window_range(window: EnergyWindow, dim: usize) -> (usize, usize) {
    match window {
        EnergyWindow::All => (0, dim),
        EnergyWindow::Middle => (dim / 4, dim - dim / 4),
    }
}

pub fn normalization(norm: Normalization, sites: usize, dim: usize) -> f64 {
    match norm {
        Normalization::Sector => dim as f64,
        Normalization::Full => (sites as f64).exp2(),
    }
}

/// Run one realization. Eigensolver failures come back as a record with
/// `status = failed`; argument errors are returned.
pub fn run_realization(
    cfg: &RunConfig,
    basis: &SectorBasis,
    key: RecordKey,
    w: f64,
) -> Result<RealizationRecord> {
    let sites = basis.sites();
    let params = CouplingParams {
        w,
        delta: cfg.delta,
        sites,
        periodic: cfg.periodic,
    };
    params.validate()?;
    let seed = realization_seed(cfg.base_seed, key);
    let realization = sample_disorder(seed, sites);
    let dim = basis.dim();
    let norm = normalization(cfg.normalization, sites, dim);
    let grid = FrequencyGrid::for_sector(&params, dim, cfg.bins_per_decade)?;
    let (start, end) = window_range(cfg.energy_window, dim);
    let mut record = RealizationRecord {
        key,
        w,
        delta: cfg.delta,
        two_m: basis.two_m(),
        seed,
        config_digest: cfg.digest(),
        code_version: crate::CODE_VERSION.into(),
        status: Status::Ok,
        error: None,
        fields: realization.fields.clone(),
        dim,
        norm,
        window: (start, end),
        bandwidth: 0.0,
        mean_spacing: 0.0,
        energies: Vec::new(),
        gap_ratios: Vec::new(),
        gap_degenerate: 0,
        grid: grid.clone(),
        probes: Vec::new(),
    };

    let h = build_hamiltonian(&params, &realization, basis)?;
    let check = (cfg.eigen_tolerance > 0.0).then(|| h.clone());
    let decomp = match diagonalize(h) {
        Ok(d) => d,
        Err(e @ Error::NoConvergence { .. }) => {
            record.status = Status::Failed;
            record.error = Some(e.to_string());
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    if let Some(h) = check {
        let residual = decomp.max_residual(&h) / h.frobenius_norm().max(f64::MIN_POSITIVE);
        if residual > cfg.eigen_tolerance {
            record.status = Status::Failed;
            record.error = Some(format!(
                "relative eigenpair residual {residual:e} above tolerance {:e}",
                cfg.eigen_tolerance
            ));
            return Ok(record);
        }
    }
    let energies = decomp.energies();
    record.bandwidth = energies[dim - 1] - energies[0];
    record.mean_spacing = record.bandwidth / (dim - 1) as f64;
    record.energies = energies.to_vec();
    let gaps = gap_ratios(energies)?;
    // Ratio r_n belongs to level n = index + 1.
    record.gap_ratios = (start.max(1)..end.min(dim - 1))
        .map(|n| gaps.ratios[n - 1])
        .collect();
    record.gap_degenerate = record.gap_ratios.iter().filter(|&&r| r == 0.0).count();

    let probe_sites: Vec<usize> = if cfg.site_average {
        (0..sites).collect()
    } else {
        vec![cfg.site]
    };
    let edges = grid.edges();
    for site in probe_sites {
        let m = rotate_diagonal_observable(&decomp, &sz_diagonal(basis, site)?)?;
        let chi = all_susceptibilities(&m, energies, cfg.mu)?;
        let diag = m.diagonal();
        let hist = spectral_histogram_window(&m, energies, &edges, norm, start..end)?;
        let report = sum_rule(&hist, &diag[start..end]);
        record.probes.push(SiteProbes {
            site,
            chi: chi[start..end].to_vec(),
            diag_sz: diag[start..end].to_vec(),
            weight: hist.weight,
            counts: hist.counts,
            underflow: hist.underflow,
            overflow: hist.overflow,
            sum_rule: report,
        });
    }
    Ok(record)
}
