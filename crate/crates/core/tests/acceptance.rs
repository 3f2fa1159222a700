//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Ensembles are computed through `run_ensemble` into a persistent cache
//! (`target/acceptance-cache`, or `XXZLOC_ACCEPTANCE_CACHE`), so reruns only
//! pay for missing realizations. `XXZLOC_ACCEPTANCE_MAX_L` skips criteria
//! needing larger chains and `XXZLOC_ACCEPTANCE_ONLY=1,4,...` restricts the
//! run to the listed criteria. The process exits nonzero on a failed criterion
//! only under `XXZLOC_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use xxzloc::analysis::{
    alpha_from_prefactor, conserved_fraction_fit, critical_disorder, loglog_slope,
    one_over_omega_prefactor, peak_location, zeta_vs_log_w, PREFACTOR_REFERENCE,
};
use xxzloc::basis::enumerate_sector;
use xxzloc::eigen::{diagonalize, rotate_diagonal_observable, EigenDecomposition};
use xxzloc::model::{build_hamiltonian, sample_disorder, sz_diagonal, CouplingParams};
use xxzloc::probes::{all_susceptibilities, gap_ratios, tail_slope, SpectralHistogram};
use xxzloc::rng::SplitMix64;
use xxzloc::runner::aggregate::histogram_from_curve;
use xxzloc::runner::{load_records, run_ensemble, EnsembleSummary, RecordStore, RunConfig};
use xxzloc::strongdisorder::{log_w_prefactor, unconstrained_prefactor, INFINITE_CHAIN_PREFACTOR};

struct Outcome {
    id: u32,
    name: &'static str,
    status: Status,
    detail: String,
}

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

fn cache_root() -> PathBuf {
    match std::env::var_os("XXZLOC_ACCEPTANCE_CACHE") {
        Some(p) => PathBuf::from(p),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache"),
    }
}

fn max_sites() -> usize {
    std::env::var("XXZLOC_ACCEPTANCE_MAX_L")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(usize::MAX)
}

fn ensemble_config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/ensembles")
        .join(format!("{name}.toml"));
    let mut cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    cfg.output = cache_root().join(name);
    cfg
}

/// Summaries keyed by `(L, W index)`, computing missing realizations.
fn ensemble(name: &str) -> Result<(RunConfig, BTreeMap<(usize, usize), EnsembleSummary>), String> {
    let cfg = ensemble_config(name);
    let report = run_ensemble(&cfg).map_err(|e| format!("ensemble {name}: {e}"))?;
    let map = report
        .summaries
        .into_iter()
        .map(|s| ((s.row.sites, s.row.w_index), s))
        .collect();
    Ok((cfg, map))
}

fn histogram(s: &EnsembleSummary) -> Result<SpectralHistogram, String> {
    let curve = s.curve.as_ref().ok_or("no spectral curve")?;
    histogram_from_curve(curve, s.row.norm).map_err(|e| e.to_string())
}

/// Fit window `[10 mean spacing, 0.1 / W]`.
fn spectral_window(s: &EnsembleSummary) -> (f64, f64) {
    (10.0 * s.row.mean_spacing.unwrap_or(f64::NAN), 0.1 / s.row.w)
}

type Check = Result<(bool, String), String>;

fn criterion_1() -> Check {
    let (cfg, _) = ensemble("sum_rule")?;
    let records = load_records(&cfg.output.join(RecordStore::FILE_NAME), false).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for r in records.values() {
        for p in &r.probes {
            worst = worst.max(p.sum_rule.residual);
            count += 1;
        }
    }
    let pass = worst <= 1e-10 && count == 36;
    Ok((pass, format!("{count} realizations at L in {{8,10,12}}, max residual {worst:.2e} (limit 1e-10)")))
}

fn decompose(w: f64, seed: u64, lambda: f64) -> EigenDecomposition {
    let basis = enumerate_sector(8, 0).unwrap();
    let params = CouplingParams::new(8, w).unwrap();
    let real = sample_disorder(seed, 8);
    let mut h = build_hamiltonian(&params, &real, &basis).unwrap();
    let sz = sz_diagonal(&basis, 0).unwrap();
    for (a, s) in sz.iter().enumerate() {
        let v = h.get(a, a) + lambda * s;
        h.set_sym(a, a, v);
    }
    diagonalize(h).unwrap()
}

fn criterion_2() -> Check {
    let dl = 1e-4;
    let w = 1.0;
    let basis = enumerate_sector(8, 0).unwrap();
    let sz = sz_diagonal(&basis, 0).unwrap();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for r in 0..5u64 {
        let seed = 9000 + r;
        let d0 = decompose(w, seed, 0.0);
        let plus = decompose(w, seed, dl);
        let minus = decompose(w, seed, -dl);
        let m = rotate_diagonal_observable(&d0, &sz).unwrap();
        let chi = all_susceptibilities(&m, d0.energies(), 0.0).unwrap();
        for n in 0..d0.dim() {
            if !(chi[n] > 1e-6) {
                continue;
            }
            // Central difference ||n(+dl) - n(-dl)||^2 / (4 dl^2) with signs
            // aligned to n(0).
            let sign = |v: &[f64]| {
                let o: f64 = v.iter().zip(d0.vector(n)).map(|(a, b)| a * b).sum();
                o.signum()
            };
            let (vp, vm) = (plus.vector(n), minus.vector(n));
            let (sp, sm) = (sign(vp), sign(vm));
            let dist: f64 = vp.iter().zip(vm).map(|(a, b)| (sp * a - sm * b).powi(2)).sum();
            let fd = dist / (4.0 * dl * dl);
            worst = worst.max((fd - chi[n]).abs() / chi[n]);
            compared += 1;
        }
    }
    Ok((worst <= 1e-3, format!("{compared} states, max relative deviation {worst:.2e} (limit 1e-3)")))
}

fn criterion_3() -> Check {
    let (cfg, s) = ensemble("strong_disorder")?;
    let grid = cfg.w_grid().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut prev_c = 0.0;
    for &l in &cfg.sites {
        let pts: Vec<(f64, f64)> = (0..grid.len())
            .map(|k| (grid[k], s[&(l, k)].row.zeta.unwrap_or(f64::NAN)))
            .collect();
        let fit = zeta_vs_log_w(&pts).map_err(|e| e.to_string())?;
        let c = log_w_prefactor(l).unwrap().c_of_l;
        let rel = (fit.slope + c).abs() / c;
        let ok = rel <= 0.05;
        pass &= ok && c > prev_c && c < INFINITE_CHAIN_PREFACTOR;
        prev_c = c;
        parts.push(format!("L={l}: slope {:.4} vs -C(L) = {:.4} ({:.1}%)", fit.slope, -c, 100.0 * rel));
    }
    parts.push(format!("realizations {}", cfg.realizations));
    Ok((pass, parts.join("; ")))
}

fn criterion_4() -> Check {
    let (_, s) = ensemble("eth")?;
    let z10 = s[&(10, 0)].row.zeta.ok_or("no zeta at L=10")?;
    let z12 = s[&(12, 0)].row.zeta.ok_or("no zeta at L=12")?;
    let diff = z12 - z10;
    let target = 2.0 * std::f64::consts::LN_2;
    Ok((
        (diff - target).abs() <= 0.3,
        format!("zeta(12) - zeta(10) = {diff:.4}, target {target:.4} +- 0.3 (300 realizations each)"),
    ))
}

/// Mean gap ratio of GOE matrices and of Poisson levels, same estimator.
fn reference_gap_ratios() -> (f64, f64) {
    let mut rng = SplitMix64::new(31337);
    let n = 400;
    let mut goe = Vec::new();
    for _ in 0..10 {
        let mut h = xxzloc::model::DenseSymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng.next_normal() * if i == j { 2f64.sqrt() } else { 1.0 };
                h.set_sym(i, j, x);
            }
        }
        let d = diagonalize(h).unwrap();
        let e = &d.energies()[n / 4..3 * n / 4];
        goe.extend(gap_ratios(e).unwrap().ratios);
    }
    let mut levels: Vec<f64> = (0..200_000).map(|_| rng.next_unit()).collect();
    levels.sort_by(f64::total_cmp);
    let poisson = gap_ratios(&levels).unwrap().ratios;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&goe), mean(&poisson))
}

fn criterion_5() -> Check {
    let (_, s) = ensemble("gap_ratio")?;
    let r_low = s[&(12, 0)].row.mean_gap_ratio.ok_or("no r at W=0.5")?;
    let r_high = s[&(12, 1)].row.mean_gap_ratio.ok_or("no r at W=8")?;
    let (goe, poisson) = reference_gap_ratios();
    let pass = (0.51..=0.55).contains(&r_low) && (0.37..=0.41).contains(&r_high);
    Ok((
        pass,
        format!(
            "r(W=0.5) = {r_low:.4} in [0.51, 0.55], r(W=8) = {r_high:.4} in [0.37, 0.41]; \
             sampled references GOE {goe:.4}, Poisson {poisson:.4}"
        ),
    ))
}

fn spectral_slopes(name: &str, sites: usize, tol: f64) -> Check {
    let (_, s) = ensemble(name)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, target) in [(0usize, -0.5), (1, -1.0)] {
        let summary = &s[&(sites, k)];
        let h = histogram(summary)?;
        let window = spectral_window(summary);
        match loglog_slope(&h, window) {
            Ok(fit) => {
                let ok = (fit.slope - target).abs() <= tol;
                pass &= ok;
                parts.push(format!(
                    "W={}: slope {:.3} over [{:.3e}, {:.3e}] ({} bins), target {target} +- {tol}",
                    summary.row.w, fit.slope, window.0, window.1, fit.points
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("W={}: window [{:.3e}, {:.3e}]: {e}", summary.row.w, window.0, window.1));
            }
        }
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_6() -> Check {
    let (pass14, d14) = if max_sites() >= 14 {
        spectral_slopes("spectral_l14", 14, 0.15)?
    } else {
        (false, "L=14 skipped".into())
    };
    let (pass12, d12) = spectral_slopes("spectral_l12", 12, 0.2)?;
    Ok((pass14 && pass12, format!("L=14: {d14} | L=12 fallback: {d12}")))
}

fn criterion_7() -> Check {
    let (cfg, s) = ensemble("prefactor_l14")?;
    let mut values = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for k in 0..cfg.w_grid().unwrap().len() {
        let summary = &s[&(14, k)];
        let h = histogram(summary)?;
        let window = spectral_window(summary);
        match one_over_omega_prefactor(&h, summary.row.w, window) {
            Ok(c) => {
                let ok = c / PREFACTOR_REFERENCE <= 2.0 && PREFACTOR_REFERENCE / c <= 2.0;
                pass &= ok;
                values.push(c);
                parts.push(format!("W={}: C = {c:.4}", summary.row.w));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("W={}: {e}", summary.row.w));
            }
        }
    }
    if values.len() > 1 {
        let hi = values.iter().cloned().fold(f64::MIN, f64::max);
        let lo = values.iter().cloned().fold(f64::MAX, f64::min);
        pass &= hi / lo <= 1.5;
        parts.push(format!("spread {:.3} (limit 1.5), reference {PREFACTOR_REFERENCE} within factor 2", hi / lo));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_8() -> Check {
    let (_, s) = ensemble("tails")?;
    let eth = -s[&(12, 0)].row.tail_slope.ok_or("no tail fit at W=0.75")?;
    let mbl = -s[&(12, 1)].row.tail_slope.ok_or("no tail fit at W=15")?;
    let mut rng = SplitMix64::new(4242);
    let zs: Vec<f64> = (0..2_000_000).map(|_| -(1.0 - rng.next_unit()).ln()).collect();
    let synth = -tail_slope(&zs, 0.25).map_err(|e| e.to_string())?.slope;
    let pass = (eth - 1.0).abs() <= 0.2 && mbl <= 0.45 && (synth - 1.0).abs() <= 0.05;
    Ok((
        pass,
        format!(
            "rate(W=0.75) = {eth:.3} (1 +- 0.2), rate(W=15) = {mbl:.3} (<= 0.45), \
             synthetic rate-1 sample = {synth:.4} (+- 0.05)"
        ),
    ))
}

fn criterion_9() -> Check {
    let (cfg, s) = ensemble("conserved")?;
    let grid = cfg.w_grid().unwrap();
    let pts: Vec<(f64, f64)> = (0..grid.len())
        .map(|k| (grid[k], s[&(12, k)].row.z.unwrap_or(f64::NAN)))
        .collect();
    let fit = conserved_fraction_fit(&pts).map_err(|e| e.to_string())?;
    Ok((
        (fit.fit.slope + 1.0).abs() <= 0.2,
        format!(
            "{} points in W in [8, 15], {} realizations each: slope {:.3} (target -1 +- 0.2), c = {:.3}",
            pts.len(),
            cfg.realizations,
            fit.fit.slope,
            fit.c
        ),
    ))
}

/// Peak of zeta over the grid, plus bootstrap resamples over realizations.
fn peak_for(name: &str, sites: usize, resamples: usize) -> Result<(f64, Vec<f64>), String> {
    let (cfg, s) = ensemble(name)?;
    let grid = cfg.w_grid().unwrap();
    let zetas: Vec<f64> = (0..grid.len())
        .map(|k| s[&(sites, k)].row.zeta.unwrap_or(f64::NAN))
        .collect();
    let peak = peak_location(&grid, &zetas).map_err(|e| format!("L={sites}: {e}"))?;

    // Per realization: (sum of log chi, number of finite positive chi).
    let records = load_records(&cfg.output.join(RecordStore::FILE_NAME), false).map_err(|e| e.to_string())?;
    let mut per_w: Vec<Vec<(f64, usize)>> = vec![Vec::new(); grid.len()];
    for r in records.values().filter(|r| r.key.sites == sites && r.key.k < cfg.realizations) {
        let (sum, n) = r.probes[0]
            .chi
            .iter()
            .filter(|c| c.is_finite() && **c > 0.0)
            .fold((0.0, 0usize), |(s, n), c| (s + c.ln(), n + 1));
        per_w[r.key.w_index].push((sum, n));
    }
    let mut rng = SplitMix64::new(777);
    let mut boot = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let z: Vec<f64> = per_w
            .iter()
            .map(|v| {
                let (mut sum, mut n) = (0.0, 0usize);
                for _ in 0..v.len() {
                    let (a, b) = v[(rng.next_u64() % v.len() as u64) as usize];
                    sum += a;
                    n += b;
                }
                sum / n as f64
            })
            .collect();
        if let Ok(p) = peak_location(&grid, &z) {
            boot.push(p);
        }
    }
    Ok((peak, boot))
}

fn criterion_10() -> Check {
    if max_sites() < 14 {
        return Err("L=14 skipped".into());
    }
    let (p12, b12) = peak_for("peak_l12", 12, 500)?;
    let (p14, b14) = peak_for("peak_l14", 14, 500)?;
    let sd = |b: &[f64]| {
        let m = b.iter().sum::<f64>() / b.len() as f64;
        (b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b.len() - 1) as f64).sqrt()
    };
    let ordered = b12.iter().zip(&b14).filter(|(a, b)| a < b).count() as f64 / b12.len().min(b14.len()) as f64;
    Ok((
        p12 < p14,
        format!(
            "W_max(12) = {p12:.3} (bootstrap sd {:.3}), W_max(14) = {p14:.3} (bootstrap sd {:.3}); \
             ordering holds in {:.0}% of resamples",
            sd(&b12),
            sd(&b14),
            100.0 * ordered
        ),
    ))
}

fn criterion_11() -> Check {
    let c4 = log_w_prefactor(4).unwrap().c_of_l;
    let c8 = log_w_prefactor(8).unwrap().c_of_l;
    let lim = unconstrained_prefactor(50);
    let alpha = alpha_from_prefactor(0.0179);
    let slope = critical_disorder(1.0, 6.98, 1.0).unwrap();
    let pass = (c4 - 2.0).abs() <= 1e-12
        && (c8 - 16.0 / 7.0).abs() <= 1e-12
        && (lim - 8.0 / 3.0).abs() <= 1e-12
        && (alpha - 6.98).abs() < 0.005
        && (slope - 0.0993).abs() < 5e-5;
    Ok((
        pass,
        format!("C(4) = {c4}, C(8) = {c8}, lim C = {lim}, alpha(0.0179) = {alpha:.4}, W* slope = {slope:.5}"),
    ))
}

fn criterion_12() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(vec![8, 10], vec![0.7, 3.0], 4);
    let mut outputs = Vec::new();
    for workers in [1usize, 4] {
        cfg.workers = Some(workers);
        cfg.output = dir.path().join(format!("w{workers}"));
        run_ensemble(&cfg).map_err(|e| e.to_string())?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&cfg.output)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    Ok((same, format!("{} summary files compared between 1 and 4 workers", outputs[0].len())))
}

fn main() {
    if std::env::var_os(xxzloc::runner::config::WORKERS_ENV).is_some() {
        eprintln!("note: worker count taken from the environment");
    }
    let criteria: Vec<(u32, &'static str, fn() -> Check)> = vec![
        (1, "f-sum rule", criterion_1),
        (2, "fidelity finite-difference oracle", criterion_2),
        (3, "strong-disorder log W slope", criterion_3),
        (4, "ETH volume scaling of zeta", criterion_4),
        (5, "gap-ratio crossover", criterion_5),
        (6, "spectral exponents", criterion_6),
        (7, "1/omega prefactor", criterion_7),
        (8, "P(z) tail exponents", criterion_8),
        (9, "conserved fraction 1 - Z", criterion_9),
        (10, "peak drift of exp(zeta)", criterion_10),
        (11, "analytic oracle identities", criterion_11),
        (12, "determinism across worker counts", criterion_12),
    ];
    let large: &[u32] = &[7];
    let only: Option<Vec<u32>> = std::env::var("XXZLOC_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut outcomes = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = std::time::Instant::now();
        let outcome = if large.contains(&id) && max_sites() < 14 {
            Outcome {
                id,
                name,
                status: Status::Skip,
                detail: "needs L = 14".into(),
            }
        } else {
            match f() {
                Ok((true, d)) => Outcome { id, name, status: Status::Pass, detail: d },
                Ok((false, d)) => Outcome { id, name, status: Status::Fail, detail: d },
                Err(d) if d.contains("skipped") => Outcome { id, name, status: Status::Skip, detail: d },
                Err(d) => Outcome { id, name, status: Status::Fail, detail: d },
            }
        };
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!(
            "[{tag}] criterion {:>2} {}: {} ({:.1} s)",
            outcome.id,
            outcome.name,
            outcome.detail,
            started.elapsed().as_secs_f64()
        );
        outcomes.push(outcome);
    }
    let failed = outcomes.iter().filter(|o| o.status == Status::Fail).count();
    let passed = outcomes.iter().filter(|o| o.status == Status::Pass).count();
    println!("acceptance: {passed} passed, {failed} failed, {} skipped", outcomes.len() - passed - failed);
    if failed > 0 && std::env::var("XXZLOC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
