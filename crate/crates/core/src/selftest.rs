//! Fast built-in checks against closed forms and small exact cases.

use crate::analysis::{
    alpha_from_prefactor, critical_disorder, loglog_slope, tail_slope_prediction,
};
use crate::basis::{enumerate_sector, SpinConfiguration};
use crate::eigen::{diagonalize, rotate_diagonal_observable, ObservableMatrix};
use crate::model::{build_hamiltonian, sample_disorder, sz_diagonal, CouplingParams, DenseSymmetricMatrix};
use crate::probes::{
    fidelity_susceptibility, gap_ratios, spectral_histogram, sum_rule, tail_slope,
    typical_log_susceptibility, FrequencyGrid, SpectralHistogram,
};
use crate::rng::SplitMix64;
use crate::strongdisorder::{first_order_chi, log_w_prefactor, unconstrained_prefactor, INFINITE_CHAIN_PREFACTOR};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<String, String>;

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    if (got - want).abs() <= tol {
        Ok(format!("{name} = {got} (expected {want})"))
    } else {
        Err(format!("{name} = {got}, expected {want} +- {tol}"))
    }
}

fn sector_sizes() -> Result<String, String> {
    let size = |l, m| enumerate_sector(l, m).map(|b| b.dim()).map_err(|e| e.to_string());
    let got = (size(4, 0)?, size(12, 0)?, size(2, 2)?);
    if got == (6, 924, 1) {
        Ok("C(4,2) = 6, C(12,6) = 924, (2,2) -> 1".into())
    } else {
        Err(format!("sector sizes {got:?}"))
    }
}

fn rng_stream() -> Result<String, String> {
    let mut r = SplitMix64::new(1234567);
    let got = [r.next_u64(), r.next_u64(), r.next_u64()];
    let want = [6457827717110365317, 3203168211198807973, 9817491932198370423];
    if got == want {
        Ok("reference stream reproduced".into())
    } else {
        Err(format!("stream {got:?}"))
    }
}

fn two_by_two() -> Result<String, String> {
    let (a, b, c) = (0.3, -1.1, 0.7);
    let h = DenseSymmetricMatrix::from_row_major(2, vec![a, c, c, b]).map_err(|e| e.to_string())?;
    let d = diagonalize(h).map_err(|e| e.to_string())?;
    let r = (((a - b) / 2.0f64).powi(2) + c * c).sqrt();
    close("E+", d.energies()[1], (a + b) / 2.0 + r, 1e-14)?;
    close("E-", d.energies()[0], (a + b) / 2.0 - r, 1e-14)
}

fn sum_rule_l8() -> Result<String, String> {
    let basis = enumerate_sector(8, 0).map_err(|e| e.to_string())?;
    let params = CouplingParams::new(8, 1.0).map_err(|e| e.to_string())?;
    let h = build_hamiltonian(&params, &sample_disorder(11, 8), &basis).map_err(|e| e.to_string())?;
    let d = diagonalize(h).map_err(|e| e.to_string())?;
    let m = rotate_diagonal_observable(&d, &sz_diagonal(&basis, 0).unwrap()).map_err(|e| e.to_string())?;
    let row: f64 = m.row(5).iter().map(|x| x * x).sum();
    close("row sum", row, 0.25, 1e-10)?;
    let edges = FrequencyGrid::for_sector(&params, basis.dim(), 20).unwrap().edges();
    let hist = spectral_histogram(&m, d.energies(), &edges, basis.dim() as f64).map_err(|e| e.to_string())?;
    let rep = sum_rule(&hist, &m.diagonal());
    close("sum-rule residual", rep.residual, 0.0, 1e-10)
}

fn two_level_chi() -> Result<String, String> {
    let (v, w) = (0.2, 0.5);
    let m = ObservableMatrix::from_row_major(2, vec![0.0, v, v, 0.0]).map_err(|e| e.to_string())?;
    let chi = fidelity_susceptibility(&m, &[0.0, w], 0, 0.0).map_err(|e| e.to_string())?;
    close("chi", chi, v * v / (w * w), 1e-15)
}

fn typical_and_gaps() -> Result<String, String> {
    let e = std::f64::consts::E;
    let t = typical_log_susceptibility(&[e, e * e * e]).map_err(|e| e.to_string())?;
    close("zeta", t.zeta, 2.0, 1e-14)?;
    let g = gap_ratios(&[0.0, 1.0, 4.0]).map_err(|e| e.to_string())?;
    close("r", g.ratios[0], 1.0 / 3.0, 1e-15)
}

fn prefactors() -> Result<String, String> {
    close("C(4)", log_w_prefactor(4).unwrap().c_of_l, 2.0, 1e-12)?;
    close("C(8)", log_w_prefactor(8).unwrap().c_of_l, 16.0 / 7.0, 1e-12)?;
    close("C(inf)", unconstrained_prefactor(50), INFINITE_CHAIN_PREFACTOR, 1e-12)
}

fn first_order() -> Result<String, String> {
    let c = SpinConfiguration::new(0b0011, 4).map_err(|e| e.to_string())?;
    let w = 5.0;
    let chi = first_order_chi(c, &[0.0, 0.3, -0.2, 0.9], w, 1).map_err(|e| e.to_string())?;
    close("chi1", chi, 4.0 / (w * w), 1e-12)
}

fn closed_forms() -> Result<String, String> {
    close("alpha", alpha_from_prefactor(0.0179), 6.98, 0.01)?;
    close("W*(18)", critical_disorder(18.0, 6.98, 1.0).unwrap(), 1.787, 1e-3)?;
    close("GOE tail", tail_slope_prediction(1.0, 0.0).unwrap().predicted, 1.0, 0.0)?;
    close("Poisson tail", tail_slope_prediction(0.0, 0.0).unwrap().predicted, 0.5, 0.0)?;
    close("bound", tail_slope_prediction(0.0, 1.0).unwrap().predicted, 1.0 / 3.0, 1e-15)
}

fn synthetic_fits() -> Result<String, String> {
    let edges = FrequencyGrid::covering(1e-4, 10.0, 20).unwrap().edges();
    let mut h = SpectralHistogram::empty(edges, 1.0).unwrap();
    for k in 0..h.bins() {
        h.weight[k] = 2.0 * h.width(k) / h.center(k);
    }
    h.n_realizations = 1;
    let fit = loglog_slope(&h, (1e-3, 1.0)).map_err(|e| e.to_string())?;
    close("1/omega slope", fit.slope, -1.0, 1e-6)?;
    let mut rng = SplitMix64::new(99);
    let zs: Vec<f64> = (0..200_000).map(|_| -(1.0 - rng.next_unit()).ln()).collect();
    let t = tail_slope(&zs, 0.2).map_err(|e| e.to_string())?;
    close("exponential tail", t.slope, -1.0, 0.05)
}

const CHECKS: &[(&str, Check)] = &[
    ("sector sizes", sector_sizes),
    ("rng reference stream", rng_stream),
    ("2x2 eigenvalues", two_by_two),
    ("row sum and f-sum rule at L = 8", sum_rule_l8),
    ("two-level susceptibility", two_level_chi),
    ("typical zeta and gap ratio", typical_and_gaps),
    ("log W prefactor", prefactors),
    ("first-order susceptibility", first_order),
    ("closed forms", closed_forms),
    ("synthetic fits", synthetic_fits),
];

pub fn run_selftest() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok(detail) => CheckResult {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckResult {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}
