//! Fits and derived quantities on aggregated spectra and summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::SpectralHistogram;
use crate::stats::{fit_line, median, SlopeFit};

/// Measured prefactor `C` of the `C / (W omega)` spectral law.
pub const PREFACTOR_REFERENCE: f64 = 0.0179;
/// Slopes accepted as a `1/omega` regime by [`one_over_omega_prefactor`].
pub const ONE_OVER_OMEGA_RANGE: (f64, f64) = (-1.3, -0.7);
/// Sliding window, in bins, of the curvature smoother.
pub const CURVATURE_WINDOW: usize = 7;
/// Smallest `|d^2 log rho / d (log omega)^2|` counted as a real bend.
pub const MIN_CURVATURE: f64 = 1e-3;

/// `omega_uv = scale / W`.
pub fn omega_uv(w: f64, scale: f64) -> f64 {
    scale / w
}

/// `(log omega, log density)` of the nonzero bins whose center lies in `window`.
fn log_points(hist: &SpectralHistogram, window: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..hist.bins() {
        let c = hist.center(k);
        let d = hist.density(k);
        if c >= window.0 && c <= window.1 && d > 0.0 {
            xs.push(c.ln());
            ys.push(d.ln());
        }
    }
    (xs, ys)
}

/// Least-squares power law through the nonzero bins inside `window`.
pub fn loglog_slope(hist: &SpectralHistogram, window: (f64, f64)) -> Result<SlopeFit> {
    if !(window.0 > 0.0) || !(window.1 > window.0) {
        return Err(Error::invalid(format!("bad frequency window {window:?}")));
    }
    let (xs, ys) = log_points(hist, window);
    if xs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} nonzero bins in [{:e}, {:e}], need 4",
            xs.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, rms) = fit_line(&xs, &ys)?;
    Ok(SlopeFit {
        slope,
        intercept,
        window: (xs[0].exp(), xs[xs.len() - 1].exp()),
        rms,
        points: xs.len(),
    })
}

/// Median of `density * omega * W` over the window, once the window has
/// been checked to follow `1/omega`.
pub fn one_over_omega_prefactor(hist: &SpectralHistogram, w: f64, window: (f64, f64)) -> Result<f64> {
    let fit = loglog_slope(hist, window)?;
    let (lo, hi) = ONE_OVER_OMEGA_RANGE;
    if fit.slope < lo || fit.slope > hi {
        return Err(Error::NotInRegime(format!(
            "log-log slope {:.3} outside [{lo}, {hi}]",
            fit.slope
        )));
    }
    let values: Vec<f64> = (0..hist.bins())
        .filter(|&k| {
            let c = hist.center(k);
            c >= window.0 && c <= window.1 && hist.density(k) > 0.0
        })
        .map(|k| hist.density(k) * hist.center(k) * w)
        .collect();
    Ok(median(&values).expect("window holds at least four bins"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThoulessMethod {
    MaxCurvature,
    SumRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThoulessEstimate {
    pub omega_th: f64,
    pub method: ThoulessMethod,
    /// Exponent of `omega_th ~ exp(-alpha W)` when known.
    pub alpha_fit: Option<f64>,
}

/// Second derivative at `x0` of the least-squares cubic through the points.
fn cubic_second_derivative(xs: &[f64], ys: &[f64], x0: f64) -> Option<f64> {
    // Normal equations for y = a0 + a1 t + a2 t^2 + a3 t^3, t = x - x0.
    let mut a = [[0.0f64; 5]; 4];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = x - x0;
        let p = [1.0, t, t * t, t * t * t];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] += p[i] * p[j];
            }
            a[i][4] += p[i] * y;
        }
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..4 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..5 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    Some(2.0 * a[2][4] / a[2][2])
}

/// Smoothed `d^2 log rho / d(log omega)^2` at the center of every run of
/// [`CURVATURE_WINDOW`] consecutive nonzero bins inside `window`.
pub fn smoothed_curvature(hist: &SpectralHistogram, window: (f64, f64)) -> Vec<(f64, f64)> {
    let half = CURVATURE_WINDOW / 2;
    let usable: Vec<bool> = (0..hist.bins())
        .map(|k| {
            let c = hist.center(k);
            c >= window.0 && c <= window.1 && hist.density(k) > 0.0
        })
        .collect();
    let mut out = Vec::new();
    for k in half..hist.bins().saturating_sub(half) {
        if !(k - half..=k + half).all(|j| usable[j]) {
            continue;
        }
        let xs: Vec<f64> = (k - half..=k + half).map(|j| hist.center(j).ln()).collect();
        let ys: Vec<f64> = (k - half..=k + half).map(|j| hist.density(j).ln()).collect();
        if let Some(d2) = cubic_second_derivative(&xs, &ys, xs[half]) {
            out.push((hist.center(k), d2));
        }
    }
    out
}

/// Thouless energy as the sharpest concave bend of the log-log spectrum
/// below `window.1`, the plateau turning into the power-law decay.
pub fn thouless_max_curvature(hist: &SpectralHistogram, window: (f64, f64)) -> Result<ThoulessEstimate> {
    let nonzero = (0..hist.bins()).filter(|&k| hist.density(k) > 0.0).count();
    if nonzero < 10 {
        return Err(Error::InsufficientData(format!("{nonzero} nonzero bins, need 10")));
    }
    let curve = smoothed_curvature(hist, window);
    let best = curve
        .iter()
        .enumerate()
        .max_by(|a, b| (-a.1 .1).total_cmp(&-b.1 .1))
        .ok_or_else(|| Error::NotFound("no smoothing window fits inside the range".into()))?;
    let (idx, &(omega, d2)) = best;
    if -d2 < MIN_CURVATURE {
        return Err(Error::NotFound(format!(
            "largest concave curvature {:.2e} below {MIN_CURVATURE:e}",
            -d2
        )));
    }
    if idx == 0 || idx + 1 == curve.len() {
        return Err(Error::NotFound(format!(
            "curvature peaks at the edge of the range (omega = {omega:e})"
        )));
    }
    Ok(ThoulessEstimate {
        omega_th: omega,
        method: ThoulessMethod::MaxCurvature,
        alpha_fit: None,
    })
}

/// `alpha = 1 / (8 C)`: the decay constant of the sum-rule Thouless energy.
pub fn alpha_from_prefactor(c: f64) -> f64 {
    1.0 / (8.0 * c)
}

/// Closed form of `2 int_{omega_th}^{omega_uv} C/(W omega) d omega = 1/4`.
pub fn thouless_from_prefactor(c: f64, w: f64, omega_uv: f64) -> Result<f64> {
    if !(c > 0.0) || !(w > 0.0) || !(omega_uv > 0.0) {
        return Err(Error::invalid("C, W and omega_uv must be > 0"));
    }
    let th = omega_uv * (-w * alpha_from_prefactor(c)).exp();
    if !th.is_normal() {
        return Err(Error::Undefined(format!(
            "Thouless energy exp(-{:.3e}) below the f64 range",
            w * alpha_from_prefactor(c)
        )));
    }
    Ok(th)
}

/// Sum-rule Thouless energy with the prefactor fitted on `window`.
pub fn thouless_sum_rule(
    hist: &SpectralHistogram,
    w: f64,
    omega_uv: f64,
    window: (f64, f64),
) -> Result<ThoulessEstimate> {
    let c = one_over_omega_prefactor(hist, w, window)?;
    Ok(ThoulessEstimate {
        omega_th: thouless_from_prefactor(c, w, omega_uv)?,
        method: ThoulessMethod::SumRule,
        alpha_fit: Some(alpha_from_prefactor(c)),
    })
}

/// Fit `omega_th = A exp(-alpha W)`; returns `(alpha, fit)`.
pub fn thouless_exponent(ws: &[f64], omega_th: &[f64]) -> Result<(f64, SlopeFit)> {
    if omega_th.iter().any(|o| !(*o > 0.0)) {
        return Err(Error::invalid("Thouless energies must be > 0"));
    }
    let ys: Vec<f64> = omega_th.iter().map(|o| o.ln()).collect();
    let (slope, intercept, rms) = fit_line(ws, &ys)?;
    let fit = SlopeFit {
        slope,
        intercept,
        window: (ws.iter().cloned().fold(f64::INFINITY, f64::min), ws.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        rms,
        points: ws.len(),
    };
    Ok((-slope, fit))
}

/// Share of the total spectral weight above `omega_uv`.
pub fn uv_weight_fraction(hist: &SpectralHistogram, omega_uv: f64) -> Result<f64> {
    let lo = hist.edges[0];
    let hi = hist.edges[hist.edges.len() - 1];
    if !(omega_uv >= lo && omega_uv <= hi) {
        return Err(Error::invalid(format!(
            "omega_uv = {omega_uv:e} outside the binned range [{lo:e}, {hi:e}]"
        )));
    }
    let total = hist.total_weight();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok((hist.weight_above(omega_uv) / total).clamp(0.0, 1.0))
}

/// `W* = (L log 2 - log ratio_uv) / alpha`.
pub fn critical_disorder(sites: f64, alpha: f64, ratio_uv: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be > 0"));
    }
    if !(ratio_uv >= 1.0) {
        return Err(Error::invalid("ratio_uv must be >= 1"));
    }
    Ok((sites * std::f64::consts::LN_2 - ratio_uv.ln()) / alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub beta: f64,
    pub alpha: f64,
    /// Decay rate of `P(z) ~ exp(-rate z)`.
    pub predicted: f64,
}

/// `(1 + beta) / (2 + alpha)`.
pub fn tail_slope_prediction(beta: f64, alpha: f64) -> Result<TailModel> {
    if !(beta >= -1.0) || !(alpha >= 0.0) {
        return Err(Error::invalid("need beta >= -1 and alpha >= 0"));
    }
    Ok(TailModel {
        beta,
        alpha,
        predicted: (1.0 + beta) / (2.0 + alpha),
    })
}

/// Mean gap ratio halfway between the Poisson and GOE references is taken
/// as the switch between `beta = 0` and `beta = 1`.
pub fn beta_from_gap_ratio(mean_r: f64) -> f64 {
    const POISSON: f64 = 0.3863;
    const GOE: f64 = 0.5307;
    if mean_r >= 0.5 * (POISSON + GOE) {
        1.0
    } else {
        0.0
    }
}

fn line_through(xs: Vec<f64>, ys: Vec<f64>, window: (f64, f64)) -> Result<SlopeFit> {
    let (slope, intercept, rms) = fit_line(&xs, &ys)?;
    Ok(SlopeFit {
        slope,
        intercept,
        window,
        rms,
        points: xs.len(),
    })
}

/// `zeta` against `L` at fixed `W`; compare the slope with `log 2` or `2 log 2`.
pub fn zeta_vs_sites(points: &[(usize, f64)]) -> Result<SlopeFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let window = span(&xs);
    line_through(xs, ys, window)
}

/// `zeta` against `log W`; at strong disorder the slope approaches `-C(L)`.
pub fn zeta_vs_log_w(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.iter().any(|p| !(p.0 > 0.0)) {
        return Err(Error::invalid("W must be > 0"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let window = span(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    line_through(xs, ys, window)
}

fn span(xs: &[f64]) -> (f64, f64) {
    (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Log-log fit of `1 - Z` against `W`, plus `c` of `Z = 1 - c/W` obtained
/// with the slope pinned to `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedFit {
    pub fit: SlopeFit,
    pub c: f64,
}

pub fn conserved_fraction_fit(points: &[(f64, f64)]) -> Result<ConservedFit> {
    if points.iter().any(|p| !(p.0 > 0.0) || !(p.1 < 1.0)) {
        return Err(Error::invalid("need W > 0 and Z < 1 at every point"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (1.0 - p.1).ln()).collect();
    let c = (xs.iter().zip(&ys).map(|(x, y)| x + y).sum::<f64>() / xs.len() as f64).exp();
    let window = span(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    Ok(ConservedFit {
        fit: line_through(xs, ys, window)?,
        c,
    })
}

/// Location of the maximum of `values` on an ascending grid: the grid
/// argmax refined by a parabola through its neighbours in `log W`.
pub fn peak_location(ws: &[f64], values: &[f64]) -> Result<f64> {
    if ws.len() != values.len() || ws.len() < 3 {
        return Err(Error::invalid("need at least three (W, value) pairs"));
    }
    let k = (0..values.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    if k == 0 || k + 1 == ws.len() {
        return Err(Error::NotFound(format!("maximum at the edge of the grid (W = {})", ws[k])));
    }
    let (x0, x1, x2) = (ws[k - 1].ln(), ws[k].ln(), ws[k + 1].ln());
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    let den = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
    if !(a < 0.0) {
        return Ok(ws[k]);
    }
    Ok((-b / (2.0 * a)).clamp(x0, x2).exp())
}
