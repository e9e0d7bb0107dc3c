//! Rare-event probabilities by plain and exponentially tilted Monte Carlo,
//! `−ε log p̂` curves against the minimized action, and the two
//! weak-convergence experiments behind the large-deviation limit.
//!
//! The tilted estimator simulates the controlled dynamics (drift `σ v`
//! added) and reweights each sample by the Girsanov density evaluated on the
//! driving increments,
//!
//! ```text
//! w = exp{ -(1/√ε) Σ v·ΔW - (1/(2ε)) ‖v‖² },
//! ```
//!
//! which makes plain and tilted estimators unbiased for the same probability
//! at the discrete level (the grid shift `ΔW + dt dx v/√ε` maps one scheme
//! onto the other exactly). Samples draw their seeds from
//! `(master_seed, index)` and are reduced through a fixed pairwise tree, so
//! every estimate is reproducible bit-for-bit regardless of thread count.

use crate::error::{Error, Result};
use crate::grid_noise::{
    derive_sample_seed, oscillatory_family, sample_sheet, Control, GridSpec, SheetIncrements,
};
use crate::kernel::dst_coefficients;
use crate::models::Coefficients;
use crate::numeric::{fmt_float, l2_norm, pairwise_sum};
use crate::rate::{minimize_rate, MinimizeOptions, RateResult, TargetSpec};
use crate::solver::{c0l2_distance, solve, solve_skeleton, SolveConfig, Trajectory};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Threshold events on the path space, realizing the closed/open sets of the
/// large-deviation bounds.
#[derive(Debug, Clone)]
pub enum EventSpec {
    /// `⟨U(T,·), φ⟩ ≥ c`.
    TerminalProjectionGeq { profile: Vec<f64>, level: f64 },
    /// `|U(T,·)|₂ ≥ c`.
    TerminalL2Geq { level: f64 },
    /// `sup_t |U(t,·)|₂ ≥ c`.
    SupL2Geq { level: f64 },
}

impl EventSpec {
    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if let EventSpec::TerminalProjectionGeq { profile, .. } = self {
            if profile.len() != grid.nx() {
                return Err(Error::validation(format!(
                    "event profile has {} entries, grid has nx = {}",
                    profile.len(),
                    grid.nx()
                )));
            }
        }
        Ok(())
    }

    /// Indicator of the event on a trajectory.
    pub fn indicator(&self, traj: &Trajectory) -> bool {
        let grid = traj.grid();
        let dx = grid.dx();
        match self {
            EventSpec::TerminalProjectionGeq { profile, level } => {
                let mut acc = 0.0;
                for (u, p) in traj.terminal().iter().zip(profile) {
                    acc += u * p;
                }
                acc * dx >= *level
            }
            EventSpec::TerminalL2Geq { level } => l2_norm(traj.terminal(), dx) >= *level,
            EventSpec::SupL2Geq { level } => traj.sup_l2() >= *level,
        }
    }

    /// The minimization target matching this event, when one exists.
    pub fn matching_target(&self) -> Option<TargetSpec> {
        match self {
            EventSpec::TerminalProjectionGeq { profile, level } => {
                Some(TargetSpec::terminal_projection(profile.clone(), *level))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Plain,
    Tilted,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Plain => write!(f, "plain"),
            Method::Tilted => write!(f, "tilted"),
        }
    }
}

/// One Monte Carlo probability estimate with its sampling error.
#[derive(Debug, Clone)]
pub struct MCEstimate {
    /// Mean of the (weighted) indicators; can exceed 1 transiently for
    /// tilted estimators at tiny sample sizes.
    pub p_hat: f64,
    /// Standard error of the same weighted sample.
    pub std_error: f64,
    /// Samples requested.
    pub n: usize,
    /// Samples excluded for blow-up (always reported, capped at 0.1%).
    pub n_excluded: usize,
    pub epsilon: f64,
    pub method: Method,
    pub master_seed: u64,
}

impl MCEstimate {
    pub fn csv_header() -> &'static str {
        "epsilon,method,n,n_excluded,p_hat,std_error,master_seed"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_float(self.epsilon),
            self.method,
            self.n,
            self.n_excluded,
            fmt_float(self.p_hat),
            fmt_float(self.std_error),
            self.master_seed
        )
    }
}

/// Girsanov density of the control shift, evaluated on the discrete sheet:
/// `exp{ -(1/√ε) Σ v ΔW - ‖v‖²/(2ε) }` with the plain grid pairing
/// `Σ v(j,i) ΔW(j,i)`.
pub fn likelihood_weight(v: &Control, sheet: &SheetIncrements, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon = {epsilon} must be > 0")));
    }
    if v.grid() != sheet.grid() {
        return Err(Error::validation("control and sheet grids differ"));
    }
    let products: Vec<f64> = v
        .values()
        .iter()
        .zip(sheet.values())
        .map(|(a, b)| a * b)
        .collect();
    let pairing = pairwise_sum(&products);
    Ok((-pairing / epsilon.sqrt() - v.norm_sq() / (2.0 * epsilon)).exp())
}

const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

/// Estimate `P(event)` for the noisy dynamics at intensity `epsilon`.
///
/// Plain mode simulates the uncontrolled equation and averages the
/// indicator. With `tilt` present the controlled process is simulated and
/// each indicator is reweighted by `likelihood_weight`, an unbiased
/// importance-sampling estimator of the same probability. Blown-up samples
/// are excluded with a reported count and the run fails hard if they exceed
/// 0.1% of `n`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_probability(
    event: &EventSpec,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    epsilon: f64,
    n: usize,
    master_seed: u64,
    tilt: Option<&Control>,
) -> Result<MCEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon = {epsilon} must be > 0")));
    }
    if n < 1 {
        return Err(Error::validation("need at least one sample"));
    }
    event.validate(grid)?;
    if let Some(v) = tilt {
        if v.grid() != grid {
            return Err(Error::validation("tilt control grid does not match"));
        }
    }
    let cfg = SolveConfig::with_epsilon(epsilon);

    let outcomes: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|m| -> Result<Option<f64>> {
            let sheet = sample_sheet(grid, derive_sample_seed(master_seed, m as u64));
            match solve(eta, coeffs, grid, &cfg, tilt, Some(&sheet)) {
                Ok(traj) => {
                    let hit = event.indicator(&traj);
                    let value = match tilt {
                        None => hit as u8 as f64,
                        Some(v) => {
                            if hit {
                                likelihood_weight(v, &sheet, epsilon)?
                            } else {
                                0.0
                            }
                        }
                    };
                    Ok(Some(value))
                }
                Err(Error::BlowUp { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let n_excluded = outcomes.iter().filter(|o| o.is_none()).count();
    if n_excluded as f64 > MAX_EXCLUDED_FRACTION * n as f64 {
        return Err(Error::ExcessiveExclusions {
            excluded: n_excluded,
            total: n,
            max_fraction: MAX_EXCLUDED_FRACTION,
        });
    }
    let values: Vec<f64> = outcomes.into_iter().flatten().collect();
    let n_eff = values.len();
    let p_hat = pairwise_sum(&values) / n_eff as f64;
    let std_error = if n_eff > 1 {
        let sq: Vec<f64> = values.iter().map(|w| (w - p_hat) * (w - p_hat)).collect();
        (pairwise_sum(&sq) / ((n_eff - 1) as f64 * n_eff as f64)).sqrt()
    } else {
        0.0
    };
    Ok(MCEstimate {
        p_hat,
        std_error,
        n,
        n_excluded,
        epsilon,
        method: if tilt.is_some() {
            Method::Tilted
        } else {
            Method::Plain
        },
        master_seed,
    })
}

/// When to switch the curve's estimates from plain to tilted sampling.
#[derive(Debug, Clone, Copy)]
pub enum TiltPolicy {
    Plain,
    Tilted,
    /// Tilted for `ε ≤ threshold`, plain above.
    Auto {
        threshold: f64,
    },
}

impl TiltPolicy {
    fn tilted_at(&self, epsilon: f64) -> bool {
        match self {
            TiltPolicy::Plain => false,
            TiltPolicy::Tilted => true,
            TiltPolicy::Auto { threshold } => epsilon <= *threshold,
        }
    }
}

/// One row of the `−ε log p̂` curve.
#[derive(Debug, Clone)]
pub struct LdpRow {
    pub epsilon: f64,
    pub p_hat: f64,
    pub std_error: f64,
    pub minus_eps_log_p: f64,
    /// 95% interval for `−ε log p̂` from the sampling error.
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: Method,
    pub n: usize,
    pub n_excluded: usize,
    /// Analytic tail probability, when the model admits one.
    pub oracle_p: Option<f64>,
}

/// A `−ε log p̂` curve with the minimized rate it should approach.
#[derive(Debug, Clone)]
pub struct LDPReport {
    pub rows: Vec<LdpRow>,
    /// `½‖v*‖²` from the matching minimization, when the event admits one.
    pub reference_rate: Option<f64>,
    /// The analytic limiting rate, when the model admits one.
    pub oracle_rate: Option<f64>,
}

impl LDPReport {
    pub fn csv_header() -> &'static str {
        "epsilon,p_hat,std_error,minus_eps_log_p,ci_low,ci_high,method,n,n_excluded,reference_rate,oracle_p,oracle_minus_eps_log_p"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for r in &self.rows {
            let oracle_log = r
                .oracle_p
                .map(|p| fmt_float(-r.epsilon * p.ln()))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_float(r.epsilon),
                fmt_float(r.p_hat),
                fmt_float(r.std_error),
                fmt_float(r.minus_eps_log_p),
                fmt_float(r.ci_low),
                fmt_float(r.ci_high),
                r.method,
                r.n,
                r.n_excluded,
                opt(self.reference_rate),
                opt(r.oracle_p),
                oracle_log,
            ));
        }
        out
    }
}

/// Upper tail of the standard normal, accurate far into the tail.
pub fn normal_upper_tail(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Mean and variance of `⟨U(T,·), φ⟩` for the additive linear model:
/// `m = ⟨S(T)η, φ⟩` and `s² = Σ_k φ̂_k² (1 − e^{−2k²π²T}) / (4k²π²)`.
fn projection_law(eta: &[f64], profile: &[f64], grid: &GridSpec) -> Result<(f64, f64)> {
    let t_end = grid.t_horizon();
    let eta_hat = dst_coefficients(eta, grid)?;
    let phi_hat = dst_coefficients(profile, grid)?;
    let mut mean = 0.0;
    let mut var = 0.0;
    for k0 in 0..grid.nx() {
        let k = (k0 + 1) as f64;
        let lambda = k * k * PI * PI;
        // <sin(k pi .), sin(k pi .)> = 1/2 on [0,1].
        mean += eta_hat[k0] * phi_hat[k0] * 0.5 * (-lambda * t_end).exp();
        var += phi_hat[k0] * phi_hat[k0] * 0.5 * (1.0 - (-2.0 * lambda * t_end).exp())
            / (2.0 * lambda);
    }
    Ok((mean, var))
}

/// Analytic `P(⟨U(T), φ⟩ ≥ c)` for the linear additive model at intensity
/// `epsilon`; `None` when no closed form applies.
pub fn gaussian_oracle(
    event: &EventSpec,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    epsilon: f64,
) -> Option<f64> {
    if !coeffs.is_linear_heat() {
        return None;
    }
    match event {
        EventSpec::TerminalProjectionGeq { profile, level } => {
            let (mean, var) = projection_law(eta, profile, grid).ok()?;
            Some(normal_upper_tail((level - mean) / (epsilon * var).sqrt()))
        }
        _ => None,
    }
}

/// Analytic limiting rate `(c − m)² / (2 s²)` for the linear additive model.
pub fn gaussian_oracle_rate(
    event: &EventSpec,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
) -> Option<f64> {
    if !coeffs.is_linear_heat() {
        return None;
    }
    match event {
        EventSpec::TerminalProjectionGeq { profile, level } => {
            let (mean, var) = projection_law(eta, profile, grid).ok()?;
            Some((level - mean).powi(2) / (2.0 * var))
        }
        _ => None,
    }
}

/// One `MCEstimate` per `ε`, tilted per policy with the minimizing control
/// of the matching target, plus the minimized reference rate and the
/// analytic oracle when available.
#[allow(clippy::too_many_arguments)]
pub fn ldp_curve(
    event: &EventSpec,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    epsilon_list: &[f64],
    n: usize,
    master_seed: u64,
    policy: TiltPolicy,
) -> Result<LDPReport> {
    if epsilon_list.is_empty() {
        return Err(Error::validation("need at least one epsilon"));
    }
    for pair in epsilon_list.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::validation("epsilons must be positive, decreasing"));
        }
    }
    if !(epsilon_list[epsilon_list.len() - 1] > 0.0) {
        return Err(Error::validation("epsilons must be positive"));
    }
    event.validate(grid)?;

    let needs_tilt = epsilon_list.iter().any(|&e| policy.tilted_at(e));
    let reference: Option<RateResult> = match event.matching_target() {
        Some(target) => Some(minimize_rate(
            eta,
            coeffs,
            grid,
            &target,
            &MinimizeOptions::default(),
        )?),
        None if needs_tilt => {
            return Err(Error::validation(
                "tilt policy needs a terminal-projection event to derive the tilt from",
            ));
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(epsilon_list.len());
    for (idx, &epsilon) in epsilon_list.iter().enumerate() {
        let sub_seed = derive_sample_seed(master_seed, 0x10_000 + idx as u64);
        let tilt = if policy.tilted_at(epsilon) {
            Some(&reference.as_ref().expect("checked above").control)
        } else {
            None
        };
        let est = estimate_probability(event, eta, coeffs, grid, epsilon, n, sub_seed, tilt)?;
        let minus_eps_log_p = -epsilon * est.p_hat.ln();
        let hi_p = est.p_hat + 1.96 * est.std_error;
        let lo_p = (est.p_hat - 1.96 * est.std_error).max(f64::MIN_POSITIVE);
        rows.push(LdpRow {
            epsilon,
            p_hat: est.p_hat,
            std_error: est.std_error,
            minus_eps_log_p,
            ci_low: -epsilon * hi_p.ln(),
            ci_high: -epsilon * lo_p.ln(),
            method: est.method,
            n: est.n,
            n_excluded: est.n_excluded,
            oracle_p: gaussian_oracle(event, eta, coeffs, grid, epsilon),
        });
    }
    Ok(LDPReport {
        rows,
        reference_rate: reference.map(|r| r.value),
        oracle_rate: gaussian_oracle_rate(event, eta, coeffs, grid),
    })
}

/// One `(ε, η^ε, v^ε)` tuple of the controlled-convergence experiment.
#[derive(Debug, Clone)]
pub struct A2Point {
    pub epsilon: f64,
    pub eta: Vec<f64>,
    pub control: Control,
}

#[derive(Debug, Clone)]
pub struct A2Row {
    pub epsilon: f64,
    pub mean_distance: f64,
    pub std_distance: f64,
    pub n_seeds: usize,
}

impl A2Row {
    pub fn csv_header() -> &'static str {
        "epsilon,mean_distance,std_distance,n_seeds"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            fmt_float(self.epsilon),
            fmt_float(self.mean_distance),
            fmt_float(self.std_distance),
            self.n_seeds
        )
    }
}

/// Simulate the controlled noisy process `V^{ε, v^ε}` for each point and
/// measure its `C([0,T]; L²)` distance to the limiting skeleton path
/// `V^{0, v}`, averaged over independent sheets.
#[allow(clippy::too_many_arguments)]
pub fn a2_experiment(
    points: &[A2Point],
    limit_eta: &[f64],
    limit_control: &Control,
    coeffs: &Coefficients,
    grid: &GridSpec,
    seeds_per_eps: usize,
    master_seed: u64,
    m_bound: f64,
) -> Result<Vec<A2Row>> {
    if seeds_per_eps == 0 {
        return Err(Error::validation("need at least one seed per epsilon"));
    }
    for p in points {
        if !(p.epsilon > 0.0) {
            return Err(Error::validation("a2 epsilons must be positive"));
        }
        if p.control.norm_sq() > m_bound {
            return Err(Error::validation(format!(
                "control norm^2 = {} exceeds the S^M bound {m_bound}",
                p.control.norm_sq()
            )));
        }
    }
    let limit = solve_skeleton(limit_eta, coeffs, grid, limit_control)?;
    let mut rows = Vec::with_capacity(points.len());
    for (idx, point) in points.iter().enumerate() {
        let cfg = SolveConfig::with_epsilon(point.epsilon);
        let distances: Vec<f64> = (0..seeds_per_eps)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let seed =
                    derive_sample_seed(derive_sample_seed(master_seed, idx as u64), k as u64);
                let sheet = sample_sheet(grid, seed);
                let traj = solve(
                    &point.eta,
                    coeffs,
                    grid,
                    &cfg,
                    Some(&point.control),
                    Some(&sheet),
                )?;
                c0l2_distance(&traj, &limit)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = pairwise_sum(&distances) / distances.len() as f64;
        let std = if distances.len() > 1 {
            let sq: Vec<f64> = distances.iter().map(|d| (d - mean) * (d - mean)).collect();
            (pairwise_sum(&sq) / (distances.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(A2Row {
            epsilon: point.epsilon,
            mean_distance: mean,
            std_distance: std,
            n_seeds: seeds_per_eps,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct A1Row {
    pub n: usize,
    pub distance: f64,
}

impl A1Row {
    pub fn csv_header() -> &'static str {
        "n,distance"
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{}", self.n, fmt_float(self.distance))
    }
}

/// Weak-convergence continuity of the skeleton map: distances between the
/// skeleton driven by `oscillatory_family(v, n)` and by `v`, for each `n`.
pub fn a1_experiment(
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    v: &Control,
    n_list: &[usize],
    amplitude: f64,
) -> Result<Vec<A1Row>> {
    for pair in n_list.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::validation("n_list must be strictly increasing"));
        }
    }
    let base = solve_skeleton(eta, coeffs, grid, v)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let vn = oscillatory_family(v, n, amplitude);
        let traj = solve_skeleton(eta, coeffs, grid, &vn)?;
        rows.push(A1Row {
            n,
            distance: c0l2_distance(&traj, &base)?,
        });
    }
    Ok(rows)
}
