//! The action functional `I_η(h) = inf { ½‖v‖² : skeleton(η, v) = h }`.
//!
//! Two routes are provided. When the noise coefficient is bounded away from
//! zero the control reproducing a given path is recovered by residual
//! division: rearrange the solver's own scheme for `v` and pay `½‖v‖²`
//! (`evaluate_rate_direct`; exact at the discrete level for any path produced
//! by the skeleton solver). For target *sets* the infimum is computed
//! variationally: minimize the discrete objective
//!
//! ```text
//! J(v) = ½ Σ v² dx dt + μ · penalty(h_v(T)),   h_v = skeleton(η, v),
//! ```
//!
//! with the exact gradient of the discrete objective (adjoint recursion of
//! the semi-implicit scheme run backward) and a quasi-Newton descent, driving
//! `μ` upward until the constraint violation falls below tolerance.

use crate::error::{Error, Result};
use crate::grid_noise::{Control, GridSpec};
use crate::models::Coefficients;
use crate::numeric::{fmt_float, pairwise_sum};
use crate::solver::{solve, SolveConfig, Trajectory};

/// What the minimizing path must achieve at the final time.
#[derive(Debug, Clone)]
pub enum TargetKind {
    /// Drive `⟨h(T,·), φ⟩` to the given level.
    TerminalProjection { profile: Vec<f64>, level: f64 },
    /// Match `h(T,·)` to a given field in `L²`.
    TerminalField { field: Vec<f64> },
}

/// Penalty-formulated terminal target.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub kind: TargetKind,
    /// Initial penalty weight `μ`; continuation multiplies it upward.
    pub penalty_weight: f64,
    /// Acceptable constraint violation at convergence.
    pub tolerance: f64,
}

impl TargetSpec {
    pub fn terminal_projection(profile: Vec<f64>, level: f64) -> Self {
        TargetSpec {
            kind: TargetKind::TerminalProjection { profile, level },
            penalty_weight: 10.0,
            tolerance: 5e-3,
        }
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.penalty_weight >= 0.0) || !self.penalty_weight.is_finite() {
            return Err(Error::validation("penalty_weight must be >= 0 and finite"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("tolerance must be positive"));
        }
        let len = match &self.kind {
            TargetKind::TerminalProjection { profile, level } => {
                if !level.is_finite() {
                    return Err(Error::validation("target level must be finite"));
                }
                profile.len()
            }
            TargetKind::TerminalField { field } => field.len(),
        };
        if len != grid.nx() {
            return Err(Error::validation(format!(
                "target profile has {len} entries, grid has nx = {}",
                grid.nx()
            )));
        }
        Ok(())
    }

    /// Constraint violation of a terminal field.
    pub fn violation(&self, terminal: &[f64], dx: f64) -> f64 {
        match &self.kind {
            TargetKind::TerminalProjection { profile, level } => {
                (dot_dx(terminal, profile, dx) - level).abs()
            }
            TargetKind::TerminalField { field } => {
                let diff: Vec<f64> = terminal.iter().zip(field).map(|(a, b)| a - b).collect();
                crate::numeric::l2_norm(&diff, dx)
            }
        }
    }

    /// `penalty = ½ violation²` in the matching norm.
    fn penalty(&self, terminal: &[f64], dx: f64) -> f64 {
        let v = self.violation(terminal, dx);
        0.5 * v * v
    }

    /// Euclidean gradient of the penalty with respect to the terminal field.
    fn penalty_grad(&self, terminal: &[f64], dx: f64) -> Vec<f64> {
        match &self.kind {
            TargetKind::TerminalProjection { profile, level } => {
                let gap = dot_dx(terminal, profile, dx) - level;
                profile.iter().map(|&p| gap * p * dx).collect()
            }
            TargetKind::TerminalField { field } => terminal
                .iter()
                .zip(field)
                .map(|(a, b)| (a - b) * dx)
                .collect(),
        }
    }
}

fn dot_dx(a: &[f64], b: &[f64], dx: f64) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc * dx
}

/// Action value with the control that realizes it.
#[derive(Debug, Clone)]
pub struct RateResult {
    /// `½ ‖control‖²`.
    pub value: f64,
    pub control: Control,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

impl RateResult {
    pub fn csv_header() -> &'static str {
        "value,iterations,grad_norm,converged"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            fmt_float(self.value),
            self.iterations,
            fmt_float(self.grad_norm),
            self.converged
        )
    }
}

/// Invert the scheme along a given path: the residual of the semi-implicit
/// step divided by `σ` is the unique cell-constant control reproducing `h`,
/// and the action is `½‖v‖²`. Requires `σ` bounded away from zero.
pub fn evaluate_rate_direct(
    eta: &[f64],
    coeffs: &Coefficients,
    h: &Trajectory,
    grid: &GridSpec,
) -> Result<RateResult> {
    if coeffs.sigma_min <= 0.0 {
        return Err(Error::DegenerateSigma {
            sigma_min: coeffs.sigma_min,
        });
    }
    if h.grid() != grid {
        return Err(Error::validation("trajectory grid does not match"));
    }
    if eta.len() != grid.nx() || h.row(0) != eta {
        return Err(Error::validation(
            "trajectory row 0 does not equal the initial condition",
        ));
    }
    let (nx, nt, dx, dt) = (grid.nx(), grid.nt(), grid.dx(), grid.dt());
    let dx2 = dx * dx;
    let mut v = vec![0.0; nx * nt];
    let mut g_ghost = vec![0.0; nx + 2];
    for j in 0..nt {
        let t = grid.t(j);
        let prev = h.row(j);
        let next = h.row(j + 1);
        g_ghost[0] = coeffs.g(t, 0.0, 0.0);
        g_ghost[nx + 1] = coeffs.g(t, 1.0, 0.0);
        for i in 0..nx {
            g_ghost[i + 1] = coeffs.g(t, grid.x(i), prev[i]);
        }
        for i in 0..nx {
            let x = grid.x(i);
            let left = if i > 0 { next[i - 1] } else { 0.0 };
            let right = if i + 1 < nx { next[i + 1] } else { 0.0 };
            let laplacian = (left - 2.0 * next[i] + right) / dx2;
            let divergence = (g_ghost[i + 2] - g_ghost[i]) / (2.0 * dx);
            let residual =
                (next[i] - prev[i]) / dt - laplacian + divergence - coeffs.f(t, x, prev[i]);
            v[j * nx + i] = residual / coeffs.sigma(t, x, prev[i]);
        }
    }
    let control = Control::from_values(grid, v)?;
    Ok(RateResult {
        value: 0.5 * control.norm_sq(),
        control,
        iterations: 0,
        grad_norm: 0.0,
        converged: true,
    })
}

/// `J(v) = ½‖v‖² + μ · penalty(h_v(T))` at the target's own weight.
pub fn objective(
    v: &Control,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    target: &TargetSpec,
) -> Result<f64> {
    target.validate(grid)?;
    objective_at_mu(v, eta, coeffs, grid, target, target.penalty_weight)
}

fn objective_at_mu(
    v: &Control,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    target: &TargetSpec,
    mu: f64,
) -> Result<f64> {
    let h = solve(eta, coeffs, grid, &SolveConfig::default(), Some(v), None)?;
    Ok(0.5 * v.norm_sq() + mu * target.penalty(h.terminal(), grid.dx()))
}

/// Exact gradient of the discrete objective in the `L²([0,T]×[0,1])` inner
/// product, from the adjoint recursion of the stepping scheme.
pub fn adjoint_gradient(
    v: &Control,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    target: &TargetSpec,
) -> Result<Control> {
    target.validate(grid)?;
    let vals = gradient_at_mu(v, eta, coeffs, grid, target, target.penalty_weight)?;
    Control::from_values(grid, vals)
}

/// Dirichlet centered first difference of an interior field (ghost zeros).
fn centered_diff(field: &[f64], dx: f64, out: &mut [f64]) {
    let n = field.len();
    for i in 0..n {
        let left = if i > 0 { field[i - 1] } else { 0.0 };
        let right = if i + 1 < n { field[i + 1] } else { 0.0 };
        out[i] = (right - left) / (2.0 * dx);
    }
}

/// Solve `(I - dt Δ_h) out = rhs`; the matrix is symmetric, so this is also
/// the adjoint solve.
fn implicit_solve(rhs: &mut [f64], r: f64) {
    let n = rhs.len();
    let diag = 1.0 + 2.0 * r;
    let off = -r;
    let mut cp = vec![0.0; n];
    cp[0] = off / diag;
    rhs[0] /= diag;
    for i in 1..n {
        let denom = diag - off * cp[i - 1];
        cp[i] = off / denom;
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

fn gradient_at_mu(
    v: &Control,
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    target: &TargetSpec,
    mu: f64,
) -> Result<Vec<f64>> {
    let h = solve(eta, coeffs, grid, &SolveConfig::default(), Some(v), None)?;
    let (nx, nt, dx, dt) = (grid.nx(), grid.nt(), grid.dx(), grid.dt());
    let r = dt / (dx * dx);

    // Terminal adjoint state: lambda^{nt} = -M^{-1} [ mu grad P(U^{nt}) ].
    let mut lambda: Vec<f64> = target
        .penalty_grad(h.terminal(), dx)
        .iter()
        .map(|g| -mu * g)
        .collect();
    implicit_solve(&mut lambda, r);

    let mut grad = vec![0.0; nx * nt];
    let mut dh = vec![0.0; nx];
    for j in (0..nt).rev() {
        let t = grid.t(j);
        let u = h.row(j);
        // Gradient slab: v - sigma(U^j) lambda^{j+1} / dx.
        for i in 0..nx {
            let sigma = coeffs.sigma(t, grid.x(i), u[i]);
            grad[j * nx + i] = v.at(j, i) - sigma * lambda[i] / dx;
        }
        if j == 0 {
            break;
        }
        // Pull the adjoint back one step:
        // lambda^j = M^{-1} [ (1 + dt (f' + sigma' v)) lambda^{j+1}
        //                     + dt g' (D_h lambda^{j+1}) ].
        centered_diff(&lambda, dx, &mut dh);
        for i in 0..nx {
            let x = grid.x(i);
            let jac = coeffs.f_r(t, x, u[i]) + coeffs.sigma_r(t, x, u[i]) * v.at(j, i);
            lambda[i] = lambda[i] * (1.0 + dt * jac) + dt * coeffs.g_r(t, x, u[i]) * dh[i];
        }
        implicit_solve(&mut lambda, r);
    }
    Ok(grad)
}

/// Stopping and continuation parameters for `minimize_rate`.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Gradient-norm threshold (in the `L²` control norm) for convergence.
    pub grad_tol: f64,
    /// Iteration cap per penalty stage.
    pub max_inner_iterations: usize,
    /// Cap on the per-stage growth of `μ`; the actual multiplier is
    /// extrapolated from the observed constraint violation.
    pub mu_factor: f64,
    /// Continuation stops once `μ` reaches this.
    pub mu_max: f64,
    /// Quasi-Newton memory (L-BFGS pairs).
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            grad_tol: 1e-6,
            max_inner_iterations: 300,
            mu_factor: 10.0,
            mu_max: 1e12,
            memory: 10,
        }
    }
}

/// Minimize `½‖v‖²` over controls whose skeleton path meets the target, by
/// penalty continuation with L-BFGS inner solves and a backtracking (Armijo)
/// line search, so the objective never increases along accepted steps. The
/// returned value excludes the penalty term. Hitting the iteration or `μ` cap
/// yields `converged = false`, not an error.
pub fn minimize_rate(
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    target: &TargetSpec,
    opts: &MinimizeOptions,
) -> Result<RateResult> {
    target.validate(grid)?;
    if eta.len() != grid.nx() {
        return Err(Error::validation("initial condition length mismatch"));
    }
    let dx = grid.dx();
    let weight = grid.dx() * grid.dt();
    let dotw = |a: &[f64], b: &[f64]| -> f64 {
        let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        pairwise_sum(&prods) * weight
    };

    // The zero control may already satisfy the target; the rate is then 0.
    let h0 = solve(eta, coeffs, grid, &SolveConfig::default(), None, None)?;
    if target.violation(h0.terminal(), dx) <= target.tolerance {
        return Ok(RateResult {
            value: 0.0,
            control: Control::zero(grid),
            iterations: 0,
            grad_norm: 0.0,
            converged: true,
        });
    }

    let mut mu = target.penalty_weight.max(1e-6);
    let mut v = Control::zero(grid);
    let mut total_iters = 0usize;
    let mut grad_norm;
    let converged;

    loop {
        let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        let mut grad = gradient_at_mu(&v, eta, coeffs, grid, target, mu)?;
        let mut j_val = objective_at_mu(&v, eta, coeffs, grid, target, mu)?;
        let mut stage_ok = false;

        for _ in 0..opts.max_inner_iterations {
            grad_norm = dotw(&grad, &grad).sqrt();
            if grad_norm <= opts.grad_tol {
                stage_ok = true;
                break;
            }

            // L-BFGS two-loop recursion in the weighted inner product.
            let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut alphas = Vec::with_capacity(history.len());
            for (s, y, rho) in history.iter().rev() {
                let a = rho * dotw(s, &dir);
                for (d, yi) in dir.iter_mut().zip(y) {
                    *d -= a * yi;
                }
                alphas.push(a);
            }
            if let Some((s, y, _)) = history.last() {
                let gamma = dotw(s, y) / dotw(y, y);
                for d in dir.iter_mut() {
                    *d *= gamma;
                }
            }
            for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
                let b = rho * dotw(y, &dir);
                for (d, si) in dir.iter_mut().zip(s) {
                    *d += (a - b) * si;
                }
            }
            let mut slope = dotw(&grad, &dir);
            if slope >= 0.0 {
                history.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = -grad_norm * grad_norm;
            }

            // Backtracking Armijo search; a blown-up trial step just rejects.
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = v
                    .values()
                    .iter()
                    .zip(&dir)
                    .map(|(vi, di)| vi + alpha * di)
                    .collect();
                let trial = Control::from_values(grid, trial)?;
                match objective_at_mu(&trial, eta, coeffs, grid, target, mu) {
                    Ok(j_trial) if j_trial <= j_val + 1e-4 * alpha * slope => {
                        accepted = Some((trial, j_trial));
                        break;
                    }
                    Ok(_) => {}
                    Err(Error::BlowUp { .. }) => {}
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            let Some((v_new, j_new)) = accepted else {
                break; // line search exhausted; stage ends unconverged
            };
            let grad_new = gradient_at_mu(&v_new, eta, coeffs, grid, target, mu)?;
            let s: Vec<f64> = v_new
                .values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| a - b)
                .collect();
            let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dotw(&s, &y);
            if sy > 1e-14 {
                if history.len() == opts.memory {
                    history.remove(0);
                }
                history.push((s, y, 1.0 / sy));
            }
            v = v_new;
            grad = grad_new;
            j_val = j_new;
            total_iters += 1;
        }
        grad_norm = dotw(&grad, &grad).sqrt();

        let h = solve(eta, coeffs, grid, &SolveConfig::default(), Some(&v), None)?;
        let viol = target.violation(h.terminal(), dx);
        if viol <= target.tolerance {
            converged = stage_ok && grad_norm <= opts.grad_tol;
            break;
        }
        if mu >= opts.mu_max {
            converged = false;
            break;
        }
        // The violation of a penalty solve scales like 1/mu once mu is
        // large, so extrapolate the weight that lands just inside the
        // tolerance instead of overshooting it by a blind factor; the clamp
        // keeps geometric progress when that local model is off.
        let ratio = viol / (0.7 * target.tolerance);
        mu = (mu * ratio.clamp(2.0, opts.mu_factor.max(2.0))).min(opts.mu_max);
    }

    Ok(RateResult {
        value: 0.5 * v.norm_sq(),
        control: v,
        iterations: total_iters,
        grad_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_noise::sample_sheet;
    use crate::models::Preset;
    use crate::solver::solve_skeleton;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(nx: usize, nt: usize, t: f64) -> GridSpec {
        GridSpec::new(nx, nt, t).unwrap()
    }

    /// Random band-limited control, smooth in both variables.
    fn smooth_random_control(g: &GridSpec, seed: u64, scale: f64) -> Control {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coef = [[0.0f64; 3]; 3];
        for row in coef.iter_mut() {
            for c in row.iter_mut() {
                *c = scale * (rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        let t_end = g.t_horizon();
        Control::from_fn(g, |t, y| {
            let mut acc = 0.0;
            for (a, row) in coef.iter().enumerate() {
                for (b, &c) in row.iter().enumerate() {
                    acc += c * ((a + 1) as f64 * PI * y).sin() * (b as f64 * PI * t / t_end).cos();
                }
            }
            acc
        })
    }

    #[test]
    fn zero_control_round_trip_is_exact() {
        let c = Preset::Burgers.build().unwrap();
        let g = grid(31, 60, 0.5);
        let eta = g.spatial_field(|x| (PI * x).sin());
        let h = solve_skeleton(&eta, &c, &g, &Control::zero(&g)).unwrap();
        let res = evaluate_rate_direct(&eta, &c, &h, &g).unwrap();
        assert!(res.value <= 1e-20, "value = {}", res.value);
    }

    #[test]
    fn random_control_round_trip_recovers_action() {
        for preset in [Preset::LinearHeat, Preset::Burgers] {
            let c = preset.build().unwrap();
            let g = grid(31, 80, 1.0);
            let eta = g.spatial_field(|x| 0.5 * (PI * x).sin());
            for seed in 0..3 {
                let v0 = smooth_random_control(&g, seed, 0.8);
                let h = solve_skeleton(&eta, &c, &g, &v0).unwrap();
                let res = evaluate_rate_direct(&eta, &c, &h, &g).unwrap();
                let expect = 0.5 * v0.norm_sq();
                assert_relative_eq!(res.value, expect, max_relative = 1e-10);
                assert_relative_eq!(res.value, 0.5 * res.control.norm_sq(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn hand_computed_action_for_linear_growth_path() {
        // h(t,x) = t sin(pi x) under the linear heat model; the action
        // converges to ((1+pi^2)^3 - 1) / (12 pi^2) = 10.8348 under
        // refinement.
        let oracle = ((1.0 + PI * PI).powi(3) - 1.0) / (12.0 * PI * PI);
        let c = Preset::LinearHeat.build().unwrap();
        let mut errs = Vec::new();
        for (nx, nt) in [(63usize, 200usize), (127, 400)] {
            let g = grid(nx, nt, 1.0);
            let eta = vec![0.0; nx];
            let mut values = Vec::with_capacity((nt + 1) * nx);
            for j in 0..=nt {
                let t = g.t(j);
                for i in 0..nx {
                    values.push(t * (PI * g.x(i)).sin());
                }
            }
            let h = trajectory_from_values(&g, values);
            let res = evaluate_rate_direct(&eta, &c, &h, &g).unwrap();
            errs.push((res.value - oracle).abs() / oracle);
        }
        assert!(errs[0] < 0.02, "coarse error {}", errs[0]);
        assert!(errs[1] < errs[0], "no refinement gain: {errs:?}");
    }

    fn trajectory_from_values(g: &GridSpec, values: Vec<f64>) -> Trajectory {
        // Round-trip through the binary format rather than exposing a
        // constructor for arbitrary field data.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"SPDETRJ1");
        buf.extend_from_slice(&(g.nx() as u64).to_le_bytes());
        buf.extend_from_slice(&(g.nt() as u64).to_le_bytes());
        buf.extend_from_slice(&g.t_horizon().to_le_bytes());
        for v in &values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        crate::solver::export::read_bin(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn degenerate_sigma_and_row_mismatch_are_rejected() {
        let c = Preset::LinearHeat.build().unwrap();
        let g = grid(16, 10, 1.0);
        let eta = g.spatial_field(|x| x * (1.0 - x));
        let h = solve_skeleton(&eta, &c, &g, &Control::zero(&g)).unwrap();
        let other = vec![0.0; 16];
        assert!(matches!(
            evaluate_rate_direct(&other, &c, &h, &g),
            Err(Error::Validation(_))
        ));
        let mut dc = Preset::ReactionDiffusion {
            a: 0.0,
            s0: 1.0,
            s1: 0.0,
        }
        .build()
        .unwrap();
        dc.sigma_min = 0.0;
        assert!(matches!(
            evaluate_rate_direct(&eta, &dc, &h, &g),
            Err(Error::DegenerateSigma { .. })
        ));
    }

    #[test]
    fn gradient_reduces_to_control_without_penalty() {
        let c = Preset::Burgers.build().unwrap();
        let g = grid(16, 20, 0.5);
        let eta = g.spatial_field(|x| (PI * x).sin());
        let v = smooth_random_control(&g, 5, 0.5);
        let target = TargetSpec {
            kind: TargetKind::TerminalProjection {
                profile: g.spatial_field(|x| (PI * x).sin()),
                level: 1.0,
            },
            penalty_weight: 0.0,
            tolerance: 1e-3,
        };
        let grad = adjoint_gradient(&v, &eta, &c, &g, &target).unwrap();
        for (a, b) in grad.values().iter().zip(v.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn adjoint_gradient_matches_central_differences() {
        // Presets chosen to exercise every Jacobian term: f', g', and a
        // state-dependent sigma.
        let presets = [
            Preset::LinearHeat,
            Preset::Burgers,
            Preset::ReactionDiffusion {
                a: 1.0,
                s0: 1.0,
                s1: 0.25,
            },
        ];
        let g = grid(31, 50, 1.0);
        let eta = g.spatial_field(|x| 0.4 * (PI * x).sin());
        let phi = g.spatial_field(|x| (2.0f64).sqrt() * (PI * x).sin());
        let target = TargetSpec {
            kind: TargetKind::TerminalProjection {
                profile: phi,
                level: 0.7,
            },
            penalty_weight: 25.0,
            tolerance: 1e-3,
        };
        let weight = g.dx() * g.dt();
        for (pi, preset) in presets.iter().enumerate() {
            let c = preset.build().unwrap();
            let v = smooth_random_control(&g, 40 + pi as u64, 0.6);
            let grad = adjoint_gradient(&v, &eta, &c, &g, &target).unwrap();
            let mut worst = 0.0f64;
            for dir_seed in 0..4 {
                let w = smooth_random_control(&g, 100 + dir_seed, 1.0);
                let delta = 1e-5;
                let vp = v.add_scaled(&w, delta).unwrap();
                let vm = v.add_scaled(&w, -delta).unwrap();
                let jp = objective(&vp, &eta, &c, &g, &target).unwrap();
                let jm = objective(&vm, &eta, &c, &g, &target).unwrap();
                let fd = (jp - jm) / (2.0 * delta);
                let an: f64 = grad
                    .values()
                    .iter()
                    .zip(w.values())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    * weight;
                worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
            }
            assert!(worst <= 1e-6, "{}: rel err {worst}", c.name());
        }
    }

    #[test]
    fn adjoint_mode_shape_for_linear_heat() {
        // At v = 0 the projection-target gradient is c_mu e^{-pi^2 (T-t)}
        // sin(pi y) up to O(dt + dx^2): the spatial profile is the exact
        // discrete eigenvector, and the per-step decay ratio approaches
        // e^{-pi^2 dt} at first order in dt.
        let c = Preset::LinearHeat.build().unwrap();
        let mut rate_errs = Vec::new();
        for nt in [800usize, 3200] {
            let g = grid(63, nt, 1.0);
            let eta = vec![0.0; 63];
            let target = TargetSpec {
                kind: TargetKind::TerminalProjection {
                    profile: g.spatial_field(|x| (2.0f64).sqrt() * (PI * x).sin()),
                    level: 1.0,
                },
                penalty_weight: 1.0,
                tolerance: 1e-3,
            };
            let grad = adjoint_gradient(&Control::zero(&g), &eta, &c, &g, &target).unwrap();
            let mid = g.nx() / 2;
            // Spatial shape: exactly proportional to sin(pi x).
            for j in [0usize, nt / 3, nt - 1] {
                let scale = grad.at(j, mid) / (PI * g.x(mid)).sin();
                for i in [5usize, 20, 45] {
                    assert_relative_eq!(
                        grad.at(j, i),
                        scale * (PI * g.x(i)).sin(),
                        max_relative = 1e-10
                    );
                }
            }
            // Temporal decay: constant per-step ratio, off e^{-pi^2 dt} by
            // O(dt^2) per step, i.e. a decay-rate error of order dt.
            let r0 = grad.at(nt / 2, mid) / grad.at(nt / 2 - 1, mid);
            let r1 = grad.at(nt / 4, mid) / grad.at(nt / 4 - 1, mid);
            assert_relative_eq!(r0, r1, max_relative = 1e-10);
            // Forward in j the slab grows like e^{+pi^2 dt} toward T.
            let rate = r0.ln() / g.dt();
            rate_errs.push((rate - PI * PI).abs());
        }
        // First-order convergence of the decay rate: quartering dt cuts the
        // rate error by about four.
        assert!(rate_errs[0] < 0.1, "rate error {}", rate_errs[0]);
        assert!(
            rate_errs[1] < rate_errs[0] / 2.5,
            "rate errors {rate_errs:?}"
        );
    }

    #[test]
    fn minimize_returns_zero_for_already_met_target() {
        let c = Preset::LinearHeat.build().unwrap();
        let g = grid(31, 50, 1.0);
        let eta = vec![0.0; 31];
        let target = TargetSpec {
            kind: TargetKind::TerminalProjection {
                profile: g.spatial_field(|x| (2.0f64).sqrt() * (PI * x).sin()),
                level: 0.0,
            },
            penalty_weight: 10.0,
            tolerance: 1e-3,
        };
        let res = minimize_rate(&eta, &c, &g, &target, &MinimizeOptions::default()).unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.converged);
        assert!(res.control.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn minimize_matches_discrete_closed_form() {
        // Linear dynamics + projection target admit an exact discrete
        // optimum c'^2 / (2 s_h^2), s_h^2 = dt q^2 (1 - q^{2 nt})/(1 - q^2),
        // q = 1/(1 + lambda_h dt), with c' within tolerance of the level.
        let c = Preset::LinearHeat.build().unwrap();
        let g = grid(31, 100, 1.0);
        let eta = vec![0.0; 31];
        let level = 1.0;
        let target = TargetSpec {
            kind: TargetKind::TerminalProjection {
                profile: g.spatial_field(|x| (2.0f64).sqrt() * (PI * x).sin()),
                level,
            },
            penalty_weight: 10.0,
            tolerance: 5e-3,
        };
        let res = minimize_rate(&eta, &c, &g, &target, &MinimizeOptions::default()).unwrap();
        assert!(res.converged, "grad_norm = {}", res.grad_norm);

        let dx = g.dx();
        let lambda_h = 2.0 * (1.0 - (PI * dx).cos()) / (dx * dx);
        let q = 1.0 / (1.0 + lambda_h * g.dt());
        let s_h2 = g.dt() * q * q * (1.0 - q.powi(2 * g.nt() as i32)) / (1.0 - q * q);
        let upper = level * level / (2.0 * s_h2);
        let lower = (level - target.tolerance).powi(2) / (2.0 * s_h2);
        assert!(
            res.value <= upper * (1.0 + 1e-6) && res.value >= lower * (1.0 - 1e-6),
            "value {} outside [{lower}, {upper}]",
            res.value
        );
        assert_relative_eq!(res.value, 0.5 * res.control.norm_sq(), max_relative = 1e-12);
    }

    #[test]
    fn minimized_value_scales_quadratically_in_the_level() {
        let c = Preset::LinearHeat.build().unwrap();
        let g = grid(31, 100, 1.0);
        let eta = vec![0.0; 31];
        let run = |level: f64| {
            let target = TargetSpec {
                kind: TargetKind::TerminalProjection {
                    profile: g.spatial_field(|x| (2.0f64).sqrt() * (PI * x).sin()),
                    level,
                },
                penalty_weight: 10.0,
                tolerance: 2e-3 * level,
            };
            minimize_rate(&eta, &c, &g, &target, &MinimizeOptions::default())
                .unwrap()
                .value
        };
        let v1 = run(1.0);
        let v2 = run(2.0);
        assert!((v2 / v1 - 4.0).abs() < 0.04, "ratio {}", v2 / v1);
    }

    #[test]
    fn nonlinear_target_is_reached_within_tolerance() {
        let c = Preset::Burgers.build().unwrap();
        let g = grid(16, 30, 0.5);
        let eta = g.spatial_field(|x| (PI * x).sin());
        let target = TargetSpec {
            kind: TargetKind::TerminalProjection {
                profile: g.spatial_field(|x| (2.0f64).sqrt() * (PI * x).sin()),
                level: 0.4,
            },
            penalty_weight: 50.0,
            tolerance: 1e-2,
        };
        let res = minimize_rate(&eta, &c, &g, &target, &MinimizeOptions::default()).unwrap();
        assert!(res.value >= 0.0);
        let h = solve_skeleton(&eta, &c, &g, &res.control).unwrap();
        assert!(target.violation(h.terminal(), g.dx()) <= target.tolerance);
    }

    #[test]
    fn direct_evaluation_handles_noisy_paths() {
        // A path produced with noise still yields a finite nonnegative action
        // when sigma is bounded below (the reconstructing control just pays
        // for the noise).
        let c = Preset::LinearHeat.build().unwrap();
        let g = grid(16, 20, 0.5);
        let eta = vec![0.0; 16];
        let sheet = sample_sheet(&g, 3);
        let noisy = solve(
            &eta,
            &c,
            &g,
            &SolveConfig::with_epsilon(0.1),
            None,
            Some(&sheet),
        )
        .unwrap();
        let res = evaluate_rate_direct(&eta, &c, &noisy, &g).unwrap();
        assert!(res.value.is_finite() && res.value >= 0.0);
    }
}
