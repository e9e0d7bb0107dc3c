//! Dirichlet heat kernel on `[0,1]` and its empirical envelope certificates.
//!
//! `G_t(x,y)` is the fundamental solution of `∂_t - ∂²_x` with zero boundary
//! conditions. Two classical representations are used, each fast in its own
//! regime:
//!
//! * spectral sine series, `G_t(x,y) = Σ_k 2 sin(kπx) sin(kπy) e^{-k²π²t}`,
//!   which converges rapidly for `t` away from zero;
//! * method of images, `G_t(x,y) = Σ_m [φ_t(x-y-2m) - φ_t(x+y-2m)]` with
//!   `φ_t` the whole-line Gaussian kernel, rapid for small `t`.
//!
//! The crossover time `t_switch` and both truncation orders are validated at
//! construction so that every evaluation meets the configured tolerance.
//! `check_bounds` fits least-upper-bound constants for the usual Gaussian
//! envelope estimates on `G`, `∂_x G`, `∂_t G` and for the `L²` space-time
//! modulus of continuity of kernel increments.

use crate::error::{Error, Result};
use crate::grid_noise::GridSpec;
use crate::numeric::linspace;
use std::f64::consts::PI;

const PI2: f64 = PI * PI;

/// Truncation and crossover parameters for kernel evaluation.
#[derive(Debug, Clone, Copy)]
pub struct KernelConfig {
    /// Spectral truncation order used from `t_switch` upward.
    pub k_max: usize,
    /// Image charges per side used below `t_switch`.
    pub image_count: usize,
    /// Crossover from the image sum to the spectral series.
    pub t_switch: f64,
    /// Target absolute accuracy of a kernel evaluation.
    pub tol: f64,
    /// Largest time the kernel will be asked for.
    pub t_horizon: f64,
}

impl KernelConfig {
    pub fn new(
        k_max: usize,
        image_count: usize,
        t_switch: f64,
        tol: f64,
        t_horizon: f64,
    ) -> Result<Self> {
        if k_max < 1 || image_count < 1 {
            return Err(Error::validation("k_max and image_count must be >= 1"));
        }
        if !(tol > 0.0) {
            return Err(Error::validation("tol must be positive"));
        }
        if !(t_switch > 0.0 && t_switch <= t_horizon) {
            return Err(Error::validation(format!(
                "t_switch = {t_switch} must lie in (0, t_horizon = {t_horizon}]"
            )));
        }
        // Truncation guarantees, checked where each form is weakest: the
        // spectral tail at t = t_switch, the image tail just below it.
        let spectral_term = 2.0 * (-(k_max as f64).powi(2) * PI2 * t_switch).exp();
        if spectral_term >= tol {
            return Err(Error::validation(format!(
                "k_max = {k_max} leaves spectral term {spectral_term:e} >= tol at t_switch"
            )));
        }
        let z = (2 * image_count) as f64 - 2.0;
        let image_term = (-z * z / (4.0 * t_switch)).exp() / (4.0 * PI * t_switch).sqrt();
        if image_term >= tol {
            return Err(Error::validation(format!(
                "image_count = {image_count} leaves image term {image_term:e} >= tol below t_switch"
            )));
        }
        Ok(KernelConfig {
            k_max,
            image_count,
            t_switch,
            tol,
            t_horizon,
        })
    }

    /// Size `k_max` and `image_count` from the tolerance, with enough margin
    /// to cover the derivative series as well.
    pub fn auto(tol: f64, t_switch: f64, t_horizon: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::validation("tol must be positive"));
        }
        if !(t_switch > 0.0 && t_switch <= t_horizon) {
            return Err(Error::validation("need 0 < t_switch <= t_horizon"));
        }
        let mut k_max = 1usize;
        while 2.0
            * (1.0 + (k_max as f64 * PI).powi(2))
            * (-(k_max as f64).powi(2) * PI2 * t_switch).exp()
            >= 0.01 * tol
        {
            k_max += 1;
            if k_max > 100_000 {
                return Err(Error::validation("tol unreachable for this t_switch"));
            }
        }
        let mut image_count = 2usize;
        loop {
            let z = (2 * image_count) as f64 - 2.0;
            let deriv_margin =
                1.0 + (z + 4.0) / t_switch + (z + 4.0) * (z + 4.0) / (4.0 * t_switch * t_switch);
            let term =
                deriv_margin * (-z * z / (4.0 * t_switch)).exp() / (4.0 * PI * t_switch).sqrt();
            if term < 0.01 * tol {
                break;
            }
            image_count += 1;
            if image_count > 10_000 {
                return Err(Error::validation("tol unreachable for image sums"));
            }
        }
        KernelConfig::new(k_max, image_count, t_switch, tol, t_horizon)
    }

    pub fn default_for(t_horizon: f64) -> Result<Self> {
        KernelConfig::auto(1e-12, 0.05_f64.min(t_horizon), t_horizon)
    }
}

/// Whole-line Gaussian kernel `φ_t(z)`.
fn gauss(t: f64, z: f64) -> f64 {
    (-z * z / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// Evaluator for `G_t(x,y)` and its derivatives.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    cfg: KernelConfig,
}

impl HeatKernel {
    pub fn new(cfg: KernelConfig) -> Self {
        HeatKernel { cfg }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    fn check_domain(&self, t: f64, x: f64, y: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("t = {t} must be positive")));
        }
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!(
                "(x, y) = ({x}, {y}) outside [0,1]^2"
            )));
        }
        Ok(())
    }

    /// `G_t(x,y)`.
    pub fn eval_g(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check_domain(t, x, y)?;
        if t < self.cfg.t_switch {
            Ok(self.g_images(t, x, y))
        } else {
            Ok(self.g_spectral(t, x, y))
        }
    }

    /// `∂_y G_t(x,y)`.
    pub fn eval_dg_dy(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check_domain(t, x, y)?;
        if t < self.cfg.t_switch {
            Ok(self.dg_dy_images(t, x, y))
        } else {
            Ok(self.dg_dy_spectral(t, x, y))
        }
    }

    /// `∂_t G_t(x,y)`.
    pub fn eval_dg_dt(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check_domain(t, x, y)?;
        if t < self.cfg.t_switch {
            Ok(self.dg_dt_images(t, x, y))
        } else {
            Ok(self.dg_dt_spectral(t, x, y))
        }
    }

    fn sum_spectral(
        &self,
        t: f64,
        term: impl Fn(f64) -> f64,
        envelope: impl Fn(f64) -> f64,
    ) -> f64 {
        let cutoff = 0.01 * self.cfg.tol;
        let mut acc = 0.0;
        let mut k = 1usize;
        loop {
            let kf = k as f64;
            acc += term(kf) * (-kf * kf * PI2 * t).exp();
            let next = kf + 1.0;
            if (k >= self.cfg.k_max && envelope(next) * (-next * next * PI2 * t).exp() < cutoff)
                || k > 1_000_000
            {
                break;
            }
            k += 1;
        }
        acc
    }

    fn sum_images(&self, term: impl Fn(f64) -> f64, envelope: impl Fn(f64) -> f64) -> f64 {
        // Term m covers the charges x-y-2m and x+y-2m; the first omitted
        // images after |m| = M sit at distance at least 2M from the strip.
        let cutoff = 0.01 * self.cfg.tol;
        let mut acc = term(0.0);
        let mut m = 1i64;
        loop {
            let zmin = (2 * (m - 1)) as f64;
            if (m as usize > self.cfg.image_count && envelope(zmin) < cutoff) || m > 100_000 {
                break;
            }
            acc += term(m as f64) + term(-(m as f64));
            m += 1;
        }
        acc
    }

    /// Spectral sine series; adaptively extended so it can be evaluated at
    /// any `t > 0` for cross-form checks.
    pub fn g_spectral(&self, t: f64, x: f64, y: f64) -> f64 {
        self.sum_spectral(
            t,
            |k| 2.0 * (k * PI * x).sin() * (k * PI * y).sin(),
            |_| 2.0,
        )
    }

    pub fn dg_dy_spectral(&self, t: f64, x: f64, y: f64) -> f64 {
        self.sum_spectral(
            t,
            |k| 2.0 * PI * k * (k * PI * x).sin() * (k * PI * y).cos(),
            |k| 2.0 * PI * k,
        )
    }

    pub fn dg_dt_spectral(&self, t: f64, x: f64, y: f64) -> f64 {
        self.sum_spectral(
            t,
            |k| -2.0 * k * k * PI2 * (k * PI * x).sin() * (k * PI * y).sin(),
            |k| 2.0 * k * k * PI2,
        )
    }

    /// Image-charge sum; adaptively extended so it stays below `tol` at any
    /// `t` up to the horizon.
    pub fn g_images(&self, t: f64, x: f64, y: f64) -> f64 {
        self.sum_images(
            |m| gauss(t, x - y - 2.0 * m) - gauss(t, x + y - 2.0 * m),
            |z| 2.0 * gauss(t, z),
        )
    }

    pub fn dg_dy_images(&self, t: f64, x: f64, y: f64) -> f64 {
        self.sum_images(
            |m| {
                let zm = x - y - 2.0 * m;
                let zp = x + y - 2.0 * m;
                zm / (2.0 * t) * gauss(t, zm) + zp / (2.0 * t) * gauss(t, zp)
            },
            |z| (z + 4.0) / t * gauss(t, z),
        )
    }

    pub fn dg_dt_images(&self, t: f64, x: f64, y: f64) -> f64 {
        let dphi = |z: f64| (z * z / (4.0 * t * t) - 1.0 / (2.0 * t)) * gauss(t, z);
        self.sum_images(
            |m| dphi(x - y - 2.0 * m) - dphi(x + y - 2.0 * m),
            |z| ((z + 4.0) * (z + 4.0) / (2.0 * t * t) + 1.0 / t) * gauss(t, z),
        )
    }

    /// Semigroup action `u ↦ ∫₀¹ G_t(·,y) u(y) dy`, realized with the
    /// discrete sine transform on the interior grid: project on the `nx`
    /// sine modes, damp each by `e^{-k²π²t}`, reconstruct. `t = 0` is the
    /// identity.
    pub fn apply_semigroup(&self, u: &[f64], t: f64, grid: &GridSpec) -> Result<Vec<f64>> {
        if u.len() != grid.nx() {
            return Err(Error::validation(format!(
                "field has {} entries, grid has nx = {}",
                u.len(),
                grid.nx()
            )));
        }
        if t < 0.0 || !t.is_finite() {
            return Err(Error::domain(format!("t = {t} must be >= 0")));
        }
        if t == 0.0 {
            return Ok(u.to_vec());
        }
        let n = grid.nx();
        let coeffs = dst_coefficients(u, grid)?;
        let mut out = vec![0.0; n];
        for (k0, c) in coeffs.iter().enumerate() {
            let k = (k0 + 1) as f64;
            let damped = c * (-k * k * PI2 * t).exp();
            if damped == 0.0 {
                continue;
            }
            for (i, slot) in out.iter_mut().enumerate() {
                *slot += damped * (k * PI * grid.x(i)).sin();
            }
        }
        Ok(out)
    }

    /// Max over grid nodes of the Chapman-Kolmogorov defect
    /// `|∫ G_s(x,z) G_t(z,y) dz − G_{s+t}(x,y)|`, inner integral by the
    /// trapezoid rule on the grid (boundary nodes contribute zero).
    pub fn semigroup_identity_error(&self, s: f64, t: f64, grid: &GridSpec) -> Result<f64> {
        if !(s > 0.0 && t > 0.0) {
            return Err(Error::domain("s and t must be positive"));
        }
        let n = grid.nx();
        let dx = grid.dx();
        let xs = grid.xs();
        let mut gs = vec![0.0; n * n];
        let mut gt = vec![0.0; n * n];
        let mut gst = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gs[i * n + j] = self.eval_g(s, xs[i], xs[j])?;
                gt[i * n + j] = self.eval_g(t, xs[i], xs[j])?;
                gst[i * n + j] = self.eval_g(s + t, xs[i], xs[j])?;
            }
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += gs[i * n + k] * gt[k * n + j];
                }
                let defect = (acc * dx - gst[i * n + j]).abs();
                worst = worst.max(defect);
            }
        }
        Ok(worst)
    }

    /// `∫₀ᶜ G_u(x,y) du`, via the closed-form tail
    /// `Σ 2 sin sin / (k²π²) = min(x,y)(1 − max(x,y))` minus the damped series.
    fn time_integral(&self, c: f64, x: f64, y: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        let g0 = x.min(y) * (1.0 - x.max(y));
        let mut series = 0.0;
        let mut k = 1usize;
        loop {
            let kf = k as f64;
            let w = (-kf * kf * PI2 * c).exp() / (kf * kf * PI2);
            series += 2.0 * (kf * PI * x).sin() * (kf * PI * y).sin() * w;
            let next = kf + 1.0;
            if 2.0 * (-next * next * PI2 * c).exp() / (next * next * PI2) < 1e-17 || k > 1_000_000 {
                break;
            }
            k += 1;
        }
        g0 - series
    }

    /// `∫₀ᵀ ∫₀¹ |G_{t−τ}(x,η) − G_{s−τ}(y,η)|² dη dτ` for `s < t`, reduced to
    /// four time integrals through the semigroup identity.
    pub fn l2_increment(&self, s: f64, t: f64, x: f64, y: f64) -> f64 {
        0.5 * self.time_integral(2.0 * t, x, x) + 0.5 * self.time_integral(2.0 * s, y, y)
            - self.time_integral(t + s, x, y)
            + self.time_integral(t - s, x, y)
    }

    /// Fit least-upper-bound constants for the four kernel estimates over a
    /// deterministic sample of `(s, t, x, y)` with `0 ≤ s < t ≤ T`.
    pub fn check_bounds(&self, params: &BoundCheckParams) -> Result<KernelBoundReport> {
        params.validate()?;
        let t_axis = linspace(0.0, self.cfg.t_horizon, params.n_time);
        let x_axis = linspace(0.0, 1.0, params.n_space);

        let mut max1 = 0.0f64;
        let mut max2 = 0.0f64;
        let mut max3 = 0.0f64;
        let mut max4 = 0.0f64;
        for (si, &s) in t_axis.iter().enumerate() {
            for &t in &t_axis[si + 1..] {
                let tau = t - s;
                for &x in &x_axis {
                    for &y in &x_axis {
                        let r2 = (x - y) * (x - y);
                        let g = self.eval_g(tau, x, y)?;
                        if g != 0.0 {
                            max1 = max1.max(g.abs() * tau * (params.decay_a * r2 / tau).exp());
                        }
                        // ∂_x G_t(x,y) = ∂_y G_t(y,x) by symmetry of G.
                        let dgx = self.eval_dg_dy(tau, y, x)?;
                        if dgx != 0.0 {
                            max2 = max2
                                .max(dgx.abs() * tau.powf(1.5) * (params.decay_b * r2 / tau).exp());
                        }
                        let dgt = self.eval_dg_dt(tau, x, y)?;
                        if dgt != 0.0 {
                            max3 =
                                max3.max(dgt.abs() * tau * tau * (params.decay_d * r2 / tau).exp());
                        }
                        let q = self.l2_increment(s, t, x, y);
                        let rho2 = tau * tau + r2;
                        max4 = max4.max(q / rho2.powf(params.alpha));
                    }
                }
            }
        }

        let fits = [
            EstimateFit::new("g_gauss_envelope", max1, params.decay_a),
            EstimateFit::new("dgdx_gauss_envelope", max2, params.decay_b),
            EstimateFit::new("dgdt_gauss_envelope", max3, params.decay_d),
            EstimateFit::new("l2_increment_holder", max4, params.alpha),
        ];
        let pass = fits.iter().all(|f| f.pass);
        Ok(KernelBoundReport { fits, pass })
    }
}

/// Sine-mode coefficients of a grid field: `u_i = Σ_k c_k sin(kπ x_i)`.
pub fn dst_coefficients(u: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
    let n = grid.nx();
    if u.len() != n {
        return Err(Error::validation("field length does not match grid"));
    }
    let scale = 2.0 / (n + 1) as f64;
    let mut coeffs = vec![0.0; n];
    for (k0, slot) in coeffs.iter_mut().enumerate() {
        let k = (k0 + 1) as f64;
        let mut acc = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            acc += ui * (k * PI * grid.x(i)).sin();
        }
        *slot = scale * acc;
    }
    Ok(coeffs)
}

/// Sampling plan and exponents for `check_bounds`.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheckParams {
    /// Samples per time axis (s and t), at least 16.
    pub n_time: usize,
    /// Samples per space axis (x and y), at least 16.
    pub n_space: usize,
    /// Gaussian decay rates tried for estimates (1)-(3); the sharp rate for
    /// the whole-line kernel is 1/4, anything strictly below works.
    pub decay_a: f64,
    pub decay_b: f64,
    pub decay_d: f64,
    /// Dimension parameter of the Hölder estimate; 1 on the interval.
    pub dim_d: f64,
    /// Integrability exponent, `gamma > dim_d`.
    pub gamma: f64,
    /// Hölder order, must satisfy `alpha < (gamma - dim_d) / (2 gamma)`.
    pub alpha: f64,
}

impl Default for BoundCheckParams {
    fn default() -> Self {
        BoundCheckParams {
            n_time: 32,
            n_space: 32,
            decay_a: 0.125,
            decay_b: 0.125,
            decay_d: 0.125,
            dim_d: 1.0,
            gamma: 2.0,
            alpha: 0.2,
        }
    }
}

impl BoundCheckParams {
    fn validate(&self) -> Result<()> {
        if self.n_time < 16 || self.n_space < 16 {
            return Err(Error::validation("need at least 16 samples per axis"));
        }
        for d in [self.decay_a, self.decay_b, self.decay_d] {
            if !(d > 0.0 && d < 0.25) {
                return Err(Error::validation("decay rates must lie in (0, 1/4)"));
            }
        }
        if !(self.gamma > self.dim_d) {
            return Err(Error::validation("need gamma > dim_d"));
        }
        let alpha_bar = (self.gamma - self.dim_d) / (2.0 * self.gamma);
        if !(self.alpha > 0.0 && self.alpha < alpha_bar) {
            return Err(Error::validation(format!(
                "alpha = {} must lie in (0, {alpha_bar})",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// One fitted envelope constant.
#[derive(Debug, Clone, Copy)]
pub struct EstimateFit {
    pub id: &'static str,
    /// Least upper bound of the sampled ratios.
    pub constant: f64,
    /// Exponent the fit was made at (decay rate, or alpha for the modulus).
    pub exponent: f64,
    pub max_ratio: f64,
    pub pass: bool,
}

impl EstimateFit {
    fn new(id: &'static str, max_ratio: f64, exponent: f64) -> Self {
        EstimateFit {
            id,
            constant: max_ratio,
            exponent,
            max_ratio,
            pass: max_ratio.is_finite(),
        }
    }
}

/// Fitted constants for the four kernel estimates.
#[derive(Debug, Clone)]
pub struct KernelBoundReport {
    pub fits: [EstimateFit; 4],
    pub pass: bool,
}

impl KernelBoundReport {
    pub fn csv_header() -> &'static str {
        "estimate_id,fitted_K,fitted_exponent,max_ratio,pass"
    }

    /// One CSV row per estimate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for f in &self.fits {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                f.id, f.constant, f.exponent, f.max_ratio, f.pass
            ));
        }
        out
    }
}
