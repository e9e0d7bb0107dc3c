//! Semi-implicit time stepper for the noisy, controlled, and zero-noise
//! dynamics.
//!
//! One scheme serves all three regimes, parameterized by `(ε, v)`:
//!
//! ```text
//! (I - dt Δ_h) U^{j+1} = U^j + dt [ f(t_j, ·, U^j) + σ(t_j, ·, U^j) v(t_j, ·) ]
//!                        - dt D_h[ g(t_j, ·, U^j) ]
//!                        + √ε σ(t_j, ·, U^j) ΔW_j / dx
//! ```
//!
//! `Δ_h` is the second difference with Dirichlet rows, `D_h` the centered
//! first difference applied to the field `g(U)` (divergence form), and
//! `ΔW_j / dx` realizes space-time white noise on cell averages. The
//! diffusion is implicit (one constant tridiagonal solve per step), the
//! nonlinear terms explicit, so the scheme is linearly unconditionally
//! stable and first order in `dt`, second order in `dx`.
//!
//! With a finite truncation level `n` the drift coefficients are damped to
//! zero between `|r| = n` and `|r| = n + 1`, matching the standard
//! truncated-equation safeguard for quadratic `g`.

use crate::error::{Error, Result};
use crate::grid_noise::{Control, GridSpec, SheetIncrements};
use crate::models::Coefficients;
use crate::numeric::l2_norm;

/// Noise intensity, drift truncation, and blow-up guard for one solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    /// Noise intensity `ε ≥ 0`; zero selects the deterministic dynamics.
    pub epsilon: f64,
    /// Clipping threshold for the drift coefficients `f` and `g`;
    /// `None` leaves them untruncated.
    pub truncation_level: Option<u32>,
    /// Abort when `sup_j |U(t_j,·)|₂` exceeds this.
    pub max_sup_l2: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 0.0,
            truncation_level: None,
            max_sup_l2: 1e6,
        }
    }
}

impl SolveConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SolveConfig {
            epsilon,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::validation(format!(
                "epsilon = {} must be finite and >= 0",
                self.epsilon
            )));
        }
        if let Some(n) = self.truncation_level {
            if n < 1 {
                return Err(Error::validation("truncation_level must be >= 1"));
            }
        }
        if !(self.max_sup_l2 > 0.0) {
            return Err(Error::validation("max_sup_l2 must be positive"));
        }
        Ok(())
    }
}

/// A discretized random field `U(t_j, x_i)` with its running diagnostics.
///
/// Row 0 is the initial condition on the interior grid; boundary values are
/// identically zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    values: Vec<f64>,
    sup_l2: f64,
    blowup_step: Option<usize>,
}

impl Trajectory {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Spatial field at time level `j = 0..=nt`.
    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.values[j * nx..(j + 1) * nx]
    }

    /// Field at the final time.
    pub fn terminal(&self) -> &[f64] {
        self.row(self.grid.nt())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Max over time levels of the discrete `L²` norm, maintained during the
    /// solve (the bounded-in-probability diagnostic).
    pub fn sup_l2(&self) -> f64 {
        self.sup_l2
    }

    /// Step index at which the guard tripped; `None` for completed solves.
    pub fn blowup_step(&self) -> Option<usize> {
        self.blowup_step
    }
}

/// Constant-coefficient Thomas factorization of `(I - dt Δ_h)`.
struct HeatStepper {
    sub: f64,
    cp: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl HeatStepper {
    fn new(nx: usize, r: f64) -> Self {
        let diag = 1.0 + 2.0 * r;
        let (sub, sup) = (-r, -r);
        let mut cp = vec![0.0; nx];
        let mut inv_denom = vec![0.0; nx];
        inv_denom[0] = 1.0 / diag;
        cp[0] = sup * inv_denom[0];
        for i in 1..nx {
            inv_denom[i] = 1.0 / (diag - sub * cp[i - 1]);
            cp[i] = sup * inv_denom[i];
        }
        HeatStepper { sub, cp, inv_denom }
    }

    /// Solve `(I - dt Δ_h) out = rhs` in place.
    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.cp[i] * rhs[i + 1];
        }
    }
}

/// Clipping weight of the truncated drift: 1 for `|r| ≤ n`, 0 for
/// `|r| ≥ n+1`, linear in between.
fn truncation_weight(level: Option<u32>, r: f64) -> f64 {
    match level {
        None => 1.0,
        Some(n) => (n as f64 + 1.0 - r.abs()).clamp(0.0, 1.0),
    }
}

/// Time-step the dynamics from `eta`. `control` adds the drift `σ v`;
/// `sheet` supplies the noise increments and must be present exactly when
/// `epsilon > 0`.
pub fn solve(
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    cfg: &SolveConfig,
    control: Option<&Control>,
    sheet: Option<&SheetIncrements>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let nx = grid.nx();
    if eta.len() != nx {
        return Err(Error::validation(format!(
            "initial condition has {} entries, grid has nx = {nx}",
            eta.len()
        )));
    }
    if cfg.epsilon > 0.0 && sheet.is_none() {
        return Err(Error::validation("epsilon > 0 requires sheet increments"));
    }
    if cfg.epsilon == 0.0 && sheet.is_some() {
        return Err(Error::validation("epsilon = 0 must not receive a sheet"));
    }
    if let Some(s) = sheet {
        if s.grid() != grid {
            return Err(Error::validation("sheet grid does not match"));
        }
    }
    if let Some(v) = control {
        if v.grid() != grid {
            return Err(Error::validation("control grid does not match"));
        }
    }

    let (nt, dx, dt) = (grid.nt(), grid.dx(), grid.dt());
    let stepper = HeatStepper::new(nx, dt / (dx * dx));
    let sqrt_eps = cfg.epsilon.sqrt();
    let trunc = cfg.truncation_level;

    let mut values = Vec::with_capacity((nt + 1) * nx);
    values.extend_from_slice(eta);
    let mut sup = l2_norm(eta, dx);
    if !sup.is_finite() || sup > cfg.max_sup_l2 {
        return Err(Error::BlowUp {
            step: 0,
            sup_l2: sup,
        });
    }

    let mut g_ghost = vec![0.0; nx + 2];
    let mut rhs = vec![0.0; nx];
    for j in 0..nt {
        let t = grid.t(j);
        let u = &values[j * nx..(j + 1) * nx];

        // g(U) on the ghost-extended stencil; boundary states are zero.
        g_ghost[0] = coeffs.g(t, 0.0, 0.0);
        g_ghost[nx + 1] = coeffs.g(t, 1.0, 0.0);
        for i in 0..nx {
            let w = truncation_weight(trunc, u[i]);
            g_ghost[i + 1] = w * coeffs.g(t, grid.x(i), u[i]);
        }

        for i in 0..nx {
            let x = grid.x(i);
            let w = truncation_weight(trunc, u[i]);
            let sigma = coeffs.sigma(t, x, u[i]);
            let mut drift = w * coeffs.f(t, x, u[i]);
            if let Some(v) = control {
                drift += sigma * v.at(j, i);
            }
            let divergence = (g_ghost[i + 2] - g_ghost[i]) / (2.0 * dx);
            let mut val = u[i] + dt * (drift - divergence);
            if let Some(s) = sheet {
                val += sqrt_eps * sigma * s.at(j, i) / dx;
            }
            rhs[i] = val;
        }
        stepper.solve(&mut rhs);

        let norm = l2_norm(&rhs, dx);
        if !norm.is_finite() || norm > cfg.max_sup_l2 {
            return Err(Error::BlowUp {
                step: j + 1,
                sup_l2: norm,
            });
        }
        sup = sup.max(norm);
        values.extend_from_slice(&rhs);
    }

    Ok(Trajectory {
        grid: *grid,
        values,
        sup_l2: sup,
        blowup_step: None,
    })
}

/// The zero-noise controlled dynamics (the skeleton map behind the rate
/// functional); identical to `solve` with `ε = 0` and default safeguards.
pub fn solve_skeleton(
    eta: &[f64],
    coeffs: &Coefficients,
    grid: &GridSpec,
    control: &Control,
) -> Result<Trajectory> {
    solve(
        eta,
        coeffs,
        grid,
        &SolveConfig::default(),
        Some(control),
        None,
    )
}

/// `max_j |a(t_j,·) − b(t_j,·)|₂`, the distance in `C([0,T]; L²)`.
pub fn c0l2_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::validation("trajectories live on different grids"));
    }
    let nx = a.grid.nx();
    let dx = a.grid.dx();
    let mut worst = 0.0f64;
    let mut diff = vec![0.0; nx];
    for j in 0..=a.grid.nt() {
        let (ra, rb) = (a.row(j), b.row(j));
        for i in 0..nx {
            diff[i] = ra[i] - rb[i];
        }
        worst = worst.max(l2_norm(&diff, dx));
    }
    Ok(worst)
}

/// `max_j |a(t_j,·)|₂`, recomputed from the stored field.
pub fn sup_l2(a: &Trajectory) -> f64 {
    let dx = a.grid.dx();
    (0..=a.grid.nt())
        .map(|j| l2_norm(a.row(j), dx))
        .fold(0.0, f64::max)
}

pub mod export {
    //! Trajectory serialization: long-format CSV, flat binary, content hash.

    use super::Trajectory;
    use crate::error::{Error, Result};
    use crate::grid_noise::GridSpec;
    use crate::numeric::fmt_float;
    use sha2::{Digest, Sha256};
    use std::io::{Read, Write};

    pub const CSV_HEADER: &str = "t,x,value";
    const BIN_MAGIC: &[u8; 8] = b"SPDETRJ1";

    /// Long-format rows `(t, x, value)`, one per space-time node.
    pub fn write_csv(traj: &Trajectory, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        let grid = traj.grid();
        for j in 0..=grid.nt() {
            let t = grid.t(j);
            let row = traj.row(j);
            for (i, &v) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{}",
                    fmt_float(t),
                    fmt_float(grid.x(i)),
                    fmt_float(v)
                )?;
            }
        }
        Ok(())
    }

    pub fn write_bin(traj: &Trajectory, w: &mut impl Write) -> Result<()> {
        let grid = traj.grid();
        w.write_all(BIN_MAGIC)?;
        w.write_all(&(grid.nx() as u64).to_le_bytes())?;
        w.write_all(&(grid.nt() as u64).to_le_bytes())?;
        w.write_all(&grid.t_horizon().to_le_bytes())?;
        for v in traj.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_bin(r: &mut impl Read) -> Result<Trajectory> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BIN_MAGIC {
            return Err(Error::Format("bad trajectory magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let nx = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let nt = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let t_horizon = f64::from_le_bytes(b8);
        let grid = GridSpec::new(nx, nt, t_horizon)?;
        let mut values = Vec::with_capacity((nt + 1) * nx);
        for _ in 0..(nt + 1) * nx {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let sup = {
            let tmp = Trajectory {
                grid,
                values: values.clone(),
                sup_l2: 0.0,
                blowup_step: None,
            };
            super::sup_l2(&tmp)
        };
        Ok(Trajectory {
            grid,
            values,
            sup_l2: sup,
            blowup_step: None,
        })
    }

    /// SHA-256 over the grid header and the little-endian field bytes.
    pub fn content_hash(traj: &Trajectory) -> String {
        let mut hasher = Sha256::new();
        let grid = traj.grid();
        hasher.update((grid.nx() as u64).to_le_bytes());
        hasher.update((grid.nt() as u64).to_le_bytes());
        hasher.update(grid.t_horizon().to_le_bytes());
        for v in traj.values() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
