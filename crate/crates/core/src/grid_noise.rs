//! Space-time grid, Brownian-sheet increments, and discretized controls.
//!
//! Everything downstream shares one uniform discretization of
//! `[0,T] × [0,1]`: `nx` interior spatial points `x_i = i·dx` with
//! `dx = 1/(nx+1)`, and `nt` time steps of size `dt = T/nt`. Noise and
//! controls are cell-constant fields indexed by `(j, i)` with `j` the time
//! cell `[t_j, t_{j+1})` and `i` the spatial cell centered at `x_{i+1}`.

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, splitmix64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, BufReader, Read, Write};

/// Uniform space-time discretization shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    nx: usize,
    nt: usize,
    t_horizon: f64,
}

impl GridSpec {
    pub fn new(nx: usize, nt: usize, t_horizon: f64) -> Result<Self> {
        if nx < 2 {
            return Err(Error::validation(format!("nx = {nx} must be >= 2")));
        }
        if nt < 1 {
            return Err(Error::validation(format!("nt = {nt} must be >= 1")));
        }
        if !(t_horizon > 0.0) || !t_horizon.is_finite() {
            return Err(Error::validation(format!(
                "t_horizon = {t_horizon} must be positive and finite"
            )));
        }
        Ok(GridSpec { nx, nt, t_horizon })
    }

    /// Interior spatial points.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Time steps.
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.nx + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.nt as f64
    }

    /// Interior point `x_i`, `i = 0..nx`.
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx()
    }

    /// Time level `t_j`, `j = 0..=nt`.
    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    /// Midpoint of the time cell `[t_j, t_{j+1}]`, `j = 0..nt`.
    pub fn t_mid(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dt()
    }

    /// All interior points.
    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Number of cells in a space-time field.
    pub fn cells(&self) -> usize {
        self.nx * self.nt
    }

    /// Evaluate a scalar function on the interior points.
    pub fn spatial_field(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.nx).map(|i| f(self.x(i))).collect()
    }
}

/// Derive the seed for one Monte Carlo sample from a master seed.
pub fn derive_sample_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed ^ 0x5EED_CA11_ED01_u64).wrapping_add(index))
}

const ROW_SALT: u64 = 0xA24B_AED4_963E_E407;

fn row_key(seed: u64, j: usize) -> u64 {
    let h = splitmix64(seed);
    splitmix64(h ^ (j as u64 + 1).wrapping_mul(ROW_SALT))
}

/// Brownian-sheet rectangle increments on the grid cells.
///
/// Entry `(j, i)` is the sheet increment over `[t_j, t_{j+1}] × cell_i`,
/// distributed `N(0, dt·dx)`, all entries independent. Each time row draws
/// from its own counter-derived stream keyed on `(seed, j)`, so the array is
/// reproducible bit-for-bit from `(grid, seed)` and independent of row
/// evaluation order.
#[derive(Debug, Clone)]
pub struct SheetIncrements {
    grid: GridSpec,
    seed: u64,
    values: Vec<f64>,
}

impl SheetIncrements {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment at time cell `j`, space cell `i`.
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    /// Row of increments for time cell `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Sample independent `N(0, dt·dx)` rectangle increments, deterministic in
/// `(grid, seed)`.
pub fn sample_sheet(grid: &GridSpec, seed: u64) -> SheetIncrements {
    let std = (grid.dt() * grid.dx()).sqrt();
    let mut values = Vec::with_capacity(grid.cells());
    for j in 0..grid.nt {
        let mut rng = ChaCha8Rng::seed_from_u64(row_key(seed, j));
        for _ in 0..grid.nx {
            let z: f64 = rng.sample(StandardNormal);
            values.push(std * z);
        }
    }
    SheetIncrements {
        grid: *grid,
        seed,
        values,
    }
}

/// A discretized control `v ∈ L²([0,T] × [0,1])`, cell-constant on the grid.
///
/// The squared norm `‖v‖² = Σ v² dx dt` is cached at construction; membership
/// in the ball `S^N` is the test `‖v‖² ≤ N`.
#[derive(Debug, Clone)]
pub struct Control {
    grid: GridSpec,
    values: Vec<f64>,
    norm_sq: f64,
}

impl Control {
    pub fn zero(grid: &GridSpec) -> Self {
        Control {
            grid: *grid,
            values: vec![0.0; grid.cells()],
            norm_sq: 0.0,
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::validation(format!(
                "control has {} values, grid wants {} = nt {} x nx {}",
                values.len(),
                grid.cells(),
                grid.nt,
                grid.nx
            )));
        }
        let norm_sq = quadrature_norm_sq(&values, grid);
        Ok(Control {
            grid: *grid,
            values,
            norm_sq,
        })
    }

    /// Sample `v(t, x)` at the cell midpoints `((j+1/2) dt, x_i)`, so that the
    /// cached norm is the midpoint rule in both variables.
    pub fn from_fn(grid: &GridSpec, v: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.nt {
            let t = grid.t_mid(j);
            for i in 0..grid.nx {
                values.push(v(t, grid.x(i)));
            }
        }
        Control::from_values(grid, values).expect("sizes match by construction")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cached `‖v‖² = ∫∫ v²`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Membership in the radius-`N` ball of `L²([0,T]×[0,1])`.
    pub fn in_ball(&self, n: f64) -> bool {
        self.norm_sq <= n
    }

    /// Pointwise linear combination `self + scale · other`.
    pub fn add_scaled(&self, other: &Control, scale: f64) -> Result<Control> {
        if self.grid != other.grid {
            return Err(Error::validation("controls live on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Control::from_values(&self.grid, values)
    }
}

fn quadrature_norm_sq(values: &[f64], grid: &GridSpec) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    pairwise_sum(&sq) * grid.dx() * grid.dt()
}

/// Midpoint-rule value of `∫₀ᵀ∫₀¹ v² dy ds`.
pub fn control_norm_sq(v: &Control, grid: &GridSpec) -> Result<f64> {
    if v.grid != *grid {
        return Err(Error::validation("control grid does not match"));
    }
    Ok(quadrature_norm_sq(&v.values, grid))
}

/// Cumulative integral `Int(v)(t,x) = ∫₀ᵗ∫₀ˣ v(s,y) dy ds` as a running
/// double sum: entry `(j, i)` covers the cells with indices `≤ (j, i)`.
pub fn int_v(v: &Control, grid: &GridSpec) -> Result<Vec<f64>> {
    if v.grid != *grid {
        return Err(Error::validation("control grid does not match"));
    }
    let (nx, nt) = (grid.nx, grid.nt);
    let scale = grid.dx() * grid.dt();
    let mut out = vec![0.0; nx * nt];
    for j in 0..nt {
        let mut row_acc = 0.0;
        for i in 0..nx {
            row_acc += v.values[j * nx + i];
            let above = if j > 0 { out[(j - 1) * nx + i] } else { 0.0 };
            out[j * nx + i] = above + row_acc * scale;
        }
    }
    Ok(out)
}

/// The oscillating family `v_n = v + amplitude · sin(nπt/T)`, which converges
/// to `v` weakly (but not strongly) in `L²` as `n → ∞` while staying inside a
/// fixed ball `S^M`.
pub fn oscillatory_family(v: &Control, n: usize, amplitude: f64) -> Control {
    let grid = v.grid;
    let t_horizon = grid.t_horizon();
    let mut values = Vec::with_capacity(grid.cells());
    for j in 0..grid.nt {
        let bump = amplitude * (n as f64 * std::f64::consts::PI * grid.t_mid(j) / t_horizon).sin();
        for i in 0..grid.nx {
            values.push(v.at(j, i) + bump);
        }
    }
    Control::from_values(&grid, values).expect("same grid")
}

// --- flat file formats -----------------------------------------------------
//
// Controls and sheets share one layout: a header carrying (nx, nt, t_horizon,
// seed) followed by the nt x nx values in row-major order. Two encodings are
// provided, a readable CSV and a flat little-endian binary. Controls carry
// seed = 0.

const BIN_MAGIC: &[u8; 8] = b"SPDEFLD1";

#[derive(Debug, Clone, Copy)]
pub struct FieldHeader {
    pub nx: usize,
    pub nt: usize,
    pub t_horizon: f64,
    pub seed: u64,
}

pub fn write_field_csv(w: &mut impl Write, header: &FieldHeader, values: &[f64]) -> Result<()> {
    writeln!(w, "nx,nt,t_horizon,seed")?;
    writeln!(
        w,
        "{},{},{},{}",
        header.nx, header.nt, header.t_horizon, header.seed
    )?;
    for row in values.chunks(header.nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_field_csv(r: &mut impl Read) -> Result<(FieldHeader, Vec<f64>)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty field file".into()))??;
    if head.trim() != "nx,nt,t_horizon,seed" {
        return Err(Error::Format(format!("unexpected header line: {head}")));
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::Format("missing header values".into()))??;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Format(format!("bad header values: {meta}")));
    }
    let nx: usize = parse(parts[0])?;
    let nt: usize = parse(parts[1])?;
    let t_horizon: f64 = parse(parts[2])?;
    let seed: u64 = parse(parts[3])?;
    let mut values = Vec::with_capacity(nx * nt);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.trim().split(',') {
            values.push(parse::<f64>(tok)?);
        }
    }
    if values.len() != nx * nt {
        return Err(Error::Format(format!(
            "expected {} values, found {}",
            nx * nt,
            values.len()
        )));
    }
    Ok((
        FieldHeader {
            nx,
            nt,
            t_horizon,
            seed,
        },
        values,
    ))
}

fn parse<T: std::str::FromStr>(tok: &str) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {tok:?}")))
}

pub fn write_field_bin(w: &mut impl Write, header: &FieldHeader, values: &[f64]) -> Result<()> {
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(header.nx as u64).to_le_bytes())?;
    w.write_all(&(header.nt as u64).to_le_bytes())?;
    w.write_all(&header.t_horizon.to_le_bytes())?;
    w.write_all(&header.seed.to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_bin(r: &mut impl Read) -> Result<(FieldHeader, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BIN_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let nx = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let nt = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let t_horizon = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut values = Vec::with_capacity(nx * nt);
    for _ in 0..nx * nt {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok((
        FieldHeader {
            nx,
            nt,
            t_horizon,
            seed,
        },
        values,
    ))
}

impl Control {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let h = FieldHeader {
            nx: self.grid.nx,
            nt: self.grid.nt,
            t_horizon: self.grid.t_horizon,
            seed: 0,
        };
        write_field_csv(w, &h, &self.values)
    }

    pub fn write_bin(&self, w: &mut impl Write) -> Result<()> {
        let h = FieldHeader {
            nx: self.grid.nx,
            nt: self.grid.nt,
            t_horizon: self.grid.t_horizon,
            seed: 0,
        };
        write_field_bin(w, &h, &self.values)
    }

    pub fn read_csv(r: &mut impl Read) -> Result<Control> {
        let (h, values) = read_field_csv(r)?;
        let grid = GridSpec::new(h.nx, h.nt, h.t_horizon)?;
        Control::from_values(&grid, values)
    }

    pub fn read_bin(r: &mut impl Read) -> Result<Control> {
        let (h, values) = read_field_bin(r)?;
        let grid = GridSpec::new(h.nx, h.nt, h.t_horizon)?;
        Control::from_values(&grid, values)
    }
}

impl SheetIncrements {
    fn header(&self) -> FieldHeader {
        FieldHeader {
            nx: self.grid.nx,
            nt: self.grid.nt,
            t_horizon: self.grid.t_horizon,
            seed: self.seed,
        }
    }

    pub fn write_bin(&self, w: &mut impl Write) -> Result<()> {
        write_field_bin(w, &self.header(), &self.values)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write_field_csv(w, &self.header(), &self.values)
    }

    pub fn read_bin(r: &mut impl Read) -> Result<SheetIncrements> {
        Self::from_parts(read_field_bin(r)?)
    }

    pub fn read_csv(r: &mut impl Read) -> Result<SheetIncrements> {
        Self::from_parts(read_field_csv(r)?)
    }

    fn from_parts((h, values): (FieldHeader, Vec<f64>)) -> Result<SheetIncrements> {
        let grid = GridSpec::new(h.nx, h.nt, h.t_horizon)?;
        if values.len() != grid.cells() {
            return Err(Error::Format("value count does not match grid".into()));
        }
        Ok(SheetIncrements {
            grid,
            seed: h.seed,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(nx: usize, nt: usize, t: f64) -> GridSpec {
        GridSpec::new(nx, nt, t).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = grid(63, 200, 1.0);
        assert_relative_eq!(g.dx() * (g.nx() + 1) as f64, 1.0, max_relative = 1e-15);
        assert_relative_eq!(g.dt() * g.nt() as f64, g.t_horizon(), max_relative = 1e-15);
        assert!(GridSpec::new(1, 10, 1.0).is_err());
        assert!(GridSpec::new(4, 0, 1.0).is_err());
        assert!(GridSpec::new(4, 10, 0.0).is_err());
    }

    #[test]
    fn sheet_is_deterministic_in_seed() {
        let g = grid(16, 32, 0.5);
        let a = sample_sheet(&g, 42);
        let b = sample_sheet(&g, 42);
        assert_eq!(a.values(), b.values());
        let c = sample_sheet(&g, 43);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn sheet_moments_match_cell_variance() {
        // CLT oracle: with m = nt*nx >= 1e6 cells the sample mean is within
        // 4 sqrt(dt dx / m) of zero and the sample variance within 1% of dt dx.
        let g = grid(1000, 1000, 1.0);
        let sheet = sample_sheet(&g, 7);
        let m = sheet.values().len() as f64;
        let mean: f64 = sheet.values().iter().sum::<f64>() / m;
        let var: f64 = sheet.values().iter().map(|v| v * v).sum::<f64>() / m;
        let cell_var = g.dt() * g.dx();
        assert!(mean.abs() < 4.0 * (cell_var / m).sqrt(), "mean = {mean}");
        assert!((var - cell_var).abs() < 0.01 * cell_var, "var = {var}");
    }

    #[test]
    fn zero_and_unit_controls() {
        let g = grid(31, 50, 1.0);
        assert_eq!(control_norm_sq(&Control::zero(&g), &g).unwrap(), 0.0);
        // v = 1 on the unit box integrates to 1; the cell quadrature misses
        // only the two boundary strips, an O(dx) defect.
        let ones = Control::from_fn(&g, |_, _| 1.0);
        let covered = g.nx() as f64 * g.dx();
        assert_relative_eq!(ones.norm_sq(), covered, max_relative = 1e-12);
        assert!((ones.norm_sq() - 1.0).abs() <= g.dx());
    }

    #[test]
    fn sine_profile_norm_is_half() {
        // Discrete sine orthogonality makes sum sin^2(pi x_i) dx exactly 1/2.
        let g = grid(63, 40, 1.0);
        let v = Control::from_fn(&g, |_, y| (std::f64::consts::PI * y).sin());
        assert_relative_eq!(v.norm_sq(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn cached_norm_matches_recomputation() {
        let g = grid(17, 23, 2.0);
        let v = Control::from_fn(&g, |t, y| (t - 0.3) * (y * 7.0).cos());
        assert_relative_eq!(
            v.norm_sq(),
            control_norm_sq(&v, &g).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn norm_refinement_converges_quadratically() {
        // Midpoint quadrature in both variables: error O(dx^2 + dt^2) for a
        // smooth profile vanishing at the spatial boundary.
        // Oracle: int y^2(1-y)^2 dy * int_0^1 cos^2 t dt = (1/30)(1/2 + sin 2 / 4).
        let exact = (1.0 / 30.0) * (0.5 + (2.0f64).sin() / 4.0);
        let errs: Vec<f64> = [(15usize, 10usize), (31, 20), (63, 40)]
            .iter()
            .map(|&(nx, nt)| {
                let g = grid(nx, nt, 1.0);
                let v = Control::from_fn(&g, |t, y| y * (1.0 - y) * t.cos());
                (control_norm_sq(&v, &g).unwrap() - exact).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0, "errs = {errs:?}");
        assert!(errs[2] < errs[1] / 3.0, "errs = {errs:?}");
    }

    #[test]
    fn int_v_constant_control_is_txy() {
        let g = grid(40, 50, 1.0);
        let v = Control::from_fn(&g, |_, _| 1.0);
        let cum = int_v(&v, &g).unwrap();
        // Entry (j,i) integrates over cells <= (j,i): value (j+1) dt (i+1) dx.
        let tol = g.dt() + g.dx();
        for j in [0, 24, 49] {
            for i in [0, 19, 39] {
                let expect = (j + 1) as f64 * g.dt() * (i + 1) as f64 * g.dx();
                let got = cum[j * g.nx() + i];
                assert!((got - expect).abs() < tol, "got {got}, expect {expect}");
            }
        }
    }

    #[test]
    fn int_v_is_linear() {
        let g = grid(9, 11, 1.0);
        let a = Control::from_fn(&g, |t, y| t + y);
        let b = Control::from_fn(&g, |t, y| (t * y).cos());
        let sum = a.add_scaled(&b, 1.0).unwrap();
        let ia = int_v(&a, &g).unwrap();
        let ib = int_v(&b, &g).unwrap();
        let isum = int_v(&sum, &g).unwrap();
        for k in 0..ia.len() {
            assert_relative_eq!(isum[k], ia[k] + ib[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn oscillatory_family_identity_at_zero_amplitude() {
        let g = grid(10, 20, 1.0);
        let v = Control::from_fn(&g, |t, y| t * y);
        let vn = oscillatory_family(&v, 5, 0.0);
        assert_eq!(v.values(), vn.values());
    }

    #[test]
    fn oscillatory_family_weak_convergence_decay() {
        // Pairing against the constant test field phi = 1 decays like C/n.
        let g = grid(16, 1024, 1.0);
        let v = Control::zero(&g);
        let scale = g.dx() * g.dt();
        let pair = |n: usize| -> f64 {
            let vn = oscillatory_family(&v, n, 1.0);
            vn.values().iter().sum::<f64>() * scale
        };
        let covered = g.nx() as f64 * g.dx();
        for n in [1usize, 3, 5, 9, 17, 33] {
            let c_over_n = 2.0 * g.t_horizon() * covered / (std::f64::consts::PI * n as f64);
            let got = pair(n).abs();
            assert!(got <= c_over_n * 1.05, "n = {n}: {got} vs C/n = {c_over_n}");
        }
        assert!(pair(33).abs() < pair(1).abs() / 20.0);
    }

    #[test]
    fn oscillatory_family_norm_bound() {
        // Cauchy-Schwarz: ||v_n||^2 <= ||v||^2 + amp^2 T/2 + 2 amp ||v|| sqrt(T/2).
        let g = grid(21, 200, 1.0);
        let v = Control::from_fn(&g, |t, y| (t + y).sin());
        let amp = 0.7;
        for n in [2usize, 8, 64] {
            let vn = oscillatory_family(&v, n, amp);
            let bound = v.norm_sq()
                + amp * amp * g.t_horizon() / 2.0
                + 2.0 * amp * v.norm_sq().sqrt() * (g.t_horizon() / 2.0).sqrt();
            assert!(vn.norm_sq() <= bound * (1.0 + 1e-12), "n = {n}");
        }
    }

    proptest! {
        #[test]
        fn control_norm_scales_quadratically(c in -3.0f64..3.0, seed in 0u64..1000) {
            let g = grid(8, 12, 1.0);
            let base = sample_sheet(&g, seed);
            let v = Control::from_values(&g, base.values().to_vec()).unwrap();
            let scaled_vals: Vec<f64> = v.values().iter().map(|x| c * x).collect();
            let scaled = Control::from_values(&g, scaled_vals).unwrap();
            let lhs = scaled.norm_sq();
            let rhs = c * c * v.norm_sq();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-30));
        }

        #[test]
        fn control_roundtrip_bin_and_csv(seed in 0u64..500) {
            let g = grid(5, 7, 0.75);
            let sheet = sample_sheet(&g, seed);
            let v = Control::from_values(&g, sheet.values().to_vec()).unwrap();
            let mut bin = Vec::new();
            v.write_bin(&mut bin).unwrap();
            let v2 = Control::read_bin(&mut bin.as_slice()).unwrap();
            prop_assert_eq!(v.values(), v2.values());
            let mut csv = Vec::new();
            v.write_csv(&mut csv).unwrap();
            let v3 = Control::read_csv(&mut csv.as_slice()).unwrap();
            prop_assert_eq!(v.values(), v3.values());
        }
    }

    #[test]
    fn sheet_roundtrip_bin_and_csv() {
        let g = grid(6, 9, 1.5);
        let s = sample_sheet(&g, 11);
        let mut buf = Vec::new();
        s.write_bin(&mut buf).unwrap();
        let s2 = SheetIncrements::read_bin(&mut buf.as_slice()).unwrap();
        assert_eq!(s.values(), s2.values());
        assert_eq!(s.seed(), s2.seed());
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let s3 = SheetIncrements::read_csv(&mut csv.as_slice()).unwrap();
        assert_eq!(s.values(), s3.values());
    }

    #[test]
    fn sample_seed_derivation_spreads() {
        let a = derive_sample_seed(1, 0);
        let b = derive_sample_seed(1, 1);
        let c = derive_sample_seed(2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
