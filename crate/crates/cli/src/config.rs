//! Run configuration: flat TOML with dotted sections, unknown keys rejected.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use spde_ldp::grid_noise::{Control, GridSpec};
use spde_ldp::models::{Coefficients, Preset};
use spde_ldp::rare_event::{EventSpec, TiltPolicy};
use spde_ldp::rate::{TargetKind, TargetSpec};
use spde_ldp::solver::SolveConfig;
use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub coefficients: CoefficientsSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub initial: ProfileSection,
    #[serde(default)]
    pub control: ProfileSection,
    #[serde(default)]
    pub event: EventSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub ldp: LdpSection,
    #[serde(default)]
    pub a1: A1Section,
    #[serde(default)]
    pub a2: A2Section,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub nt: usize,
    pub t_horizon: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            nx: 63,
            nt: 200,
            t_horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientsSection {
    pub preset: String,
    pub a: f64,
    pub s0: f64,
    pub s1: f64,
}

impl Default for CoefficientsSection {
    fn default() -> Self {
        CoefficientsSection {
            preset: "linear_heat".into(),
            a: 1.0,
            s0: 1.0,
            s1: 0.25,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub epsilon: f64,
    pub truncation_level: Option<u32>,
    pub max_sup_l2: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            epsilon: 0.5,
            truncation_level: None,
            max_sup_l2: 1e6,
        }
    }
}

/// Named spatial or space-time profiles; `file` reads from disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub kind: String,
    pub amplitude: f64,
    pub mode: usize,
    pub path: Option<PathBuf>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            kind: "zero".into(),
            amplitude: 1.0,
            mode: 1,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSection {
    pub kind: String,
    pub level: f64,
    pub profile_mode: usize,
}

impl Default for EventSection {
    fn default() -> Self {
        EventSection {
            kind: "terminal_projection_geq".into(),
            level: 0.3,
            profile_mode: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub kind: String,
    pub level: f64,
    pub profile_mode: usize,
    pub mu: f64,
    pub tolerance: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            kind: "terminal_projection".into(),
            level: 1.0,
            profile_mode: 1,
            mu: 10.0,
            tolerance: 5e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n: usize,
    pub master_seed: u64,
    pub tilt: String,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n: 10_000,
            master_seed: 1,
            tilt: "none".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSection {
    pub epsilons: Vec<f64>,
    pub n: usize,
    pub tilt: String,
    pub auto_threshold: f64,
}

impl Default for LdpSection {
    fn default() -> Self {
        LdpSection {
            epsilons: vec![0.05, 0.02, 0.01],
            n: 10_000,
            tilt: "auto".into(),
            auto_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A1Section {
    pub n_list: Vec<usize>,
    pub amplitude: f64,
}

impl Default for A1Section {
    fn default() -> Self {
        A1Section {
            n_list: vec![4, 8, 16, 32, 64],
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2Section {
    pub epsilons: Vec<f64>,
    pub seeds_per_epsilon: usize,
    pub m_bound: f64,
    /// When positive, point k uses the oscillating control with
    /// `n = oscillation_base * 2^k`.
    pub oscillation_base: usize,
}

impl Default for A2Section {
    fn default() -> Self {
        A2Section {
            epsilons: vec![0.1, 0.05, 0.02, 0.01],
            seeds_per_epsilon: 20,
            m_bound: 1e6,
            oscillation_base: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub tol: f64,
    pub t_switch: f64,
    pub n_time: usize,
    pub n_space: usize,
    pub decay_a: f64,
    pub decay_b: f64,
    pub decay_d: f64,
    pub dim_d: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Grid size for the Chapman-Kolmogorov identity check.
    pub ck_nx: usize,
    pub cross_form_samples: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            tol: 1e-12,
            t_switch: 0.05,
            n_time: 32,
            n_space: 32,
            decay_a: 0.125,
            decay_b: 0.125,
            decay_d: 0.125,
            dim_d: 1.0,
            gamma: 2.0,
            alpha: 0.2,
            ck_nx: 256,
            cross_form_samples: 32,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker cap for sample-parallel estimators; 0 uses all cores.
    pub threads: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn grid(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(
            self.grid.nx,
            self.grid.nt,
            self.grid.t_horizon,
        )?)
    }

    pub fn preset(&self) -> Result<Preset> {
        let c = &self.coefficients;
        let preset = match c.preset.as_str() {
            "linear_heat" => Preset::LinearHeat,
            "burgers" => Preset::Burgers,
            "burgers_multiplicative" => Preset::BurgersMultiplicative { s0: c.s0, s1: c.s1 },
            "reaction_diffusion" => Preset::ReactionDiffusion {
                a: c.a,
                s0: c.s0,
                s1: c.s1,
            },
            other => bail!("unknown preset {other:?}"),
        };
        Ok(preset)
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        Ok(self.preset()?.build()?)
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            epsilon: self.solve.epsilon,
            truncation_level: self.solve.truncation_level,
            max_sup_l2: self.solve.max_sup_l2,
        }
    }

    /// Initial condition on the interior grid.
    pub fn initial_field(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let p = &self.initial;
        let field = match p.kind.as_str() {
            "zero" => vec![0.0; grid.nx()],
            "sine" => grid.spatial_field(|x| p.amplitude * (p.mode as f64 * PI * x).sin()),
            "parabola" => grid.spatial_field(|x| p.amplitude * x * (1.0 - x)),
            "file" => {
                let path = p
                    .path
                    .as_ref()
                    .context("initial.kind = file needs initial.path")?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read initial field {}", path.display()))?;
                let mut values = Vec::new();
                for line in text.lines() {
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    values.push(line.parse::<f64>().context("bad value in initial field")?);
                }
                values
            }
            other => bail!("unknown initial profile {other:?}"),
        };
        Ok(field)
    }

    pub fn control_field(&self, grid: &GridSpec) -> Result<Control> {
        let p = &self.control;
        let t_end = grid.t_horizon();
        let control = match p.kind.as_str() {
            "zero" => Control::zero(grid),
            "constant" => Control::from_fn(grid, |_, _| p.amplitude),
            "sine_space" => {
                Control::from_fn(grid, |_, y| p.amplitude * (p.mode as f64 * PI * y).sin())
            }
            "sine_time" => Control::from_fn(grid, |t, _| {
                p.amplitude * (p.mode as f64 * PI * t / t_end).sin()
            }),
            "file" => {
                let path = p
                    .path
                    .as_ref()
                    .context("control.kind = file needs control.path")?;
                let mut file = File::open(path)
                    .with_context(|| format!("cannot open control {}", path.display()))?;
                if path.extension().is_some_and(|e| e == "csv") {
                    Control::read_csv(&mut file)?
                } else {
                    Control::read_bin(&mut file)?
                }
            }
            other => bail!("unknown control profile {other:?}"),
        };
        Ok(control)
    }

    /// Normalized sine mode `√2 sin(kπx)` used by events and targets.
    pub fn mode_profile(&self, grid: &GridSpec, mode: usize) -> Vec<f64> {
        grid.spatial_field(|x| (2.0f64).sqrt() * (mode as f64 * PI * x).sin())
    }

    pub fn event(&self, grid: &GridSpec) -> Result<EventSpec> {
        let e = &self.event;
        let event = match e.kind.as_str() {
            "terminal_projection_geq" => EventSpec::TerminalProjectionGeq {
                profile: self.mode_profile(grid, e.profile_mode),
                level: e.level,
            },
            "terminal_l2_geq" => EventSpec::TerminalL2Geq { level: e.level },
            "sup_l2_geq" => EventSpec::SupL2Geq { level: e.level },
            other => bail!("unknown event kind {other:?}"),
        };
        Ok(event)
    }

    pub fn target(&self, grid: &GridSpec) -> Result<TargetSpec> {
        let t = &self.target;
        let kind = match t.kind.as_str() {
            "terminal_projection" => TargetKind::TerminalProjection {
                profile: self.mode_profile(grid, t.profile_mode),
                level: t.level,
            },
            "terminal_field" => TargetKind::TerminalField {
                field: self
                    .mode_profile(grid, t.profile_mode)
                    .iter()
                    .map(|p| p * t.level)
                    .collect(),
            },
            other => bail!("unknown target kind {other:?}"),
        };
        Ok(TargetSpec {
            kind,
            penalty_weight: t.mu,
            tolerance: t.tolerance,
        })
    }

    pub fn tilt_policy(&self) -> Result<TiltPolicy> {
        Ok(match self.ldp.tilt.as_str() {
            "plain" => TiltPolicy::Plain,
            "tilted" => TiltPolicy::Tilted,
            "auto" => TiltPolicy::Auto {
                threshold: self.ldp.auto_threshold,
            },
            other => bail!("unknown tilt policy {other:?}"),
        })
    }
}
