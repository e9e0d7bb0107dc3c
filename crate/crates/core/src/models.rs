//! Coefficient triples `(f, g = g1 + g2, σ)` and their hypothesis checks.
//!
//! Every model carries declared constants: a growth constant `K` with
//! `|f| ≤ K(1+|r|)`, `|g1| ≤ K(1+|r|)`, `|g2| ≤ K(1+|r|²)`; a Lipschitz
//! constant `L` bounding `σ` globally and `f, g` locally with linearly
//! growing factor `L(1+|p|+|q|)`; and bounds `sigma_min ≤ σ ≤ sigma_max`.
//! `check_hypotheses` verifies all of them on a random sample and fails
//! loudly with the witness point otherwise.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;

type SpaceStateFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type StateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A coefficient triple with its hypothesis constants and `r`-derivatives
/// (the derivatives feed the adjoint solver; they are not part of the
/// hypotheses).
#[derive(Clone)]
pub struct Coefficients {
    name: String,
    f: SpaceStateFn,
    f_r: SpaceStateFn,
    g1: SpaceStateFn,
    g1_r: SpaceStateFn,
    g2: StateFn,
    g2_r: StateFn,
    sigma: SpaceStateFn,
    sigma_r: SpaceStateFn,
    pub growth_k: f64,
    pub lipschitz_l: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("name", &self.name)
            .field("growth_k", &self.growth_k)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("sigma_min", &self.sigma_min)
            .field("sigma_max", &self.sigma_max)
            .finish()
    }
}

impl Coefficients {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.f)(t, x, r)
    }

    pub fn f_r(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.f_r)(t, x, r)
    }

    pub fn g1(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.g1)(t, x, r)
    }

    pub fn g2(&self, t: f64, r: f64) -> f64 {
        (self.g2)(t, r)
    }

    /// `g = g1 + g2`.
    pub fn g(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.g1)(t, x, r) + (self.g2)(t, r)
    }

    pub fn g_r(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.g1_r)(t, x, r) + (self.g2_r)(t, r)
    }

    pub fn sigma(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.sigma)(t, x, r)
    }

    pub fn sigma_r(&self, t: f64, x: f64, r: f64) -> f64 {
        (self.sigma_r)(t, x, r)
    }

    /// True when the noise coefficient is the constant 1, the case with
    /// exact Gaussian oracles.
    pub fn is_additive_unit_noise(&self) -> bool {
        (self.sigma_min - 1.0).abs() < 1e-15 && (self.sigma_max - 1.0).abs() < 1e-15
    }

    /// True for the zero-drift additive model whose solution is Gaussian.
    pub fn is_linear_heat(&self) -> bool {
        self.name == "linear_heat"
    }
}

fn zero3() -> SpaceStateFn {
    Arc::new(|_, _, _| 0.0)
}

fn zero2() -> StateFn {
    Arc::new(|_, _| 0.0)
}

/// Named coefficient models. Custom coefficients are added here as built-ins;
/// there is no runtime expression language.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// `f = 0`, `g = 0`, `σ = 1`: the additive stochastic heat equation.
    LinearHeat,
    /// `g2(t,r) = r²/2`, `σ = 1`: conservative Burgers with additive noise.
    Burgers,
    /// Burgers drift with a bounded state-dependent noise coefficient
    /// `σ = s0 + s1 r/(1+|r|)`, `s0 > s1 ≥ 0`.
    BurgersMultiplicative { s0: f64, s1: f64 },
    /// `f = a sin(r)`, `σ = s0 + s1 r/(1+|r|)`: a bounded reaction-diffusion
    /// model that stays inside the linear-growth hypothesis.
    ReactionDiffusion { a: f64, s0: f64, s1: f64 },
}

impl Preset {
    pub fn build(&self) -> Result<Coefficients> {
        match *self {
            Preset::LinearHeat => Ok(Coefficients {
                name: "linear_heat".into(),
                f: zero3(),
                f_r: zero3(),
                g1: zero3(),
                g1_r: zero3(),
                g2: zero2(),
                g2_r: zero2(),
                sigma: Arc::new(|_, _, _| 1.0),
                sigma_r: zero3(),
                growth_k: 0.0,
                lipschitz_l: 0.0,
                sigma_min: 1.0,
                sigma_max: 1.0,
            }),
            Preset::Burgers => Ok(Coefficients {
                name: "burgers".into(),
                f: zero3(),
                f_r: zero3(),
                g1: zero3(),
                g1_r: zero3(),
                g2: Arc::new(|_, r| 0.5 * r * r),
                g2_r: Arc::new(|_, r| r),
                sigma: Arc::new(|_, _, _| 1.0),
                sigma_r: zero3(),
                growth_k: 0.5,
                lipschitz_l: 0.5,
                sigma_min: 1.0,
                sigma_max: 1.0,
            }),
            Preset::BurgersMultiplicative { s0, s1 } => {
                validate_sigma_params(s0, s1)?;
                Ok(Coefficients {
                    name: "burgers_multiplicative".into(),
                    f: zero3(),
                    f_r: zero3(),
                    g1: zero3(),
                    g1_r: zero3(),
                    g2: Arc::new(|_, r| 0.5 * r * r),
                    g2_r: Arc::new(|_, r| r),
                    sigma: Arc::new(move |_, _, r| s0 + s1 * r / (1.0 + r.abs())),
                    sigma_r: Arc::new(move |_, _, r| {
                        let d = 1.0 + r.abs();
                        s1 / (d * d)
                    }),
                    growth_k: 0.5,
                    lipschitz_l: 0.5_f64.max(s1),
                    sigma_min: s0 - s1,
                    sigma_max: s0 + s1,
                })
            }
            Preset::ReactionDiffusion { a, s0, s1 } => {
                validate_sigma_params(s0, s1)?;
                Ok(Coefficients {
                    name: "reaction_diffusion".into(),
                    f: Arc::new(move |_, _, r| a * r.sin()),
                    f_r: Arc::new(move |_, _, r| a * r.cos()),
                    g1: zero3(),
                    g1_r: zero3(),
                    g2: zero2(),
                    g2_r: zero2(),
                    sigma: Arc::new(move |_, _, r| s0 + s1 * r / (1.0 + r.abs())),
                    sigma_r: Arc::new(move |_, _, r| {
                        let d = 1.0 + r.abs();
                        s1 / (d * d)
                    }),
                    growth_k: a.abs(),
                    lipschitz_l: a.abs().max(s1),
                    sigma_min: s0 - s1,
                    sigma_max: s0 + s1,
                })
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::LinearHeat => "linear_heat",
            Preset::Burgers => "burgers",
            Preset::BurgersMultiplicative { .. } => "burgers_multiplicative",
            Preset::ReactionDiffusion { .. } => "reaction_diffusion",
        }
    }
}

fn validate_sigma_params(s0: f64, s1: f64) -> Result<()> {
    if !(s1 >= 0.0 && s0 > s1) {
        return Err(Error::validation(format!(
            "sigma parameters need s0 > s1 >= 0, got s0 = {s0}, s1 = {s1}"
        )));
    }
    Ok(())
}

/// Worst margin observed for one inequality; nonnegative means it held.
#[derive(Debug, Clone)]
pub struct InequalityMargin {
    pub inequality: &'static str,
    /// `bound - |lhs|`, minimized over the sample.
    pub worst_margin: f64,
    /// Sample point achieving the worst margin: `(t, x, p, q)`; `q` is NaN
    /// for the one-point growth inequalities.
    pub witness: (f64, f64, f64, f64),
}

/// Outcome of a sampled hypothesis check.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub margins: Vec<InequalityMargin>,
    pub n_samples: usize,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.margins.iter().all(|m| m.worst_margin >= 0.0)
    }
}

/// Sample `(t, x, r)` and `(t, x, p, q)` uniformly from
/// `[0, t_horizon] × [0,1] × [-r_box, r_box]` and check every inequality with
/// the declared constants. The first violated inequality aborts with its
/// witness point.
pub fn check_hypotheses(
    c: &Coefficients,
    n_samples: usize,
    r_box: f64,
    t_horizon: f64,
    seed: u64,
) -> Result<HypothesisReport> {
    if n_samples < 100 {
        return Err(Error::validation("need at least 100 samples"));
    }
    if !(r_box > 0.0) || !(t_horizon > 0.0) {
        return Err(Error::validation("r_box and t_horizon must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins: Vec<InequalityMargin> = [
        "H1: |f| <= K(1+|r|)",
        "H2: |g1| <= K(1+|r|)",
        "H2: |g2| <= K(1+|r|^2)",
        "H3: sigma_min <= sigma",
        "H3: sigma <= sigma_max",
        "H3: |sigma(p)-sigma(q)| <= L|p-q|",
        "H3: |f(p)-f(q)| <= L(1+|p|+|q|)|p-q|",
        "H3: |g(p)-g(q)| <= L(1+|p|+|q|)|p-q|",
    ]
    .iter()
    .map(|name| InequalityMargin {
        inequality: name,
        worst_margin: f64::INFINITY,
        witness: (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    })
    .collect();

    let update = |idx: usize,
                  margins: &mut Vec<InequalityMargin>,
                  lhs: f64,
                  bound: f64,
                  witness: (f64, f64, f64, f64)|
     -> Result<()> {
        let margin = bound - lhs;
        if margin < margins[idx].worst_margin {
            margins[idx].worst_margin = margin;
            margins[idx].witness = witness;
        }
        if margin < 0.0 {
            return Err(Error::HypothesisViolation {
                inequality: margins[idx].inequality.to_string(),
                witness: format!(
                    "(t = {}, x = {}, p = {}, q = {})",
                    witness.0, witness.1, witness.2, witness.3
                ),
                lhs,
                rhs: bound,
            });
        }
        Ok(())
    };

    let k = c.growth_k;
    let l = c.lipschitz_l;
    for _ in 0..n_samples {
        let t = rng.random::<f64>() * t_horizon;
        let x = rng.random::<f64>();
        let p = (rng.random::<f64>() * 2.0 - 1.0) * r_box;
        let q = (rng.random::<f64>() * 2.0 - 1.0) * r_box;
        let one_pt = (t, x, p, f64::NAN);
        let two_pt = (t, x, p, q);

        update(
            0,
            &mut margins,
            c.f(t, x, p).abs(),
            k * (1.0 + p.abs()),
            one_pt,
        )?;
        update(
            1,
            &mut margins,
            c.g1(t, x, p).abs(),
            k * (1.0 + p.abs()),
            one_pt,
        )?;
        update(2, &mut margins, c.g2(t, p).abs(), k * (1.0 + p * p), one_pt)?;
        let s = c.sigma(t, x, p);
        update(3, &mut margins, c.sigma_min - s, 0.0, one_pt)?;
        update(4, &mut margins, s - c.sigma_max, 0.0, one_pt)?;
        let lip = l * (p - q).abs();
        update(
            5,
            &mut margins,
            (c.sigma(t, x, p) - c.sigma(t, x, q)).abs(),
            lip,
            two_pt,
        )?;
        let local = l * (1.0 + p.abs() + q.abs()) * (p - q).abs();
        update(
            6,
            &mut margins,
            (c.f(t, x, p) - c.f(t, x, q)).abs(),
            local,
            two_pt,
        )?;
        update(
            7,
            &mut margins,
            (c.g(t, x, p) - c.g(t, x, q)).abs(),
            local,
            two_pt,
        )?;
    }

    Ok(HypothesisReport { margins, n_samples })
}
