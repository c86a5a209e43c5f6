//! Error probability averaged over Rayleigh fading.
//!
//! With equal `g` and `kappa` on every user and i.i.d. channels, Craig's form of
//! `Q` turns the average into `(1/pi) int_0^{pi/2} B(phi)^n dphi`, where `B`
//! depends on the environment:
//!
//! | kind | observation SNR `gamma` | fusion gain `|h|^2` |
//! |------|-------------------------|---------------------|
//! | I    | fixed at `gamma_bar`    | Exp(1)              |
//! | II   | Exp(mean `gamma_bar`)   | fixed at 1          |
//! | III  | Exp(mean `gamma_bar`)   | Exp(1)              |
//!
//! `B` is always evaluated through exponentially scaled integrals so large
//! arguments never produce `inf * 0`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::detector::{error_probability, q_scaled, FusedLinkState, LinkUser};
use crate::error::{invalid, Error, Result};
use crate::model::NoisePriors;
use crate::quadrature::{gauss_kronrod, HalfLineRule, QuadratureSpec};
use crate::rng::map_trials;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    I,
    II,
    III,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::I, EnvKind::II, EnvKind::III];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEnvironment {
    pub kind: EnvKind,
    /// Mean local SNR (linear).
    pub gamma_bar: f64,
}

impl ChannelEnvironment {
    pub fn new(kind: EnvKind, gamma_bar: f64) -> Result<Self> {
        let env = Self { kind, gamma_bar };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_bar > 0.0 && self.gamma_bar.is_finite()) {
            return Err(invalid("gamma_bar", format!("must be positive, got {}", self.gamma_bar)));
        }
        Ok(())
    }

    /// Draws one user's `(gamma, |h|)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let gamma = match self.kind {
            EnvKind::I => self.gamma_bar,
            EnvKind::II | EnvKind::III => self.gamma_bar * rng.sample::<f64, _>(Exp1),
        };
        let h_mag = match self.kind {
            EnvKind::II => 1.0,
            EnvKind::I | EnvKind::III => rng.sample::<f64, _>(Exp1).sqrt(),
        };
        (gamma, h_mag)
    }
}

fn check_ab(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("a", format!("must be positive, got {a}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid("b", format!("must be positive, got {b}")));
    }
    Ok(())
}

/// `e^{-a} Psi1(a, b) = int_0^inf exp(-x - a x / (x + b)) dx`, which lies in `(0, 1]`.
pub fn psi1_scaled(a: f64, b: f64, rule: &HalfLineRule) -> Result<f64> {
    Ok(rule.integrate(|x| (-a * x / (x + b)).exp())?.value)
}

/// `Psi1(a, b) = int_0^inf exp(-x + a b / (x + b)) dx`.
pub fn psi1(a: f64, b: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_ab(a, b)?;
    let rule = HalfLineRule::new(*quad)?;
    Ok(a.exp() * psi1_scaled(a, b, &rule)?)
}

/// `e^{2a} Psi2(a, b) = int_0^inf e^{-x} sqrt(u) sQ(2 sqrt(u)) dx` with `u = a + b/x`.
pub fn psi2_scaled(a: f64, b: f64, rule: &HalfLineRule) -> Result<f64> {
    Ok(rule
        .integrate(|x| {
            let u = a + b / x;
            u.sqrt() * q_scaled(2.0 * u.sqrt())
        })?
        .value)
}

/// `Psi2(a, b) = int_0^inf sqrt(a + b/x) exp(-x + 2b/x) Q(2 sqrt(a + b/x)) dx`.
pub fn psi2(a: f64, b: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_ab(a, b)?;
    let rule = HalfLineRule::new(*quad)?;
    Ok((-2.0 * a).exp() * psi2_scaled(a, b, &rule)?)
}

/// Common inputs of [`avg_error`] and [`avg_error_upper_bound`].
#[derive(Debug, Clone, Copy)]
struct Setting {
    env: ChannelEnvironment,
    g: f64,
    kappa: f64,
    sigma_tilde_v2: f64,
}

impl Setting {
    fn new(env: ChannelEnvironment, g: f64, kappa: f64, n: usize, np: &NoisePriors) -> Result<Self> {
        env.validate()?;
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid("g", format!("must be positive, got {g}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("must be positive, got {kappa}")));
        }
        if n == 0 {
            return Err(invalid("n", "at least one user is required"));
        }
        Ok(Self {
            env,
            g,
            kappa,
            sigma_tilde_v2: np.sigma_tilde_v2(),
        })
    }

    /// `B(phi)` as a function of `s = sin^2 phi`.
    fn b_of(&self, s: f64, rule: &HalfLineRule) -> Result<f64> {
        let gb2 = self.env.gamma_bar * self.env.gamma_bar;
        let g2 = self.g * self.g;
        let v = match self.env.kind {
            EnvKind::I => {
                let a = self.kappa * gb2 / (8.0 * s);
                let b = self.kappa * self.sigma_tilde_v2 / g2;
                psi1_scaled(a, b, rule)?
            }
            EnvKind::II => {
                let c = (1.0 / self.kappa + self.sigma_tilde_v2 / g2) / gb2;
                let z = 2.0 * (c * s).sqrt();
                (2.0 * PI).sqrt() * z * q_scaled(z)
            }
            EnvKind::III => {
                let a = s / (self.kappa * gb2);
                let b = self.sigma_tilde_v2 * s / (g2 * gb2);
                (8.0 * PI).sqrt() * psi2_scaled(a, b, rule)?
            }
        };
        let slack = 10.0 * rule.spec().abs_tol + 1e-12;
        if !(v >= 0.0 && v <= 1.0 + slack) {
            return Err(Error::Numerical(format!(
                "B(phi) = {v} outside [0, 1] at sin^2 phi = {s}"
            )));
        }
        Ok(v.min(1.0))
    }
}

/// Inner rule with tolerances tightened by `n`, since `B^n` amplifies errors in `B`.
fn inner_rule(quad: &QuadratureSpec, n: usize) -> Result<HalfLineRule> {
    let scale = 0.1 / n as f64;
    HalfLineRule::new(QuadratureSpec {
        abs_tol: quad.abs_tol * scale,
        rel_tol: quad.rel_tol * scale,
        ..*quad
    })
}

/// Average error probability over the environment's fading, for `n` users
/// sharing gain `g` and sample count `kappa`.
pub fn avg_error(
    env: ChannelEnvironment,
    g: f64,
    kappa: f64,
    n: usize,
    np: &NoisePriors,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    let set = Setting::new(env, g, kappa, n, np)?;
    let rule = inner_rule(quad, n)?;
    let mut failure = None;
    let est = gauss_kronrod(
        |phi: f64| {
            if failure.is_some() {
                return 0.0;
            }
            let s = phi.sin().powi(2);
            match set.b_of(s, &rule) {
                Ok(b) => (n as f64 * b.ln()).exp(),
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        0.5 * PI,
        quad.abs_tol * PI,
        quad.rel_tol,
        quad.max_subdivisions,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est?.value / PI)
}

/// Chernoff-type bound `B(pi/2)^n / 2` on [`avg_error`].
pub fn avg_error_upper_bound(
    env: ChannelEnvironment,
    g: f64,
    kappa: f64,
    n: usize,
    np: &NoisePriors,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    let set = Setting::new(env, g, kappa, n, np)?;
    let rule = inner_rule(quad, n)?;
    let b = set.b_of(1.0, &rule)?;
    Ok(0.5 * (n as f64 * b.ln()).exp())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / m).sqrt(),
            trials: samples.len() as u64,
        }
    }
}

/// Monte Carlo average of the conditional error probability over channel draws.
///
/// Unlike [`avg_error`], `gamma_override` lets every user's SNR be pinned, which
/// is how degenerate cases are exercised.
pub fn avg_error_mc(
    env: ChannelEnvironment,
    g: f64,
    kappa: f64,
    n: usize,
    np: &NoisePriors,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    avg_error_mc_with(env, g, kappa, n, np, trials, seed, None)
}

#[allow(clippy::too_many_arguments)]
pub fn avg_error_mc_with(
    env: ChannelEnvironment,
    g: f64,
    kappa: f64,
    n: usize,
    np: &NoisePriors,
    trials: u64,
    seed: u64,
    gamma_override: Option<f64>,
) -> Result<McEstimate> {
    Setting::new(env, g, kappa, n, np)?;
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let samples = map_trials(seed, trials, |_, rng| {
        let users = (0..n)
            .map(|_| {
                let (gamma, h_mag) = env.draw(rng);
                LinkUser {
                    gamma: gamma_override.unwrap_or(gamma),
                    h_mag,
                    kappa,
                    g,
                }
            })
            .collect();
        FusedLinkState::new(users, *np).map(|s| error_probability(&s))
    });
    let samples: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    Ok(McEstimate::from_samples(&samples))
}
