//! Analytic detection quantities for the fused amplify-and-forward statistic.
//!
//! The fusion center receives `y_i = g_i h_i x_i + v_i` from every user and
//! applies a linear test. With the local energy `x_i` treated as Gaussian, the
//! prior-weighted error probability has the closed form
//!
//! ```text
//! Pe = Q( 1/2 * sqrt( sum_i g_i^2 kappa_i gamma_i^2 |h_i|^2 / (g_i^2 |h_i|^2 + kappa_i s) ) )
//! ```
//!
//! with `s = sigma_v^2 / sigma_n^4`. Users with no samples or no gain add nothing.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::Serialize;
use statrs::function::erf;

use crate::error::{invalid, Error, Result};
use crate::model::{Allocation, NoisePriors, UserProfile};

/// Standard Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `exp(z^2 / 2) * Q(z)`, finite for every `z` including the far tail.
///
/// Products such as `exp(2c) Q(2 sqrt(c))` reduce to this function and would
/// otherwise overflow times underflow.
pub fn q_scaled(z: f64) -> f64 {
    let t = z * FRAC_1_SQRT_2;
    // Direct evaluation loses about 2 t^2 ulp through exp(t^2); past t = 10 the
    // truncated asymptotic series is below 1e-16 relative.
    if t <= 10.0 {
        return 0.5 * (t * t).exp() * libm::erfc(t);
    }
    // erfcx(t) ~ 1/(t sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2t^2)^k
    let inv = 1.0 / (2.0 * t * t);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..13 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
    }
    0.5 * sum / (t * PI.sqrt())
}

/// Standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`q_function`] on `(0, 1)`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    let mut x = SQRT_2 * erf::erfc_inv(2.0 * p);
    // One Newton step on Q(x) - p tightens the tail.
    let pdf = gaussian_pdf(x);
    if pdf > 0.0 {
        x += (q_function(x) - p) / pdf;
    }
    Ok(x)
}

/// One user's contribution to the fused statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkUser {
    pub gamma: f64,
    pub h_mag: f64,
    pub kappa: f64,
    pub g: f64,
}

impl LinkUser {
    pub fn is_active(&self) -> bool {
        self.kappa > 0.0 && self.g > 0.0
    }
}

/// Full state of the sensing-and-reporting chain for a fixed allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedLinkState {
    users: Vec<LinkUser>,
    priors: NoisePriors,
}

impl FusedLinkState {
    pub fn new(users: Vec<LinkUser>, priors: NoisePriors) -> Result<Self> {
        if users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }
        for u in &users {
            UserProfile::new(u.gamma, u.h_mag)?;
            if !(u.kappa >= 0.0 && u.kappa.is_finite()) || !(u.g >= 0.0 && u.g.is_finite()) {
                return Err(invalid("allocation", "kappa and g must be finite and nonnegative"));
            }
        }
        Ok(Self { users, priors })
    }

    pub fn from_allocation(
        users: &[UserProfile],
        alloc: &Allocation,
        priors: &NoisePriors,
    ) -> Result<Self> {
        if users.len() != alloc.len() {
            return Err(Error::DimensionMismatch {
                expected: users.len(),
                found: alloc.len(),
            });
        }
        let links = users
            .iter()
            .zip(alloc.kappa.iter().zip(&alloc.g))
            .map(|(u, (&kappa, &g))| LinkUser {
                gamma: u.gamma,
                h_mag: u.h_mag,
                kappa,
                g,
            })
            .collect();
        Self::new(links, *priors)
    }

    pub fn users(&self) -> &[LinkUser] {
        &self.users
    }

    pub fn priors(&self) -> &NoisePriors {
        &self.priors
    }

    pub fn n(&self) -> usize {
        self.users.len()
    }

    /// The sum under the square root of the error probability expression.
    pub fn deflection(&self) -> f64 {
        deflection(&self.users, self.priors.sigma_tilde_v2())
    }

    /// Argument of `Q` in the error probability.
    pub fn margin(&self) -> f64 {
        0.5 * self.deflection().sqrt()
    }
}

pub(crate) fn user_deflection(u: &LinkUser, sigma_tilde_v2: f64) -> f64 {
    if !u.is_active() {
        return 0.0;
    }
    let gh2 = u.g * u.g * u.h_mag * u.h_mag;
    gh2 * u.kappa * u.gamma * u.gamma / (gh2 + u.kappa * sigma_tilde_v2)
}

fn deflection(users: &[LinkUser], sigma_tilde_v2: f64) -> f64 {
    let mut sum = 0.0;
    for u in users.iter().filter(|u| u.is_active()) {
        sum += user_deflection(u, sigma_tilde_v2);
    }
    sum
}

/// Fused error probability for a fixed allocation.
pub fn error_probability(state: &FusedLinkState) -> f64 {
    q_function(state.margin())
}

/// Limit of [`error_probability`] as every sample count grows without bound.
pub fn error_probability_kappa_inf(g: &[f64], users: &[UserProfile], np: &NoisePriors) -> f64 {
    let sum: f64 = g
        .iter()
        .zip(users)
        .map(|(g, u)| g * g * u.gamma * u.gamma * u.h_mag * u.h_mag)
        .sum();
    q_function(sum.sqrt() / (2.0 * np.sigma_tilde_v()))
}

/// Limit of [`error_probability`] as every amplifier gain grows without bound.
pub fn error_probability_g_inf(kappa: &[f64], users: &[UserProfile]) -> f64 {
    let sum: f64 = kappa
        .iter()
        .zip(users)
        .map(|(k, u)| k * u.gamma * u.gamma)
        .sum();
    q_function(0.5 * sum.sqrt())
}

/// Linear fusion test `T(y) = sum_i w_i y_i` compared against `threshold`.
///
/// All quantities assume the received samples have been phase compensated, so
/// only channel magnitudes enter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrtSpec {
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub mean_h0: f64,
    pub mean_h1: f64,
    /// Variance of `T` under either hypothesis.
    pub variance: f64,
}

impl LrtSpec {
    pub fn statistic(&self, y: &[f64]) -> f64 {
        self.weights.iter().zip(y).map(|(w, y)| w * y).sum()
    }

    /// `true` declares the band occupied.
    pub fn decide(&self, y: &[f64]) -> bool {
        self.statistic(y) > self.threshold
    }

    /// Error probability implied by the test's Gaussian moments.
    pub fn error_probability(&self) -> f64 {
        if self.variance <= 0.0 {
            return 0.5;
        }
        q_function((self.threshold - self.mean_h0) / self.variance.sqrt())
    }

    /// The same test with weights, threshold and moments scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * c).collect(),
            threshold: self.threshold * c,
            mean_h0: self.mean_h0 * c,
            mean_h1: self.mean_h1 * c,
            variance: self.variance * c * c,
        }
    }
}

/// Builds the approximate likelihood-ratio test for equal priors.
///
/// Inactive users receive weight zero.
pub fn lrt_build(state: &FusedLinkState) -> Result<LrtSpec> {
    let np = state.priors();
    if !np.has_equal_priors() {
        return Err(Error::UnequalPriors {
            pi0: np.pi0(),
            pi1: np.pi1(),
        });
    }
    if !state.users().iter().any(LinkUser::is_active) {
        return Err(Error::NoActiveUser);
    }
    let s2 = np.sigma_n2();
    let s4 = s2 * s2;
    let mut spec = LrtSpec {
        weights: Vec::with_capacity(state.n()),
        threshold: 0.0,
        mean_h0: 0.0,
        mean_h1: 0.0,
        variance: 0.0,
    };
    for u in state.users() {
        if !u.is_active() {
            spec.weights.push(0.0);
            continue;
        }
        let amp = u.g * u.h_mag;
        let noise = amp * amp * s4 / u.kappa + np.sigma_v2();
        let w = amp * u.gamma / noise;
        spec.weights.push(w);
        spec.mean_h0 += w * amp * s2;
        spec.mean_h1 += w * amp * (1.0 + u.gamma) * s2;
        spec.threshold += w * amp * (1.0 + 0.5 * u.gamma) * s2;
        spec.variance += w * w * noise;
    }
    Ok(spec)
}
