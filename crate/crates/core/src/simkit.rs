//! Monte Carlo simulation of the sensing chain: primary signal, local energy,
//! amplify-and-forward report and linear fusion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{lrt_build, FusedLinkState};
use crate::error::{invalid, Result};
use crate::model::{Allocation, NoisePriors, UserProfile};
use crate::rng::trial_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Sum `kappa` raw squared samples of a QPSK signal in complex noise.
    ExactSample,
    /// Draw the energy from its large-sample Gaussian law.
    GaussianApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisMix {
    Priors,
    ForcedH0,
    ForcedH1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// How the fusion-channel noise reaches the detector after phase compensation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionNoise {
    /// The compensated statistic carries real noise of variance `sigma_v^2`.
    /// This is the convention under which the closed-form error holds.
    Real,
    /// `v ~ CN(0, sigma_v^2)` and only the real part survives, leaving
    /// variance `sigma_v^2 / 2`.
    ComplexRealPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub trials: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub hypothesis_mix: HypothesisMix,
    pub fusion_noise: FusionNoise,
}

impl SimSpec {
    pub fn new(trials: u64, seed: u64, mode: SimMode) -> Self {
        Self {
            trials,
            seed,
            mode,
            hypothesis_mix: HypothesisMix::Priors,
            fusion_noise: FusionNoise::Real,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "at least one trial is required"));
        }
        Ok(())
    }
}

/// Empirical error rates. A rate is `None` when its hypothesis was never drawn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub p_f: Option<f64>,
    pub p_m: Option<f64>,
    /// Prior-weighted when both hypotheses occur, otherwise the single observed rate.
    pub p_e: f64,
    pub stderr_f: Option<f64>,
    pub stderr_m: Option<f64>,
    pub stderr_e: f64,
    pub trials_h0: u64,
    pub trials_h1: u64,
}

/// Binomial standard error of a rate `p` estimated from `trials` draws.
pub fn binomial_stderr(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// One local energy statistic.
///
/// In exact mode `kappa` must be a whole number of samples; the primary signal
/// has unit modulus and the observation SNR sets its amplitude.
pub fn draw_local_energy(
    user: &UserProfile,
    kappa: f64,
    hypothesis: Hypothesis,
    np: &NoisePriors,
    mode: SimMode,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(invalid("kappa", format!("must be at least 1, got {kappa}")));
    }
    let s2 = np.sigma_n2();
    let gamma = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => user.gamma,
    };
    match mode {
        SimMode::GaussianApprox => {
            let mean = (1.0 + gamma) * s2;
            let sd = ((1.0 + 2.0 * gamma) / kappa).sqrt() * s2;
            let z: f64 = rng.sample(StandardNormal);
            Ok(mean + sd * z)
        }
        SimMode::ExactSample => {
            if kappa.fract() != 0.0 {
                return Err(invalid("kappa", "exact sampling needs an integer sample count"));
            }
            // Observation channel with uniform phase, fixed for the slot.
            let amp = (gamma * s2).sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let (hr, hi) = (amp * theta.cos(), amp * theta.sin());
            let noise_sd = (0.5 * s2).sqrt();
            let half = std::f64::consts::FRAC_1_SQRT_2;
            let mut sum = 0.0;
            for _ in 0..kappa as u64 {
                let (sr, si) = match rng.random_range(0..4u8) {
                    0 => (half, half),
                    1 => (-half, half),
                    2 => (-half, -half),
                    _ => (half, -half),
                };
                let nr: f64 = rng.sample(StandardNormal);
                let ni: f64 = rng.sample(StandardNormal);
                let re = hr * sr - hi * si + noise_sd * nr;
                let im = hr * si + hi * sr + noise_sd * ni;
                sum += re * re + im * im;
            }
            Ok(sum / kappa)
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    h0: u64,
    h1: u64,
    false_alarms: u64,
    misses: u64,
}

impl Tally {
    fn merge(self, o: Self) -> Self {
        Self {
            h0: self.h0 + o.h0,
            h1: self.h1 + o.h1,
            false_alarms: self.false_alarms + o.false_alarms,
            misses: self.misses + o.misses,
        }
    }
}

/// Simulates the fused decision over independent sensing slots.
///
/// Each trial draws from its own `(seed, trial)` stream and tallies are integer
/// sums, so the result does not depend on the rayon pool size.
pub fn run_fusion_sim(
    users: &[UserProfile],
    alloc: &Allocation,
    np: &NoisePriors,
    spec: &SimSpec,
) -> Result<SimResult> {
    spec.validate()?;
    let state = FusedLinkState::from_allocation(users, alloc, np)?;
    let lrt = lrt_build(&state)?;
    let active: Vec<usize> = (0..users.len()).filter(|&i| state.users()[i].is_active()).collect();
    if spec.mode == SimMode::ExactSample {
        if let Some(&i) = active.iter().find(|&&i| alloc.kappa[i].fract() != 0.0) {
            return Err(invalid(
                "kappa",
                format!("exact sampling needs integer sample counts (user {i})"),
            ));
        }
    }
    let v_sd = match spec.fusion_noise {
        FusionNoise::Real => np.sigma_v2().sqrt(),
        FusionNoise::ComplexRealPart => (0.5 * np.sigma_v2()).sqrt(),
    };
    let pi1 = np.pi1();
    let trial = |t: u64| -> Result<Tally> {
        let mut rng = trial_rng(spec.seed, t);
        let hyp = match spec.hypothesis_mix {
            HypothesisMix::ForcedH0 => Hypothesis::H0,
            HypothesisMix::ForcedH1 => Hypothesis::H1,
            HypothesisMix::Priors => {
                if rng.random::<f64>() < pi1 {
                    Hypothesis::H1
                } else {
                    Hypothesis::H0
                }
            }
        };
        let mut stat = 0.0;
        for &i in &active {
            let x = draw_local_energy(&users[i], alloc.kappa[i], hyp, np, spec.mode, &mut rng)?;
            let v: f64 = rng.sample(StandardNormal);
            // After phase compensation the report is g|h|x plus real noise.
            let y = alloc.g[i] * users[i].h_mag * x + v_sd * v;
            stat += lrt.weights[i] * y;
        }
        let busy = stat > lrt.threshold;
        Ok(match hyp {
            Hypothesis::H0 => Tally {
                h0: 1,
                false_alarms: busy as u64,
                ..Tally::default()
            },
            Hypothesis::H1 => Tally {
                h1: 1,
                misses: (!busy) as u64,
                ..Tally::default()
            },
        })
    };
    let tally = (0..spec.trials)
        .into_par_iter()
        .map(trial)
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let rate = |errors: u64, n: u64| (n > 0).then(|| errors as f64 / n as f64);
    let p_f = rate(tally.false_alarms, tally.h0);
    let p_m = rate(tally.misses, tally.h1);
    let stderr_f = p_f.map(|p| binomial_stderr(p, tally.h0));
    let stderr_m = p_m.map(|p| binomial_stderr(p, tally.h1));
    let (p_e, stderr_e) = match (p_f, p_m) {
        (Some(f), Some(m)) => {
            let pi0 = np.pi0();
            let var = (pi0 * stderr_f.unwrap_or(0.0)).powi(2) + (pi1 * stderr_m.unwrap_or(0.0)).powi(2);
            (pi0 * f + pi1 * m, var.sqrt())
        }
        (Some(f), None) => (f, stderr_f.unwrap_or(0.0)),
        (None, Some(m)) => (m, stderr_m.unwrap_or(0.0)),
        (None, None) => unreachable!("at least one trial ran"),
    };
    Ok(SimResult {
        p_f,
        p_m,
        p_e,
        stderr_f,
        stderr_m,
        stderr_e,
        trials_h0: tally.h0,
        trials_h1: tally.h1,
    })
}
