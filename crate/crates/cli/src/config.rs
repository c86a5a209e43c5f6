//! Experiment configuration as read from JSON, plus structural validation.

use std::path::PathBuf;

use clap::ValueEnum;
use coopsense::model::NetworkSpec;
use coopsense::simkit::{HypothesisMix, SimMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fading-averaged error at one gain.
    AvgError,
    /// Joint or gain-only allocation at one budget.
    Optimize,
    /// Monte Carlo run of a fixed allocation.
    Simulate,
    /// Any of the analyses over a sweep axis.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig3,
    Fig4,
    Fig5,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Common amplifier gain in dB (`g = 10^(g_db/20)`); fading analysis.
    GDb,
    /// System budget; joint allocation.
    CBar,
    /// Total samples split evenly over users; gain allocation.
    KappaTot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub variable: SweepVariable,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: Scale,
}

impl SweepAxis {
    /// Axis values, endpoints included. Call only on a validated axis.
    pub fn values(&self) -> Vec<f64> {
        let last = self.points.saturating_sub(1);
        (0..self.points)
            .map(|k| {
                // Endpoints are exact so preset rows land on round values.
                if k == 0 {
                    return self.from;
                }
                if k == last {
                    return self.to;
                }
                let t = k as f64 / last as f64;
                match self.scale {
                    Scale::Linear => self.from + t * (self.to - self.from),
                    Scale::Log => (self.from.ln() + t * (self.to.ln() - self.from.ln())).exp(),
                }
            })
            .collect()
    }
}

/// Equal-gain network for the fading average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingConfig {
    pub gamma_bar_db: f64,
    pub kappa: f64,
    pub n_users: usize,
    /// Gain for a single-point run; a `g_db` sweep overrides it.
    #[serde(default)]
    pub g_db: f64,
    /// Absolute and relative quadrature tolerance.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

/// Gain-only design with samples fixed at `floor(kappa_tot / n)` per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub p_tot: f64,
    /// Cap for the capped variant, as a fraction of `p_tot`.
    pub p_max_frac: f64,
    /// Sample total for a single-point run; a `kappa_tot` sweep overrides it.
    #[serde(default = "default_kappa_tot")]
    pub kappa_tot: f64,
}

fn default_kappa_tot() -> f64 {
    600.0
}

/// Scenario B caps for the joint design, as fractions of the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub kappa_max_frac: f64,
    pub p_max_frac: f64,
    /// Users kept for the enumeration oracle, best `rho` first.
    pub minlp_users: usize,
    pub minlp_kappa_bound: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            kappa_max_frac: 0.2,
            p_max_frac: 0.2,
            minlp_users: 3,
            minlp_kappa_bound: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub mode: SimMode,
    #[serde(default = "default_mix")]
    pub hypothesis_mix: HypothesisMix,
    pub kappa: Vec<f64>,
    pub g: Vec<f64>,
}

fn default_mix() -> HypothesisMix {
    HypothesisMix::Priors
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading: Option<FadingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsConfig>,
    #[serde(default)]
    pub joint: JointConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
}

fn default_trials() -> u64 {
    100_000
}

/// Which computation a config resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Fading,
    Joint,
    Gains,
    Simulation,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The analysis implied by the command and, for sweeps, the axis variable.
    pub fn analysis(&self) -> Option<Analysis> {
        match self.command {
            Command::AvgError => Some(Analysis::Fading),
            Command::Simulate => Some(Analysis::Simulation),
            Command::Optimize if self.gains.is_some() => Some(Analysis::Gains),
            Command::Optimize => Some(Analysis::Joint),
            Command::Sweep => self.sweep.map(|s| match s.variable {
                SweepVariable::GDb => Analysis::Fading,
                SweepVariable::CBar => Analysis::Joint,
                SweepVariable::KappaTot => Analysis::Gains,
            }),
        }
    }
}

/// One failed check. `code` is stable and machine readable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

fn push(out: &mut Vec<Violation>, code: &'static str, message: impl Into<String>) {
    out.push(Violation {
        code,
        message: message.into(),
    });
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn check_network(net: &NetworkSpec, need_users: bool, out: &mut Vec<Violation>) {
    if !(0.0..=1.0).contains(&net.pi1) {
        push(out, "priors.range", format!("pi1 must lie in [0, 1], got {}", net.pi1));
    }
    if !positive(net.sigma_n2) || !positive(net.sigma_v2) {
        push(out, "noise.positive", "sigma_n2 and sigma_v2 must be positive");
    }
    if need_users && net.users.is_empty() {
        push(out, "users.nonempty", "at least one user is required");
    }
    for (i, u) in net.users.iter().enumerate() {
        if !u.gamma_db.is_finite() {
            push(out, "users.gamma_db", format!("user {i}: gamma_db must be finite"));
        }
        if !(u.h_mag >= 0.0 && u.h_mag.is_finite()) {
            push(out, "users.h_mag", format!("user {i}: h_mag must be nonnegative"));
        }
    }
    if !(net.cost.c0 >= 0.0 && net.cost.c0.is_finite()) {
        push(out, "cost.c0", "c0 must be nonnegative");
    }
    if !(net.cost.c_bar >= 0.0 && net.cost.c_bar.is_finite()) {
        push(out, "cost.c_bar", "c_bar must be nonnegative");
    }
}

/// Every structural problem with `config`; empty when it can run.
pub fn validate(config: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Some(s) = &config.sweep {
        if s.points < 2 {
            push(&mut out, "sweep.points", format!("need at least 2 points, got {}", s.points));
        }
        if !s.from.is_finite() || !s.to.is_finite() || s.from >= s.to {
            push(&mut out, "sweep.range", "sweep needs finite from < to");
        }
        if s.scale == Scale::Log && !(s.from > 0.0) {
            push(&mut out, "sweep.range", "log sweeps need a positive start");
        }
    }
    if config.trials == 0 {
        push(&mut out, "trials.positive", "at least one trial is required");
    }
    let Some(analysis) = config.analysis() else {
        push(&mut out, "sweep.missing", "the sweep command needs a sweep axis");
        return out;
    };
    if config.command != Command::Sweep {
        if let Some(s) = &config.sweep {
            let allowed = matches!(
                (analysis, s.variable),
                (Analysis::Fading, SweepVariable::GDb)
                    | (Analysis::Joint, SweepVariable::CBar)
                    | (Analysis::Gains, SweepVariable::KappaTot)
            );
            if !allowed {
                push(&mut out, "sweep.variable", "sweep variable does not fit the command");
            }
        }
    }
    match (&config.network, analysis) {
        (None, Analysis::Fading) => {}
        (None, _) => push(&mut out, "network.missing", "this analysis needs a network"),
        (Some(net), a) => check_network(net, a != Analysis::Fading, &mut out),
    }
    match analysis {
        Analysis::Fading => match &config.fading {
            None => push(&mut out, "fading.missing", "fading analysis needs a fading section"),
            Some(f) => {
                if !f.gamma_bar_db.is_finite() {
                    push(&mut out, "fading.gamma_bar_db", "gamma_bar_db must be finite");
                }
                if !positive(f.kappa) {
                    push(&mut out, "fading.kappa", "kappa must be positive");
                }
                if !(f.tolerance > 0.0 && f.tolerance < 1.0) {
                    push(&mut out, "fading.tolerance", "tolerance must lie in (0, 1)");
                }
                if f.n_users == 0 {
                    push(&mut out, "fading.n_users", "at least one user is required");
                }
            }
        },
        Analysis::Joint => {
            let j = &config.joint;
            if !positive(j.kappa_max_frac) || !positive(j.p_max_frac) {
                push(&mut out, "joint.caps", "cap fractions must be positive");
            }
            if j.minlp_users == 0 || j.minlp_users > 4 {
                push(&mut out, "joint.minlp_users", "enumeration supports 1 to 4 users");
            }
            if j.minlp_kappa_bound == 0 || j.minlp_kappa_bound > 30 {
                push(&mut out, "joint.minlp_kappa_bound", "enumeration bound must be in 1..=30");
            }
            if let Some(net) = &config.network {
                if !(net.cost.c0 > 0.0) {
                    push(&mut out, "cost.c0", "joint allocation needs c0 > 0");
                }
            }
        }
        Analysis::Gains => match &config.gains {
            None => push(&mut out, "gains.missing", "gain analysis needs a gains section"),
            Some(g) => {
                if !positive(g.p_tot) {
                    push(&mut out, "gains.p_tot", "p_tot must be positive");
                }
                if !positive(g.p_max_frac) {
                    push(&mut out, "gains.p_max_frac", "p_max_frac must be positive");
                }
                if !positive(g.kappa_tot) {
                    push(&mut out, "gains.kappa_tot", "kappa_tot must be positive");
                }
            }
        },
        Analysis::Simulation => match (&config.simulation, &config.network) {
            (None, _) => push(&mut out, "simulation.missing", "simulate needs a simulation section"),
            (Some(s), Some(net)) => {
                let n = net.users.len();
                if s.kappa.len() != n || s.g.len() != n {
                    push(&mut out, "simulation.allocation", format!("kappa and g need {n} entries"));
                }
                if s.kappa.iter().chain(&s.g).any(|v| !(*v >= 0.0 && v.is_finite())) {
                    push(&mut out, "simulation.allocation", "kappa and g must be nonnegative");
                }
                if net.pi1 != 0.5 {
                    push(&mut out, "priors.equal", "the fusion test needs equal priors");
                }
            }
            (Some(_), None) => {}
        },
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    fn codes(c: &ExperimentConfig) -> Vec<&'static str> {
        validate(c).into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn presets_are_valid() {
        for p in [Preset::Fig3, Preset::Fig4, Preset::Fig5] {
            assert_eq!(codes(&preset(p).unwrap()), Vec::<&str>::new(), "{p:?}");
        }
    }

    #[test]
    fn empty_users_and_bad_priors() {
        let mut c = preset(Preset::Fig4).unwrap();
        c.network.as_mut().unwrap().users.clear();
        assert!(codes(&c).contains(&"users.nonempty"));
        let mut c = preset(Preset::Fig4).unwrap();
        c.network.as_mut().unwrap().pi1 = 1.5;
        assert!(codes(&c).contains(&"priors.range"));
    }

    #[test]
    fn sweep_checks() {
        let mut c = preset(Preset::Fig3).unwrap();
        c.sweep.as_mut().unwrap().points = 1;
        assert_eq!(codes(&c), vec!["sweep.points"]);
        c.sweep = None;
        assert_eq!(codes(&c), vec!["sweep.missing"]);
    }

    #[test]
    fn axis_values_hit_endpoints() {
        let a = SweepAxis {
            variable: SweepVariable::KappaTot,
            from: 10.0,
            to: 1000.0,
            points: 3,
            scale: Scale::Log,
        };
        let v = a.values();
        assert_eq!(v[0], 10.0);
        assert!((v[1] - 100.0).abs() < 1e-12);
        assert!((v[2] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let c = preset(Preset::Fig5).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }
}
