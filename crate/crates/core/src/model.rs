//! Network and cost data model.
//!
//! Every quantity here is stored in linear units. SNRs only appear in dB at the
//! file boundary ([`NetworkSpec`]), and are converted with [`snr_from_db`] on
//! ingestion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Converts a ratio in dB to a linear ratio.
pub fn snr_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Inverse of [`snr_from_db`].
pub fn db_from_snr(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Noise variances and hypothesis priors shared by every user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisePriors {
    sigma_n2: f64,
    sigma_v2: f64,
    sigma_tilde_v2: f64,
    pi0: f64,
    pi1: f64,
}

impl NoisePriors {
    /// Builds priors from the sensing noise variance, the fusion noise variance
    /// and the probability that the band is occupied.
    pub fn new(sigma_n2: f64, sigma_v2: f64, pi1: f64) -> Result<Self> {
        if !(sigma_n2 > 0.0 && sigma_n2.is_finite()) {
            return Err(invalid("sigma_n2", format!("must be positive, got {sigma_n2}")));
        }
        if !(sigma_v2 > 0.0 && sigma_v2.is_finite()) {
            return Err(invalid("sigma_v2", format!("must be positive, got {sigma_v2}")));
        }
        if !(0.0..=1.0).contains(&pi1) {
            return Err(invalid("pi1", format!("must lie in [0, 1], got {pi1}")));
        }
        Ok(Self {
            sigma_n2,
            sigma_v2,
            sigma_tilde_v2: sigma_v2 / (sigma_n2 * sigma_n2),
            pi0: 1.0 - pi1,
            pi1,
        })
    }

    /// Unit noise variances and equal priors.
    pub fn unit() -> Self {
        Self::new(1.0, 1.0, 0.5).expect("unit priors are valid")
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    pub fn sigma_v2(&self) -> f64 {
        self.sigma_v2
    }

    /// Fusion noise normalised by the squared sensing noise, `sigma_v2 / sigma_n2^2`.
    pub fn sigma_tilde_v2(&self) -> f64 {
        self.sigma_tilde_v2
    }

    pub fn sigma_tilde_v(&self) -> f64 {
        self.sigma_tilde_v2.sqrt()
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn pi1(&self) -> f64 {
        self.pi1
    }

    pub fn has_equal_priors(&self) -> bool {
        (self.pi0 - self.pi1).abs() <= 1e-12
    }
}

impl Default for NoisePriors {
    fn default() -> Self {
        Self::unit()
    }
}

/// Physical parameters of one secondary user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    /// Local received SNR (linear).
    pub gamma: f64,
    /// Magnitude of the user-to-fusion-center channel.
    pub h_mag: f64,
}

impl UserProfile {
    pub fn new(gamma: f64, h_mag: f64) -> Result<Self> {
        let user = Self { gamma, h_mag };
        user.validate()?;
        Ok(user)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be nonnegative, got {}", self.gamma)));
        }
        if !(self.h_mag >= 0.0 && self.h_mag.is_finite()) {
            return Err(invalid("h_mag", format!("must be nonnegative, got {}", self.h_mag)));
        }
        Ok(())
    }
}

/// Second moment of the local energy statistic for `kappa` samples.
pub fn xi_exact(user: &UserProfile, kappa: f64, np: &NoisePriors) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", format!("must be positive, got {kappa}")));
    }
    let g = user.gamma;
    let inv_k = 1.0 / kappa;
    let s4 = np.sigma_n2 * np.sigma_n2;
    Ok((1.0 + inv_k + np.pi1 * (g + 2.0 * (1.0 + inv_k)) * g) * s4)
}

/// Sample-count independent approximation of the second moment,
/// `(1 + 2 pi1 gamma) sigma_n^4`.
pub fn xi_approx(user: &UserProfile, np: &NoisePriors) -> f64 {
    (1.0 + 2.0 * np.pi1 * user.gamma) * np.sigma_n2 * np.sigma_n2
}

/// Budgets and per-unit costs of the sensing round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Processing cost per collected sample.
    pub c0: f64,
    /// Per-user second moment of the relayed statistic.
    pub xi: Vec<f64>,
    /// Total system budget.
    pub c_bar: f64,
    /// Transmit power budget used when samples are fixed.
    pub p_tot: f64,
    /// Per-user transmit power cap.
    pub p_max: f64,
    /// Per-user sample cap.
    pub kappa_max: u64,
    /// Fixed reporting and broadcast cost. Never optimised.
    pub c_rb: f64,
}

impl CostModel {
    /// Cost model with no individual caps. `xi` comes from [`xi_approx`].
    pub fn new(users: &[UserProfile], np: &NoisePriors, c0: f64, c_bar: f64) -> Result<Self> {
        let cm = Self {
            c0,
            xi: users.iter().map(|u| xi_approx(u, np)).collect(),
            c_bar,
            p_tot: c_bar,
            p_max: f64::INFINITY,
            kappa_max: u64::MAX,
            c_rb: 0.0,
        };
        cm.validate()?;
        Ok(cm)
    }

    pub fn with_caps(mut self, kappa_max: u64, p_max: f64) -> Result<Self> {
        self.kappa_max = kappa_max;
        self.p_max = p_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_p_tot(mut self, p_tot: f64) -> Result<Self> {
        self.p_tot = p_tot;
        self.validate()?;
        Ok(self)
    }

    /// Derives the transmit budget left after paying for fixed sample counts.
    pub fn with_fixed_samples(self, kappa: &[f64]) -> Result<Self> {
        if kappa.len() != self.xi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.xi.len(),
                found: kappa.len(),
            });
        }
        let p_tot = self.c_bar - self.c0 * kappa.iter().sum::<f64>();
        self.with_p_tot(p_tot)
    }

    pub fn n_users(&self) -> usize {
        self.xi.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(invalid("c0", format!("must be nonnegative, got {}", self.c0)));
        }
        if let Some(x) = self.xi.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(invalid("xi", format!("every entry must be positive, got {x}")));
        }
        for (name, v) in [("c_bar", self.c_bar), ("p_tot", self.p_tot), ("c_rb", self.c_rb)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.p_max >= 0.0) {
            return Err(invalid("p_max", format!("must be nonnegative, got {}", self.p_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    Relaxed,
    Integral,
}

/// Per-user sample counts and amplifier gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub kappa: Vec<f64>,
    pub g: Vec<f64>,
    pub mode: AllocationMode,
}

impl Allocation {
    pub fn new(kappa: Vec<f64>, g: Vec<f64>, mode: AllocationMode) -> Result<Self> {
        let alloc = Self { kappa, g, mode };
        alloc.validate()?;
        Ok(alloc)
    }

    pub fn zeros(n: usize, mode: AllocationMode) -> Self {
        Self {
            kappa: vec![0.0; n],
            g: vec![0.0; n],
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa.len() != self.g.len() {
            return Err(Error::DimensionMismatch {
                expected: self.kappa.len(),
                found: self.g.len(),
            });
        }
        if let Some(k) = self.kappa.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(invalid("kappa", format!("entries must be nonnegative, got {k}")));
        }
        if let Some(g) = self.g.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(invalid("g", format!("entries must be nonnegative, got {g}")));
        }
        if self.mode == AllocationMode::Integral {
            if let Some(k) = self.kappa.iter().find(|k| k.fract() != 0.0) {
                return Err(invalid("kappa", format!("integral allocation holds {k}")));
            }
        }
        Ok(())
    }

    /// Users that both sense and transmit.
    pub fn active_users(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.kappa[i] > 0.0 && self.g[i] > 0.0)
            .collect()
    }

    /// True when every user either senses and transmits, or does neither.
    pub fn sense_and_transmit_agree(&self) -> bool {
        self.kappa
            .iter()
            .zip(&self.g)
            .all(|(&k, &g)| (k > 0.0) == (g > 0.0))
    }
}

/// Sensing plus transmission cost, `sum(c0 kappa_i + xi_i g_i^2)`. Excludes `c_rb`.
pub fn system_cost(alloc: &Allocation, cm: &CostModel) -> Result<f64> {
    if alloc.len() != cm.n_users() || alloc.g.len() != cm.n_users() {
        return Err(Error::DimensionMismatch {
            expected: cm.n_users(),
            found: alloc.len(),
        });
    }
    Ok(alloc
        .kappa
        .iter()
        .zip(&alloc.g)
        .zip(&cm.xi)
        .map(|((k, g), xi)| cm.c0 * k + xi * g * g)
        .sum())
}

/// On-disk description of a network. SNRs are in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub sigma_n2: f64,
    pub sigma_v2: f64,
    pub pi1: f64,
    pub users: Vec<UserSpec>,
    pub cost: CostSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub gamma_db: f64,
    pub h_mag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub c0: f64,
    pub c_bar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_max: Option<u64>,
}

/// A resolved network in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub priors: NoisePriors,
    pub users: Vec<UserProfile>,
    pub cost: CostModel,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn resolve(&self) -> Result<Network> {
        if self.users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }
        let priors = NoisePriors::new(self.sigma_n2, self.sigma_v2, self.pi1)?;
        let users = self
            .users
            .iter()
            .map(|u| UserProfile::new(snr_from_db(u.gamma_db), u.h_mag))
            .collect::<Result<Vec<_>>>()?;
        let mut cost = CostModel::new(&users, &priors, self.cost.c0, self.cost.c_bar)?;
        if let Some(p_max) = self.cost.p_max {
            cost.p_max = p_max;
        }
        if let Some(kappa_max) = self.cost.kappa_max {
            cost.kappa_max = kappa_max;
        }
        cost.validate()?;
        Ok(Network {
            priors,
            users,
            cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn user(gamma: f64) -> UserProfile {
        UserProfile::new(gamma, 1.0).unwrap()
    }

    #[test]
    fn db_conversions() {
        assert_eq!(snr_from_db(0.0), 1.0);
        assert_relative_eq!(snr_from_db(-10.0), 0.1, max_relative = 1e-15);
        // 10^(-0.8), evaluated with mpmath at 30 digits.
        assert_relative_eq!(snr_from_db(-8.0), 0.158_489_319_246_111_33, max_relative = 1e-15);
    }

    #[test]
    fn xi_exact_hand_values() {
        let np = NoisePriors::unit();
        assert_eq!(xi_exact(&user(0.0), 1.0, &np).unwrap(), 2.0);
        assert!((xi_exact(&user(0.0), 1e12, &np).unwrap() - 1.0).abs() < 1e-6);
        assert!(xi_exact(&user(0.1), 0.0, &np).is_err());
        assert!(xi_exact(&user(0.1), -3.0, &np).is_err());
    }

    #[test]
    fn xi_approx_hand_values() {
        let np = NoisePriors::unit();
        assert_eq!(xi_approx(&user(0.0), &np), 1.0);
        assert_relative_eq!(xi_approx(&user(0.1), &np), 1.1, max_relative = 1e-15);
        // The approximation drops the pi1 gamma^2 term and everything in 1/kappa.
        let gap = xi_exact(&user(0.1), 1e4, &np).unwrap() - xi_approx(&user(0.1), &np);
        assert!((gap - 0.005).abs() < 2e-4, "gap {gap}");
    }

    #[test]
    fn xi_exact_decreases_towards_limit() {
        let np = NoisePriors::new(1.7, 1.0, 0.5).unwrap();
        for &gamma in &[0.01, 0.1, 0.5] {
            let u = user(gamma);
            let mut prev = f64::INFINITY;
            for e in 0..=24 {
                let k = 10f64.powf(e as f64 / 2.0);
                let x = xi_exact(&u, k, &np).unwrap();
                assert!(x < prev);
                prev = x;
            }
            let limit = xi_exact(&u, 1e12, &np).unwrap() - xi_approx(&u, &np);
            let s4 = np.sigma_n2() * np.sigma_n2();
            assert_relative_eq!(limit, np.pi1() * gamma * gamma * s4, max_relative = 1e-6);
        }
    }

    #[test]
    fn system_cost_hand_values() {
        let np = NoisePriors::unit();
        let users = [user(0.0)];
        let cm = CostModel::new(&users, &np, 1.0, 100.0).unwrap();
        let zero = Allocation::zeros(1, AllocationMode::Relaxed);
        assert_eq!(system_cost(&zero, &cm).unwrap(), 0.0);
        let a = Allocation::new(vec![50.0], vec![50f64.sqrt()], AllocationMode::Relaxed).unwrap();
        assert_relative_eq!(system_cost(&a, &cm).unwrap(), 100.0, max_relative = 1e-14);
        let wrong = Allocation::zeros(2, AllocationMode::Relaxed);
        assert!(matches!(
            system_cost(&wrong, &cm),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn priors_and_allocation_validation() {
        assert!(NoisePriors::new(0.0, 1.0, 0.5).is_err());
        assert!(NoisePriors::new(1.0, -1.0, 0.5).is_err());
        assert!(NoisePriors::new(1.0, 1.0, 1.5).is_err());
        let np = NoisePriors::new(2.0, 3.0, 0.25).unwrap();
        assert_eq!(np.sigma_tilde_v2(), 3.0 / 4.0);
        assert!((np.pi0() + np.pi1() - 1.0).abs() < 1e-12);

        assert!(Allocation::new(vec![1.5], vec![1.0], AllocationMode::Integral).is_err());
        assert!(Allocation::new(vec![-1.0], vec![1.0], AllocationMode::Relaxed).is_err());
        assert!(Allocation::new(vec![1.0], vec![1.0, 2.0], AllocationMode::Relaxed).is_err());
        let a = Allocation::new(vec![3.0, 0.0], vec![1.0, 0.0], AllocationMode::Integral).unwrap();
        assert!(a.sense_and_transmit_agree());
        assert_eq!(a.active_users(), vec![0]);
    }

    #[test]
    fn network_json_resolves_to_linear_units() {
        let text = r#"{
            "sigma_n2": 1.0, "sigma_v2": 2.0, "pi1": 0.5,
            "users": [{"gamma_db": -10.0, "h_mag": 1.5}, {"gamma_db": 0.0, "h_mag": 0.5}],
            "cost": {"c0": 1.0, "c_bar": 100.0, "p_max": 20.0, "kappa_max": 30}
        }"#;
        let net = NetworkSpec::from_json(text).unwrap().resolve().unwrap();
        assert_relative_eq!(net.users[0].gamma, 0.1, max_relative = 1e-15);
        assert_eq!(net.users[1].gamma, 1.0);
        assert_eq!(net.cost.kappa_max, 30);
        assert_eq!(net.cost.p_max, 20.0);
        assert_relative_eq!(net.cost.xi[1], 2.0, max_relative = 1e-15);
        assert_eq!(net.priors.sigma_tilde_v2(), 2.0);

        let bad = r#"{"sigma_n2": 1.0, "sigma_v2": 1.0, "pi1": 0.5, "users": [],
                      "cost": {"c0": 1.0, "c_bar": 1.0}}"#;
        assert!(NetworkSpec::from_json(bad).unwrap().resolve().is_err());
    }

    proptest! {
        #[test]
        fn db_round_trip(x in 1e-6f64..1e6) {
            prop_assert!((snr_from_db(db_from_snr(x)) - x).abs() <= 1e-12 * x);
        }

        #[test]
        fn system_cost_superposes(
            k1 in proptest::collection::vec(0.0f64..100.0, 3),
            k2 in proptest::collection::vec(0.0f64..100.0, 3),
            z1 in proptest::collection::vec(0.0f64..50.0, 3),
            z2 in proptest::collection::vec(0.0f64..50.0, 3),
            c0 in 0.1f64..3.0,
        ) {
            let users: Vec<_> = [0.05, 0.1, 0.2].iter().map(|&g| user(g)).collect();
            let cm = CostModel::new(&users, &NoisePriors::unit(), c0, 1e3).unwrap();
            let make = |k: &[f64], z: &[f64]| Allocation::new(
                k.to_vec(), z.iter().map(|z| z.sqrt()).collect(), AllocationMode::Relaxed).unwrap();
            let sum_k: Vec<f64> = k1.iter().zip(&k2).map(|(a, b)| a + b).collect();
            let sum_z: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
            let lhs = system_cost(&make(&sum_k, &sum_z), &cm).unwrap();
            let rhs = system_cost(&make(&k1, &z1), &cm).unwrap() + system_cost(&make(&k2, &z2), &cm).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
