//! Resource allocation: joint sample/gain design under a system budget, gain
//! design for fixed sample counts, cost minimisation, and the numeric oracles
//! that certify them.

mod joint;
mod oracle;
mod waterfill;

pub use joint::{
    cost_min_scenario_a, joint_scenario_a, joint_scenario_b, CostMinResult, JointResult,
};
pub use oracle::{
    convex_oracle_joint, gains_oracle, minlp_oracle, project_capped_simplex, JointConstraints,
    OracleOutcome,
};
pub use waterfill::{
    gains_cauchy, gains_equal, gains_waterfill_a, gains_waterfill_b, WaterfillDiagnostics,
    WaterfillInputs,
};

use serde::Serialize;

use crate::detector::{q_function, user_deflection, LinkUser};
use crate::error::{Error, Result};
use crate::model::{Allocation, CostModel, NoisePriors, UserProfile};

/// Users ranked by their value per unit of system budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoRanking {
    /// `rho_i = gamma_i^2 |h_i|^2 / (sigma_v~ sqrt(xi_i) + |h_i| sqrt(c0))^2`.
    pub rho: Vec<f64>,
    /// Indices by descending `rho`, ties by index.
    pub order: Vec<usize>,
}

impl RhoRanking {
    pub fn best(&self) -> usize {
        self.order[0]
    }
}

pub fn rho_ranking(users: &[UserProfile], cm: &CostModel, np: &NoisePriors) -> Result<RhoRanking> {
    check_dims(users, cm)?;
    let sv = np.sigma_tilde_v();
    let sc0 = cm.c0.sqrt();
    let rho: Vec<f64> = users
        .iter()
        .zip(&cm.xi)
        .map(|(u, xi)| {
            let gh = u.gamma * u.h_mag;
            let d = sv * xi.sqrt() + u.h_mag * sc0;
            if gh == 0.0 {
                0.0
            } else {
                gh * gh / (d * d)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by(|&i, &j| rho[j].total_cmp(&rho[i]));
    Ok(RhoRanking { rho, order })
}

pub(crate) fn check_dims(users: &[UserProfile], cm: &CostModel) -> Result<()> {
    if users.is_empty() {
        return Err(crate::error::invalid("users", "at least one user is required"));
    }
    if users.len() != cm.n_users() {
        return Err(Error::DimensionMismatch {
            expected: users.len(),
            found: cm.n_users(),
        });
    }
    Ok(())
}

/// Sum under the square root of the fused error probability.
pub fn allocation_deflection(users: &[UserProfile], alloc: &Allocation, np: &NoisePriors) -> f64 {
    let s = np.sigma_tilde_v2();
    users
        .iter()
        .zip(alloc.kappa.iter().zip(&alloc.g))
        .map(|(u, (&kappa, &g))| {
            user_deflection(
                &LinkUser {
                    gamma: u.gamma,
                    h_mag: u.h_mag,
                    kappa,
                    g,
                },
                s,
            )
        })
        .sum()
}

/// Fused error probability of an allocation.
pub fn allocation_error(users: &[UserProfile], alloc: &Allocation, np: &NoisePriors) -> f64 {
    q_function(0.5 * allocation_deflection(users, alloc, np).sqrt())
}
