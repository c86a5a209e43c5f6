//! Joint sample/gain design for a single active user.

use serde::Serialize;

use super::{allocation_error, check_dims, rho_ranking};
use crate::detector::{q_function, q_inverse};
use crate::error::{invalid, Result};
use crate::model::{Allocation, AllocationMode, CostModel, NoisePriors, UserProfile};

/// Relaxed and floor-rounded solutions of the budget-constrained joint problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointResult {
    pub active: usize,
    pub relaxed: Allocation,
    /// `None` when the budget cannot buy a single whole sample.
    pub integral: Option<Allocation>,
    pub pe_relaxed: f64,
    pub pe_integral: Option<f64>,
    /// `Q(sqrt(C_bar rho_max) / 2)`, which equals `pe_relaxed`.
    pub pe_closed_form: f64,
}

/// Budget split `(kappa, z)` that maximises one user's deflection at cost `budget`.
fn split(u: &UserProfile, xi: f64, c0: f64, sv: f64, budget: f64) -> (f64, f64) {
    let h = u.h_mag;
    let kappa = h * budget / (sv * (xi * c0).sqrt() + h * c0);
    let z = sv * budget / (sv * xi + h * (xi * c0).sqrt());
    (kappa, z)
}

fn check_joint(users: &[UserProfile], cm: &CostModel) -> Result<()> {
    check_dims(users, cm)?;
    if !(cm.c0 > 0.0) {
        return Err(invalid("c0", "must be positive for joint allocation"));
    }
    if !(cm.c_bar > 0.0) {
        return Err(invalid("c_bar", format!("must be positive, got {}", cm.c_bar)));
    }
    Ok(())
}

/// Optimal joint allocation under the system budget alone. All of the budget
/// goes to the user with the largest `rho`.
pub fn joint_scenario_a(users: &[UserProfile], cm: &CostModel, np: &NoisePriors) -> Result<JointResult> {
    check_joint(users, cm)?;
    let rank = rho_ranking(users, cm, np)?;
    let best = rank.best();
    let n = users.len();
    let (kappa, z) = split(&users[best], cm.xi[best], cm.c0, np.sigma_tilde_v(), cm.c_bar);
    let mut relaxed = Allocation::zeros(n, AllocationMode::Relaxed);
    relaxed.kappa[best] = kappa;
    relaxed.g[best] = z.sqrt();
    let integral = (kappa.floor() >= 1.0).then(|| {
        let mut a = relaxed.clone();
        a.kappa[best] = kappa.floor();
        a.mode = AllocationMode::Integral;
        a
    });
    Ok(JointResult {
        active: best,
        pe_relaxed: allocation_error(users, &relaxed, np),
        pe_integral: integral.as_ref().map(|a| allocation_error(users, a, np)),
        pe_closed_form: q_function(0.5 * (cm.c_bar * rank.rho[best]).sqrt()),
        relaxed,
        integral,
    })
}

/// Greedy allocation under per-user caps.
///
/// Users are visited by descending `rho`. A user is saturated at
/// `(kappa_max, sqrt(P_max / xi))` while that costs strictly less than the
/// remaining budget; the next user receives the floor-rounded single-user split
/// of what is left, clipped to the caps, and the walk stops. A split that floors
/// to zero samples leaves that user idle. Unspent budget after clipping is not
/// redistributed.
pub fn joint_scenario_b(users: &[UserProfile], cm: &CostModel, np: &NoisePriors) -> Result<Allocation> {
    check_joint(users, cm)?;
    if cm.kappa_max < 1 {
        return Err(invalid("kappa_max", "must be at least 1"));
    }
    if !(cm.p_max > 0.0) {
        return Err(invalid("p_max", format!("must be positive, got {}", cm.p_max)));
    }
    let rank = rho_ranking(users, cm, np)?;
    let sv = np.sigma_tilde_v();
    let kmax = cm.kappa_max as f64;
    let mut alloc = Allocation::zeros(users.len(), AllocationMode::Integral);
    let mut remaining = cm.c_bar;
    for &i in &rank.order {
        if rank.rho[i] == 0.0 {
            break;
        }
        let full = cm.c0 * kmax + cm.p_max;
        if full < remaining {
            alloc.kappa[i] = kmax;
            alloc.g[i] = (cm.p_max / cm.xi[i]).sqrt();
            remaining -= full;
            continue;
        }
        let (kappa, z) = split(&users[i], cm.xi[i], cm.c0, sv, remaining);
        let kappa = kappa.floor().min(kmax);
        if kappa >= 1.0 {
            alloc.kappa[i] = kappa;
            alloc.g[i] = z.min(cm.p_max / cm.xi[i]).sqrt();
        }
        break;
    }
    Ok(alloc)
}

/// Cheapest allocation that reaches a target error probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMinResult {
    pub active: usize,
    /// `4 Q^{-1}(P_target)^2`, the deflection the design must reach.
    pub epsilon: f64,
    pub relaxed: Allocation,
    /// Sample count rounded up, gain kept.
    pub integral: Allocation,
    pub cost_relaxed: f64,
    pub cost_integral: f64,
}

pub fn cost_min_scenario_a(
    users: &[UserProfile],
    p_e_target: f64,
    cm: &CostModel,
    np: &NoisePriors,
) -> Result<CostMinResult> {
    check_dims(users, cm)?;
    if !(p_e_target > 0.0 && p_e_target < 0.5) {
        return Err(invalid("p_e_target", format!("must lie in (0, 0.5), got {p_e_target}")));
    }
    if !(cm.c0 > 0.0) {
        return Err(invalid("c0", "must be positive for joint allocation"));
    }
    let rank = rho_ranking(users, cm, np)?;
    let best = rank.best();
    if rank.rho[best] == 0.0 {
        return Err(crate::error::Error::NoActiveUser);
    }
    let eps = 4.0 * q_inverse(p_e_target)?.powi(2);
    let u = users[best];
    let sv = np.sigma_tilde_v();
    let xi = cm.xi[best];
    let g2 = u.gamma * u.gamma;
    let kappa = eps / g2 * (1.0 + (xi / cm.c0).sqrt() * sv / u.h_mag);
    let z = eps * sv * sv / (g2 * u.h_mag * u.h_mag) * (1.0 + (cm.c0 / xi).sqrt() * u.h_mag / sv);
    let n = users.len();
    let mut relaxed = Allocation::zeros(n, AllocationMode::Relaxed);
    relaxed.kappa[best] = kappa;
    relaxed.g[best] = z.sqrt();
    let mut integral = relaxed.clone();
    integral.kappa[best] = kappa.ceil();
    integral.mode = AllocationMode::Integral;
    Ok(CostMinResult {
        active: best,
        epsilon: eps,
        cost_relaxed: cm.c0 * kappa + xi * z,
        cost_integral: cm.c0 * kappa.ceil() + xi * z,
        relaxed,
        integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{convex_oracle_joint, minlp_oracle, JointConstraints};
    use crate::model::system_cost;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_cm(users: &[UserProfile], c_bar: f64) -> CostModel {
        let mut cm = CostModel::new(users, &NoisePriors::unit(), 1.0, c_bar).unwrap();
        cm.xi = vec![1.0; users.len()];
        cm
    }

    #[test]
    fn single_user_hand_example() {
        let users = [UserProfile::new(0.0, 1.0).unwrap()];
        let np = NoisePriors::unit();
        let cm = CostModel::new(&users, &np, 1.0, 100.0).unwrap();
        assert_eq!(cm.xi[0], 1.0);
        let r = joint_scenario_a(&users, &cm, &np).unwrap();
        assert_relative_eq!(r.relaxed.kappa[0], 50.0, max_relative = 1e-15);
        assert_relative_eq!(r.relaxed.g[0], 50f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(system_cost(&r.relaxed, &cm).unwrap(), 100.0, max_relative = 1e-15);
    }

    #[test]
    fn second_user_idles_and_tiny_budget_is_infeasible() {
        let np = NoisePriors::unit();
        let users = [UserProfile::new(0.2, 1.5).unwrap(), UserProfile::new(0.1, 0.5).unwrap()];
        let cm = CostModel::new(&users, &np, 1.0, 500.0).unwrap();
        let r = joint_scenario_a(&users, &cm, &np).unwrap();
        assert_eq!(r.active, 0);
        assert_eq!((r.relaxed.kappa[1], r.relaxed.g[1]), (0.0, 0.0));
        assert!(r.integral.is_some());
        let cm = CostModel::new(&users, &np, 1.0, 1.5).unwrap();
        let r = joint_scenario_a(&users, &cm, &np).unwrap();
        assert!(r.integral.is_none() && r.pe_integral.is_none());
    }

    #[test]
    fn greedy_trace_on_four_users() {
        let np = NoisePriors::unit();
        let users: Vec<_> = [(0.4, 1.0), (0.3, 1.0), (0.2, 1.0), (0.1, 1.0)]
            .iter()
            .map(|&(g, h)| UserProfile::new(g, h).unwrap())
            .collect();
        let unit = 10.0 + 5.0;
        let caps = |c_bar| unit_cm(&users, c_bar).with_caps(10, 5.0).unwrap();
        // Three full shares plus a sliver: three users saturate, the fourth floors to zero.
        let a = joint_scenario_b(&users, &caps(3.0 * unit + 1e-6), &np).unwrap();
        assert_eq!(a.kappa, vec![10.0, 10.0, 10.0, 0.0]);
        assert_eq!(a.g[3], 0.0);
        // Two full shares plus most of a third: the third user is clipped.
        let a = joint_scenario_b(&users, &caps(2.0 * unit + 14.0), &np).unwrap();
        assert_eq!(&a.kappa[..2], &[10.0, 10.0]);
        assert!(a.kappa[2] >= 1.0 && a.kappa[2] <= 10.0 && a.g[2] > 0.0);
        assert_eq!(a.kappa[3], 0.0);
        // Below one share it is the single-user split, clipped.
        let a = joint_scenario_b(&users, &caps(12.0), &np).unwrap();
        let r = joint_scenario_a(&users, &unit_cm(&users, 12.0), &np).unwrap();
        assert_eq!(a.kappa[0], r.relaxed.kappa[0].floor().min(10.0));
        assert_relative_eq!(a.g[0] * a.g[0], (r.relaxed.g[0].powi(2)).min(5.0), max_relative = 1e-12);
    }

    #[test]
    fn cost_min_worked_example() {
        let np = NoisePriors::unit();
        let users = [UserProfile::new(0.1, 1.0).unwrap()];
        let cm = unit_cm(&users, 1.0);
        let r = cost_min_scenario_a(&users, q_function(1.0), &cm, &np).unwrap();
        assert_relative_eq!(r.epsilon, 4.0, max_relative = 1e-12);
        assert_relative_eq!(r.relaxed.kappa[0], 800.0, max_relative = 1e-12);
        assert_relative_eq!(r.relaxed.g[0].powi(2), 800.0, max_relative = 1e-12);
        assert!((allocation_error(&users, &r.relaxed, &np) - q_function(1.0)).abs() < 1e-12);
        assert!(cost_min_scenario_a(&users, 0.5, &cm, &np).is_err());
        assert!(cost_min_scenario_a(&users, 0.0, &cm, &np).is_err());
        let near_half = cost_min_scenario_a(&users, 0.499_999, &cm, &np).unwrap();
        assert!(near_half.cost_relaxed < 1e-6);
    }

    #[test]
    fn minlp_single_user_near_relaxed() {
        let np = NoisePriors::unit();
        let users = [UserProfile::new(0.3, 1.2).unwrap()];
        let cm = CostModel::new(&users, &np, 1.0, 40.0).unwrap();
        let relaxed = joint_scenario_a(&users, &cm, &np).unwrap().relaxed.kappa[0];
        let m = minlp_oracle(&users, &cm, &np, 40).unwrap();
        assert!((m.kappa[0] - relaxed).abs() <= 1.0);
    }

    fn arb_users(max: usize) -> impl Strategy<Value = Vec<UserProfile>> {
        proptest::collection::vec(
            (0.01f64..0.5, 0.1f64..2.5).prop_map(|(g, h)| UserProfile::new(g, h).unwrap()),
            1..=max,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn closed_form_matches_convex_oracle(users in arb_users(6), c_bar in 10.0f64..5000.0, c0 in 0.2f64..3.0) {
            let np = NoisePriors::new(1.0, 1.3, 0.5).unwrap();
            let cm = CostModel::new(&users, &np, c0, c_bar).unwrap();
            let r = joint_scenario_a(&users, &cm, &np).unwrap();
            let o = convex_oracle_joint(&users, &cm, &np, JointConstraints::ScenarioA).unwrap();
            let d = |a: &Allocation| super::super::allocation_deflection(&users, a, &np);
            let (mine, oracle) = (d(&r.relaxed), d(&o));
            prop_assert!((mine - oracle).abs() <= 1e-6 * mine, "{mine} vs {oracle}");
            prop_assert!((system_cost(&r.relaxed, &cm).unwrap() - c_bar).abs() <= 1e-9 * c_bar);
            prop_assert!((r.pe_relaxed - r.pe_closed_form).abs() <= 1e-12);
            prop_assert!(r.relaxed.sense_and_transmit_agree());
            // z = omega kappa with omega = sqrt(c0 s / (h^2 xi))
            let i = r.active;
            let omega = (c0 * np.sigma_tilde_v2() / (users[i].h_mag.powi(2) * cm.xi[i])).sqrt();
            prop_assert!((r.relaxed.g[i].powi(2) - omega * r.relaxed.kappa[i]).abs() <= 1e-9 * r.relaxed.g[i].powi(2));
        }

        #[test]
        fn caps_only_hurt(users in arb_users(5), c_bar in 50.0f64..5000.0, frac in 0.05f64..0.6) {
            let np = NoisePriors::unit();
            let cm = CostModel::new(&users, &np, 1.0, c_bar).unwrap()
                .with_caps(((frac * c_bar).floor() as u64).max(1), frac * c_bar).unwrap();
            let b = joint_scenario_b(&users, &cm, &np).unwrap();
            let a = joint_scenario_a(&users, &cm, &np).unwrap();
            prop_assert!(allocation_error(&users, &b, &np) >= a.pe_relaxed - 1e-15);
            prop_assert!(system_cost(&b, &cm).unwrap() <= c_bar * (1.0 + 1e-12));
            prop_assert!(b.sense_and_transmit_agree());
            // The capped relaxation bounds any integral capped allocation.
            let o = convex_oracle_joint(&users, &cm, &np, JointConstraints::ScenarioB).unwrap();
            let d = |a: &Allocation| super::super::allocation_deflection(&users, a, &np);
            prop_assert!(d(&b) <= d(&o) * (1.0 + 1e-9), "{} > {}", d(&b), d(&o));
        }

        #[test]
        fn cost_min_round_trip(users in arb_users(4), target in 0.01f64..0.4) {
            let np = NoisePriors::unit();
            let cm = CostModel::new(&users, &np, 1.0, 1.0).unwrap();
            let r = cost_min_scenario_a(&users, target, &cm, &np).unwrap();
            prop_assert!((allocation_error(&users, &r.relaxed, &np) - target).abs() <= 1e-9);
            prop_assert!(allocation_error(&users, &r.integral, &np) <= target + 1e-12);
            let back_cm = CostModel::new(&users, &np, 1.0, r.cost_relaxed).unwrap();
            let back = joint_scenario_a(&users, &back_cm, &np).unwrap();
            prop_assert_eq!(back.active, r.active);
            let i = r.active;
            prop_assert!((back.relaxed.kappa[i] - r.relaxed.kappa[i]).abs() <= 1e-6 * r.relaxed.kappa[i]);
            prop_assert!((back.relaxed.g[i] - r.relaxed.g[i]).abs() <= 1e-6 * r.relaxed.g[i]);
        }

        #[test]
        fn more_budget_never_hurts(users in arb_users(5), c_bar in 1.0f64..5000.0) {
            let np = NoisePriors::unit();
            let pe = |c| {
                let cm = CostModel::new(&users, &np, 1.0, c).unwrap();
                joint_scenario_a(&users, &cm, &np).unwrap().pe_relaxed
            };
            prop_assert!(pe(c_bar * 1.3) <= pe(c_bar));
        }
    }
}
