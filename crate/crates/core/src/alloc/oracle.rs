//! Numeric oracles. These share no code with the closed forms they certify
//! beyond the objective itself.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::waterfill::{gains_waterfill_a, WaterfillInputs};
use super::{allocation_deflection, check_dims};
use crate::error::{invalid, Error, Result};
use crate::model::{Allocation, AllocationMode, CostModel, NoisePriors, UserProfile};

/// Euclidean projection of `y` onto `{x : 0 <= x <= caps, sum x <= total}`.
pub fn project_capped_simplex(y: &[f64], caps: &[f64], total: f64) -> Vec<f64> {
    project_weighted(y, caps, total, &vec![1.0; y.len()])
}

/// Projection in the metric `sum (x - y)^2 / d`, i.e. `x = clamp(y - mu d, 0, caps)`.
fn project_weighted(y: &[f64], caps: &[f64], total: f64, d: &[f64]) -> Vec<f64> {
    let clip = |mu: f64| -> Vec<f64> {
        y.iter()
            .zip(caps)
            .zip(d)
            .map(|((&v, &c), &dk)| (v - mu * dk).clamp(0.0, c))
            .collect()
    };
    let x = clip(0.0);
    if x.iter().sum::<f64>() <= total {
        return x;
    }
    // sum clip(y - mu d) is nonincreasing in mu; bracket and bisect.
    let mut lo = 0.0;
    let mut hi = y
        .iter()
        .zip(d)
        .map(|(v, dk)| v / dk)
        .fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip(mid).iter().sum::<f64>() > total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.max(1e-300) {
            break;
        }
    }
    clip(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    /// Squared gains `z = g^2` per user.
    pub z: Vec<f64>,
    pub iterations: usize,
    /// Norm of the projected-gradient step at exit, in power units.
    pub stationarity: f64,
}

const GAINS_MAX_ITER: usize = 50_000;

/// Accelerated projected gradient on the gain problem in power variables
/// `p_i = xi_i z_i`: minimise `sum a b xi / (p + b xi)` over the capped simplex.
pub fn gains_oracle(w: &WaterfillInputs) -> Result<OracleOutcome> {
    let idx = &w.participants;
    let n = w.a.len();
    let mut z = vec![0.0; n];
    if idx.is_empty() || w.p_tot == 0.0 {
        return Ok(OracleOutcome { z, iterations: 0, stationarity: 0.0 });
    }
    let m = idx.len();
    let c: Vec<f64> = idx.iter().map(|&i| w.a[i] * w.b[i] * w.xi[i]).collect();
    let d: Vec<f64> = idx.iter().map(|&i| w.b[i] * w.xi[i]).collect();
    let caps = vec![w.p_max; m];
    let loss = |p: &[f64]| -> f64 { (0..m).map(|k| c[k] / (p[k] + d[k])).sum() };
    let grad = |p: &[f64]| -> Vec<f64> { (0..m).map(|k| -c[k] / (p[k] + d[k]).powi(2)).collect() };

    let mut x = project_capped_simplex(&vec![w.p_tot / m as f64; m], &caps, w.p_tot);
    let mut y = x.clone();
    let mut theta: f64 = 1.0;
    // Curvature at p = 0 bounds the Lipschitz constant from above.
    let lip = (0..m).map(|k| 2.0 * c[k] / d[k].powi(3)).fold(0.0, f64::max);
    let mut step = 1.0 / lip;
    let mut fx = loss(&x);
    let mut stat = f64::INFINITY;
    let mut iters = 0;
    while iters < GAINS_MAX_ITER {
        iters += 1;
        let gy = grad(&y);
        let fy = loss(&y);
        let mut next;
        loop {
            let trial: Vec<f64> = (0..m).map(|k| y[k] - step * gy[k]).collect();
            next = project_capped_simplex(&trial, &caps, w.p_tot);
            let diff: f64 = (0..m).map(|k| gy[k] * (next[k] - y[k])).sum();
            let sq: f64 = (0..m).map(|k| (next[k] - y[k]).powi(2)).sum();
            if loss(&next) <= fy + diff + sq / (2.0 * step) + 1e-15 * fy.abs() {
                break;
            }
            step *= 0.5;
        }
        let fnext = loss(&next);
        stat = (0..m).map(|k| (next[k] - y[k]).powi(2)).sum::<f64>().sqrt();
        if fnext > fx {
            // Adaptive restart drops the momentum.
            theta = 1.0;
            y = x.clone();
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let mom = (theta - 1.0) / theta_next;
        y = (0..m).map(|k| next[k] + mom * (next[k] - x[k])).collect();
        y = project_capped_simplex(&y, &caps, w.p_tot);
        x = next;
        fx = fnext;
        theta = theta_next;
        step *= 1.1;
        if stat <= 1e-14 * w.p_tot {
            break;
        }
    }
    for (k, &i) in idx.iter().enumerate() {
        z[i] = x[k] / w.xi[i];
    }
    Ok(OracleOutcome { z, iterations: iters, stationarity: stat })
}

/// Constraint set for [`convex_oracle_joint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JointConstraints {
    /// Only the system budget.
    ScenarioA,
    /// System budget plus the per-user caps in the cost model.
    ScenarioB,
}

/// Outer barrier rounds; each multiplies the barrier weight by `BARRIER_GROWTH`.
const BARRIER_ROUNDS: usize = 80;
const BARRIER_GROWTH: f64 = 8.0;
const NEWTON_MAX_ITER: usize = 200;

/// Log-barrier Newton method on the relaxed joint problem.
///
/// Works in cost units `u = c0 kappa` and `w = xi z`, where each user's deflection
/// `u w / (alpha u + beta w)` is jointly concave and the budget is a simplex.
/// Stops once the duality-gap bound falls below `1e-10` of the objective.
pub fn convex_oracle_joint(
    users: &[UserProfile],
    cm: &CostModel,
    np: &NoisePriors,
    constraints: JointConstraints,
) -> Result<Allocation> {
    check_dims(users, cm)?;
    if !(cm.c0 > 0.0) {
        return Err(invalid("c0", "must be positive for joint allocation"));
    }
    if !(cm.c_bar > 0.0) {
        return Err(invalid("c_bar", format!("must be positive, got {}", cm.c_bar)));
    }
    let n = users.len();
    let s2 = np.sigma_tilde_v2();
    let live: Vec<usize> = (0..n)
        .filter(|&i| users[i].gamma > 0.0 && users[i].h_mag > 0.0)
        .collect();
    if live.is_empty() {
        return Err(Error::NoActiveUser);
    }
    let m = live.len();
    let dim = 2 * m;
    let alpha: Vec<f64> = live
        .iter()
        .map(|&i| s2 * cm.xi[i] / (users[i].gamma * users[i].h_mag).powi(2))
        .collect();
    let beta: Vec<f64> = live.iter().map(|&i| cm.c0 / users[i].gamma.powi(2)).collect();
    let (cap_u, cap_w) = match constraints {
        JointConstraints::ScenarioA => (f64::INFINITY, f64::INFINITY),
        JointConstraints::ScenarioB => (cm.c0 * cm.kappa_max as f64, cm.p_max),
    };
    let caps: Vec<f64> = (0..dim).map(|k| if k < m { cap_u } else { cap_w }).collect();
    let n_con = (dim + 1 + caps.iter().filter(|c| c.is_finite()).count()) as f64;

    let objective = |x: &[f64]| -> f64 {
        (0..m)
            .map(|k| x[k] * x[m + k] / (alpha[k] * x[k] + beta[k] * x[m + k]))
            .sum()
    };
    let feasible = |x: &[f64]| {
        x.iter().zip(&caps).all(|(&v, &c)| v > 0.0 && v < c) && x.iter().sum::<f64>() < cm.c_bar
    };
    // t F(x) + sum of log slacks; only called on feasible points.
    let merit = |x: &[f64], t: f64| -> f64 {
        let slack = cm.c_bar - x.iter().sum::<f64>();
        let caps_term: f64 = x
            .iter()
            .zip(&caps)
            .filter(|(_, c)| c.is_finite())
            .map(|(v, c)| (c - v).ln())
            .sum();
        t * objective(x) + x.iter().map(|v| v.ln()).sum::<f64>() + slack.ln() + caps_term
    };

    let mut x: Vec<f64> = caps
        .iter()
        .map(|&c| (cm.c_bar / (2 * dim) as f64).min(0.5 * c))
        .collect();
    if !feasible(&x) {
        return Err(invalid("p_max", "caps leave no interior point"));
    }
    let mut t = n_con / objective(&x);
    for _ in 0..BARRIER_ROUNDS {
        for _ in 0..NEWTON_MAX_ITER {
            let slack = cm.c_bar - x.iter().sum::<f64>();
            let mut g = DVector::from_element(dim, -1.0 / slack);
            let mut h = DMatrix::from_element(dim, dim, 1.0 / (slack * slack));
            for k in 0..dim {
                g[k] += 1.0 / x[k];
                h[(k, k)] += 1.0 / (x[k] * x[k]);
                if caps[k].is_finite() {
                    let r = caps[k] - x[k];
                    g[k] -= 1.0 / r;
                    h[(k, k)] += 1.0 / (r * r);
                }
            }
            // h holds the negated Hessian.
            for k in 0..m {
                let (u, w) = (x[k], x[m + k]);
                let den = alpha[k] * u + beta[k] * w;
                let c = 2.0 * t * alpha[k] * beta[k] / den.powi(3);
                g[k] += t * beta[k] * w * w / (den * den);
                g[m + k] += t * alpha[k] * u * u / (den * den);
                h[(k, k)] += c * w * w;
                h[(m + k, m + k)] += c * u * u;
                h[(k, m + k)] -= c * u * w;
                h[(m + k, k)] -= c * u * w;
            }
            let Some(chol) = h.cholesky() else {
                return Err(Error::Numerical("joint oracle Newton system is not positive definite".into()));
            };
            let step = chol.solve(&g);
            let decrement = g.dot(&step);
            if decrement <= 1e-14 {
                break;
            }
            let base = merit(&x, t);
            let mut s = 1.0;
            let trial = loop {
                let y: Vec<f64> = (0..dim).map(|k| x[k] + s * step[k]).collect();
                if feasible(&y) && merit(&y, t) >= base + 0.25 * s * decrement {
                    break Some(y);
                }
                s *= 0.5;
                if s < 1e-12 {
                    break None;
                }
            };
            match trial {
                Some(y) => x = y,
                // Merit differences are below rounding; the centre is as good as it gets.
                None => break,
            }
        }
        if n_con / t <= 1e-10 * objective(&x) {
            break;
        }
        t *= BARRIER_GROWTH;
    }
    let mut alloc = Allocation::zeros(n, AllocationMode::Relaxed);
    for (k, &i) in live.iter().enumerate() {
        alloc.kappa[i] = x[k] / cm.c0;
        alloc.g[i] = (x[m + k] / cm.xi[i]).sqrt();
    }
    Ok(alloc)
}

/// Largest number of sample vectors [`minlp_oracle`] will enumerate.
const MINLP_MAX_POINTS: u128 = 50_000_000;

/// Deflection, sample counts and gains of an enumerated point.
type Candidate = (f64, Vec<f64>, Vec<f64>);

/// Exhaustive search over integer sample counts in `0..=kappa_bound`, each
/// completed by optimal water-filled gains on the leftover budget.
///
/// Returns the best allocation, ties broken by the lexicographically smallest
/// sample vector. Deterministic under any rayon pool size.
pub fn minlp_oracle(
    users: &[UserProfile],
    cm: &CostModel,
    np: &NoisePriors,
    kappa_bound: u64,
) -> Result<Allocation> {
    check_dims(users, cm)?;
    if !(cm.c0 > 0.0) {
        return Err(invalid("c0", "must be positive for joint allocation"));
    }
    let n = users.len();
    let base = kappa_bound as u128 + 1;
    let points = base.checked_pow(n as u32).unwrap_or(u128::MAX);
    if points > MINLP_MAX_POINTS {
        return Err(invalid(
            "kappa_bound",
            format!("{points} sample vectors exceed the enumeration limit"),
        ));
    }
    let evaluate = |kappa: &[f64]| -> Result<Option<(f64, Vec<f64>)>> {
        let spent: f64 = cm.c0 * kappa.iter().sum::<f64>();
        if spent > cm.c_bar || kappa.iter().all(|&k| k == 0.0) {
            return Ok(None);
        }
        let (g, _) = gains_waterfill_a(users, kappa, cm.c_bar - spent, np, cm)?;
        let alloc = Allocation {
            kappa: kappa.to_vec(),
            g: g.clone(),
            mode: AllocationMode::Integral,
        };
        Ok(Some((allocation_deflection(users, &alloc, np), g)))
    };
    // Split on the first coordinate; each task walks the rest in lexicographic order.
    let heads: Vec<u64> = (0..=kappa_bound).collect();
    let partial: Vec<Result<Option<Candidate>>> = heads
        .par_iter()
        .map(|&head| {
            let mut best: Option<Candidate> = None;
            let mut kappa = vec![0u64; n];
            kappa[0] = head;
            loop {
                let kf: Vec<f64> = kappa.iter().map(|&k| k as f64).collect();
                if let Some((score, g)) = evaluate(&kf)? {
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, kf, g));
                    }
                }
                // Odometer over coordinates 1..n.
                let mut pos = n;
                loop {
                    if pos == 1 {
                        return Ok(best);
                    }
                    pos -= 1;
                    if kappa[pos] < kappa_bound {
                        kappa[pos] += 1;
                        break;
                    }
                    kappa[pos] = 0;
                }
            }
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for p in partial {
        if let Some(cand) = p? {
            if best.as_ref().is_none_or(|b| cand.0 > b.0) {
                best = Some(cand);
            }
        }
    }
    let (_, kappa, g) = best.ok_or_else(|| {
        invalid("c_bar", "budget cannot pay for a single sample")
    })?;
    Ok(Allocation {
        kappa,
        g,
        mode: AllocationMode::Integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_hand_cases() {
        let caps = [f64::INFINITY; 3];
        assert_eq!(project_capped_simplex(&[0.2, 0.3, -1.0], &caps, 1.0), vec![0.2, 0.3, 0.0]);
        let x = project_capped_simplex(&[1.0, 1.0, 1.0], &caps, 1.5);
        for v in x {
            assert_relative_eq!(v, 0.5, max_relative = 1e-12);
        }
        let x = project_capped_simplex(&[5.0, 1.0], &[2.0, 2.0], 2.5);
        assert_relative_eq!(x[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(x[1], 0.5, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(
            y in proptest::collection::vec(-5.0f64..5.0, 1..8),
            cap in 0.1f64..3.0,
            total in 0.1f64..6.0,
        ) {
            let caps = vec![cap; y.len()];
            let x = project_capped_simplex(&y, &caps, total);
            prop_assert!(x.iter().sum::<f64>() <= total * (1.0 + 1e-12));
            prop_assert!(x.iter().all(|v| *v >= 0.0 && *v <= cap));
            // No feasible perturbation along pairwise transfers gets closer to y.
            let dist = |x: &[f64]| x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let d0 = dist(&x);
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if i == j { continue; }
                    let mut t = x.clone();
                    let e = 1e-4_f64.min(t[j]).min(cap - t[i]);
                    if e <= 0.0 { continue; }
                    t[i] += e;
                    t[j] -= e;
                    prop_assert!(dist(&t) >= d0 - 1e-12);
                }
            }
        }
    }
}
