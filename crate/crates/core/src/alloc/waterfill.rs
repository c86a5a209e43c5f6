//! Amplifier gains for fixed sample counts.
//!
//! With `z_i = g_i^2`, `a_i = kappa_i gamma_i^2` and `b_i = kappa_i sigma_v~^2 / |h_i|^2`
//! the fused deflection is `sum a_i z_i / (z_i + b_i)`. Maximising it under
//! `sum xi_i z_i <= P` gives `z_i = [sqrt(a_i b_i / (xi_i lambda)) - b_i]^+`, and the
//! users left out are exactly those with the largest `beta_i = sqrt(b_i xi_i / a_i)`.

use serde::Serialize;

use super::check_dims;
use crate::error::{invalid, Error, Result};
use crate::model::{CostModel, NoisePriors, UserProfile};

/// Per-user water-filling coefficients. Users with `a = 0` or `|h| = 0` cannot
/// contribute and are left out of `participants`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillInputs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub xi: Vec<f64>,
    pub beta: Vec<f64>,
    /// `(P_max + b xi) / sqrt(a b xi)`; infinite when there is no cap.
    pub beta_tilde: Vec<f64>,
    pub participants: Vec<usize>,
    pub p_tot: f64,
    pub p_max: f64,
}

impl WaterfillInputs {
    pub fn new(
        users: &[UserProfile],
        kappa: &[f64],
        p_tot: f64,
        p_max: f64,
        np: &NoisePriors,
        cm: &CostModel,
    ) -> Result<Self> {
        check_dims(users, cm)?;
        if kappa.len() != users.len() {
            return Err(Error::DimensionMismatch {
                expected: users.len(),
                found: kappa.len(),
            });
        }
        if !(p_tot >= 0.0 && p_tot.is_finite()) {
            return Err(invalid("p_tot", format!("must be nonnegative, got {p_tot}")));
        }
        if !(p_max > 0.0) {
            return Err(invalid("p_max", format!("must be positive, got {p_max}")));
        }
        if let Some(k) = kappa.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(invalid("kappa", format!("entries must be nonnegative, got {k}")));
        }
        let s2 = np.sigma_tilde_v2();
        let n = users.len();
        let mut w = Self {
            a: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            xi: cm.xi.clone(),
            beta: Vec::with_capacity(n),
            beta_tilde: Vec::with_capacity(n),
            participants: Vec::new(),
            p_tot,
            p_max,
        };
        for (i, (u, &k)) in users.iter().zip(kappa).enumerate() {
            let a = k * u.gamma * u.gamma;
            let b = k * s2 / (u.h_mag * u.h_mag);
            let xi = cm.xi[i];
            let ok = a > 0.0 && b.is_finite();
            let root = (a * b * xi).sqrt();
            w.a.push(a);
            w.b.push(b);
            w.beta.push(if ok { (b * xi / a).sqrt() } else { f64::INFINITY });
            w.beta_tilde.push(if ok { (p_max + b * xi) / root } else { f64::INFINITY });
            if ok {
                w.participants.push(i);
            }
        }
        Ok(w)
    }

    fn root(&self, i: usize) -> f64 {
        (self.a[i] * self.b[i] * self.xi[i]).sqrt()
    }

    fn bxi(&self, i: usize) -> f64 {
        self.b[i] * self.xi[i]
    }

    /// Deflection `sum a z / (z + b)` for gains `z = g^2`.
    pub fn deflection(&self, z: &[f64]) -> f64 {
        self.participants
            .iter()
            .map(|&i| self.a[i] * z[i] / (z[i] + self.b[i]))
            .sum()
    }

    /// Loss `sum a b / (z + b)` minimised by the water-filling rules.
    pub fn loss(&self, z: &[f64]) -> f64 {
        self.participants
            .iter()
            .map(|&i| self.a[i] * self.b[i] / (z[i] + self.b[i]))
            .sum()
    }
}

/// Active sets, multipliers and crossing tests behind a water-filling solution.
///
/// Indices refer to the original user order. `f_values[k]` is the test value
/// at the `k`-th user in ascending `beta`; `f_tilde_values[k]` the same for the
/// capped scan in ascending `beta_tilde`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WaterfillDiagnostics {
    /// Users transmitting below the cap, chosen by the uncapped water level.
    pub s0: Vec<usize>,
    /// Users transmitting exactly at the cap.
    pub s1: Vec<usize>,
    /// Users transmitting strictly inside `(0, P_max)`.
    pub s2: Vec<usize>,
    pub lambda0_sqrt: f64,
    pub eta: f64,
    pub beta_order: Vec<usize>,
    pub beta_tilde_order: Vec<usize>,
    pub f_values: Vec<f64>,
    pub f_tilde_values: Vec<f64>,
}

fn sorted_by(keys: &[f64], subset: &[usize]) -> Vec<usize> {
    let mut order = subset.to_vec();
    order.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]));
    order
}

/// Uncapped water-filling over `subset` with budget `p`, writing `z` in place.
fn fill(w: &WaterfillInputs, subset: &[usize], p: f64, z: &mut [f64], d: &mut WaterfillDiagnostics) {
    let order = sorted_by(&w.beta, subset);
    let mut num = 0.0;
    let mut den = p;
    let mut cut = order.len();
    d.f_values.clear();
    for (k, &i) in order.iter().enumerate() {
        num += w.root(i);
        den += w.bxi(i);
        let f = w.beta[i] * num / den;
        d.f_values.push(f);
        if f >= 1.0 && cut == order.len() {
            cut = k;
        }
    }
    let active = &order[..cut];
    let num: f64 = active.iter().map(|&i| w.root(i)).sum();
    let den: f64 = p + active.iter().map(|&i| w.bxi(i)).sum::<f64>();
    let lam = num / den;
    for &i in active {
        // sqrt(a b / (xi lambda)) - b, written with the power-domain root.
        z[i] = ((w.root(i) / lam - w.bxi(i)) / w.xi[i]).max(0.0);
    }
    d.s0 = active.to_vec();
    d.s0.sort_unstable();
    d.beta_order = order;
    d.lambda0_sqrt = lam;
}

fn finish(z: &[f64], np: &NoisePriors, d: &mut WaterfillDiagnostics) -> Vec<f64> {
    d.eta = if d.lambda0_sqrt > 0.0 {
        1.0 / (d.lambda0_sqrt * np.sigma_tilde_v())
    } else {
        0.0
    };
    d.s2 = (0..z.len())
        .filter(|&i| z[i] > 0.0 && !d.s1.contains(&i))
        .collect();
    z.iter().map(|z| z.sqrt()).collect()
}

/// Optimal gains for fixed sample counts under a total power budget.
pub fn gains_waterfill_a(
    users: &[UserProfile],
    kappa_fixed: &[f64],
    p_tot: f64,
    np: &NoisePriors,
    cm: &CostModel,
) -> Result<(Vec<f64>, WaterfillDiagnostics)> {
    let w = WaterfillInputs::new(users, kappa_fixed, p_tot, f64::INFINITY, np, cm)?;
    let mut z = vec![0.0; users.len()];
    let mut d = WaterfillDiagnostics::default();
    if p_tot > 0.0 && !w.participants.is_empty() {
        fill(&w, &w.participants, p_tot, &mut z, &mut d);
    }
    let g = finish(&z, np, &mut d);
    Ok((g, d))
}

/// Equal transmit power `P_tot / n` for every user.
pub fn gains_equal(xi: &[f64], p_tot: f64) -> Result<Vec<f64>> {
    check_budget(xi, p_tot)?;
    let n = xi.len() as f64;
    Ok(xi.iter().map(|x| (p_tot / (n * x)).sqrt()).collect())
}

/// Gains with `g_i^2` proportional to `gamma_i^2 |h_i|^2 / xi_i^2`, scaled to the budget.
pub fn gains_cauchy(users: &[UserProfile], xi: &[f64], p_tot: f64) -> Result<Vec<f64>> {
    check_budget(xi, p_tot)?;
    if users.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: users.len(),
            found: xi.len(),
        });
    }
    let score: Vec<f64> = users
        .iter()
        .map(|u| (u.gamma * u.h_mag).powi(2))
        .collect();
    let total: f64 = score.iter().zip(xi).map(|(s, x)| s / x).sum();
    if total == 0.0 {
        return Err(Error::NoActiveUser);
    }
    Ok(score
        .iter()
        .zip(xi)
        .map(|(s, x)| (s / (x * x) / total * p_tot).sqrt())
        .collect())
}

fn check_budget(xi: &[f64], p_tot: f64) -> Result<()> {
    if xi.is_empty() {
        return Err(invalid("users", "at least one user is required"));
    }
    if !(p_tot >= 0.0 && p_tot.is_finite()) {
        return Err(invalid("p_tot", format!("must be nonnegative, got {p_tot}")));
    }
    Ok(())
}

/// Optimal gains under a total budget and a per-user power cap.
///
/// Stage 1 scans users in ascending `beta_tilde` and caps every user whose
/// crossing value `f~(i)` stays below one. Stage 2 water-fills the rest with
/// whatever budget the capped users leave.
pub fn gains_waterfill_b(
    users: &[UserProfile],
    kappa_fixed: &[f64],
    p_tot: f64,
    p_max: f64,
    np: &NoisePriors,
    cm: &CostModel,
) -> Result<(Vec<f64>, WaterfillDiagnostics)> {
    let w = WaterfillInputs::new(users, kappa_fixed, p_tot, p_max, np, cm)?;
    let mut z = vec![0.0; users.len()];
    let mut d = WaterfillDiagnostics::default();
    if p_tot == 0.0 || w.participants.is_empty() {
        let g = finish(&z, np, &mut d);
        return Ok((g, d));
    }
    let order = sorted_by(&w.beta_tilde, &w.participants);
    let scan = ((p_tot / p_max).floor() as usize).min(order.len());
    let mut capped = 0;
    for i in 1..=scan {
        let bt = w.beta_tilde[order[i - 1]];
        let mut num = 0.0;
        let mut den = p_tot - i as f64 * p_max;
        for &m in &order[i..] {
            if w.beta[m] < bt {
                num += w.root(m);
                den += w.bxi(m);
            }
        }
        let f = if num == 0.0 { 0.0 } else { bt * num / den };
        d.f_tilde_values.push(f);
        if f >= 1.0 {
            break;
        }
        capped = i;
    }
    d.s1 = order[..capped].to_vec();
    for &i in &d.s1 {
        z[i] = p_max / w.xi[i];
    }
    d.s1.sort_unstable();
    d.beta_tilde_order = order.clone();
    let rest: Vec<usize> = order[capped..].to_vec();
    let remaining = p_tot - capped as f64 * p_max;
    if remaining > 0.0 && !rest.is_empty() {
        fill(&w, &rest, remaining, &mut z, &mut d);
    }
    let g = finish(&z, np, &mut d);
    Ok((g, d))
}
