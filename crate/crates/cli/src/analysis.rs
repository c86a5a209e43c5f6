//! Row computations for each analysis.

use coopsense::alloc::{
    allocation_error, convex_oracle_joint, gains_cauchy, gains_equal, gains_waterfill_a,
    gains_waterfill_b, joint_scenario_a, joint_scenario_b, minlp_oracle, rho_ranking,
    JointConstraints,
};
use coopsense::detector::{error_probability, error_probability_kappa_inf, FusedLinkState};
use coopsense::fading::{avg_error, avg_error_upper_bound, ChannelEnvironment, EnvKind};
use coopsense::model::{
    snr_from_db, Allocation, AllocationMode, CostModel, CostSpec, Network, NoisePriors,
};
use coopsense::quadrature::QuadratureSpec;
use coopsense::simkit::{run_fusion_sim, SimSpec};
use coopsense::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Analysis, ExperimentConfig, FadingConfig, GainsConfig, JointConfig, SimulationConfig};

/// Numeric output of a run: one row per axis point.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub analysis: Analysis,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    /// Per-row details for the JSON sidecar.
    pub diagnostics: Vec<Value>,
}

pub const FADING_COLUMNS: [&str; 7] = ["g_db", "env1", "env2", "env3", "ub1", "ub2", "ub3"];
pub const JOINT_COLUMNS: [&str; 6] = [
    "c_bar",
    "pe_relaxed",
    "pe_floor",
    "pe_minlp_small",
    "pe_scenario_b",
    "pe_scenario_b_relaxed",
];
pub const GAINS_COLUMNS: [&str; 8] = [
    "kappa_tot",
    "pe_opt",
    "pe_sub",
    "pe_equ",
    "asymptote_opt",
    "asymptote_sub",
    "asymptote_equ",
    "pe_opt_b",
];
pub const SIM_COLUMNS: [&str; 8] = [
    "trials",
    "p_f",
    "p_m",
    "p_e",
    "stderr_e",
    "p_e_closed_form",
    "trials_h0",
    "trials_h1",
];

type Row = (Vec<f64>, Value);

fn unit_priors(config: &ExperimentConfig) -> Result<NoisePriors> {
    match &config.network {
        Some(n) => NoisePriors::new(n.sigma_n2, n.sigma_v2, n.pi1),
        None => Ok(NoisePriors::unit()),
    }
}

fn network(config: &ExperimentConfig) -> Result<Network> {
    config
        .network
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter {
            name: "network",
            reason: "missing".into(),
        })?
        .resolve()
}

pub fn fading_row(f: &FadingConfig, np: &NoisePriors, g_db: f64) -> Result<Row> {
    let quad = QuadratureSpec {
        abs_tol: f.tolerance,
        rel_tol: f.tolerance,
        ..QuadratureSpec::default()
    };
    let g = 10f64.powf(g_db / 20.0);
    let mut row = vec![g_db];
    let mut bounds = Vec::new();
    for kind in EnvKind::ALL {
        let env = ChannelEnvironment::new(kind, snr_from_db(f.gamma_bar_db))?;
        row.push(avg_error(env, g, f.kappa, f.n_users, np, &quad)?);
        bounds.push(avg_error_upper_bound(env, g, f.kappa, f.n_users, np, &quad)?);
    }
    row.extend(bounds);
    Ok((row, json!({ "g": g })))
}

/// `explicit` holds caps given in the network file; missing ones come from
/// the budget fractions in `j`.
pub fn joint_row(net: &Network, explicit: &CostSpec, j: &JointConfig, c_bar: f64) -> Result<Row> {
    let np = &net.priors;
    let users = &net.users;
    let cm = CostModel::new(users, np, net.cost.c0, c_bar)?;
    let a = joint_scenario_a(users, &cm, np)?;
    // A budget too small for one whole sample leaves nobody sensing.
    let pe_floor = a.pe_integral.unwrap_or(0.5);

    let rank = rho_ranking(users, &cm, np)?;
    let keep: Vec<usize> = rank.order.iter().copied().take(j.minlp_users).collect();
    let sub: Vec<_> = keep.iter().map(|&i| users[i]).collect();
    let sub_cm = CostModel::new(&sub, np, cm.c0, c_bar)?;
    let bound = j.minlp_kappa_bound.min((c_bar / cm.c0).floor() as u64);
    let minlp = minlp_oracle(&sub, &sub_cm, np, bound)?;
    let pe_minlp = allocation_error(&sub, &minlp, np);

    let whole = (c_bar / cm.c0).floor();
    let kappa_max = explicit
        .kappa_max
        .unwrap_or(((j.kappa_max_frac * whole).floor() as u64).max(1));
    let p_max = explicit.p_max.unwrap_or(j.p_max_frac * c_bar);
    let capped = cm.clone().with_caps(kappa_max, p_max)?;
    let b = joint_scenario_b(users, &capped, np)?;
    let b_relaxed = convex_oracle_joint(users, &capped, np, JointConstraints::ScenarioB)?;

    let row = vec![
        c_bar,
        a.pe_relaxed,
        pe_floor,
        pe_minlp,
        allocation_error(users, &b, np),
        allocation_error(users, &b_relaxed, np),
    ];
    let diag = json!({
        "active": a.active,
        "relaxed": a.relaxed,
        "integral": a.integral,
        "minlp_users": keep,
        "minlp": minlp,
        "minlp_kappa_bound": bound,
        "kappa_max": kappa_max,
        "p_max": p_max,
        "scenario_b": b,
    });
    Ok((row, diag))
}

pub fn gains_row(net: &Network, g: &GainsConfig, kappa_tot: f64) -> Result<Row> {
    let np = &net.priors;
    let users = &net.users;
    let n = users.len();
    let per_user = (kappa_tot / n as f64).floor();
    if per_user < 1.0 {
        return Err(Error::InvalidParameter {
            name: "kappa_tot",
            reason: format!("{kappa_tot} samples leave some of the {n} users with none"),
        });
    }
    let kappa = vec![per_user; n];
    let cm = CostModel::new(users, np, net.cost.c0, net.cost.c_bar)?.with_p_tot(g.p_tot)?;
    let p_max = g.p_max_frac * g.p_tot;
    let (opt, diag_a) = gains_waterfill_a(users, &kappa, g.p_tot, np, &cm)?;
    let (opt_b, diag_b) = gains_waterfill_b(users, &kappa, g.p_tot, p_max, np, &cm)?;
    let sub = gains_cauchy(users, &cm.xi, g.p_tot)?;
    let equ = gains_equal(&cm.xi, g.p_tot)?;
    let pe = |gains: &[f64]| -> Result<f64> {
        let alloc = Allocation::new(kappa.clone(), gains.to_vec(), AllocationMode::Integral)?;
        Ok(allocation_error(users, &alloc, np))
    };
    let row = vec![
        kappa_tot,
        pe(&opt)?,
        pe(&sub)?,
        pe(&equ)?,
        error_probability_kappa_inf(&opt, users, np),
        error_probability_kappa_inf(&sub, users, np),
        error_probability_kappa_inf(&equ, users, np),
        pe(&opt_b)?,
    ];
    let diag = json!({
        "kappa_per_user": per_user,
        "p_max": p_max,
        "g_opt": opt,
        "g_opt_b": opt_b,
        "waterfill_a": diag_a,
        "waterfill_b": diag_b,
    });
    Ok((row, diag))
}

pub fn simulation_row(net: &Network, s: &SimulationConfig, trials: u64, seed: u64) -> Result<Row> {
    let alloc = Allocation::new(s.kappa.clone(), s.g.clone(), AllocationMode::Relaxed)?;
    let spec = SimSpec {
        hypothesis_mix: s.hypothesis_mix,
        ..SimSpec::new(trials, seed, s.mode)
    };
    let r = run_fusion_sim(&net.users, &alloc, &net.priors, &spec)?;
    let closed = error_probability(&FusedLinkState::from_allocation(&net.users, &alloc, &net.priors)?);
    let row = vec![
        trials as f64,
        r.p_f.unwrap_or(f64::NAN),
        r.p_m.unwrap_or(f64::NAN),
        r.p_e,
        r.stderr_e,
        closed,
        r.trials_h0 as f64,
        r.trials_h1 as f64,
    ];
    Ok((row, json!({ "seed": seed, "mode": s.mode, "fusion_noise": spec.fusion_noise })))
}

/// Runs a validated config. Axis points are evaluated in parallel and
/// returned in axis order.
pub fn run_analysis(config: &ExperimentConfig) -> Result<Table> {
    let analysis = config.analysis().expect("validated config has an analysis");
    let axis = config.sweep.map(|s| s.values());
    let (columns, results): (Vec<&'static str>, Vec<Result<Row>>) = match analysis {
        Analysis::Fading => {
            let f = config.fading.expect("validated");
            let np = unit_priors(config)?;
            let points = axis.unwrap_or_else(|| vec![f.g_db]);
            (
                FADING_COLUMNS.to_vec(),
                points.par_iter().map(|&x| fading_row(&f, &np, x)).collect(),
            )
        }
        Analysis::Joint => {
            let net = network(config)?;
            let explicit = config.network.as_ref().expect("validated").cost;
            let points = axis.unwrap_or_else(|| vec![net.cost.c_bar]);
            (
                JOINT_COLUMNS.to_vec(),
                points
                    .par_iter()
                    .map(|&x| joint_row(&net, &explicit, &config.joint, x))
                    .collect(),
            )
        }
        Analysis::Gains => {
            let net = network(config)?;
            let g = config.gains.expect("validated");
            let points = axis.unwrap_or_else(|| vec![g.kappa_tot]);
            (
                GAINS_COLUMNS.to_vec(),
                points.par_iter().map(|&x| gains_row(&net, &g, x)).collect(),
            )
        }
        Analysis::Simulation => {
            let net = network(config)?;
            let s = config.simulation.as_ref().expect("validated");
            (
                SIM_COLUMNS.to_vec(),
                vec![simulation_row(&net, s, config.trials, config.seed)],
            )
        }
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    for r in results {
        let (row, diag) = r?;
        rows.push(row);
        diagnostics.push(diag);
    }
    Ok(Table {
        analysis,
        columns,
        rows,
        diagnostics,
    })
}
