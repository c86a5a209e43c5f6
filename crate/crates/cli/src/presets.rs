//! Built-in experiments at desk scale.

use coopsense::model::{CostSpec, NetworkSpec, UserSpec};

use crate::config::{
    Command, ExperimentConfig, FadingConfig, GainsConfig, JointConfig, Preset, Scale, SweepAxis,
    SweepVariable,
};

/// The six-user network used by the allocation presets.
pub const FIG_H: [f64; 6] = [1.56, 1.99, 0.37, 1.52, 0.39, 1.98];
pub const FIG_GAMMA_DB: [f64; 6] = [-8.86, -15.23, -7.21, -5.09, -10.00, -10.97];

fn six_users(c_bar: f64) -> NetworkSpec {
    NetworkSpec {
        sigma_n2: 1.0,
        sigma_v2: 1.0,
        pi1: 0.5,
        users: FIG_H
            .iter()
            .zip(FIG_GAMMA_DB)
            .map(|(&h_mag, gamma_db)| UserSpec { gamma_db, h_mag })
            .collect(),
        cost: CostSpec {
            c0: 1.0,
            c_bar,
            p_max: None,
            kappa_max: None,
        },
    }
}

fn base(command: Command, preset: Preset) -> ExperimentConfig {
    ExperimentConfig {
        command,
        preset,
        network: None,
        fading: None,
        gains: None,
        joint: JointConfig::default(),
        simulation: None,
        sweep: None,
        output: None,
        seed: 0,
        trials: 100_000,
    }
}

/// Fully resolved configuration for a preset; `None` for [`Preset::None`].
pub fn preset(p: Preset) -> Option<ExperimentConfig> {
    let mut c = base(Command::Sweep, p);
    match p {
        Preset::None => return None,
        Preset::Fig3 => {
            c.network = Some(NetworkSpec {
                users: Vec::new(),
                ..six_users(1.0)
            });
            c.fading = Some(FadingConfig {
                gamma_bar_db: -8.0,
                kappa: 100.0,
                n_users: 15,
                g_db: 0.0,
                tolerance: 1e-9,
            });
            c.sweep = Some(SweepAxis {
                variable: SweepVariable::GDb,
                from: -10.0,
                to: 20.0,
                points: 10,
                scale: Scale::Linear,
            });
        }
        Preset::Fig4 => {
            // The best user takes about 0.57 C of its budget in samples, so
            // C <= 50 keeps every floored count inside the enumeration bound.
            c.network = Some(six_users(50.0));
            c.sweep = Some(SweepAxis {
                variable: SweepVariable::CBar,
                from: 10.0,
                to: 50.0,
                points: 9,
                scale: Scale::Linear,
            });
        }
        Preset::Fig5 => {
            c.network = Some(six_users(1.0));
            c.gains = Some(GainsConfig {
                // 25 dB over unit fusion noise.
                p_tot: 10f64.powf(2.5),
                p_max_frac: 0.4,
                kappa_tot: 600.0,
            });
            c.sweep = Some(SweepAxis {
                variable: SweepVariable::KappaTot,
                from: 60.0,
                to: 6e6,
                points: 11,
                scale: Scale::Log,
            });
        }
    }
    Some(c)
}
