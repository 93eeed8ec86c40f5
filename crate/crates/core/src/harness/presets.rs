//! Named experiment configurations with the published learning rates.

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub struct Preset {
    pub name: &'static str,
    pub command: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "bandit-grad",
        command: "grad-compare",
        description: "one-step Gaussian bandit, r(a) = a, MC vs BQ at M = 10 and 100",
        text: "\
experiment = bandit-grad
env = bandit-linear
estimators = mc, bq1, bq2
M = 10, 100
repetitions = 1000
fisher = analytic
",
    },
    Preset {
        name: "lqr-grad",
        command: "grad-compare",
        description: "LQR at (gain, std) = (-0.2, 1), MC vs both BQ models",
        text: "\
experiment = lqr-grad
env = lqr
theta0 = -0.2, 1
estimators = mc, bq1, bq2, bq1-sparse, bq2-sparse
M = 5, 10, 20, 40, 80
repetitions = 1000
fisher = analytic
tau = 0.01
",
    },
    Preset {
        name: "lqr-opt",
        command: "optimize",
        description: "LQR policy optimization with squashed parameters, 100 updates",
        text: "\
experiment = lqr-opt
env = lqr-squashed
theta0 = random
algorithms = mcpg, bpg, bpng, bpg-var
M = 20
repetitions = 1000
updates = 100
eval_every = 10
fisher = analytic
model = model1
tau = 0.01
schedule = lqr
schedule.bpng = constant
beta.mcpg@5 = 0.01, 0.05
beta.mcpg@10 = 0.05, 0.05
beta.mcpg@20 = 0.05, 0.10
beta.mcpg@40 = 0.05, 0.10
beta.bpg@5 = 0.01, 0.05
beta.bpg@10 = 0.07, 0.10
beta.bpg@20 = 0.15, 0.15
beta.bpg@40 = 0.10, 0.30
beta.bpng@5 = 0.010, 0.005
beta.bpng@10 = 0.010, 0.005
beta.bpng@20 = 0.015, 0.005
beta.bpng@40 = 0.015, 0.005
beta.bpg-var@5 = 0.05, 0.05
beta.bpg-var@10 = 0.10, 0.10
beta.bpg-var@20 = 0.10, 0.15
beta.bpg-var@40 = 0.15, 0.30
",
    },
    Preset {
        name: "walk-grad",
        command: "grad-compare",
        description: "10-state random walk at right-probability 0.82, MC vs BQ vs BAC",
        text: "\
experiment = walk-grad
env = walk
theta0 = 1.5163474893680884
estimators = mc, bq1, bac
M = 5, 10, 25, 50, 100
repetitions = 1000
fisher = g-est
fisher.bq1 = mc
gptd_sigma2 = 1
state_width = 3
fisher_weight = 0.01
tau = 0.0001
",
    },
    Preset {
        name: "walk-opt",
        command: "optimize",
        description: "random-walk policy optimization, 500 updates, evaluated every 100",
        text: "\
experiment = walk-opt
env = walk
algorithms = mcpg, bpg, bac
M = 25
repetitions = 100
updates = 500
eval_every = 100
fisher = g-est
fisher.bpg = mc
gptd_sigma2 = 1
state_width = 3
fisher_weight = 0.01
tau = 0.0001
schedule = constant
beta.mcpg@1 = 0.005
beta.mcpg@25 = 0.075
beta.mcpg@50 = 0.1
beta.mcpg@75 = 0.75
beta.bpg@1 = 0.0035
beta.bpg@25 = 0.015
beta.bpg@50 = 0.09
beta.bpg@75 = 0.5
beta.bac = 5
",
    },
    Preset {
        name: "car-opt",
        command: "optimize",
        description: "mountain car, 500 updates, 1000 evaluation episodes every 50",
        text: "\
experiment = car-opt
env = mountain-car
algorithms = mcpg, bac
M = 10
repetitions = 20
updates = 500
eval_every = 50
fisher = g-est
gptd_sigma2 = 1
state_width = 0.325
fisher_weight = 1
tau = 0.01
schedule = hyperbolic
beta.mcpg@5 = 0.025
beta_c.mcpg@5 = inf
beta.mcpg@10 = 0.1
beta_c.mcpg@10 = 100
beta.mcpg@20 = 0.2
beta_c.mcpg@20 = 100
beta.mcpg@40 = 0.25
beta_c.mcpg@40 = inf
beta.bac@5 = 0.025
beta_c.bac@5 = inf
beta.bac@10 = 0.05
beta_c.bac@10 = inf
beta.bac@20 = 0.1
beta_c.bac@20 = inf
beta.bac@40 = 0.1
beta_c.bac@40 = 250
",
    },
    Preset {
        name: "ship-opt",
        command: "optimize",
        description: "ship steering on a reduced tile coding, success ratio every 100 updates",
        text: "\
experiment = ship-opt
env = ship
algorithms = mcpg, bac
M = 20
repetitions = 10
updates = 1000
eval_every = 100
fisher = state-action-avg
gptd_sigma2 = 1
state_width = 1
fisher_weight = 1
tau = 0.01
ship_tilings = 2
ship_tiles = 4, 4, 12, 4
schedule = constant
beta.mcpg = 0.01
beta.bac@5 = 0.5
beta.bac@10 = 0.4
beta.bac@20 = 0.5
",
    },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))
}

pub fn load(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(find(name)?.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{algorithm_setup, build_task};

    #[test]
    fn every_preset_parses_and_resolves() {
        for p in PRESETS {
            let cfg = load(p.name).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            let task = build_task(&cfg).unwrap();
            for &algo in &cfg.algorithms {
                for &m in &cfg.sample_sizes {
                    algorithm_setup(&cfg, &task, algo, m).unwrap();
                }
            }
        }
    }
}
