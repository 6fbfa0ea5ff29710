//! Canned experiment configurations.

use crate::error::{Error, Result};
use crate::graphs::WindowStyle;

use super::config::*;

pub const RECIPES: [&str; 7] = [
    "sync-unique",
    "sync-nonunique",
    "rate-corollary",
    "necessity",
    "async-fixed",
    "tracking-paper-example",
    "lsq-demo",
];

const DEFAULT_SEED: u64 = 1;

fn base(mode: Mode) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        seed: DEFAULT_SEED,
        problem: None,
        schedule: None,
        engine: EngineSpec::default(),
        async_events: None,
        tracking: None,
        lsq: None,
        rate: None,
        output: OutputSpec::default(),
    }
}

/// Condition bound used by the generated recipes.
pub const RECIPE_MAX_CONDITION: f64 = 10.0;

fn generator(m: usize, n: usize, block_rows: &[usize], solvable: bool, rank: Option<usize>) -> ProblemSpec {
    ProblemSpec::Generator(GeneratorSpec {
        m,
        n,
        block_rows: block_rows.to_vec(),
        seed: None,
        solvable,
        rank,
        max_condition: Some(RECIPE_MAX_CONDITION),
    })
}

fn random_schedule(l: usize) -> ScheduleSpec {
    ScheduleSpec::SeededRandom {
        m: None,
        seed: None,
        l,
        window_style: WindowStyle::PlantedRing,
        density: 0.15,
    }
}

fn fixed(m: usize, arcs: &[(usize, usize)]) -> ScheduleSpec {
    ScheduleSpec::Fixed {
        graph: GraphSpec {
            m,
            arcs: arcs.to_vec(),
            self_arcs: true,
        },
    }
}

fn complete_arcs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

fn row(a: &[f64], b: f64) -> BlockSpec {
    BlockSpec {
        a: vec![a.to_vec()],
        b: vec![b],
    }
}

pub fn recipe(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "sync-unique" => ExperimentConfig {
            problem: Some(generator(3, 4, &[2, 1, 1], true, None)),
            schedule: Some(random_schedule(3)),
            ..base(Mode::Sync)
        },
        "sync-nonunique" => ExperimentConfig {
            problem: Some(generator(3, 4, &[2, 1, 1], true, Some(3))),
            schedule: Some(random_schedule(3)),
            ..base(Mode::Sync)
        },
        "rate-corollary" => {
            // lines through (1, 2) at 0 and 60 degrees
            let s = 3f64.sqrt() / 2.0;
            ExperimentConfig {
                problem: Some(ProblemSpec::Blocks(vec![
                    row(&[0.0, 1.0], 2.0),
                    row(&[-s, 0.5], 1.0 - s),
                ])),
                schedule: Some(fixed(2, &complete_arcs(2))),
                rate: Some(RateSpec::default()),
                ..base(Mode::Rate)
            }
        }
        "necessity" => ExperimentConfig {
            problem: Some(ProblemSpec::Blocks(
                (0..4)
                    .map(|i| {
                        let mut a = [0.0; 4];
                        a[i] = 1.0;
                        row(&a, (i + 1) as f64)
                    })
                    .collect(),
            )),
            schedule: Some(fixed(4, &[(0, 1), (1, 0), (2, 3), (3, 2)])),
            ..base(Mode::Necessity)
        },
        "async-fixed" => ExperimentConfig {
            problem: Some(generator(3, 4, &[2, 1, 1], true, None)),
            schedule: Some(fixed(3, &[(0, 1), (1, 2), (2, 0)])),
            async_events: Some(AsyncSpec {
                lower: vec![0.5; 3],
                upper: vec![1.7; 3],
                times: None,
                events: 2_000,
            }),
            ..base(Mode::Async)
        },
        "tracking-paper-example" => ExperimentConfig {
            schedule: Some(fixed(3, &complete_arcs(3))),
            tracking: Some(TrackingSpec {
                a: SinMatrixSpec {
                    base: vec![
                        vec![2.0, 3.0, 5.0],
                        vec![4.0, 9.0, -8.0],
                        vec![1.0, 5.0, 10.0],
                    ],
                    perturbation: vec![
                        vec![0.1, 0.09, -0.24],
                        vec![0.2, -0.6, 0.1],
                        vec![0.03, 0.05, 0.4],
                    ],
                    frequency: 0.1,
                },
                b: SinVectorSpec {
                    base: vec![10.0, 5.0, 16.0],
                    perturbation: vec![0.1, 0.2, 0.3],
                    frequency: 0.6,
                },
                row_blocks: vec![1, 1, 1],
                initial: vec![
                    vec![11.5, -1.0, -2.0],
                    vec![1.25, 0.0, 0.0],
                    vec![-9.0, 1.0, 2.0],
                ],
                det_floor: crate::tracking::DEFAULT_DET_FLOOR,
                amplitude: 1.0,
            }),
            engine: EngineSpec {
                horizon: Some(300),
                ..EngineSpec::default()
            },
            ..base(Mode::Tracking)
        },
        "lsq-demo" => ExperimentConfig {
            problem: Some(generator(3, 3, &[3, 3, 3], false, None)),
            schedule: Some(random_schedule(3)),
            lsq: Some(LsqSpec::default()),
            engine: EngineSpec {
                max_steps: 50_000,
                ..EngineSpec::default()
            },
            ..base(Mode::Lsq)
        },
        other => {
            return Err(Error::config(
                "recipe",
                format!("unknown recipe `{other}`; known: {}", RECIPES.join(", ")),
            ))
        }
    };
    Ok(cfg)
}
