//! Scenario files: grid geometry, robots, tasks and run parameters in JSON.
//!
//! ```json
//! {
//!   "grid": { "width": 12, "height": 10 },
//!   "cells": [
//!     { "x": 5, "y": 0, "w": 2, "h": 10, "type": "water" },
//!     { "x": 5, "y": 2, "type": "bridge", "direction": "E" },
//!     { "x": 1, "y": 1, "type": "W1" }
//!   ],
//!   "robots": [
//!     { "kind": "drone", "start": [0, 0], "rewards": { "monitored": 5 },
//!       "eps_true": 0.1, "eps_est": 0.2 }
//!   ],
//!   "tasks": [ { "name": "phi1", "formula": "[H^1 W1]^[0,15]", "threshold": 0.9 } ],
//!   "params": { "episodes": 500, "seed": 7 }
//! }
//! ```
//!
//! Cells not listed are free. Later entries overwrite earlier ones, so a
//! bridge can be painted over a water block.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mdp::{
    CellType, Direction, GridScenario, MdpError, RobotKind, RobotSpec, UncertaintySpec, GRID_PROPOSITIONS,
};
use crate::orchestrator::Task;
use crate::twtl::{parse_twtl, Alphabet, ParseError};

/// The shipped 12x10 pickup-and-delivery scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.json");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cell entry {index}: {message}")]
    Cell { index: usize, message: String },
    #[error("task {index} ({name}): {source}")]
    Formula {
        index: usize,
        name: String,
        source: ParseError,
    },
    #[error("task {index} ({name}): threshold {threshold} must lie in [0,1)")]
    Threshold { index: usize, name: String, threshold: f64 },
    #[error("params: {0}")]
    Params(String),
    #[error(transparent)]
    Grid(#[from] MdpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub grid: GridSize,
    #[serde(default)]
    pub cells: Vec<CellEntry>,
    pub robots: Vec<RobotEntry>,
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSize {
    pub width: u32,
    pub height: u32,
}

/// A rectangle of `w` by `h` cells with top-left corner `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub x: u32,
    pub y: u32,
    #[serde(default = "one")]
    pub w: u32,
    #[serde(default = "one")]
    pub h: u32,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotEntry {
    pub kind: RobotKind,
    pub start: [u32; 2],
    #[serde(default)]
    pub rewards: BTreeMap<String, f64>,
    pub eps_true: f64,
    pub eps_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub formula: String,
    pub threshold: f64,
}

/// Learning, bound and run parameters; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub gamma: f64,
    pub alpha: f64,
    pub z: f64,
    pub data_threshold: u64,
    pub episodes: usize,
    pub iterations: usize,
    pub explore_initial: f64,
    pub explore_final: f64,
    pub seed: u64,
    pub solver_starts: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            gamma: crate::learning::DEFAULT_GAMMA,
            alpha: crate::learning::DEFAULT_ALPHA,
            z: crate::bounds::DEFAULT_Z,
            data_threshold: crate::bounds::DEFAULT_DATA_THRESHOLD,
            episodes: 2000,
            iterations: 20,
            explore_initial: 0.7,
            explore_final: 0.0001,
            seed: 0,
            solver_starts: 8,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: String| Err(ScenarioError::Params(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return err(format!("gamma = {} must lie in [0,1)", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return err(format!("alpha = {} must lie in (0,1]", self.alpha));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return err(format!("z = {} must be positive", self.z));
        }
        for (name, v) in [("explore_initial", self.explore_initial), ("explore_final", self.explore_final)] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{name} = {v} must lie in [0,1]"));
            }
        }
        if self.solver_starts == 0 {
            return err("solver_starts must be at least 1".into());
        }
        Ok(())
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridScenario,
    pub tasks: Vec<Task>,
    pub params: Params,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario()
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn default_scenario() -> Scenario {
        Scenario::from_json(DEFAULT_SCENARIO).expect("shipped scenario is valid")
    }

    /// Copy with every robot repeated `times` times, copies kept together.
    pub fn replicate_robots(&self, times: usize) -> Scenario {
        let mut out = self.clone();
        out.grid.robots = self
            .grid
            .robots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.clone(), times))
            .collect();
        out
    }

    /// Copy with `n` robots taken cyclically from this scenario's robots.
    pub fn with_robot_count(&self, n: usize) -> Scenario {
        let mut out = self.clone();
        out.grid.robots = self.grid.robots.iter().cycle().take(n).cloned().collect();
        out
    }

    /// Copy with `n` tasks taken cyclically from this scenario's tasks;
    /// repeats get a numeric suffix.
    pub fn with_task_count(&self, n: usize) -> Scenario {
        let mut out = self.clone();
        let base = self.tasks.len();
        out.tasks = (0..n)
            .map(|i| {
                let mut t = self.tasks[i % base].clone();
                if i >= base {
                    t.name = format!("{}_{}", t.name, i / base + 1);
                }
                t
            })
            .collect();
        out
    }
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let GridSize { width, height } = self.grid;
        let mut cells = vec![CellType::Free; (width as usize) * (height as usize)];
        for (index, c) in self.cells.iter().enumerate() {
            let kind = CellType::from_name(&c.kind, c.direction)
                .map_err(|message| ScenarioError::Cell { index, message })?;
            if c.w == 0 || c.h == 0 || c.x + c.w > width || c.y + c.h > height {
                return Err(ScenarioError::Cell {
                    index,
                    message: format!(
                        "rectangle at ({},{}) of size {}x{} leaves the {width}x{height} grid",
                        c.x, c.y, c.w, c.h
                    ),
                });
            }
            for y in c.y..c.y + c.h {
                for x in c.x..c.x + c.w {
                    cells[(y * width + x) as usize] = kind;
                }
            }
        }
        let robots = self
            .robots
            .into_iter()
            .map(|r| RobotSpec {
                kind: r.kind,
                start: (r.start[0], r.start[1]),
                rewards: r.rewards,
                uncertainty: UncertaintySpec {
                    eps_true: r.eps_true,
                    eps_est: r.eps_est,
                },
            })
            .collect();
        let grid = GridScenario {
            width,
            height,
            cells,
            robots,
        };
        grid.validate()?;

        let ap = Alphabet::new(GRID_PROPOSITIONS);
        let mut tasks = Vec::with_capacity(self.tasks.len());
        for (index, t) in self.tasks.into_iter().enumerate() {
            let name = t.name.unwrap_or_else(|| format!("phi{}", index + 1));
            if !(0.0..1.0).contains(&t.threshold) {
                return Err(ScenarioError::Threshold {
                    index,
                    name,
                    threshold: t.threshold,
                });
            }
            let formula = parse_twtl(&t.formula, &ap).map_err(|source| ScenarioError::Formula {
                index,
                name: name.clone(),
                source,
            })?;
            tasks.push(Task {
                name,
                formula,
                threshold: t.threshold,
            });
        }
        self.params.validate()?;
        Ok(Scenario {
            grid,
            tasks,
            params: self.params,
        })
    }
}
