use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LabeledMdp, MdpBuilder, MdpError, StateId};
use crate::twtl::{Alphabet, Symbol};

/// Propositions labelling grid cells, in alphabet order.
pub const GRID_PROPOSITIONS: [&str; 7] = ["S1", "S2", "W1", "W2", "P1", "P2", "O"];

/// Action names in canonical order; the index of `Stay` is 8.
pub const COMPASS_ACTIONS: [&str; 9] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW", "Stay"];

const STAY: usize = 8;

/// Compass direction; `y` grows southwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::N => (0, -1),
            Direction::NE => (1, -1),
            Direction::E => (1, 0),
            Direction::SE => (1, 1),
            Direction::S => (0, 1),
            Direction::SW => (-1, 1),
            Direction::W => (-1, 0),
            Direction::NW => (-1, -1),
        }
    }

    /// Neighbouring directions 45 degrees clockwise and counter-clockwise.
    pub fn laterals(self) -> [Direction; 2] {
        let i = self.index();
        [Self::ALL[(i + 1) % 8], Self::ALL[(i + 7) % 8]]
    }

    fn along(self, (dx, dy): (i64, i64)) -> bool {
        let (ux, uy) = self.delta();
        dx * ux + dy * uy > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellType {
    Free,
    Restricted,
    Water,
    Monitored,
    /// A labelled location; the index points into [`GRID_PROPOSITIONS`].
    Site(usize),
    /// One-way crossing over water for ground robots.
    Bridge(Direction),
}

impl CellType {
    /// Parses a cell type name; bridges need a direction.
    pub fn from_name(name: &str, direction: Option<Direction>) -> Result<CellType, String> {
        let cell = match name {
            "free" => CellType::Free,
            "restricted" => CellType::Restricted,
            "water" => CellType::Water,
            "monitored" => CellType::Monitored,
            "bridge" => CellType::Bridge(
                direction.ok_or_else(|| "bridge cells need a `direction`".to_string())?,
            ),
            _ => match GRID_PROPOSITIONS.iter().position(|p| *p == name) {
                Some(i) => CellType::Site(i),
                None => {
                    return Err(format!(
                        "unknown cell type `{name}` (expected free, restricted, water, \
                         monitored, bridge or one of {GRID_PROPOSITIONS:?})"
                    ))
                }
            },
        };
        if direction.is_some() && !matches!(cell, CellType::Bridge(_)) {
            return Err(format!("only bridge cells take a direction, not `{name}`"));
        }
        Ok(cell)
    }

    /// Name used in scenario files and reward tables.
    pub fn name(self) -> &'static str {
        match self {
            CellType::Free => "free",
            CellType::Restricted => "restricted",
            CellType::Water => "water",
            CellType::Monitored => "monitored",
            CellType::Site(i) => GRID_PROPOSITIONS[i],
            CellType::Bridge(_) => "bridge",
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Drone,
    Mobile,
}

impl RobotKind {
    fn admits(self, cell: CellType) -> bool {
        match (self, cell) {
            (_, CellType::Restricted) => false,
            (RobotKind::Mobile, CellType::Water) => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    /// Actual slip probability, used only by the simulator.
    pub eps_true: f64,
    /// Upper bound on the slip probability known to the robot.
    pub eps_est: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub kind: RobotKind,
    pub start: (u32, u32),
    /// Reward for acting in a cell, keyed by cell type name; missing types pay 0.
    pub rewards: BTreeMap<String, f64>,
    pub uncertainty: UncertaintySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScenario {
    pub width: u32,
    pub height: u32,
    /// Row-major, `cells[y * width + x]`.
    pub cells: Vec<CellType>,
    pub robots: Vec<RobotSpec>,
}

/// A robot's grid MDP together with the cell of every state.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub mdp: LabeledMdp,
    width: u32,
    coords: Vec<(u32, u32)>,
    index: Vec<Option<StateId>>,
}

impl GridWorld {
    pub fn state_at(&self, x: u32, y: u32) -> Option<StateId> {
        if x >= self.width {
            return None;
        }
        self.index
            .get((y * self.width + x) as usize)
            .copied()
            .flatten()
    }

    pub fn coord(&self, s: StateId) -> (u32, u32) {
        self.coords[s as usize]
    }
}

/// The simulator's model of `robot`, with the true slip probability.
pub fn build_gridworld(scn: &GridScenario, robot: usize) -> Result<GridWorld, MdpError> {
    let slip = robot_spec(scn, robot)?.uncertainty.eps_true;
    scn.world(robot, slip)
}

/// The robot's own model, built from its slip bound. Has the same states,
/// actions and supports as [`build_gridworld`].
pub fn build_robot_model(scn: &GridScenario, robot: usize) -> Result<GridWorld, MdpError> {
    let slip = robot_spec(scn, robot)?.uncertainty.eps_est;
    scn.world(robot, slip)
}

fn robot_spec(scn: &GridScenario, robot: usize) -> Result<&RobotSpec, MdpError> {
    scn.robots
        .get(robot)
        .ok_or_else(|| MdpError::Scenario(format!("no robot with index {robot}")))
}

impl GridScenario {
    pub fn cell(&self, x: u32, y: u32) -> CellType {
        self.cells[(y * self.width + x) as usize]
    }

    fn cell_at(&self, x: i64, y: i64) -> Option<CellType> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.cell(x as u32, y as u32))
        }
    }

    /// Checks geometry and robot definitions.
    pub fn validate(&self) -> Result<(), MdpError> {
        let err = |msg: String| Err(MdpError::Scenario(msg));
        if self.width == 0 || self.height == 0 {
            return err("grid must be at least 1x1".into());
        }
        if self.cells.len() != (self.width * self.height) as usize {
            return err(format!(
                "{} cells given for a {}x{} grid",
                self.cells.len(),
                self.width,
                self.height
            ));
        }
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if let Some(CellType::Bridge(_)) = self.cell_at(x, y) {
                    let over_water = Direction::ALL.iter().any(|d| {
                        let (dx, dy) = d.delta();
                        self.cell_at(x + dx, y + dy) == Some(CellType::Water)
                    });
                    if !over_water {
                        return err(format!("bridge at ({x},{y}) is not over water"));
                    }
                }
            }
        }
        for (i, r) in self.robots.iter().enumerate() {
            let (x, y) = r.start;
            if x >= self.width || y >= self.height {
                return err(format!("robot {i} starts outside the grid at ({x},{y})"));
            }
            let cell = self.cell(x, y);
            if !r.kind.admits(cell) {
                return err(format!(
                    "robot {i} ({:?}) cannot start in {cell} cell ({x},{y})",
                    r.kind
                ));
            }
            let UncertaintySpec { eps_true, eps_est } = r.uncertainty;
            for (name, eps) in [("eps_true", eps_true), ("eps_est", eps_est)] {
                if !(0.0..1.0).contains(&eps) {
                    return err(format!("robot {i}: {name} = {eps} is outside [0,1)"));
                }
            }
            for key in r.rewards.keys() {
                if CellType::from_name(key, Some(Direction::N)).is_err()
                    && CellType::from_name(key, None).is_err()
                {
                    return err(format!("robot {i}: reward for unknown cell type `{key}`"));
                }
            }
        }
        Ok(())
    }

    /// Whether a ground robot may move by `delta` from `from` into `to`.
    fn move_allowed(kind: RobotKind, from: CellType, to: CellType, delta: (i64, i64)) -> bool {
        if !kind.admits(to) {
            return false;
        }
        if kind == RobotKind::Drone {
            return true;
        }
        [from, to].iter().all(|c| match c {
            CellType::Bridge(dir) => dir.along(delta),
            _ => true,
        })
    }

    fn world(&self, robot: usize, slip: f64) -> Result<GridWorld, MdpError> {
        self.validate()?;
        let spec = &self.robots[robot];
        let kind = spec.kind;
        let ap = Alphabet::new(GRID_PROPOSITIONS);
        let mut builder = MdpBuilder::new(ap, COMPASS_ACTIONS);
        let mut index = vec![None; self.cells.len()];
        let mut coords = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let cell = self.cell(x, y);
                if !kind.admits(cell) {
                    continue;
                }
                let label = match cell {
                    CellType::Site(i) => Symbol::EMPTY.with(i),
                    _ => Symbol::EMPTY,
                };
                index[(y * self.width + x) as usize] = Some(builder.add_state(label));
                coords.push((x, y));
            }
        }
        let reward_of = |cell: CellType| spec.rewards.get(cell.name()).copied().unwrap_or(0.0);
        for (s, &(x, y)) in coords.iter().enumerate() {
            let s = s as StateId;
            let here = self.cell(x, y);
            let target = |d: Direction| -> StateId {
                let delta = d.delta();
                let (tx, ty) = (x as i64 + delta.0, y as i64 + delta.1);
                match self.cell_at(tx, ty) {
                    Some(to) if Self::move_allowed(kind, here, to, delta) => {
                        index[(ty as u32 * self.width + tx as u32) as usize].unwrap()
                    }
                    _ => s,
                }
            };
            for d in Direction::ALL {
                if kind == RobotKind::Mobile {
                    if let CellType::Bridge(dir) = here {
                        if d != dir {
                            continue;
                        }
                    }
                }
                let [l1, l2] = d.laterals();
                builder.set_transition(
                    s,
                    d.index(),
                    &[
                        (target(d), 1.0 - slip),
                        (target(l1), slip / 2.0),
                        (target(l2), slip / 2.0),
                    ],
                );
            }
            builder.set_transition(s, STAY, &[(s, 1.0)]);
            let r = reward_of(here);
            for a in 0..COMPASS_ACTIONS.len() {
                builder.set_reward(s, a, r);
            }
        }
        let mdp = builder.build()?;
        Ok(GridWorld {
            mdp,
            width: self.width,
            coords,
            index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(cells: &[&str], kind: RobotKind, start: (u32, u32), eps: f64) -> GridScenario {
        let height = cells.len() as u32;
        let width = cells[0].len() as u32;
        let cells = cells
            .iter()
            .flat_map(|row| row.chars())
            .map(|c| match c {
                '.' => CellType::Free,
                '#' => CellType::Restricted,
                '~' => CellType::Water,
                'g' => CellType::Monitored,
                '>' => CellType::Bridge(Direction::E),
                'W' => CellType::Site(3),
                _ => panic!("bad cell {c}"),
            })
            .collect();
        GridScenario {
            width,
            height,
            cells,
            robots: vec![RobotSpec {
                kind,
                start,
                rewards: BTreeMap::from([("monitored".to_string(), 5.0)]),
                uncertainty: UncertaintySpec {
                    eps_true: eps,
                    eps_est: 2.0 * eps,
                },
            }],
        }
    }

    fn dist(w: &GridWorld, x: u32, y: u32, a: usize) -> BTreeMap<(u32, u32), f64> {
        let s = w.state_at(x, y).unwrap();
        w.mdp
            .transition(s, a)
            .unwrap()
            .iter()
            .map(|&(t, p)| (w.coord(t), p))
            .collect()
    }

    fn close(a: &BTreeMap<(u32, u32), f64>, b: &[((u32, u32), f64)]) -> bool {
        a.len() == b.len()
            && b
                .iter()
                .all(|(c, p)| a.get(c).is_some_and(|q| (q - p).abs() < 1e-12))
    }

    #[test]
    fn interior_north_action() {
        let scn = scenario(&["...", "...", "..."], RobotKind::Drone, (1, 1), 0.1);
        let w = build_gridworld(&scn, 0).unwrap();
        let d = dist(&w, 1, 1, 0);
        assert!(close(&d, &[((1, 0), 0.9), ((2, 0), 0.05), ((0, 0), 0.05)]));
        assert!(close(&dist(&w, 1, 1, STAY), &[((1, 1), 1.0)]));
    }

    #[test]
    fn blocked_mass_stays_in_place() {
        let scn = scenario(&["...", ".#.", "..."], RobotKind::Drone, (1, 2), 0.1);
        let w = build_gridworld(&scn, 0).unwrap();
        assert!(w.state_at(1, 1).is_none());
        let d = dist(&w, 1, 2, 0);
        assert!(close(&d, &[((1, 2), 0.9), ((2, 1), 0.05), ((0, 1), 0.05)]));
        // Off-grid mass as well.
        let d = dist(&w, 0, 0, 0);
        assert!(close(&d, &[((0, 0), 1.0)]));
    }

    #[test]
    fn robot_model_uses_slip_bound() {
        let scn = scenario(&["...", "...", "..."], RobotKind::Drone, (1, 1), 0.1);
        let w = build_robot_model(&scn, 0).unwrap();
        assert!(close(
            &dist(&w, 1, 1, 2),
            &[((2, 1), 0.8), ((2, 2), 0.1), ((2, 0), 0.1)]
        ));
    }

    #[test]
    fn mobile_robots_cross_water_only_on_bridges() {
        let scn = scenario(&[".~~.", ".>>.", ".~~."], RobotKind::Mobile, (0, 1), 0.1);
        let w = build_gridworld(&scn, 0).unwrap();
        assert!(w.state_at(1, 0).is_none());
        let bridge = w.state_at(1, 1).unwrap();
        let enabled: Vec<_> = w.mdp.enabled_actions(bridge).collect();
        assert_eq!(enabled, vec![2, STAY]);
        // Entering from the west end follows the bridge.
        assert!(close(&dist(&w, 0, 1, 2), &[((1, 1), 0.9), ((0, 1), 0.1)]));
        // Walking back against the bridge is blocked.
        // Both laterals of W from (3,1) hit water as well.
        assert!(close(&dist(&w, 3, 1, 6), &[((3, 1), 1.0)]));
        // Drones fly over water.
        let scn = scenario(&[".~~.", ".>>.", ".~~."], RobotKind::Drone, (0, 1), 0.1);
        let w = build_gridworld(&scn, 0).unwrap();
        assert_eq!(w.mdp.enabled_actions(w.state_at(1, 1).unwrap()).count(), 9);
        assert!(close(&dist(&w, 2, 1, 6), &[((1, 1), 0.9), ((1, 0), 0.05), ((1, 2), 0.05)]));
    }

    #[test]
    fn labels_and_rewards() {
        let scn = scenario(&["Wg", ".."], RobotKind::Drone, (1, 1), 0.1);
        let w = build_gridworld(&scn, 0).unwrap();
        let ap = w.mdp.alphabet();
        assert_eq!(ap.names_in(w.mdp.label(w.state_at(0, 0).unwrap())), vec!["W2"]);
        assert_eq!(w.mdp.label(w.state_at(1, 0).unwrap()), Symbol::EMPTY);
        assert_eq!(w.mdp.reward(w.state_at(1, 0).unwrap(), 3), 5.0);
        assert_eq!(w.mdp.reward(w.state_at(0, 1).unwrap(), 3), 0.0);
    }

    #[test]
    fn scenario_errors() {
        let scn = scenario(&[".#"], RobotKind::Drone, (1, 0), 0.1);
        assert!(matches!(build_gridworld(&scn, 0), Err(MdpError::Scenario(_))));
        let scn = scenario(&[".>."], RobotKind::Drone, (0, 0), 0.1);
        assert!(matches!(build_gridworld(&scn, 0), Err(MdpError::Scenario(m)) if m.contains("water")));
        let scn = scenario(&["~."], RobotKind::Mobile, (0, 0), 0.1);
        assert!(build_gridworld(&scn, 0).is_err());
        assert!(build_gridworld(&scn, 3).is_err());
        assert!(CellType::from_name("lava", None).is_err());
        assert_eq!(CellType::from_name("P2", None), Ok(CellType::Site(5)));
    }

    #[test]
    fn admissibility_and_stochasticity() {
        let scn = scenario(
            &["..~~..", ".#>>#.", "..~~g.", "W....."],
            RobotKind::Mobile,
            (0, 0),
            0.15,
        );
        let w = build_gridworld(&scn, 0).unwrap();
        for s in 0..w.mdp.num_states() as StateId {
            for a in w.mdp.enabled_actions(s) {
                let row = w.mdp.transition(s, a).unwrap();
                let sum: f64 = row.iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-9);
                for &(t, _) in row {
                    let (x, y) = w.coord(t);
                    assert!(!matches!(scn.cell(x, y), CellType::Restricted | CellType::Water));
                }
                assert!(w.mdp.likely_successors(s, a, 0.3).count() >= 1);
            }
        }
    }

    #[test]
    fn intended_frequency_monte_carlo() {
        let scn = scenario(&["...", "...", "..."], RobotKind::Drone, (1, 1), 0.1);
        let w = build_gridworld(&scn, 0).unwrap();
        let s = w.state_at(1, 1).unwrap();
        let north = w.state_at(1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| w.mdp.sample_transition(s, 0, &mut rng).unwrap().0 == north)
            .count();
        assert!((hits as f64 / n as f64 - 0.9).abs() < 0.01);
    }
}
