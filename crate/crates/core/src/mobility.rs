//! Random-waypoint movement and strongest-AP association.

use serde::{Deserialize, Serialize};

use crate::phy::path_loss_db;
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width_m: f64,
    pub height_m: f64,
}

impl Arena {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width_m).contains(&p.x) && (0.0..=self.height_m).contains(&p.y)
    }

    pub fn sample(&self, rng: &mut RngStream) -> Position {
        Position {
            x: rng.uniform_f64(0.0, self.width_m),
            y: rng.uniform_f64(0.0, self.height_m),
        }
    }
}

/// One leg of a random-waypoint trajectory: travel `from → target`, then pause.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointState {
    pub from: Position,
    pub target: Position,
    pub depart: SimTime,
    pub arrive: SimTime,
    pub pause_until: SimTime,
    pub speed_mps: f64,
}

impl WaypointState {
    pub fn leg(from: Position, target: Position, depart: SimTime, speed_mps: f64, pause: SimTime) -> Self {
        let travel = SimTime::from_secs_f64(from.distance(&target) / speed_mps);
        let arrive = depart + travel;
        WaypointState {
            from,
            target,
            depart,
            arrive,
            pause_until: arrive + pause,
            speed_mps,
        }
    }

    /// Position within this leg; times past arrival report the waypoint.
    pub fn position_at(&self, t: SimTime) -> Position {
        if t <= self.depart {
            return self.from;
        }
        if t >= self.arrive {
            return self.target;
        }
        let total = (self.arrive - self.depart).as_secs_f64();
        let frac = (t - self.depart).as_secs_f64() / total;
        Position {
            x: self.from.x + (self.target.x - self.from.x) * frac,
            y: self.from.y + (self.target.y - self.from.y) * frac,
        }
    }
}

/// A random-waypoint walker with its own random stream.
///
/// The trajectory depends only on the stream, never on when it is queried,
/// so different traffic policies see identical movement for the same seed.
#[derive(Clone)]
pub struct RandomWaypoint {
    arena: Arena,
    speed_mps: f64,
    pause: SimTime,
    state: WaypointState,
    rng: RngStream,
}

impl RandomWaypoint {
    pub fn new(arena: Arena, speed_mps: f64, pause: SimTime, mut rng: RngStream) -> Self {
        let start = arena.sample(&mut rng);
        let first = arena.sample(&mut rng);
        let state = WaypointState::leg(start, first, SimTime::ZERO, speed_mps, pause);
        RandomWaypoint {
            arena,
            speed_mps,
            pause,
            state,
            rng,
        }
    }

    /// Walker pinned at `pos` (zero speed), used for fixed placements.
    pub fn stationary(pos: Position, rng: RngStream) -> Self {
        RandomWaypoint {
            arena: Arena {
                width_m: pos.x.max(0.0),
                height_m: pos.y.max(0.0),
            },
            speed_mps: 0.0,
            pause: SimTime::MAX,
            state: WaypointState {
                from: pos,
                target: pos,
                depart: SimTime::ZERO,
                arrive: SimTime::ZERO,
                pause_until: SimTime::MAX,
                speed_mps: 0.0,
            },
            rng,
        }
    }

    pub fn state(&self) -> &WaypointState {
        &self.state
    }

    /// Queries must be non-decreasing in time.
    pub fn position_at(&mut self, t: SimTime) -> Position {
        while t >= self.state.pause_until && self.state.pause_until != SimTime::MAX {
            let next = self.arena.sample(&mut self.rng);
            self.state = WaypointState::leg(
                self.state.target,
                next,
                self.state.pause_until,
                self.speed_mps,
                self.pause,
            );
        }
        self.state.position_at(t)
    }
}

/// Places APs on a `rows × cols` grid with `spacing_m` between neighbours and
/// `margin_m` to the arena border.
pub fn grid_positions(rows: u32, cols: u32, spacing_m: f64, margin_m: f64) -> Vec<Position> {
    let mut out = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            out.push(Position {
                x: margin_m + f64::from(c) * spacing_m,
                y: margin_m + f64::from(r) * spacing_m,
            });
        }
    }
    out
}

/// An AP as seen by the association logic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApSite {
    pub position: Position,
    pub frequency_hz: f64,
}

/// Picks the AP with the smallest path loss. A STA leaves `current` only if
/// the best candidate is better by more than `hysteresis_db`.
pub fn evaluate_association(
    sta: Position,
    aps: &[ApSite],
    current: Option<usize>,
    hysteresis_db: f64,
    min_distance_m: f64,
) -> usize {
    assert!(!aps.is_empty(), "association needs at least one AP");
    let loss = |i: usize| path_loss_db(sta.distance(&aps[i].position), aps[i].frequency_hz, min_distance_m);
    let mut best = 0;
    let mut best_loss = loss(0);
    for i in 1..aps.len() {
        let l = loss(i);
        if l < best_loss {
            best = i;
            best_loss = l;
        }
    }
    match current {
        Some(cur) if cur == best => cur,
        Some(cur) if best_loss < loss(cur) - hysteresis_db => best,
        Some(cur) => cur,
        None => best,
    }
}
