use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const APPROACH_COUNT: usize = 4;
pub const LANES_PER_APPROACH: usize = 4;
pub const LANE_COUNT: usize = APPROACH_COUNT * LANES_PER_APPROACH;
pub const PHASE_COUNT: usize = 4;
/// Origin-destination pairs (no U-turns).
pub const OD_COUNT: usize = APPROACH_COUNT * (APPROACH_COUNT - 1);

/// Approach direction, 1-based as in the demand table: 1 east, 2 south,
/// 3 west, 4 north (clockwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Direction(u8);

impl Direction {
    pub const ALL: [Direction; APPROACH_COUNT] = [Direction(1), Direction(2), Direction(3), Direction(4)];

    pub fn new(d: u8) -> Result<Self, SimError> {
        if (1..=APPROACH_COUNT as u8).contains(&d) {
            Ok(Direction(d))
        } else {
            Err(SimError::NoSuchDirection(d))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    fn offset(self, k: usize) -> Direction {
        Direction(((self.index() + k) % APPROACH_COUNT) as u8 + 1)
    }

    /// Destination of a left turn from this approach.
    pub fn left(self) -> Direction {
        self.offset(1)
    }

    pub fn through(self) -> Direction {
        self.offset(2)
    }

    pub fn right(self) -> Direction {
        self.offset(3)
    }
}

impl TryFrom<u8> for Direction {
    type Error = SimError;
    fn try_from(d: u8) -> Result<Self, SimError> {
        Direction::new(d)
    }
}

impl From<Direction> for u8 {
    fn from(d: Direction) -> u8 {
        d.0
    }
}

/// Origin-destination pair `m_{d,d'}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Od {
    pub from: Direction,
    pub to: Direction,
}

impl Od {
    pub fn new(from: u8, to: u8) -> Result<Self, SimError> {
        let (from, to) = (Direction::new(from)?, Direction::new(to)?);
        if from == to {
            return Err(SimError::UTurn(from.get()));
        }
        Ok(Od { from, to })
    }

    /// Dense index in `0..OD_COUNT`.
    pub fn index(self) -> usize {
        let to = self.to.index();
        let from = self.from.index();
        from * (APPROACH_COUNT - 1) + if to > from { to - 1 } else { to }
    }

    pub fn all() -> impl Iterator<Item = Od> {
        Direction::ALL
            .into_iter()
            .flat_map(|from| Direction::ALL.into_iter().filter(move |&to| to != from).map(move |to| Od { from, to }))
    }
}

impl fmt::Display for Od {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.from.get(), self.to.get())
    }
}

/// Signal phase, 0-based internally and shown as `p=1..4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Phase(pub u8);

impl Phase {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = Phase> {
        (0..PHASE_COUNT as u8).map(Phase)
    }

    pub fn next(self) -> Phase {
        Phase((self.0 + 1) % PHASE_COUNT as u8)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0 + 1)
    }
}

/// Index of a lane in `0..LANE_COUNT`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneId(pub u8);

impl LaneId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn direction(self) -> Direction {
        Direction(self.0 / LANES_PER_APPROACH as u8 + 1)
    }

    /// Position within the approach, 1 = left-most.
    pub fn position(self) -> u8 {
        self.0 % LANES_PER_APPROACH as u8 + 1
    }

    pub fn all() -> impl Iterator<Item = LaneId> {
        (0..LANE_COUNT as u8).map(LaneId)
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.direction().get(), self.position())
    }
}

/// Unvalidated `l_{d,k}` reference as written in configuration documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LaneRef {
    pub direction: u8,
    pub lane: u8,
}

impl LaneRef {
    pub fn new(direction: u8, lane: u8) -> Self {
        LaneRef { direction, lane }
    }

    pub fn resolve(self) -> Result<LaneId, SimError> {
        let d = Direction::new(self.direction).map_err(|_| SimError::NoSuchLane(self))?;
        if !(1..=LANES_PER_APPROACH as u8).contains(&self.lane) {
            return Err(SimError::NoSuchLane(self));
        }
        Ok(LaneId(d.index() as u8 * LANES_PER_APPROACH as u8 + self.lane - 1))
    }
}

impl From<LaneId> for LaneRef {
    fn from(l: LaneId) -> Self {
        LaneRef { direction: l.direction().get(), lane: l.position() }
    }
}

impl fmt::Display for LaneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.direction, self.lane)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Left,
    Through,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneInfo {
    pub id: LaneId,
    pub od: Od,
    pub turn: Turn,
    /// Fraction of the OD flow assigned to this lane.
    pub share: f64,
    pub phase: Phase,
}

/// The 4-leg intersection: lane 1 turns left, lanes 2 and 3 go straight,
/// lane 4 turns right. Each approach is served by its own phase.
#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionGeometry {
    pub lane_length: f64,
    lanes: [LaneInfo; LANE_COUNT],
}

impl IntersectionGeometry {
    pub fn new(lane_length: f64) -> Result<Self, SimError> {
        if !(lane_length.is_finite() && lane_length > 0.0) {
            return Err(SimError::InvalidParameter("lane_length"));
        }
        let lanes = std::array::from_fn(|i| {
            let id = LaneId(i as u8);
            let from = id.direction();
            let (to, turn, share) = match id.position() {
                1 => (from.left(), Turn::Left, 1.0),
                2 | 3 => (from.through(), Turn::Through, 0.5),
                _ => (from.right(), Turn::Right, 1.0),
            };
            LaneInfo { id, od: Od { from, to }, turn, share, phase: Phase(from.index() as u8) }
        });
        Ok(IntersectionGeometry { lane_length, lanes })
    }

    pub fn lane(&self, id: LaneId) -> &LaneInfo {
        &self.lanes[id.index()]
    }

    pub fn lanes(&self) -> &[LaneInfo; LANE_COUNT] {
        &self.lanes
    }

    /// Lanes served by `phase`, in lane order.
    pub fn phase_lanes(&self, phase: Phase) -> impl Iterator<Item = LaneId> + '_ {
        self.lanes.iter().filter(move |l| l.phase == phase).map(|l| l.id)
    }

    pub fn lanes_for_od(&self, od: Od) -> impl Iterator<Item = &LaneInfo> + '_ {
        self.lanes.iter().filter(move |l| l.od == od)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn od_index_is_dense_and_unique() {
        let mut seen = [false; OD_COUNT];
        for od in Od::all() {
            assert!(!seen[od.index()]);
            seen[od.index()] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert!(Od::new(2, 2).is_err());
    }

    #[test]
    fn turns_follow_clockwise_numbering() {
        let east = Direction::new(1).unwrap();
        assert_eq!(east.left().get(), 2);
        assert_eq!(east.through().get(), 3);
        assert_eq!(east.right().get(), 4);
        let north = Direction::new(4).unwrap();
        assert_eq!(north.left().get(), 1);
        assert_eq!(north.right().get(), 3);
    }

    #[test]
    fn layout_invariants() {
        let g = IntersectionGeometry::new(500.0).unwrap();
        // every lane one movement, every movement one phase, every OD fully assigned
        for od in Od::all() {
            let share: f64 = g.lanes_for_od(od).map(|l| l.share).sum();
            assert_eq!(share, 1.0, "{od}");
            let phases: Vec<_> = g.lanes_for_od(od).map(|l| l.phase).collect();
            assert!(phases.windows(2).all(|w| w[0] == w[1]));
        }
        for p in Phase::all() {
            assert_eq!(g.phase_lanes(p).count(), 4);
        }
    }

    #[test]
    fn lane_refs_validate() {
        assert_eq!(LaneRef::new(2, 4).resolve().unwrap(), LaneId(7));
        assert!(LaneRef::new(5, 1).resolve().is_err());
        assert!(LaneRef::new(1, 0).resolve().is_err());
        assert!(LaneRef::new(1, 5).resolve().is_err());
        for l in LaneId::all() {
            assert_eq!(LaneRef::from(l).resolve().unwrap(), l);
        }
    }
}
