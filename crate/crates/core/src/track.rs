//! Tile pieces, the occupancy grid and genome decoding.
//!
//! A track is grown from a `StartFinish` tile placed at the grid origin. Each
//! genome entry is replaced by the matching tile, attached to the exit of the
//! previous one. Loops and ramps are three cells long; everything else is a
//! single cell. A ramp lifts its middle cell, which leaves room for a
//! perpendicular straight to pass underneath when the underpass rule is on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Compass heading of a piece or a car on the grid.
///
/// Grid coordinates grow east (`x`) and south (`y`), matching screen space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    /// Rotate by −90°.
    pub fn left(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    /// Rotate by +90°.
    pub fn right(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    pub fn opposite(self) -> Heading {
        Heading::from_index(self.index() + 2)
    }

    /// Rotate by `quarter_turns` × 90°, positive turning right.
    pub fn rotate(self, quarter_turns: i64) -> Heading {
        Heading::from_index((self.index() as i64 + quarter_turns).rem_euclid(4) as usize)
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn is_perpendicular(self, other: Heading) -> bool {
        (self.index() + other.index()) % 2 == 1
    }

    /// Angle in radians in grid space (east = 0, south = +π/2).
    pub fn angle(self) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        match self {
            Heading::East => 0.0,
            Heading::South => FRAC_PI_2,
            Heading::West => 2.0 * FRAC_PI_2,
            Heading::North => -FRAC_PI_2,
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Heading::North => "north",
            Heading::East => "east",
            Heading::South => "south",
            Heading::West => "west",
        };
        f.write_str(s)
    }
}

impl FromStr for Heading {
    type Err = TrackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "north" | "n" => Ok(Heading::North),
            "east" | "e" => Ok(Heading::East),
            "south" | "s" => Ok(Heading::South),
            "west" | "w" => Ok(Heading::West),
            other => Err(TrackError::UnknownHeading(other.to_string())),
        }
    }
}

/// The six tile kinds a track can be built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileKind {
    StartFinish,
    Straight,
    CurveLeft,
    CurveRight,
    Loop,
    Ramp,
}

impl TileKind {
    /// Kinds a genome may contain. The start tile is always implicit.
    pub const GENOME_KINDS: [TileKind; 5] = [
        TileKind::Straight,
        TileKind::CurveLeft,
        TileKind::CurveRight,
        TileKind::Loop,
        TileKind::Ramp,
    ];

    /// Kinds the circuit closer is allowed to place.
    pub const SIMPLE_KINDS: [TileKind; 3] = [
        TileKind::Straight,
        TileKind::CurveLeft,
        TileKind::CurveRight,
    ];

    pub fn footprint(self) -> usize {
        match self {
            TileKind::Loop | TileKind::Ramp => 3,
            _ => 1,
        }
    }

    pub fn is_event(self) -> bool {
        matches!(self, TileKind::Loop | TileKind::Ramp)
    }

    pub fn is_turn(self) -> bool {
        matches!(self, TileKind::CurveLeft | TileKind::CurveRight)
    }

    /// Exit heading for a piece entered with `entry`.
    pub fn exit_heading(self, entry: Heading) -> Heading {
        match self {
            TileKind::CurveLeft => entry.left(),
            TileKind::CurveRight => entry.right(),
            _ => entry,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TileKind::StartFinish => "start_finish",
            TileKind::Straight => "straight",
            TileKind::CurveLeft => "curve_left",
            TileKind::CurveRight => "curve_right",
            TileKind::Loop => "loop",
            TileKind::Ramp => "ramp",
        }
    }
}

impl fmt::Display for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TileKind {
    type Err = TrackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "start_finish" | "start" => Ok(TileKind::StartFinish),
            "straight" | "s" => Ok(TileKind::Straight),
            "curve_left" | "left" | "l" => Ok(TileKind::CurveLeft),
            "curve_right" | "right" | "r" => Ok(TileKind::CurveRight),
            "loop" | "o" => Ok(TileKind::Loop),
            "ramp" | "bridge" | "b" => Ok(TileKind::Ramp),
            other => Err(TrackError::UnknownTile(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        GridPos { x, y }
    }

    pub fn step(self, heading: Heading) -> GridPos {
        let (dx, dy) = heading.delta();
        GridPos::new(self.x + dx, self.y + dy)
    }

    pub fn offset(self, heading: Heading, n: i32) -> GridPos {
        let (dx, dy) = heading.delta();
        GridPos::new(self.x + dx * n, self.y + dy * n)
    }

    pub fn manhattan(self, other: GridPos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("unknown tile kind `{0}`")]
    UnknownTile(String),
    #[error("unknown heading `{0}`")]
    UnknownHeading(String),
    #[error("genomes cannot contain the start/finish tile (index {0})")]
    StartInGenome(usize),
    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),
    #[error("track record does not replay: {0}")]
    BadRecord(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    Collision,
    OutOfBounds,
    NoPath,
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InfeasibleReason::Collision => "collision",
            InfeasibleReason::OutOfBounds => "out of bounds",
            InfeasibleReason::NoPath => "no closing path",
        };
        f.write_str(s)
    }
}

/// A track that cannot be played. Designers turn this into the worst reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("infeasible track: {reason} at piece {piece}")]
pub struct Infeasible {
    pub reason: InfeasibleReason,
    /// Index into the would-be piece list (0 is the start tile).
    pub piece: usize,
}

/// Grid dimensions, start placement and the crossing rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: u32,
    pub height: u32,
    pub origin: GridPos,
    pub initial_heading: Heading,
    /// Allow a straight to pass under a perpendicular ramp's raised cell.
    pub underpass: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 32,
            height: 32,
            origin: GridPos::new(16, 16),
            initial_heading: Heading::East,
            underpass: true,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        if self.width == 0 || self.height == 0 {
            return Err(TrackError::InvalidGrid("grid must be non-empty".into()));
        }
        if !self.contains(self.origin) {
            return Err(TrackError::InvalidGrid(format!(
                "origin ({}, {}) outside {}x{} grid",
                self.origin.x, self.origin.y, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: GridPos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as u32) < self.width && (p.y as u32) < self.height
    }
}

/// Fixed-length tile sequence. The start tile is implicit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome {
    pieces: Vec<TileKind>,
}

impl Genome {
    pub fn new(pieces: Vec<TileKind>) -> Result<Genome, TrackError> {
        if let Some(i) = pieces.iter().position(|k| *k == TileKind::StartFinish) {
            return Err(TrackError::StartInGenome(i));
        }
        Ok(Genome { pieces })
    }

    pub fn pieces(&self) -> &[TileKind] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn into_pieces(self) -> Vec<TileKind> {
        self.pieces
    }
}

impl fmt::Display for Genome {
    /// Comma separated kind names, the inverse of `FromStr`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.pieces.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = TrackError;

    /// Comma or whitespace separated kind names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let pieces = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(TileKind::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Genome::new(pieces)
    }
}

/// A tile placed on the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacedPiece {
    pub kind: TileKind,
    /// Occupied cells in traversal order.
    pub cells: Vec<GridPos>,
    pub entry_heading: Heading,
    pub exit_heading: Heading,
    /// The piece's last cell; cars score when they leave it.
    pub checkpoint: GridPos,
    /// Raised cells (a ramp's middle cell), a subset of `cells`.
    pub elevated_cells: Vec<GridPos>,
}

impl PlacedPiece {
    /// Lay `kind` starting at `entry` while travelling along `heading`.
    pub fn new(kind: TileKind, entry: GridPos, heading: Heading) -> PlacedPiece {
        let cells: Vec<GridPos> = (0..kind.footprint() as i32)
            .map(|i| entry.offset(heading, i))
            .collect();
        let elevated_cells = if kind == TileKind::Ramp {
            vec![cells[1]]
        } else {
            Vec::new()
        };
        PlacedPiece {
            kind,
            checkpoint: *cells.last().expect("footprint is at least one cell"),
            cells,
            entry_heading: heading,
            exit_heading: kind.exit_heading(heading),
            elevated_cells,
        }
    }

    pub fn entry_cell(&self) -> GridPos {
        self.cells[0]
    }

    /// The cell the next piece attaches to.
    pub fn next_cell(&self) -> GridPos {
        self.checkpoint.step(self.exit_heading)
    }

    pub fn is_elevated(&self, p: GridPos) -> bool {
        self.elevated_cells.contains(&p)
    }
}

/// A piece occupying one layer of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Occupant {
    pub piece: usize,
    pub kind: TileKind,
    pub heading: Heading,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Occupancy {
    pub ground: Option<Occupant>,
    pub elevated: Option<Occupant>,
}

impl Occupancy {
    pub fn is_empty(&self) -> bool {
        self.ground.is_none() && self.elevated.is_none()
    }
}

/// Two-layer occupancy grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackGrid {
    width: u32,
    height: u32,
    underpass: bool,
    cells: Vec<Occupancy>,
}

impl TrackGrid {
    pub fn new(width: u32, height: u32, underpass: bool) -> TrackGrid {
        TrackGrid {
            width,
            height,
            underpass,
            cells: vec![Occupancy::default(); (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn underpass(&self) -> bool {
        self.underpass
    }

    pub fn contains(&self, p: GridPos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as u32) < self.width && (p.y as u32) < self.height
    }

    fn index(&self, p: GridPos) -> usize {
        p.y as usize * self.width as usize + p.x as usize
    }

    /// Occupancy at `p`; out-of-bounds cells read as empty.
    pub fn get(&self, p: GridPos) -> Occupancy {
        if self.contains(p) {
            self.cells[self.index(p)]
        } else {
            Occupancy::default()
        }
    }

    pub fn is_occupied(&self, p: GridPos) -> bool {
        !self.get(p).is_empty()
    }

    /// Record `piece` on the grid. Callers check collisions first.
    pub fn place(&mut self, piece: &PlacedPiece, index: usize) {
        let occupant = Occupant {
            piece: index,
            kind: piece.kind,
            heading: piece.entry_heading,
        };
        for &c in &piece.cells {
            let i = self.index(c);
            if piece.is_elevated(c) {
                self.cells[i].elevated = Some(occupant);
            } else {
                self.cells[i].ground = Some(occupant);
            }
        }
    }

    /// Undo `place` for a piece that was placed without collision.
    pub fn remove(&mut self, piece: &PlacedPiece) {
        for &c in &piece.cells {
            let i = self.index(c);
            if piece.is_elevated(c) {
                self.cells[i].elevated = None;
            } else {
                self.cells[i].ground = None;
            }
        }
    }

    pub fn ground_cells(&self) -> usize {
        self.cells.iter().filter(|o| o.ground.is_some()).count()
    }

    pub fn elevated_cells(&self) -> usize {
        self.cells.iter().filter(|o| o.elevated.is_some()).count()
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.iter().filter(|o| !o.is_empty()).count()
    }
}

/// Whether `piece` overlaps something already on `grid`.
///
/// The only overlap tolerated is a straight crossing under a ramp's raised
/// middle cell at a right angle, and only with the underpass rule enabled.
pub fn collision_check(grid: &TrackGrid, piece: &PlacedPiece) -> bool {
    piece.cells.iter().any(|&c| {
        let occ = grid.get(c);
        if !grid.underpass {
            return !occ.is_empty();
        }
        if piece.is_elevated(c) {
            match (occ.elevated, occ.ground) {
                (Some(_), _) => true,
                (None, Some(g)) => !crossing_allowed(g, piece.kind, piece.entry_heading, false),
                (None, None) => false,
            }
        } else {
            match (occ.ground, occ.elevated) {
                (Some(_), _) => true,
                (None, Some(e)) => !crossing_allowed(e, piece.kind, piece.entry_heading, true),
                (None, None) => false,
            }
        }
    })
}

fn crossing_allowed(existing: Occupant, kind: TileKind, heading: Heading, below: bool) -> bool {
    let (ramp, straight) = if below {
        ((existing.kind, existing.heading), (kind, heading))
    } else {
        ((kind, heading), (existing.kind, existing.heading))
    };
    ramp.0 == TileKind::Ramp
        && straight.0 == TileKind::Straight
        && ramp.1.is_perpendicular(straight.1)
}

/// Per-category tile usage; doubles as the exploration archive key.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct TileCounts {
    pub straights: usize,
    pub turns: usize,
    pub loops: usize,
    pub ramps: usize,
    pub closure_length: usize,
}

impl TileCounts {
    /// Straights and turns, including the closing tiles.
    pub fn simple_tiles(&self) -> usize {
        self.straights + self.turns + self.closure_length
    }

    pub fn event_tiles(&self) -> usize {
        self.loops + self.ramps
    }
}

/// A decoded track: start tile, genome pieces, then closing pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub config: GridConfig,
    pub genome: Genome,
    pub pieces: Vec<PlacedPiece>,
    pub grid: TrackGrid,
    /// A closed, playable circuit.
    pub feasible: bool,
    pub closure_length: usize,
}

impl Track {
    pub fn start(&self) -> &PlacedPiece {
        &self.pieces[0]
    }

    /// Pieces decoded from the genome (without the start tile or closure).
    pub fn genome_pieces(&self) -> &[PlacedPiece] {
        let end = (1 + self.genome.len()).min(self.pieces.len());
        &self.pieces[1..end]
    }

    pub fn closure_pieces(&self) -> &[PlacedPiece] {
        let start = (1 + self.genome.len()).min(self.pieces.len());
        &self.pieces[start..]
    }

    pub fn last(&self) -> &PlacedPiece {
        self.pieces
            .last()
            .expect("a track always holds its start tile")
    }

    /// The last piece leads back into the start tile with its heading.
    pub fn is_closed(&self) -> bool {
        let last = self.last();
        self.pieces.len() > 1
            && last.next_cell() == self.config.origin
            && last.exit_heading == self.config.initial_heading
    }

    pub fn checkpoints(&self) -> Vec<GridPos> {
        self.pieces.iter().map(|p| p.checkpoint).collect()
    }

    pub fn record(&self) -> TrackRecord {
        TrackRecord {
            grid_size: [self.config.width, self.config.height],
            origin: [self.config.origin.x, self.config.origin.y],
            initial_heading: self.config.initial_heading,
            underpass: self.config.underpass,
            genome: self.genome.pieces().to_vec(),
            closure: self.closure_pieces().iter().map(|p| p.kind).collect(),
            feasible: self.feasible,
        }
    }

    /// Canonical JSON form of [`Track::record`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.record()).expect("track records always serialize")
    }

    /// Append a piece after the current last one.
    pub(crate) fn push_piece(&mut self, kind: TileKind) -> Result<(), Infeasible> {
        let last = self.last();
        let piece = PlacedPiece::new(kind, last.next_cell(), last.exit_heading);
        let index = self.pieces.len();
        if piece.cells.iter().any(|c| !self.grid.contains(*c)) {
            return Err(Infeasible {
                reason: InfeasibleReason::OutOfBounds,
                piece: index,
            });
        }
        if collision_check(&self.grid, &piece) {
            return Err(Infeasible {
                reason: InfeasibleReason::Collision,
                piece: index,
            });
        }
        self.grid.place(&piece, index);
        self.pieces.push(piece);
        Ok(())
    }
}

/// Serialized track. Field names are stable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub grid_size: [u32; 2],
    pub origin: [i32; 2],
    pub initial_heading: Heading,
    #[serde(default = "default_underpass")]
    pub underpass: bool,
    pub genome: Vec<TileKind>,
    pub closure: Vec<TileKind>,
    pub feasible: bool,
}

fn default_underpass() -> bool {
    true
}

impl TrackRecord {
    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            width: self.grid_size[0],
            height: self.grid_size[1],
            origin: GridPos::new(self.origin[0], self.origin[1]),
            initial_heading: self.initial_heading,
            underpass: self.underpass,
        }
    }

    /// Rebuild the track by replaying genome and closure placements.
    pub fn replay(&self) -> Result<Track, TrackError> {
        let genome = Genome::new(self.genome.clone())?;
        let mut track = decode(&genome, &self.grid_config())
            .map_err(|e| TrackError::BadRecord(e.to_string()))?;
        for &kind in &self.closure {
            if !TileKind::SIMPLE_KINDS.contains(&kind) {
                return Err(TrackError::BadRecord(format!("closure contains {kind}")));
            }
            track
                .push_piece(kind)
                .map_err(|e| TrackError::BadRecord(e.to_string()))?;
        }
        track.closure_length = self.closure.len();
        track.feasible = track.is_closed();
        if track.feasible != self.feasible {
            return Err(TrackError::BadRecord(format!(
                "record says feasible={} but replay gives {}",
                self.feasible, track.feasible
            )));
        }
        Ok(track)
    }

    pub fn from_json(s: &str) -> Result<TrackRecord, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Decode a genome into an open track.
///
/// The start tile sits at the configured origin; genome pieces follow in
/// order. The result is not yet a circuit, see [`crate::closure`].
pub fn decode(genome: &Genome, config: &GridConfig) -> Result<Track, Infeasible> {
    if config.validate().is_err() {
        return Err(Infeasible {
            reason: InfeasibleReason::OutOfBounds,
            piece: 0,
        });
    }
    let mut grid = TrackGrid::new(config.width, config.height, config.underpass);
    let start = PlacedPiece::new(TileKind::StartFinish, config.origin, config.initial_heading);
    grid.place(&start, 0);
    let mut track = Track {
        config: config.clone(),
        genome: genome.clone(),
        pieces: vec![start],
        grid,
        feasible: false,
        closure_length: 0,
    };
    for &kind in genome.pieces() {
        track.push_piece(kind)?;
    }
    Ok(track)
}

/// Tile usage over the genome-placed pieces, plus the closure length.
pub fn tile_counts(track: &Track) -> TileCounts {
    let mut counts = TileCounts {
        closure_length: track.closure_length,
        ..TileCounts::default()
    };
    for kind in track.genome.pieces() {
        match kind {
            TileKind::Straight => counts.straights += 1,
            TileKind::CurveLeft | TileKind::CurveRight => counts.turns += 1,
            TileKind::Loop => counts.loops += 1,
            TileKind::Ramp => counts.ramps += 1,
            TileKind::StartFinish => {}
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use TileKind::*;

    fn genome(kinds: &[TileKind]) -> Genome {
        Genome::new(kinds.to_vec()).unwrap()
    }

    #[test]
    fn ten_straights_run_east() {
        let track = decode(&genome(&[Straight; 10]), &GridConfig::default()).unwrap();
        assert_eq!(track.pieces.len(), 11);
        assert_eq!(track.last().checkpoint, GridPos::new(26, 16));
        // 11 cells including the start tile
        assert_eq!(track.grid.ground_cells(), 11);
        assert_eq!(track.last().next_cell(), GridPos::new(27, 16));
        assert!(!track.feasible);
    }

    #[test]
    fn four_left_turns_hit_the_start() {
        let err = decode(
            &genome(&[CurveLeft, CurveLeft, CurveLeft, CurveLeft, Straight]),
            &GridConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.reason, InfeasibleReason::Collision);
        assert_eq!(err.piece, 4);
    }

    #[test]
    fn eleven_loops_leave_the_grid() {
        let err = decode(&genome(&[Loop; 11]), &GridConfig::default()).unwrap_err();
        assert_eq!(err.reason, InfeasibleReason::OutOfBounds);
        // loops 1..=5 end at x = 31; the sixth would reach x = 34
        assert_eq!(err.piece, 6);
    }

    #[test]
    fn collision_on_empty_grid_is_false() {
        let grid = TrackGrid::new(8, 8, true);
        let piece = PlacedPiece::new(Loop, GridPos::new(1, 1), Heading::East);
        assert!(!collision_check(&grid, &piece));
    }

    fn grid_with_ramp() -> TrackGrid {
        let mut grid = TrackGrid::new(8, 8, true);
        let ramp = PlacedPiece::new(Ramp, GridPos::new(1, 3), Heading::East);
        grid.place(&ramp, 0);
        grid
    }

    #[test]
    fn perpendicular_straight_passes_under_ramp() {
        let grid = grid_with_ramp();
        let under = PlacedPiece::new(Straight, GridPos::new(2, 3), Heading::North);
        assert!(!collision_check(&grid, &under));
        let mut strict = TrackGrid::new(8, 8, false);
        strict.place(
            &PlacedPiece::new(Ramp, GridPos::new(1, 3), Heading::East),
            0,
        );
        assert!(collision_check(&strict, &under));
    }

    #[test]
    fn parallel_straight_under_ramp_collides() {
        let grid = grid_with_ramp();
        let under = PlacedPiece::new(Straight, GridPos::new(2, 3), Heading::East);
        assert!(collision_check(&grid, &under));
        let curve = PlacedPiece::new(CurveLeft, GridPos::new(2, 3), Heading::North);
        assert!(collision_check(&grid, &curve));
    }

    #[test]
    fn ramp_may_cross_over_existing_straight() {
        let mut grid = TrackGrid::new(8, 8, true);
        grid.place(
            &PlacedPiece::new(Straight, GridPos::new(2, 3), Heading::South),
            0,
        );
        let ramp = PlacedPiece::new(Ramp, GridPos::new(1, 3), Heading::East);
        assert!(!collision_check(&grid, &ramp));
        let parallel = PlacedPiece::new(Ramp, GridPos::new(2, 2), Heading::South);
        assert!(collision_check(&grid, &parallel));
    }

    #[test]
    fn tile_counts_follow_genome() {
        let track = decode(&genome(&[Straight; 10]), &GridConfig::default()).unwrap();
        let mut counts = tile_counts(&track);
        assert_eq!(
            counts,
            TileCounts {
                straights: 10,
                ..Default::default()
            }
        );
        let mut closed = track.clone();
        closed.closure_length = 4;
        counts = tile_counts(&closed);
        assert_eq!(
            counts,
            TileCounts {
                straights: 10,
                turns: 0,
                loops: 0,
                ramps: 0,
                closure_length: 4
            }
        );

        let track = decode(
            &genome(&[Straight, CurveLeft, Loop, Ramp, CurveRight]),
            &GridConfig::default(),
        )
        .unwrap();
        let c = tile_counts(&track);
        assert_eq!((c.straights, c.turns, c.loops, c.ramps), (1, 2, 1, 1));

        let empty = decode(&genome(&[]), &GridConfig::default()).unwrap();
        assert_eq!(tile_counts(&empty), TileCounts::default());
    }

    #[test]
    fn start_tile_rejected_in_genome() {
        assert_eq!(
            Genome::new(vec![Straight, StartFinish]).unwrap_err(),
            TrackError::StartInGenome(1)
        );
    }

    #[test]
    fn genome_parses_from_names() {
        let g: Genome = "straight, curve_left loop,ramp".parse().unwrap();
        assert_eq!(g.pieces(), &[Straight, CurveLeft, Loop, Ramp]);
        assert!("straight,wiggle".parse::<Genome>().is_err());
    }

    #[test]
    fn heading_rotation_wraps() {
        for h in Heading::ALL {
            assert_eq!(h.left().right(), h);
            assert_eq!(h.rotate(4), h);
            assert_eq!(h.rotate(-1), h.left());
            assert_eq!(h.opposite().opposite(), h);
        }
        assert_eq!(Heading::East.left(), Heading::North);
        assert_eq!(Heading::East.right(), Heading::South);
    }
}
