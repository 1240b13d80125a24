//! Closing an open track into a circuit with straights and curves.
//!
//! The search runs over `(cell, heading)` states: a state is the next cell to
//! fill together with the heading a car enters it with. Placing a straight or
//! a curve costs one tile and leads to the following state. The goal is the
//! start tile's cell entered along the initial heading.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::track::{
    collision_check, GridPos, Heading, Infeasible, InfeasibleReason, PlacedPiece, TileKind, Track,
    TrackGrid,
};

/// Upper bound on nodes visited by the self-avoiding fallback search.
const FALLBACK_NODE_LIMIT: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct State {
    cell: GridPos,
    heading: Heading,
}

struct StateSpace {
    width: i32,
    height: i32,
}

impl StateSpace {
    fn new(grid: &TrackGrid) -> Self {
        StateSpace {
            width: grid.width() as i32,
            height: grid.height() as i32,
        }
    }

    fn len(&self) -> usize {
        (self.width * self.height * 4) as usize
    }

    fn index(&self, s: State) -> Option<usize> {
        if s.cell.x < 0 || s.cell.y < 0 || s.cell.x >= self.width || s.cell.y >= self.height {
            return None;
        }
        Some(((s.cell.y * self.width + s.cell.x) * 4) as usize + s.heading.index())
    }

    fn state(&self, i: usize) -> State {
        let cell = i / 4;
        State {
            cell: GridPos::new((cell as i32) % self.width, (cell as i32) / self.width),
            heading: Heading::from_index(i % 4),
        }
    }
}

/// Straight first, then turns ordered by resulting heading N, E, S, W.
fn expansion_order(heading: Heading) -> [TileKind; 3] {
    let (l, r) = (heading.left(), heading.right());
    if l.index() < r.index() {
        [
            TileKind::Straight,
            TileKind::CurveLeft,
            TileKind::CurveRight,
        ]
    } else {
        [
            TileKind::Straight,
            TileKind::CurveRight,
            TileKind::CurveLeft,
        ]
    }
}

fn successor(grid: &TrackGrid, s: State, kind: TileKind) -> Option<(PlacedPiece, State)> {
    let piece = PlacedPiece::new(kind, s.cell, s.heading);
    if !grid.contains(s.cell) || collision_check(grid, &piece) {
        return None;
    }
    let next = State {
        cell: piece.next_cell(),
        heading: piece.exit_heading,
    };
    Some((piece, next))
}

/// Shortest tile sequence leading from `(from, heading)` into `(to, to_heading)`.
///
/// Returns `None` when the target cannot be reached. Equal-cost paths are
/// resolved by expansion order, so the result is deterministic.
pub fn shortest_closure(
    grid: &TrackGrid,
    from: GridPos,
    heading: Heading,
    to: GridPos,
    to_heading: Heading,
) -> Option<Vec<TileKind>> {
    let source = State {
        cell: from,
        heading,
    };
    let goal = State {
        cell: to,
        heading: to_heading,
    };
    if source == goal {
        return Some(Vec::new());
    }
    let path = dijkstra(grid, source, goal)?;
    if placeable(grid, source, &path) {
        return Some(path);
    }
    // The cheapest state path crosses itself; search self-avoiding sequences.
    self_avoiding_closure(grid, source, goal)
}

fn dijkstra(grid: &TrackGrid, source: State, goal: State) -> Option<Vec<TileKind>> {
    let space = StateSpace::new(grid);
    let src = space.index(source)?;
    let n = space.len();
    let mut dist = vec![u32::MAX; n];
    let mut prev: Vec<Option<(usize, TileKind)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    dist[src] = 0;
    heap.push(Reverse((0u32, seq, src)));

    while let Some(Reverse((d, _, i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let s = space.state(i);
        if s == goal {
            let mut path = Vec::with_capacity(d as usize);
            let mut cur = i;
            while let Some((p, kind)) = prev[cur] {
                path.push(kind);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        if s.cell == goal.cell {
            // the start tile is occupied; only the aligned entry counts
            continue;
        }
        for kind in expansion_order(s.heading) {
            let Some((_, next)) = successor(grid, s, kind) else {
                continue;
            };
            let Some(j) = space.index(next) else {
                continue;
            };
            let nd = d + 1;
            if nd < dist[j] {
                dist[j] = nd;
                prev[j] = Some((i, kind));
                seq += 1;
                heap.push(Reverse((nd, seq, j)));
            }
        }
    }
    None
}

fn placeable(grid: &TrackGrid, source: State, path: &[TileKind]) -> bool {
    let mut scratch = grid.clone();
    let mut s = source;
    for (n, &kind) in path.iter().enumerate() {
        match successor(&scratch, s, kind) {
            Some((piece, next)) => {
                scratch.place(&piece, usize::MAX - n);
                s = next;
            }
            None => return false,
        }
    }
    true
}

/// Exact distances to `goal` on the static grid, by reverse breadth-first search.
fn distances_to_goal(grid: &TrackGrid, goal: State) -> Vec<u32> {
    let space = StateSpace::new(grid);
    let mut dist = vec![u32::MAX; space.len()];
    let Some(g) = space.index(goal) else {
        return dist;
    };
    dist[g] = 0;
    let mut queue = std::collections::VecDeque::from([g]);
    while let Some(j) = queue.pop_front() {
        let t = space.state(j);
        // predecessor cell: the one the car leaves to enter `t.cell`
        let cell = t.cell.step(t.heading.opposite());
        for kind in TileKind::SIMPLE_KINDS {
            let entry = match kind {
                TileKind::CurveLeft => t.heading.right(),
                TileKind::CurveRight => t.heading.left(),
                _ => t.heading,
            };
            let s = State {
                cell,
                heading: entry,
            };
            if s.cell == goal.cell {
                continue;
            }
            let Some(i) = space.index(s) else { continue };
            if dist[i] != u32::MAX || successor(grid, s, kind).is_none() {
                continue;
            }
            dist[i] = dist[j] + 1;
            queue.push_back(i);
        }
    }
    dist
}

fn self_avoiding_closure(grid: &TrackGrid, source: State, goal: State) -> Option<Vec<TileKind>> {
    let space = StateSpace::new(grid);
    let h = distances_to_goal(grid, goal);
    let start = h[space.index(source)?];
    if start == u32::MAX {
        return None;
    }
    let mut scratch = grid.clone();
    let mut path = Vec::new();
    let mut nodes = 0usize;
    let free = grid.width() * grid.height();
    for limit in start..=free {
        if bounded_search(
            &mut scratch,
            &space,
            &h,
            source,
            goal,
            limit,
            &mut path,
            &mut nodes,
        ) {
            return Some(path);
        }
        if nodes > FALLBACK_NODE_LIMIT {
            break;
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn bounded_search(
    grid: &mut TrackGrid,
    space: &StateSpace,
    h: &[u32],
    s: State,
    goal: State,
    limit: u32,
    path: &mut Vec<TileKind>,
    nodes: &mut usize,
) -> bool {
    if s == goal {
        return true;
    }
    *nodes += 1;
    if *nodes > FALLBACK_NODE_LIMIT || s.cell == goal.cell {
        return false;
    }
    let Some(i) = space.index(s) else {
        return false;
    };
    if h[i] == u32::MAX || path.len() as u32 + h[i] > limit {
        return false;
    }
    for kind in expansion_order(s.heading) {
        let Some((piece, next)) = successor(grid, s, kind) else {
            continue;
        };
        grid.place(&piece, usize::MAX);
        path.push(kind);
        if bounded_search(grid, space, h, next, goal, limit, path, nodes) {
            return true;
        }
        path.pop();
        grid.remove(&piece);
    }
    false
}

/// Close `track` into a circuit.
///
/// Already-closed tracks are returned unchanged.
pub fn close_circuit(track: &Track) -> Result<Track, Infeasible> {
    if track.is_closed() {
        let mut closed = track.clone();
        closed.feasible = true;
        return Ok(closed);
    }
    let last = track.last();
    let no_path = Infeasible {
        reason: InfeasibleReason::NoPath,
        piece: track.pieces.len(),
    };
    let path = shortest_closure(
        &track.grid,
        last.next_cell(),
        last.exit_heading,
        track.config.origin,
        track.config.initial_heading,
    )
    .ok_or(no_path)?;

    let mut closed = track.clone();
    for &kind in &path {
        closed.push_piece(kind).map_err(|_| no_path)?;
    }
    closed.closure_length += path.len();
    closed.feasible = closed.is_closed();
    if !closed.feasible {
        return Err(no_path);
    }
    Ok(closed)
}

/// Number of tiles the closer placed.
pub fn path_length(track: &Track) -> usize {
    track.closure_length
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{decode, Genome, GridConfig};
    use TileKind::*;

    fn open(kinds: &[TileKind], config: &GridConfig) -> Track {
        decode(&Genome::new(kinds.to_vec()).unwrap(), config).unwrap()
    }

    #[test]
    fn corridor_fills_with_three_straights() {
        let config = GridConfig {
            initial_heading: Heading::West,
            ..GridConfig::default()
        };
        let track = open(&[], &config);
        let path = shortest_closure(
            &track.grid,
            GridPos::new(19, 16),
            Heading::West,
            GridPos::new(16, 16),
            Heading::West,
        )
        .unwrap();
        assert_eq!(path, vec![Straight, Straight, Straight]);
    }

    #[test]
    fn already_aligned_exit_needs_no_tiles() {
        let g = [CurveRight, CurveRight, Straight, CurveRight, CurveRight];
        let track = open(&g, &GridConfig::default());
        assert!(track.is_closed());
        let closed = close_circuit(&track).unwrap();
        assert_eq!(path_length(&closed), 0);
        assert!(closed.feasible);
    }

    #[test]
    fn closes_minimal_square() {
        let track = open(&[CurveRight, CurveRight], &GridConfig::default());
        let closed = close_circuit(&track).unwrap();
        assert_eq!(
            closed
                .closure_pieces()
                .iter()
                .map(|p| p.kind)
                .collect::<Vec<_>>(),
            vec![Straight, CurveRight, CurveRight]
        );
        assert_eq!(path_length(&closed), closed.record().closure.len());
        let again = close_circuit(&closed).unwrap();
        assert_eq!(again, closed);
    }

    #[test]
    fn enclosed_start_has_no_path() {
        // three left turns bring the next cell back onto the start tile
        let track = open(&[CurveLeft, CurveLeft, CurveLeft], &GridConfig::default());
        let err = close_circuit(&track).unwrap_err();
        assert_eq!(err.reason, InfeasibleReason::NoPath);
    }

    #[test]
    fn straight_track_closes_around() {
        let track = open(&[Straight; 10], &GridConfig::default());
        let closed = close_circuit(&track).unwrap();
        assert!(closed.feasible);
        // two-lane hairpin: 4 curves and the return leg of 10 straights
        assert_eq!(path_length(&closed), 15);
        assert!(closed
            .closure_pieces()
            .iter()
            .all(|p| TileKind::SIMPLE_KINDS.contains(&p.kind)));
    }

    #[test]
    fn closure_paths_are_always_placeable() {
        let mut grid = TrackGrid::new(6, 6, true);
        for (x, y) in [(2, 2), (3, 2), (2, 3), (4, 4), (0, 5)] {
            grid.place(
                &PlacedPiece::new(Straight, GridPos::new(x, y), Heading::East),
                99,
            );
        }
        let goal = State {
            cell: GridPos::new(2, 2),
            heading: Heading::East,
        };
        for y in 0..6 {
            for x in 0..6 {
                for heading in Heading::ALL {
                    let source = State {
                        cell: GridPos::new(x, y),
                        heading,
                    };
                    if grid.is_occupied(source.cell) || source == goal {
                        continue;
                    }
                    let fast = dijkstra(&grid, source, goal);
                    let found =
                        shortest_closure(&grid, source.cell, heading, goal.cell, goal.heading);
                    if let Some(path) = &found {
                        assert!(placeable(&grid, source, path));
                    }
                    if let Some(fast) = fast.filter(|p| placeable(&grid, source, p)) {
                        let exact = self_avoiding_closure(&grid, source, goal).unwrap();
                        assert_eq!(exact.len(), fast.len());
                    }
                }
            }
        }
    }
}
