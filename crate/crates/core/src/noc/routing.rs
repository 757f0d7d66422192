use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::coord::{Coord, Direction};
use crate::error::{Result, SimError};

/// Static routing algorithm used by mesh routers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingAlgo {
    /// Dimension-ordered, X then Y.
    #[default]
    Xy,
    /// Per-router lookup table generated at build time.
    Table,
    /// Port list computed at the source and carried in the header.
    Source,
}

/// X first, then Y; `Local` once both coordinates match.
pub fn route_dimension_ordered(cur: Coord, dst: Coord) -> Direction {
    use std::cmp::Ordering::*;
    match cur.x.cmp(&dst.x) {
        Less => Direction::East,
        Greater => Direction::West,
        Equal => match cur.y.cmp(&dst.y) {
            Less => Direction::North,
            Greater => Direction::South,
            Equal => Direction::Local,
        },
    }
}

/// Routers visited from `src` to `dst` under XY routing, both ends included.
pub fn xy_path(src: Coord, dst: Coord) -> Vec<Coord> {
    let mut path = vec![src];
    let mut cur = src;
    loop {
        let dir = route_dimension_ordered(cur, dst);
        if dir == Direction::Local {
            return path;
        }
        cur = dir.step(cur).expect("XY step stays on grid");
        path.push(cur);
    }
}

/// Output directions taken at each router from `src` to `dst`, ending in `Local`.
pub fn xy_directions(src: Coord, dst: Coord) -> Vec<Direction> {
    let path = xy_path(src, dst);
    let mut dirs: Vec<Direction> = path
        .windows(2)
        .map(|w| route_dimension_ordered(w[0], w[1]))
        .collect();
    dirs.push(Direction::Local);
    dirs
}

/// Per-(router, destination) output table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteTable {
    entries: BTreeMap<(Coord, Coord), Direction>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: Coord, dst: Coord, dir: Direction) {
        self.entries.insert((node, dst), dir);
    }

    /// Table reproducing dimension-ordered routing on a `cols` × `rows` grid.
    pub fn dimension_ordered(cols: u16, rows: u16) -> Self {
        let mut table = RouteTable::new();
        for nx in 0..cols {
            for ny in 0..rows {
                let node = Coord::new(nx, ny);
                for dx in 0..cols {
                    for dy in 0..rows {
                        let dst = Coord::new(dx, dy);
                        table.insert(node, dst, route_dimension_ordered(node, dst));
                    }
                }
            }
        }
        table
    }

    pub fn lookup(&self, node: Coord, dst: Coord) -> Result<Direction> {
        self.entries
            .get(&(node, dst))
            .copied()
            .ok_or(SimError::Routing { node, dst })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn route_table(node: Coord, table: &RouteTable, dst: Coord) -> Result<Direction> {
    table.lookup(node, dst)
}
