use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Grid position of a router. `x` grows eastward, `y` grows northward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: u16,
    pub y: u16,
}

impl Coord {
    pub const fn new(x: u16, y: u16) -> Self {
        Coord { x, y }
    }

    pub fn manhattan(self, other: Coord) -> u32 {
        (self.x.abs_diff(other.x) + self.y.abs_diff(other.y)) as u32
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Mesh port of a five-port router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Local = 0,
    North = 1,
    East = 2,
    South = 3,
    West = 4,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::Local,
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Direction::ALL.get(i).copied()
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Local => Direction::Local,
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }

    /// Neighbor coordinate in this direction, if it does not underflow.
    pub fn step(self, c: Coord) -> Option<Coord> {
        match self {
            Direction::Local => Some(c),
            Direction::North => Some(Coord::new(c.x, c.y.checked_add(1)?)),
            Direction::South => Some(Coord::new(c.x, c.y.checked_sub(1)?)),
            Direction::East => Some(Coord::new(c.x.checked_add(1)?, c.y)),
            Direction::West => Some(Coord::new(c.x.checked_sub(1)?, c.y)),
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Direction::Local => "L",
            Direction::North => "N",
            Direction::East => "E",
            Direction::South => "S",
            Direction::West => "W",
        }
    }
}

/// Inclusive, axis-aligned rectangle of router coordinates. Never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    x0: u16,
    y0: u16,
    x1: u16,
    y1: u16,
}

impl Rect {
    pub fn new(x0: u16, y0: u16, x1: u16, y1: u16) -> Result<Rect> {
        if x0 > x1 || y0 > y1 {
            return Err(SimError::Contract(format!(
                "empty rectangle x{x0}..={x1} y{y0}..={y1}"
            )));
        }
        Ok(Rect { x0, y0, x1, y1 })
    }

    pub fn spanning(a: Coord, b: Coord) -> Rect {
        Rect {
            x0: a.x.min(b.x),
            y0: a.y.min(b.y),
            x1: a.x.max(b.x),
            y1: a.y.max(b.y),
        }
    }

    pub fn single(c: Coord) -> Rect {
        Rect::spanning(c, c)
    }

    pub fn x0(&self) -> u16 {
        self.x0
    }
    pub fn y0(&self) -> u16 {
        self.y0
    }
    pub fn x1(&self) -> u16 {
        self.x1
    }
    pub fn y1(&self) -> u16 {
        self.y1
    }

    /// Coordinate-wise minimum corner.
    pub fn min_corner(&self) -> Coord {
        Coord::new(self.x0, self.y0)
    }

    pub fn contains(&self, c: Coord) -> bool {
        (self.x0..=self.x1).contains(&c.x) && (self.y0..=self.y1).contains(&c.y)
    }

    pub fn width(&self) -> u32 {
        (self.x1 - self.x0) as u32 + 1
    }

    pub fn height(&self) -> u32 {
        (self.y1 - self.y0) as u32 + 1
    }

    pub fn len(&self) -> usize {
        (self.width() * self.height()) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major iteration, south row first.
    pub fn iter(&self) -> impl Iterator<Item = Coord> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| Coord::new(x, y)))
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
        .ok()
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}..={}]x[{}..={}]", self.x0, self.x1, self.y0, self.y1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_rect_is_rejected() {
        assert!(Rect::new(2, 0, 1, 0).is_err());
        assert_eq!(Rect::new(0, 0, 3, 1).unwrap().len(), 8);
    }

    #[test]
    fn rect_iter_covers_all() {
        let r = Rect::new(1, 2, 3, 3).unwrap();
        let v: Vec<_> = r.iter().collect();
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|c| r.contains(*c)));
    }
}
