//! Mesh-router specifics: dimension-ordered fork trees, join tables and the
//! barrier aggregation tree.

use crate::error::{Result, SimError};
use crate::noc::{CollectiveId, Coord, Direction, Flit, Rect};

/// Partitions `rect` by the dimension-ordered direction from `cur`. Replicas
/// are returned in port order and carry the sub-rectangle they serve.
pub fn fork_flit(rect: Rect, cur: Coord) -> Vec<(Direction, Rect)> {
    let (cx, cy) = (cur.x, cur.y);
    let mut out = Vec::with_capacity(5);
    let in_column = rect.x0() <= cx && cx <= rect.x1();
    if in_column && rect.y0() <= cy && cy <= rect.y1() {
        out.push((Direction::Local, Rect::single(cur)));
    }
    if in_column && rect.y1() > cy {
        let r = Rect::new(cx, rect.y0().max(cy + 1), cx, rect.y1()).unwrap();
        out.push((Direction::North, r));
    }
    if rect.x1() > cx {
        let r = Rect::new(rect.x0().max(cx + 1), rect.y0(), rect.x1(), rect.y1()).unwrap();
        out.push((Direction::East, r));
    }
    if in_column && rect.y0() < cy {
        let r = Rect::new(cx, rect.y0(), cx, rect.y1().min(cy - 1)).unwrap();
        out.push((Direction::South, r));
    }
    if rect.x0() < cx {
        let r = Rect::new(rect.x0(), rect.y0(), rect.x1().min(cx - 1), rect.y1()).unwrap();
        out.push((Direction::West, r));
    }
    out
}

/// Number of arrivals the barrier tree expects at `cur`: the local
/// participant, the east neighbour's subtree, and on the aggregation column
/// the north neighbour's subtree.
pub fn barrier_expected(rect: Rect, cur: Coord) -> u32 {
    1 + (cur.x < rect.x1()) as u32 + (cur.x == rect.x0() && cur.y < rect.y1()) as u32
}

/// Next hop of a joined barrier request toward the aggregation node, or
/// `None` at the aggregation node itself.
pub fn barrier_next_hop(rect: Rect, cur: Coord) -> Option<Direction> {
    if cur.x > rect.x0() {
        Some(Direction::West)
    } else if cur.y > rect.y0() {
        Some(Direction::South)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct JoinEntry {
    pub id: CollectiveId,
    pub expected: u32,
    pub received: u32,
    pub ok: bool,
    /// Port the merged response leaves through (the fork's input port).
    pub upstream: Option<usize>,
    first: Option<Flit>,
}

/// Bounded per-router join state, keyed by collective id.
#[derive(Debug, Clone)]
pub struct JoinTable {
    cap: usize,
    entries: Vec<JoinEntry>,
}

impl JoinTable {
    pub fn new(cap: usize) -> Self {
        JoinTable {
            cap,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.cap
    }

    pub fn contains(&self, id: CollectiveId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn entries(&self) -> &[JoinEntry] {
        &self.entries
    }

    /// Pre-provisions a counter for a fork passing through. Returns false
    /// when the table is full (the fork must stall).
    pub fn install(
        &mut self,
        id: CollectiveId,
        expected: u32,
        upstream: Option<usize>,
    ) -> Result<bool> {
        if self.contains(id) {
            return Err(SimError::Protocol(format!(
                "collective {} already has join state",
                id.0
            )));
        }
        if self.is_full() {
            return Ok(false);
        }
        self.entries.push(JoinEntry {
            id,
            expected,
            received: 0,
            ok: true,
            upstream,
            first: None,
        });
        Ok(true)
    }

    /// Counts one arrival. Returns the merged flit and the entry's upstream
    /// port once all expected arrivals are in; the entry is then cleared.
    pub fn update(
        &mut self,
        id: CollectiveId,
        flit: Flit,
    ) -> Result<Option<(Flit, Option<usize>)>> {
        let idx = self
            .entries
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| {
                SimError::Protocol(format!("response for unknown collective {}", id.0))
            })?;
        let e = &mut self.entries[idx];
        e.received += 1;
        e.ok &= flit.txn.ok;
        if e.first.is_none() {
            e.first = Some(flit);
        }
        if e.received < e.expected {
            return Ok(None);
        }
        let e = self.entries.remove(idx);
        let mut merged = e.first.unwrap();
        merged.txn.ok = e.ok;
        Ok(Some((merged, e.upstream)))
    }
}

/// Single-step join on a standalone table, installing the entry on first
/// use. Mirrors the router's behaviour for one response.
pub fn join_update(
    table: &mut JoinTable,
    flit: Flit,
    id: CollectiveId,
    expected: u32,
) -> Result<Option<Flit>> {
    if !table.contains(id) && !table.install(id, expected, None)? {
        return Err(SimError::Protocol("join table full".into()));
    }
    Ok(table.update(id, flit)?.map(|(f, _)| f))
}
