//! HBM channel as a fixed-latency bandwidth server, fronted by a temporal
//! coalescer for unpacked narrow requests.

use std::collections::VecDeque;

use crate::config::HbmConfig;
use crate::error::{Result, SimError};
use crate::noc::{PacketMeta, PayloadShape, Transaction, TxnKind};

use super::memory::Memory;
use super::packing::unpack;
use super::server::serve_read;

/// One DRAM access: granule-aligned, a whole number of granules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub addr: u64,
    pub size: u32,
    pub useful: u32,
    /// Tags of the narrow requests served by this access.
    pub members: Vec<u64>,
}

#[derive(Debug, Clone)]
struct PendingGranule {
    base: u64,
    since: u64,
    covered: u64,
    useful: u32,
    members: Vec<u64>,
}

/// Merges narrow requests that hit the same granule within a time window.
/// Fully associative over granule address; the oldest entry is emitted
/// first when the window overflows, and no entry waits past the age limit.
#[derive(Debug, Clone)]
pub struct Coalescer {
    granularity: u64,
    window: usize,
    age_limit: u64,
    pending: Vec<PendingGranule>,
}

impl Coalescer {
    pub fn new(granularity: u32, window: u32, age_limit: u32) -> Self {
        assert!(granularity.is_power_of_two() && granularity <= 64);
        Coalescer {
            granularity: granularity as u64,
            window: window.max(1) as usize,
            age_limit: age_limit as u64,
            pending: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    fn full_mask(&self) -> u64 {
        if self.granularity == 64 {
            u64::MAX
        } else {
            (1u64 << self.granularity) - 1
        }
    }

    /// Adds one request. Returns accesses forced out by window overflow.
    pub fn push(&mut self, addr: u64, size: u8, tag: u64, now: u64) -> Vec<Access> {
        let base = addr - addr % self.granularity;
        let off = addr - base;
        debug_assert!(
            off + size as u64 <= self.granularity,
            "request crosses a granule"
        );
        let bits = if size as u64 >= 64 {
            u64::MAX
        } else {
            ((1u64 << size) - 1) << off
        };
        if let Some(p) = self.pending.iter_mut().find(|p| p.base == base) {
            p.useful += (bits & !p.covered).count_ones();
            p.covered |= bits;
            p.members.push(tag);
            return Vec::new();
        }
        let mut out = Vec::new();
        if self.pending.len() >= self.window {
            out.extend(self.emit(0));
        }
        self.pending.push(PendingGranule {
            base,
            since: now,
            covered: bits,
            useful: bits.count_ones(),
            members: vec![tag],
        });
        out
    }

    /// Emits fully covered granules and those that reached the age limit.
    pub fn tick(&mut self, now: u64) -> Vec<Access> {
        let full = self.full_mask();
        let mut out = Vec::new();
        while let Some(i) = self
            .pending
            .iter()
            .position(|p| p.covered == full || now.saturating_sub(p.since) >= self.age_limit)
        {
            out.extend(self.emit(i));
        }
        out
    }

    pub fn flush(&mut self) -> Vec<Access> {
        let mut out = Vec::new();
        while !self.pending.is_empty() {
            out.extend(self.emit(0));
        }
        out
    }

    fn emit(&mut self, i: usize) -> Option<Access> {
        let p = self.pending.remove(i);
        let buddy = p.base ^ self.granularity;
        let mut acc = Access {
            addr: p.base,
            size: self.granularity as u32,
            useful: p.useful,
            members: p.members,
        };
        if let Some(j) = self.pending.iter().position(|q| q.base == buddy) {
            let q = self.pending.remove(j);
            acc.addr = p.base.min(q.base);
            acc.size *= 2;
            acc.useful += q.useful;
            acc.members.extend(q.members);
        }
        Some(acc)
    }
}

/// Coalesces a batch of requests that all arrive in the same cycle and
/// drains the window.
pub fn hbm_coalesce(
    requests: &[(u64, u8)],
    granularity: u32,
    window: u32,
    age_limit: u32,
) -> Vec<Access> {
    let mut c = Coalescer::new(granularity, window, age_limit);
    let mut out = Vec::new();
    for (i, &(a, s)) in requests.iter().enumerate() {
        out.extend(c.push(a, s, i as u64, 0));
    }
    out.extend(c.tick(0));
    out.extend(c.flush());
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HbmStats {
    pub useful_bytes: u64,
    pub access_bytes: u64,
    pub accesses: u64,
    pub requests: u64,
    pub busy_cycles: u64,
}

#[derive(Debug, Clone)]
struct QueuedAccess {
    remaining: u32,
    access: Access,
}

#[derive(Debug)]
struct HbmRequest {
    meta: PacketMeta,
    txn: Transaction,
    outstanding: usize,
    ready_at: Option<u64>,
}

#[derive(Debug)]
pub struct HbmChannel {
    cfg: HbmConfig,
    coalesce: bool,
    pub mem: Memory,
    coalescer: Coalescer,
    queue: VecDeque<QueuedAccess>,
    requests: VecDeque<HbmRequest>,
    base_seq: u64,
    stats: HbmStats,
}

impl HbmChannel {
    /// `coalesce` enables the temporal coalescer for packed requests;
    /// without it every narrow request becomes its own granule access.
    pub fn new(cfg: HbmConfig, seed: u64, coalesce: bool) -> Self {
        HbmChannel {
            coalescer: Coalescer::new(cfg.granularity, cfg.coalescer_window, cfg.coalescer_age),
            cfg,
            coalesce,
            mem: Memory::new(seed),
            queue: VecDeque::new(),
            requests: VecDeque::new(),
            base_seq: 0,
            stats: HbmStats::default(),
        }
    }

    pub fn stats(&self) -> &HbmStats {
        &self.stats
    }

    pub fn is_idle(&self) -> bool {
        self.requests.is_empty() && self.queue.is_empty() && self.coalescer.is_empty()
    }

    /// Accesses covering `[addr, addr+len)`, split at double-granule boundaries.
    fn linear_accesses(&self, addr: u64, len: u32, tag: u64) -> Vec<Access> {
        let g = self.cfg.granularity as u64;
        let block = 2 * g;
        let end = addr + len.max(1) as u64;
        let mut lo = addr - addr % g;
        let hi = end.div_ceil(g) * g;
        let mut out = Vec::new();
        while lo < hi {
            let next = ((lo / block) + 1) * block;
            let piece_hi = next.min(hi);
            let useful = (piece_hi.min(end) - lo.max(addr)) as u32;
            out.push(Access {
                addr: lo,
                size: (piece_hi - lo) as u32,
                useful: if len == 0 { 0 } else { useful },
                members: vec![tag],
            });
            lo = piece_hi;
        }
        out
    }

    fn enqueue(&mut self, a: Access) {
        self.queue.push_back(QueuedAccess {
            remaining: a.size,
            access: a,
        });
    }

    pub fn accept(&mut self, now: u64, meta: PacketMeta, txn: Transaction) -> Result<()> {
        if !txn.kind.is_request() {
            return Err(SimError::Protocol(format!("HBM received a {:?}", txn.kind)));
        }
        let seq = self.base_seq + self.requests.len() as u64;
        let outstanding = match (txn.kind, txn.shape) {
            (TxnKind::ReadReq, PayloadShape::Packed { .. }) => {
                let reqs = unpack(&txn);
                for r in &reqs {
                    if self.coalesce {
                        let forced = self.coalescer.push(r.addr, r.size, seq, now);
                        forced.into_iter().for_each(|a| self.enqueue(a));
                    } else {
                        for a in self.linear_accesses(r.addr, r.size as u32, seq) {
                            self.enqueue(a);
                        }
                    }
                }
                reqs.len()
            }
            _ => {
                if txn.kind == TxnKind::WriteReq {
                    self.mem.write(txn.address, &txn.payload);
                }
                let acc = self.linear_accesses(txn.address, txn.length, seq);
                let n = acc.len();
                acc.into_iter().for_each(|a| self.enqueue(a));
                n
            }
        };
        self.requests.push_back(HbmRequest {
            meta,
            txn,
            outstanding,
            ready_at: None,
        });
        self.stats.requests += 1;
        Ok(())
    }

    fn complete(&mut self, access: &Access, now: u64) {
        for &tag in &access.members {
            let idx = (tag - self.base_seq) as usize;
            let r = &mut self.requests[idx];
            r.outstanding -= 1;
            if r.outstanding == 0 {
                r.ready_at = Some(now + self.cfg.latency as u64);
            }
        }
    }

    /// Advances one cycle; returns responses released this cycle, in
    /// request arrival order.
    pub fn tick(&mut self, now: u64) -> Vec<(PacketMeta, Transaction)> {
        if self.coalesce {
            for a in self.coalescer.tick(now) {
                self.enqueue(a);
            }
        }
        let mut budget = self.cfg.peak_bytes_per_cycle;
        if !self.queue.is_empty() {
            self.stats.busy_cycles += 1;
        }
        while budget > 0 {
            let Some(front) = self.queue.front_mut() else {
                break;
            };
            let take = budget.min(front.remaining);
            front.remaining -= take;
            budget -= take;
            if front.remaining == 0 {
                let q = self.queue.pop_front().unwrap();
                self.stats.access_bytes += q.access.size as u64;
                self.stats.useful_bytes += q.access.useful as u64;
                self.stats.accesses += 1;
                self.complete(&q.access, now);
            }
        }
        let mut out = Vec::new();
        while let Some(r) = self.requests.front() {
            match r.ready_at {
                Some(t) if t <= now => {}
                _ => break,
            }
            let r = self.requests.pop_front().unwrap();
            self.base_seq += 1;
            out.push((r.meta, self.respond(&r.txn)));
        }
        out
    }

    fn respond(&self, req: &Transaction) -> Transaction {
        match req.kind {
            TxnKind::WriteReq => Transaction::write_rsp(req.id, req.address, true),
            _ => serve_read(&self.mem, req),
        }
    }
}
