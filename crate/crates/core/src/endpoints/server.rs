use std::collections::VecDeque;

use crate::noc::{PacketMeta, PayloadShape, RouteTarget, TrafficClass, Transaction, TxnKind};

use super::memory::Memory;

/// Where the response to a delivered request goes, if anywhere.
pub fn response_target(meta: &PacketMeta) -> Option<RouteTarget> {
    match meta.target {
        RouteTarget::Unicast(_) => Some(RouteTarget::Unicast(meta.src)),
        RouteTarget::Multicast { id, join: true, .. } => Some(RouteTarget::JoinResponse(id)),
        _ => None,
    }
}

/// Fixed-latency memory that answers reads and writes in arrival order
/// (cluster SPM, host stub, system SPM).
#[derive(Debug)]
pub struct MemServer {
    pub mem: Memory,
    latency: u64,
    pending: VecDeque<(u64, RouteTarget, Transaction, TrafficClass)>,
}

impl MemServer {
    pub fn new(mem: Memory, latency: u64) -> Self {
        MemServer {
            mem,
            latency,
            pending: VecDeque::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn accept(&mut self, now: u64, meta: &PacketMeta, req: &Transaction) {
        let rsp = match req.kind {
            TxnKind::WriteReq => {
                self.mem.write(req.address, &req.payload);
                Transaction::write_rsp(req.id, req.address, true)
            }
            TxnKind::ReadReq => serve_read(&self.mem, req),
            _ => return,
        };
        if let Some(t) = response_target(meta) {
            self.pending
                .push_back((now + self.latency, t, rsp, meta.class));
        }
    }

    /// Responses due at `now`.
    pub fn due(&mut self, now: u64) -> Vec<(RouteTarget, Transaction, TrafficClass)> {
        let mut out = Vec::new();
        while self.pending.front().is_some_and(|p| p.0 <= now) {
            let (_, t, r, c) = self.pending.pop_front().unwrap();
            out.push((t, r, c));
        }
        out
    }
}

pub fn serve_read(mem: &Memory, req: &Transaction) -> Transaction {
    match req.shape {
        PayloadShape::Packed { elem_size } => {
            let data = req
                .packed_addresses()
                .iter()
                .flat_map(|&a| mem.read(a, elem_size as usize))
                .collect();
            let mut t = Transaction::read_rsp(req.id, req.address, data);
            t.shape = req.shape;
            t
        }
        PayloadShape::Linear => Transaction::read_rsp(
            req.id,
            req.address,
            mem.read(req.address, req.length as usize),
        ),
    }
}
