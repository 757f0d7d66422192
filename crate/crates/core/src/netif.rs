//! RoB-less network interface: packetizes endpoint transactions, injects
//! one flit per cycle per channel and reassembles ejected packets.
//!
//! Responses with the same id must come back in request order. Without a
//! reorder buffer this holds only if all outstanding requests of an id go
//! to the same destination and answer on the same channel, so a request
//! that would break that is stalled.

use std::collections::{BTreeMap, VecDeque};

use crate::config::NiConfig;
use crate::error::{Result, SimError};
use crate::fabric::Fabric;
use crate::noc::{
    channel_for, depacketize, packetize, response_channel, ChannelKind, ChannelWidths,
    CollectiveId, EndpointId, Flit, PacketMeta, RouteTarget, SourceRoute, TrafficClass,
    Transaction, TxnId, TxnKind,
};

/// Destination an outstanding request is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dest {
    Endpoint(EndpointId),
    Collective(CollectiveId),
}

impl Dest {
    pub fn of(target: RouteTarget) -> Dest {
        match target {
            RouteTarget::Unicast(ep) => Dest::Endpoint(ep),
            RouteTarget::Multicast { id, .. }
            | RouteTarget::BarrierJoin { id, .. }
            | RouteTarget::JoinResponse(id) => Dest::Collective(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stall {
    /// Same id outstanding toward another destination.
    Ordering,
    /// Outstanding table of the id space is full.
    Capacity,
    /// Injection queue of the channel is full.
    Queue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accept {
    Accepted { packet: u64 },
    Stalled(Stall),
}

impl Accept {
    pub fn is_accepted(self) -> bool {
        matches!(self, Accept::Accepted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub meta: PacketMeta,
    pub txn: Transaction,
    pub channel: ChannelKind,
    pub hops: u16,
    pub at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NiStats {
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub requests: u64,
    pub responses: u64,
    pub stalls: u64,
}

#[derive(Debug, Clone, Default)]
struct IdSpace {
    /// Per id: destination, response channel and issue cycle. Responses of
    /// one id stay ordered only along a single destination and channel.
    by_id: BTreeMap<TxnId, VecDeque<(Dest, ChannelKind, u64)>>,
    count: usize,
}

impl IdSpace {
    fn check(&self, id: TxnId, dest: Dest, rsp: ChannelKind, cap: usize) -> Option<Stall> {
        if self.count >= cap {
            return Some(Stall::Capacity);
        }
        match self.by_id.get(&id) {
            Some(q) if q.iter().any(|&(d, c, _)| d != dest || c != rsp) => Some(Stall::Ordering),
            _ => None,
        }
    }

    fn push(&mut self, id: TxnId, dest: Dest, rsp: ChannelKind, now: u64) {
        self.by_id
            .entry(id)
            .or_default()
            .push_back((dest, rsp, now));
        self.count += 1;
    }

    fn pop(&mut self, id: TxnId) -> Option<(Dest, ChannelKind, u64)> {
        let q = self.by_id.get_mut(&id)?;
        let r = q.pop_front();
        if q.is_empty() {
            self.by_id.remove(&id);
        }
        if r.is_some() {
            self.count -= 1;
        }
        r
    }
}

#[derive(Debug, Clone)]
struct Queued {
    flits: VecDeque<Flit>,
    request: bool,
}

#[derive(Debug, Clone)]
pub struct NetIf {
    ep: EndpointId,
    cfg: NiConfig,
    widths: ChannelWidths,
    reads: IdSpace,
    writes: IdSpace,
    queues: [VecDeque<Queued>; 3],
    queued_requests: [usize; 3],
    reasm: BTreeMap<(EndpointId, u64), Vec<Flit>>,
    seq: u64,
    pub stats: NiStats,
}

impl NetIf {
    pub fn new(ep: EndpointId, cfg: NiConfig, widths: ChannelWidths) -> Self {
        NetIf {
            ep,
            cfg,
            widths,
            reads: IdSpace::default(),
            writes: IdSpace::default(),
            queues: Default::default(),
            queued_requests: [0; 3],
            reasm: BTreeMap::new(),
            seq: 0,
            stats: NiStats::default(),
        }
    }

    pub fn endpoint(&self) -> EndpointId {
        self.ep
    }

    pub fn outstanding(&self) -> usize {
        self.reads.count + self.writes.count
    }

    pub fn is_idle(&self) -> bool {
        self.outstanding() == 0 && self.queues.iter().all(|q| q.is_empty()) && self.reasm.is_empty()
    }

    fn space(&mut self, kind: TxnKind) -> &mut IdSpace {
        match kind {
            TxnKind::ReadReq | TxnKind::ReadRsp => &mut self.reads,
            TxnKind::WriteReq | TxnKind::WriteRsp => &mut self.writes,
        }
    }

    fn next_packet(&mut self) -> u64 {
        self.seq += 1;
        ((self.ep.0 as u64) << 40) | self.seq
    }

    fn enqueue(
        &mut self,
        now: u64,
        target: RouteTarget,
        txn: &Transaction,
        class: TrafficClass,
        source_route: Option<SourceRoute>,
        request: bool,
    ) -> Result<u64> {
        let channel = channel_for(txn, &self.widths);
        let packet = self.next_packet();
        let meta = PacketMeta {
            packet,
            src: self.ep,
            target,
            injected_at: now,
            class,
            source_route,
        };
        let flits = packetize(txn, channel, meta, &self.widths, self.cfg.max_burst_bytes)?;
        self.stats.tx_bytes += txn.payload.len() as u64;
        self.queues[channel.index()].push_back(Queued {
            flits: flits.into(),
            request,
        });
        if request {
            self.queued_requests[channel.index()] += 1;
        }
        Ok(packet)
    }

    /// Offers a request. Stalls leave the NI unchanged.
    pub fn send_request(
        &mut self,
        now: u64,
        target: RouteTarget,
        txn: Transaction,
        class: TrafficClass,
        source_route: Option<SourceRoute>,
    ) -> Result<Accept> {
        if !txn.kind.is_request() {
            return Err(SimError::Rejected(format!(
                "{:?} offered as a request",
                txn.kind
            )));
        }
        txn.validate()?;
        let channel = channel_for(&txn, &self.widths);
        let dest = Dest::of(target);
        let rsp = response_channel(&txn, &self.widths);
        let cap = self.cfg.outstanding as usize;
        let stall = self
            .space(txn.kind)
            .check(txn.id, dest, rsp, cap)
            .or_else(|| {
                (self.queued_requests[channel.index()] >= self.cfg.injection_queue as usize)
                    .then_some(Stall::Queue)
            });
        if let Some(s) = stall {
            self.stats.stalls += 1;
            return Ok(Accept::Stalled(s));
        }
        let packet = self.enqueue(now, target, &txn, class, source_route, true)?;
        self.space(txn.kind).push(txn.id, dest, rsp, now);
        self.stats.requests += 1;
        Ok(Accept::Accepted { packet })
    }

    /// Responses are never stalled.
    pub fn send_response(
        &mut self,
        now: u64,
        target: RouteTarget,
        txn: Transaction,
        class: TrafficClass,
        source_route: Option<SourceRoute>,
    ) -> Result<u64> {
        if txn.kind.is_request() {
            return Err(SimError::Rejected(format!(
                "{:?} offered as a response",
                txn.kind
            )));
        }
        self.enqueue(now, target, &txn, class, source_route, false)
    }

    /// Moves at most one flit per channel into the fabric.
    pub fn inject(&mut self, fabric: &mut Fabric, now: u64) {
        for ch in ChannelKind::ALL {
            let c = ch.index();
            let Some(front) = self.queues[c].front_mut() else {
                continue;
            };
            if !fabric.can_inject(self.ep, ch) {
                continue;
            }
            let f = front.flits.pop_front().unwrap();
            fabric.inject(self.ep, f, now);
            if front.flits.is_empty() {
                if front.request {
                    self.queued_requests[c] -= 1;
                }
                self.queues[c].pop_front();
            }
        }
    }

    /// Accepts one ejected flit; returns the packet once its tail arrives.
    pub fn eject(&mut self, flit: Flit, now: u64) -> Result<Option<Delivery>> {
        let key = (flit.meta.src, flit.meta.packet);
        let tail = flit.tail;
        let hops = flit.hops;
        let channel = flit.channel;
        let buf = self.reasm.entry(key).or_default();
        buf.push(flit);
        if !tail {
            return Ok(None);
        }
        let flits = self.reasm.remove(&key).unwrap();
        let (meta, txn) = depacketize(&flits)?;
        self.stats.rx_bytes += txn.payload.len() as u64;
        if !txn.kind.is_request() {
            let kind = txn.kind;
            if self.space(kind).pop(txn.id).is_none() {
                return Err(SimError::Protocol(format!(
                    "{}: {:?} id={} without an outstanding request",
                    self.ep, kind, txn.id
                )));
            }
            self.stats.responses += 1;
        }
        Ok(Some(Delivery {
            meta,
            txn,
            channel,
            hops,
            at: now,
        }))
    }
}
