//! Switch fabric shared by the mesh and the crossbar hierarchy: input
//! buffers with credit backpressure, per-output round-robin arbitration,
//! wormhole locks, in-network fork and join, and per-link counters.
//!
//! Every channel of every link is an independent physical channel. Within a
//! cycle all credit decisions use the buffer occupancy sampled at the start
//! of the channel phase, so the outcome does not depend on the order in
//! which switches are visited.

use std::collections::VecDeque;

use crate::endpoints::d2d::D2dLink;
use crate::error::{Result, SimError};
use crate::noc::{
    route_dimension_ordered, ChannelKind, CollectiveId, Coord, Direction, EndpointId, Flit,
    PacketMeta, PayloadShape, Rect, RouteTable, RouteTarget, RoutingAlgo, TrafficClass, TxnHeader,
    TxnId, TxnKind,
};
use crate::router::{barrier_expected, barrier_next_hop, fork_flit, JoinTable};

pub type SwitchId = usize;

/// Transaction id of barrier arrivals and releases.
pub const BARRIER_TXN_ID: TxnId = 0xFFFF;

/// Packet ids of flits generated inside the network have this bit set.
pub const NETWORK_PACKET_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq)]
pub enum OutLink {
    Open,
    Peer {
        sw: SwitchId,
        port: usize,
        latency: u64,
        d2d: Option<usize>,
    },
    Eject(EndpointId),
}

#[derive(Debug, Clone)]
pub enum SwitchKind {
    Router {
        coord: Coord,
    },
    /// Output port per destination endpoint index.
    Xbar {
        routes: Vec<usize>,
    },
}

type Route = Vec<(usize, RouteTarget)>;

#[derive(Debug, Clone)]
struct Slot {
    ready: u64,
    flit: Flit,
    /// Preset route for flits generated by the switch itself.
    route: Option<Route>,
}

#[derive(Debug, Clone)]
struct Input {
    q: VecDeque<Slot>,
    cap: usize,
    route: Option<Route>,
    /// Route entries the front flit has already been sent on.
    sent: u64,
}

impl Input {
    fn new(cap: usize) -> Self {
        Input {
            q: VecDeque::new(),
            cap,
            route: None,
            sent: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct ChannelState {
    inputs: Vec<Input>,
    lock: Vec<Option<usize>>,
    rr: Vec<usize>,
    credit: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortStats {
    pub flits: [u64; 3],
    pub bytes: [u64; 3],
    /// Flits of a different packet seen while another packet was open.
    pub interleavings: [u64; 3],
    open: [Option<u64>; 3],
}

#[derive(Debug, Clone)]
pub struct Switch {
    pub name: String,
    pub kind: SwitchKind,
    pub out: Vec<OutLink>,
    pub stats: Vec<PortStats>,
    ch: [ChannelState; 3],
    joins: JoinTable,
    load: usize,
}

impl Switch {
    /// `caps[p]` is the buffer capacity of input port `p`.
    pub fn new(
        name: String,
        kind: SwitchKind,
        out: Vec<OutLink>,
        caps: &[usize],
        join_cap: usize,
    ) -> Self {
        let p = out.len();
        assert_eq!(caps.len(), p);
        assert!(p < 64, "switch radix limited to 63 ports");
        let mk = || {
            let mut inputs: Vec<Input> = caps.iter().map(|&c| Input::new(c)).collect();
            // internal input for flits the switch generates itself
            inputs.push(Input::new(usize::MAX / 2));
            ChannelState {
                inputs,
                lock: vec![None; p],
                rr: vec![0; p],
                credit: vec![0; p],
            }
        };
        Switch {
            name,
            kind,
            stats: vec![PortStats::default(); p],
            out,
            ch: [mk(), mk(), mk()],
            joins: JoinTable::new(join_cap),
            load: 0,
        }
    }

    pub fn ports(&self) -> usize {
        self.out.len()
    }

    pub fn coord(&self) -> Option<Coord> {
        match self.kind {
            SwitchKind::Router { coord } => Some(coord),
            SwitchKind::Xbar { .. } => None,
        }
    }

    pub fn buffered(&self) -> usize {
        self.load
    }

    pub fn join_entries(&self) -> usize {
        self.joins.len()
    }

    fn push(&mut self, ch: ChannelKind, port: usize, slot: Slot) {
        let inp = &mut self.ch[ch.index()].inputs[port];
        assert!(
            inp.q.len() < inp.cap,
            "{}: input {port} overflow on {:?}",
            self.name,
            ch
        );
        inp.q.push_back(slot);
        self.load += 1;
    }

    pub fn occupancy(&self, ch: ChannelKind, port: usize) -> usize {
        self.ch[ch.index()].inputs[port].q.len()
    }

    pub fn capacity(&self, ch: ChannelKind, port: usize) -> usize {
        self.ch[ch.index()].inputs[port].cap
    }
}

/// Where an endpoint plugs into the fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attachment {
    pub sw: SwitchId,
    pub port: usize,
    pub inject_latency: u64,
    pub eject_latency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshGeometry {
    pub cols: u16,
    pub rows: u16,
}

impl MeshGeometry {
    pub fn switch_at(&self, c: Coord) -> Option<SwitchId> {
        (c.x < self.cols && c.y < self.rows)
            .then(|| c.y as usize * self.cols as usize + c.x as usize)
    }
}

struct RouteCtx {
    attach: Vec<Attachment>,
    mesh: Option<MeshGeometry>,
    routing: RoutingAlgo,
    table: Option<RouteTable>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlitCounters {
    pub injected: u64,
    pub ejected: u64,
    /// Extra copies created by forks.
    pub replicated: u64,
    /// Flits consumed by joins.
    pub absorbed: u64,
    /// Flits created by joins and barrier releases.
    pub generated: u64,
}

pub struct Fabric {
    pub switches: Vec<Switch>,
    pub d2d: Vec<D2dLink>,
    ctx: RouteCtx,
    ejected: Vec<VecDeque<(u64, Flit)>>,
    next_packet: u64,
    pub counters: FlitCounters,
}

enum Move {
    Peer {
        sw: SwitchId,
        port: usize,
        slot: Slot,
    },
    Eject {
        ep: EndpointId,
        at: u64,
        flit: Flit,
    },
}

impl Fabric {
    pub fn new(
        switches: Vec<Switch>,
        d2d: Vec<D2dLink>,
        attach: Vec<Attachment>,
        mesh: Option<MeshGeometry>,
        routing: RoutingAlgo,
    ) -> Self {
        let table = match (routing, mesh) {
            (RoutingAlgo::Table, Some(m)) => Some(RouteTable::dimension_ordered(m.cols, m.rows)),
            _ => None,
        };
        let n = attach.len();
        Fabric {
            switches,
            d2d,
            ctx: RouteCtx {
                attach,
                mesh,
                routing,
                table,
            },
            ejected: vec![VecDeque::new(); n],
            next_packet: 0,
            counters: FlitCounters::default(),
        }
    }

    /// Replaces the generated dimension-ordered table.
    pub fn set_route_table(&mut self, table: RouteTable) {
        self.ctx.table = Some(table);
    }

    pub fn attachment(&self, ep: EndpointId) -> Attachment {
        self.ctx.attach[ep.index()]
    }

    pub fn mesh(&self) -> Option<MeshGeometry> {
        self.ctx.mesh
    }

    pub fn endpoints(&self) -> usize {
        self.ctx.attach.len()
    }

    pub fn can_inject(&self, ep: EndpointId, ch: ChannelKind) -> bool {
        let a = self.ctx.attach[ep.index()];
        let sw = &self.switches[a.sw];
        sw.occupancy(ch, a.port) < sw.capacity(ch, a.port)
    }

    pub fn inject(&mut self, ep: EndpointId, flit: Flit, now: u64) {
        let a = self.ctx.attach[ep.index()];
        let ch = flit.channel;
        self.switches[a.sw].push(
            ch,
            a.port,
            Slot {
                ready: now + a.inject_latency,
                flit,
                route: None,
            },
        );
        self.counters.injected += 1;
    }

    /// Flits whose ejection completes at or before `now`.
    pub fn take_delivered(&mut self, ep: EndpointId, now: u64) -> Vec<Flit> {
        let q = &mut self.ejected[ep.index()];
        let mut out = Vec::new();
        while q.front().is_some_and(|(t, _)| *t <= now) {
            out.push(q.pop_front().unwrap().1);
        }
        out
    }

    pub fn is_idle(&self) -> bool {
        self.switches.iter().all(|s| s.load == 0) && self.ejected.iter().all(|q| q.is_empty())
    }

    pub fn pending_joins(&self) -> usize {
        self.switches.iter().map(|s| s.joins.len()).sum()
    }

    /// Human-readable list of flits still held by the fabric.
    pub fn stuck(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.switches {
            for ch in ChannelKind::ALL {
                for (p, inp) in s.ch[ch.index()].inputs.iter().enumerate() {
                    for slot in &inp.q {
                        let m = &slot.flit.meta;
                        out.push(format!(
                            "packet {} from {} to {:?} at {} input {} ({})",
                            m.packet,
                            m.src,
                            m.target,
                            s.name,
                            p,
                            ch.name()
                        ));
                    }
                }
            }
            for e in s.joins.entries() {
                out.push(format!(
                    "collective {} waiting at {} ({}/{})",
                    e.id.0, s.name, e.received, e.expected
                ));
            }
        }
        for q in &self.ejected {
            for (_, f) in q {
                out.push(format!("packet {} ejecting", f.meta.packet));
            }
        }
        out
    }

    pub fn tick(&mut self, now: u64) -> Result<()> {
        for ch in ChannelKind::ALL {
            self.sample_credits(ch);
            for s in 0..self.switches.len() {
                if self.switches[s].load > 0 {
                    self.absorb_joins(s, ch, now)?;
                }
            }
            for s in 0..self.switches.len() {
                if self.switches[s].load == 0 {
                    continue;
                }
                let moves = self.arbitrate(s, ch, now)?;
                for m in moves {
                    match m {
                        Move::Peer { sw, port, slot } => self.switches[sw].push(ch, port, slot),
                        Move::Eject { ep, at, flit } => {
                            self.counters.ejected += 1;
                            self.ejected[ep.index()].push_back((at, flit));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn sample_credits(&mut self, ch: ChannelKind) {
        let free: Vec<Vec<usize>> = self
            .switches
            .iter()
            .map(|s| {
                s.ch[ch.index()]
                    .inputs
                    .iter()
                    .map(|i| i.cap.saturating_sub(i.q.len()))
                    .collect()
            })
            .collect();
        for s in &mut self.switches {
            let st = &mut s.ch[ch.index()];
            for (o, link) in s.out.iter().enumerate() {
                st.credit[o] = match *link {
                    OutLink::Open => 0,
                    OutLink::Peer { sw, port, .. } => free[sw][port],
                    OutLink::Eject(_) => usize::MAX,
                };
            }
        }
    }

    fn network_packet(&mut self) -> u64 {
        self.next_packet += 1;
        NETWORK_PACKET_BIT | self.next_packet
    }

    /// Consumes ready collective arrivals at switch `s`, in input-port order.
    fn absorb_joins(&mut self, s: SwitchId, ch: ChannelKind, now: u64) -> Result<()> {
        let ports = self.switches[s].ports();
        for i in 0..ports {
            let sw = &mut self.switches[s];
            let inp = &sw.ch[ch.index()].inputs[i];
            if inp.route.is_some() {
                continue;
            }
            let Some(front) = inp.q.front() else { continue };
            if front.ready > now {
                continue;
            }
            match front.flit.meta.target {
                RouteTarget::JoinResponse(id) => {
                    check_single(&front.flit)?;
                    let flit = sw.ch[ch.index()].inputs[i].q.pop_front().unwrap().flit;
                    sw.load -= 1;
                    self.counters.absorbed += 1;
                    if let Some((merged, up)) = sw.joins.update(id, flit)? {
                        let up = up.ok_or_else(|| {
                            SimError::Protocol("join entry without upstream".into())
                        })?;
                        sw.push(
                            ch,
                            ports,
                            Slot {
                                ready: now,
                                flit: merged,
                                route: Some(vec![(up, RouteTarget::JoinResponse(id))]),
                            },
                        );
                        self.counters.generated += 1;
                    }
                }
                RouteTarget::BarrierJoin { rect, id } => {
                    check_single(&front.flit)?;
                    let cur = sw.coord().ok_or_else(|| {
                        SimError::Workload("barriers require a mesh topology".into())
                    })?;
                    if !sw.joins.contains(id)
                        && !sw.joins.install(id, barrier_expected(rect, cur), None)?
                    {
                        continue;
                    }
                    let flit = sw.ch[ch.index()].inputs[i].q.pop_front().unwrap().flit;
                    sw.load -= 1;
                    self.counters.absorbed += 1;
                    let Some((merged, _)) = sw.joins.update(id, flit)? else {
                        continue;
                    };
                    match barrier_next_hop(rect, cur) {
                        Some(d) => {
                            sw.push(
                                ch,
                                ports,
                                Slot {
                                    ready: now,
                                    flit: merged,
                                    route: Some(vec![(
                                        d.index(),
                                        RouteTarget::BarrierJoin { rect, id },
                                    )]),
                                },
                            );
                        }
                        None => {
                            let packet = self.network_packet();
                            let release =
                                barrier_release(&self.switches[s], packet, rect, id, now, &merged);
                            self.switches[s].push(
                                ChannelKind::Rsp,
                                ports,
                                Slot {
                                    ready: now,
                                    flit: release,
                                    route: None,
                                },
                            );
                        }
                    }
                    self.counters.generated += 1;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn arbitrate(&mut self, s: SwitchId, ch: ChannelKind, now: u64) -> Result<Vec<Move>> {
        let sw = &mut self.switches[s];
        let ports = sw.out.len();
        let n_in = ports + 1;
        let c = ch.index();

        // Route heads that reached the front of their buffer.
        for i in 0..n_in {
            let inp = &sw.ch[c].inputs[i];
            if inp.route.is_some() {
                continue;
            }
            let Some(front) = inp.q.front() else { continue };
            if front.ready > now {
                continue;
            }
            // collective arrivals queued behind another wait for the next absorb
            if front.route.is_none()
                && matches!(
                    front.flit.meta.target,
                    RouteTarget::JoinResponse(_) | RouteTarget::BarrierJoin { .. }
                )
            {
                continue;
            }
            if !front.flit.head {
                return Err(SimError::Protocol(format!(
                    "{}: body flit of packet {} without a route",
                    sw.name, front.flit.meta.packet
                )));
            }
            let route = match &front.route {
                Some(r) => r.clone(),
                None => compute_route(&self.ctx, sw, i, &front.flit)?,
            };
            if let RouteTarget::Multicast { id, join: true, .. } = front.flit.meta.target {
                if !sw.joins.install(id, route.len() as u32, Some(i))? {
                    continue;
                }
            }
            for &(p, _) in &route {
                if sw.out[p] == OutLink::Open {
                    return Err(SimError::Protocol(format!(
                        "{}: packet {} routed to unconnected port {p}",
                        sw.name, front.flit.meta.packet
                    )));
                }
            }
            let inp = &mut sw.ch[c].inputs[i];
            inp.route = Some(route);
            inp.sent = 0;
        }

        let mut moves = Vec::new();
        for o in 0..ports {
            let st = &sw.ch[c];
            if st.credit[o] == 0 {
                continue;
            }
            if let OutLink::Peer { d2d: Some(l), .. } = sw.out[o] {
                if !self.d2d[l].can_send(ch, now) {
                    continue;
                }
            }
            let wants = |i: usize| -> Option<usize> {
                let inp = &st.inputs[i];
                let front = inp.q.front()?;
                if front.ready > now {
                    return None;
                }
                let route = inp.route.as_ref()?;
                let k = route.iter().position(|&(p, _)| p == o)?;
                if inp.sent & (1 << k) != 0 {
                    return None;
                }
                Some(k)
            };
            let winner = match st.lock[o] {
                Some(i) => wants(i).map(|k| (i, k)),
                None => (0..n_in)
                    .map(|j| (st.rr[o] + j) % n_in)
                    .filter(|&i| st.inputs[i].q.front().is_some_and(|f| f.flit.head))
                    .find_map(|i| {
                        let k = wants(i)?;
                        // ports are acquired in ascending order
                        let earlier = (1u64 << k) - 1;
                        (st.inputs[i].sent & earlier == earlier).then_some((i, k))
                    }),
            };
            let Some((i, k)) = winner else { continue };

            let st = &mut sw.ch[c];
            let inp = &mut st.inputs[i];
            let front = inp.q.front().unwrap();
            let target = inp.route.as_ref().unwrap()[k].1;
            let mut flit = front.flit.clone();
            flit.meta.target = target;
            inp.sent |= 1 << k;
            st.credit[o] -= 1;
            if flit.head {
                st.lock[o] = Some(i);
                st.rr[o] = (i + 1) % n_in;
            }
            if flit.tail {
                st.lock[o] = None;
            }
            let stats = &mut sw.stats[o];
            stats.flits[c] += 1;
            stats.bytes[c] += flit.payload.len() as u64;
            match stats.open[c] {
                Some(p) if p != flit.meta.packet => stats.interleavings[c] += 1,
                _ => {}
            }
            stats.open[c] = if flit.tail {
                None
            } else {
                Some(flit.meta.packet)
            };
            match sw.out[o] {
                OutLink::Peer {
                    sw: t,
                    port,
                    latency,
                    d2d,
                } => {
                    if let Some(l) = d2d {
                        self.d2d[l].send(ch, now);
                    }
                    flit.hops += 1;
                    moves.push(Move::Peer {
                        sw: t,
                        port,
                        slot: Slot {
                            ready: now + latency,
                            flit,
                            route: None,
                        },
                    });
                }
                OutLink::Eject(ep) => {
                    let at = now + self.ctx.attach[ep.index()].eject_latency;
                    moves.push(Move::Eject { ep, at, flit });
                }
                OutLink::Open => unreachable!(),
            }
        }

        // Retire fronts that went out on every routed port.
        for i in 0..n_in {
            let inp = &mut sw.ch[c].inputs[i];
            let Some(route) = &inp.route else { continue };
            let n = route.len();
            if inp.sent != (1u64 << n) - 1 {
                continue;
            }
            let slot = inp.q.pop_front().unwrap();
            sw.load -= 1;
            inp.sent = 0;
            self.counters.replicated += n as u64 - 1;
            if slot.flit.tail {
                inp.route = None;
            }
        }
        Ok(moves)
    }
}

fn check_single(f: &Flit) -> Result<()> {
    if f.head && f.tail {
        Ok(())
    } else {
        Err(SimError::Protocol(format!(
            "collective packet {} spans several flits",
            f.meta.packet
        )))
    }
}

fn barrier_release(
    sw: &Switch,
    packet: u64,
    rect: Rect,
    id: CollectiveId,
    now: u64,
    joined: &Flit,
) -> Flit {
    let src = match sw.out[Direction::Local.index()] {
        OutLink::Eject(ep) => ep,
        _ => joined.meta.src,
    };
    Flit {
        channel: ChannelKind::Rsp,
        meta: PacketMeta {
            packet,
            src,
            target: RouteTarget::Multicast {
                rect,
                id,
                join: false,
            },
            injected_at: now,
            class: TrafficClass::Collective,
            source_route: None,
        },
        txn: TxnHeader {
            kind: TxnKind::WriteRsp,
            id: BARRIER_TXN_ID,
            address: 0,
            length: 0,
            shape: PayloadShape::Linear,
            ok: joined.txn.ok,
        },
        head: true,
        tail: true,
        payload: Vec::new(),
        hops: 0,
    }
}

fn compute_route(ctx: &RouteCtx, sw: &Switch, input: usize, flit: &Flit) -> Result<Route> {
    let target = flit.meta.target;
    match (target, &sw.kind) {
        (RouteTarget::Unicast(ep), SwitchKind::Xbar { routes }) => {
            let p = *routes
                .get(ep.index())
                .ok_or_else(|| SimError::Protocol(format!("unknown endpoint {ep}")))?;
            Ok(vec![(p, target)])
        }
        (RouteTarget::Unicast(ep), SwitchKind::Router { coord }) => {
            let a = *ctx
                .attach
                .get(ep.index())
                .ok_or_else(|| SimError::Protocol(format!("unknown endpoint {ep}")))?;
            let mesh = ctx.mesh.expect("router without mesh geometry");
            let dst = Coord::new(
                (a.sw % mesh.cols as usize) as u16,
                (a.sw / mesh.cols as usize) as u16,
            );
            let port = match ctx.routing {
                RoutingAlgo::Source => flit
                    .meta
                    .source_route
                    .and_then(|r| r.port(flit.hops as usize))
                    .ok_or_else(|| {
                        SimError::Protocol(format!(
                            "packet {} ran out of source route",
                            flit.meta.packet
                        ))
                    })?,
                _ if *coord == dst => a.port,
                RoutingAlgo::Xy => route_dimension_ordered(*coord, dst).index(),
                RoutingAlgo::Table => ctx
                    .table
                    .as_ref()
                    .expect("table routing without a table")
                    .lookup(*coord, dst)?
                    .index(),
            };
            Ok(vec![(port, target)])
        }
        (RouteTarget::Multicast { rect, id, join }, SwitchKind::Router { coord }) => {
            Ok(fork_flit(rect, *coord)
                .into_iter()
                .map(|(d, sub)| {
                    (
                        d.index(),
                        RouteTarget::Multicast {
                            rect: sub,
                            id,
                            join,
                        },
                    )
                })
                .collect())
        }
        (RouteTarget::Multicast { .. }, SwitchKind::Xbar { .. }) => Err(SimError::Workload(
            "multicast requires a mesh topology".into(),
        )),
        (RouteTarget::JoinResponse(id), _) => Err(SimError::Protocol(format!(
            "{}: response for unknown collective {} on input {input}",
            sw.name, id.0
        ))),
        (RouteTarget::BarrierJoin { .. }, _) => Err(SimError::Protocol(format!(
            "{}: barrier arrival not absorbed on input {input}",
            sw.name
        ))),
    }
}
