//! The cycle loop. Each cycle runs, in order: schedule release, ejection
//! and dispatch of completed packets, endpoint ticks, NI injection and one
//! fabric step.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::endpoints::{response_target, DmaEngine, HbmChannel, MemServer, Memory};
use crate::error::{Result, SimError};
use crate::fabric::{OutLink, SwitchKind, BARRIER_TXN_ID};
use crate::metrics::{
    hop_energy, D2dReport, EndpointReport, LatencyStats, LinkReport, MetricsReport, PacketRecord,
};
use crate::netif::{Delivery, NetIf};
use crate::noc::{
    xy_directions, ChannelKind, CollectiveId, Direction, EndpointId, Rect, RouteTarget,
    RoutingAlgo, SourceRoute, TrafficClass, Transaction, TxnKind,
};
use crate::rng;
use crate::topology::{Role, Topology};
use crate::traffic::{Action, InjectionSchedule, ScheduledAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Temporal coalescing of packed requests at HBM.
    pub coalesce: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { coalesce: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct BarrierRecord {
    pub endpoint: EndpointId,
    pub id: CollectiveId,
    pub arrive: u64,
    pub release: Option<u64>,
}

enum Model {
    Cluster { spm: MemServer, dma: DmaEngine },
    Hbm(HbmChannel),
    Memory(MemServer),
}

struct Background {
    rate: f64,
    until: u64,
    bytes: u32,
    rng: ChaCha8Rng,
    pending: Option<(EndpointId, Transaction)>,
}

struct Port {
    ni: NetIf,
    model: Model,
    sends: VecDeque<(RouteTarget, Transaction, TrafficClass)>,
    background: Option<Background>,
    read_bytes: u64,
}

impl Port {
    fn is_idle(&self) -> bool {
        let model = match &self.model {
            Model::Cluster { spm, dma } => spm.is_idle() && dma.is_idle(),
            Model::Hbm(h) => h.is_idle(),
            Model::Memory(m) => m.is_idle(),
        };
        model && self.ni.is_idle() && self.sends.is_empty() && self.background.is_none()
    }
}

/// Dimension-ordered source route from `src` to `dst` on a mesh.
pub fn mesh_source_route(topo: &Topology, src: EndpointId, dst: EndpointId) -> Option<SourceRoute> {
    let f = &topo.fabric;
    let (a, b) = (f.attachment(src), f.attachment(dst));
    let from = f.switches[a.sw].coord()?;
    let to = f.switches[b.sw].coord()?;
    let mut ports: Vec<usize> = xy_directions(from, to).iter().map(|d| d.index()).collect();
    *ports.last_mut().unwrap() = b.port;
    SourceRoute::from_ports(&ports)
}

pub struct Simulator {
    cfg: SimConfig,
    topo: Topology,
    ports: Vec<Port>,
    schedule: VecDeque<ScheduledAction>,
    now: u64,
    packets: Vec<PacketRecord>,
    first_injection: Option<u64>,
    last_delivery: Option<u64>,
    pub barriers: Vec<BarrierRecord>,
}

impl Simulator {
    pub fn new(cfg: &SimConfig, opts: SimOptions) -> Result<Simulator> {
        let topo = Topology::build(cfg)?;
        let widths = cfg.widths();
        let spm_lat = cfg.spm.latency as u64;
        let ports = topo
            .endpoints
            .iter()
            .map(|d| {
                let seed = rng::splitmix64(cfg.seed ^ rng::splitmix64(d.id.0 as u64 + 1));
                let model = match d.role {
                    Role::Cluster => Model::Cluster {
                        spm: MemServer::new(Memory::new(seed), spm_lat),
                        dma: DmaEngine::new(d.id, cfg.dma.clone(), widths),
                    },
                    Role::Hbm { .. } => {
                        Model::Hbm(HbmChannel::new(cfg.hbm.clone(), seed, opts.coalesce))
                    }
                    Role::Host | Role::SystemSpm => {
                        Model::Memory(MemServer::new(Memory::new(seed), spm_lat))
                    }
                };
                Port {
                    ni: NetIf::new(d.id, cfg.ni.clone(), widths),
                    model,
                    sends: VecDeque::new(),
                    background: None,
                    read_bytes: 0,
                }
            })
            .collect();
        Ok(Simulator {
            cfg: cfg.clone(),
            topo,
            ports,
            schedule: VecDeque::new(),
            now: 0,
            packets: Vec::new(),
            first_injection: None,
            last_delivery: None,
            barriers: Vec::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Mutable access to an endpoint's backing memory, for seeding data.
    pub fn memory_mut(&mut self, ep: EndpointId) -> &mut Memory {
        match &mut self.ports[ep.index()].model {
            Model::Cluster { spm, .. } | Model::Memory(spm) => &mut spm.mem,
            Model::Hbm(h) => &mut h.mem,
        }
    }

    pub fn memory(&self, ep: EndpointId) -> &Memory {
        match &self.ports[ep.index()].model {
            Model::Cluster { spm, .. } | Model::Memory(spm) => &spm.mem,
            Model::Hbm(h) => &h.mem,
        }
    }

    pub fn load(&mut self, schedule: InjectionSchedule) -> Result<()> {
        schedule.validate(&self.topo)?;
        if self.cfg.topology == crate::config::TopologyKind::Xbar {
            let collective = schedule.items.iter().any(|a| match &a.action {
                Action::Barrier { .. } => true,
                Action::Dma(j) => matches!(j.dst, crate::endpoints::Place::Multicast { .. }),
                Action::Send { target, .. } => !matches!(target, RouteTarget::Unicast(_)),
                Action::Background { .. } => false,
            });
            if collective {
                return Err(SimError::Workload(
                    "collectives require a mesh topology".into(),
                ));
            }
        }
        let mut items: Vec<ScheduledAction> = self.schedule.drain(..).collect();
        items.extend(schedule.items);
        items.sort_by_key(|a| a.cycle);
        self.schedule = items.into();
        Ok(())
    }

    fn release(&mut self) -> Result<()> {
        while self.schedule.front().is_some_and(|a| a.cycle <= self.now) {
            let a = self.schedule.pop_front().unwrap();
            let ep = a.endpoint;
            let port = &mut self.ports[ep.index()];
            match a.action {
                Action::Dma(job) => match &mut port.model {
                    Model::Cluster { dma, .. } => dma.submit(job, self.now)?,
                    _ => return Err(SimError::Workload(format!("{ep} has no DMA engine"))),
                },
                Action::Send { target, txn, class } => port.sends.push_back((target, txn, class)),
                Action::Barrier { rect, id } => {
                    port.sends.push_back((
                        RouteTarget::BarrierJoin { rect, id },
                        Transaction::write(BARRIER_TXN_ID, 0, Vec::new()),
                        TrafficClass::Collective,
                    ));
                    self.barriers.push(BarrierRecord {
                        endpoint: ep,
                        id,
                        arrive: self.now,
                        release: None,
                    });
                }
                Action::Background { rate, until, bytes } => {
                    port.background = Some(Background {
                        rate,
                        until,
                        bytes,
                        rng: rng::stream(self.cfg.seed, 0xB6_0000 + ep.0 as u64),
                        pending: None,
                    });
                }
            }
        }
        Ok(())
    }

    fn deliver(&mut self) -> Result<()> {
        for e in 0..self.ports.len() {
            let ep = EndpointId(e as u32);
            for flit in self.topo.fabric.take_delivered(ep, self.now) {
                let Some(d) = self.ports[e].ni.eject(flit, self.now)? else {
                    continue;
                };
                self.record(ep, &d);
                self.dispatch(ep, d)?;
            }
        }
        Ok(())
    }

    fn record(&mut self, ep: EndpointId, d: &Delivery) {
        let dst = match d.meta.target {
            RouteTarget::Unicast(t) => t,
            _ => ep,
        };
        self.packets.push(PacketRecord {
            packet: d.meta.packet,
            class: d.meta.class,
            src: d.meta.src.0,
            dst: dst.0,
            channel: d.channel,
            kind: d.txn.kind,
            inject: d.meta.injected_at,
            deliver: d.at,
            hops: d.hops,
            bytes: d.txn.payload.len() as u32,
        });
        self.first_injection = Some(
            self.first_injection
                .map_or(d.meta.injected_at, |f| f.min(d.meta.injected_at)),
        );
        self.last_delivery = Some(d.at);
        if d.txn.kind == TxnKind::ReadRsp && d.channel == ChannelKind::Wide {
            self.ports[ep.index()].read_bytes += d.txn.payload.len() as u64;
        }
    }

    fn dispatch(&mut self, ep: EndpointId, d: Delivery) -> Result<()> {
        let now = self.now;
        let port = &mut self.ports[ep.index()];
        if d.txn.kind.is_request() {
            return match &mut port.model {
                Model::Cluster { spm, .. } | Model::Memory(spm) => {
                    spm.accept(now, &d.meta, &d.txn);
                    Ok(())
                }
                Model::Hbm(h) => h.accept(now, d.meta, d.txn),
            };
        }
        match (d.meta.class, &mut port.model) {
            (TrafficClass::Dma, Model::Cluster { spm, dma }) => {
                dma.on_response(&d, &mut spm.mem, now)
            }
            (TrafficClass::Collective, _)
                if d.txn.id == BARRIER_TXN_ID && d.txn.kind == TxnKind::WriteRsp =>
            {
                let RouteTarget::Multicast { id, .. } = d.meta.target else {
                    return Err(SimError::Protocol(
                        "barrier release is not a multicast".into(),
                    ));
                };
                let b = self
                    .barriers
                    .iter_mut()
                    .find(|b| b.endpoint == ep && b.id == id && b.release.is_none())
                    .ok_or_else(|| {
                        SimError::Protocol(format!(
                            "{ep}: release of barrier {} it never joined",
                            id.0
                        ))
                    })?;
                b.release = Some(now);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn tick_endpoints(&mut self) -> Result<()> {
        let now = self.now;
        let topo = &self.topo;
        let routing = self.cfg.routing;
        let route = |src: EndpointId, dst: EndpointId| match routing {
            RoutingAlgo::Source => mesh_source_route(topo, src, dst),
            _ => None,
        };
        let route_to = |src: EndpointId, t: RouteTarget| match t {
            RouteTarget::Unicast(dst) => route(src, dst),
            _ => None,
        };
        let clusters: Vec<EndpointId> = topo.clusters().map(|c| c.id).collect();
        for (e, port) in self.ports.iter_mut().enumerate() {
            let ep = EndpointId(e as u32);
            match &mut port.model {
                Model::Cluster { spm, dma } => {
                    for (t, r, c) in spm.due(now) {
                        port.ni.send_response(now, t, r, c, route_to(ep, t))?;
                    }
                    dma.tick(now, &mut spm.mem, &mut port.ni, &|dst| route(ep, dst))?;
                }
                Model::Memory(m) => {
                    for (t, r, c) in m.due(now) {
                        port.ni.send_response(now, t, r, c, route_to(ep, t))?;
                    }
                }
                Model::Hbm(h) => {
                    for (meta, r) in h.tick(now) {
                        if let Some(t) = response_target(&meta) {
                            port.ni
                                .send_response(now, t, r, meta.class, route_to(ep, t))?;
                        }
                    }
                }
            }
            // direct sends go first, in order, one per cycle
            if let Some((target, txn, class)) = port.sends.front().cloned() {
                if port
                    .ni
                    .send_request(now, target, txn, class, route_to(ep, target))?
                    .is_accepted()
                {
                    port.sends.pop_front();
                }
            }
            if let Some(bg) = port.background.as_mut() {
                if bg.pending.is_none() && now < bg.until && bg.rng.gen_bool(bg.rate) {
                    let others = clusters.len() - 1;
                    let mut k = bg.rng.gen_range(0..others);
                    if clusters[k] >= ep {
                        k += 1;
                    }
                    let dst = clusters[k];
                    let txn =
                        Transaction::write(dst.0 as u16, 0x4_0000, vec![0x5A; bg.bytes as usize]);
                    bg.pending = Some((dst, txn));
                }
                if let Some((dst, txn)) = bg.pending.clone() {
                    let t = RouteTarget::Unicast(dst);
                    if port
                        .ni
                        .send_request(now, t, txn, TrafficClass::Background, route(ep, dst))?
                        .is_accepted()
                    {
                        bg.pending = None;
                    }
                }
                if bg.pending.is_none() && now >= bg.until {
                    port.background = None;
                }
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.schedule.is_empty()
            && self.ports.iter().all(Port::is_idle)
            && self.topo.fabric.is_idle()
            && self.topo.fabric.pending_joins() == 0
    }

    /// Advances one cycle.
    pub fn step(&mut self) -> Result<()> {
        self.release()?;
        self.deliver()?;
        self.tick_endpoints()?;
        let now = self.now;
        for p in &mut self.ports {
            p.ni.inject(&mut self.topo.fabric, now);
        }
        self.topo.fabric.tick(now)?;
        self.now += 1;
        Ok(())
    }

    /// Runs until every scheduled action has completed.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            if self.now >= self.cfg.max_cycles {
                let mut stuck = self.topo.fabric.stuck();
                for (e, p) in self.ports.iter().enumerate() {
                    if !p.is_idle() {
                        stuck.push(format!(
                            "{} busy ({} outstanding)",
                            self.topo.endpoints[e].name,
                            p.ni.outstanding()
                        ));
                    }
                }
                return Err(SimError::Timeout {
                    cycle: self.now,
                    stuck,
                });
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn packets(&self) -> &[PacketRecord] {
        &self.packets
    }

    pub fn report(&self) -> MetricsReport {
        let f = &self.topo.fabric;
        let window = match (self.first_injection, self.last_delivery) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        };
        let per_cycle = |bytes: u64, width: u64| {
            if window == 0 {
                0.0
            } else {
                bytes as f64 / (window * width) as f64
            }
        };
        let widths = self.cfg.widths();
        let mut links = Vec::new();
        let (mut traversals, mut link_bytes, mut interleavings) = (0, 0, 0);
        for s in &f.switches {
            for (p, out) in s.out.iter().enumerate() {
                let (peer, internal) = match *out {
                    OutLink::Peer { sw, .. } => (f.switches[sw].name.clone(), true),
                    OutLink::Eject(ep) => (self.topo.endpoints[ep.index()].name.clone(), false),
                    OutLink::Open => continue,
                };
                let label = match s.kind {
                    SwitchKind::Router { .. } => Direction::from_index(p)
                        .map_or("?", |d| d.short())
                        .to_string(),
                    SwitchKind::Xbar { .. } => p.to_string(),
                };
                for ch in ChannelKind::ALL {
                    let c = ch.index();
                    let st = &s.stats[p];
                    if internal {
                        traversals += st.flits[c];
                        link_bytes += st.bytes[c];
                    }
                    interleavings += st.interleavings[c];
                    links.push(LinkReport {
                        name: format!("{}:{}->{}", s.name, label, peer),
                        channel: ch,
                        internal,
                        flits: st.flits[c],
                        bytes: st.bytes[c],
                        utilization: per_cycle(st.flits[c], 1),
                        interleavings: st.interleavings[c],
                    });
                }
            }
        }
        let mut d2d = Vec::new();
        for s in &f.switches {
            for (p, out) in s.out.iter().enumerate() {
                let OutLink::Peer {
                    sw, d2d: Some(l), ..
                } = *out
                else {
                    continue;
                };
                let link = &f.d2d[l];
                for ch in ChannelKind::ALL {
                    let Some(tp) = link.throughput(ch) else {
                        continue;
                    };
                    let dir = Direction::from_index(p).map_or("?", |d| d.short());
                    d2d.push(D2dReport {
                        name: format!("{}:{}->{}", s.name, dir, f.switches[sw].name),
                        channel: ch,
                        flits: link.flits[ch.index()],
                        bytes_per_cycle: tp * widths.capacity(ch) as f64,
                    });
                }
            }
        }
        let mut by_class: BTreeMap<&'static str, Vec<u64>> = BTreeMap::new();
        for p in &self.packets {
            by_class
                .entry(p.class.name())
                .or_default()
                .push(p.latency());
        }
        let latency = by_class
            .into_iter()
            .filter_map(|(k, v)| LatencyStats::from_samples(v).map(|l| (k.to_string(), l)))
            .collect();
        let mut endpoints = Vec::new();
        let mut jobs = BTreeMap::new();
        for (d, p) in self.topo.endpoints.iter().zip(&self.ports) {
            let (useful, access, utilization) = match &p.model {
                Model::Hbm(h) => {
                    let s = h.stats();
                    (
                        s.useful_bytes,
                        s.access_bytes,
                        per_cycle(s.useful_bytes, self.cfg.hbm.peak_bytes_per_cycle as u64),
                    )
                }
                _ => (0, 0, per_cycle(p.read_bytes, widths.wide as u64)),
            };
            if let Model::Cluster { dma, .. } = &p.model {
                if !dma.completed.is_empty() {
                    jobs.insert(d.name.clone(), dma.completed.clone());
                }
            }
            endpoints.push(EndpointReport {
                name: d.name.clone(),
                rx_bytes: p.ni.stats.rx_bytes,
                tx_bytes: p.ni.stats.tx_bytes,
                read_bytes: p.read_bytes,
                useful_bytes: useful,
                access_bytes: access,
                utilization,
            });
        }
        MetricsReport {
            cycles: self.now,
            first_injection: self.first_injection,
            last_delivery: self.last_delivery,
            flits_injected: f.counters.injected,
            flits_ejected: f.counters.ejected,
            link_traversals: traversals,
            link_bytes,
            energy_pj: hop_energy(link_bytes, 1, self.cfg.energy.pj_per_byte_hop),
            interleavings,
            latency,
            links,
            d2d,
            endpoints,
            jobs,
            probes: self
                .packets
                .iter()
                .filter(|p| p.class == TrafficClass::Probe && p.kind.is_request())
                .cloned()
                .collect(),
            packets: self.packets.clone(),
        }
    }
}

/// Builds a simulator, runs `schedule` to completion and reports.
pub fn run(cfg: &SimConfig, schedule: InjectionSchedule) -> Result<MetricsReport> {
    run_with(cfg, SimOptions::default(), schedule)
}

pub fn run_with(
    cfg: &SimConfig,
    opts: SimOptions,
    schedule: InjectionSchedule,
) -> Result<MetricsReport> {
    let mut sim = Simulator::new(cfg, opts)?;
    sim.load(schedule)?;
    sim.run()?;
    Ok(sim.report())
}

/// Barrier over `rect` with every member arriving at cycle 0; returns the
/// per-member records.
pub fn run_barrier(cfg: &SimConfig, rect: Rect) -> Result<Vec<BarrierRecord>> {
    let mut sim = Simulator::new(cfg, SimOptions::default())?;
    let (s, _) = crate::traffic::gen_collective(
        crate::traffic::CollectiveKind::Barrier,
        rect,
        EndpointId(0),
        0,
        &sim.topo,
    )?;
    sim.load(s)?;
    sim.run()?;
    Ok(sim.barriers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoints::{DmaJob, Place};
    use crate::noc::Coord;

    #[test]
    fn empty_workload_finishes_at_zero() {
        let r = run(&SimConfig::default(), InjectionSchedule::new()).unwrap();
        assert_eq!(r.cycles, 0);
        assert_eq!(r.window(), 0);
    }

    #[test]
    fn single_probe_latency() {
        let cfg = SimConfig::default();
        let mut sim = Simulator::new(&cfg, SimOptions::default()).unwrap();
        let t = &sim.topo;
        let (a, b) = (
            t.cluster_at(Coord::new(0, 0)).unwrap(),
            t.cluster_at(Coord::new(3, 2)).unwrap(),
        );
        let mut s = InjectionSchedule::new();
        s.push(
            0,
            a,
            Action::Send {
                target: RouteTarget::Unicast(b),
                txn: Transaction::write(1, 0, vec![7; 64]),
                class: TrafficClass::Probe,
            },
        );
        sim.load(s).unwrap();
        sim.run().unwrap();
        let r = sim.report();
        let p = &r.probes[0];
        // 2 NI + 5 hops x 2
        assert_eq!(p.latency(), 14);
        assert_eq!(p.hops, 5);
        assert_eq!(sim.memory(b).read(0, 64), vec![7; 64]);
    }

    #[test]
    fn dma_read_from_hbm_lands_in_spm() {
        let cfg = SimConfig::default();
        let mut sim = Simulator::new(&cfg, SimOptions::default()).unwrap();
        let c = sim.topo.cluster_at(Coord::new(2, 3)).unwrap();
        let h = sim.topo.hbm(3).unwrap();
        let expect = sim.memory(h).read(0x1000, 2048);
        let mut s = InjectionSchedule::new();
        s.push(
            0,
            c,
            Action::Dma(DmaJob::copy(
                Place::Remote(h, 0x1000),
                Place::Local(0x200),
                2048,
            )),
        );
        sim.load(s).unwrap();
        sim.run().unwrap();
        assert_eq!(sim.memory(c).read(0x200, 2048), expect);
        let r = sim.report();
        assert_eq!(r.jobs["cluster(2,3)"].len(), 1);
        assert_eq!(r.endpoint("cluster(2,3)").unwrap().read_bytes, 2048);
    }

    #[test]
    fn timeout_lists_stuck_work() {
        let cfg = SimConfig {
            max_cycles: 5,
            ..SimConfig::default()
        };
        let mut sim = Simulator::new(&cfg, SimOptions::default()).unwrap();
        let c = sim.topo.cluster_at(Coord::new(3, 7)).unwrap();
        let h = sim.topo.hbm(0).unwrap();
        let mut s = InjectionSchedule::new();
        s.push(
            0,
            c,
            Action::Dma(DmaJob::copy(Place::Remote(h, 0), Place::Local(0), 4096)),
        );
        sim.load(s).unwrap();
        match sim.run() {
            Err(SimError::Timeout { cycle: 5, stuck }) => assert!(!stuck.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_member_barrier_takes_two_ni_latencies() {
        let cfg = SimConfig::default();
        let b = run_barrier(&cfg, Rect::single(Coord::new(1, 1))).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].release, Some(2 * cfg.latency.ni as u64));
    }
}
