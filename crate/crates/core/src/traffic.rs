//! Workload generators. Each returns an [`InjectionSchedule`]: a list of
//! actions released to endpoints at given cycles.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::endpoints::{DmaJob, InstreamOp, Place};
use crate::error::{Result, SimError};
use crate::noc::{CollectiveId, Coord, EndpointId, Rect, RouteTarget, TrafficClass, Transaction};
use crate::rng;
use crate::topology::{Role, Topology};

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Dma(DmaJob),
    /// One request issued as-is through the endpoint's NI.
    Send {
        target: RouteTarget,
        txn: Transaction,
        class: TrafficClass,
    },
    /// Arrive at the barrier over `rect`; completes on release.
    Barrier {
        rect: Rect,
        id: CollectiveId,
    },
    /// Uniform-random single-flit writes to other clusters until `until`.
    Background {
        rate: f64,
        until: u64,
        bytes: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledAction {
    pub cycle: u64,
    pub endpoint: EndpointId,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InjectionSchedule {
    pub items: Vec<ScheduledAction>,
}

impl InjectionSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, cycle: u64, endpoint: EndpointId, action: Action) {
        self.items.push(ScheduledAction {
            cycle,
            endpoint,
            action,
        });
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn extend(&mut self, other: InjectionSchedule) {
        self.items.extend(other.items);
    }

    /// Items in release order (stable for equal cycles).
    pub fn sorted(mut self) -> Vec<ScheduledAction> {
        self.items.sort_by_key(|a| a.cycle);
        self.items
    }

    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let n = topo.endpoints.len();
        let check = |ep: EndpointId| {
            if ep.index() < n {
                Ok(())
            } else {
                Err(SimError::Workload(format!("endpoint {ep} does not exist")))
            }
        };
        for a in &self.items {
            check(a.endpoint)?;
            match &a.action {
                Action::Dma(job) => {
                    if topo.desc(a.endpoint).role != Role::Cluster {
                        return Err(SimError::Workload(format!(
                            "{} has no DMA engine",
                            a.endpoint
                        )));
                    }
                    for p in [job.src, job.dst] {
                        if let Place::Remote(ep, _) = p {
                            check(ep)?;
                        }
                    }
                }
                Action::Send {
                    target: RouteTarget::Unicast(ep),
                    ..
                } => check(*ep)?,
                Action::Background { rate, .. } if !(0.0..=1.0).contains(rate) => {
                    return Err(SimError::Workload(format!(
                        "injection rate {rate} outside [0, 1]"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    Zero,
    Full,
}

/// HBM channel a cluster streams from: its row's channel on a mesh,
/// cluster index modulo channel count on a crossbar.
pub fn hbm_for(topo: &Topology, cluster: EndpointId) -> EndpointId {
    let d = topo.desc(cluster);
    let channels = topo.hbm_channels().count() as u16;
    let ch = match d.coord {
        Some(c) => {
            let rows = topo.fabric.mesh().map(|m| m.rows).unwrap_or(1);
            (c.y as u32 * channels as u32 / rows as u32) as u16
        }
        None => {
            let idx = topo.clusters().position(|c| c.id == cluster).unwrap();
            (idx % channels as usize) as u16
        }
    };
    topo.hbm(ch).expect("channel exists")
}

/// Cluster used for single-cluster experiments: the far end of the first
/// row on a mesh, the first cluster on a crossbar.
pub fn probe_cluster(topo: &Topology) -> EndpointId {
    match topo.fabric.mesh() {
        Some(m) => topo.cluster_at(Coord::new(m.cols - 1, 0)).unwrap(),
        None => topo.clusters().next().unwrap().id,
    }
}

/// Which HBM channel serves each tile of a cluster's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMap {
    /// Every tile from the cluster's own channel (see [`hbm_for`]).
    Affine,
    /// Tile `t` of the `k`-th active cluster from channel `(k + t) mod C`,
    /// as with address interleaving across channels.
    Interleaved,
}

/// Double-buffered reads of `bytes` per active cluster, in tiles of `tile`
/// bytes alternating between two local buffers.
pub fn gen_hbm_load(
    mode: LoadMode,
    bytes: u64,
    tile: u32,
    map: ChannelMap,
    topo: &Topology,
) -> InjectionSchedule {
    let active: Vec<EndpointId> = match mode {
        LoadMode::Zero => vec![probe_cluster(topo)],
        LoadMode::Full => topo.clusters().map(|c| c.id).collect(),
    };
    let hbms: Vec<EndpointId> = topo.hbm_channels().map(|h| h.id).collect();
    let mut s = InjectionSchedule::new();
    for (k, &c) in active.iter().enumerate() {
        let base = k as u64 * bytes.next_multiple_of(4096);
        let tiles = bytes.div_ceil(tile as u64);
        for t in 0..tiles {
            let hbm = match map {
                ChannelMap::Affine => hbm_for(topo, c),
                ChannelMap::Interleaved => hbms[(k + t as usize) % hbms.len()],
            };
            let len = (bytes - t * tile as u64).min(tile as u64) as u32;
            let buf = (t % 2) * tile as u64;
            let job = DmaJob::copy(
                Place::Remote(hbm, base + t * tile as u64),
                Place::Local(buf),
                len,
            )
            .with_tag(t);
            s.push(0, c, Action::Dma(job));
        }
    }
    s
}

pub const PROBE_BYTES: u32 = 64;

fn probe(dst: EndpointId) -> Action {
    Action::Send {
        target: RouteTarget::Unicast(dst),
        txn: Transaction::write(dst.0 as u16, 0x8000, vec![0xA5; PROBE_BYTES as usize]),
        class: TrafficClass::Probe,
    }
}

/// Parameters of the loaded latency sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub spacing: u64,
    pub warmup: u64,
    pub rate: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            spacing: 32,
            warmup: 500,
            rate: 1.0,
        }
    }
}

/// One single-flit probe per ordered cluster pair. At zero load the probes
/// are serialized globally; at full load each source sends its probes in
/// turn over saturating background traffic.
pub fn gen_latency_sweep(mode: LoadMode, p: SweepParams, topo: &Topology) -> InjectionSchedule {
    let clusters: Vec<EndpointId> = topo.clusters().map(|c| c.id).collect();
    let mut s = InjectionSchedule::new();
    match mode {
        LoadMode::Zero => {
            let mut k = 0;
            for &src in &clusters {
                for &dst in &clusters {
                    if src != dst {
                        s.push(k * p.spacing, src, probe(dst));
                        k += 1;
                    }
                }
            }
        }
        LoadMode::Full => {
            let until = p.warmup + clusters.len() as u64 * p.spacing + p.warmup;
            for &src in &clusters {
                s.push(
                    0,
                    src,
                    Action::Background {
                        rate: p.rate,
                        until,
                        bytes: PROBE_BYTES,
                    },
                );
                let mut k = 0;
                for &dst in &clusters {
                    if src != dst {
                        s.push(p.warmup + k * p.spacing, src, probe(dst));
                        k += 1;
                    }
                }
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectiveKind {
    Broadcast,
    Multicast,
    Barrier,
}

/// Collective over `rect` and its unicast-composed baseline.
///
/// Broadcast/multicast: `src` writes `bytes` to every cluster of the
/// rectangle; the baseline writes to each member other than `src` one by
/// one. Barrier: every member arrives at cycle 0; the baseline has every
/// member other than the aggregation node send it a single-word write.
pub fn gen_collective(
    kind: CollectiveKind,
    rect: Rect,
    src: EndpointId,
    bytes: u32,
    topo: &Topology,
) -> Result<(InjectionSchedule, InjectionSchedule)> {
    let members: Vec<EndpointId> = rect
        .iter()
        .map(|c| {
            topo.cluster_at(c)
                .ok_or_else(|| SimError::Contract(format!("{c} is outside the mesh")))
        })
        .collect::<Result<_>>()?;
    let mut coll = InjectionSchedule::new();
    let mut base = InjectionSchedule::new();
    const DATA: u64 = 0x4000;
    match kind {
        CollectiveKind::Broadcast | CollectiveKind::Multicast => {
            let job = DmaJob::copy(
                Place::Local(DATA),
                Place::Multicast { rect, addr: DATA },
                bytes,
            );
            coll.push(0, src, Action::Dma(job));
            for &m in members.iter().filter(|&&m| m != src) {
                let job = DmaJob::copy(Place::Local(DATA), Place::Remote(m, DATA), bytes);
                base.push(0, src, Action::Dma(job));
            }
        }
        CollectiveKind::Barrier => {
            let id = CollectiveId(0xBA55_0000 | rect.x0() as u64 | (rect.y0() as u64) << 8);
            let root = topo.cluster_at(rect.min_corner()).unwrap();
            for &m in &members {
                coll.push(0, m, Action::Barrier { rect, id });
                if m != root {
                    base.push(
                        0,
                        m,
                        Action::Send {
                            target: RouteTarget::Unicast(root),
                            txn: Transaction::write(m.0 as u16, 0x100, vec![1; 8]),
                            class: TrafficClass::Collective,
                        },
                    );
                }
            }
        }
    }
    Ok((coll, base))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexDist {
    Uniform,
    Contiguous,
    Strided(u64),
}

/// Size of the region random gathers draw from.
pub const GATHER_REGION: u64 = 1 << 26;

pub fn gather_addresses(n: usize, dist: IndexDist, seed: u64) -> Vec<u64> {
    match dist {
        IndexDist::Uniform => {
            let mut r = rng::stream(seed, 0x5CA7);
            (0..n)
                .map(|_| r.gen_range(0..GATHER_REGION / 8) * 8)
                .collect()
        }
        IndexDist::Contiguous => (0..n as u64).map(|i| i * 8).collect(),
        IndexDist::Strided(s) => (0..n as u64).map(|i| i * s).collect(),
    }
}

/// One cluster gathers `n` 8-byte elements from its HBM channel.
pub fn gen_scatter_gather(
    n: usize,
    dist: IndexDist,
    packed: bool,
    seed: u64,
    topo: &Topology,
) -> InjectionSchedule {
    let c = probe_cluster(topo);
    let hbm = hbm_for(topo, c);
    let job = DmaJob::gather(hbm, gather_addresses(n, dist, seed), 0x10_0000, 8, packed);
    let mut s = InjectionSchedule::new();
    s.push(0, c, Action::Dma(job));
    s
}

/// One cluster streams `bytes` from its HBM channel through the in-stream
/// unit.
pub fn gen_instream(op: InstreamOp, bytes: u32, topo: &Topology) -> InjectionSchedule {
    let c = probe_cluster(topo);
    let hbm = hbm_for(topo, c);
    let job = DmaJob::copy(Place::Remote(hbm, 0), Place::Local(0x2_0000), bytes).with_op(op);
    let mut s = InjectionSchedule::new();
    s.push(0, c, Action::Dma(job));
    s
}

/// Random unicast DMA writes and reads between clusters and HBM, for
/// stress and determinism tests.
pub fn gen_random_mix(
    jobs: usize,
    max_bytes: u32,
    seed: u64,
    topo: &Topology,
) -> InjectionSchedule {
    let mut r = rng::stream(seed, 0x313);
    let clusters: Vec<EndpointId> = topo.clusters().map(|c| c.id).collect();
    let hbms: Vec<EndpointId> = topo.hbm_channels().map(|c| c.id).collect();
    let mut s = InjectionSchedule::new();
    for _ in 0..jobs {
        let c = *clusters.choose(&mut r).unwrap();
        let len = r.gen_range(1..=max_bytes / 8) * 8;
        let at = r.gen_range(0..200);
        let job = if r.gen_bool(0.5) {
            let src = *hbms.choose(&mut r).unwrap();
            DmaJob::copy(
                Place::Remote(src, r.gen_range(0..1024) * 64),
                Place::Local(0),
                len,
            )
        } else {
            let dst = *clusters
                .iter()
                .filter(|&&d| d != c)
                .collect::<Vec<_>>()
                .choose(&mut r)
                .unwrap();
            DmaJob::copy(Place::Local(0), Place::Remote(*dst, 0x1000), len)
        };
        s.push(at, c, Action::Dma(job));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SimConfig, TopologyKind};

    fn mesh() -> Topology {
        Topology::build(&SimConfig::default()).unwrap()
    }

    #[test]
    fn hbm_load_counts() {
        let t = mesh();
        let z = gen_hbm_load(LoadMode::Zero, 16 * 1024, 16 * 1024, ChannelMap::Affine, &t);
        assert_eq!(z.len(), 1);
        let active: std::collections::BTreeSet<_> = z.items.iter().map(|a| a.endpoint).collect();
        assert_eq!(active.len(), 1);

        let f = gen_hbm_load(LoadMode::Full, 64 * 1024, 16 * 1024, ChannelMap::Affine, &t);
        let mut per_channel = std::collections::BTreeMap::new();
        for a in &f.items {
            if let Action::Dma(j) = &a.action {
                if let Place::Remote(h, _) = j.src {
                    per_channel
                        .entry(h)
                        .or_insert_with(std::collections::BTreeSet::new)
                        .insert(a.endpoint);
                }
            }
        }
        assert_eq!(per_channel.len(), 8);
        assert!(per_channel.values().all(|s| s.len() == 4));

        let i = gen_hbm_load(
            LoadMode::Full,
            64 * 1024,
            16 * 1024,
            ChannelMap::Interleaved,
            &t,
        );
        let first = t.clusters().nth(9).unwrap().id;
        let chans: Vec<_> = i
            .items
            .iter()
            .filter(|a| a.endpoint == first)
            .map(|a| match &a.action {
                Action::Dma(j) => j.src,
                _ => unreachable!(),
            })
            .collect();
        let h = |c| t.hbm(c).unwrap();
        assert_eq!(
            chans
                .iter()
                .map(|p| match p {
                    Place::Remote(e, _) => *e,
                    _ => unreachable!(),
                })
                .collect::<Vec<_>>(),
            vec![h(1), h(2), h(3), h(4)]
        );
    }

    #[test]
    fn sweep_has_all_ordered_pairs() {
        let t = mesh();
        let s = gen_latency_sweep(LoadMode::Zero, SweepParams::default(), &t);
        assert_eq!(s.len(), 32 * 31);
        let f = gen_latency_sweep(LoadMode::Full, SweepParams::default(), &t);
        let probes = f
            .items
            .iter()
            .filter(|a| matches!(a.action, Action::Send { .. }))
            .count();
        assert_eq!(probes, 32 * 31);
    }

    #[test]
    fn broadcast_baseline_sends_seven_unicasts() {
        let t = mesh();
        let rect = Rect::new(0, 0, 3, 1).unwrap();
        let src = t.cluster_at(Coord::new(0, 0)).unwrap();
        let (c, b) = gen_collective(CollectiveKind::Broadcast, rect, src, 64, &t).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(b.len(), 7);
    }

    #[test]
    fn gather_patterns() {
        assert_eq!(
            gather_addresses(4, IndexDist::Contiguous, 1),
            vec![0, 8, 16, 24]
        );
        assert_eq!(
            gather_addresses(3, IndexDist::Strided(32), 1),
            vec![0, 32, 64]
        );
        let a = gather_addresses(100, IndexDist::Uniform, 7);
        assert_eq!(a, gather_addresses(100, IndexDist::Uniform, 7));
        assert_ne!(a, gather_addresses(100, IndexDist::Uniform, 8));
        assert!(a.iter().all(|x| x % 8 == 0 && *x < GATHER_REGION));
    }

    #[test]
    fn crossbar_mapping_is_modulo() {
        let cfg = SimConfig {
            topology: TopologyKind::Xbar,
            ..SimConfig::default()
        };
        let t = Topology::build(&cfg).unwrap();
        let c9 = t.clusters().nth(9).unwrap().id;
        assert_eq!(hbm_for(&t, c9), t.hbm(1).unwrap());
    }
}
