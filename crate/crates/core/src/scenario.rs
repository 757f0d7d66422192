//! Named experiment presets. Each runs one or more simulations and checks
//! the properties the experiment is meant to show.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::config::{SimConfig, TopologyKind};
use crate::endpoints::{DmaJob, InstreamOp, Place, ReduceKind};
use crate::error::{Result, SimError};
use crate::metrics::MetricsReport;
use crate::noc::{xy_path, ChannelKind, Coord, Rect, TrafficClass};
use crate::sim::{run, run_with, SimOptions, Simulator};
use crate::topology::Topology;
use crate::traffic::{
    gen_collective, gen_hbm_load, gen_latency_sweep, gen_scatter_gather, hbm_for, probe_cluster,
    Action, ChannelMap, CollectiveKind, IndexDist, InjectionSchedule, LoadMode, SweepParams,
    PROBE_BYTES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    HbmZero,
    HbmFull,
    LatencySweep,
    XbarVsMesh,
    Broadcast,
    Barrier,
    ScatterGather,
    InstreamReduce,
    D2dCross,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::HbmZero,
        Scenario::HbmFull,
        Scenario::LatencySweep,
        Scenario::XbarVsMesh,
        Scenario::Broadcast,
        Scenario::Barrier,
        Scenario::ScatterGather,
        Scenario::InstreamReduce,
        Scenario::D2dCross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::HbmZero => "hbm-zero",
            Scenario::HbmFull => "hbm-full",
            Scenario::LatencySweep => "latency-sweep",
            Scenario::XbarVsMesh => "xbar-vs-mesh",
            Scenario::Broadcast => "broadcast",
            Scenario::Barrier => "barrier",
            Scenario::ScatterGather => "scatter-gather",
            Scenario::InstreamReduce => "instream-reduce",
            Scenario::D2dCross => "d2d-cross",
        }
    }

    pub fn from_name(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub value: f64,
    pub expect: String,
    pub pass: bool,
}

impl Property {
    fn at_least(name: &str, value: f64, min: f64) -> Self {
        Property {
            name: name.into(),
            value,
            expect: format!(">= {min}"),
            pass: value >= min,
        }
    }

    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Property {
            name: name.into(),
            value,
            expect: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
        }
    }

    fn equals(name: &str, value: f64, want: f64, tol: f64) -> Self {
        Property {
            name: name.into(),
            value,
            expect: format!("== {want} (tol {tol})"),
            pass: (value - want).abs() <= tol,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "ok" } else { "FAIL" };
        write!(
            f,
            "{verdict:4} {} = {} (expect {})",
            self.name, self.value, self.expect
        )
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    /// Reports of each simulation, keyed by variant.
    pub runs: Vec<(String, MetricsReport)>,
    pub scalars: BTreeMap<String, f64>,
    pub properties: Vec<Property>,
}

impl Outcome {
    fn new(scenario: Scenario) -> Self {
        Outcome {
            scenario,
            runs: Vec::new(),
            scalars: BTreeMap::new(),
            properties: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    pub fn run(&self, variant: &str) -> Option<&MetricsReport> {
        self.runs.iter().find(|(v, _)| v == variant).map(|(_, r)| r)
    }

    fn scalar(&mut self, k: &str, v: f64) {
        self.scalars.insert(k.into(), v);
    }
}

pub fn cluster_utilizations(r: &MetricsReport, topo: &Topology) -> Vec<f64> {
    topo.clusters()
        .map(|c| r.endpoint(&c.name).map_or(0.0, |e| e.utilization))
        .collect()
}

pub fn hbm_utilizations(r: &MetricsReport, topo: &Topology) -> Vec<f64> {
    topo.hbm_channels()
        .map(|c| r.endpoint(&c.name).map_or(0.0, |e| e.utilization))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        })
}

pub const TILE: u32 = 16 * 1024;
/// Bytes each cluster reads in the full-load experiments.
pub const FULL_LOAD_BYTES: u64 = 64 * 1024;
/// Bytes the single cluster reads in the zero-load experiment.
pub const ZERO_LOAD_BYTES: u64 = 16 * TILE as u64;
pub const GATHER_ELEMS: usize = 64 * 1024;
pub const REDUCE_BYTES: u32 = 64 * 1024;

pub fn run_scenario(s: Scenario, cfg: &SimConfig) -> Result<Outcome> {
    cfg.validate()?;
    match s {
        Scenario::HbmZero => hbm_zero(cfg),
        Scenario::HbmFull => hbm_full(cfg),
        Scenario::LatencySweep => latency_sweep(cfg),
        Scenario::XbarVsMesh => xbar_vs_mesh(cfg),
        Scenario::Broadcast => broadcast(cfg),
        Scenario::Barrier => barrier(cfg),
        Scenario::ScatterGather => scatter_gather(cfg),
        Scenario::InstreamReduce => instream_reduce(cfg),
        Scenario::D2dCross => d2d_cross(cfg),
    }
}

fn hbm_zero(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let r = run(
        cfg,
        gen_hbm_load(
            LoadMode::Zero,
            ZERO_LOAD_BYTES,
            TILE,
            ChannelMap::Affine,
            &topo,
        ),
    )?;
    let ch = hbm_for(&topo, probe_cluster(&topo));
    let u = r
        .endpoint(&topo.desc(ch).name)
        .map_or(0.0, |e| e.utilization);
    let mut o = Outcome::new(Scenario::HbmZero);
    o.scalar("channel_utilization", u);
    o.properties
        .push(Property::at_least("channel_utilization", u, 0.95));
    o.runs.push(("zero".into(), r));
    Ok(o)
}

fn hbm_full(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let r = run(
        cfg,
        gen_hbm_load(
            LoadMode::Full,
            FULL_LOAD_BYTES,
            TILE,
            ChannelMap::Affine,
            &topo,
        ),
    )?;
    let cl = cluster_utilizations(&r, &topo);
    let hbm = hbm_utilizations(&r, &topo);
    let (lo, hi) = min_max(&cl);
    let mut o = Outcome::new(Scenario::HbmFull);
    o.scalar("cluster_utilization_mean", mean(&cl));
    o.scalar("cluster_utilization_min", lo);
    o.scalar("cluster_utilization_max", hi);
    o.scalar("channel_utilization_mean", mean(&hbm));
    match cfg.topology {
        TopologyKind::Mesh => {
            o.properties
                .push(Property::within("cluster_utilization_min", lo, 0.24, 0.26));
            o.properties
                .push(Property::within("cluster_utilization_max", hi, 0.24, 0.26));
            o.properties.push(Property::at_least(
                "channel_utilization_mean",
                mean(&hbm),
                0.95,
            ));
        }
        TopologyKind::Xbar => {
            // aggregate delivery is bounded by the group ports
            let bound = cfg.xbar.groups as f64 * cfg.channels.wide_bytes as f64;
            let delivered: f64 =
                r.endpoints.iter().map(|e| e.read_bytes as f64).sum::<f64>() / r.window() as f64;
            o.scalar("delivered_bytes_per_cycle", delivered);
            o.properties.push(Property::within(
                "delivered_bytes_per_cycle",
                delivered,
                0.0,
                bound,
            ));
        }
    }
    o.runs.push(("full".into(), r));
    Ok(o)
}

/// Zero-load latency the mesh router model predicts for `hops` hops.
pub fn mesh_latency(cfg: &SimConfig, hops: u64) -> u64 {
    2 * cfg.latency.ni as u64 + hops * (cfg.latency.router + cfg.latency.link) as u64
}

fn latency_sweep(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let p = SweepParams::default();
    let zero = run(cfg, gen_latency_sweep(LoadMode::Zero, p, &topo))?;
    let full = run(cfg, gen_latency_sweep(LoadMode::Full, p, &topo))?;
    let mut o = Outcome::new(Scenario::LatencySweep);
    let z = zero.latency_of(TrafficClass::Probe).cloned();
    let f = full.latency_of(TrafficClass::Probe).cloned();
    if let (Some(z), Some(f)) = (z, f) {
        o.scalar("zero_mean", z.mean);
        o.scalar("full_mean", f.mean);
        o.properties.push(Property::at_least(
            "full_minus_zero_mean",
            f.mean - z.mean,
            0.0,
        ));
    }
    if cfg.topology == TopologyKind::Mesh {
        let off = zero
            .probes
            .iter()
            .filter(|p| p.latency() != mesh_latency(cfg, p.hops as u64))
            .count();
        o.properties.push(Property::equals(
            "zero_load_formula_mismatches",
            off as f64,
            0.0,
            0.0,
        ));
    }
    o.runs.push(("zero".into(), zero));
    o.runs.push(("full".into(), full));
    Ok(o)
}

fn xbar_vs_mesh(cfg: &SimConfig) -> Result<Outcome> {
    let mut o = Outcome::new(Scenario::XbarVsMesh);
    let mut means = BTreeMap::new();
    for (kind, name) in [(TopologyKind::Mesh, "mesh"), (TopologyKind::Xbar, "xbar")] {
        let mut c = cfg.clone();
        c.topology = kind;
        let topo = Topology::build(&c)?;
        for (map, suffix) in [
            (ChannelMap::Interleaved, ""),
            (ChannelMap::Affine, "-affine"),
        ] {
            let r = run(
                &c,
                gen_hbm_load(LoadMode::Full, FULL_LOAD_BYTES, TILE, map, &topo),
            )?;
            let m = mean(&cluster_utilizations(&r, &topo));
            let key = format!("{name}{suffix}");
            o.scalar(&format!("{key}_cluster_utilization"), m);
            means.insert(key.clone(), m);
            o.runs.push((key, r));
        }
    }
    let gap = means["mesh"] / means["xbar"] - 1.0;
    o.scalar("relative_gap", gap);
    o.properties
        .push(Property::at_least("relative_gap", gap, 0.10));
    Ok(o)
}

/// Directed mesh links used by the union of XY paths from `src` to every
/// cell of `rect`.
pub fn xy_tree_edges(src: Coord, rect: Rect) -> usize {
    let mut edges = BTreeSet::new();
    for c in rect.iter() {
        for w in xy_path(src, c).windows(2) {
            edges.insert((w[0], w[1]));
        }
    }
    edges.len()
}

/// Links crossed by one unicast from `src` to every other cell of `rect`.
pub fn unicast_edges(src: Coord, rect: Rect) -> u64 {
    rect.iter().map(|c| src.manhattan(c) as u64).sum()
}

pub const BROADCAST_RECT: (u16, u16, u16, u16) = (0, 0, 3, 1);

fn broadcast(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let (x0, y0, x1, y1) = BROADCAST_RECT;
    let rect = Rect::new(x0, y0, x1, y1)?;
    let src_at = rect.min_corner();
    let src = topo
        .cluster_at(src_at)
        .ok_or_else(|| SimError::Workload("broadcast needs a mesh".into()))?;
    let (coll, base) = gen_collective(
        CollectiveKind::Broadcast,
        rect,
        src,
        cfg.channels.wide_bytes,
        &topo,
    )?;
    let c = run(cfg, coll)?;
    let b = run(cfg, base)?;
    let (tc, tb) = (
        c.traversals(ChannelKind::Wide),
        b.traversals(ChannelKind::Wide),
    );
    let tree = xy_tree_edges(src_at, rect) as f64;
    let uni = unicast_edges(src_at, rect) as f64;
    let mut o = Outcome::new(Scenario::Broadcast);
    o.scalar("collective_traversals", tc as f64);
    o.scalar("baseline_traversals", tb as f64);
    o.scalar("collective_energy_pj", c.energy_pj);
    o.scalar("baseline_energy_pj", b.energy_pj);
    o.properties.push(Property::equals(
        "collective_traversals",
        tc as f64,
        tree,
        0.0,
    ));
    o.properties
        .push(Property::equals("baseline_traversals", tb as f64, uni, 0.0));
    o.properties.push(Property::equals(
        "energy_ratio",
        c.energy_pj / b.energy_pj,
        tree / uni,
        1e-12,
    ));
    o.runs.push(("collective".into(), c));
    o.runs.push(("baseline".into(), b));
    Ok(o)
}

fn barrier(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let m = topo
        .fabric
        .mesh()
        .ok_or_else(|| SimError::Workload("barriers require a mesh topology".into()))?;
    let rect = Rect::new(0, 0, m.cols - 1, m.rows - 1)?;
    let root = topo.cluster_at(rect.min_corner()).unwrap();
    let (coll, base) = gen_collective(CollectiveKind::Barrier, rect, root, 0, &topo)?;
    let mut sim = Simulator::new(cfg, SimOptions::default())?;
    sim.load(coll)?;
    sim.run()?;
    let released = sim.barriers.iter().filter(|b| b.release.is_some()).count();
    let last = sim
        .barriers
        .iter()
        .filter_map(|b| b.release)
        .max()
        .unwrap_or(0);
    let c = sim.report();
    let b = run(cfg, base)?;
    let mut o = Outcome::new(Scenario::Barrier);
    o.scalar("participants", rect.len() as f64);
    o.scalar("released", released as f64);
    o.scalar("release_cycle", last as f64);
    o.scalar("arrival_traversals", c.traversals(ChannelKind::Req) as f64);
    o.scalar(
        "baseline_arrival_traversals",
        b.traversals(ChannelKind::Req) as f64,
    );
    o.properties.push(Property::equals(
        "released",
        released as f64,
        rect.len() as f64,
        0.0,
    ));
    // one joined arrival per spanning-tree edge
    o.properties.push(Property::equals(
        "arrival_traversals",
        c.traversals(ChannelKind::Req) as f64,
        rect.len() as f64 - 1.0,
        0.0,
    ));
    o.runs.push(("collective".into(), c));
    o.runs.push(("baseline".into(), b));
    Ok(o)
}

fn scatter_gather(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let mut o = Outcome::new(Scenario::ScatterGather);
    for (dist, name, lo, hi) in [
        (IndexDist::Uniform, "uniform", 4.0, 8.0),
        (IndexDist::Contiguous, "contiguous", 7.6, 8.0),
    ] {
        let p = run(
            cfg,
            gen_scatter_gather(GATHER_ELEMS, dist, true, cfg.seed, &topo),
        )?;
        let u = run_with(
            cfg,
            SimOptions { coalesce: false },
            gen_scatter_gather(GATHER_ELEMS, dist, false, cfg.seed, &topo),
        )?;
        let ratio = u.window() as f64 / p.window() as f64;
        let key = format!("{name}_ratio");
        o.scalar(&key, ratio);
        o.properties.push(Property::within(&key, ratio, lo, hi));
        o.runs.push((format!("{name}-packed"), p));
        o.runs.push((format!("{name}-unpacked"), u));
    }
    Ok(o)
}

/// Wrapping sum of little-endian 64-bit words.
fn word_sum(data: &[u8]) -> u64 {
    data.chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .fold(0u64, |a, w| a.wrapping_add(w))
}

fn instream_reduce(cfg: &SimConfig) -> Result<Outcome> {
    let topo = Topology::build(cfg)?;
    let c = probe_cluster(&topo);
    let h = hbm_for(&topo, c);
    let dst = 0x2_0000;
    let op = InstreamOp::Reduce(ReduceKind::Sum);
    let mut o = Outcome::new(Scenario::InstreamReduce);
    let mut durations = BTreeMap::new();
    for (variant, op) in [("instream", Some(op)), ("plain", None)] {
        let mut job = DmaJob::copy(Place::Remote(h, 0), Place::Local(dst), REDUCE_BYTES);
        if let Some(op) = op {
            job = job.with_op(op);
        }
        let mut s = InjectionSchedule::new();
        s.push(0, c, Action::Dma(job));
        let mut sim = Simulator::new(cfg, SimOptions::default())?;
        let expect = word_sum(&sim.memory(h).read(0, REDUCE_BYTES as usize));
        sim.load(s)?;
        sim.run()?;
        let r = sim.report();
        let rec = &r.jobs[&topo.desc(c).name][0];
        durations.insert(variant, rec.completed - rec.submitted);
        if op.is_some() {
            let got = sim.memory(c).read_u64(dst);
            o.properties.push(Property::equals(
                "result_matches_oracle",
                (got == expect) as u8 as f64,
                1.0,
                0.0,
            ));
        }
        o.runs.push((variant.into(), r));
    }
    let elems = REDUCE_BYTES as u64 / 8;
    let software = durations["plain"] + elems * cfg.dma.core_cycles_per_element as u64;
    o.scalar("instream_cycles", durations["instream"] as f64);
    o.scalar("software_cycles", software as f64);
    let speedup = software as f64 / durations["instream"] as f64;
    o.scalar("speedup", speedup);
    o.properties
        .push(Property::at_least("speedup", speedup, 1.0));
    Ok(o)
}

fn d2d_cross(cfg: &SimConfig) -> Result<Outcome> {
    let mut c = cfg.clone();
    c.topology = TopologyKind::Mesh;
    c.mesh.chiplets = c.mesh.chiplets.max(2);
    let topo = Topology::build(&c)?;
    let rows = c.mesh.rows;
    let far = Coord::new(c.mesh.cols - 1, 2 * rows - 1);
    let (a, b) = (
        topo.cluster_at(Coord::new(0, 0)).unwrap(),
        topo.cluster_at(far).unwrap(),
    );
    let mut s = InjectionSchedule::new();
    s.push(
        0,
        a,
        Action::Send {
            target: crate::noc::RouteTarget::Unicast(b),
            txn: crate::noc::Transaction::write(0, 0, vec![0; PROBE_BYTES as usize]),
            class: TrafficClass::Probe,
        },
    );
    let lat = run(&c, s)?;
    let p = &lat.probes[0];
    let want = mesh_latency(&c, p.hops as u64) + c.d2d.crossing_latency as u64;

    let x = c.mesh.cols / 2;
    let (u, v) = (
        topo.cluster_at(Coord::new(x, rows - 1)).unwrap(),
        topo.cluster_at(Coord::new(x, rows)).unwrap(),
    );
    let mut s = InjectionSchedule::new();
    s.push(
        0,
        u,
        Action::Dma(DmaJob::copy(
            Place::Local(0),
            Place::Remote(v, 0),
            FULL_LOAD_BYTES as u32,
        )),
    );
    let tp = run(&c, s)?;
    let wide = tp
        .d2d
        .iter()
        .find(|d| d.channel == ChannelKind::Wide)
        .map_or(0.0, |d| d.bytes_per_cycle);
    let expect = c.channels.wide_bytes as f64 / c.d2d.wide_serialization as f64;

    let mut o = Outcome::new(Scenario::D2dCross);
    o.scalar("cross_latency", p.latency() as f64);
    o.scalar("cross_hops", p.hops as f64);
    o.scalar("wide_bytes_per_cycle", wide);
    o.properties.push(Property::equals(
        "cross_latency",
        p.latency() as f64,
        want as f64,
        0.0,
    ));
    o.properties
        .push(Property::equals("wide_bytes_per_cycle", wide, expect, 1e-9));
    o.runs.push(("latency".into(), lat));
    o.runs.push(("throughput".into(), tp));
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::from_name(s.name()), Some(s));
        }
        assert_eq!(Scenario::from_name("nope"), None);
    }

    #[test]
    fn tree_oracles_for_the_reference_rectangle() {
        let r = Rect::new(0, 0, 3, 1).unwrap();
        assert_eq!(xy_tree_edges(Coord::new(0, 0), r), 7);
        assert_eq!(unicast_edges(Coord::new(0, 0), r), 16);
    }

    #[test]
    fn property_bounds() {
        assert!(Property::within("x", 0.25, 0.24, 0.26).pass);
        assert!(!Property::at_least("x", 0.09, 0.1).pass);
        assert!(Property::equals("x", 1.0, 1.0 + 1e-13, 1e-12).pass);
    }
}
