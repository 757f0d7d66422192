//! Saturating mixed workloads: completion, data integrity, wormhole
//! integrity and crossbar bounds.

use rand::seq::SliceRandom;
use rand::Rng;

use nocsim::config::{SimConfig, TopologyKind};
use nocsim::endpoints::{DmaJob, Place};
use nocsim::noc::{Coord, EndpointId, Rect};
use nocsim::sim::{run, SimOptions, Simulator};
use nocsim::topology::Topology;
use nocsim::traffic::{gen_hbm_load, Action, ChannelMap, InjectionSchedule, LoadMode};

/// A job and the bytes it must leave at `(endpoint, addr)`.
struct Expect {
    at: Vec<(EndpointId, u64)>,
    data: Vec<u8>,
}

/// Unicast reads and writes plus multicasts with disjoint destination
/// regions, so the final memory image does not depend on timing.
fn mixed(seed: u64, topo: &Topology, sim: &Simulator) -> (InjectionSchedule, Vec<Expect>) {
    let mut r = nocsim::rng::stream(seed, 77);
    let clusters: Vec<EndpointId> = topo.clusters().map(|c| c.id).collect();
    let hbms: Vec<EndpointId> = topo.hbm_channels().map(|c| c.id).collect();
    let mut s = InjectionSchedule::new();
    let mut ex = Vec::new();
    for j in 0..120u64 {
        let c = *clusters.choose(&mut r).unwrap();
        let len = r.gen_range(1..=96) * 8;
        let at = r.gen_range(0..300);
        let dst = 0x10_0000 + j * 0x1000;
        match r.gen_range(0..10) {
            0..=3 => {
                let h = *hbms.choose(&mut r).unwrap();
                let a = r.gen_range(0..4096) * 64;
                ex.push(Expect {
                    at: vec![(c, dst)],
                    data: sim.memory(h).read(a, len as usize),
                });
                s.push(
                    at,
                    c,
                    Action::Dma(DmaJob::copy(Place::Remote(h, a), Place::Local(dst), len)),
                );
            }
            4..=7 => {
                let d = *clusters
                    .iter()
                    .filter(|&&d| d != c)
                    .collect::<Vec<_>>()
                    .choose(&mut r)
                    .unwrap();
                let a = r.gen_range(0..64) * 64;
                ex.push(Expect {
                    at: vec![(*d, dst)],
                    data: sim.memory(c).read(a, len as usize),
                });
                s.push(
                    at,
                    c,
                    Action::Dma(DmaJob::copy(Place::Local(a), Place::Remote(*d, dst), len)),
                );
            }
            _ => {
                let (x0, y0) = (r.gen_range(0..4), r.gen_range(0..8));
                let rect = Rect::new(x0, y0, r.gen_range(x0..4), r.gen_range(y0..8)).unwrap();
                let a = r.gen_range(0..64) * 64;
                ex.push(Expect {
                    at: rect
                        .iter()
                        .map(|p| (topo.cluster_at(p).unwrap(), dst))
                        .collect(),
                    data: sim.memory(c).read(a, len as usize),
                });
                let job = DmaJob::copy(Place::Local(a), Place::Multicast { rect, addr: dst }, len);
                s.push(at, c, Action::Dma(job));
            }
        }
    }
    (s, ex)
}

#[test]
fn shallow_buffers_complete_with_correct_data() {
    for seed in 0..20 {
        // 4096 stands in for the unbounded-buffer oracle
        for depth in [1, 2, 4096] {
            let mut cfg = SimConfig::default();
            cfg.router.fifo_depth = depth;
            cfg.seed = seed;
            cfg.max_cycles = 200_000;
            let mut sim = Simulator::new(&cfg, SimOptions::default()).unwrap();
            let topo = Topology::build(&cfg).unwrap();
            let (s, ex) = mixed(seed, &topo, &sim);
            sim.load(s).unwrap();
            sim.run()
                .unwrap_or_else(|e| panic!("seed {seed} depth {depth}: {e}"));
            for e in &ex {
                for &(ep, a) in &e.at {
                    assert_eq!(
                        sim.memory(ep).read(a, e.data.len()),
                        e.data,
                        "seed {seed} depth {depth}"
                    );
                }
            }
            let r = sim.report();
            assert_eq!(r.interleavings, 0, "seed {seed} depth {depth}");
            assert!(r.jobs.values().flatten().all(|j| j.ok));
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = SimConfig::default();
    let go = || {
        let mut sim = Simulator::new(&cfg, SimOptions::default()).unwrap();
        let topo = Topology::build(&cfg).unwrap();
        let (s, _) = mixed(3, &topo, &sim);
        sim.load(s).unwrap();
        sim.run().unwrap();
        let r = sim.report();
        (r.to_csv(&Default::default()), r.to_json())
    };
    assert_eq!(go(), go());
}

#[test]
fn group_members_share_the_port_fairly() {
    let cfg = SimConfig {
        topology: TopologyKind::Xbar,
        ..SimConfig::default()
    };
    let topo = Topology::build(&cfg).unwrap();
    let mut s = InjectionSchedule::new();
    for (k, c) in topo.clusters().take(4).enumerate() {
        let h = topo.hbm(k as u16).unwrap();
        s.push(
            0,
            c.id,
            Action::Dma(DmaJob::copy(
                Place::Remote(h, 0),
                Place::Local(0),
                32 * 1024,
            )),
        );
    }
    let r = run(&cfg, s).unwrap();
    let done: Vec<u64> = topo
        .clusters()
        .take(4)
        .map(|c| r.jobs[&c.name][0].completed)
        .collect();
    // each member gets a quarter of one 64 B port
    for c in topo.clusters().take(4) {
        let u = r.endpoint(&c.name).unwrap().utilization;
        assert!((u - 0.25).abs() < 0.01, "{} {u}", c.name);
    }
    // round-robin per packet: finishes within one burst per member
    let spread = done.iter().max().unwrap() - done.iter().min().unwrap();
    assert!(spread <= 4 * 8, "{done:?}");
}

#[test]
fn crossbar_respects_the_group_port_min_cut() {
    let cfg = SimConfig {
        topology: TopologyKind::Xbar,
        ..SimConfig::default()
    };
    let topo = Topology::build(&cfg).unwrap();
    for map in [ChannelMap::Affine, ChannelMap::Interleaved] {
        let r = run(
            &cfg,
            gen_hbm_load(LoadMode::Full, 32 * 1024, 8 * 1024, map, &topo),
        )
        .unwrap();
        let delivered: u64 = r.endpoints.iter().map(|e| e.read_bytes).sum();
        assert_eq!(delivered, 24 * 32 * 1024);
        assert!(delivered as f64 / r.window() as f64 <= 6.0 * 64.0);
    }
}

#[test]
fn full_load_mesh_is_capped_at_a_quarter_channel() {
    let cfg = SimConfig::default();
    let topo = Topology::build(&cfg).unwrap();
    let r = run(
        &cfg,
        gen_hbm_load(
            LoadMode::Full,
            32 * 1024,
            8 * 1024,
            ChannelMap::Affine,
            &topo,
        ),
    )
    .unwrap();
    for c in topo.clusters() {
        let u = r.endpoint(&c.name).unwrap().utilization;
        assert!(u <= 0.25 + 1e-9 && u > 0.23, "{} {u}", c.name);
    }
    let far = topo.cluster_at(Coord::new(3, 0)).unwrap();
    assert_eq!(
        r.endpoint(&topo.desc(far).name).unwrap().read_bytes,
        32 * 1024
    );
}
