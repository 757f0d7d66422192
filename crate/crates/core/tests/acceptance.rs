//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass conditions are recomputed here from raw
//! reports and independent oracles, not read from preset verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use nocsim::config::{SimConfig, TopologyKind};
use nocsim::endpoints::{DmaJob, InstreamOp, InstreamUnit, Place, ReduceKind};
use nocsim::fabric::OutLink;
use nocsim::metrics::MetricsReport;
use nocsim::noc::{
    ChannelKind, CollectiveId, Coord, EndpointId, Rect, RouteTarget, TrafficClass, Transaction,
};
use nocsim::scenario::{
    cluster_utilizations, hbm_utilizations, run_scenario, Outcome, Scenario, GATHER_ELEMS,
};
use nocsim::sim::{run, SimOptions, Simulator};
use nocsim::topology::Topology;
use nocsim::traffic::{
    gen_collective, gen_latency_sweep, gen_random_mix, Action, CollectiveKind, InjectionSchedule,
};
use nocsim::traffic::{LoadMode, SweepParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One timed run of every preset, shared by the criteria that need them.
struct Presets {
    out: BTreeMap<&'static str, (Outcome, f64)>,
}

impl Presets {
    fn run(cfg: &SimConfig) -> nocsim::Result<Self> {
        let mut out = BTreeMap::new();
        for s in Scenario::ALL {
            let t = Instant::now();
            let o = run_scenario(s, cfg)?;
            out.insert(s.name(), (o, secs(t)));
        }
        Ok(Presets { out })
    }

    fn get(&self, s: Scenario, variant: &str) -> (&MetricsReport, f64) {
        let (o, t) = &self.out[s.name()];
        (o.run(variant).expect("preset variant"), *t)
    }
}

fn xbar_cfg(cfg: &SimConfig) -> SimConfig {
    let mut c = cfg.clone();
    c.topology = TopologyKind::Xbar;
    c
}

fn c1(cfg: &SimConfig, p: &Presets) -> Verdict {
    let (r, t) = p.get(Scenario::HbmFull, "full");
    let topo = Topology::build(cfg).unwrap();
    let u = cluster_utilizations(r, &topo);
    let (lo, hi) = u
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    let agg = mean(&hbm_utilizations(r, &topo));
    let pass = u.len() == 32
        && (lo - 0.25).abs() <= 0.01
        && (hi - 0.25).abs() <= 0.01
        && agg >= 0.95
        && t < 10.0;
    verdict(pass, format!("32 clusters in [{lo:.4}, {hi:.4}] (25% ± 1pp), channels {agg:.4} (>= 0.95), {t:.2}s (< 10s)"))
}

fn c2(cfg: &SimConfig, p: &Presets) -> Verdict {
    let (r, t) = p.get(Scenario::HbmZero, "zero");
    let topo = Topology::build(cfg).unwrap();
    let best = hbm_utilizations(r, &topo).into_iter().fold(0.0, f64::max);
    let pass = best >= 0.95 && t < 5.0;
    verdict(
        pass,
        format!("channel utilization {best:.4} (>= 0.95), {t:.2}s (< 5s)"),
    )
}

fn c3(cfg: &SimConfig, p: &Presets) -> Verdict {
    let (mesh, _) = p.get(Scenario::XbarVsMesh, "mesh");
    let (xbar, _) = p.get(Scenario::XbarVsMesh, "xbar");
    let m = mean(&cluster_utilizations(mesh, &Topology::build(cfg).unwrap()));
    let x = mean(&cluster_utilizations(
        xbar,
        &Topology::build(&xbar_cfg(cfg)).unwrap(),
    ));
    let gap = (m - x) / x;
    verdict(
        gap >= 0.10,
        format!("mesh {m:.4} vs crossbar {x:.4}, relative gap {gap:.3} (>= 0.10)"),
    )
}

fn c4(cfg: &SimConfig) -> Verdict {
    let t = Instant::now();
    let topo = Topology::build(cfg).unwrap();
    let r = run(
        cfg,
        gen_latency_sweep(LoadMode::Zero, SweepParams::default(), &topo),
    )
    .unwrap();
    let t = secs(t);
    let l = &cfg.latency;
    let bad = r
        .probes
        .iter()
        .filter(|p| {
            let a = topo.endpoints[p.src as usize].coord.unwrap();
            let b = topo.endpoints[p.dst as usize].coord.unwrap();
            p.latency() != 2 * l.ni as u64 + a.manhattan(b) as u64 * (l.router + l.link) as u64
        })
        .count();
    let n = r.probes.len();
    verdict(
        n == 32 * 31 && bad == 0 && t < 5.0,
        format!("{n} pairs, {bad} off the hop formula, {t:.2}s (< 5s)"),
    )
}

/// Links of the union of X-then-Y paths from `src` to every cell.
fn xy_tree(src: Coord, rect: Rect) -> BTreeSet<(Coord, Coord)> {
    let mut edges = BTreeSet::new();
    for dst in rect.iter() {
        let mut cur = src;
        while cur != dst {
            let next = if cur.x != dst.x {
                Coord::new(if dst.x > cur.x { cur.x + 1 } else { cur.x - 1 }, cur.y)
            } else {
                Coord::new(cur.x, if dst.y > cur.y { cur.y + 1 } else { cur.y - 1 })
            };
            edges.insert((cur, next));
            cur = next;
        }
    }
    edges
}

fn c5(cfg: &SimConfig) -> Verdict {
    let topo = Topology::build(cfg).unwrap();
    let rect = Rect::new(0, 0, 3, 1).unwrap();
    let src = Coord::new(0, 0);
    let tree = xy_tree(src, rect).len() as u64;
    let manhattan: u64 = rect.iter().map(|c| src.manhattan(c) as u64).sum();
    let (coll, base) = gen_collective(
        CollectiveKind::Broadcast,
        rect,
        topo.cluster_at(src).unwrap(),
        64,
        &topo,
    )
    .unwrap();
    let (a, b) = (run(cfg, coll).unwrap(), run(cfg, base).unwrap());
    let (ta, tb) = (
        a.traversals(ChannelKind::Wide),
        b.traversals(ChannelKind::Wide),
    );
    let byte_ratio = a.link_bytes as f64 / b.link_bytes as f64;
    let energy_ratio = a.energy_pj / b.energy_pj;
    let pass = (tree, manhattan) == (7, 16)
        && (ta, tb) == (tree, manhattan)
        && byte_ratio == 7.0 / 16.0
        && (energy_ratio - 7.0 / 16.0).abs() < 1e-12;
    verdict(
        pass,
        format!("traversals {ta} vs {tb} (oracle {tree} vs {manhattan}), byte ratio {byte_ratio}, energy ratio {energy_ratio:.12}"),
    )
}

fn req_link_flits(sim: &Simulator) -> BTreeMap<(Coord, Coord), u64> {
    let f = &sim.topology().fabric;
    let mut m = BTreeMap::new();
    for s in &f.switches {
        for (p, out) in s.out.iter().enumerate() {
            if let OutLink::Peer { sw, .. } = *out {
                let n = s.stats[p].flits[ChannelKind::Req.index()];
                if n > 0 {
                    m.insert((s.coord().unwrap(), f.switches[sw].coord().unwrap()), n);
                }
            }
        }
    }
    m
}

/// West along the row, then south down column x0.
fn barrier_tree(rect: Rect) -> BTreeSet<(Coord, Coord)> {
    rect.iter()
        .filter(|&c| c != rect.min_corner())
        .map(|c| {
            let next = if c.x > rect.x0() {
                Coord::new(c.x - 1, c.y)
            } else {
                Coord::new(c.x, c.y - 1)
            };
            (c, next)
        })
        .collect()
}

/// Runs one barrier with the given arrival offsets; `None` if it is correct.
fn barrier_fault(cfg: &SimConfig, rect: Rect, offsets: &[u64]) -> Option<String> {
    let mut sim = Simulator::new(cfg, SimOptions::default()).unwrap();
    let mut s = InjectionSchedule::new();
    for (c, &t) in rect.iter().zip(offsets) {
        let ep = sim.topology().cluster_at(c).unwrap();
        s.push(
            t,
            ep,
            Action::Barrier {
                rect,
                id: CollectiveId(7),
            },
        );
    }
    sim.load(s).unwrap();
    if let Err(e) = sim.run() {
        return Some(format!("{rect:?}: {e}"));
    }
    let last = sim.barriers.iter().map(|b| b.arrive).max().unwrap_or(0);
    let released = sim
        .barriers
        .iter()
        .filter(|b| b.release.is_some_and(|r| r > last))
        .count();
    if sim.barriers.len() != rect.len() || released != rect.len() {
        return Some(format!(
            "{rect:?}: {released}/{} released after the last arrival",
            rect.len()
        ));
    }
    let req = req_link_flits(&sim);
    let edges: BTreeSet<_> = req.keys().cloned().collect();
    if edges != barrier_tree(rect) || req.values().any(|&n| n != 1) {
        return Some(format!("{rect:?}: joined requests off the tree edges"));
    }
    None
}

fn c6(cfg: &SimConfig) -> Verdict {
    let (cols, rows) = (cfg.mesh.cols, cfg.mesh.rows);
    let mut exhaustive = 0;
    let mut faults = Vec::new();
    for x0 in 0..cols {
        for x1 in x0..cols {
            for y0 in 0..rows {
                for y1 in y0..rows {
                    let rect = Rect::new(x0, y0, x1, y1).unwrap();
                    faults.extend(barrier_fault(cfg, rect, &vec![0; rect.len()]));
                    exhaustive += 1;
                }
            }
        }
    }
    let mut r = nocsim::rng::stream(cfg.seed, 0xBA);
    for _ in 0..100 {
        let (x0, y0) = (r.gen_range(0..cols), r.gen_range(0..rows));
        let rect = Rect::new(x0, y0, r.gen_range(x0..cols), r.gen_range(y0..rows)).unwrap();
        let offsets: Vec<u64> = (0..rect.len()).map(|_| r.gen_range(0..200)).collect();
        faults.extend(barrier_fault(cfg, rect, &offsets));
    }
    let detail = match faults.first() {
        None => format!("{exhaustive} rectangles exhaustive + 100 random with staggered arrivals, one request per tree edge"),
        Some(f) => format!("{} faults, first: {f}", faults.len()),
    };
    verdict(faults.is_empty(), detail)
}

fn oracle(op: InstreamOp, w: &[u64]) -> (Vec<u64>, Option<u64>) {
    match op {
        InstreamOp::AddConst(k) => (w.iter().map(|x| x.wrapping_add(k)).collect(), None),
        InstreamOp::MulConst(k) => (w.iter().map(|x| x.wrapping_mul(k)).collect(), None),
        InstreamOp::Reduce(kind) => {
            let acc = match kind {
                ReduceKind::Sum => w.iter().fold(0u64, |a, &b| a.wrapping_add(b)),
                ReduceKind::Min => w.iter().copied().min().unwrap(),
                ReduceKind::Max => w.iter().copied().max().unwrap(),
                ReduceKind::And => w.iter().fold(!0u64, |a, &b| a & b),
                ReduceKind::Or => w.iter().fold(0u64, |a, &b| a | b),
                ReduceKind::Xor => w.iter().fold(0u64, |a, &b| a ^ b),
            };
            (w.to_vec(), Some(acc))
        }
    }
}

fn words(b: &[u8]) -> Vec<u64> {
    b.chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn c7(cfg: &SimConfig) -> Verdict {
    let mut r = nocsim::rng::stream(cfg.seed, 0x57);
    let ops = |r: &mut rand_chacha::ChaCha8Rng, i: usize| match i % 8 {
        0 => InstreamOp::AddConst(r.gen()),
        1 => InstreamOp::MulConst(r.gen()),
        k => InstreamOp::Reduce(ReduceKind::ALL[k - 2]),
    };
    let mut bad = 0;
    // the unit alone, fed in random burst-sized pieces
    for i in 0..1000 {
        let op = ops(&mut r, i);
        let n = r.gen_range(1..=4096);
        let w: Vec<u64> = (0..n).map(|_| r.gen()).collect();
        let mut bytes: Vec<u8> = w.iter().flat_map(|x| x.to_le_bytes()).collect();
        let mut u = InstreamUnit::new(op);
        let mut off = 0;
        while off < bytes.len() {
            let len = (r.gen_range(1..=64) * 8).min(bytes.len() - off);
            u.feed_bytes(&mut bytes[off..off + len]).unwrap();
            off += len;
        }
        let (want, acc) = oracle(op, &w);
        bad += (words(&bytes) != want || u.result() != acc) as usize;
    }
    // and through the DMA path end to end
    let mut e2e = 0;
    for i in 0..40 {
        let op = ops(&mut r, i);
        let n = r.gen_range(1..=4096u32);
        let mut sim = Simulator::new(cfg, SimOptions::default()).unwrap();
        let c = sim.topology().cluster_at(Coord::new(3, 0)).unwrap();
        let h = sim.topology().hbm(2).unwrap();
        let w = words(&sim.memory(h).read(0x4000, n as usize * 8));
        let mut s = InjectionSchedule::new();
        let job = DmaJob::copy(Place::Remote(h, 0x4000), Place::Local(0x100), n * 8).with_op(op);
        s.push(0, c, Action::Dma(job));
        sim.load(s).unwrap();
        sim.run().unwrap();
        let (want, acc) = oracle(op, &w);
        let ok = match acc {
            Some(a) => sim.memory(c).read_u64(0x100) == a,
            None => words(&sim.memory(c).read(0x100, n as usize * 8)) == want,
        };
        bad += !ok as usize;
        e2e += 1;
    }
    verdict(
        bad == 0,
        format!("1000 unit streams + {e2e} DMA streams, all 8 ops, {bad} mismatches"),
    )
}

fn c8(p: &Presets) -> Verdict {
    let bytes = GATHER_ELEMS as f64 * 8.0;
    let bw = |v: &str| bytes / p.get(Scenario::ScatterGather, v).0.window() as f64;
    let uniform = bw("uniform-packed") / bw("uniform-unpacked");
    let contiguous = bw("contiguous-packed") / bw("contiguous-unpacked");
    let t = p.out[Scenario::ScatterGather.name()].1;
    let pass = (4.0..=8.0).contains(&uniform) && (7.6..=8.0).contains(&contiguous) && t < 30.0;
    verdict(
        pass,
        format!(
            "uniform {uniform:.3}x (4..8), contiguous {contiguous:.3}x (>= 7.6), {t:.2}s (< 30s)"
        ),
    )
}

fn one_hop_energy(cfg: &SimConfig) -> f64 {
    let topo = Topology::build(cfg).unwrap();
    let (a, b) = (
        topo.cluster_at(Coord::new(1, 3)).unwrap(),
        topo.cluster_at(Coord::new(2, 3)).unwrap(),
    );
    let mut s = InjectionSchedule::new();
    s.push(
        0,
        a,
        Action::Dma(DmaJob::copy(Place::Local(0), Place::Remote(b, 0), 4096)),
    );
    run(cfg, s).unwrap().energy_pj
}

fn c9(cfg: &SimConfig) -> Verdict {
    let d = one_hop_energy(cfg);
    let mut low = cfg.clone();
    low.energy.pj_per_byte_hop = 0.1455;
    let l = one_hop_energy(&low);
    let pass = (d - 4096.0 * 0.15).abs() < 1e-9
        && (l - 4096.0 * 0.1455).abs() < 1e-9
        && (l - 596.0).abs() <= 1.0;
    verdict(
        pass,
        format!("{d} pJ at 0.15 (614.4), {l} pJ at 0.1455 (596 ± 1)"),
    )
}

fn c10(cfg: &SimConfig) -> Verdict {
    let mut shallow = cfg.clone();
    shallow.router.fifo_depth = 2;
    let topo = Topology::build(&shallow).unwrap();
    let mut interleaved = 0;
    let mut flits = 0;
    for seed in 0..10 {
        let r = run(&shallow, gen_random_mix(200, 4096, seed, &topo)).unwrap();
        interleaved += r.interleavings;
        flits += r.traversals(ChannelKind::Wide);
    }
    // narrow probes on rows while wide writes saturate the middle links
    let mut probes = InjectionSchedule::new();
    let mut load = InjectionSchedule::new();
    let at = |x, y| topo.cluster_at(Coord::new(x, y)).unwrap();
    for y in 0..cfg.mesh.rows {
        for k in 0..20 {
            let txn = Transaction::write(1, 0x40, vec![k as u8; 8]);
            let send = Action::Send {
                target: RouteTarget::Unicast(at(3, y)),
                txn,
                class: TrafficClass::Probe,
            };
            probes.push(200 + k * 37, at(0, y), send.clone());
            load.push(200 + k * 37, at(0, y), send);
        }
        load.push(
            0,
            at(1, y),
            Action::Dma(DmaJob::copy(
                Place::Local(0),
                Place::Remote(at(2, y), 0),
                64 * 1024,
            )),
        );
        load.push(
            0,
            at(2, y),
            Action::Dma(DmaJob::copy(
                Place::Local(0),
                Place::Remote(at(1, y), 0),
                64 * 1024,
            )),
        );
    }
    let alone = run(cfg, probes).unwrap();
    let busy = run(cfg, load).unwrap();
    let lat = |r: &MetricsReport| -> Vec<(u64, u64)> {
        r.probes.iter().map(|p| (p.inject, p.latency())).collect()
    };
    let same = lat(&alone) == lat(&busy) && !alone.probes.is_empty();
    let req = alone.probes.iter().all(|p| p.channel == ChannelKind::Req);
    let wide_busy = busy.traversals(ChannelKind::Wide) > 0;
    verdict(
        interleaved == 0 && same && req && wide_busy,
        format!(
            "10 seeds, {flits} wide link flits, {interleaved} interleavings; {} req probes {} under wide load",
            alone.probes.len(),
            if same { "unchanged" } else { "CHANGED" }
        ),
    )
}

fn c11(cfg: &SimConfig, p: &Presets) -> Verdict {
    let mut diff = Vec::new();
    for s in Scenario::ALL {
        let again = run_scenario(s, cfg).unwrap();
        let first = &p.out[s.name()].0;
        let ser = |o: &Outcome| -> Vec<(String, String, String)> {
            o.runs
                .iter()
                .map(|(v, r)| (v.clone(), r.to_csv(&o.scalars), r.to_json()))
                .collect()
        };
        if ser(first) != ser(&again) || nocsim::cli::summary(first) != nocsim::cli::summary(&again)
        {
            diff.push(s.name());
        }
    }
    let detail = if diff.is_empty() {
        format!(
            "{} presets byte-identical across two runs",
            Scenario::ALL.len()
        )
    } else {
        format!("differ: {}", diff.join(", "))
    };
    verdict(diff.is_empty(), detail)
}

fn c12(cfg: &SimConfig) -> Verdict {
    let mut c = cfg.clone();
    c.mesh.chiplets = 2;
    let topo = Topology::build(&c).unwrap();
    let p = SweepParams {
        spacing: 64,
        ..SweepParams::default()
    };
    let r = run(&c, gen_latency_sweep(LoadMode::Zero, p, &topo)).unwrap();
    let l = &c.latency;
    let mut crossing = 0;
    let bad = r
        .probes
        .iter()
        .filter(|p| {
            let a = topo.endpoints[p.src as usize].coord.unwrap();
            let b = topo.endpoints[p.dst as usize].coord.unwrap();
            let crosses = a.y / c.mesh.rows != b.y / c.mesh.rows;
            crossing += crosses as usize;
            let want = 2 * l.ni as u64
                + a.manhattan(b) as u64 * (l.router + l.link) as u64
                + if crosses {
                    c.d2d.crossing_latency as u64
                } else {
                    0
                };
            p.latency() != want
        })
        .count();
    let (u, v): (EndpointId, EndpointId) = (
        topo.cluster_at(Coord::new(1, c.mesh.rows - 1)).unwrap(),
        topo.cluster_at(Coord::new(1, c.mesh.rows)).unwrap(),
    );
    let mut s = InjectionSchedule::new();
    s.push(
        0,
        u,
        Action::Dma(DmaJob::copy(
            Place::Local(0),
            Place::Remote(v, 0),
            64 * 1024,
        )),
    );
    let tp = run(&c, s).unwrap();
    let wide = tp
        .d2d
        .iter()
        .find(|d| d.channel == ChannelKind::Wide)
        .map_or(0.0, |d| d.bytes_per_cycle);
    let want = c.channels.wide_bytes as f64 / c.d2d.wide_serialization as f64;
    let n = r.probes.len();
    verdict(
        bad == 0 && crossing > 0 && n == 64 * 63 && wide == want,
        format!("{n} pairs ({crossing} crossing), {bad} off formula; seam {wide} B/cycle (exact {want})"),
    )
}

fn main() -> ExitCode {
    let cfg = SimConfig::default();
    let t = Instant::now();
    let presets = Presets::run(&cfg).expect("presets run");
    let checks: Vec<(u8, Box<dyn Fn() -> Verdict + '_>)> = vec![
        (1, Box::new(|| c1(&cfg, &presets))),
        (2, Box::new(|| c2(&cfg, &presets))),
        (3, Box::new(|| c3(&cfg, &presets))),
        (4, Box::new(|| c4(&cfg))),
        (5, Box::new(|| c5(&cfg))),
        (6, Box::new(|| c6(&cfg))),
        (7, Box::new(|| c7(&cfg))),
        (8, Box::new(|| c8(&presets))),
        (9, Box::new(|| c9(&cfg))),
        (10, Box::new(|| c10(&cfg))),
        (11, Box::new(|| c11(&cfg, &presets))),
        (12, Box::new(|| c12(&cfg))),
    ];
    let mut failed = 0;
    for (n, check) in checks {
        let v = check();
        failed += !v.pass as usize;
        println!(
            "criterion {n:>2}: {} {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!(
        "acceptance: {} of 12 passed in {:.1}s",
        12 - failed,
        secs(t)
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
