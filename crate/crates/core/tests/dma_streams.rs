//! DMA data paths end to end: results are compared with direct reads of
//! the source memory.

use nocsim::config::{SimConfig, TopologyKind};
use nocsim::endpoints::{DmaJob, InstreamOp, Place, ReduceKind};
use nocsim::noc::{Coord, EndpointId, RoutingAlgo};
use nocsim::sim::{SimOptions, Simulator};
use nocsim::traffic::{gather_addresses, Action, IndexDist, InjectionSchedule};

fn words(b: &[u8]) -> Vec<u64> {
    b.chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn setup(cfg: &SimConfig) -> (Simulator, EndpointId, EndpointId) {
    let sim = Simulator::new(cfg, SimOptions::default()).unwrap();
    let c = sim.topology().cluster_at(Coord::new(2, 5)).unwrap();
    let h = sim.topology().hbm(5).unwrap();
    (sim, c, h)
}

fn run_job(sim: &mut Simulator, ep: EndpointId, job: DmaJob) {
    let mut s = InjectionSchedule::new();
    s.push(0, ep, Action::Dma(job));
    sim.load(s).unwrap();
    sim.run().unwrap();
}

#[test]
fn map_ops_transform_the_stream() {
    for op in [
        InstreamOp::AddConst(0xFFFF_FFFF_FFFF_FF00),
        InstreamOp::MulConst(0x9E37_79B9),
    ] {
        let (mut sim, c, h) = setup(&SimConfig::default());
        let src = sim.memory(h).read(0x3000, 3000);
        run_job(
            &mut sim,
            c,
            DmaJob::copy(Place::Remote(h, 0x3000), Place::Local(0x40), 3000).with_op(op),
        );
        let want: Vec<u64> = words(&src)
            .into_iter()
            .map(|w| match op {
                InstreamOp::AddConst(k) => w.wrapping_add(k),
                InstreamOp::MulConst(k) => w.wrapping_mul(k),
                InstreamOp::Reduce(_) => unreachable!(),
            })
            .collect();
        assert_eq!(words(&sim.memory(c).read(0x40, 3000)), want);
    }
}

#[test]
fn reductions_match_a_fold() {
    for kind in ReduceKind::ALL {
        let (mut sim, c, h) = setup(&SimConfig::default());
        let w = words(&sim.memory(h).read(0, 8192));
        let want = match kind {
            ReduceKind::Sum => w.iter().fold(0u64, |a, &b| a.wrapping_add(b)),
            ReduceKind::Min => *w.iter().min().unwrap(),
            ReduceKind::Max => *w.iter().max().unwrap(),
            ReduceKind::And => w.iter().fold(!0, |a, &b| a & b),
            ReduceKind::Or => w.iter().fold(0, |a, &b| a | b),
            ReduceKind::Xor => w.iter().fold(0, |a, &b| a ^ b),
        };
        run_job(
            &mut sim,
            c,
            DmaJob::copy(Place::Remote(h, 0), Place::Local(0x800), 8192)
                .with_op(InstreamOp::Reduce(kind)),
        );
        assert_eq!(sim.memory(c).read_u64(0x800), want, "{kind:?}");
        let r = sim.report();
        assert_eq!(r.jobs["cluster(2,5)"][0].result, Some(want));
    }
}

#[test]
fn gathers_return_the_indexed_elements() {
    for packed in [true, false] {
        for dist in [
            IndexDist::Uniform,
            IndexDist::Strided(72),
            IndexDist::Contiguous,
        ] {
            let (mut sim, c, h) = setup(&SimConfig::default());
            let addrs = gather_addresses(300, dist, 11);
            let want: Vec<u8> = addrs
                .iter()
                .flat_map(|&a| sim.memory(h).read(a, 8))
                .collect();
            run_job(&mut sim, c, DmaJob::gather(h, addrs, 0x1_0000, 8, packed));
            assert_eq!(
                sim.memory(c).read(0x1_0000, 2400),
                want,
                "packed={packed} {dist:?}"
            );
        }
    }
}

#[test]
fn two_d_transfer_lands_row_by_row() {
    let (mut sim, c, h) = setup(&SimConfig::default());
    let rows: Vec<Vec<u8>> = (0..5)
        .map(|r| sim.memory(h).read(0x10_000 + r * 0x400, 200))
        .collect();
    run_job(
        &mut sim,
        c,
        DmaJob::two_d(
            Place::Remote(h, 0x10_000),
            Place::Local(0x100),
            5,
            200,
            0x400,
            256,
        ),
    );
    for (r, want) in rows.iter().enumerate() {
        assert_eq!(&sim.memory(c).read(0x100 + r as u64 * 256, 200), want);
    }
}

#[test]
fn remote_write_reaches_another_cluster() {
    let (mut sim, c, _) = setup(&SimConfig::default());
    let dst = sim.topology().cluster_at(Coord::new(0, 0)).unwrap();
    let data = sim.memory(c).read(0, 5000);
    run_job(
        &mut sim,
        c,
        DmaJob::copy(Place::Local(0), Place::Remote(dst, 0x777), 5000),
    );
    assert_eq!(sim.memory(dst).read(0x777, 5000), data);
}

#[test]
fn routing_modes_agree() {
    let mut seen = Vec::new();
    for routing in [RoutingAlgo::Xy, RoutingAlgo::Table, RoutingAlgo::Source] {
        let cfg = SimConfig {
            routing,
            ..SimConfig::default()
        };
        let (mut sim, c, h) = setup(&cfg);
        run_job(
            &mut sim,
            c,
            DmaJob::copy(Place::Remote(h, 0), Place::Local(0), 4096),
        );
        let r = sim.report();
        seen.push((r.cycles, r.link_traversals, sim.memory(c).read(0, 4096)));
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[0], seen[2]);
}

#[test]
fn crossbar_moves_the_same_bytes() {
    let cfg = SimConfig {
        topology: TopologyKind::Xbar,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(&cfg, SimOptions::default()).unwrap();
    let c = sim.topology().clusters().nth(13).unwrap().id;
    let h = sim.topology().hbm(6).unwrap();
    let want = sim.memory(h).read(0x200, 4096);
    run_job(
        &mut sim,
        c,
        DmaJob::copy(Place::Remote(h, 0x200), Place::Local(0), 4096),
    );
    assert_eq!(sim.memory(c).read(0, 4096), want);
}

#[test]
fn rejected_jobs_surface_as_errors() {
    let (mut sim, c, h) = setup(&SimConfig::default());
    let other = sim.topology().hbm(0).unwrap();
    let mut s = InjectionSchedule::new();
    s.push(
        0,
        c,
        Action::Dma(DmaJob::copy(
            Place::Remote(h, 0),
            Place::Remote(other, 0),
            64,
        )),
    );
    sim.load(s).unwrap();
    assert!(matches!(sim.run(), Err(nocsim::SimError::JobRejected(_))));
}
