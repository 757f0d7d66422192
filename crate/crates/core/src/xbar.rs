//! Hierarchical crossbar baseline. Each group of clusters shares one
//! crossbar whose uplinks feed three chiplet-level crossbars:
//!
//! ```text
//!   group g: ports 0..cpg -> clusters, cpg -> intra-group, cpg+1 -> HBM, cpg+2 -> SoC
//!   intra-group: ports 0..G -> groups, G -> system
//!   HBM:         ports 0..G -> groups, G..G+C -> HBM channels, G+C -> system
//!   system:      HBM, intra-group, system SPM
//!   SoC:         ports 0..G -> groups, G -> host
//! ```
//!
//! Every switch carries the same three physical channels as the mesh, so a
//! group's shared uplink moves at most one wide beat per cycle.

use std::collections::VecDeque;

use crate::config::SimConfig;
use crate::fabric::{Attachment, Fabric, OutLink, Switch, SwitchKind};
use crate::noc::EndpointId;
use crate::topology::{EndpointDesc, Role, Topology};

pub fn build_hierarchical_crossbar(cfg: &SimConfig) -> Topology {
    let g = cfg.xbar.groups as usize;
    let cpg = cfg.xbar.clusters_per_group as usize;
    let ch = cfg.xbar.hbm_channels as usize;
    let stage = cfg.xbar.stage_latency as u64;
    let ni = cfg.latency.ni as u64;
    let depth = cfg.router.fifo_depth as usize;

    // switch ids
    let intra = g;
    let hbm = g + 1;
    let system = g + 2;
    let soc = g + 3;
    let n_sw = g + 4;

    let mut out: Vec<Vec<OutLink>> = vec![Vec::new(); n_sw];
    let mut names: Vec<String> = (0..g).map(|i| format!("group{i}")).collect();
    names.extend([
        "intra".to_string(),
        "hbm-xbar".into(),
        "system".into(),
        "soc".into(),
    ]);
    for o in out.iter_mut().take(g) {
        *o = vec![OutLink::Open; cpg + 3];
    }
    out[intra] = vec![OutLink::Open; g + 1];
    out[hbm] = vec![OutLink::Open; g + ch + 1];
    out[system] = vec![OutLink::Open; 3];
    out[soc] = vec![OutLink::Open; g + 1];

    let connect = |out: &mut Vec<Vec<OutLink>>, a: usize, pa: usize, b: usize, pb: usize| {
        out[a][pa] = OutLink::Peer {
            sw: b,
            port: pb,
            latency: stage,
            d2d: None,
        };
        out[b][pb] = OutLink::Peer {
            sw: a,
            port: pa,
            latency: stage,
            d2d: None,
        };
    };
    for i in 0..g {
        connect(&mut out, i, cpg, intra, i);
        connect(&mut out, i, cpg + 1, hbm, i);
        connect(&mut out, i, cpg + 2, soc, i);
    }
    connect(&mut out, hbm, g + ch, system, 0);
    connect(&mut out, intra, g, system, 1);

    let mut endpoints = Vec::new();
    let mut attach = Vec::new();
    let mut add = |out: &mut Vec<Vec<OutLink>>,
                   name: String,
                   role: Role,
                   group: Option<u16>,
                   sw: usize,
                   port: usize| {
        let id = EndpointId(endpoints.len() as u32);
        endpoints.push(EndpointDesc {
            id,
            name,
            role,
            coord: None,
            group,
        });
        attach.push(Attachment {
            sw,
            port,
            inject_latency: ni + stage,
            eject_latency: ni,
        });
        out[sw][port] = OutLink::Eject(id);
    };
    for i in 0..g {
        for j in 0..cpg {
            add(
                &mut out,
                format!("cluster{}", i * cpg + j),
                Role::Cluster,
                Some(i as u16),
                i,
                j,
            );
        }
    }
    for c in 0..ch {
        add(
            &mut out,
            format!("hbm{c}"),
            Role::Hbm { channel: c as u16 },
            None,
            hbm,
            g + c,
        );
    }
    add(&mut out, "host".into(), Role::Host, None, soc, g);
    add(
        &mut out,
        "system-spm".into(),
        Role::SystemSpm,
        None,
        system,
        2,
    );

    let routes = route_tables(&out, &attach);
    let switches = (0..n_sw)
        .map(|s| {
            let caps: Vec<usize> = out[s]
                .iter()
                .enumerate()
                .map(|(p, l)| match l {
                    OutLink::Eject(ep) => depth + attach[ep.index()].inject_latency as usize,
                    OutLink::Peer { .. } => depth + stage as usize,
                    OutLink::Open => {
                        debug_assert!(false, "{} port {p} left open", names[s]);
                        depth
                    }
                })
                .collect();
            Switch::new(
                names[s].clone(),
                SwitchKind::Xbar {
                    routes: routes[s].clone(),
                },
                out[s].clone(),
                &caps,
                cfg.router.join_table_capacity as usize,
            )
        })
        .collect();
    Topology {
        fabric: Fabric::new(switches, Vec::new(), attach, None, cfg.routing),
        endpoints,
    }
}

/// Shortest-path next hop per (switch, endpoint); ties go to the lowest port.
fn route_tables(out: &[Vec<OutLink>], attach: &[Attachment]) -> Vec<Vec<usize>> {
    let n = out.len();
    let mut tables = vec![vec![usize::MAX; attach.len()]; n];
    for (e, a) in attach.iter().enumerate() {
        let mut dist = vec![usize::MAX; n];
        dist[a.sw] = 0;
        let mut q = VecDeque::from([a.sw]);
        while let Some(s) = q.pop_front() {
            for l in &out[s] {
                if let OutLink::Peer { sw, .. } = *l {
                    if dist[sw] == usize::MAX {
                        dist[sw] = dist[s] + 1;
                        q.push_back(sw);
                    }
                }
            }
        }
        for s in 0..n {
            tables[s][e] = if s == a.sw {
                a.port
            } else {
                out[s]
                    .iter()
                    .position(|l| matches!(*l, OutLink::Peer { sw, .. } if dist[sw] + 1 == dist[s]))
                    .expect("crossbar hierarchy is connected")
            };
        }
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TopologyKind;

    fn cfg(groups: u16, cpg: u16) -> SimConfig {
        let mut c = SimConfig {
            topology: TopologyKind::Xbar,
            ..SimConfig::default()
        };
        c.xbar.groups = groups;
        c.xbar.clusters_per_group = cpg;
        c
    }

    /// Switch names visited from `src` to `dst`.
    fn path(t: &Topology, src: EndpointId, dst: EndpointId) -> Vec<String> {
        let f = &t.fabric;
        let mut s = f.attachment(src).sw;
        let mut names = vec![];
        for _ in 0..16 {
            let sw = &f.switches[s];
            names.push(sw.name.clone());
            let SwitchKind::Xbar { routes } = &sw.kind else {
                panic!()
            };
            match sw.out[routes[dst.index()]] {
                OutLink::Eject(e) => {
                    assert_eq!(e, dst);
                    return names;
                }
                OutLink::Peer { sw: n, .. } => s = n,
                OutLink::Open => panic!("open port"),
            }
        }
        panic!("routing loop")
    }

    #[test]
    fn default_inventory() {
        let t = build_hierarchical_crossbar(&cfg(6, 4));
        assert_eq!(t.clusters().count(), 24);
        assert_eq!(t.hbm_channels().count(), 8);
        let group_uplinks = t.fabric.switches[..6]
            .iter()
            .filter(|s| matches!(s.out[5], OutLink::Peer { .. }))
            .count();
        assert_eq!(group_uplinks, 6);
    }

    #[test]
    fn cluster_to_hbm_is_group_then_hbm_xbar() {
        let t = build_hierarchical_crossbar(&cfg(6, 4));
        for c in t.clusters() {
            for h in t.hbm_channels() {
                let p = path(&t, c.id, h.id);
                assert_eq!(p.len(), 2);
                assert!(p[0].starts_with("group"));
                assert_eq!(p[1], "hbm-xbar");
            }
        }
    }

    #[test]
    fn cross_group_uses_intra_group_xbar_once() {
        let t = build_hierarchical_crossbar(&cfg(6, 4));
        let p = path(&t, EndpointId(0), EndpointId(23));
        assert_eq!(p, vec!["group0", "intra", "group5"]);
        // same group stays inside the group crossbar
        assert_eq!(path(&t, EndpointId(0), EndpointId(3)), vec!["group0"]);
    }

    #[test]
    fn degenerate_single_cluster() {
        let t = build_hierarchical_crossbar(&cfg(1, 1));
        assert_eq!(t.clusters().count(), 1);
        let h = t.hbm(0).unwrap();
        assert_eq!(path(&t, EndpointId(0), h).len(), 2);
        let host = t.host().unwrap();
        assert_eq!(path(&t, EndpointId(0), host), vec!["group0", "soc"]);
    }
}
