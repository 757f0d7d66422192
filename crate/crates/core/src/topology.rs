//! Endpoint inventory and the mesh builder.

use serde::Serialize;

use crate::config::SimConfig;
use crate::endpoints::d2d::D2dLink;
use crate::error::Result;
use crate::fabric::{Attachment, Fabric, MeshGeometry, OutLink, Switch, SwitchKind};
use crate::noc::{Coord, Direction, EndpointId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Cluster,
    Hbm { channel: u16 },
    Host,
    SystemSpm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointDesc {
    pub id: EndpointId,
    pub name: String,
    pub role: Role,
    /// Router the endpoint hangs off, on meshes.
    pub coord: Option<Coord>,
    /// Group index, on crossbars.
    pub group: Option<u16>,
}

pub struct Topology {
    pub fabric: Fabric,
    pub endpoints: Vec<EndpointDesc>,
}

impl Topology {
    pub fn clusters(&self) -> impl Iterator<Item = &EndpointDesc> {
        self.endpoints.iter().filter(|e| e.role == Role::Cluster)
    }

    pub fn hbm_channels(&self) -> impl Iterator<Item = &EndpointDesc> {
        self.endpoints
            .iter()
            .filter(|e| matches!(e.role, Role::Hbm { .. }))
    }

    pub fn cluster_at(&self, c: Coord) -> Option<EndpointId> {
        self.clusters().find(|e| e.coord == Some(c)).map(|e| e.id)
    }

    pub fn hbm(&self, channel: u16) -> Option<EndpointId> {
        self.endpoints
            .iter()
            .find(|e| e.role == Role::Hbm { channel })
            .map(|e| e.id)
    }

    pub fn host(&self) -> Option<EndpointId> {
        self.endpoints
            .iter()
            .find(|e| e.role == Role::Host)
            .map(|e| e.id)
    }

    pub fn desc(&self, ep: EndpointId) -> &EndpointDesc {
        &self.endpoints[ep.index()]
    }

    pub fn build(cfg: &SimConfig) -> Result<Topology> {
        cfg.validate()?;
        match cfg.topology {
            crate::config::TopologyKind::Mesh => Ok(build_mesh(cfg)),
            crate::config::TopologyKind::Xbar => Ok(crate::xbar::build_hierarchical_crossbar(cfg)),
        }
    }
}

/// Builds the mesh: clusters on every router's Local port (ids in row-major
/// order, south row first), one HBM channel on the West port of each
/// west-edge router, and the host on the North port of the north-west
/// router. Chiplets stack in y; links across a chiplet boundary are D2D.
pub fn build_mesh(cfg: &SimConfig) -> Topology {
    let cols = cfg.mesh.cols;
    let rows = cfg.mesh.total_rows();
    let geom = MeshGeometry { cols, rows };
    let lat = &cfg.latency;
    let hop = (lat.link + lat.router) as u64;
    let ni = lat.ni as u64;
    let depth = cfg.router.fifo_depth as usize;
    let n_clusters = cols as usize * rows as usize;

    let mut endpoints = Vec::new();
    let mut attach = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            let c = Coord::new(x, y);
            endpoints.push(EndpointDesc {
                id: EndpointId(endpoints.len() as u32),
                name: format!("cluster{c}"),
                role: Role::Cluster,
                coord: Some(c),
                group: None,
            });
            attach.push(Attachment {
                sw: geom.switch_at(c).unwrap(),
                port: Direction::Local.index(),
                inject_latency: ni,
                eject_latency: ni,
            });
        }
    }
    for y in 0..rows {
        let c = Coord::new(0, y);
        endpoints.push(EndpointDesc {
            id: EndpointId(endpoints.len() as u32),
            name: format!("hbm{y}"),
            role: Role::Hbm { channel: y },
            coord: Some(c),
            group: None,
        });
        attach.push(Attachment {
            sw: geom.switch_at(c).unwrap(),
            port: Direction::West.index(),
            inject_latency: ni,
            eject_latency: ni,
        });
    }
    let host_at = Coord::new(0, rows - 1);
    endpoints.push(EndpointDesc {
        id: EndpointId(endpoints.len() as u32),
        name: "host".into(),
        role: Role::Host,
        coord: Some(host_at),
        group: None,
    });
    attach.push(Attachment {
        sw: geom.switch_at(host_at).unwrap(),
        port: Direction::North.index(),
        inject_latency: ni,
        eject_latency: ni,
    });

    let mut d2d = Vec::new();
    let mut switches = Vec::with_capacity(n_clusters);
    for y in 0..rows {
        for x in 0..cols {
            let c = Coord::new(x, y);
            let mut out = vec![OutLink::Open; 5];
            let mut caps = vec![depth; 5];
            for d in Direction::ALL {
                if d == Direction::Local {
                    continue;
                }
                let Some(n) = d.step(c).filter(|n| n.x < cols && n.y < rows) else {
                    continue;
                };
                let crosses = matches!(d, Direction::North | Direction::South)
                    && (c.y / cfg.mesh.rows) != (n.y / cfg.mesh.rows);
                let (latency, link) = if crosses {
                    d2d.push(D2dLink::new(cfg.d2d.clone()));
                    (hop + cfg.d2d.crossing_latency as u64, Some(d2d.len() - 1))
                } else {
                    (hop, None)
                };
                out[d.index()] = OutLink::Peer {
                    sw: geom.switch_at(n).unwrap(),
                    port: d.opposite().index(),
                    latency,
                    d2d: link,
                };
                // the neighbour's link into us has the same latency
                caps[d.index()] = depth + latency as usize;
            }
            switches.push((c, out, caps));
        }
    }
    for (i, a) in attach.iter().enumerate() {
        let (_, out, caps) = &mut switches[a.sw];
        out[a.port] = OutLink::Eject(EndpointId(i as u32));
        caps[a.port] = depth + a.inject_latency as usize;
    }
    let switches = switches
        .into_iter()
        .map(|(c, out, caps)| {
            Switch::new(
                format!("router{c}"),
                SwitchKind::Router { coord: c },
                out,
                &caps,
                cfg.router.join_table_capacity as usize,
            )
        })
        .collect();
    Topology {
        fabric: Fabric::new(switches, d2d, attach, Some(geom), cfg.routing),
        endpoints,
    }
}
