use std::fmt;

use serde::{Deserialize, Serialize};

use super::coord::{Direction, Rect};
use super::transaction::{PayloadShape, TxnId, TxnKind};

/// One of the three independent physical channels of every link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    Req = 0,
    Rsp = 1,
    Wide = 2,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::Req, ChannelKind::Rsp, ChannelKind::Wide];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Req => "req",
            ChannelKind::Rsp => "rsp",
            ChannelKind::Wide => "wide",
        }
    }
}

/// Payload bytes per flit on the narrow and wide channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelWidths {
    pub narrow: u32,
    pub wide: u32,
}

impl ChannelWidths {
    pub fn capacity(&self, ch: ChannelKind) -> u32 {
        match ch {
            ChannelKind::Req | ChannelKind::Rsp => self.narrow,
            ChannelKind::Wide => self.wide,
        }
    }
}

impl Default for ChannelWidths {
    fn default() -> Self {
        ChannelWidths {
            narrow: 8,
            wide: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EndpointId(pub u32);

impl EndpointId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ep{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CollectiveId(pub u64);

/// Where a flit is headed and how routers treat it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteTarget {
    Unicast(EndpointId),
    /// Forked along the dimension-ordered tree over `rect`. When `join` is
    /// set, each fork installs a join entry so responses merge on the way back.
    Multicast {
        rect: Rect,
        id: CollectiveId,
        join: bool,
    },
    /// Response routed upstream through the join entries of collective `id`.
    JoinResponse(CollectiveId),
    /// Barrier arrival, joined hop by hop toward the min corner of `rect`.
    BarrierJoin {
        rect: Rect,
        id: CollectiveId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollectiveTag {
    None,
    Fork,
    Join,
}

impl RouteTarget {
    pub fn collective_tag(&self) -> CollectiveTag {
        match self {
            RouteTarget::Unicast(_) => CollectiveTag::None,
            RouteTarget::Multicast { .. } => CollectiveTag::Fork,
            RouteTarget::JoinResponse(_) | RouteTarget::BarrierJoin { .. } => CollectiveTag::Join,
        }
    }
}

/// Precomputed output-port list carried in the header, three bits per hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceRoute {
    bits: u128,
    len: u8,
}

impl SourceRoute {
    pub const MAX_HOPS: usize = 42;

    pub fn from_ports(ports: &[usize]) -> Option<SourceRoute> {
        if ports.len() > Self::MAX_HOPS {
            return None;
        }
        let mut bits = 0u128;
        for (i, &p) in ports.iter().enumerate() {
            if p >= 8 {
                return None;
            }
            bits |= (p as u128) << (3 * i);
        }
        Some(SourceRoute {
            bits,
            len: ports.len() as u8,
        })
    }

    pub fn from_directions(dirs: &[Direction]) -> Option<SourceRoute> {
        let ports: Vec<usize> = dirs.iter().map(|d| d.index()).collect();
        Self::from_ports(&ports)
    }

    pub fn port(&self, hop: usize) -> Option<usize> {
        (hop < self.len as usize).then(|| ((self.bits >> (3 * hop)) & 0b111) as usize)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrafficClass {
    Dma,
    Probe,
    Background,
    Collective,
    Direct,
}

impl TrafficClass {
    pub fn name(self) -> &'static str {
        match self {
            TrafficClass::Dma => "dma",
            TrafficClass::Probe => "probe",
            TrafficClass::Background => "background",
            TrafficClass::Collective => "collective",
            TrafficClass::Direct => "direct",
        }
    }
}

/// Per-packet sideband metadata, replicated on every flit of the packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketMeta {
    pub packet: u64,
    pub src: EndpointId,
    pub target: RouteTarget,
    pub injected_at: u64,
    pub class: TrafficClass,
    pub source_route: Option<SourceRoute>,
}

/// Transaction fields carried out-of-band with each flit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnHeader {
    pub kind: TxnKind,
    pub id: TxnId,
    pub address: u64,
    pub length: u32,
    pub shape: PayloadShape,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flit {
    pub channel: ChannelKind,
    pub meta: PacketMeta,
    pub txn: TxnHeader,
    pub head: bool,
    pub tail: bool,
    pub payload: Vec<u8>,
    /// Router-to-router links traversed so far.
    pub hops: u16,
}

impl Flit {
    pub fn packet(&self) -> u64 {
        self.meta.packet
    }
}
