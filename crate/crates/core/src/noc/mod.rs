//! Interconnect vocabulary shared by routers, crossbars and network interfaces.

mod coord;
mod flit;
mod packet;
mod routing;
mod transaction;

pub use coord::{Coord, Direction, Rect};
pub use flit::{
    ChannelKind, ChannelWidths, CollectiveId, CollectiveTag, EndpointId, Flit, PacketMeta,
    RouteTarget, SourceRoute, TrafficClass, TxnHeader,
};
pub use packet::{channel_for, depacketize, flit_count, packetize, response_channel};
pub use routing::{
    route_dimension_ordered, route_table, xy_directions, xy_path, RouteTable, RoutingAlgo,
};
pub use transaction::{PayloadShape, Transaction, TxnId, TxnKind};
