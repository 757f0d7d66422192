//! Serialization of transactions into flits and back.

use super::flit::{ChannelKind, ChannelWidths, Flit, PacketMeta, TxnHeader};
use super::transaction::{PayloadShape, Transaction, TxnKind};
use crate::error::{Result, SimError};

/// Channel a transaction travels on. Bulk data uses the wide channel in both
/// directions; read requests, write responses and narrow data use req/rsp.
pub fn channel_for(t: &Transaction, widths: &ChannelWidths) -> ChannelKind {
    match t.kind {
        TxnKind::ReadReq => match t.shape {
            PayloadShape::Packed { .. } => ChannelKind::Wide,
            PayloadShape::Linear => ChannelKind::Req,
        },
        TxnKind::WriteReq if t.payload.len() as u32 <= widths.narrow => ChannelKind::Req,
        TxnKind::WriteReq => ChannelKind::Wide,
        TxnKind::ReadRsp if t.payload.len() as u32 <= widths.narrow => ChannelKind::Rsp,
        TxnKind::ReadRsp => ChannelKind::Wide,
        TxnKind::WriteRsp => ChannelKind::Rsp,
    }
}

/// Channel the response to request `t` will travel on.
pub fn response_channel(t: &Transaction, widths: &ChannelWidths) -> ChannelKind {
    match t.kind {
        TxnKind::ReadReq if t.length <= widths.narrow => ChannelKind::Rsp,
        TxnKind::ReadReq => ChannelKind::Wide,
        _ => ChannelKind::Rsp,
    }
}

pub fn flit_count(payload_len: usize, capacity: u32) -> usize {
    payload_len.div_ceil(capacity as usize).max(1)
}

pub fn packetize(
    t: &Transaction,
    channel: ChannelKind,
    meta: PacketMeta,
    widths: &ChannelWidths,
    max_burst: u32,
) -> Result<Vec<Flit>> {
    t.validate()?;
    if t.length > max_burst {
        return Err(SimError::Rejected(format!(
            "burst of {} B exceeds the {} B maximum",
            t.length, max_burst
        )));
    }
    let cap = widths.capacity(channel);
    let header = TxnHeader {
        kind: t.kind,
        id: t.id,
        address: t.address,
        length: t.length,
        shape: t.shape,
        ok: t.ok,
    };
    let n = flit_count(t.payload.len(), cap);
    let flits = (0..n)
        .map(|i| {
            let lo = (i * cap as usize).min(t.payload.len());
            let hi = ((i + 1) * cap as usize).min(t.payload.len());
            Flit {
                channel,
                meta,
                txn: header,
                head: i == 0,
                tail: i + 1 == n,
                payload: t.payload[lo..hi].to_vec(),
                hops: 0,
            }
        })
        .collect();
    Ok(flits)
}

pub fn depacketize(flits: &[Flit]) -> Result<(PacketMeta, Transaction)> {
    let first = flits
        .first()
        .ok_or_else(|| SimError::Protocol("empty flit sequence".into()))?;
    if !first.head {
        return Err(SimError::Protocol(format!(
            "packet {} does not start with a head flit",
            first.meta.packet
        )));
    }
    let mut payload = Vec::new();
    for (i, f) in flits.iter().enumerate() {
        if f.meta.packet != first.meta.packet {
            return Err(SimError::Protocol(format!(
                "interleaved packets {} and {}",
                first.meta.packet, f.meta.packet
            )));
        }
        if i > 0 && f.head {
            return Err(SimError::Protocol(format!(
                "packet {} has a second head flit",
                f.meta.packet
            )));
        }
        if f.channel != first.channel {
            return Err(SimError::Protocol(format!(
                "packet {} changed channel",
                f.meta.packet
            )));
        }
        let last = i + 1 == flits.len();
        if f.tail != last {
            return Err(SimError::Protocol(format!(
                "packet {}: tail flag on flit {} of {}",
                f.meta.packet,
                i,
                flits.len()
            )));
        }
        payload.extend_from_slice(&f.payload);
    }
    let h = first.txn;
    let t = Transaction {
        kind: h.kind,
        id: h.id,
        address: h.address,
        length: h.length,
        payload,
        shape: h.shape,
        ok: h.ok,
    };
    t.validate()
        .map_err(|e| SimError::Protocol(e.to_string()))?;
    Ok((first.meta, t))
}
