use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type TxnId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxnKind {
    ReadReq,
    WriteReq,
    ReadRsp,
    WriteRsp,
}

impl TxnKind {
    pub fn is_request(self) -> bool {
        matches!(self, TxnKind::ReadReq | TxnKind::WriteReq)
    }

    pub fn response(self) -> TxnKind {
        match self {
            TxnKind::ReadReq | TxnKind::ReadRsp => TxnKind::ReadRsp,
            TxnKind::WriteReq | TxnKind::WriteRsp => TxnKind::WriteRsp,
        }
    }
}

/// Payload layout. Packed requests carry up to eight little-endian 64-bit
/// element addresses in one wide beat; the matching response carries the
/// elements back to back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum PayloadShape {
    #[default]
    Linear,
    Packed {
        elem_size: u8,
    },
}

/// A memory read/write burst or its response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub kind: TxnKind,
    pub id: TxnId,
    pub address: u64,
    /// Data bytes moved by the burst (requested bytes for reads).
    pub length: u32,
    pub payload: Vec<u8>,
    pub shape: PayloadShape,
    /// Response status; merged with logical AND when responses are joined.
    pub ok: bool,
}

impl Transaction {
    pub fn read(id: TxnId, address: u64, length: u32) -> Self {
        Transaction {
            kind: TxnKind::ReadReq,
            id,
            address,
            length,
            payload: Vec::new(),
            shape: PayloadShape::Linear,
            ok: true,
        }
    }

    pub fn write(id: TxnId, address: u64, data: Vec<u8>) -> Self {
        Transaction {
            kind: TxnKind::WriteReq,
            id,
            address,
            length: data.len() as u32,
            payload: data,
            shape: PayloadShape::Linear,
            ok: true,
        }
    }

    pub fn read_rsp(id: TxnId, address: u64, data: Vec<u8>) -> Self {
        Transaction {
            kind: TxnKind::ReadRsp,
            id,
            address,
            length: data.len() as u32,
            payload: data,
            shape: PayloadShape::Linear,
            ok: true,
        }
    }

    pub fn write_rsp(id: TxnId, address: u64, ok: bool) -> Self {
        Transaction {
            kind: TxnKind::WriteRsp,
            id,
            address,
            length: 0,
            payload: Vec::new(),
            shape: PayloadShape::Linear,
            ok,
        }
    }

    /// Gather request for `addrs.len()` (≤ 8) elements of `elem_size` bytes.
    pub fn packed_read(id: TxnId, addrs: &[u64], elem_size: u8) -> Self {
        let payload = addrs.iter().flat_map(|a| a.to_le_bytes()).collect();
        Transaction {
            kind: TxnKind::ReadReq,
            id,
            address: addrs.first().copied().unwrap_or(0),
            length: addrs.len() as u32 * elem_size as u32,
            payload,
            shape: PayloadShape::Packed { elem_size },
            ok: true,
        }
    }

    /// Element addresses of a packed request.
    pub fn packed_addresses(&self) -> Vec<u64> {
        self.payload
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(SimError::Rejected(format!(
                "{:?} id={}: {m}",
                self.kind, self.id
            )))
        };
        match (self.kind, self.shape) {
            (TxnKind::ReadReq, PayloadShape::Linear) if !self.payload.is_empty() => {
                bad("read request carries payload")
            }
            (TxnKind::ReadReq, PayloadShape::Packed { elem_size }) => {
                let n = self.payload.len() / 8;
                if !self.payload.len().is_multiple_of(8) || n == 0 || n > 8 {
                    bad("packed request must carry 1..=8 addresses")
                } else if elem_size == 0 || elem_size > 8 || !elem_size.is_power_of_two() {
                    bad("packed element size must be a power of two ≤ 8")
                } else if self.length != n as u32 * elem_size as u32 {
                    bad("packed length mismatch")
                } else {
                    Ok(())
                }
            }
            (TxnKind::WriteReq | TxnKind::ReadRsp, _)
                if self.payload.len() != self.length as usize =>
            {
                bad("payload length differs from burst length")
            }
            (TxnKind::WriteRsp, _) if !self.payload.is_empty() => {
                bad("write response carries payload")
            }
            _ => Ok(()),
        }
    }
}
