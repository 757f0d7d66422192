use crate::error::{Result, SimError};
use crate::noc::{PayloadShape, Transaction, TxnId, TxnKind};

/// Narrow requests carried by one wide beat: one 64-bit address each.
pub const fn pack_factor(wide_bytes: u32) -> usize {
    let n = (wide_bytes / 8) as usize;
    if n > 8 {
        8
    } else {
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NarrowRequest {
    pub addr: u64,
    pub size: u8,
}

/// Packs element addresses into gather requests of up to `pack_factor`
/// entries. Every request but possibly the last is full.
pub fn pack_indices(
    addrs: &[u64],
    elem_size: u8,
    id: TxnId,
    wide_bytes: u32,
) -> Result<Vec<Transaction>> {
    if elem_size == 0 || elem_size > 8 || !elem_size.is_power_of_two() {
        return Err(SimError::JobRejected(format!(
            "element size {elem_size} cannot be packed"
        )));
    }
    let per = pack_factor(wide_bytes);
    if per == 0 {
        return Err(SimError::JobRejected(
            "wide channel too narrow for packing".into(),
        ));
    }
    Ok(addrs
        .chunks(per)
        .map(|c| Transaction::packed_read(id, c, elem_size))
        .collect())
}

pub fn unpack(t: &Transaction) -> Vec<NarrowRequest> {
    match (t.kind, t.shape) {
        (TxnKind::ReadReq, PayloadShape::Packed { elem_size }) => t
            .packed_addresses()
            .into_iter()
            .map(|addr| NarrowRequest {
                addr,
                size: elem_size,
            })
            .collect(),
        _ => Vec::new(),
    }
}
