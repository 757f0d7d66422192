//! In-stream vector unit of the cluster DMA engine. Operates on 64-bit
//! integer elements with wrap-around arithmetic; `Min`/`Max` compare as
//! unsigned.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReduceKind {
    Sum,
    Min,
    Max,
    And,
    Or,
    Xor,
}

impl ReduceKind {
    pub const ALL: [ReduceKind; 6] = [
        ReduceKind::Sum,
        ReduceKind::Min,
        ReduceKind::Max,
        ReduceKind::And,
        ReduceKind::Or,
        ReduceKind::Xor,
    ];

    pub fn identity(self) -> u64 {
        match self {
            ReduceKind::Sum | ReduceKind::Max | ReduceKind::Or | ReduceKind::Xor => 0,
            ReduceKind::Min | ReduceKind::And => u64::MAX,
        }
    }

    pub fn combine(self, a: u64, b: u64) -> u64 {
        match self {
            ReduceKind::Sum => a.wrapping_add(b),
            ReduceKind::Min => a.min(b),
            ReduceKind::Max => a.max(b),
            ReduceKind::And => a & b,
            ReduceKind::Or => a | b,
            ReduceKind::Xor => a ^ b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstreamOp {
    AddConst(u64),
    MulConst(u64),
    Reduce(ReduceKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstreamOutput {
    Stream(Vec<u64>),
    Scalar(u64),
}

pub fn instream_apply(op: InstreamOp, elems: &[u64]) -> InstreamOutput {
    let mut unit = InstreamUnit::new(op);
    let mut v = elems.to_vec();
    unit.feed(&mut v);
    match op {
        InstreamOp::Reduce(_) => InstreamOutput::Scalar(unit.result().unwrap()),
        _ => InstreamOutput::Stream(v),
    }
}

pub fn bytes_to_words(bytes: &[u8]) -> Result<Vec<u64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(SimError::JobRejected(format!(
            "stream of {} B is not aligned to 8 B elements",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn words_to_bytes(words: &[u64]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Streaming form: element-wise ops transform chunks in place, reductions
/// fold them into an accumulator.
#[derive(Debug, Clone)]
pub struct InstreamUnit {
    op: InstreamOp,
    acc: u64,
}

impl InstreamUnit {
    pub fn new(op: InstreamOp) -> Self {
        let acc = match op {
            InstreamOp::Reduce(k) => k.identity(),
            _ => 0,
        };
        InstreamUnit { op, acc }
    }

    pub fn op(&self) -> InstreamOp {
        self.op
    }

    pub fn feed(&mut self, elems: &mut [u64]) {
        match self.op {
            InstreamOp::AddConst(c) => elems.iter_mut().for_each(|e| *e = e.wrapping_add(c)),
            InstreamOp::MulConst(c) => elems.iter_mut().for_each(|e| *e = e.wrapping_mul(c)),
            InstreamOp::Reduce(k) => {
                self.acc = elems.iter().fold(self.acc, |a, &e| k.combine(a, e));
            }
        }
    }

    pub fn feed_bytes(&mut self, bytes: &mut [u8]) -> Result<()> {
        let mut words = bytes_to_words(bytes)?;
        self.feed(&mut words);
        if !matches!(self.op, InstreamOp::Reduce(_)) {
            bytes.copy_from_slice(&words_to_bytes(&words));
        }
        Ok(())
    }

    pub fn result(&self) -> Option<u64> {
        matches!(self.op, InstreamOp::Reduce(_)).then_some(self.acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            instream_apply(InstreamOp::AddConst(5), &[1, 2, 3]),
            InstreamOutput::Stream(vec![6, 7, 8])
        );
        assert_eq!(
            instream_apply(InstreamOp::Reduce(ReduceKind::Sum), &[1, 2, 3, 4]),
            InstreamOutput::Scalar(10)
        );
        assert_eq!(
            instream_apply(InstreamOp::MulConst(0), &[9, u64::MAX, 3]),
            InstreamOutput::Stream(vec![0, 0, 0])
        );
    }

    #[test]
    fn wraps_around() {
        assert_eq!(
            instream_apply(InstreamOp::AddConst(2), &[u64::MAX]),
            InstreamOutput::Stream(vec![1])
        );
        assert_eq!(
            instream_apply(InstreamOp::Reduce(ReduceKind::Sum), &[u64::MAX, 2]),
            InstreamOutput::Scalar(1)
        );
    }

    #[test]
    fn misaligned_bytes_rejected() {
        let mut u = InstreamUnit::new(InstreamOp::AddConst(1));
        assert!(u.feed_bytes(&mut [0u8; 12]).is_err());
    }

    #[test]
    fn chunked_reduce_matches_whole() {
        let v: Vec<u64> = (0..100).map(|i| i * 7919 + 3).collect();
        for k in ReduceKind::ALL {
            let mut u = InstreamUnit::new(InstreamOp::Reduce(k));
            for chunk in v.chunks(9) {
                u.feed(&mut chunk.to_vec());
            }
            assert_eq!(
                InstreamOutput::Scalar(u.result().unwrap()),
                instream_apply(InstreamOp::Reduce(k), &v)
            );
        }
    }
}
