//! Cluster DMA engine. Jobs are split into bursts that are handed to the
//! NI in order, burst `i` of a job using backend id `i % k`. Up to
//! `jobs_in_flight` jobs overlap, so the next tile streams while the
//! previous one drains.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::DmaConfig;
use crate::error::{Result, SimError};
use crate::netif::{Accept, Delivery, NetIf};
use crate::noc::{
    ChannelWidths, CollectiveId, EndpointId, Rect, RouteTarget, SourceRoute, TrafficClass,
    Transaction, TxnId, TxnKind,
};

use super::instream::{words_to_bytes, InstreamOp, InstreamUnit};
use super::memory::Memory;
use super::packing::pack_factor;

/// One side of a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Place {
    Local(u64),
    Remote(EndpointId, u64),
    /// Every cluster in the rectangle, at the same address.
    Multicast {
        rect: Rect,
        addr: u64,
    },
}

impl Place {
    pub fn addr(&self) -> u64 {
        match *self {
            Place::Local(a) | Place::Remote(_, a) | Place::Multicast { addr: a, .. } => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gather {
    /// Element addresses on the source endpoint.
    pub addrs: Vec<u64>,
    pub packed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaJob {
    pub src: Place,
    pub dst: Place,
    pub elem_size: u8,
    pub rows: u32,
    pub row_bytes: u32,
    pub src_stride: u64,
    pub dst_stride: u64,
    pub gather: Option<Gather>,
    pub op: Option<InstreamOp>,
    pub tag: u64,
}

impl DmaJob {
    pub fn copy(src: Place, dst: Place, bytes: u32) -> Self {
        DmaJob {
            src,
            dst,
            elem_size: 8,
            rows: 1,
            row_bytes: bytes,
            src_stride: bytes as u64,
            dst_stride: bytes as u64,
            gather: None,
            op: None,
            tag: 0,
        }
    }

    pub fn two_d(
        src: Place,
        dst: Place,
        rows: u32,
        row_bytes: u32,
        src_stride: u64,
        dst_stride: u64,
    ) -> Self {
        DmaJob {
            rows,
            row_bytes,
            src_stride,
            dst_stride,
            ..DmaJob::copy(src, dst, row_bytes)
        }
    }

    pub fn gather(src: EndpointId, addrs: Vec<u64>, dst: u64, elem_size: u8, packed: bool) -> Self {
        DmaJob {
            elem_size,
            gather: Some(Gather { addrs, packed }),
            ..DmaJob::copy(Place::Remote(src, 0), Place::Local(dst), 0)
        }
    }

    pub fn with_op(mut self, op: InstreamOp) -> Self {
        self.op = Some(op);
        self
    }

    pub fn with_tag(mut self, tag: u64) -> Self {
        self.tag = tag;
        self
    }

    /// Data bytes the job moves.
    pub fn bytes(&self) -> u64 {
        match &self.gather {
            Some(g) => g.addrs.len() as u64 * self.elem_size as u64,
            None => self.rows as u64 * self.row_bytes as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reject = |m: &str| Err(SimError::JobRejected(m.to_string()));
        if self.elem_size == 0 || self.elem_size > 8 || !self.elem_size.is_power_of_two() {
            return reject("element size must be a power of two ≤ 8");
        }
        if matches!(self.src, Place::Multicast { .. }) {
            return reject("multicast source");
        }
        if let Some(g) = &self.gather {
            if !matches!(self.src, Place::Remote(..)) || !matches!(self.dst, Place::Local(_)) {
                return reject("gathers read a remote endpoint into local memory");
            }
            if g.addrs.iter().any(|a| a % self.elem_size as u64 != 0) {
                return reject("gather index not aligned to its element");
            }
        } else if self.rows == 0 || self.row_bytes == 0 {
            return reject("empty transfer shape");
        }
        if matches!(self.src, Place::Remote(..)) && !matches!(self.dst, Place::Local(_)) {
            return reject("remote-to-remote transfers are not supported");
        }
        if let Some(op) = self.op {
            if self.elem_size != 8 {
                return reject("in-stream operations need 8 B elements");
            }
            let misaligned = |a: u64| !a.is_multiple_of(8);
            let strides =
                self.rows > 1 && (misaligned(self.src_stride) || misaligned(self.dst_stride));
            if self.gather.is_none()
                && (!self.row_bytes.is_multiple_of(8)
                    || misaligned(self.src.addr())
                    || misaligned(self.dst.addr())
                    || strides)
            {
                return reject("stream not aligned to its element boundary");
            }
            if matches!(op, InstreamOp::Reduce(_)) && !matches!(self.dst, Place::Local(_)) {
                return reject("reductions deliver their scalar to local memory");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobRecord {
    pub tag: u64,
    pub submitted: u64,
    pub first_issue: Option<u64>,
    pub last_issue: Option<u64>,
    pub completed: u64,
    pub bytes: u64,
    pub bursts: u64,
    pub result: Option<u64>,
    pub ok: bool,
}

#[derive(Debug, Clone)]
enum Burst {
    Read {
        src: EndpointId,
        addr: u64,
        len: u32,
        local: u64,
    },
    Gather {
        src: EndpointId,
        first: usize,
        count: usize,
        local: u64,
    },
    Write {
        local: u64,
        dst: Place,
        len: u32,
    },
}

#[derive(Debug, Clone)]
struct ActiveJob {
    job: DmaJob,
    bursts: Vec<Burst>,
    next: usize,
    outstanding: usize,
    unit: Option<InstreamUnit>,
    record: JobRecord,
    done_at: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    seq: u64,
    local: u64,
}

#[derive(Debug)]
pub struct DmaEngine {
    cfg: DmaConfig,
    widths: ChannelWidths,
    ep: EndpointId,
    queue: VecDeque<(u64, ActiveJob)>,
    job_seq: u64,
    collective_seq: u64,
    reads: BTreeMap<TxnId, VecDeque<InFlight>>,
    writes: BTreeMap<TxnId, VecDeque<InFlight>>,
    pub completed: Vec<JobRecord>,
}

impl DmaEngine {
    pub fn new(ep: EndpointId, cfg: DmaConfig, widths: ChannelWidths) -> Self {
        DmaEngine {
            cfg,
            widths,
            ep,
            queue: VecDeque::new(),
            job_seq: 0,
            collective_seq: 0,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
            completed: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn pending_jobs(&self) -> usize {
        self.queue.len()
    }

    /// Splits a job into bursts of at most `max_burst` bytes.
    fn plan(&self, job: &DmaJob) -> Vec<Burst> {
        let max = self.cfg.max_burst;
        if let Some(g) = &job.gather {
            let Place::Remote(src, _) = job.src else {
                unreachable!()
            };
            let per = if g.packed {
                pack_factor(self.widths.wide).max(1)
            } else {
                1
            };
            let base = job.dst.addr();
            return (0..g.addrs.len())
                .step_by(per)
                .map(|first| Burst::Gather {
                    src,
                    first,
                    count: per.min(g.addrs.len() - first),
                    local: base + first as u64 * job.elem_size as u64,
                })
                .collect();
        }
        // A multi-flit fork can hold one branch while waiting on another,
        // which XY order does not rule out; single-flit packets never do.
        let max = match job.dst {
            Place::Multicast { .. } => max.min(self.widths.wide),
            _ => max,
        };
        let mut out = Vec::new();
        for r in 0..job.rows as u64 {
            let s = job.src.addr() + r * job.src_stride;
            let d = job.dst.addr() + r * job.dst_stride;
            let mut off = 0u32;
            while off < job.row_bytes {
                let len = max.min(job.row_bytes - off);
                out.push(match (job.src, job.dst) {
                    (Place::Remote(src, _), _) => Burst::Read {
                        src,
                        addr: s + off as u64,
                        len,
                        local: d + off as u64,
                    },
                    (_, Place::Remote(ep, _)) => Burst::Write {
                        local: s + off as u64,
                        dst: Place::Remote(ep, d + off as u64),
                        len,
                    },
                    (_, Place::Multicast { rect, .. }) => Burst::Write {
                        local: s + off as u64,
                        dst: Place::Multicast {
                            rect,
                            addr: d + off as u64,
                        },
                        len,
                    },
                    (Place::Local(_), Place::Local(_)) => {
                        unreachable!("local copies have no bursts")
                    }
                    (Place::Multicast { .. }, _) => unreachable!("rejected by validate"),
                });
                off += len;
            }
        }
        out
    }

    pub fn submit(&mut self, job: DmaJob, now: u64) -> Result<()> {
        job.validate()?;
        let local_copy = matches!((job.src, job.dst), (Place::Local(_), Place::Local(_)));
        let bursts = if local_copy {
            Vec::new()
        } else {
            self.plan(&job)
        };
        let record = JobRecord {
            tag: job.tag,
            submitted: now,
            first_issue: None,
            last_issue: None,
            completed: 0,
            bytes: job.bytes(),
            bursts: bursts.len() as u64,
            result: None,
            ok: true,
        };
        self.job_seq += 1;
        self.queue.push_back((
            self.job_seq,
            ActiveJob {
                unit: job.op.map(InstreamUnit::new),
                job,
                bursts,
                next: 0,
                outstanding: 0,
                record,
                done_at: None,
            },
        ));
        Ok(())
    }

    fn fill(&self, job: &DmaJob) -> u64 {
        if job.op.is_some() {
            self.cfg.instream_fill as u64
        } else {
            0
        }
    }

    fn id_of(&self, burst: usize) -> TxnId {
        (burst % self.cfg.backends as usize) as TxnId
    }

    /// Issues at most one burst and retires finished jobs.
    pub fn tick(
        &mut self,
        now: u64,
        mem: &mut Memory,
        ni: &mut NetIf,
        route: &dyn Fn(EndpointId) -> Option<SourceRoute>,
    ) -> Result<()> {
        let window = (self.cfg.jobs_in_flight as usize).min(self.queue.len());
        for j in 0..window {
            let fill = self.fill(&self.queue[j].1.job);
            let (_, a) = &mut self.queue[j];
            if a.bursts.is_empty() && a.done_at.is_none() {
                // local copy: one wide beat per cycle through the engine
                let beats = a.job.bytes().div_ceil(self.widths.wide as u64).max(1);
                let mut data = mem.read(a.job.src.addr(), a.job.bytes() as usize);
                if let Some(u) = a.unit.as_mut() {
                    u.feed_bytes(&mut data)?;
                }
                if a.unit.as_ref().and_then(|u| u.result()).is_none() {
                    mem.write(a.job.dst.addr(), &data);
                }
                a.done_at = Some(now + beats + fill);
            }
        }
        if let Some(j) = (0..window).find(|&j| self.queue[j].1.next < self.queue[j].1.bursts.len())
        {
            self.issue(j, now, mem, ni, route)?;
        }
        let mut i = 0;
        while i < self.queue.len() {
            match self.queue[i].1.done_at {
                Some(t) if t <= now => {
                    let (_, mut a) = self.queue.remove(i).unwrap();
                    a.record.completed = t;
                    if let Some(u) = &a.unit {
                        a.record.result = u.result();
                        if let Some(r) = a.record.result {
                            mem.write(a.job.dst.addr(), &r.to_le_bytes());
                        }
                    }
                    self.completed.push(a.record);
                }
                _ => i += 1,
            }
        }
        Ok(())
    }

    fn issue(
        &mut self,
        j: usize,
        now: u64,
        mem: &mut Memory,
        ni: &mut NetIf,
        route: &dyn Fn(EndpointId) -> Option<SourceRoute>,
    ) -> Result<()> {
        let id = self.id_of(self.queue[j].1.next);
        let (seq, a) = &self.queue[j];
        let seq = *seq;
        let burst = a.bursts[a.next].clone();
        let (target, txn, local) = match burst {
            Burst::Read {
                src,
                addr,
                len,
                local,
            } => (
                RouteTarget::Unicast(src),
                Transaction::read(id, addr, len),
                local,
            ),
            Burst::Gather {
                src,
                first,
                count,
                local,
            } => {
                let g = a.job.gather.as_ref().unwrap();
                let addrs = &g.addrs[first..first + count];
                let t = if g.packed {
                    Transaction::packed_read(id, addrs, a.job.elem_size)
                } else {
                    Transaction::read(id, addrs[0], a.job.elem_size as u32)
                };
                (RouteTarget::Unicast(src), t, local)
            }
            Burst::Write { local, dst, len } => {
                let mut data = mem.read(local, len as usize);
                if let Some(op) = a.job.op {
                    let mut u = InstreamUnit::new(op);
                    u.feed_bytes(&mut data)?;
                }
                let target = match dst {
                    Place::Remote(ep, _) => RouteTarget::Unicast(ep),
                    Place::Multicast { rect, .. } => RouteTarget::Multicast {
                        rect,
                        id: CollectiveId(((self.ep.0 as u64) << 32) | (self.collective_seq + 1)),
                        join: true,
                    },
                    Place::Local(_) => unreachable!(),
                };
                (target, Transaction::write(id, dst.addr(), data), local)
            }
        };
        let sr = match target {
            RouteTarget::Unicast(ep) => route(ep),
            _ => None,
        };
        let kind = txn.kind;
        if let Accept::Accepted { .. } = ni.send_request(now, target, txn, TrafficClass::Dma, sr)? {
            if matches!(target, RouteTarget::Multicast { .. }) {
                self.collective_seq += 1;
            }
            let fifo = match kind {
                TxnKind::ReadReq => &mut self.reads,
                _ => &mut self.writes,
            };
            fifo.entry(id)
                .or_default()
                .push_back(InFlight { seq, local });
            let a = &mut self.queue[j].1;
            a.next += 1;
            a.outstanding += 1;
            a.record.first_issue.get_or_insert(now);
            a.record.last_issue = Some(now);
        }
        Ok(())
    }

    /// Consumes a response addressed to the engine.
    pub fn on_response(&mut self, d: &Delivery, mem: &mut Memory, now: u64) -> Result<()> {
        let fifo = match d.txn.kind {
            TxnKind::ReadRsp => &mut self.reads,
            TxnKind::WriteRsp => &mut self.writes,
            _ => return Err(SimError::Protocol("DMA engine received a request".into())),
        };
        let f = fifo
            .get_mut(&d.txn.id)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| {
                SimError::Protocol(format!(
                    "{}: DMA response id={} not expected",
                    self.ep, d.txn.id
                ))
            })?;
        let fill = self.cfg.instream_fill as u64;
        let (_, a) = self
            .queue
            .iter_mut()
            .find(|(s, _)| *s == f.seq)
            .ok_or_else(|| SimError::Protocol("response for a retired DMA job".into()))?;
        a.record.ok &= d.txn.ok;
        if d.txn.kind == TxnKind::ReadRsp {
            let mut data = d.txn.payload.clone();
            let reduce = a.unit.as_ref().is_some_and(|u| u.result().is_some());
            if let Some(u) = a.unit.as_mut() {
                u.feed_bytes(&mut data)?;
            }
            if !reduce {
                mem.write(f.local, &data);
            }
        }
        a.outstanding -= 1;
        if a.outstanding == 0 && a.next == a.bursts.len() {
            a.done_at = Some(now + if a.job.op.is_some() { fill } else { 0 });
        }
        Ok(())
    }
}

/// Reference result of a reduce job over `data`.
pub fn reduce_oracle(op: InstreamOp, data: &[u8]) -> Option<u64> {
    let mut u = InstreamUnit::new(op);
    let mut d = data.to_vec();
    u.feed_bytes(&mut d).ok()?;
    u.result()
}

/// Reference output of an element-wise job over `data`.
pub fn map_oracle(op: InstreamOp, data: &[u8]) -> Vec<u8> {
    let words: Vec<u64> = data
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .map(|w| match op {
            InstreamOp::AddConst(c) => w.wrapping_add(c),
            InstreamOp::MulConst(c) => w.wrapping_mul(c),
            InstreamOp::Reduce(_) => w,
        })
        .collect();
    words_to_bytes(&words)
}
