//! Counters gathered during a run and their CSV/JSON serialization.
//!
//! CSV rows follow `kind,entity,metric,value`. Row order is fixed by the
//! report layout, so equal reports serialize to identical bytes.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::endpoints::JobRecord;
use crate::noc::{ChannelKind, TrafficClass, TxnKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PacketRecord {
    pub packet: u64,
    pub class: TrafficClass,
    pub src: u32,
    pub dst: u32,
    pub channel: ChannelKind,
    pub kind: TxnKind,
    pub inject: u64,
    pub deliver: u64,
    pub hops: u16,
    pub bytes: u32,
}

impl PacketRecord {
    pub fn latency(&self) -> u64 {
        self.deliver - self.inject
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: impl IntoIterator<Item = u64>) -> Option<LatencyStats> {
        let mut count = 0u64;
        let mut sum = 0u128;
        let mut min = u64::MAX;
        let mut max = 0;
        for s in samples {
            count += 1;
            sum += s as u128;
            min = min.min(s);
            max = max.max(s);
        }
        (count > 0).then(|| LatencyStats {
            count,
            min,
            max,
            mean: sum as f64 / count as f64,
        })
    }
}

/// Energy of moving `bytes` across `hops` router-to-router links.
pub fn hop_energy(bytes: u64, hops: u64, pj_per_byte_hop: f64) -> f64 {
    (bytes * hops) as f64 * pj_per_byte_hop
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub name: String,
    pub channel: ChannelKind,
    /// Router-to-router (or crossbar-to-crossbar) link, as opposed to an
    /// endpoint ejection port.
    pub internal: bool,
    pub flits: u64,
    pub bytes: u64,
    pub utilization: f64,
    pub interleavings: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct D2dReport {
    pub name: String,
    pub channel: ChannelKind,
    pub flits: u64,
    /// Payload capacity moved per cycle while the link was streaming.
    pub bytes_per_cycle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointReport {
    pub name: String,
    pub rx_bytes: u64,
    pub tx_bytes: u64,
    /// Read data delivered on the wide channel.
    pub read_bytes: u64,
    /// Bytes the memory behind the endpoint served usefully / accessed.
    pub useful_bytes: u64,
    pub access_bytes: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub cycles: u64,
    pub first_injection: Option<u64>,
    pub last_delivery: Option<u64>,
    pub flits_injected: u64,
    pub flits_ejected: u64,
    pub link_traversals: u64,
    pub link_bytes: u64,
    pub energy_pj: f64,
    pub interleavings: u64,
    pub latency: BTreeMap<String, LatencyStats>,
    pub links: Vec<LinkReport>,
    pub d2d: Vec<D2dReport>,
    pub endpoints: Vec<EndpointReport>,
    pub jobs: BTreeMap<String, Vec<JobRecord>>,
    /// Per-packet rows for probe traffic only.
    pub probes: Vec<PacketRecord>,
    #[serde(skip)]
    pub packets: Vec<PacketRecord>,
}

impl MetricsReport {
    /// Cycles from the first NI acceptance to the last delivery, inclusive.
    pub fn window(&self) -> u64 {
        match (self.first_injection, self.last_delivery) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }

    pub fn latency_of(&self, class: TrafficClass) -> Option<&LatencyStats> {
        self.latency.get(class.name())
    }

    /// Router-to-router flit traversals on one channel.
    pub fn traversals(&self, ch: ChannelKind) -> u64 {
        self.links
            .iter()
            .filter(|l| l.internal && l.channel == ch)
            .map(|l| l.flits)
            .sum()
    }

    pub fn endpoint(&self, name: &str) -> Option<&EndpointReport> {
        self.endpoints.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self, extra: &BTreeMap<String, f64>) -> String {
        let mut rows = CsvRows::new();
        let mut row = |k: &str, e: &str, m: &str, v: String| rows.row(k, e, m, &v);
        row("summary", "run", "cycles", self.cycles.to_string());
        row("summary", "run", "window", self.window().to_string());
        row(
            "summary",
            "run",
            "flits_injected",
            self.flits_injected.to_string(),
        );
        row(
            "summary",
            "run",
            "flits_ejected",
            self.flits_ejected.to_string(),
        );
        row(
            "summary",
            "run",
            "link_traversals",
            self.link_traversals.to_string(),
        );
        row("summary", "run", "link_bytes", self.link_bytes.to_string());
        row("summary", "run", "energy_pj", self.energy_pj.to_string());
        row(
            "summary",
            "run",
            "interleavings",
            self.interleavings.to_string(),
        );
        for (k, v) in extra {
            row("scenario", "run", k, v.to_string());
        }
        for (class, l) in &self.latency {
            row("latency", class, "count", l.count.to_string());
            row("latency", class, "min", l.min.to_string());
            row("latency", class, "avg", l.mean.to_string());
            row("latency", class, "max", l.max.to_string());
        }
        for e in &self.endpoints {
            if e.rx_bytes + e.tx_bytes + e.access_bytes == 0 {
                continue;
            }
            row("endpoint", &e.name, "rx_bytes", e.rx_bytes.to_string());
            row("endpoint", &e.name, "tx_bytes", e.tx_bytes.to_string());
            row("endpoint", &e.name, "read_bytes", e.read_bytes.to_string());
            row(
                "endpoint",
                &e.name,
                "useful_bytes",
                e.useful_bytes.to_string(),
            );
            row(
                "endpoint",
                &e.name,
                "access_bytes",
                e.access_bytes.to_string(),
            );
            row(
                "endpoint",
                &e.name,
                "utilization",
                e.utilization.to_string(),
            );
        }
        for l in &self.links {
            if l.flits == 0 {
                continue;
            }
            let name = format!("{}.{}", l.name, l.channel.name());
            row("link", &name, "flits", l.flits.to_string());
            row("link", &name, "bytes", l.bytes.to_string());
            row("link", &name, "utilization", l.utilization.to_string());
        }
        for d in &self.d2d {
            let name = format!("{}.{}", d.name, d.channel.name());
            row("d2d", &name, "flits", d.flits.to_string());
            row(
                "d2d",
                &name,
                "bytes_per_cycle",
                d.bytes_per_cycle.to_string(),
            );
        }
        for p in &self.probes {
            let e = format!("{}", p.packet);
            row("packet", &e, "src", p.src.to_string());
            row("packet", &e, "dst", p.dst.to_string());
            row("packet", &e, "hops", p.hops.to_string());
            row("packet", &e, "latency", p.latency().to_string());
        }
        rows.finish()
    }
}

/// `kind,entity,metric,value` rows; entity names such as `cluster(0,1)`
/// get quoted.
pub struct CsvRows(csv::Writer<Vec<u8>>);

impl CsvRows {
    pub fn new() -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "entity", "metric", "value"])
            .expect("in-memory write");
        CsvRows(w)
    }

    pub fn row(&mut self, kind: &str, entity: &str, metric: &str, value: &str) {
        self.0
            .write_record([kind, entity, metric, value])
            .expect("in-memory write");
    }

    pub fn finish(self) -> String {
        let bytes = self.0.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("fields are utf-8")
    }
}

impl Default for CsvRows {
    fn default() -> Self {
        Self::new()
    }
}
