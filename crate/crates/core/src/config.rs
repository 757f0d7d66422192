//! Simulation parameters. Every field has a default; `validate` enforces
//! the structural invariants before a simulator is built.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::noc::{ChannelWidths, RoutingAlgo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    #[default]
    Mesh,
    Xbar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub cols: u16,
    /// Rows per chiplet. HBM channels sit on the west edge, one per row.
    pub rows: u16,
    /// Chiplets stacked in y through die-to-die links on their row boundary.
    pub chiplets: u16,
}

impl Default for MeshConfig {
    fn default() -> Self {
        // 8 rows of 4 clusters: eight west-edge HBM links, four south-edge D2D links.
        MeshConfig {
            cols: 4,
            rows: 8,
            chiplets: 1,
        }
    }
}

impl MeshConfig {
    pub fn total_rows(&self) -> u16 {
        self.rows * self.chiplets
    }

    pub fn clusters(&self) -> usize {
        self.cols as usize * self.total_rows() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XbarConfig {
    pub groups: u16,
    pub clusters_per_group: u16,
    pub hbm_channels: u16,
    /// Cycles spent in each crossbar stage.
    pub stage_latency: u32,
}

impl Default for XbarConfig {
    fn default() -> Self {
        XbarConfig {
            groups: 6,
            clusters_per_group: 4,
            hbm_channels: 8,
            stage_latency: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub router: u32,
    pub link: u32,
    pub ni: u32,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            router: 1,
            link: 1,
            ni: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub wide_bytes: u32,
    pub narrow_bytes: u32,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            wide_bytes: 64,
            narrow_bytes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    /// Settled input-buffer entries per port and channel, on top of the
    /// link/router pipeline registers.
    pub fifo_depth: u32,
    pub join_table_capacity: u32,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            fifo_depth: 2,
            join_table_capacity: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NiConfig {
    /// Outstanding requests per id space (reads and writes separately).
    pub outstanding: u32,
    pub max_burst_bytes: u32,
    /// Request packets allowed to wait for injection per channel.
    pub injection_queue: u32,
}

impl Default for NiConfig {
    fn default() -> Self {
        NiConfig {
            outstanding: 16,
            max_burst_bytes: 4096,
            injection_queue: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmaConfig {
    pub backends: u32,
    pub max_burst: u32,
    pub jobs_in_flight: u32,
    /// Pipeline fill of the in-stream unit.
    pub instream_fill: u32,
    /// Core cycles per element for the software reduction baseline.
    pub core_cycles_per_element: u32,
}

impl Default for DmaConfig {
    fn default() -> Self {
        DmaConfig {
            backends: 4,
            max_burst: 512,
            jobs_in_flight: 2,
            instream_fill: 4,
            core_cycles_per_element: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbmConfig {
    pub peak_bytes_per_cycle: u32,
    pub latency: u32,
    pub granularity: u32,
    pub coalescer_window: u32,
    pub coalescer_age: u32,
}

impl Default for HbmConfig {
    fn default() -> Self {
        HbmConfig {
            peak_bytes_per_cycle: 64,
            latency: 40,
            granularity: 32,
            coalescer_window: 16,
            coalescer_age: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct D2dConfig {
    pub wide_serialization: u32,
    pub narrow_serialization: u32,
    pub crossing_latency: u32,
}

impl Default for D2dConfig {
    fn default() -> Self {
        D2dConfig {
            wide_serialization: 2,
            narrow_serialization: 2,
            crossing_latency: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub pj_per_byte_hop: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            pj_per_byte_hop: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpmConfig {
    pub latency: u32,
}

impl Default for SpmConfig {
    fn default() -> Self {
        SpmConfig { latency: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub topology: TopologyKind,
    pub routing: RoutingAlgo,
    pub seed: u64,
    pub max_cycles: u64,
    pub mesh: MeshConfig,
    pub xbar: XbarConfig,
    pub latency: LatencyConfig,
    pub channels: ChannelConfig,
    pub router: RouterConfig,
    pub ni: NiConfig,
    pub dma: DmaConfig,
    pub hbm: HbmConfig,
    pub d2d: D2dConfig,
    pub energy: EnergyConfig,
    pub spm: SpmConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: TopologyKind::Mesh,
            routing: RoutingAlgo::Xy,
            seed: 42,
            max_cycles: 5_000_000,
            mesh: MeshConfig::default(),
            xbar: XbarConfig::default(),
            latency: LatencyConfig::default(),
            channels: ChannelConfig::default(),
            router: RouterConfig::default(),
            ni: NiConfig::default(),
            dma: DmaConfig::default(),
            hbm: HbmConfig::default(),
            d2d: D2dConfig::default(),
            energy: EnergyConfig::default(),
            spm: SpmConfig::default(),
        }
    }
}

fn positive(key: &str, v: u64) -> Result<(), ConfigError> {
    if v == 0 {
        Err(ConfigError::semantic(key, "must be at least 1"))
    } else {
        Ok(())
    }
}

fn pow2(key: &str, v: u32) -> Result<(), ConfigError> {
    if !v.is_power_of_two() {
        Err(ConfigError::semantic(
            key,
            format!("{v} is not a power of two"),
        ))
    } else {
        Ok(())
    }
}

impl SimConfig {
    pub fn widths(&self) -> ChannelWidths {
        ChannelWidths {
            narrow: self.channels.narrow_bytes,
            wide: self.channels.wide_bytes,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("mesh.cols", self.mesh.cols as u64)?;
        positive("mesh.rows", self.mesh.rows as u64)?;
        positive("mesh.chiplets", self.mesh.chiplets as u64)?;
        if self.mesh.cols as u32 * self.mesh.total_rows() as u32 > 4096 {
            return Err(ConfigError::semantic("mesh", "more than 4096 routers"));
        }
        positive("xbar.groups", self.xbar.groups as u64)?;
        positive(
            "xbar.clusters_per_group",
            self.xbar.clusters_per_group as u64,
        )?;
        positive("xbar.hbm_channels", self.xbar.hbm_channels as u64)?;
        positive("xbar.stage_latency", self.xbar.stage_latency as u64)?;
        if self.xbar.groups as u32 + self.xbar.hbm_channels as u32 + 1 > 64 {
            return Err(ConfigError::semantic(
                "xbar",
                "HBM crossbar radix exceeds 64",
            ));
        }
        if self.xbar.clusters_per_group + 3 > 64 {
            return Err(ConfigError::semantic(
                "xbar.clusters_per_group",
                "group crossbar radix exceeds 64",
            ));
        }
        positive("latency.router", self.latency.router as u64)?;
        positive("latency.link", self.latency.link as u64)?;
        positive("latency.ni", self.latency.ni as u64)?;
        pow2("channels.wide_bytes", self.channels.wide_bytes)?;
        pow2("channels.narrow_bytes", self.channels.narrow_bytes)?;
        if self.channels.narrow_bytes < 8 {
            return Err(ConfigError::semantic(
                "channels.narrow_bytes",
                "must hold one 64-bit word",
            ));
        }
        if self.channels.wide_bytes < self.channels.narrow_bytes {
            return Err(ConfigError::semantic(
                "channels.wide_bytes",
                "narrower than the narrow channel",
            ));
        }
        positive("router.fifo_depth", self.router.fifo_depth as u64)?;
        positive("ni.outstanding", self.ni.outstanding as u64)?;
        positive("ni.max_burst_bytes", self.ni.max_burst_bytes as u64)?;
        positive("ni.injection_queue", self.ni.injection_queue as u64)?;
        positive("dma.backends", self.dma.backends as u64)?;
        positive("dma.max_burst", self.dma.max_burst as u64)?;
        positive("dma.jobs_in_flight", self.dma.jobs_in_flight as u64)?;
        positive(
            "dma.core_cycles_per_element",
            self.dma.core_cycles_per_element as u64,
        )?;
        if self.dma.max_burst > self.ni.max_burst_bytes {
            return Err(ConfigError::semantic(
                "dma.max_burst",
                "exceeds ni.max_burst_bytes",
            ));
        }
        if self.dma.backends > 256 {
            return Err(ConfigError::semantic(
                "dma.backends",
                "at most 256 backends",
            ));
        }
        positive(
            "hbm.peak_bytes_per_cycle",
            self.hbm.peak_bytes_per_cycle as u64,
        )?;
        positive("hbm.latency", self.hbm.latency as u64)?;
        pow2("hbm.granularity", self.hbm.granularity)?;
        if self.hbm.granularity > 64 {
            return Err(ConfigError::semantic("hbm.granularity", "at most 64 B"));
        }
        positive("hbm.coalescer_window", self.hbm.coalescer_window as u64)?;
        positive("d2d.wide_serialization", self.d2d.wide_serialization as u64)?;
        positive(
            "d2d.narrow_serialization",
            self.d2d.narrow_serialization as u64,
        )?;
        positive("d2d.crossing_latency", self.d2d.crossing_latency as u64)?;
        positive("spm.latency", self.spm.latency as u64)?;
        if !(self.energy.pj_per_byte_hop.is_finite() && self.energy.pj_per_byte_hop >= 0.0) {
            return Err(ConfigError::semantic(
                "energy.pj_per_byte_hop",
                "must be finite and non-negative",
            ));
        }
        positive("max_cycles", self.max_cycles)?;
        Ok(())
    }
}
