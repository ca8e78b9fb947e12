//! Physical cost model and speedup-score derivation.
//!
//! A node's speedup score is the end-to-end time saved by keeping its
//! output in memory: each child's read moves from disk to memory, and the
//! node's own materialization overlaps downstream compute instead of
//! blocking it. Scores come from the workload file when present; this
//! module derives the missing ones from bandwidth/latency parameters so
//! the optimizer stays testable against a closed form.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{DepGraph, NodeId};

/// Disk/memory bandwidths in bytes per second plus a per-access latency
/// charged on every read and write, regardless of medium. Memory
/// bandwidths may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub disk_read_bw: f64,
    pub disk_write_bw: f64,
    #[serde(serialize_with = "ser_bw", deserialize_with = "de_bw")]
    pub mem_read_bw: f64,
    #[serde(serialize_with = "ser_bw", deserialize_with = "de_bw")]
    pub mem_write_bw: f64,
    #[serde(default)]
    pub per_access_latency: f64,
}

fn ser_bw<S: Serializer>(bw: &f64, ser: S) -> Result<S::Ok, S::Error> {
    if bw.is_infinite() {
        ser.serialize_str("inf")
    } else {
        ser.serialize_f64(*bw)
    }
}

fn de_bw<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(de)? {
        Raw::Num(x) => Ok(x),
        Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Text(s) => Err(D::Error::custom(format!("expected a number or \"inf\", got `{s}`"))),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostModelError {
    #[error("{0} must be positive")]
    NonPositiveBandwidth(&'static str),
    #[error("{mem} ({mem_value}) must be at least {disk} ({disk_value})")]
    MemorySlowerThanDisk { mem: &'static str, mem_value: f64, disk: &'static str, disk_value: f64 },
    #[error("per_access_latency must be nonnegative")]
    NegativeLatency,
}

impl Default for CostModel {
    /// Commodity defaults: 500 MB/s reads, 350 MB/s writes, memory treated
    /// as free.
    fn default() -> Self {
        CostModel {
            disk_read_bw: 500e6,
            disk_write_bw: 350e6,
            mem_read_bw: f64::INFINITY,
            mem_write_bw: f64::INFINITY,
            per_access_latency: 0.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), CostModelError> {
        let positive = [
            (self.disk_read_bw, "disk_read_bw"),
            (self.disk_write_bw, "disk_write_bw"),
            (self.mem_read_bw, "mem_read_bw"),
            (self.mem_write_bw, "mem_write_bw"),
        ];
        for (bw, name) in positive {
            if !(bw > 0.0) {
                return Err(CostModelError::NonPositiveBandwidth(name));
            }
        }
        if self.mem_read_bw < self.disk_read_bw {
            return Err(CostModelError::MemorySlowerThanDisk {
                mem: "mem_read_bw",
                mem_value: self.mem_read_bw,
                disk: "disk_read_bw",
                disk_value: self.disk_read_bw,
            });
        }
        if self.mem_write_bw < self.disk_write_bw {
            return Err(CostModelError::MemorySlowerThanDisk {
                mem: "mem_write_bw",
                mem_value: self.mem_write_bw,
                disk: "disk_write_bw",
                disk_value: self.disk_write_bw,
            });
        }
        if self.per_access_latency < 0.0 {
            return Err(CostModelError::NegativeLatency);
        }
        Ok(())
    }

    pub fn disk_read(&self, bytes: u64) -> f64 {
        access_time(bytes, self.disk_read_bw, self.per_access_latency)
    }

    pub fn disk_write(&self, bytes: u64) -> f64 {
        access_time(bytes, self.disk_write_bw, self.per_access_latency)
    }

    pub fn mem_read(&self, bytes: u64) -> f64 {
        access_time(bytes, self.mem_read_bw, self.per_access_latency)
    }

    pub fn mem_write(&self, bytes: u64) -> f64 {
        access_time(bytes, self.mem_write_bw, self.per_access_latency)
    }
}

/// Seconds to move `bytes` at `bandwidth` bytes/sec plus a fixed latency.
/// An infinite bandwidth costs only the latency.
pub fn access_time(bytes: u64, bandwidth: f64, latency: f64) -> f64 {
    latency + bytes as f64 / bandwidth
}

/// Derives the speedup score of every node from the cost model: one
/// read-saving term per child plus one write-overlap term.
pub fn compute_speedup_scores(g: &DepGraph, cm: &CostModel) -> Vec<f64> {
    g.node_ids().map(|v| node_score(g, cm, v)).collect()
}

fn node_score(g: &DepGraph, cm: &CostModel, v: NodeId) -> f64 {
    let s = g.size(v);
    let read_saving = cm.disk_read(s) - cm.mem_read(s);
    let write_saving = cm.disk_write(s) - cm.mem_write(s);
    g.children(v).len() as f64 * read_saving + write_saving
}

/// Per-node scores for optimization: the workload-supplied score when
/// present, otherwise the cost-model derivation.
pub fn effective_scores(g: &DepGraph, cm: &CostModel) -> Vec<f64> {
    g.node_ids()
        .map(|v| g.meta(v).speedup_score.unwrap_or_else(|| node_score(g, cm, v)))
        .collect()
}
