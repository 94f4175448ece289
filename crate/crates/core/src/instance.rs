//! JSON instance files.
//!
//! Field names carry their unit so files stay readable:
//!
//! ```json
//! {
//!   "system": {
//!     "devices": [{"id": "e1", "cores": [{"failure_rate_per_s": 7e-4}],
//!                  "memory_gib": 0.95, "storage_gib": 1.0, "energy_wh": 1.0,
//!                  "capabilities": [0, 1, 5]}],
//!     "channels": [{"from": "e1", "to": "h1", "bandwidth_mbit_s": 11.0,
//!                   "tx_uj_per_bit": 1.0, "rx_uj_per_bit": 0.7,
//!                   "bidirectional": false}]
//!   },
//!   "workflow": {
//!     "tasks": [{"id": 1, "capabilities": [3], "memory_mib": 120.0,
//!                "storage_mib": 80.0, "output_mib": 4.0,
//!                "reliability_threshold": 0.9999,
//!                "exec_time_ms": {"e3": 357.1}, "power_w": {"e3": 4.5}}],
//!     "arcs": [[1, 2]],
//!     "deadline_s": null,
//!     "deadline_factor": 1.5
//!   },
//!   "weights": {"latency": 0.5, "energy": 0.5, "reliability": 0.0}
//! }
//! ```
//!
//! `bidirectional` channels expand into two directed channels with the same
//! parameters. Without `deadline_s` the deadline is `deadline_factor` times
//! the critical path of the extended allocation graph. Missing `weights`
//! default to equal weights.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub system: SystemFile,
    pub workflow: WorkflowFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<ObjectiveWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub devices: Vec<DeviceFile>,
    pub channels: Vec<ChannelFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFile {
    pub id: DeviceId,
    pub cores: Vec<CoreFile>,
    pub memory_gib: f64,
    pub storage_gib: f64,
    pub energy_wh: f64,
    pub capabilities: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreFile {
    pub failure_rate_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub from: DeviceId,
    pub to: DeviceId,
    pub bandwidth_mbit_s: f64,
    pub tx_uj_per_bit: f64,
    pub rx_uj_per_bit: f64,
    #[serde(default)]
    pub bidirectional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowFile {
    pub tasks: Vec<TaskFile>,
    pub arcs: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
    #[serde(default = "default_factor")]
    pub deadline_factor: f64,
}

fn default_factor() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub id: u32,
    pub capabilities: Vec<u32>,
    pub memory_mib: f64,
    pub storage_mib: f64,
    pub output_mib: f64,
    pub reliability_threshold: f64,
    pub exec_time_ms: BTreeMap<DeviceId, f64>,
    pub power_w: BTreeMap<DeviceId, f64>,
}

/// A validated instance in canonical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub system: SystemModel,
    pub workflow: TaskGraph,
    pub weights: ObjectiveWeights,
    pub deadline_factor: f64,
}

impl SystemFile {
    pub fn to_model(&self) -> SystemModel {
        let devices = self
            .devices
            .iter()
            .map(|d| Device {
                id: d.id,
                cores: d
                    .cores
                    .iter()
                    .enumerate()
                    .map(|(q, c)| Core {
                        id: CoreId {
                            device: d.id,
                            core: q as u32 + 1,
                        },
                        failure_rate: c.failure_rate_per_s,
                    })
                    .collect(),
                memory_budget: d.memory_gib * BYTES_PER_GIB,
                storage_budget: d.storage_gib * BYTES_PER_GIB,
                energy_budget: d.energy_wh * JOULES_PER_WH,
                capabilities: d.capabilities.iter().copied().collect::<BTreeSet<_>>(),
            })
            .collect();
        let mut channels = Vec::new();
        for c in &self.channels {
            let mk = |from, to| Channel {
                from,
                to,
                bandwidth: c.bandwidth_mbit_s * BITS_PER_MBIT,
                tx_energy: c.tx_uj_per_bit * JOULES_PER_UJ,
                rx_energy: c.rx_uj_per_bit * JOULES_PER_UJ,
            };
            channels.push(mk(c.from, c.to));
            if c.bidirectional {
                channels.push(mk(c.to, c.from));
            }
        }
        SystemModel { devices, channels }
    }
}

impl WorkflowFile {
    pub fn to_model(&self) -> TaskGraph {
        let tasks = self
            .tasks
            .iter()
            .map(|t| Task {
                id: t.id,
                memory: t.memory_mib * BYTES_PER_MIB,
                storage: t.storage_mib * BYTES_PER_MIB,
                output_data: t.output_mib * BITS_PER_MIB,
                capabilities: t.capabilities.clone(),
                reliability_threshold: t.reliability_threshold,
                exec_time: t.exec_time_ms.iter().map(|(&d, &ms)| (d, ms * 1e-3)).collect(),
                exec_power: t.power_w.clone(),
            })
            .collect();
        TaskGraph {
            tasks,
            arcs: self.arcs.iter().map(|a| (a[0], a[1])).collect(),
            deadline: self.deadline_s,
        }
    }
}

impl InstanceFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Converts to canonical units and validates the result.
    pub fn to_instance(&self) -> Result<Instance, Error> {
        let system = self.system.to_model();
        let workflow = self.workflow.to_model();
        let mut violations = system.validate();
        violations.extend(workflow.validate());
        if violations.is_empty() {
            violations.extend(workflow.validate_against(&system));
        }
        if !(self.workflow.deadline_factor > 0.0) {
            violations.push(Violation {
                code: "nonpositive-deadline-factor".into(),
                detail: self.workflow.deadline_factor.to_string(),
            });
        }
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let weights = self.weights.unwrap_or_else(ObjectiveWeights::equal);
        weights.check()?;
        Ok(Instance {
            system,
            workflow,
            weights,
            deadline_factor: self.workflow.deadline_factor,
        })
    }
}

impl Instance {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        InstanceFile::load(path)?.to_instance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "system": {
        "devices": [
          {"id": "e1", "cores": [{"failure_rate_per_s": 7e-4}], "memory_gib": 0.95,
           "storage_gib": 1.0, "energy_wh": 1.0, "capabilities": [0, 1]},
          {"id": "h1", "cores": [{"failure_rate_per_s": 5e-4}, {"failure_rate_per_s": 5e-4}],
           "memory_gib": 3.0, "storage_gib": 5.0, "energy_wh": 2.0, "capabilities": [0]}
        ],
        "channels": [
          {"from": "e1", "to": "h1", "bandwidth_mbit_s": 8.0, "tx_uj_per_bit": 1.0,
           "rx_uj_per_bit": 0.7, "bidirectional": true}
        ]
      },
      "workflow": {
        "tasks": [
          {"id": 1, "capabilities": [1], "memory_mib": 1.0, "storage_mib": 2.0, "output_mib": 1.0,
           "reliability_threshold": 0.999, "exec_time_ms": {"e1": 250.0}, "power_w": {"e1": 2.0}},
          {"id": 2, "capabilities": [0], "memory_mib": 1.0, "storage_mib": 2.0, "output_mib": 0.5,
           "reliability_threshold": 0.999, "exec_time_ms": {"e1": 100.0, "h1": 20.0},
           "power_w": {"e1": 2.0, "h1": 5.0}}
        ],
        "arcs": [[1, 2]]
      }
    }"#;

    #[test]
    fn units_convert_at_ingestion() {
        let file: InstanceFile = serde_json::from_str(SAMPLE).unwrap();
        let inst = file.to_instance().unwrap();
        let e1 = &inst.system.devices[0];
        assert_eq!(e1.energy_budget, 3600.0);
        assert_eq!(e1.memory_budget, 0.95 * 1_073_741_824.0);
        assert_eq!(inst.system.channels.len(), 2);
        assert_eq!(inst.system.channels[0].bandwidth, 8e6);
        assert_eq!(inst.workflow.tasks[0].output_data, 8_388_608.0);
        assert_eq!(inst.workflow.tasks[0].memory, 1_048_576.0);
        assert!((inst.workflow.tasks[0].exec_time[&"e1".parse().unwrap()] - 0.25).abs() < 1e-15);
        assert_eq!(inst.deadline_factor, 1.5);
        assert_eq!(inst.weights, ObjectiveWeights::equal());
    }

    #[test]
    fn json_round_trip() {
        let file: InstanceFile = serde_json::from_str(SAMPLE).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file, back);
    }

    #[test]
    fn invalid_instance_is_reported() {
        let mut file: InstanceFile = serde_json::from_str(SAMPLE).unwrap();
        file.system.devices[0].capabilities = vec![1];
        match file.to_instance() {
            Err(Error::Invalid(v)) => assert!(v.iter().any(|x| x.code == "missing-basic-capability")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
