use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::event::{EventMetrics, EventPath};
use super::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub budget_j: f64,
    pub events: usize,
    pub mean_energy_j: Option<f64>,
    pub mean_latency_s: Option<f64>,
    pub assisted: usize,
    pub bypass_scheduled: usize,
    pub bypass_loss: usize,
    pub failed_power: usize,
    pub integrity_failures: usize,
    pub retransmissions: u64,
    /// Events per uplink payload size in bytes; bypassed rounds count as 0.
    pub payload_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub events: Vec<EventMetrics>,
    pub summary: Summary,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = values.len();
    (n > 0).then(|| values.sum::<f64>() / n as f64)
}

impl SimulationReport {
    pub fn new(scenario: &ScenarioConfig, events: Vec<EventMetrics>) -> Self {
        let count = |p: EventPath| events.iter().filter(|e| e.path == p).count();
        let mut payload_histogram = BTreeMap::new();
        for e in &events {
            *payload_histogram.entry(e.payload_bytes).or_insert(0) += 1;
        }
        let summary = Summary {
            scenario: scenario.name.clone(),
            budget_j: scenario.budget_j(),
            events: events.len(),
            mean_energy_j: mean(events.iter().map(|e| e.energy_total_j)),
            mean_latency_s: mean(events.iter().map(|e| e.end_to_end_latency_s)),
            assisted: count(EventPath::Assisted),
            bypass_scheduled: count(EventPath::BypassScheduled),
            bypass_loss: count(EventPath::BypassLoss),
            failed_power: count(EventPath::FailedPower),
            integrity_failures: events.iter().filter(|e| e.integrity_failure).count(),
            retransmissions: events.iter().map(|e| e.retransmissions as u64).sum(),
            payload_histogram,
        };
        Self { events, summary }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.events {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.summary).map_err(|e| SimError::Io(e.to_string()))
    }

    /// Writes `report.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        let r = SimulationReport::new(&ScenarioConfig::scenario1(), vec![]);
        assert_eq!(r.summary.events, 0);
        assert_eq!(r.summary.mean_energy_j, None);
        assert!(r.summary.payload_histogram.is_empty());
        assert_eq!(r.to_csv().unwrap(), "");
        assert!(r.summary_json().unwrap().contains("\"mean_energy_j\": null"));
    }
}
