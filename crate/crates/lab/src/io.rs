//! On-disk formats: network and demand JSON, result JSON/CSV, checkpoint directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tsc_core::demand::{DemandDef, DemandProfile};
use tsc_core::net::{NetworkDef, NetworkModel};
use tsc_core::rl::{AgentCheckpoint, AgentConfig};
use tsc_core::sim::MoeLog;

use crate::error::{LabError, LabResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> LabResult<T> {
    let text = fs::read_to_string(path).map_err(|e| LabError::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::read(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> LabResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::write(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LabError::write(path, e))
}

pub fn ensure_dir(dir: &Path) -> LabResult<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::write(dir, e))
}

pub fn load_network(path: &Path) -> LabResult<NetworkModel> {
    let def: NetworkDef = read_json(path)?;
    NetworkModel::from_def(&def).map_err(|e| LabError::read(path, e))
}

pub fn load_demand(path: &Path, net: &NetworkModel) -> LabResult<DemandProfile> {
    let def: DemandDef = read_json(path)?;
    DemandProfile::from_def(net, &def).map_err(|e| LabError::read(path, e))
}

/// Writes rows with a header; every field goes through `Display`, which for
/// `f64` is the shortest string that parses back to the same value.
pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> LabResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::write(path, e))?;
    w.write_record(header).map_err(|e| LabError::write(path, e))?;
    for row in rows {
        w.write_record(row.as_ref()).map_err(|e| LabError::write(path, e))?;
    }
    w.flush().map_err(|e| LabError::write(path, e))
}

/// Header plus records of a CSV file.
pub fn read_csv(path: &Path) -> LabResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::read(path, e))?;
    let header = r.headers().map_err(|e| LabError::read(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| LabError::read(path, e))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub const MOE_HEADER: [&str; 4] = ["kind", "intersection_id", "time_s", "value"];

/// Per-step queue and delay rows of one episode.
pub fn moe_rows(net: &NetworkModel, moe: &MoeLog) -> Vec<[String; 4]> {
    let mut rows = Vec::new();
    for (i, inter) in net.intersections.iter().enumerate() {
        for (k, t) in moe.times.iter().enumerate() {
            rows.push(["queue".into(), inter.id.clone(), t.to_string(), moe.queue[i][k].to_string()]);
        }
        for (k, t) in moe.times.iter().enumerate() {
            rows.push(["delay".into(), inter.id.clone(), t.to_string(), moe.delay[i][k].to_string()]);
        }
    }
    rows
}

pub fn checkpoint_file_name(intersection: &str, version: u64) -> String {
    format!("{intersection}.v{version}.ckpt")
}

/// Writes one file per intersection; returns the paths.
pub fn save_checkpoints(dir: &Path, checkpoints: &[AgentCheckpoint]) -> LabResult<Vec<PathBuf>> {
    ensure_dir(dir)?;
    checkpoints
        .iter()
        .map(|c| {
            let path = dir.join(checkpoint_file_name(&c.intersection, c.agent.policy().version()));
            fs::write(&path, c.encode()).map_err(|e| LabError::write(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Newest checkpoint per intersection of `net`, in network order.
pub fn load_checkpoints(dir: &Path, net: &NetworkModel, cfg: &AgentConfig) -> LabResult<Vec<AgentCheckpoint>> {
    let mut newest: BTreeMap<String, (u64, PathBuf)> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| LabError::read(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| LabError::read(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some((id, version)) = name.strip_suffix(".ckpt").and_then(|s| s.rsplit_once(".v")) else { continue };
        let Ok(version) = version.parse::<u64>() else { continue };
        if newest.get(id).is_none_or(|(v, _)| version > *v) {
            newest.insert(id.to_string(), (version, path.clone()));
        }
    }
    net.intersections
        .iter()
        .map(|inter| {
            let (_, path) = newest
                .get(&inter.id)
                .ok_or_else(|| LabError::Config(format!("{}: no checkpoint for intersection {}", dir.display(), inter.id)))?;
            let buf = fs::read(path).map_err(|e| LabError::read(path, e))?;
            let ckpt = AgentCheckpoint::decode(&buf, cfg).map_err(|e| LabError::read(path, e))?;
            if ckpt.intersection != inter.id {
                return Err(LabError::Config(format!("{} holds intersection {}", path.display(), ckpt.intersection)));
            }
            Ok(ckpt)
        })
        .collect()
}
