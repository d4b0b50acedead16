//! Result bundle files.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use aemod_core::planner::{PhaseResult, PlanReport};
use anyhow::{Context, Result};
use serde::Serialize;

use crate::render;

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn phase_title(key: &str) -> &'static str {
    match key {
        "baseline" => "Congestion-unaware routing",
        "p1" => "Congestion-aware routing",
        _ => "Re-routing with charging",
    }
}

pub fn flows_csv(report: &PlanReport) -> String {
    let mut s = String::from("phase,edge,from,to,u,r,p,x,ratio\n");
    for key in ["baseline", "p1", "p2"] {
        let Some(p) = report.phase(key) else { continue };
        for (e, info) in report.network.edges.iter().enumerate() {
            let sol = &p.solution;
            let _ = writeln!(
                s,
                "{key},{},{},{},{},{},{},{},{}",
                e + 1,
                info.from,
                info.to,
                sol.u[e],
                sol.r[e],
                sol.p[e],
                sol.x[e],
                p.congestion.ratios[e]
            );
        }
    }
    s
}

#[derive(Serialize)]
struct LoopsFile<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    routing: Option<&'a aemod_core::planner::LoopSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rerouting: Option<&'a aemod_core::planner::LoopSet>,
}

fn latest(report: &PlanReport) -> Option<(&'static str, &PhaseResult)> {
    ["p2", "p1", "baseline"].into_iter().find_map(|k| report.phase(k).map(|p| (k, p)))
}

pub fn write_bundle(dir: &Path, report: &PlanReport) -> Result<()> {
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&dir.join("flows.csv"), flows_csv(report).as_bytes())?;
    if report.loops.is_some() {
        let loops = LoopsFile { routing: report.loops.as_ref(), rerouting: report.verified_loops.as_ref() };
        write_atomic(&dir.join("loops.json"), serde_json::to_string_pretty(&loops)?.as_bytes())?;
    }
    if let Some(s) = &report.schedules {
        write_atomic(&dir.join("schedules.json"), serde_json::to_string_pretty(s)?.as_bytes())?;
    }
    if let Some((key, phase)) = latest(report) {
        let svg = render::svg(&report.network, phase, phase_title(key));
        write_atomic(&dir.join("network.svg"), svg.as_bytes())?;
        write_atomic(&dir.join("network.dot"), render::dot(&report.network, phase).as_bytes())?;
    }
    Ok(())
}
