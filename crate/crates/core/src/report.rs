//! Structured run, verification and analysis reports with text rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crdt::Value;
use crate::model::{NodeId, ObjectPath};
use crate::sim::{detect_data_islands, IslandReport, Scenario};
use crate::sync::MetadataMode;
use crate::trace::Trace;
use crate::verify::{
    build_execution, check_atomicity, check_cc, check_convergence, check_hierarchy, check_interest_config,
    check_intersection_atomicity, check_intersection_cc, replay, VerifyError, Violation, ViolationKind,
};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 3;

/// Checks run by `verify` unless a subset is requested.
pub const DEFAULT_CHECKS: [ViolationKind; 3] = [
    ViolationKind::IntersectionAtomicity,
    ViolationKind::IntersectionCc,
    ViolationKind::Convergence,
];

/// Checks that need a trace (the rest work on scenarios).
pub const TRACE_CHECKS: [ViolationKind; 5] = [
    ViolationKind::IntersectionAtomicity,
    ViolationKind::IntersectionCc,
    ViolationKind::Atomicity,
    ViolationKind::Cc,
    ViolationKind::Convergence,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub trace_digest: String,
    pub mode: MetadataMode,
    pub results: BTreeMap<ViolationKind, Vec<Violation>>,
    pub summary: BTreeMap<ViolationKind, usize>,
    pub total: usize,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.total == 0 {
            EXIT_CLEAN
        } else {
            EXIT_VIOLATIONS
        }
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} ({}), trace {}", self.scenario, self.mode, &self.trace_digest[..12]);
        for (kind, violations) in &self.results {
            let _ = writeln!(s, "{kind}: {}", if violations.is_empty() { "ok".to_string() } else { format!("{} violation(s)", violations.len()) });
            for v in violations {
                let _ = writeln!(s, "  {v}");
            }
        }
        let _ = writeln!(s, "total: {}", self.total);
        s
    }
}

/// Runs the requested trace checks. Static checks are rejected here.
pub fn verify_trace(trace: &Trace, checks: &[ViolationKind]) -> Result<VerifyReport, VerifyError> {
    let execution = build_execution(trace)?;
    let interests = trace.interests();
    let mut results = BTreeMap::new();
    let wanted: BTreeSet<ViolationKind> = checks.iter().copied().collect();
    for kind in wanted {
        let found = match kind {
            ViolationKind::IntersectionAtomicity => check_intersection_atomicity(&execution, &interests),
            ViolationKind::IntersectionCc => check_intersection_cc(&execution, &interests),
            ViolationKind::Atomicity => check_atomicity(&execution),
            ViolationKind::Cc => check_cc(&execution),
            ViolationKind::Convergence => check_convergence(trace, &interests)?,
            ViolationKind::Hierarchy | ViolationKind::InterestConfig => continue,
        };
        results.insert(kind, found);
    }
    let summary: BTreeMap<ViolationKind, usize> = results.iter().map(|(k, v)| (*k, v.len())).collect();
    Ok(VerifyReport {
        scenario: trace.header.scenario.clone(),
        trace_digest: trace.digest(),
        mode: trace.header.mode,
        total: summary.values().sum(),
        summary,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub interest: Vec<String>,
    pub ops_applied: usize,
    pub state_hash: String,
    pub values: BTreeMap<ObjectPath, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointIslands {
    pub label: String,
    pub t: u64,
    pub islands: IslandReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_digest: String,
    pub trace_digest: String,
    pub seed: u64,
    pub mode: MetadataMode,
    pub nodes: Vec<NodeSummary>,
    pub checks: BTreeMap<ViolationKind, usize>,
    pub checkpoints: Vec<CheckpointIslands>,
}

/// Summarizes a finished trace. Derived only from the trace, so the same
/// trace always gives the same report.
pub fn run_report(trace: &Trace) -> Result<RunReport, VerifyError> {
    let replayed = replay(trace)?;
    let nodes = replayed
        .last
        .iter()
        .map(|(id, r)| NodeSummary {
            id: id.clone(),
            interest: r.interest.effective().to_strings(),
            ops_applied: r.applied.len(),
            state_hash: r.store.digest(&crate::model::Region::all()),
            values: r.store.objects().iter().map(|(p, s)| (p.clone(), s.value())).collect(),
        })
        .collect();
    let checkpoints = replayed
        .checkpoints
        .iter()
        .map(|cp| CheckpointIslands {
            label: cp.label.clone(),
            t: cp.t,
            islands: detect_data_islands(
                &cp.topology,
                &cp.replicas.iter().map(|(n, r)| (n.clone(), r.interest.clone())).collect(),
            ),
        })
        .collect();
    let verified = verify_trace(trace, &DEFAULT_CHECKS)?;
    Ok(RunReport {
        scenario: trace.header.scenario.clone(),
        scenario_digest: trace.header.digest.clone(),
        trace_digest: trace.digest(),
        seed: trace.header.seed,
        mode: trace.header.mode,
        nodes,
        checks: verified.summary,
        checkpoints,
    })
}

impl RunReport {
    /// One row per object path, one column per node; `-` where a node holds
    /// nothing for that path.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {} seed {} mode {} trace {}",
            self.scenario,
            self.seed,
            self.mode,
            &self.trace_digest[..12]
        );
        let paths: BTreeSet<&ObjectPath> = self.nodes.iter().flat_map(|n| n.values.keys()).collect();
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut head = vec!["path".to_string()];
        head.extend(self.nodes.iter().map(|n| n.id.to_string()));
        rows.push(head);
        for p in paths {
            let mut row = vec![p.to_string()];
            row.extend(
                self.nodes
                    .iter()
                    .map(|n| n.values.get(p).map_or("-".to_string(), |v| v.to_string())),
            );
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in &rows {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", cells.join("  ").trim_end());
        }
        for n in &self.nodes {
            let _ = writeln!(s, "{}: {} ops applied, interest {}", n.id, n.ops_applied, n.interest.join(","));
        }
        let checks: Vec<String> = self.checks.iter().map(|(k, n)| format!("{k}={n}")).collect();
        let _ = writeln!(s, "checks: {}", checks.join(" "));
        for cp in &self.checkpoints {
            let _ = writeln!(s, "checkpoint {}: {} island finding(s)", cp.label, cp.islands.findings.len());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    pub hierarchy: bool,
    /// `None` when the scenario declares no footprints.
    pub interest_config: Option<bool>,
    pub metadata_everywhere: bool,
}

impl Conditions {
    pub fn satisfied(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.hierarchy {
            out.push("hierarchy");
        }
        if self.interest_config == Some(true) {
            out.push("interest-config");
        }
        if self.metadata_everywhere {
            out.push("metadata-everywhere");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub at: Option<String>,
    pub islands: IslandReport,
    pub hierarchy: Vec<Violation>,
    pub interest_config: Option<Vec<Violation>>,
    pub conditions: Conditions,
    /// Whether some condition guarantees atomicity and causal+ consistency system-wide.
    pub guaranteed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no checkpoint labelled {0:?}")]
pub struct UnknownCheckpoint(pub String);

/// Static analysis over the union topology, or the topology at a checkpoint.
pub fn analyze_scenario(s: &Scenario, at: Option<&str>) -> Result<AnalysisReport, UnknownCheckpoint> {
    let (topo, interests) = match at {
        None => (s.union_topology(), s.interests()),
        Some(label) => s.state_at(label).ok_or_else(|| UnknownCheckpoint(label.to_string()))?,
    };
    let islands = detect_data_islands(&topo, &interests);
    let hierarchy = check_hierarchy(&topo, &interests).err().unwrap_or_default();
    let interest_config = s
        .footprints
        .as_ref()
        .map(|f| check_interest_config(f, &interests).err().unwrap_or_default());
    let conditions = Conditions {
        hierarchy: hierarchy.is_empty(),
        interest_config: interest_config.as_ref().map(Vec::is_empty),
        metadata_everywhere: s.mode == MetadataMode::MetadataEverywhere,
    };
    Ok(AnalysisReport {
        scenario: s.name.clone(),
        at: at.map(str::to_string),
        islands,
        guaranteed: !conditions.satisfied().is_empty(),
        hierarchy,
        interest_config,
        conditions,
    })
}

impl AnalysisReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {}{}",
            self.scenario,
            self.at.as_ref().map(|l| format!(" at {l}")).unwrap_or_default()
        );
        let _ = writeln!(s, "islands: {} finding(s)", self.islands.findings.len());
        for f in &self.islands.findings {
            let names = |c: &[NodeId]| c.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(s, "  {{{}}} <-> {{{}}} share {}", names(&f.component_a), names(&f.component_b), f.shared);
        }
        if !self.islands.singletons.is_empty() {
            let names: Vec<String> = self.islands.singletons.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "  isolated nodes (not islands): {}", names.join(","));
        }
        let _ = writeln!(s, "hierarchy: {}", if self.hierarchy.is_empty() { "OK" } else { "violated" });
        for v in &self.hierarchy {
            let _ = writeln!(s, "  {v}");
        }
        match &self.interest_config {
            None => {
                let _ = writeln!(s, "interest-config: not evaluated (no footprints declared)");
            }
            Some(v) => {
                let _ = writeln!(s, "interest-config: {}", if v.is_empty() { "OK" } else { "violated" });
                for v in v {
                    let _ = writeln!(s, "  {v}");
                }
            }
        }
        let _ = writeln!(
            s,
            "metadata-everywhere: {}",
            if self.conditions.metadata_everywhere { "on" } else { "off" }
        );
        let satisfied = self.conditions.satisfied();
        if satisfied.is_empty() {
            let _ = writeln!(s, "no condition satisfied; system-wide TCC+ not guaranteed");
        } else {
            for c in satisfied {
                let _ = writeln!(s, "{c}: OK => TCC+ upheld");
            }
        }
        s
    }
}
