//! Machine-readable run reports.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::world::{Protocol, RoleSummary, RunOutcome, RunVerdict};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub verdict: RunVerdict,
    pub exit_code: i32,
    pub event_log: Vec<String>,
    pub table_size: usize,
    pub assertions_checked: usize,
    pub suppressed_assertions: usize,
    pub roles: Vec<RoleSummary>,
    pub assumption_failure: Option<String>,
}

impl RunReport {
    pub fn from_outcome(out: &RunOutcome) -> RunReport {
        RunReport {
            protocol: out.protocol,
            seed: out.seed,
            verdict: out.verdict.clone(),
            exit_code: out.verdict.exit_code(),
            event_log: out.cs.log().iter().map(ToString::to_string).collect(),
            table_size: out.cs.table().len(),
            assertions_checked: out.assertions_checked,
            suppressed_assertions: out.suppressed_assertions,
            roles: out.roles.clone(),
            assumption_failure: out.failure.as_ref().map(ToString::to_string),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "protocol: {}", self.protocol);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "verdict: {}", self.verdict);
        let _ = writeln!(
            s,
            "assertions checked: {} (suppressed failures: {})",
            self.assertions_checked, self.suppressed_assertions
        );
        if let Some(a) = &self.assumption_failure {
            let _ = writeln!(s, "assumption failure: {a}");
        }
        let _ = writeln!(s, "table size: {}", self.table_size);
        let _ = writeln!(s, "roles:");
        for r in &self.roles {
            let _ = writeln!(s, "  {}: {}", r.label, r.state);
        }
        let _ = writeln!(s, "events:");
        for e in &self.event_log {
            let _ = writeln!(s, "  {e}");
        }
        f.write_str(&s)
    }
}
