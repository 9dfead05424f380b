//! Case report assembly and rendering.
//!
//! The JSON rendering is canonical: struct fields serialize in declaration
//! order, maps are ordered, timestamps are ISO-8601 UTC with milliseconds,
//! and numbers use the shortest round-trip decimal form. Two runs over the
//! same inputs with a pinned `generated_at` produce byte-identical output.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{
    AppMetadata, BloodPressureRecord, CaseFile, CaseWarning, EcgRecording, EvidenceItem,
    PatientProfile, Platform, ProfileFragment, QuarantinedTimestamp, ReferralOrder,
    TableCensusEntry, WeightRecord,
};
use crate::timeline::{self, ConsistencyFinding, TimelineEvent};

/// JSON Schema for the report format; ships with the tool and is versioned
/// together with [`CaseReport::SCHEMA_VERSION`].
pub const REPORT_SCHEMA_JSON: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSection {
    pub platform: Platform,
    pub app_root: String,
    pub profile: Option<PatientProfile>,
    pub profile_fragments: Vec<ProfileFragment>,
    pub app_metadata: AppMetadata,
    pub ecgs: Vec<EcgRecording>,
    pub bps: Vec<BloodPressureRecord>,
    pub weights: Vec<WeightRecord>,
    pub orders: Vec<ReferralOrder>,
    pub table_census: Vec<TableCensusEntry>,
    pub warnings: Vec<CaseWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub case_id: String,
    pub generated_at: String,
    pub platforms: Vec<Platform>,
    pub cases: Vec<CaseSection>,
    pub timeline: Vec<TimelineEvent>,
    pub quarantined: Vec<QuarantinedTimestamp>,
    pub findings: Vec<ConsistencyFinding>,
    pub evidence: Vec<EvidenceItem>,
}

impl CaseReport {
    pub const SCHEMA_VERSION: u32 = 1;

    /// Merge extracted cases into one report: build the timeline, run the
    /// consistency analysis, and collect the evidence manifest.
    pub fn assemble(
        cases: Vec<CaseFile>,
        case_id: impl Into<String>,
        generated_at: DateTime<Utc>,
    ) -> CaseReport {
        let (timeline_events, quarantined) = timeline::build_timeline(&cases);
        let findings = timeline::check_consistency(&cases);

        let mut evidence: Vec<EvidenceItem> =
            cases.iter().flat_map(|c| c.items.iter().cloned()).collect();
        evidence.sort_by(|a, b| {
            (a.platform, a.dump_relative_path.as_str())
                .cmp(&(b.platform, b.dump_relative_path.as_str()))
        });

        let platforms: Vec<Platform> = cases.iter().map(|c| c.platform).collect();
        let sections = cases
            .into_iter()
            .map(|case| CaseSection {
                platform: case.platform,
                app_root: case.app_root,
                profile: case.profile,
                profile_fragments: case.profile_fragments,
                app_metadata: case.app_metadata,
                ecgs: case.ecgs,
                bps: case.bps,
                weights: case.weights,
                orders: case.orders,
                table_census: case.table_census,
                warnings: case.warnings,
            })
            .collect();

        CaseReport {
            schema_version: Self::SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            case_id: case_id.into(),
            generated_at: generated_at.to_rfc3339_opts(SecondsFormat::Millis, true),
            platforms,
            cases: sections,
            timeline: timeline_events,
            quarantined,
            findings,
            evidence,
        }
    }

    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<CaseReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Timeline as RFC-4180 CSV, one row per event.
    pub fn timeline_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "utc",
                "local",
                "kind",
                "subject",
                "payload",
                "provenance_item",
                "provenance_field",
            ])
            .expect("csv header");
        for event in &self.timeline {
            writer
                .write_record([
                    event
                        .utc
                        .to_rfc3339_opts(SecondsFormat::Millis, true)
                        .as_str(),
                    event.local.as_deref().unwrap_or(""),
                    event.kind.as_str(),
                    event.subject.as_deref().unwrap_or(""),
                    event.payload.as_str(),
                    event.provenance.item.as_str(),
                    event.provenance.field.as_str(),
                ])
                .expect("csv row");
        }
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
    }

    /// Evidence manifest: one `digest  size  path` line per item.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for item in &self.evidence {
            out.push_str(&format!(
                "{}  {}  {}\n",
                item.digest, item.byte_size, item.dump_relative_path
            ));
        }
        out
    }

    /// Human-oriented plain-text summary.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "case report {} (schema v{})",
            self.case_id, self.schema_version
        );
        let _ = writeln!(out, "generated at {}", self.generated_at);
        for section in &self.cases {
            let _ = writeln!(out);
            let _ = writeln!(out, "== {} ==", section.platform.as_str());
            let _ = writeln!(out, "app root: {}", section.app_root);
            match &section.profile {
                Some(p) => {
                    let _ = writeln!(
                        out,
                        "patient: {} {} <{}> dob {}",
                        p.first_name,
                        p.last_name,
                        p.email,
                        p.dob.to_utc_string()
                    );
                }
                None => {
                    let _ = writeln!(out, "patient: profile not recovered");
                }
            }
            let _ = writeln!(
                out,
                "records: {} ecg, {} blood pressure, {} weight, {} referral orders",
                section.ecgs.len(),
                section.bps.len(),
                section.weights.len(),
                section.orders.len()
            );
            let _ = writeln!(
                out,
                "tables: {} ({} documented)",
                section.table_census.len(),
                section.table_census.iter().filter(|t| t.documented).count()
            );
            if !section.warnings.is_empty() {
                let _ = writeln!(out, "warnings:");
                for w in &section.warnings {
                    let _ = writeln!(
                        out,
                        "  [{}] {}{}",
                        w.code.as_str(),
                        w.message,
                        w.path
                            .as_deref()
                            .map(|p| format!(" ({p})"))
                            .unwrap_or_default()
                    );
                }
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "== timeline ({} events) ==", self.timeline.len());
        for event in &self.timeline {
            let _ = writeln!(
                out,
                "{}  {:<16} {}{}",
                event.utc.to_rfc3339_opts(SecondsFormat::Millis, true),
                event.kind.as_str(),
                event.payload,
                event
                    .local
                    .as_deref()
                    .map(|l| format!("  (local {l})"))
                    .unwrap_or_default()
            );
        }
        if !self.quarantined.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "== quarantined timestamps ({}) ==",
                self.quarantined.len()
            );
            for q in &self.quarantined {
                let _ = writeln!(out, "{}  raw `{}`: {}", q.source_field, q.raw_text, q.error);
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "== findings ({}) ==", self.findings.len());
        for finding in &self.findings {
            let _ = writeln!(
                out,
                "[{}] {}: {}",
                match finding.severity {
                    timeline::Severity::Info => "info",
                    timeline::Severity::Anomaly => "ANOMALY",
                },
                finding.code,
                finding.description
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "== evidence ({} items) ==", self.evidence.len());
        for item in &self.evidence {
            let _ = writeln!(
                out,
                "{}  {}  {}",
                item.digest, item.byte_size, item.dump_relative_path
            );
        }
        out
    }
}
