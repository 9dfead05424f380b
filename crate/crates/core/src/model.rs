//! Platform-neutral domain types shared by the extractors, the timeline
//! engine and the reporters.
//!
//! Everything here is immutable once extraction finishes and serializes into
//! the canonical JSON report. Suspicious values are preserved and flagged via
//! [`CaseWarning`] records — a forensic tool must never sanitize its input.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::timestamp::ForensicTimestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Android,
    Ios,
}

impl Platform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::Android => "android",
            Platform::Ios => "ios",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceCategory {
    AtcEcg,
    AudioNote,
    Database,
    PrefsXml,
    Plist,
    PdfReferral,
    Unknown,
}

/// One recovered file: where it sat in the dump, its size and SHA-256 digest.
/// The digest doubles as the tamper check for `verify`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub dump_relative_path: String,
    pub byte_size: u64,
    pub digest: String,
    pub category: EvidenceCategory,
    pub platform: Platform,
}

impl EvidenceItem {
    /// Hash `dump_root/rel_path` and build the item. The stored path always
    /// uses forward slashes and must not escape the dump root.
    pub fn from_file(
        dump_root: &Path,
        rel_path: &Path,
        category: EvidenceCategory,
        platform: Platform,
    ) -> std::io::Result<EvidenceItem> {
        let normalized = normalize_rel_path(rel_path).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("path escapes dump root: {}", rel_path.display()),
            )
        })?;
        let (digest, byte_size) = sha256_file(&dump_root.join(rel_path))?;
        Ok(EvidenceItem {
            dump_relative_path: normalized,
            byte_size,
            digest,
            category,
            platform,
        })
    }
}

/// Forward slashes, no `..` components.
pub fn normalize_rel_path(rel: &Path) -> Option<String> {
    let mut parts = Vec::new();
    for comp in rel.components() {
        match comp {
            Component::Normal(p) => parts.push(p.to_string_lossy().into_owned()),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(parts.join("/"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Streaming SHA-256 of a file; returns (hex digest, byte size).
pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

/// Documented 0/1 code: female (0) or male (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn from_code(code: i64) -> Option<Gender> {
        match code {
            0 => Some(Gender::Female),
            1 => Some(Gender::Male),
            _ => None,
        }
    }

    pub fn code(&self) -> i64 {
        match self {
            Gender::Female => 0,
            Gender::Male => 1,
        }
    }
}

/// Documented 0/1 code: non-smoker (0) or smoker (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoker {
    No,
    Yes,
}

impl Smoker {
    pub fn from_code(code: i64) -> Option<Smoker> {
        match code {
            0 => Some(Smoker::No),
            1 => Some(Smoker::Yes),
            _ => None,
        }
    }

    pub fn code(&self) -> i64 {
        match self {
            Smoker::No => 0,
            Smoker::Yes => 1,
        }
    }
}

/// Position of the Kardia device during a reading: correct side up (0) or
/// upside down (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceOrientation {
    CorrectSideUp,
    UpsideDown,
}

impl DeviceOrientation {
    pub fn from_code(code: i64) -> Option<DeviceOrientation> {
        match code {
            0 => Some(DeviceOrientation::CorrectSideUp),
            1 => Some(DeviceOrientation::UpsideDown),
            _ => None,
        }
    }
}

/// Where a recovered fact came from: an evidence item plus the field inside
/// it (table.column, XML key, plist key path, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProvenanceRef {
    pub item: String,
    pub field: String,
}

impl ProvenanceRef {
    pub fn new(item: impl Into<String>, field: impl Into<String>) -> Self {
        ProvenanceRef {
            item: item.into(),
            field: field.into(),
        }
    }
}

/// Identity and physiology metadata from `userprofile.xml` (Android) or the
/// preferences plist (iOS). Fields a platform does not document stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub first_name: String,
    pub last_name: String,
    pub dob: ForensicTimestamp,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub gender: Option<Gender>,
    pub smoker: Option<Smoker>,
    pub email: String,
    pub country: Option<String>,
    pub medical_conditions: Vec<String>,
    pub source: ProvenanceRef,
}

/// Additional profile facts from secondary sources (e.g. the account email in
/// the main preferences file), kept with their own provenance so the
/// consistency pass can compare them against the primary profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFragment {
    pub source: ProvenanceRef,
    pub fields: BTreeMap<String, String>,
}

/// Per-row patient snapshot embedded in the ECG tables. Android rows carry
/// name/DOB/height/weight/gender/smoker; iOS rows carry name/DOB/height and
/// the ZMALE flag.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatientSnapshot {
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub dob: Option<ForensicTimestamp>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub gender: Option<Gender>,
    pub smoker: Option<Smoker>,
}

/// One ECG reading merged from the per-platform database schemas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecording {
    pub uuid: String,
    pub server_id: Option<String>,
    pub recorded_at: ForensicTimestamp,
    pub duration_ms: i64,
    pub heart_rate_bpm: i64,
    /// `None` only when the stored code was outside {0,1} (warned, never coerced).
    pub inverted: Option<DeviceOrientation>,
    pub has_audio: bool,
    pub comment: Option<String>,
    pub atc_filename: String,
    pub synced_at: Option<ForensicTimestamp>,
    pub is_resting: Option<bool>,
    pub mc_angina: Option<bool>,
    /// Any `ZMC_*` medical-condition flag column, keyed by lowercased name.
    pub condition_flags: BTreeMap<String, bool>,
    pub patient_snapshot: PatientSnapshot,
    pub db_key: Option<i64>,
    /// Dump-relative path of the linked audio evidence item.
    pub audio_item: Option<String>,
    pub provenance: ProvenanceRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloodPressureRecord {
    pub recorded_at: ForensicTimestamp,
    pub deleted: bool,
    pub systolic: i64,
    pub diastolic: i64,
    pub heart_rate_bpm: Option<i64>,
    pub source: Option<String>,
    pub notes: Option<String>,
    pub provenance: ProvenanceRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub recorded_at: ForensicTimestamp,
    pub weight_kg: f64,
    pub height_cm: f64,
    pub source: String,
    pub provenance: ProvenanceRef,
}

/// Reference from a referral order back to its ECG recording: the Android
/// `Orders` table stores a recording ID string, the iOS `ZOVERREADERORDER`
/// table an integer `Z_PK`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EcgRef {
    Key(i64),
    Text(String),
}

impl std::fmt::Display for EcgRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EcgRef::Key(k) => write!(f, "{k}"),
            EcgRef::Text(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferralOrder {
    pub ecg_ref: EcgRef,
    pub result: Option<String>,
    pub requested_at: ForensicTimestamp,
    pub completed_at: Option<ForensicTimestamp>,
    pub provenance: ProvenanceRef,
}

/// App usage metadata recovered outside the medical tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AppMetadata {
    pub account_email: Option<String>,
    pub app_version: Option<String>,
    pub first_used_at: Option<ForensicTimestamp>,
    pub last_bp_at: Option<ForensicTimestamp>,
    pub last_weight_at: Option<ForensicTimestamp>,
    pub last_heart_rate_at: Option<ForensicTimestamp>,
    pub profile_updated_at: Option<ForensicTimestamp>,
    /// Keys the extractor does not interpret, preserved verbatim as
    /// `file:key` → rendered value.
    pub opaque_keys: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    AtcTruncated,
    AtcBadVersion,
    AtcInfoInvalidDatetime,
    AtcInfoInvalidUuid,
    AtcInfoShortPayload,
    AtcOrphan,
    AtcTwinDivergence,
    AtcUuidMismatch,
    ClockSkew,
    MissingAudio,
    OrphanAudio,
    AudioFlagMismatch,
    MissingTable,
    MissingColumn,
    MissingDirectory,
    MalformedDatabase,
    MalformedXml,
    MalformedPlist,
    ImplausibleVitals,
    BpRangeViolation,
    OrderTimestampsInverted,
    BadBooleanCode,
    EpochUnitAssumed,
    TimestampReinterpreted,
    DanglingOrderRef,
    UnreadableFile,
}

impl WarningCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WarningCode::AtcTruncated => "atc_truncated",
            WarningCode::AtcBadVersion => "atc_bad_version",
            WarningCode::AtcInfoInvalidDatetime => "atc_info_invalid_datetime",
            WarningCode::AtcInfoInvalidUuid => "atc_info_invalid_uuid",
            WarningCode::AtcInfoShortPayload => "atc_info_short_payload",
            WarningCode::AtcOrphan => "atc_orphan",
            WarningCode::AtcTwinDivergence => "atc_twin_divergence",
            WarningCode::AtcUuidMismatch => "atc_uuid_mismatch",
            WarningCode::ClockSkew => "clock_skew",
            WarningCode::MissingAudio => "missing_audio",
            WarningCode::OrphanAudio => "orphan_audio",
            WarningCode::AudioFlagMismatch => "audio_flag_mismatch",
            WarningCode::MissingTable => "missing_table",
            WarningCode::MissingColumn => "missing_column",
            WarningCode::MissingDirectory => "missing_directory",
            WarningCode::MalformedDatabase => "malformed_database",
            WarningCode::MalformedXml => "malformed_xml",
            WarningCode::MalformedPlist => "malformed_plist",
            WarningCode::ImplausibleVitals => "implausible_vitals",
            WarningCode::BpRangeViolation => "bp_range_violation",
            WarningCode::OrderTimestampsInverted => "order_timestamps_inverted",
            WarningCode::BadBooleanCode => "bad_boolean_code",
            WarningCode::EpochUnitAssumed => "epoch_unit_assumed",
            WarningCode::TimestampReinterpreted => "timestamp_reinterpreted",
            WarningCode::DanglingOrderRef => "dangling_order_ref",
            WarningCode::UnreadableFile => "unreadable_file",
        }
    }
}

/// Structured anomaly record attached to a [`CaseFile`]; append-only during
/// extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseWarning {
    pub code: WarningCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl CaseWarning {
    pub fn new(code: WarningCode, message: impl Into<String>) -> Self {
        CaseWarning {
            code,
            message: message.into(),
            path: None,
            field: None,
        }
    }

    pub fn at_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn at_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

/// A stored timestamp that could not be normalized. Quarantined rather than
/// guessed or dropped; the timeline reports these separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedTimestamp {
    pub raw_text: String,
    pub source_field: String,
    pub provenance: ProvenanceRef,
    pub error: String,
}

/// Census entry for one table found in an evidence database. Undocumented
/// tables are cataloged opaque: name and row count only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCensusEntry {
    pub name: String,
    pub rows: u64,
    pub documented: bool,
}

/// Everything recovered from one platform's app residue in one dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub platform: Platform,
    pub app_root: String,
    pub profile: Option<PatientProfile>,
    pub profile_fragments: Vec<ProfileFragment>,
    pub app_metadata: AppMetadata,
    pub ecgs: Vec<EcgRecording>,
    pub bps: Vec<BloodPressureRecord>,
    pub weights: Vec<WeightRecord>,
    pub orders: Vec<ReferralOrder>,
    pub items: Vec<EvidenceItem>,
    pub table_census: Vec<TableCensusEntry>,
    pub warnings: Vec<CaseWarning>,
    pub quarantined: Vec<QuarantinedTimestamp>,
}

impl CaseFile {
    pub fn new(platform: Platform, app_root: impl Into<String>) -> Self {
        CaseFile {
            platform,
            app_root: app_root.into(),
            profile: None,
            profile_fragments: Vec::new(),
            app_metadata: AppMetadata::default(),
            ecgs: Vec::new(),
            bps: Vec::new(),
            weights: Vec::new(),
            orders: Vec::new(),
            items: Vec::new(),
            table_census: Vec::new(),
            warnings: Vec::new(),
            quarantined: Vec::new(),
        }
    }

    pub fn warn(&mut self, warning: CaseWarning) {
        self.warnings.push(warning);
    }

    pub fn warning_codes(&self) -> Vec<WarningCode> {
        self.warnings.iter().map(|w| w.code).collect()
    }
}
