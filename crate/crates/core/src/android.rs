//! Extractor for Kardia app residue on Android dumps.
//!
//! Artifacts, relative to the app root `com.alivecor.aliveecg`:
//!
//! - `databases/ECG.db` — `ECG`, `bp_records`, `Orders`, `Weight_records`
//!   plus undocumented tables (cataloged opaque, thirteen total observed)
//! - `files/ecgs/*.atc` — two chunked ECG files per reading
//! - `files/*.m4a`, `files/*.aac` — voice notes named by recording UUID
//! - `files/temp/*.pdf` — referral documents (cataloged and hashed only)
//! - `shared_prefs/*.xml` — patient profile and app usage metadata
//!
//! Database timestamps are GMT epoch values; zone offsets are stored per-row
//! where documented. Epoch unit (ms vs s) is detected from magnitude with a
//! plausibility-window fallback, and every heuristic decision is surfaced as
//! a warning so an investigator can audit the interpretation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

use crate::atc;
use crate::model::*;
use crate::prefs_xml::{self, PrefValue};
use crate::sqlite::{Database, SqlValue, Table};
use crate::timestamp::{ForensicTimestamp, RawTimestamp, TimestampEncoding};

pub const ANDROID_APP_ID: &str = "com.alivecor.aliveecg";
pub const DB_FILE: &str = "ECG.db";
pub const PREFS_MAIN: &str = "com.alivecor.aliveecg_preferences.xml";
pub const PREFS_MEASUREMENT: &str = "com.google.android.gms.measurement_prefs.xml";
pub const PREFS_USERPROFILE: &str = "userprofile.xml";

/// Documented `ECG.db` tables; everything else in the census is opaque.
pub const DOCUMENTED_TABLES: [&str; 4] = ["ECG", "bp_records", "Orders", "Weight_records"];

/// `.atc` header clock vs database clock tolerance before a skew warning.
pub const CLOCK_SKEW_TOLERANCE_MS: i64 = 1_000;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no `{0}` application folder found under the dump root")]
    AppNotFound(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct AndroidAppLayout {
    pub dump_root: PathBuf,
    /// Dump-relative path of the folder named `com.alivecor.aliveecg`.
    pub app_root: PathBuf,
}

impl AndroidAppLayout {
    pub fn db_path(&self) -> PathBuf {
        self.app_root.join("databases").join(DB_FILE)
    }
    pub fn ecg_dir(&self) -> PathBuf {
        self.app_root.join("files").join("ecgs")
    }
    pub fn audio_dir(&self) -> PathBuf {
        self.app_root.join("files")
    }
    pub fn temp_dir(&self) -> PathBuf {
        self.app_root.join("files").join("temp")
    }
    pub fn prefs_dir(&self) -> PathBuf {
        self.app_root.join("shared_prefs")
    }
    pub fn abs(&self, rel: &Path) -> PathBuf {
        self.dump_root.join(rel)
    }
}

/// Find the app root. The canonical location is `data/data/<app id>`; dumps
/// are often re-rooted, so fall back to searching the whole tree for a
/// directory with the exact app-id name. Choice is deterministic: fewest
/// path components first, then lexicographic.
pub fn locate_app_root(dump_root: &Path) -> Result<AndroidAppLayout, ExtractError> {
    locate_named_dir(dump_root, ANDROID_APP_ID, &["data", "data", ANDROID_APP_ID])
        .map(|app_root| AndroidAppLayout {
            dump_root: dump_root.to_path_buf(),
            app_root,
        })
        .ok_or(ExtractError::AppNotFound(ANDROID_APP_ID))
}

pub(crate) fn locate_named_dir(
    dump_root: &Path,
    dir_name: &str,
    canonical: &[&str],
) -> Option<PathBuf> {
    let canonical_path: PathBuf = canonical.iter().collect();
    if dump_root.join(&canonical_path).is_dir() {
        return Some(canonical_path);
    }
    let mut candidates: Vec<PathBuf> = WalkDir::new(dump_root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_dir() && e.file_name() == dir_name)
        .filter_map(|e| e.path().strip_prefix(dump_root).ok().map(Path::to_path_buf))
        .collect();
    candidates.sort_by_key(|p| (p.components().count(), p.to_string_lossy().into_owned()));
    candidates.into_iter().next()
}

/// Full extraction of one Android dump into a [`CaseFile`]. Read-only by
/// construction: the dump is only ever opened for reading.
pub fn extract(dump_root: &Path) -> Result<CaseFile, ExtractError> {
    let layout = locate_app_root(dump_root)?;
    let app_root_str = normalize_rel_path(&layout.app_root).unwrap_or_default();
    let mut case = CaseFile::new(Platform::Android, app_root_str);

    for (dir, label) in [
        (layout.ecg_dir(), "files/ecgs"),
        (layout.audio_dir(), "files"),
        (layout.temp_dir(), "files/temp"),
        (layout.prefs_dir(), "shared_prefs"),
    ] {
        if !layout.abs(&dir).is_dir() {
            case.warn(
                CaseWarning::new(
                    WarningCode::MissingDirectory,
                    format!("documented directory `{label}` is absent"),
                )
                .at_path(normalize_rel_path(&dir).unwrap_or_default()),
            );
        }
    }

    parse_ecg_db(&layout, &mut case);
    parse_shared_prefs_dir(&layout, &mut case);
    scan_media(&layout, &mut case)?;
    Ok(case)
}

// ---------------------------------------------------------------------------
// ECG.db
// ---------------------------------------------------------------------------

struct DbCtx<'a> {
    db_rel: String,
    case: &'a mut CaseFile,
    unit_noted: HashSet<String>,
    reinterpret_noted: HashSet<String>,
}

/// `ECG[7].dob` → `ECG.dob`: heuristics are noted once per column, not per row.
pub(crate) fn column_key(field: &str) -> String {
    match (field.find('['), field.find(']')) {
        (Some(open), Some(close)) if close > open => {
            format!("{}{}", &field[..open], &field[close + 1..])
        }
        _ => field.to_string(),
    }
}

impl DbCtx<'_> {
    fn prov(&self, field: impl Into<String>) -> ProvenanceRef {
        ProvenanceRef::new(self.db_rel.clone(), field)
    }

    /// Decode a GMT epoch column value: unit from magnitude, plausibility
    /// fallback, every assumption logged as a warning.
    fn decode_epoch(
        &mut self,
        value: &SqlValue,
        offset: Option<i32>,
        field: &str,
        window: Window,
    ) -> Result<ForensicTimestamp, String> {
        let raw = match value {
            SqlValue::Integer(v) => RawTimestamp::Integer(*v),
            SqlValue::Real(f) => RawTimestamp::Real(*f),
            SqlValue::Text(t) => {
                // Text timestamps are undocumented here; accept digits or
                // ISO-8601, quarantine anything else.
                if t.trim().parse::<i64>().is_ok() {
                    RawTimestamp::Text(t.clone())
                } else if let Ok(ts) = ForensicTimestamp::from_iso8601(t.clone(), field) {
                    let kept = ts.offset_seconds.or(offset);
                    return Ok(ts.with_offset(kept));
                } else {
                    return Err(format!("text value `{t}` is neither epoch nor ISO-8601"));
                }
            }
            SqlValue::Null => return Err("NULL where a timestamp is documented".into()),
            SqlValue::Blob(b) => return Err(format!("{}-byte BLOB timestamp", b.len())),
        };
        let magnitude = match &raw {
            RawTimestamp::Integer(v) => *v as f64,
            RawTimestamp::Real(f) => *f,
            RawTimestamp::Text(t) => t.trim().parse::<f64>().unwrap_or(0.0),
        };
        let primary = if magnitude.abs() >= 1.0e12 {
            TimestampEncoding::EpochMillisGmt
        } else {
            TimestampEncoding::EpochSecondsGmt
        };
        let secondary = if primary == TimestampEncoding::EpochMillisGmt {
            TimestampEncoding::EpochSecondsGmt
        } else {
            TimestampEncoding::EpochMillisGmt
        };
        self.note_unit(field, primary);

        let first = ForensicTimestamp::new(raw.clone(), primary, offset, field);
        match first {
            Ok(ts) if window.contains(ts.utc_millis()) => Ok(ts),
            first => {
                match ForensicTimestamp::new(raw, secondary, offset, field) {
                    Ok(ts2) if window.contains(ts2.utc_millis()) => {
                        self.note_reinterpreted(
                            field,
                            format!(
                                "{}: {} decode lands outside the plausibility window; \
                                 reinterpreted as {}",
                                column_key(field),
                                primary.as_str(),
                                secondary.as_str()
                            ),
                        );
                        Ok(ts2)
                    }
                    _ => match first {
                        // Implausible under both units: keep the primary
                        // decode, flagged, rather than guess further.
                        Ok(ts) => {
                            self.note_reinterpreted(
                                field,
                                format!(
                                    "{}: implausible under both epoch units; kept {}",
                                    column_key(field),
                                    primary.as_str()
                                ),
                            );
                            Ok(ts)
                        }
                        Err(e) => Err(e.to_string()),
                    },
                }
            }
        }
    }

    fn note_reinterpreted(&mut self, field: &str, message: String) {
        if self.reinterpret_noted.insert(column_key(field)) {
            self.case.warn(
                CaseWarning::new(WarningCode::TimestampReinterpreted, message)
                    .at_path(self.db_rel.clone())
                    .at_field(column_key(field)),
            );
        }
    }

    fn note_unit(&mut self, field: &str, unit: TimestampEncoding) {
        let key = column_key(field);
        if self.unit_noted.insert(key.clone()) {
            self.case.warn(
                CaseWarning::new(
                    WarningCode::EpochUnitAssumed,
                    format!("{key}: magnitude implies {}", unit.as_str()),
                )
                .at_path(self.db_rel.clone())
                .at_field(key),
            );
        }
    }

    fn quarantine(&mut self, value: &SqlValue, field: &str, error: String) {
        let raw_text = match value {
            SqlValue::Null => "NULL".to_string(),
            SqlValue::Integer(v) => v.to_string(),
            SqlValue::Real(f) => f.to_string(),
            SqlValue::Text(t) => t.clone(),
            SqlValue::Blob(b) => format!("<{} bytes>", b.len()),
        };
        let prov = self.prov(field);
        self.case.quarantined.push(QuarantinedTimestamp {
            raw_text,
            source_field: field.to_string(),
            provenance: prov,
            error,
        });
    }

    fn missing_column(&mut self, table: &str, column: &str) {
        self.case.warn(
            CaseWarning::new(
                WarningCode::MissingColumn,
                format!("table `{table}` has no `{column}` column; field absent"),
            )
            .at_path(self.db_rel.clone())
            .at_field(format!("{table}.{column}")),
        );
    }

    fn bad_bool(&mut self, field: &str, code: i64) {
        self.case.warn(
            CaseWarning::new(
                WarningCode::BadBooleanCode,
                format!("{field}: value {code} outside the documented {{0,1}} codes"),
            )
            .at_path(self.db_rel.clone())
            .at_field(field),
        );
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Window {
    pub min_ms: i64,
    pub max_ms: i64,
}

impl Window {
    pub(crate) fn contains(&self, ms: i64) -> bool {
        ms >= self.min_ms && ms < self.max_ms
    }
}

/// Usage events: 1970-01-01 .. 2100-01-01.
pub(crate) const EVENT_WINDOW: Window = Window {
    min_ms: 0,
    max_ms: 4_102_444_800_000,
};
/// Birth dates: 1900-01-01 .. 2100-01-01.
pub(crate) const DOB_WINDOW: Window = Window {
    min_ms: -2_208_988_800_000,
    max_ms: 4_102_444_800_000,
};

fn parse_ecg_db(layout: &AndroidAppLayout, case: &mut CaseFile) {
    let db_rel = normalize_rel_path(&layout.db_path()).unwrap_or_default();
    let db_abs = layout.abs(&layout.db_path());
    if !db_abs.is_file() {
        case.warn(
            CaseWarning::new(
                WarningCode::MissingTable,
                "ECG.db is absent; no database records",
            )
            .at_path(db_rel),
        );
        return;
    }
    let db = match Database::open(&db_abs) {
        Ok(db) => db,
        Err(e) => {
            case.warn(
                CaseWarning::new(WarningCode::MalformedDatabase, e.to_string()).at_path(db_rel),
            );
            return;
        }
    };
    let tables = match db.tables() {
        Ok(t) => t,
        Err(e) => {
            case.warn(
                CaseWarning::new(WarningCode::MalformedDatabase, e.to_string()).at_path(db_rel),
            );
            return;
        }
    };

    let mut ctx = DbCtx {
        db_rel: db_rel.clone(),
        case,
        unit_noted: HashSet::new(),
        reinterpret_noted: HashSet::new(),
    };

    // Census first: every table by name, documented or opaque.
    for t in &tables {
        let rows = db.row_count(t).unwrap_or(0);
        let documented = DOCUMENTED_TABLES
            .iter()
            .any(|d| d.eq_ignore_ascii_case(&t.name));
        ctx.case.table_census.push(TableCensusEntry {
            name: t.name.clone(),
            rows,
            documented,
        });
    }
    for documented in DOCUMENTED_TABLES {
        if !tables
            .iter()
            .any(|t| t.name.eq_ignore_ascii_case(documented))
        {
            ctx.case.warn(
                CaseWarning::new(
                    WarningCode::MissingTable,
                    format!("documented table `{documented}` is absent; partial extraction"),
                )
                .at_path(db_rel.clone())
                .at_field(documented),
            );
        }
    }

    let find = |name: &str| tables.iter().find(|t| t.name.eq_ignore_ascii_case(name));
    if let Some(table) = find("ECG") {
        parse_ecg_table(&db, table, &mut ctx);
    }
    if let Some(table) = find("bp_records") {
        parse_bp_table(&db, table, &mut ctx);
    }
    if let Some(table) = find("Weight_records") {
        parse_weight_table(&db, table, &mut ctx);
    }
    if let Some(table) = find("Orders") {
        parse_orders_table(&db, table, &mut ctx);
    }
}

fn parse_ecg_table(db: &Database, table: &Table, ctx: &mut DbCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(e) => {
            let rel = ctx.db_rel.clone();
            ctx.case
                .warn(CaseWarning::new(WarningCode::MalformedDatabase, e.to_string()).at_path(rel));
            return;
        }
    };

    let col_uuid = require_col(table, &["uuid"], ctx);
    // The recording-time column name carries a space in recovered databases,
    // but exported spellings vary; match the known variants case-insensitively.
    let col_recorded = require_col(
        table,
        &["data Recorded", "dataRecorded", "data_recorded"],
        ctx,
    );
    let col_server = table.column_index(&["server_id"]);
    let col_duration = require_col(table, &["duration"], ctx);
    let col_hr = require_col(table, &["heart_rate"], ctx);
    let col_inverted = require_col(table, &["inverted"], ctx);
    let col_height = require_col(table, &["height"], ctx);
    let col_weight = require_col(table, &["weight"], ctx);
    let col_gender = require_col(table, &["gender"], ctx);
    let col_smoker = require_col(table, &["smoker"], ctx);
    let col_has_audio = require_col(table, &["has_audio_file"], ctx);
    let col_first = table.column_index(&["first_name"]);
    let col_last = table.column_index(&["last_name"]);
    let col_dob = table.column_index(&["dob"]);

    for row in rows {
        let field = |col: &str| format!("ECG[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));

        let recorded_at = match get(col_recorded) {
            Some(v) => match ctx.decode_epoch(v, None, &field("data Recorded"), EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("data Recorded"), e);
                    continue;
                }
            },
            None => {
                ctx.quarantine(
                    &SqlValue::Null,
                    &field("data Recorded"),
                    "column absent".into(),
                );
                continue;
            }
        };

        let uuid = get(col_uuid)
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        let mut snapshot = PatientSnapshot {
            first_name: get(col_first).and_then(|v| v.as_str()).map(str::to_string),
            last_name: get(col_last).and_then(|v| v.as_str()).map(str::to_string),
            dob: None,
            height_cm: get(col_height).and_then(|v| v.as_f64()),
            weight_kg: get(col_weight).and_then(|v| v.as_f64()),
            gender: None,
            smoker: None,
        };
        if let Some(v) = get(col_dob) {
            if !v.is_null() {
                match ctx.decode_epoch(v, None, &field("dob"), DOB_WINDOW) {
                    Ok(ts) => snapshot.dob = Some(ts),
                    Err(e) => ctx.quarantine(v, &field("dob"), e),
                }
            }
        }
        if let Some(code) = get(col_gender).and_then(|v| v.as_i64()) {
            match Gender::from_code(code) {
                Some(g) => snapshot.gender = Some(g),
                None => ctx.bad_bool(&field("gender"), code),
            }
        }
        if let Some(code) = get(col_smoker).and_then(|v| v.as_i64()) {
            match Smoker::from_code(code) {
                Some(s) => snapshot.smoker = Some(s),
                None => ctx.bad_bool(&field("smoker"), code),
            }
        }
        check_vitals(
            snapshot.weight_kg,
            snapshot.height_cm,
            &field("vitals"),
            ctx,
        );

        let inverted = match get(col_inverted).and_then(|v| v.as_i64()) {
            Some(code) => match DeviceOrientation::from_code(code) {
                Some(o) => Some(o),
                None => {
                    ctx.bad_bool(&field("inverted"), code);
                    None
                }
            },
            None => None,
        };
        let has_audio = match get(col_has_audio).and_then(|v| v.as_i64()) {
            Some(0) | None => false,
            Some(1) => true,
            Some(code) => {
                ctx.bad_bool(&field("has_audio_file"), code);
                false
            }
        };

        let prov = ctx.prov(format!("ECG[{}]", row.rowid));
        ctx.case.ecgs.push(EcgRecording {
            atc_filename: if uuid.is_empty() {
                String::new()
            } else {
                format!("{uuid}.atc")
            },
            uuid,
            server_id: get(col_server).and_then(|v| v.as_str()).map(str::to_string),
            recorded_at,
            duration_ms: get(col_duration).and_then(|v| v.as_i64()).unwrap_or(0),
            heart_rate_bpm: get(col_hr).and_then(|v| v.as_i64()).unwrap_or(0),
            inverted,
            has_audio,
            comment: None,
            synced_at: None,
            is_resting: None,
            mc_angina: None,
            condition_flags: BTreeMap::new(),
            patient_snapshot: snapshot,
            db_key: Some(row.rowid),
            audio_item: None,
            provenance: prov,
        });
    }
}

fn parse_bp_table(db: &Database, table: &Table, ctx: &mut DbCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(_) => return,
    };
    let col_ts = require_col(table, &["timestamp"], ctx);
    let col_offset = table.column_index(&["timestamp_offset"]);
    let col_deleted = require_col(table, &["deleted"], ctx);
    let col_sys = require_col(table, &["systolic"], ctx);
    let col_dia = require_col(table, &["diastolic"], ctx);
    let col_hr = table.column_index(&["heart_rate"]);
    let col_source = table.column_index(&["source"]);

    for row in rows {
        let field = |col: &str| format!("bp_records[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));
        let offset = get(col_offset).and_then(|v| v.as_i64()).map(|v| v as i32);

        let recorded_at = match get(col_ts) {
            Some(v) => match ctx.decode_epoch(v, offset, &field("timestamp"), EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("timestamp"), e);
                    continue;
                }
            },
            None => continue,
        };
        let deleted = match get(col_deleted).and_then(|v| v.as_i64()) {
            Some(0) | None => false,
            Some(1) => true,
            Some(code) => {
                ctx.bad_bool(&field("deleted"), code);
                false
            }
        };
        let systolic = get(col_sys).and_then(|v| v.as_i64()).unwrap_or(0);
        let diastolic = get(col_dia).and_then(|v| v.as_i64()).unwrap_or(0);
        if !(systolic > diastolic && diastolic > 0) {
            ctx.case.warn(
                CaseWarning::new(
                    WarningCode::BpRangeViolation,
                    format!("systolic {systolic} / diastolic {diastolic} is degenerate; kept"),
                )
                .at_path(ctx.db_rel.clone())
                .at_field(field("systolic")),
            );
        }
        let prov = ctx.prov(format!("bp_records[{}]", row.rowid));
        ctx.case.bps.push(BloodPressureRecord {
            recorded_at,
            deleted,
            systolic,
            diastolic,
            heart_rate_bpm: get(col_hr).and_then(|v| v.as_i64()),
            source: get(col_source).and_then(|v| v.as_str()).map(str::to_string),
            notes: None,
            provenance: prov,
        });
    }
}

fn parse_weight_table(db: &Database, table: &Table, ctx: &mut DbCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(_) => return,
    };
    let col_ts = require_col(table, &["timestamp"], ctx);
    let col_offset = table.column_index(&["timestamp_offset"]);
    let col_weight = require_col(table, &["weight"], ctx);
    let col_height = require_col(table, &["height"], ctx);
    let col_source = table.column_index(&["source"]);

    for row in rows {
        let field = |col: &str| format!("Weight_records[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));
        let offset = get(col_offset).and_then(|v| v.as_i64()).map(|v| v as i32);

        let recorded_at = match get(col_ts) {
            Some(v) => match ctx.decode_epoch(v, offset, &field("timestamp"), EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("timestamp"), e);
                    continue;
                }
            },
            None => continue,
        };
        let weight_kg = get(col_weight).and_then(|v| v.as_f64()).unwrap_or(0.0);
        let height_cm = get(col_height).and_then(|v| v.as_f64()).unwrap_or(0.0);
        check_vitals(Some(weight_kg), Some(height_cm), &field("vitals"), ctx);
        let prov = ctx.prov(format!("Weight_records[{}]", row.rowid));
        ctx.case.weights.push(WeightRecord {
            recorded_at,
            weight_kg,
            height_cm,
            source: get(col_source)
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string(),
            provenance: prov,
        });
    }
}

fn parse_orders_table(db: &Database, table: &Table, ctx: &mut DbCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(_) => return,
    };
    let col_ecg = require_col(table, &["ecg_id"], ctx);
    let col_result = table.column_index(&["result"]);
    let col_requested = require_col(table, &["requested_at"], ctx);
    let col_completed = table.column_index(&["completed_at"]);

    for row in rows {
        let field = |col: &str| format!("Orders[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));

        let requested_at = match get(col_requested) {
            Some(v) => match ctx.decode_epoch(v, None, &field("requested_at"), EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("requested_at"), e);
                    continue;
                }
            },
            None => continue,
        };
        let completed_at = match get(col_completed) {
            Some(SqlValue::Null) | None => None,
            Some(v) => match ctx.decode_epoch(v, None, &field("completed_at"), EVENT_WINDOW) {
                Ok(ts) => Some(ts),
                Err(e) => {
                    ctx.quarantine(v, &field("completed_at"), e);
                    None
                }
            },
        };
        if let Some(completed) = &completed_at {
            if completed.utc_millis() < requested_at.utc_millis() {
                ctx.case.warn(
                    CaseWarning::new(
                        WarningCode::OrderTimestampsInverted,
                        "order completed before it was requested",
                    )
                    .at_path(ctx.db_rel.clone())
                    .at_field(field("completed_at")),
                );
            }
        }
        let ecg_ref = match get(col_ecg) {
            Some(SqlValue::Integer(k)) => EcgRef::Key(*k),
            Some(v) => EcgRef::Text(v.as_str().unwrap_or_default().to_string()),
            None => EcgRef::Text(String::new()),
        };
        let prov = ctx.prov(format!("Orders[{}]", row.rowid));
        ctx.case.orders.push(ReferralOrder {
            ecg_ref,
            result: get(col_result).and_then(|v| v.as_str()).map(str::to_string),
            requested_at,
            completed_at,
            provenance: prov,
        });
    }

    // Dangling references: an order must point at a known recording.
    let known: HashSet<&str> = ctx
        .case
        .ecgs
        .iter()
        .flat_map(|e| std::iter::once(e.uuid.as_str()).chain(e.server_id.as_deref()))
        .collect();
    let mut dangling = Vec::new();
    for order in &ctx.case.orders {
        let found = match &order.ecg_ref {
            EcgRef::Text(t) => known.contains(t.as_str()),
            EcgRef::Key(k) => ctx.case.ecgs.iter().any(|e| e.db_key == Some(*k)),
        };
        if !found {
            dangling.push((order.ecg_ref.to_string(), order.provenance.clone()));
        }
    }
    for (reference, prov) in dangling {
        ctx.case.warn(
            CaseWarning::new(
                WarningCode::DanglingOrderRef,
                format!("order references unknown recording `{reference}`"),
            )
            .at_path(prov.item)
            .at_field(prov.field),
        );
    }
}

fn require_col(table: &Table, aliases: &[&str], ctx: &mut DbCtx<'_>) -> Option<usize> {
    match table.column_index(aliases) {
        None => {
            ctx.missing_column(&table.name, aliases[0]);
            None
        }
        Some(idx) => {
            if aliases.len() > 1 {
                log::debug!(
                    "table `{}`: column alias `{}` matched",
                    table.name,
                    table.columns[idx]
                );
            }
            Some(idx)
        }
    }
}

/// Stored vitals are metric; values outside 1–500 kg / 30–250 cm trip a
/// plausibility warning (flagged, never dropped).
fn check_vitals(weight_kg: Option<f64>, height_cm: Option<f64>, field: &str, ctx: &mut DbCtx<'_>) {
    if let Some(w) = weight_kg {
        if !(1.0..=500.0).contains(&w) {
            ctx.case.warn(
                CaseWarning::new(
                    WarningCode::ImplausibleVitals,
                    format!("weight {w} kg outside the plausible 1–500 kg range"),
                )
                .at_path(ctx.db_rel.clone())
                .at_field(field),
            );
        }
    }
    if let Some(h) = height_cm {
        if !(30.0..=250.0).contains(&h) {
            ctx.case.warn(
                CaseWarning::new(
                    WarningCode::ImplausibleVitals,
                    format!("height {h} cm outside the plausible 30–250 cm range"),
                )
                .at_path(ctx.db_rel.clone())
                .at_field(field),
            );
        }
    }
}

// ---------------------------------------------------------------------------
// shared_prefs
// ---------------------------------------------------------------------------

fn parse_shared_prefs_dir(layout: &AndroidAppLayout, case: &mut CaseFile) {
    let prefs_dir = layout.prefs_dir();

    if let Some(prefs) = load_prefs(layout, &prefs_dir.join(PREFS_USERPROFILE), case) {
        let rel = normalize_rel_path(&prefs_dir.join(PREFS_USERPROFILE)).unwrap_or_default();
        build_profile_from_prefs(&prefs, &rel, case);
        catalog_extras(
            &prefs,
            &[
                "first_name",
                "last_name",
                "dob",
                "weight",
                "email",
                "country",
                "smoker",
            ],
            PREFS_USERPROFILE,
            case,
        );
    }

    if let Some(prefs) = load_prefs(layout, &prefs_dir.join(PREFS_MAIN), case) {
        let rel = normalize_rel_path(&prefs_dir.join(PREFS_MAIN)).unwrap_or_default();
        if let Some(email) = prefs.get("email").and_then(PrefValue::as_str) {
            case.app_metadata.account_email = Some(email.to_string());
            case.profile_fragments.push(ProfileFragment {
                source: ProvenanceRef::new(rel.clone(), "email"),
                fields: BTreeMap::from([("email".to_string(), email.to_string())]),
            });
        }
        case.app_metadata.last_bp_at = prefs_epoch(&prefs, "last_bp_recording", &rel, case);
        case.app_metadata.last_weight_at = prefs_epoch(&prefs, "last_weight_recording", &rel, case);
        case.app_metadata.last_heart_rate_at =
            prefs_epoch(&prefs, "last_heart_rate_recording", &rel, case);
        catalog_extras(
            &prefs,
            &[
                "email",
                "last_bp_recording",
                "last_weight_recording",
                "last_heart_rate_recording",
            ],
            PREFS_MAIN,
            case,
        );
    }

    if let Some(prefs) = load_prefs(layout, &prefs_dir.join(PREFS_MEASUREMENT), case) {
        let rel = normalize_rel_path(&prefs_dir.join(PREFS_MEASUREMENT)).unwrap_or_default();
        case.app_metadata.first_used_at = prefs_epoch(&prefs, "first_open_time", &rel, case);
        catalog_extras(&prefs, &["first_open_time"], PREFS_MEASUREMENT, case);
    }
}

fn load_prefs(
    layout: &AndroidAppLayout,
    rel: &Path,
    case: &mut CaseFile,
) -> Option<prefs_xml::PrefsFile> {
    let abs = layout.abs(rel);
    if !abs.is_file() {
        return None;
    }
    let rel_str = normalize_rel_path(rel).unwrap_or_default();
    let bytes = match std::fs::read(&abs) {
        Ok(b) => b,
        Err(e) => {
            case.warn(
                CaseWarning::new(WarningCode::UnreadableFile, e.to_string()).at_path(rel_str),
            );
            return None;
        }
    };
    match prefs_xml::parse_shared_prefs(&bytes) {
        Ok(prefs) => Some(prefs),
        Err(e) => {
            case.warn(CaseWarning::new(WarningCode::MalformedXml, e.to_string()).at_path(rel_str));
            None
        }
    }
}

fn build_profile_from_prefs(prefs: &prefs_xml::PrefsFile, rel: &str, case: &mut CaseFile) {
    let first = prefs.get("first_name").and_then(PrefValue::as_str);
    let last = prefs.get("last_name").and_then(PrefValue::as_str);
    let email = prefs.get("email").and_then(PrefValue::as_str);
    let dob_raw = prefs.get("dob").and_then(PrefValue::as_i64);

    let dob = dob_raw.and_then(|raw| {
        decode_prefs_epoch(
            raw,
            &format!("{PREFS_USERPROFILE}:dob"),
            DOB_WINDOW,
            rel,
            case,
        )
    });

    match (first, last, email, dob) {
        (Some(first), Some(last), Some(email), Some(dob)) => {
            let smoker = prefs.get("smoker").and_then(PrefValue::as_bool).map(|b| {
                if b {
                    Smoker::Yes
                } else {
                    Smoker::No
                }
            });
            case.profile = Some(PatientProfile {
                first_name: first.to_string(),
                last_name: last.to_string(),
                dob,
                height_cm: None,
                weight_kg: prefs.get("weight").and_then(PrefValue::as_f64),
                gender: None,
                smoker,
                email: email.to_string(),
                country: prefs
                    .get("country")
                    .and_then(PrefValue::as_str)
                    .map(str::to_string),
                medical_conditions: Vec::new(),
                source: ProvenanceRef::new(rel, "map"),
            });
        }
        _ => {
            // Partial profile: keep whatever keys exist as a fragment.
            let mut fields = BTreeMap::new();
            for (key, value) in &prefs.entries {
                fields.insert(key.clone(), value.render());
            }
            if !fields.is_empty() {
                case.profile_fragments.push(ProfileFragment {
                    source: ProvenanceRef::new(rel, "map"),
                    fields,
                });
            }
        }
    }
}

fn prefs_epoch(
    prefs: &prefs_xml::PrefsFile,
    key: &str,
    rel: &str,
    case: &mut CaseFile,
) -> Option<ForensicTimestamp> {
    let raw = prefs.get(key)?.as_i64()?;
    decode_prefs_epoch(raw, &format!("prefs:{key}"), EVENT_WINDOW, rel, case)
}

/// Epoch decode for prefs values: same magnitude heuristic as the database
/// path, but quarantine feeds the case directly.
fn decode_prefs_epoch(
    raw: i64,
    field: &str,
    window: Window,
    rel: &str,
    case: &mut CaseFile,
) -> Option<ForensicTimestamp> {
    let primary = if (raw as f64).abs() >= 1.0e12 {
        TimestampEncoding::EpochMillisGmt
    } else {
        TimestampEncoding::EpochSecondsGmt
    };
    let secondary = if primary == TimestampEncoding::EpochMillisGmt {
        TimestampEncoding::EpochSecondsGmt
    } else {
        TimestampEncoding::EpochMillisGmt
    };
    let attempt = |enc| ForensicTimestamp::new(RawTimestamp::Integer(raw), enc, None, field).ok();
    if let Some(ts) = attempt(primary).filter(|ts| window.contains(ts.utc_millis())) {
        return Some(ts);
    }
    if let Some(ts) = attempt(secondary).filter(|ts| window.contains(ts.utc_millis())) {
        case.warn(
            CaseWarning::new(
                WarningCode::TimestampReinterpreted,
                format!("{field}: reinterpreted as {}", secondary.as_str()),
            )
            .at_path(rel)
            .at_field(field),
        );
        return Some(ts);
    }
    match attempt(primary) {
        Some(ts) => Some(ts), // implausible but decodable: keep, windows are heuristic
        None => {
            case.quarantined.push(QuarantinedTimestamp {
                raw_text: raw.to_string(),
                source_field: field.to_string(),
                provenance: ProvenanceRef::new(rel, field),
                error: "does not decode under either epoch unit".into(),
            });
            None
        }
    }
}

fn catalog_extras(prefs: &prefs_xml::PrefsFile, known: &[&str], file: &str, case: &mut CaseFile) {
    for (key, value) in &prefs.entries {
        if !known.contains(&key.as_str()) {
            case.app_metadata
                .opaque_keys
                .insert(format!("{file}:{key}"), value.render());
        }
    }
}

// ---------------------------------------------------------------------------
// Media scan
// ---------------------------------------------------------------------------

fn scan_media(layout: &AndroidAppLayout, case: &mut CaseFile) -> Result<(), ExtractError> {
    // Deterministic walk over everything under the app root.
    let app_abs = layout.abs(&layout.app_root);
    let mut files: Vec<PathBuf> = WalkDir::new(&app_abs)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            e.path()
                .strip_prefix(&layout.dump_root)
                .ok()
                .map(Path::to_path_buf)
        })
        .collect();
    files.sort();

    let ecg_dir = layout.ecg_dir();
    let audio_dir = layout.audio_dir();
    let temp_dir = layout.temp_dir();
    let prefs_dir = layout.prefs_dir();
    let db_dir = layout.app_root.join("databases");

    let mut atc_by_uuid: AtcIndex = HashMap::new();
    let mut audio_files: Vec<(String, String)> = Vec::new(); // (rel, stem)

    for rel in files {
        let ext = rel
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let category = if rel.starts_with(&ecg_dir) && ext == "atc" {
            EvidenceCategory::AtcEcg
        } else if rel.parent() == Some(audio_dir.as_path()) && (ext == "m4a" || ext == "aac") {
            EvidenceCategory::AudioNote
        } else if rel.starts_with(&temp_dir) && ext == "pdf" {
            EvidenceCategory::PdfReferral
        } else if rel.starts_with(&db_dir) {
            // Includes journal/WAL side files: cataloged, never replayed.
            EvidenceCategory::Database
        } else if rel.starts_with(&prefs_dir) && ext == "xml" {
            EvidenceCategory::PrefsXml
        } else {
            EvidenceCategory::Unknown
        };

        let item =
            match EvidenceItem::from_file(&layout.dump_root, &rel, category, Platform::Android) {
                Ok(item) => item,
                Err(e) => {
                    case.warn(
                        CaseWarning::new(WarningCode::UnreadableFile, e.to_string())
                            .at_path(normalize_rel_path(&rel).unwrap_or_default()),
                    );
                    continue;
                }
            };
        let rel_str = item.dump_relative_path.clone();
        let digest = item.digest.clone();
        case.items.push(item);

        match category {
            EvidenceCategory::AtcEcg => {
                if let Some((uuid, header)) = inspect_atc(&layout.dump_root, &rel, &rel_str, case) {
                    atc_by_uuid.entry(uuid).or_default().push(AtcScanEntry {
                        rel: rel_str,
                        digest,
                        header,
                    });
                }
            }
            EvidenceCategory::AudioNote => {
                let stem = rel
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                audio_files.push((rel_str, stem));
            }
            _ => {}
        }
    }

    link_atc_files(&atc_by_uuid, case);
    link_audio_files(&audio_files, case);
    Ok(())
}

/// Header clock of an `.atc` file: UTC instant in ms plus the zone offset
/// the datetime string carried.
pub(crate) type AtcHeaderClock = (i64, Option<i32>);

/// One scanned `.atc` file: where it sits, its digest, and the header clock
/// when the info chunk was readable.
pub(crate) struct AtcScanEntry {
    pub rel: String,
    pub digest: String,
    pub header: Option<AtcHeaderClock>,
}

pub(crate) type AtcIndex = HashMap<String, Vec<AtcScanEntry>>;

/// Parse one `.atc`, translate parser warnings, and return the header UUID
/// and instant when readable.
pub(crate) fn inspect_atc(
    dump_root: &Path,
    rel: &Path,
    rel_str: &str,
    case: &mut CaseFile,
) -> Option<(String, Option<AtcHeaderClock>)> {
    let bytes = match std::fs::read(dump_root.join(rel)) {
        Ok(b) => b,
        Err(e) => {
            case.warn(
                CaseWarning::new(WarningCode::UnreadableFile, e.to_string()).at_path(rel_str),
            );
            return None;
        }
    };
    let parsed = match atc::parse_atc(&bytes) {
        Ok(p) => p,
        Err(e) => {
            case.warn(CaseWarning::new(WarningCode::AtcTruncated, e.to_string()).at_path(rel_str));
            return None;
        }
    };
    for w in &parsed.warnings {
        match w {
            atc::AtcWarning::Truncation {
                at_offset,
                salvaged,
            } => case.warn(
                CaseWarning::new(
                    WarningCode::AtcTruncated,
                    format!(
                        "chunk walk truncated at offset {at_offset}, {salvaged} bytes salvaged"
                    ),
                )
                .at_path(rel_str),
            ),
            atc::AtcWarning::UnexpectedVersion(v) => case.warn(
                CaseWarning::new(
                    WarningCode::AtcBadVersion,
                    format!("format version {v}, expected 3"),
                )
                .at_path(rel_str),
            ),
        }
    }
    let chunk = parsed.file.info_chunk()?;
    let info = atc::parse_info_chunk(chunk).ok()?;
    for w in &info.warnings {
        let (code, msg) = match w {
            atc::InfoWarning::InvalidDatetime(t) => (
                WarningCode::AtcInfoInvalidDatetime,
                format!("header datetime `{t}` is not ISO-8601"),
            ),
            atc::InfoWarning::InvalidUuid(t) => (
                WarningCode::AtcInfoInvalidUuid,
                format!("header UUID `{t}` is malformed"),
            ),
            atc::InfoWarning::ShortPayload(n) => (
                WarningCode::AtcInfoShortPayload,
                format!("info payload only {n} bytes; scanned NUL-delimited"),
            ),
            atc::InfoWarning::NonUtf8Strings => (
                WarningCode::AtcInfoShortPayload,
                "recorder strings are not UTF-8".to_string(),
            ),
        };
        case.warn(CaseWarning::new(code, msg).at_path(rel_str));
    }
    if !atc::is_uuid(&info.info.uuid_text) {
        return None;
    }
    let instant = ForensicTimestamp::from_iso8601(info.info.recorded_at_text.clone(), "atc.header")
        .ok()
        .map(|ts| (ts.utc_millis(), ts.offset_seconds));
    Some((info.info.uuid_text, instant))
}

fn link_atc_files(atc_by_uuid: &AtcIndex, case: &mut CaseFile) {
    let mut uuids: Vec<&String> = atc_by_uuid.keys().collect();
    uuids.sort();
    for uuid in uuids {
        let files = &atc_by_uuid[uuid];
        // The app writes two files per reading; divergent twins are
        // evidentially interesting.
        let distinct: HashSet<&str> = files.iter().map(|f| f.digest.as_str()).collect();
        if files.len() > 1 && distinct.len() > 1 {
            case.warn(
                CaseWarning::new(
                    WarningCode::AtcTwinDivergence,
                    format!(
                        "{} files share recording {uuid} but differ at byte level",
                        files.len()
                    ),
                )
                .at_path(files[0].rel.clone()),
            );
        }

        let row = case.ecgs.iter_mut().find(|e| e.uuid == *uuid);
        match row {
            Some(ecg) => {
                // Prefer the exact `<uuid>.atc` name for the filename field.
                let exact = files
                    .iter()
                    .find(|f| f.rel.ends_with(&format!("/{uuid}.atc")));
                if let Some(f) = exact.or_else(|| files.first()) {
                    ecg.atc_filename = f.rel.rsplit('/').next().unwrap_or(&f.rel).to_string();
                }
                let row_ms = ecg.recorded_at.utc_millis();
                let mut adopt: Option<i32> = None;
                let mut skews = Vec::new();
                for f in files {
                    if let Some((header_ms, header_offset)) = f.header {
                        if (header_ms - row_ms).abs() > CLOCK_SKEW_TOLERANCE_MS {
                            skews.push((f.rel.clone(), header_ms));
                        } else if adopt.is_none() {
                            adopt = header_offset;
                        }
                    }
                }
                if ecg.recorded_at.offset_seconds.is_none() {
                    if let Some(offset) = adopt {
                        // The header stores the zone the reading was taken in.
                        ecg.recorded_at = ecg.recorded_at.clone().with_offset(Some(offset));
                    }
                }
                for (rel, header_ms) in skews {
                    let skew = header_ms - row_ms;
                    case.warn(
                        CaseWarning::new(
                            WarningCode::ClockSkew,
                            format!("header clock differs from database by {skew} ms for {uuid}"),
                        )
                        .at_path(rel),
                    );
                }
            }
            None => {
                for f in files {
                    case.warn(
                        CaseWarning::new(
                            WarningCode::AtcOrphan,
                            format!("recording file for {uuid} matches no database row"),
                        )
                        .at_path(f.rel.clone()),
                    );
                }
            }
        }
    }
}

fn link_audio_files(audio_files: &[(String, String)], case: &mut CaseFile) {
    for (rel, stem) in audio_files {
        // Exact stem match is the documented lookup; substring is a salvage
        // rule and does not set the link.
        let exact = case
            .ecgs
            .iter_mut()
            .find(|e| !e.uuid.is_empty() && e.uuid == *stem);
        match exact {
            Some(ecg) => {
                ecg.audio_item = Some(rel.clone());
                if !ecg.has_audio {
                    case.warnings.push(
                        CaseWarning::new(
                            WarningCode::AudioFlagMismatch,
                            format!("audio present for {stem} but has_audio_file is 0"),
                        )
                        .at_path(rel.clone()),
                    );
                }
            }
            None => {
                let substring = case
                    .ecgs
                    .iter()
                    .find(|e| !e.uuid.is_empty() && stem.contains(&e.uuid))
                    .map(|e| e.uuid.clone());
                match substring {
                    Some(uuid) => {
                        log::debug!("audio {rel} matched {uuid} by substring rule");
                    }
                    None => {
                        case.warn(
                            CaseWarning::new(
                                WarningCode::OrphanAudio,
                                format!("audio file `{stem}` matches no recording"),
                            )
                            .at_path(rel.clone()),
                        );
                    }
                }
            }
        }
    }

    // Symmetric check: every row claiming audio must have a file.
    let mut missing = Vec::new();
    for ecg in &case.ecgs {
        if ecg.has_audio && ecg.audio_item.is_none() {
            missing.push((ecg.uuid.clone(), ecg.provenance.clone()));
        }
    }
    for (uuid, prov) in missing {
        case.warn(
            CaseWarning::new(
                WarningCode::MissingAudio,
                format!("row {uuid} has has_audio_file=1 but no audio file was found"),
            )
            .at_path(prov.item)
            .at_field(prov.field),
        );
    }
}
