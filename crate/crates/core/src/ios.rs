//! Extractor for Kardia app residue on iOS logical-extraction dumps.
//!
//! Artifacts, relative to the container `com.alivecor.professional.aliveecg`
//! under `private/var/mobile/containers/data/application`:
//!
//! - `Documents/AliveECGDB.sqlite` — `ZECG`, `ZKDMBLOODPRESSURERECORDING`,
//!   `ZKDMWEIGHT`, `ZOVERREADERORDER`
//! - `Documents/ecgfiles/*.atc` — one chunked ECG file per reading
//! - `Documents/*.m4a` — voice notes named by the row's ZUUID
//! - `Library/Preferences/com.alivecor.professional.aliveecg.plist`
//!
//! Timestamps are Mac Absolute Time (seconds since 2001-01-01Z), stored as
//! integer or fractional seconds. Values decoding outside 2001–2100 are
//! retried as GMT epoch values and the reinterpretation is logged, since the
//! store is documented as Mac Absolute "unless stated".

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use walkdir::WalkDir;

use crate::android::{
    inspect_atc, locate_named_dir, AtcIndex, AtcScanEntry, ExtractError, Window, DOB_WINDOW,
};
use crate::model::*;
use crate::propertylist::{self, PlistValue};
use crate::sqlite::{Database, SqlValue, Table};
use crate::timestamp::{
    ForensicTimestamp, RawTimestamp, TimestampEncoding, MAC_ABSOLUTE_UNIX_OFFSET_SECS,
};

pub const IOS_APP_ID: &str = "com.alivecor.professional.aliveecg";
pub const DB_FILE: &str = "AliveECGDB.sqlite";
pub const PREFS_PLIST: &str = "com.alivecor.professional.aliveecg.plist";

pub const DOCUMENTED_TABLES: [&str; 4] = [
    "ZECG",
    "ZKDMBLOODPRESSURERECORDING",
    "ZKDMWEIGHT",
    "ZOVERREADERORDER",
];

pub const CLOCK_SKEW_TOLERANCE_MS: i64 = 1_000;

/// Mac Absolute values are plausible as events between 2001 and 2100.
const MAC_EVENT_WINDOW: Window = Window {
    min_ms: 978_307_200_000,
    max_ms: 4_102_444_800_000,
};

#[derive(Debug, Clone)]
pub struct IosAppLayout {
    pub dump_root: PathBuf,
    pub app_root: PathBuf,
}

impl IosAppLayout {
    pub fn documents_dir(&self) -> PathBuf {
        self.app_root.join("Documents")
    }
    pub fn ecgfiles_dir(&self) -> PathBuf {
        self.documents_dir().join("ecgfiles")
    }
    pub fn db_path(&self) -> PathBuf {
        self.documents_dir().join(DB_FILE)
    }
    pub fn prefs_plist(&self) -> PathBuf {
        self.app_root
            .join("Library")
            .join("Preferences")
            .join(PREFS_PLIST)
    }
    pub fn abs(&self, rel: &Path) -> PathBuf {
        self.dump_root.join(rel)
    }
}

/// Find the container folder. UUID-named container parents are handled by
/// the same name-anywhere search used for re-rooted Android dumps.
pub fn locate_app_root(dump_root: &Path) -> Result<IosAppLayout, ExtractError> {
    locate_named_dir(
        dump_root,
        IOS_APP_ID,
        &[
            "private",
            "var",
            "mobile",
            "containers",
            "data",
            "application",
            IOS_APP_ID,
        ],
    )
    .map(|app_root| IosAppLayout {
        dump_root: dump_root.to_path_buf(),
        app_root,
    })
    .ok_or(ExtractError::AppNotFound(IOS_APP_ID))
}

pub fn extract(dump_root: &Path) -> Result<CaseFile, ExtractError> {
    let layout = locate_app_root(dump_root)?;
    let app_root_str = normalize_rel_path(&layout.app_root).unwrap_or_default();
    let mut case = CaseFile::new(Platform::Ios, app_root_str);

    for (dir, label) in [
        (layout.documents_dir(), "Documents"),
        (layout.ecgfiles_dir(), "Documents/ecgfiles"),
        (layout.app_root.join("Library"), "Library"),
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

    parse_alive_db(&layout, &mut case);
    parse_prefs_plist(&layout, &mut case);
    scan_media(&layout, &mut case)?;
    Ok(case)
}

// ---------------------------------------------------------------------------
// AliveECGDB.sqlite
// ---------------------------------------------------------------------------

struct MacCtx<'a> {
    db_rel: String,
    case: &'a mut CaseFile,
    reinterpret_noted: HashSet<String>,
}

impl MacCtx<'_> {
    fn prov(&self, field: impl Into<String>) -> ProvenanceRef {
        ProvenanceRef::new(self.db_rel.clone(), field)
    }

    /// Decode a Mac Absolute column. Integer and fractional seconds are both
    /// accepted; implausible decodes are retried as epoch seconds then epoch
    /// milliseconds, logged each time.
    fn decode_mac(
        &mut self,
        value: &SqlValue,
        field: &str,
        window: Window,
    ) -> Result<ForensicTimestamp, String> {
        let raw = match value {
            SqlValue::Integer(v) => RawTimestamp::Integer(*v),
            SqlValue::Real(f) => RawTimestamp::Real(*f),
            SqlValue::Text(t) => {
                if let Ok(ts) = ForensicTimestamp::from_iso8601(t.clone(), field) {
                    return Ok(ts);
                }
                RawTimestamp::Text(t.clone())
            }
            SqlValue::Null => return Err("NULL where a timestamp is documented".into()),
            SqlValue::Blob(b) => return Err(format!("{}-byte BLOB timestamp", b.len())),
        };

        let mac = ForensicTimestamp::new(
            raw.clone(),
            TimestampEncoding::MacAbsoluteSeconds,
            None,
            field,
        );
        match mac {
            Ok(ts) if window.contains(ts.utc_millis()) => Ok(ts),
            mac => {
                for alt in [
                    TimestampEncoding::EpochSecondsGmt,
                    TimestampEncoding::EpochMillisGmt,
                ] {
                    if let Ok(ts) = ForensicTimestamp::new(raw.clone(), alt, None, field) {
                        if window.contains(ts.utc_millis()) {
                            self.note_reinterpreted(
                                field,
                                format!(
                                    "{}: Mac Absolute decode implausible; reinterpreted as {}",
                                    crate::android::column_key(field),
                                    alt.as_str()
                                ),
                            );
                            return Ok(ts);
                        }
                    }
                }
                match mac {
                    Ok(ts) => {
                        self.note_reinterpreted(
                            field,
                            format!(
                                "{}: implausible under every documented encoding; \
                                 kept Mac Absolute",
                                crate::android::column_key(field)
                            ),
                        );
                        Ok(ts)
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
        }
    }

    fn note_reinterpreted(&mut self, field: &str, message: String) {
        let key = crate::android::column_key(field);
        if self.reinterpret_noted.insert(key.clone()) {
            self.case.warn(
                CaseWarning::new(WarningCode::TimestampReinterpreted, message)
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

    fn opt_bool(&mut self, value: Option<&SqlValue>, field: &str) -> Option<bool> {
        match value.and_then(|v| v.as_i64()) {
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(code) => {
                self.bad_bool(field, code);
                None
            }
            None => None,
        }
    }
}

fn parse_alive_db(layout: &IosAppLayout, case: &mut CaseFile) {
    let db_rel = normalize_rel_path(&layout.db_path()).unwrap_or_default();
    let db_abs = layout.abs(&layout.db_path());
    if !db_abs.is_file() {
        case.warn(
            CaseWarning::new(
                WarningCode::MissingTable,
                "AliveECGDB.sqlite is absent; no database records",
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

    let mut ctx = MacCtx {
        db_rel: db_rel.clone(),
        case,
        reinterpret_noted: HashSet::new(),
    };
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
    if let Some(table) = find("ZECG") {
        parse_zecg(&db, table, &mut ctx);
    }
    if let Some(table) = find("ZKDMBLOODPRESSURERECORDING") {
        parse_zbp(&db, table, &mut ctx);
    }
    if let Some(table) = find("ZKDMWEIGHT") {
        parse_zweight(&db, table, &mut ctx);
    }
    if let Some(table) = find("ZOVERREADERORDER") {
        parse_zorders(&db, table, &mut ctx);
    }
}

fn parse_zecg(db: &Database, table: &Table, ctx: &mut MacCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(e) => {
            let rel = ctx.db_rel.clone();
            ctx.case
                .warn(CaseWarning::new(WarningCode::MalformedDatabase, e.to_string()).at_path(rel));
            return;
        }
    };
    // The documentation spells this column both ZUID and ZUUID; match either.
    let col_uuid = table.column_index(&["ZUUID", "ZUID"]);
    let col_pk = table.column_index(&["Z_PK"]);
    let col_recorded = table.column_index(&["ZDATERECORDED"]);
    let col_synced = table.column_index(&["ZDATESYNCED"]);
    let col_hr = table.column_index(&["ZHEARTRATE"]);
    let col_comment = table.column_index(&["ZCOMMENT"]);
    let col_filename = table.column_index(&["ZFILENAME"]);
    let col_duration = table.column_index(&["ZDURATION_MS"]);
    let col_has_audio = table.column_index(&["ZHAS_AUDIO_DESCRIPTION"]);
    let col_inverted = table.column_index(&["ZINVERTED"]);
    let col_resting = table.column_index(&["Z_IS_RESTING_HEART_RATE"]);
    let col_male = table.column_index(&["ZMALE"]);
    let col_first = table.column_index(&["ZPATIENTFIRSTNAME"]);
    let col_last = table.column_index(&["ZPATIENTLASTNAME"]);
    let col_dob = table.column_index(&["ZPATIENTDOB"]);
    let col_height = table.column_index(&["ZHEIGHT"]);
    // Any ZMC_* column is a medical-condition flag.
    let mc_cols: Vec<(usize, String)> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, name)| name.to_uppercase().starts_with("ZMC_"))
        .map(|(i, name)| (i, name.to_lowercase()))
        .collect();

    for row in rows {
        let field = |col: &str| format!("ZECG[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));

        let recorded_at = match get(col_recorded) {
            Some(v) => match ctx.decode_mac(v, &field("ZDATERECORDED"), MAC_EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("ZDATERECORDED"), e);
                    continue;
                }
            },
            None => {
                ctx.quarantine(
                    &SqlValue::Null,
                    &field("ZDATERECORDED"),
                    "column absent".into(),
                );
                continue;
            }
        };
        let synced_at = match get(col_synced) {
            Some(SqlValue::Null) | None => None,
            Some(v) => match ctx.decode_mac(v, &field("ZDATESYNCED"), MAC_EVENT_WINDOW) {
                Ok(ts) => Some(ts),
                Err(e) => {
                    ctx.quarantine(v, &field("ZDATESYNCED"), e);
                    None
                }
            },
        };

        let mut snapshot = PatientSnapshot {
            first_name: get(col_first).and_then(|v| v.as_str()).map(str::to_string),
            last_name: get(col_last).and_then(|v| v.as_str()).map(str::to_string),
            dob: None,
            height_cm: get(col_height).and_then(|v| v.as_f64()),
            weight_kg: None,
            gender: None,
            smoker: None,
        };
        if let Some(v) = get(col_dob) {
            if !v.is_null() {
                match ctx.decode_mac(v, &field("ZPATIENTDOB"), DOB_WINDOW) {
                    Ok(ts) => snapshot.dob = Some(ts),
                    Err(e) => ctx.quarantine(v, &field("ZPATIENTDOB"), e),
                }
            }
        }
        if let Some(code) = get(col_male).and_then(|v| v.as_i64()) {
            match Gender::from_code(code) {
                Some(g) => snapshot.gender = Some(g),
                None => ctx.bad_bool(&field("ZMALE"), code),
            }
        }

        let inverted = match get(col_inverted).and_then(|v| v.as_i64()) {
            Some(code) => match DeviceOrientation::from_code(code) {
                Some(o) => Some(o),
                None => {
                    ctx.bad_bool(&field("ZINVERTED"), code);
                    None
                }
            },
            None => None,
        };
        let has_audio = match get(col_has_audio).and_then(|v| v.as_i64()) {
            Some(0) | None => false,
            Some(1) => true,
            Some(code) => {
                ctx.bad_bool(&field("ZHAS_AUDIO_DESCRIPTION"), code);
                false
            }
        };
        let is_resting = ctx.opt_bool(get(col_resting), &field("Z_IS_RESTING_HEART_RATE"));

        let mut condition_flags = BTreeMap::new();
        for (idx, name) in &mc_cols {
            if let Some(code) = row.values.get(*idx).and_then(|v| v.as_i64()) {
                match code {
                    0 => {
                        condition_flags.insert(name.clone(), false);
                    }
                    1 => {
                        condition_flags.insert(name.clone(), true);
                    }
                    other => ctx.bad_bool(&format!("ZECG[{}].{name}", row.rowid), other),
                }
            }
        }
        let mc_angina = condition_flags.get("zmc_angina").copied();

        let prov = ctx.prov(format!("ZECG[{}]", row.rowid));
        ctx.case.ecgs.push(EcgRecording {
            uuid: get(col_uuid)
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string(),
            server_id: None,
            recorded_at,
            duration_ms: get(col_duration).and_then(|v| v.as_i64()).unwrap_or(0),
            heart_rate_bpm: get(col_hr).and_then(|v| v.as_i64()).unwrap_or(0),
            inverted,
            has_audio,
            comment: get(col_comment)
                .and_then(|v| v.as_str())
                .map(str::to_string),
            atc_filename: get(col_filename)
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string(),
            synced_at,
            is_resting,
            mc_angina,
            condition_flags,
            patient_snapshot: snapshot,
            db_key: get(col_pk).and_then(|v| v.as_i64()),
            audio_item: None,
            provenance: prov,
        });
    }
}

fn parse_zbp(db: &Database, table: &Table, ctx: &mut MacCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(_) => return,
    };
    let col_ts = table.column_index(&["ZDATERECORDED"]);
    let col_sys = table.column_index(&["ZSYSTOLIC"]);
    let col_dia = table.column_index(&["ZDIASTOLIC"]);
    let col_hr = table.column_index(&["ZHEARTRATE"]);
    let col_notes = table.column_index(&["ZNOTES"]);

    for row in rows {
        let field = |col: &str| format!("ZKDMBLOODPRESSURERECORDING[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));
        let recorded_at = match get(col_ts) {
            Some(v) => match ctx.decode_mac(v, &field("ZDATERECORDED"), MAC_EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("ZDATERECORDED"), e);
                    continue;
                }
            },
            None => continue,
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
                .at_field(field("ZSYSTOLIC")),
            );
        }
        let prov = ctx.prov(format!("ZKDMBLOODPRESSURERECORDING[{}]", row.rowid));
        ctx.case.bps.push(BloodPressureRecord {
            recorded_at,
            deleted: false,
            systolic,
            diastolic,
            heart_rate_bpm: get(col_hr).and_then(|v| v.as_i64()),
            source: None,
            notes: get(col_notes).and_then(|v| v.as_str()).map(str::to_string),
            provenance: prov,
        });
    }
}

fn parse_zweight(db: &Database, table: &Table, ctx: &mut MacCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(_) => return,
    };
    let col_ts = table.column_index(&["ZDATERECORDED"]);
    let col_weight = table.column_index(&["ZWEIGHT"]);
    let col_height = table.column_index(&["ZHEIGHT"]);
    let col_source = table.column_index(&["ZSOURCE"]);

    for row in rows {
        let field = |col: &str| format!("ZKDMWEIGHT[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));
        let recorded_at = match get(col_ts) {
            Some(v) => match ctx.decode_mac(v, &field("ZDATERECORDED"), MAC_EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("ZDATERECORDED"), e);
                    continue;
                }
            },
            None => continue,
        };
        let prov = ctx.prov(format!("ZKDMWEIGHT[{}]", row.rowid));
        ctx.case.weights.push(WeightRecord {
            recorded_at,
            weight_kg: get(col_weight).and_then(|v| v.as_f64()).unwrap_or(0.0),
            height_cm: get(col_height).and_then(|v| v.as_f64()).unwrap_or(0.0),
            source: get(col_source)
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string(),
            provenance: prov,
        });
    }
}

fn parse_zorders(db: &Database, table: &Table, ctx: &mut MacCtx<'_>) {
    let rows = match db.rows(table) {
        Ok(rows) => rows,
        Err(_) => return,
    };
    let col_ecg = table.column_index(&["ZECG"]);
    let col_result = table.column_index(&["ZRESULT"]);
    let col_requested = table.column_index(&["ZDATEREQUESTED"]);
    let col_completed = table.column_index(&["ZDATECOMPLETED"]);

    for row in rows {
        let field = |col: &str| format!("ZOVERREADERORDER[{}].{col}", row.rowid);
        let get = |idx: Option<usize>| idx.and_then(|i| row.values.get(i));
        let requested_at = match get(col_requested) {
            Some(v) => match ctx.decode_mac(v, &field("ZDATEREQUESTED"), MAC_EVENT_WINDOW) {
                Ok(ts) => ts,
                Err(e) => {
                    ctx.quarantine(v, &field("ZDATEREQUESTED"), e);
                    continue;
                }
            },
            None => continue,
        };
        let completed_at = match get(col_completed) {
            Some(SqlValue::Null) | None => None,
            Some(v) => match ctx.decode_mac(v, &field("ZDATECOMPLETED"), MAC_EVENT_WINDOW) {
                Ok(ts) => Some(ts),
                Err(e) => {
                    ctx.quarantine(v, &field("ZDATECOMPLETED"), e);
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
                    .at_field(field("ZDATECOMPLETED")),
                );
            }
        }
        let prov = ctx.prov(format!("ZOVERREADERORDER[{}]", row.rowid));
        ctx.case.orders.push(ReferralOrder {
            ecg_ref: EcgRef::Key(get(col_ecg).and_then(|v| v.as_i64()).unwrap_or(-1)),
            result: get(col_result).and_then(|v| v.as_str()).map(str::to_string),
            requested_at,
            completed_at,
            provenance: prov,
        });
    }

    // Z_PK joins are exact-match integers; anything else dangles.
    let mut dangling = Vec::new();
    for order in &ctx.case.orders {
        let found = match &order.ecg_ref {
            EcgRef::Key(k) => ctx.case.ecgs.iter().any(|e| e.db_key == Some(*k)),
            EcgRef::Text(t) => ctx.case.ecgs.iter().any(|e| &e.uuid == t),
        };
        if !found {
            dangling.push((order.ecg_ref.to_string(), order.provenance.clone()));
        }
    }
    for (reference, prov) in dangling {
        ctx.case.warn(
            CaseWarning::new(
                WarningCode::DanglingOrderRef,
                format!("order references unknown ZECG key `{reference}`"),
            )
            .at_path(prov.item)
            .at_field(prov.field),
        );
    }
}

// ---------------------------------------------------------------------------
// Preferences plist
// ---------------------------------------------------------------------------

fn parse_prefs_plist(layout: &IosAppLayout, case: &mut CaseFile) {
    let rel = layout.prefs_plist();
    let abs = layout.abs(&rel);
    if !abs.is_file() {
        return;
    }
    let rel_str = normalize_rel_path(&rel).unwrap_or_default();
    let bytes = match std::fs::read(&abs) {
        Ok(b) => b,
        Err(e) => {
            case.warn(
                CaseWarning::new(WarningCode::UnreadableFile, e.to_string()).at_path(rel_str),
            );
            return;
        }
    };
    let value = match propertylist::parse_plist(&bytes) {
        Ok(v) => v,
        Err(e) => {
            // Raw bytes stay preserved as an evidence item either way.
            case.warn(
                CaseWarning::new(WarningCode::MalformedPlist, e.to_string()).at_path(rel_str),
            );
            return;
        }
    };
    let dict = match value.as_dict() {
        Some(d) => d.clone(),
        None => {
            case.warn(
                CaseWarning::new(
                    WarningCode::MalformedPlist,
                    "top-level plist object is not a dictionary",
                )
                .at_path(rel_str),
            );
            return;
        }
    };

    let get_str = |key: &str| {
        dict.get(key)
            .and_then(PlistValue::as_str)
            .map(str::to_string)
    };
    let first = get_str("first_name");
    let last = get_str("last_name");
    let email = get_str("email");
    let dob = dict
        .get("dob")
        .and_then(PlistValue::as_date)
        .map(|d| plist_date_ts(d, "plist:dob"));

    if let (Some(first_name), Some(last_name), Some(email), Some(dob)) = (first, last, email, dob) {
        let gender = dict
            .get("gender")
            .and_then(PlistValue::as_i64)
            .and_then(|code| {
                let g = Gender::from_code(code);
                if g.is_none() {
                    case.warn(
                        CaseWarning::new(
                            WarningCode::BadBooleanCode,
                            format!("plist gender code {code} outside {{0,1}}"),
                        )
                        .at_path(rel_str.clone())
                        .at_field("gender"),
                    );
                }
                g
            });
        let medical_conditions = match dict.get("medical_conditions") {
            Some(PlistValue::Array(items)) => items
                .iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect(),
            _ => Vec::new(),
        };
        case.profile = Some(PatientProfile {
            first_name,
            last_name,
            dob,
            height_cm: dict.get("height_cm").and_then(PlistValue::as_f64),
            weight_kg: None,
            gender,
            smoker: None,
            email,
            country: None,
            medical_conditions,
            source: ProvenanceRef::new(rel_str.clone(), "dict"),
        });
    } else {
        let mut fields = BTreeMap::new();
        for (key, value) in &dict {
            fields.insert(key.clone(), value.render());
        }
        if !fields.is_empty() {
            case.profile_fragments.push(ProfileFragment {
                source: ProvenanceRef::new(rel_str.clone(), "dict"),
                fields,
            });
        }
    }

    case.app_metadata.app_version = get_str("app_version");
    case.app_metadata.first_used_at = dict
        .get("first_used_at")
        .and_then(PlistValue::as_date)
        .map(|d| plist_date_ts(d, "plist:first_used_at"));
    case.app_metadata.profile_updated_at = dict
        .get("profile_updated_at")
        .and_then(PlistValue::as_date)
        .map(|d| plist_date_ts(d, "plist:profile_updated_at"));

    const KNOWN: [&str; 9] = [
        "first_name",
        "last_name",
        "gender",
        "dob",
        "height_cm",
        "email",
        "medical_conditions",
        "app_version",
        "first_used_at",
    ];
    for (key, value) in &dict {
        if key != "profile_updated_at" && !KNOWN.contains(&key.as_str()) {
            case.app_metadata
                .opaque_keys
                .insert(format!("{PREFS_PLIST}:{key}"), value.render());
        }
    }
}

/// A plist date is CFAbsoluteTime under the hood (the XML form is just its
/// text rendering), so both encodings yield the same stored representation.
fn plist_date_ts(date: DateTime<Utc>, field: &str) -> ForensicTimestamp {
    let mac_seconds =
        (date.timestamp_millis() - MAC_ABSOLUTE_UNIX_OFFSET_SECS * 1000) as f64 / 1000.0;
    ForensicTimestamp::new(
        RawTimestamp::Real(mac_seconds),
        TimestampEncoding::MacAbsoluteSeconds,
        None,
        field,
    )
    .expect("finite Mac Absolute value always normalizes")
}

// ---------------------------------------------------------------------------
// Media scan
// ---------------------------------------------------------------------------

fn scan_media(layout: &IosAppLayout, case: &mut CaseFile) -> Result<(), ExtractError> {
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

    let documents = layout.documents_dir();
    let ecgfiles = layout.ecgfiles_dir();
    let db_path = layout.db_path();
    let prefs = layout.prefs_plist();

    let mut atc_by_uuid: AtcIndex = HashMap::new();
    let mut audio_files: Vec<(String, String)> = Vec::new();

    for rel in files {
        let ext = rel
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let category = if rel.starts_with(&ecgfiles) && ext == "atc" {
            EvidenceCategory::AtcEcg
        } else if rel.parent() == Some(documents.as_path()) && ext == "m4a" {
            EvidenceCategory::AudioNote
        } else if rel == db_path || is_db_side_file(&rel) {
            EvidenceCategory::Database
        } else if rel == prefs || ext == "plist" {
            EvidenceCategory::Plist
        } else {
            EvidenceCategory::Unknown
        };

        let item = match EvidenceItem::from_file(&layout.dump_root, &rel, category, Platform::Ios) {
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

/// Journal/WAL companions of the main database are evidence too, never replayed.
fn is_db_side_file(rel: &Path) -> bool {
    rel.file_name()
        .map(|n| {
            let name = n.to_string_lossy();
            name.starts_with(DB_FILE)
        })
        .unwrap_or(false)
}

fn link_atc_files(atc_by_uuid: &AtcIndex, case: &mut CaseFile) {
    let mut uuids: Vec<&String> = atc_by_uuid.keys().collect();
    uuids.sort();
    for uuid in uuids {
        let files = &atc_by_uuid[uuid];
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

        // Match by the row's ZFILENAME first, then by header UUID.
        let row_idx = case.ecgs.iter().position(|e| {
            (!e.atc_filename.is_empty()
                && files
                    .iter()
                    .any(|f| f.rel.ends_with(&format!("/{}", e.atc_filename))))
                || e.uuid == *uuid
        });
        match row_idx {
            Some(idx) => {
                let (row_ms, row_uuid, row_offset_known) = {
                    let ecg = &case.ecgs[idx];
                    (
                        ecg.recorded_at.utc_millis(),
                        ecg.uuid.clone(),
                        ecg.recorded_at.offset_seconds.is_some(),
                    )
                };
                // Header identity must agree with the database linkage.
                if row_uuid != *uuid {
                    case.warn(
                        CaseWarning::new(
                            WarningCode::AtcUuidMismatch,
                            format!("header UUID {uuid} disagrees with database ZUUID {row_uuid}"),
                        )
                        .at_path(files[0].rel.clone()),
                    );
                }
                let mut adopt: Option<i32> = None;
                for f in files {
                    if let Some((header_ms, header_offset)) = f.header {
                        if (header_ms - row_ms).abs() > CLOCK_SKEW_TOLERANCE_MS {
                            let skew = header_ms - row_ms;
                            case.warn(
                                CaseWarning::new(
                                    WarningCode::ClockSkew,
                                    format!(
                                        "header clock differs from database by {skew} ms for {uuid}"
                                    ),
                                )
                                .at_path(f.rel.clone()),
                            );
                        } else if adopt.is_none() {
                            adopt = header_offset;
                        }
                    }
                }
                if !row_offset_known {
                    if let Some(offset) = adopt {
                        let ecg = &mut case.ecgs[idx];
                        ecg.recorded_at = ecg.recorded_at.clone().with_offset(Some(offset));
                    }
                }
            }
            None => {
                for f in files {
                    case.warn(
                        CaseWarning::new(
                            WarningCode::AtcOrphan,
                            format!("recording file for {uuid} matches no ZECG row"),
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
                            format!("audio present for {stem} but ZHAS_AUDIO_DESCRIPTION is 0"),
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
                    Some(uuid) => log::debug!("audio {rel} matched {uuid} by substring rule"),
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
                format!("row {uuid} claims an audio note but no file was found"),
            )
            .at_path(prov.item)
            .at_field(prov.field),
        );
    }
}
