//! The read path must agree with databases produced by a real SQLite writer
//! it shares no code with.

use kardiex_core::sqlite::{Database, SqlValue, SqliteError};
use rusqlite::Connection;
use tempfile::TempDir;

fn temp_db(build: impl FnOnce(&Connection)) -> (TempDir, std::path::PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("test.db");
    let conn = Connection::open(&path).unwrap();
    build(&conn);
    drop(conn);
    (dir, path)
}

#[test]
fn all_value_types_decode() {
    let (_dir, path) = temp_db(|conn| {
        conn.execute_batch("CREATE TABLE vals (i INTEGER, r REAL, t TEXT, b BLOB, n INTEGER);")
            .unwrap();
        conn.execute(
            "INSERT INTO vals VALUES (?1, ?2, ?3, ?4, NULL)",
            rusqlite::params![42i64, 182.88f64, "héllo ♥", vec![0xDEu8, 0xAD, 0xBE, 0xEF]],
        )
        .unwrap();
        conn.execute(
            "INSERT INTO vals VALUES (?1, ?2, ?3, ?4, 0)",
            rusqlite::params![i64::MIN, -0.5f64, "", Vec::<u8>::new()],
        )
        .unwrap();
        conn.execute(
            "INSERT INTO vals VALUES (?1, 1e300, 'x', X'00', 1)",
            rusqlite::params![i64::MAX],
        )
        .unwrap();
    });

    let db = Database::open(&path).unwrap();
    let table = db.table("vals").unwrap().unwrap();
    assert_eq!(table.columns, vec!["i", "r", "t", "b", "n"]);
    let rows = db.rows(&table).unwrap();
    assert_eq!(rows.len(), 3);

    assert_eq!(rows[0].values[0], SqlValue::Integer(42));
    assert_eq!(rows[0].values[1], SqlValue::Real(182.88));
    assert_eq!(rows[0].values[2], SqlValue::Text("héllo ♥".into()));
    assert_eq!(
        rows[0].values[3],
        SqlValue::Blob(vec![0xDE, 0xAD, 0xBE, 0xEF])
    );
    assert_eq!(rows[0].values[4], SqlValue::Null);

    assert_eq!(rows[1].values[0], SqlValue::Integer(i64::MIN));
    assert_eq!(rows[1].values[2], SqlValue::Text("".into()));
    assert_eq!(rows[1].values[3], SqlValue::Blob(vec![]));
    // Serial types 8/9 (literal 0 and 1).
    assert_eq!(rows[1].values[4], SqlValue::Integer(0));
    assert_eq!(rows[2].values[4], SqlValue::Integer(1));
    assert_eq!(rows[2].values[0], SqlValue::Integer(i64::MAX));
    assert_eq!(rows[2].values[1], SqlValue::Real(1e300));
}

#[test]
fn quoted_column_with_space_survives() {
    let (_dir, path) = temp_db(|conn| {
        conn.execute_batch(
            r#"CREATE TABLE ECG (uuid TEXT, "data Recorded" INTEGER);
               INSERT INTO ECG VALUES ('abc', 1527191759115);"#,
        )
        .unwrap();
    });
    let db = Database::open(&path).unwrap();
    let table = db.table("ecg").unwrap().unwrap();
    assert_eq!(table.columns[1], "data Recorded");
    let idx = table
        .column_index(&["data recorded", "datarecorded", "data_recorded"])
        .unwrap();
    let rows = db.rows(&table).unwrap();
    assert_eq!(rows[0].values[idx], SqlValue::Integer(1_527_191_759_115));
}

#[test]
fn integer_primary_key_reads_from_rowid() {
    let (_dir, path) = temp_db(|conn| {
        conn.execute_batch(
            "CREATE TABLE ZECG (Z_PK INTEGER PRIMARY KEY, ZUUID TEXT);
             INSERT INTO ZECG (Z_PK, ZUUID) VALUES (7, 'seven');
             INSERT INTO ZECG (ZUUID) VALUES ('eight');",
        )
        .unwrap();
    });
    let db = Database::open(&path).unwrap();
    let table = db.table("ZECG").unwrap().unwrap();
    assert_eq!(table.ipk, Some(0));
    let rows = db.rows(&table).unwrap();
    assert_eq!(rows[0].values[0], SqlValue::Integer(7));
    assert_eq!(rows[1].values[0], SqlValue::Integer(8));
}

#[test]
fn overflow_payloads_reassemble() {
    // A text value much larger than one 4096-byte page forces an overflow
    // chain of several pages.
    let big: String = "0123456789abcdef".repeat(4096); // 64 KiB
    let big_clone = big.clone();
    let (_dir, path) = temp_db(move |conn| {
        conn.execute_batch("CREATE TABLE blobs (body TEXT);")
            .unwrap();
        conn.execute("INSERT INTO blobs VALUES (?1)", [big_clone])
            .unwrap();
    });
    let db = Database::open(&path).unwrap();
    let table = db.table("blobs").unwrap().unwrap();
    let rows = db.rows(&table).unwrap();
    assert_eq!(rows[0].values[0], SqlValue::Text(big));
}

#[test]
fn multi_page_table_walks_interior_pages() {
    let (_dir, path) = temp_db(|conn| {
        conn.execute_batch("CREATE TABLE many (n INTEGER, t TEXT);")
            .unwrap();
        let mut stmt = conn.prepare("INSERT INTO many VALUES (?1, ?2)").unwrap();
        for i in 0..2000i64 {
            stmt.execute(rusqlite::params![i, format!("row number {i}")])
                .unwrap();
        }
    });
    let db = Database::open(&path).unwrap();
    let table = db.table("many").unwrap().unwrap();
    let rows = db.rows(&table).unwrap();
    assert_eq!(rows.len(), 2000);
    // Rowid order, values intact at both ends.
    assert_eq!(rows[0].values[0], SqlValue::Integer(0));
    assert_eq!(rows[1999].values[0], SqlValue::Integer(1999));
    assert_eq!(
        rows[1234].values[1],
        SqlValue::Text("row number 1234".into())
    );
    assert_eq!(db.row_count(&table).unwrap(), 2000);
}

#[test]
fn thirteen_table_census() {
    let (_dir, path) = temp_db(|conn| {
        for i in 0..13 {
            conn.execute_batch(&format!("CREATE TABLE t{i:02} (x INTEGER);"))
                .unwrap();
        }
    });
    let db = Database::open(&path).unwrap();
    let tables = db.tables().unwrap();
    assert_eq!(tables.len(), 13);
    for t in &tables {
        assert_eq!(db.row_count(t).unwrap(), 0);
    }
}

#[test]
fn empty_and_missing_tables() {
    let (_dir, path) = temp_db(|conn| {
        conn.execute_batch("CREATE TABLE only (x INTEGER);")
            .unwrap();
    });
    let db = Database::open(&path).unwrap();
    assert!(db.table("only").unwrap().is_some());
    assert!(db.table("absent").unwrap().is_none());
    let t = db.table("only").unwrap().unwrap();
    assert!(db.rows(&t).unwrap().is_empty());
}

#[test]
fn truncated_and_corrupt_inputs_error_without_panic() {
    let (_dir, path) = temp_db(|conn| {
        conn.execute_batch("CREATE TABLE t (x TEXT); INSERT INTO t VALUES ('payload');")
            .unwrap();
    });
    let bytes = std::fs::read(&path).unwrap();

    // Header-only truncation.
    assert!(matches!(
        Database::from_bytes(bytes[..50].to_vec()),
        Err(SqliteError::NotADatabase(_))
    ));

    // Cut mid-page: either an error or a partial read, never a panic.
    if let Ok(db) = Database::from_bytes(bytes[..bytes.len() / 2].to_vec()) {
        if let Ok(tables) = db.tables() {
            for t in &tables {
                let _ = db.rows(t);
            }
        }
    }

    // Bit flips through the whole file must never panic.
    for i in (0..bytes.len()).step_by(37) {
        let mut corrupted = bytes.clone();
        corrupted[i] ^= 0xFF;
        if let Ok(db) = Database::from_bytes(corrupted) {
            if let Ok(tables) = db.tables() {
                for t in &tables {
                    let _ = db.rows(t);
                }
            }
        }
    }
}
