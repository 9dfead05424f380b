//! The event ordering must be a total order: deterministic under input
//! shuffling and transitive by construction of the sort key.

use kardiex_core::model::{BloodPressureRecord, CaseFile, Platform, ProvenanceRef};
use kardiex_core::timeline::build_timeline;
use kardiex_core::timestamp::ForensicTimestamp;
use proptest::prelude::*;

fn bp(ms: i64, row: usize) -> BloodPressureRecord {
    BloodPressureRecord {
        recorded_at: ForensicTimestamp::from_epoch_millis(ms, None, "timestamp").unwrap(),
        deleted: false,
        systolic: 120,
        diastolic: 80,
        heart_rate_bpm: None,
        source: None,
        notes: None,
        provenance: ProvenanceRef::new("db", format!("bp_records[{row}]")),
    }
}

proptest! {
    #[test]
    fn ordering_is_invariant_under_input_permutation(
        instants in proptest::collection::vec(0i64..4_000_000_000_000, 1..40),
        rotation in 0usize..40,
    ) {
        let mut case_a = CaseFile::new(Platform::Android, "data/data/app");
        for (row, ms) in instants.iter().enumerate() {
            case_a.bps.push(bp(*ms, row));
        }

        // Same records, rotated insertion order.
        let mut case_b = CaseFile::new(Platform::Android, "data/data/app");
        let n = instants.len();
        for i in 0..n {
            let row = (i + rotation) % n;
            case_b.bps.push(bp(instants[row], row));
        }

        let (events_a, _) = build_timeline(std::slice::from_ref(&case_a));
        let (events_b, _) = build_timeline(std::slice::from_ref(&case_b));
        prop_assert_eq!(&events_a, &events_b);

        // Total order: strictly non-decreasing keys, all inputs present.
        prop_assert_eq!(events_a.len(), n);
        for pair in events_a.windows(2) {
            prop_assert!(pair[0].utc <= pair[1].utc);
            if pair[0].utc == pair[1].utc {
                prop_assert!(pair[0].provenance <= pair[1].provenance);
            }
        }
    }
}
