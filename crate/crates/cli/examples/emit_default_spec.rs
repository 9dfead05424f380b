//! Print the built-in study-protocol ground truth as an editable TOML
//! document, as a starting point for custom fixtures:
//!
//! ```sh
//! cargo run -p kardiex-cli --example emit_default_spec > case.toml
//! kardiex gen-fixture out/ --spec case.toml
//! ```

use kardiex_core::fixture::CaseGroundTruth;

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    print!(
        "{}",
        CaseGroundTruth::default_scenario(seed).to_toml_string()
    );
}
