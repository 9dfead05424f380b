//! Imperial/metric conversions.
//!
//! The Kardia app accepts height and weight in imperial units but stores
//! metric values, so the consistency checks need the exact conversion
//! constants to recognise round imperial inputs behind stored metric values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact by definition: 1 lb = 0.45359237 kg.
pub const KG_PER_LB: f64 = 0.453_592_37;
/// Exact by definition: 1 ft = 30.48 cm.
pub const CM_PER_FT: f64 = 30.48;
/// Exact by definition: 1 in = 2.54 cm.
pub const CM_PER_IN: f64 = 2.54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Pounds,
    Kilograms,
    Feet,
    Inches,
    Centimeters,
}

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("no documented conversion from {0:?} to {1:?}")]
    UnsupportedUnitPair(Unit, Unit),
    #[error("negative value {0} cannot be converted")]
    NegativeValue(f64),
}

/// Convert between the documented unit pairs: lb↔kg, ft↔cm, in↔cm.
pub fn convert_units(value: f64, from: Unit, to: Unit) -> Result<f64, UnitError> {
    if value < 0.0 {
        return Err(UnitError::NegativeValue(value));
    }
    let converted = match (from, to) {
        (Unit::Pounds, Unit::Kilograms) => value * KG_PER_LB,
        (Unit::Kilograms, Unit::Pounds) => value / KG_PER_LB,
        (Unit::Feet, Unit::Centimeters) => value * CM_PER_FT,
        (Unit::Centimeters, Unit::Feet) => value / CM_PER_FT,
        (Unit::Inches, Unit::Centimeters) => value * CM_PER_IN,
        (Unit::Centimeters, Unit::Inches) => value / CM_PER_IN,
        (from, to) => return Err(UnitError::UnsupportedUnitPair(from, to)),
    };
    Ok(converted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_converts_to_zero() {
        assert_eq!(convert_units(0.0, Unit::Pounds, Unit::Kilograms), Ok(0.0));
    }

    #[test]
    fn experiment_weight_150_lb() {
        // 150 × 0.45359237, the value observed stored in the databases.
        let kg = convert_units(150.0, Unit::Pounds, Unit::Kilograms).unwrap();
        assert!((kg - 68.038_855_5).abs() < 1e-9, "got {kg}");
    }

    #[test]
    fn experiment_height_6_ft() {
        let cm = convert_units(6.0, Unit::Feet, Unit::Centimeters).unwrap();
        assert!((cm - 182.88).abs() < 1e-9, "got {cm}");
    }

    #[test]
    fn inches_to_centimeters() {
        let cm = convert_units(72.0, Unit::Inches, Unit::Centimeters).unwrap();
        assert!((cm - 182.88).abs() < 1e-9);
    }

    #[test]
    fn unsupported_pair_is_rejected() {
        assert_eq!(
            convert_units(1.0, Unit::Pounds, Unit::Centimeters),
            Err(UnitError::UnsupportedUnitPair(
                Unit::Pounds,
                Unit::Centimeters
            ))
        );
        assert_eq!(
            convert_units(1.0, Unit::Kilograms, Unit::Kilograms),
            Err(UnitError::UnsupportedUnitPair(
                Unit::Kilograms,
                Unit::Kilograms
            ))
        );
    }

    #[test]
    fn negative_value_is_rejected() {
        assert_eq!(
            convert_units(-1.0, Unit::Feet, Unit::Centimeters),
            Err(UnitError::NegativeValue(-1.0))
        );
    }
}
