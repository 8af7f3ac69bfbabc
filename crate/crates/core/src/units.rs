//! Quantities with explicit units, as written in scenario files.
//!
//! A quantity is `"<number> <unit>"`, e.g. `"100 kHz"`, `"-174 dBm/Hz"`,
//! `"200 kbit"`. Parsing returns the linear SI value: seconds, hertz, watts,
//! joules, bits, a linear ratio, or W/Hz. Log-scale units are converted here
//! and nowhere else.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Frequency,
    Power,
    Energy,
    Data,
    /// Dimensionless power ratio: `dB` or a bare/`linear` number.
    Gain,
    PowerDensity,
}

impl Dimension {
    /// Unit used when echoing a value back in linear form.
    pub fn si_unit(self) -> &'static str {
        match self {
            Dimension::Time => "s",
            Dimension::Frequency => "Hz",
            Dimension::Power => "W",
            Dimension::Energy => "J",
            Dimension::Data => "bit",
            Dimension::Gain => "linear",
            Dimension::PowerDensity => "W/Hz",
        }
    }
}

enum Scale {
    Linear(f64),
    /// `10^(x/10) * reference`
    Decibel(f64),
}

fn lookup(dim: Dimension, unit: &str) -> Option<Scale> {
    use Dimension::*;
    use Scale::*;
    let scale = match (dim, unit) {
        (Time, "s") => Linear(1.0),
        (Time, "ms") => Linear(1e-3),
        (Time, "us") => Linear(1e-6),
        (Frequency, "Hz") => Linear(1.0),
        (Frequency, "kHz" | "KHz") => Linear(1e3),
        (Frequency, "MHz") => Linear(1e6),
        (Frequency, "GHz") => Linear(1e9),
        (Power, "W") => Linear(1.0),
        (Power, "mW") => Linear(1e-3),
        (Power, "uW") => Linear(1e-6),
        (Power, "dBW") => Decibel(1.0),
        (Power, "dBm") => Decibel(1e-3),
        (Energy, "J") => Linear(1.0),
        (Energy, "mJ") => Linear(1e-3),
        (Energy, "uJ") => Linear(1e-6),
        (Data, "bit" | "bits") => Linear(1.0),
        (Data, "kbit" | "Kbit" | "kbits" | "Kbits") => Linear(1e3),
        (Data, "Mbit" | "Mbits") => Linear(1e6),
        (Data, "B" | "byte" | "bytes") => Linear(8.0),
        (Data, "kB") => Linear(8e3),
        (Gain, "" | "linear") => Linear(1.0),
        (Gain, "dB") => Decibel(1.0),
        (PowerDensity, "W/Hz") => Linear(1.0),
        (PowerDensity, "mW/Hz") => Linear(1e-3),
        (PowerDensity, "dBW/Hz") => Decibel(1.0),
        (PowerDensity, "dBm/Hz") => Decibel(1e-3),
        _ => return None,
    };
    Some(scale)
}

pub fn parse(input: &str, dim: Dimension) -> Result<f64> {
    let err = |reason: String| Error::Quantity {
        input: input.to_string(),
        reason,
    };
    let trimmed = input.trim();
    let split = trimmed
        .find(|c: char| c.is_whitespace())
        .unwrap_or(trimmed.len());
    let (number, unit) = trimmed.split_at(split);
    let number: f64 = number
        .parse()
        .map_err(|_| err(format!("`{number}` is not a number")))?;
    if !number.is_finite() {
        return Err(err("value is not finite".into()));
    }
    let unit = unit.trim();
    let value = match lookup(dim, unit) {
        Some(Scale::Linear(k)) => number * k,
        Some(Scale::Decibel(reference)) => 10f64.powf(number / 10.0) * reference,
        None => return Err(err(format!("unit `{unit}` is not a {dim:?} unit"))),
    };
    Ok(value)
}

/// Linear SI rendering that parses back to the identical `f64`.
pub fn format_si(value: f64, dim: Dimension) -> String {
    format!("{value:?} {}", dim.si_unit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_quantities() {
        assert_eq!(parse("200 Kbits", Dimension::Data).unwrap(), 200e3);
        assert_eq!(parse("100 KHz", Dimension::Frequency).unwrap(), 100e3);
        assert_eq!(parse("10 mW", Dimension::Power).unwrap(), 0.01);
        assert_eq!(parse("1 s", Dimension::Time).unwrap(), 1.0);
        let g = parse("-120 dB", Dimension::Gain).unwrap();
        assert!((g / 1e-12 - 1.0).abs() < 1e-12);
        let n0 = parse("-174 dBm/Hz", Dimension::PowerDensity).unwrap();
        assert!((n0 / 10f64.powf(-20.4) - 1.0).abs() < 1e-12);
        assert!((parse("10 dBm", Dimension::Power).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(parse("5 mJ", Dimension::Energy).unwrap(), 5e-3);
        assert_eq!(parse("0.25", Dimension::Gain).unwrap(), 0.25);
    }

    #[test]
    fn rejects_wrong_units() {
        assert!(parse("10 mW", Dimension::Time).is_err());
        assert!(parse("ten s", Dimension::Time).is_err());
        assert!(parse("1", Dimension::Time).is_err());
        assert!(parse("inf s", Dimension::Time).is_err());
    }

    proptest::proptest! {
        #[test]
        fn echo_round_trips(v in 1e-30f64..1e12) {
            for dim in [Dimension::Time, Dimension::Power, Dimension::PowerDensity, Dimension::Gain] {
                proptest::prop_assert_eq!(parse(&format_si(v, dim), dim).unwrap(), v);
            }
        }
    }
}
