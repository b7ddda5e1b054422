use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ScaleBarError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LengthUnit {
    #[serde(rename = "Å")]
    Angstrom,
    #[serde(rename = "nm")]
    Nanometer,
    #[serde(rename = "µm")]
    Micrometer,
    #[serde(rename = "mm")]
    Millimeter,
    #[serde(rename = "cm")]
    Centimeter,
}

impl LengthUnit {
    pub const ALL: [LengthUnit; 5] = [Self::Angstrom, Self::Nanometer, Self::Micrometer, Self::Millimeter, Self::Centimeter];

    pub fn in_nm(self) -> f64 {
        match self {
            Self::Angstrom => 0.1,
            Self::Nanometer => 1.0,
            Self::Micrometer => 1e3,
            Self::Millimeter => 1e6,
            Self::Centimeter => 1e7,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Angstrom => "Å",
            Self::Nanometer => "nm",
            Self::Micrometer => "µm",
            Self::Millimeter => "mm",
            Self::Centimeter => "cm",
        }
    }

    fn from_token(t: &str) -> Option<Self> {
        Some(match t {
            "Å" | "A°" => Self::Angstrom,
            "nm" => Self::Nanometer,
            "um" | "µm" | "μm" => Self::Micrometer,
            "mm" => Self::Millimeter,
            "cm" => Self::Centimeter,
            _ => return None,
        })
    }
}

impl fmt::Display for LengthUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for LengthUnit {
    type Err = ScaleBarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_token(s.trim()).ok_or_else(|| ScaleBarError::UnknownUnit(s.to_string()))
    }
}

fn label_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // the micro sign (U+00B5) and Greek mu (U+03BC) are both accepted
    RE.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?|\.\d+)\s*(Å|A°|nm|um|µm|μm|mm|cm)").unwrap())
}

/// Extracts the first `<number> <unit>` pair from a label string.
pub fn parse_label_text(s: &str) -> Result<(f64, LengthUnit), ScaleBarError> {
    let caps = label_regex().captures(s).ok_or(ScaleBarError::NoMatch)?;
    let value: f64 = caps[1].parse().map_err(|_| ScaleBarError::NoMatch)?;
    let unit = LengthUnit::from_token(&caps[2]).ok_or(ScaleBarError::NoMatch)?;
    Ok((value, unit))
}
