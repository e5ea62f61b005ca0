use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 5;

/// Five-level PHQ-8 severity, ordered from least to most severe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityLabel {
    Healthy,
    Mild,
    Moderate,
    ModeratelySevere,
    Severe,
}

/// Two-level view: significant symptoms iff PHQ-8 > 10.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    NoSignificant,
    Significant,
}

impl SeverityLabel {
    pub const ALL: [SeverityLabel; NUM_CLASSES] = [
        SeverityLabel::Healthy,
        SeverityLabel::Mild,
        SeverityLabel::Moderate,
        SeverityLabel::ModeratelySevere,
        SeverityLabel::Severe,
    ];

    /// Left-closed bins `[0,5) [5,10) [10,15) [15,20) [20,24]`.
    pub fn from_phq8(score: i64) -> Result<Self> {
        match score {
            0..=4 => Ok(SeverityLabel::Healthy),
            5..=9 => Ok(SeverityLabel::Mild),
            10..=14 => Ok(SeverityLabel::Moderate),
            15..=19 => Ok(SeverityLabel::ModeratelySevere),
            20..=24 => Ok(SeverityLabel::Severe),
            _ => Err(Error::OutOfRange {
                what: "PHQ-8 score",
                value: score,
                valid: "0..=24".into(),
            }),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::OutOfRange {
            what: "class index",
            value: i as i64,
            valid: format!("0..{NUM_CLASSES}"),
        })
    }

    /// Binary view of a class when the underlying score is unknown (model
    /// predictions): moderate and above count as significant.
    pub fn coarse_binary(self) -> BinaryLabel {
        if self >= SeverityLabel::Moderate {
            BinaryLabel::Significant
        } else {
            BinaryLabel::NoSignificant
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityLabel::Healthy => "healthy",
            SeverityLabel::Mild => "mild",
            SeverityLabel::Moderate => "moderate",
            SeverityLabel::ModeratelySevere => "moderately_severe",
            SeverityLabel::Severe => "severe",
        }
    }
}

impl fmt::Display for SeverityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl BinaryLabel {
    pub fn from_phq8(score: i64) -> Result<Self> {
        SeverityLabel::from_phq8(score)?;
        Ok(if score > 10 {
            BinaryLabel::Significant
        } else {
            BinaryLabel::NoSignificant
        })
    }
}

/// Severity class and binary view for a PHQ-8 score.
pub fn phq_to_label(score: i64) -> Result<(SeverityLabel, BinaryLabel)> {
    Ok((SeverityLabel::from_phq8(score)?, BinaryLabel::from_phq8(score)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scores() {
        assert_eq!(phq_to_label(0).unwrap().0, SeverityLabel::Healthy);
        assert_eq!(phq_to_label(22).unwrap().0, SeverityLabel::Severe);
        assert_eq!(phq_to_label(12).unwrap(), (SeverityLabel::Moderate, BinaryLabel::Significant));
        assert_eq!(phq_to_label(10).unwrap(), (SeverityLabel::Moderate, BinaryLabel::NoSignificant));
    }

    #[test]
    fn out_of_range_scores() {
        assert!(phq_to_label(-1).is_err());
        assert!(phq_to_label(25).is_err());
    }

    #[test]
    fn enumeration_is_monotone_and_consistent() {
        let mut prev = SeverityLabel::Healthy;
        for score in 0..=24 {
            let (class, binary) = phq_to_label(score).unwrap();
            assert!(class >= prev);
            prev = class;
            let expected = match class {
                SeverityLabel::Moderate => score > 10,
                SeverityLabel::ModeratelySevere | SeverityLabel::Severe => true,
                _ => false,
            };
            assert_eq!(binary == BinaryLabel::Significant, expected, "score {score}");
        }
    }
}
