use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ImageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Smile,
    Uncertainty,
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Smile => "smile",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Random => "random",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "smile" => Ok(Strategy::Smile),
            "uncertainty" => Ok(Strategy::Uncertainty),
            "random" => Ok(Strategy::Random),
            other => Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        }
    }
}

/// One selected image and why it was chosen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub id: ImageId,
    /// SMILE: source cluster.
    pub cluster: Option<usize>,
    /// SMILE: the design point this image was snapped to.
    pub design_point: Option<[f64; 2]>,
    /// Uncertainty: image-level score.
    pub score: Option<f64>,
    /// Random: position in the draw sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw: Option<usize>,
}

/// Ordered selection for one active-learning round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub round: usize,
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    pub picks: Vec<Pick>,
}

impl SelectionPlan {
    pub fn ids(&self) -> Vec<ImageId> {
        self.picks.iter().map(|p| p.id.clone()).collect()
    }
}
