use std::fmt;

use fsnt_core::flowdata::{ClassLabel, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::blocklist::BlockList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Allow,
    Block,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Allow => "ALLOW",
            Decision::Block => "BLOCK",
        })
    }
}

/// Probability mass on the attack classes.
pub fn attack_probability(proba: &[f64; NUM_CLASSES]) -> f64 {
    1.0 - proba[ClassLabel::Benign.id()]
}

/// Block when an attack class is predicted with attack probability at
/// least `threshold`, or when the source is on the blocklist.
pub fn decide(
    class: ClassLabel,
    proba: &[f64; NUM_CLASSES],
    source: Option<&str>,
    threshold: f64,
    blocklist: &BlockList,
) -> Decision {
    let listed = source.is_some_and(|s| blocklist.contains(s));
    if listed || (class.is_attack() && attack_probability(proba) >= threshold) {
        Decision::Block
    } else {
        Decision::Allow
    }
}
