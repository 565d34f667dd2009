use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Query semantic type used for benchmark balancing and per-type reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticCategory {
    /// Environment change
    EC,
    /// Environment state
    ES,
    /// Human action, complex
    HAC,
    /// Human action, procedural
    HAP,
    /// Human action, simple
    HAS,
    /// Human pose
    HP,
    /// Object attribute
    OA,
    /// Object counting
    OC,
    /// Object existence, complex
    OEC,
    /// Object existence, simple
    OES,
    /// Object transition
    OT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryGroup {
    Human,
    Object,
    Environment,
}

impl SemanticCategory {
    pub const ALL: [SemanticCategory; 11] = [
        Self::EC,
        Self::ES,
        Self::HAC,
        Self::HAP,
        Self::HAS,
        Self::HP,
        Self::OA,
        Self::OC,
        Self::OEC,
        Self::OES,
        Self::OT,
    ];

    pub fn group(self) -> CategoryGroup {
        use SemanticCategory::*;
        match self {
            EC | ES => CategoryGroup::Environment,
            HAC | HAP | HAS | HP => CategoryGroup::Human,
            OA | OC | OEC | OES | OT => CategoryGroup::Object,
        }
    }

    pub fn code(self) -> &'static str {
        use SemanticCategory::*;
        match self {
            EC => "EC",
            ES => "ES",
            HAC => "HAC",
            HAP => "HAP",
            HAS => "HAS",
            HP => "HP",
            OA => "OA",
            OC => "OC",
            OEC => "OEC",
            OES => "OES",
            OT => "OT",
        }
    }

    pub fn description(self) -> &'static str {
        use SemanticCategory::*;
        match self {
            EC => "Environment Change",
            ES => "Environment State",
            HAC => "Human Action - Complex",
            HAP => "Human Action - Procedural",
            HAS => "Human Action - Simple",
            HP => "Human Pose",
            OA => "Object Attribute",
            OC => "Object Counting",
            OEC => "Object Existence - Complex",
            OES => "Object Existence - Simple",
            OT => "Object Transition",
        }
    }
}

impl fmt::Display for SemanticCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown semantic category code {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for SemanticCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let code = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.code() == code)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}
