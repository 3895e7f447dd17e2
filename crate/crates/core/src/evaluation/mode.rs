use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::factor_graph::GraphModes;

/// Estimator variant, one per experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodMode {
    /// Pseudorange and velocity factors only.
    NonCp,
    /// Adds inter-vehicle range factors.
    Mci,
    /// Adds range and plane factors.
    PcAided,
    /// Plane factors without range factors.
    PcAidedNoIr,
    /// As `PcAided` with RANSAC fault exclusion disabled.
    PcAidedNoFe,
}

impl MethodMode {
    pub const ALL: [MethodMode; 5] = [
        MethodMode::NonCp,
        MethodMode::Mci,
        MethodMode::PcAided,
        MethodMode::PcAidedNoIr,
        MethodMode::PcAidedNoFe,
    ];

    pub fn graph_modes(self) -> GraphModes {
        GraphModes {
            use_planes: self.uses_planes(),
            use_ranges: matches!(self, MethodMode::Mci | MethodMode::PcAided | MethodMode::PcAidedNoFe),
        }
    }

    pub fn uses_planes(self) -> bool {
        matches!(self, MethodMode::PcAided | MethodMode::PcAidedNoIr | MethodMode::PcAidedNoFe)
    }

    pub fn fault_exclusion(self) -> bool {
        !matches!(self, MethodMode::PcAidedNoFe)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodMode::NonCp => "non-cp",
            MethodMode::Mci => "mci",
            MethodMode::PcAided => "pc-aided",
            MethodMode::PcAidedNoIr => "pc-aided-no-ir",
            MethodMode::PcAidedNoFe => "pc-aided-no-fe",
        }
    }
}

impl fmt::Display for MethodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = MethodMode::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown mode {s:?}, expected one of {}", names.join(", "))
            })
    }
}
