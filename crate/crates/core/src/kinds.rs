use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The four controlled forensic perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Warp,
    Lighting,
    Blur,
    Color,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        ArtifactKind::Warp,
        ArtifactKind::Lighting,
        ArtifactKind::Blur,
        ArtifactKind::Color,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Warp => "warp",
            ArtifactKind::Lighting => "lighting",
            ArtifactKind::Blur => "blur",
            ArtifactKind::Color => "color",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown artifact kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Authenticity {
    Real,
    Fake,
}

impl Authenticity {
    pub fn is_fake(self) -> bool {
        self == Authenticity::Fake
    }
}

/// Serde adapter for `Option<ArtifactKind>` that spells the absent case `"none"`.
pub(crate) mod artifact_tag {
    use super::ArtifactKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<ArtifactKind>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.map_or("none", ArtifactKind::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ArtifactKind>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "none" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}
