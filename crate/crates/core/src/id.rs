use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque datum identifier. Ordering is plain string ordering, which is also
/// the tie-break order used by every ranking in the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatumId(String);

impl DatumId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DatumId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for DatumId {
    fn from(s: String) -> Self {
        Self(s)
    }
}
