//! Feature tokens: the namespaced string features extracted from an app.
//!
//! A token is a `(category, value)` pair rendered canonically as
//! `<tag>::<value>`, e.g. `perm::android.permission.SEND_SMS`. The canonical
//! rendering is the on-disk form (vocabulary files) and also defines the
//! ordering used everywhere: tokens sort by `(tag, value)`, which coincides
//! with lexicographic order of the rendered strings because no category tag
//! is a prefix of another.

use std::cmp::Ordering;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The seven feature categories extracted from a decompiled app bundle.
///
/// Four come from the manifest (components, hardware features, requested
/// permissions, intent filters) and three from the smali code (restricted
/// API calls, suspicious API calls, permissions inferred from API usage).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureCategory {
    Component,
    Hardware,
    Permission,
    IntentFilter,
    RestrictedApi,
    SuspiciousApi,
    UsedPermission,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 7] = [
        FeatureCategory::Component,
        FeatureCategory::Hardware,
        FeatureCategory::Permission,
        FeatureCategory::IntentFilter,
        FeatureCategory::RestrictedApi,
        FeatureCategory::SuspiciousApi,
        FeatureCategory::UsedPermission,
    ];

    /// Short namespace tag used in the canonical rendering.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureCategory::Component => "comp",
            FeatureCategory::Hardware => "hw",
            FeatureCategory::Permission => "perm",
            FeatureCategory::IntentFilter => "intent",
            FeatureCategory::RestrictedApi => "api_restr",
            FeatureCategory::SuspiciousApi => "api_susp",
            FeatureCategory::UsedPermission => "used_perm",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.tag() == tag)
    }

    pub(crate) fn as_u8(self) -> u8 {
        Self::ALL.iter().position(|c| *c == self).unwrap() as u8
    }

    pub(crate) fn from_u8(byte: u8) -> Option<Self> {
        Self::ALL.get(byte as usize).copied()
    }
}

impl fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One namespaced feature: a category plus a non-empty value with no
/// whitespace and no `::`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureToken {
    category: FeatureCategory,
    value: String,
}

/// Suffix appended to a restricted-API call value when the call's required
/// permissions are not all declared in the manifest. `#` cannot occur in a
/// dex member name, so the variant never collides with a plain call token.
pub const MISSING_PERM_SUFFIX: &str = "#noperm";

impl FeatureToken {
    pub fn new(category: FeatureCategory, value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() || value.contains(char::is_whitespace) || value.contains("::") {
            return Err(Error::InvalidToken(format!("{}::{}", category.tag(), value)));
        }
        Ok(FeatureToken { category, value })
    }

    /// Restricted-API usage token for `call` (canonical `Lcls;->method`).
    pub fn restricted(call: &str) -> Result<Self> {
        Self::new(FeatureCategory::RestrictedApi, call)
    }

    /// Restricted-API usage whose required permissions are missing from the
    /// manifest; a distinct token alongside the plain [`restricted`] one.
    ///
    /// [`restricted`]: FeatureToken::restricted
    pub fn restricted_missing_perm(call: &str) -> Result<Self> {
        Self::new(
            FeatureCategory::RestrictedApi,
            format!("{call}{MISSING_PERM_SUFFIX}"),
        )
    }

    pub fn category(&self) -> FeatureCategory {
        self.category
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    /// Canonical `<tag>::<value>` rendering.
    pub fn render(&self) -> String {
        format!("{}::{}", self.category.tag(), self.value)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (tag, value) = s
            .split_once("::")
            .ok_or_else(|| Error::InvalidToken(s.to_string()))?;
        let category =
            FeatureCategory::from_tag(tag).ok_or_else(|| Error::InvalidToken(s.to_string()))?;
        Self::new(category, value)
    }
}

impl fmt::Display for FeatureToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.category.tag(), self.value)
    }
}

impl PartialOrd for FeatureToken {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FeatureToken {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.category.tag(), &self.value).cmp(&(other.category.tag(), &other.value))
    }
}

impl Serialize for FeatureToken {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for FeatureToken {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FeatureToken::parse(&s).map_err(D::Error::custom)
    }
}
