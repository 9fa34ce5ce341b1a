//! Tolerant line-oriented scan of smali code for API call references.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// One API method reference, canonically `Lpkg/Cls;->method`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ApiCall {
    class_descriptor: String,
    method_name: String,
}

impl ApiCall {
    pub fn new(class_descriptor: impl Into<String>, method_name: impl Into<String>) -> Result<Self> {
        let class_descriptor = class_descriptor.into();
        let method_name = method_name.into();
        let class_ok = class_descriptor.starts_with('L')
            && class_descriptor.ends_with(';')
            && class_descriptor.len() > 2
            && !class_descriptor.contains(char::is_whitespace);
        let method_ok = !method_name.is_empty() && !method_name.contains(char::is_whitespace);
        if !class_ok || !method_ok {
            return Err(Error::InvalidInput(format!(
                "bad api call {class_descriptor}->{method_name}"
            )));
        }
        Ok(ApiCall {
            class_descriptor,
            method_name,
        })
    }

    pub fn class_descriptor(&self) -> &str {
        &self.class_descriptor
    }

    pub fn method_name(&self) -> &str {
        &self.method_name
    }

    pub fn canonical(&self) -> String {
        format!("{}->{}", self.class_descriptor, self.method_name)
    }

    /// Parses the canonical `Lpkg/Cls;->method` form used in dictionary files.
    pub fn parse_canonical(s: &str) -> Result<Self> {
        let (class, method) = s
            .split_once("->")
            .ok_or_else(|| Error::InvalidInput(format!("bad api call {s:?}")))?;
        ApiCall::new(class, method)
    }
}

impl fmt::Display for ApiCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.class_descriptor, self.method_name)
    }
}

/// Result of scanning smali text: the distinct calls plus the number of
/// `invoke-` lines whose reference did not match the grammar.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SmaliScan {
    pub calls: BTreeSet<ApiCall>,
    pub warnings: usize,
}

impl SmaliScan {
    pub fn merge(&mut self, other: SmaliScan) {
        self.calls.extend(other.calls);
        self.warnings += other.warnings;
    }
}

/// Collects the target of every `invoke-*` instruction (virtual, direct,
/// static, interface, super, and their `/range` forms all start with
/// `invoke-`). Duplicates collapse; malformed invoke lines are counted, not
/// fatal.
pub fn parse_smali_calls(smali_text: &str) -> SmaliScan {
    let mut scan = SmaliScan::default();
    for line in smali_text.lines() {
        let line = line.trim();
        let Some(opcode) = line.split_whitespace().next() else {
            continue;
        };
        if !opcode.starts_with("invoke-") {
            continue;
        }
        match parse_invoke_line(line) {
            Some(call) => {
                scan.calls.insert(call);
            }
            None => scan.warnings += 1,
        }
    }
    scan
}

/// `invoke-kind {regs}, Lcls;->method(args)ret` -> the called method.
fn parse_invoke_line(line: &str) -> Option<ApiCall> {
    // The method reference follows the last comma (register lists hold the
    // earlier ones).
    let comma = line.rfind(',')?;
    let reference = line[comma + 1..].trim();
    let semi = reference.find(';')?;
    let class_descriptor = &reference[..=semi];
    let rest = reference[semi + 1..].strip_prefix("->")?;
    let paren = rest.find('(')?;
    let method_name = &rest[..paren];
    if !rest[paren..].contains(')') {
        return None;
    }
    ApiCall::new(class_descriptor, method_name).ok()
}
