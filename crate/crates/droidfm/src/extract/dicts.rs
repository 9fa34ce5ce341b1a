//! API dictionaries: the API-to-permission map and the restricted /
//! suspicious API lists. All three load from small text files so they can be
//! curated without rebuilding.
//!
//! Formats: the permission map is TSV, `Lcls;->method<TAB>PERM_A[,PERM_B...]`
//! per line; each API list holds one canonical call per line. `#` comments
//! and blank lines are allowed everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::extract::smali::ApiCall;

pub const PERM_MAP_FILE: &str = "api_permissions.tsv";
pub const RESTRICTED_FILE: &str = "restricted_apis.txt";
pub const SUSPICIOUS_FILE: &str = "suspicious_apis.txt";

/// Canonical call string -> required permission names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApiPermissionMap {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl ApiPermissionMap {
    pub fn from_entries<I, P>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ApiCall, P)>,
        P: IntoIterator<Item = String>,
    {
        let mut map = BTreeMap::new();
        for (call, perms) in entries {
            let perms: BTreeSet<String> = perms.into_iter().collect();
            if perms.is_empty() || perms.iter().any(|p| p.is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "api {} needs at least one non-empty permission",
                    call.canonical()
                )));
            }
            map.insert(call.canonical(), perms);
        }
        Ok(ApiPermissionMap { entries: map })
    }

    pub fn get(&self, canonical: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(canonical)
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.entries.contains_key(canonical)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg,
            };
            let (call, perms) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected <api><TAB><permissions>".into()))?;
            let call = ApiCall::parse_canonical(call.trim())
                .map_err(|e| parse_err(e.to_string()))?;
            let perms: BTreeSet<String> = perms
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect();
            if perms.is_empty() {
                return Err(parse_err("no permissions listed".into()));
            }
            entries.insert(call.canonical(), perms);
        }
        Ok(ApiPermissionMap { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        (|| -> std::io::Result<()> {
            for (call, perms) in &self.entries {
                let perms: Vec<&str> = perms.iter().map(String::as_str).collect();
                writeln!(out, "{call}\t{}", perms.join(","))?;
            }
            out.flush()
        })()
        .map_err(Error::io(path))
    }
}

/// The restricted and suspicious API call lists, as canonical call strings.
/// Every restricted API must be present in the permission map: being
/// restricted means having a required permission.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApiLists {
    restricted: BTreeSet<String>,
    suspicious: BTreeSet<String>,
}

impl ApiLists {
    pub fn new(
        restricted: BTreeSet<String>,
        suspicious: BTreeSet<String>,
        perm_map: &ApiPermissionMap,
    ) -> Result<Self> {
        for call in &restricted {
            if !perm_map.contains(call) {
                return Err(Error::InvalidInput(format!(
                    "restricted api {call} is missing from the permission map"
                )));
            }
        }
        Ok(ApiLists {
            restricted,
            suspicious,
        })
    }

    pub fn restricted(&self) -> &BTreeSet<String> {
        &self.restricted
    }

    pub fn suspicious(&self) -> &BTreeSet<String> {
        &self.suspicious
    }

    pub fn read(
        restricted_path: impl AsRef<Path>,
        suspicious_path: impl AsRef<Path>,
        perm_map: &ApiPermissionMap,
    ) -> Result<Self> {
        let restricted = read_call_list(restricted_path.as_ref())?;
        let suspicious = read_call_list(suspicious_path.as_ref())?;
        ApiLists::new(restricted, suspicious, perm_map)
    }
}

fn read_call_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let mut calls = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let call = ApiCall::parse_canonical(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        calls.insert(call.canonical());
    }
    Ok(calls)
}

fn write_call_list(path: &Path, calls: &BTreeSet<String>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    (|| -> std::io::Result<()> {
        for call in calls {
            writeln!(out, "{call}")?;
        }
        out.flush()
    })()
    .map_err(Error::io(path))
}

/// The permission map and API lists together, with the directory layout the
/// CLI expects (`api_permissions.tsv`, `restricted_apis.txt`,
/// `suspicious_apis.txt`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dictionaries {
    pub perm_map: ApiPermissionMap,
    pub lists: ApiLists,
}

impl Dictionaries {
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let perm_map = ApiPermissionMap::read(dir.join(PERM_MAP_FILE))?;
        let lists = ApiLists::read(
            dir.join(RESTRICTED_FILE),
            dir.join(SUSPICIOUS_FILE),
            &perm_map,
        )?;
        Ok(Dictionaries { perm_map, lists })
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        self.perm_map.write(dir.join(PERM_MAP_FILE))?;
        write_call_list(&dir.join(RESTRICTED_FILE), &self.lists.restricted)?;
        write_call_list(&dir.join(SUSPICIOUS_FILE), &self.lists.suspicious)?;
        Ok(())
    }
}
