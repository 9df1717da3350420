//! Language registry: ISO 639-3 codes, writing systems, and genealogical
//! family paths.
//!
//! The registry is filled during a single-threaded load phase and is
//! read-only afterwards. Metadata files are UTF-8 TSV:
//!
//! ```text
//! # iso  scripts      family                      name
//! gof    Latn,Ethi    Afro-Asiatic>Omotic         Gofa
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LangMetaError {
    #[error("malformed ISO 639-3 code {0:?}")]
    MalformedCode(String),
    #[error("malformed language label {0:?}")]
    MalformedLabel(String),
    #[error("unknown script code {0:?}")]
    UnknownScript(String),
    #[error("unknown top-level family {0:?}")]
    UnknownFamily(String),
    #[error("language {0} has no scripts")]
    NoScripts(String),
    #[error("language {0} already registered with different metadata")]
    ConflictingRegistration(String),
    #[error("language {0} is not registered")]
    UnknownLanguage(String),
    #[error("metadata line {line}: {msg}")]
    BadMetadataLine { line: usize, msg: String },
    #[error("metadata read failed: {0}")]
    Io(String),
}

/// Three-letter lowercase ISO 639-3 code.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangCode([u8; 3]);

impl LangCode {
    pub fn new(code: &str) -> Result<Self, LangMetaError> {
        let b = code.as_bytes();
        if b.len() == 3 && b.iter().all(u8::is_ascii_lowercase) {
            Ok(LangCode([b[0], b[1], b[2]]))
        } else {
            Err(LangMetaError::MalformedCode(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        // Constructed only from ASCII lowercase.
        std::str::from_utf8(&self.0).expect("ascii code")
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_str())
    }
}

impl FromStr for LangCode {
    type Err = LangMetaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LangCode::new(s)
    }
}

impl Serialize for LangCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LangCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LangCode::new(&s).map_err(serde::de::Error::custom)
    }
}

/// ISO 15924 codes for the supported writing systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScriptCode {
    Latn,
    Arab,
    Ethi,
    Nkoo,
    Tfng,
    Copt,
    Vaii,
}

impl ScriptCode {
    pub const ALL: [ScriptCode; 7] = [
        ScriptCode::Latn,
        ScriptCode::Arab,
        ScriptCode::Ethi,
        ScriptCode::Nkoo,
        ScriptCode::Tfng,
        ScriptCode::Copt,
        ScriptCode::Vaii,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScriptCode::Latn => "Latn",
            ScriptCode::Arab => "Arab",
            ScriptCode::Ethi => "Ethi",
            ScriptCode::Nkoo => "Nkoo",
            ScriptCode::Tfng => "Tfng",
            ScriptCode::Copt => "Copt",
            ScriptCode::Vaii => "Vaii",
        }
    }
}

impl fmt::Display for ScriptCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScriptCode {
    type Err = LangMetaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScriptCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| LangMetaError::UnknownScript(s.to_string()))
    }
}

pub const TOP_LEVEL_FAMILIES: [&str; 9] = [
    "Afro-Asiatic",
    "Austronesian",
    "Creole",
    "Indo-European",
    "Khoe-Kwadi",
    "Kx'a",
    "Mixed language",
    "Niger-Congo",
    "Nilo-Saharan",
];

/// Family names from coarse to fine; level 0 is a top-level family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FamilyPath(Vec<String>);

impl FamilyPath {
    pub fn new<I, S>(levels: I) -> Result<Self, LangMetaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let levels: Vec<String> = levels.into_iter().map(|s| s.into().trim().to_string()).collect();
        match levels.first() {
            Some(top) if TOP_LEVEL_FAMILIES.contains(&top.as_str()) => Ok(FamilyPath(levels)),
            Some(top) => Err(LangMetaError::UnknownFamily(top.clone())),
            None => Err(LangMetaError::UnknownFamily(String::new())),
        }
    }

    /// Parses the `>`-separated form used in metadata files.
    pub fn parse(s: &str) -> Result<Self, LangMetaError> {
        FamilyPath::new(s.split('>'))
    }

    pub fn top(&self) -> &str {
        &self.0[0]
    }

    pub fn levels(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for FamilyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(">"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageEntry {
    pub iso: LangCode,
    pub scripts: BTreeSet<ScriptCode>,
    pub family: FamilyPath,
    pub display_name: Option<String>,
}

impl LanguageEntry {
    /// Label in `iso` or `iso_Script` form.
    pub fn label(&self, script: Option<ScriptCode>) -> String {
        format_label(self.iso, script)
    }

    pub fn shares_script(&self, other: &LanguageEntry) -> bool {
        !self.scripts.is_disjoint(&other.scripts)
    }
}

pub fn format_label(iso: LangCode, script: Option<ScriptCode>) -> String {
    match script {
        Some(s) => format!("{iso}_{s}"),
        None => iso.to_string(),
    }
}

/// Parses `xxx` or `xxx_Ssss`.
pub fn resolve_label(label: &str) -> Result<(LangCode, Option<ScriptCode>), LangMetaError> {
    let malformed = || LangMetaError::MalformedLabel(label.to_string());
    match label.split_once('_') {
        None => LangCode::new(label).map(|c| (c, None)).map_err(|_| malformed()),
        Some((iso, script)) => {
            let iso = LangCode::new(iso).map_err(|_| malformed())?;
            let script = script.parse::<ScriptCode>().map_err(|_| malformed())?;
            Ok((iso, Some(script)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    SameFamilySameScript,
    SameFamilyDiffScript,
    DiffFamilySameScript,
    DiffFamilyDiffScript,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::SameFamilySameScript,
        Relation::SameFamilyDiffScript,
        Relation::DiffFamilySameScript,
        Relation::DiffFamilyDiffScript,
    ];

    pub fn from_flags(same_family: bool, same_script: bool) -> Self {
        match (same_family, same_script) {
            (true, true) => Relation::SameFamilySameScript,
            (true, false) => Relation::SameFamilyDiffScript,
            (false, true) => Relation::DiffFamilySameScript,
            (false, false) => Relation::DiffFamilyDiffScript,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::SameFamilySameScript => "same_family_same_script",
            Relation::SameFamilyDiffScript => "same_family_diff_script",
            Relation::DiffFamilySameScript => "diff_family_same_script",
            Relation::DiffFamilyDiffScript => "diff_family_diff_script",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const SEED_METADATA: &str = include_str!("../data/seed_languages.tsv");

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<LangCode, LanguageEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the bundled seed metadata.
    pub fn seed() -> Self {
        Registry::from_tsv(SEED_METADATA.as_bytes()).expect("bundled seed metadata is valid")
    }

    /// Registers a language. Re-registering identical metadata is a no-op.
    pub fn register(
        &mut self,
        iso: &str,
        scripts: impl IntoIterator<Item = ScriptCode>,
        family: FamilyPath,
    ) -> Result<&LanguageEntry, LangMetaError> {
        self.register_named(iso, scripts, family, None)
    }

    pub fn register_named(
        &mut self,
        iso: &str,
        scripts: impl IntoIterator<Item = ScriptCode>,
        family: FamilyPath,
        display_name: Option<String>,
    ) -> Result<&LanguageEntry, LangMetaError> {
        let code = LangCode::new(iso)?;
        let scripts: BTreeSet<ScriptCode> = scripts.into_iter().collect();
        if scripts.is_empty() {
            return Err(LangMetaError::NoScripts(iso.to_string()));
        }
        if let Some(existing) = self.entries.get(&code) {
            if existing.scripts != scripts || existing.family != family {
                return Err(LangMetaError::ConflictingRegistration(iso.to_string()));
            }
            return Ok(&self.entries[&code]);
        }
        let entry = LanguageEntry {
            iso: code,
            scripts,
            family,
            display_name,
        };
        Ok(self.entries.entry(code).or_insert(entry))
    }

    pub fn get(&self, iso: LangCode) -> Option<&LanguageEntry> {
        self.entries.get(&iso)
    }

    pub fn lookup(&self, iso: LangCode) -> Result<&LanguageEntry, LangMetaError> {
        self.get(iso)
            .ok_or_else(|| LangMetaError::UnknownLanguage(iso.to_string()))
    }

    pub fn contains(&self, iso: LangCode) -> bool {
        self.entries.contains_key(&iso)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LanguageEntry> {
        self.entries.values()
    }

    /// Family compares level-0 names; script compares by set intersection.
    pub fn relation(&self, a: LangCode, b: LangCode) -> Result<Relation, LangMetaError> {
        let ea = self.lookup(a)?;
        let eb = self.lookup(b)?;
        Ok(Relation::from_flags(
            ea.family.top() == eb.family.top(),
            ea.shares_script(eb),
        ))
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, LangMetaError> {
        let mut reg = Registry::new();
        reg.load_tsv(reader)?;
        Ok(reg)
    }

    /// Loads `iso<TAB>scripts<TAB>family<TAB>name` lines; `#` lines are comments.
    pub fn load_tsv<R: BufRead>(&mut self, reader: R) -> Result<usize, LangMetaError> {
        let mut added = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LangMetaError::Io(e.to_string()))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| LangMetaError::BadMetadataLine { line: i + 1, msg };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(bad(format!("expected at least 3 columns, got {}", cols.len())));
            }
            let scripts = cols[1]
                .split(',')
                .map(|s| s.trim().parse::<ScriptCode>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let family = FamilyPath::parse(cols[2]).map_err(|e| bad(e.to_string()))?;
            let name = cols
                .get(3)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            let before = self.len();
            self.register_named(cols[0].trim(), scripts, family, name)
                .map_err(|e| bad(e.to_string()))?;
            added += self.len() - before;
        }
        Ok(added)
    }
}
