//! Rule data model, the YAML rule format and the built-in catalog.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUILTIN_YAML: &str = include_str!("../rules/builtin.yaml");

/// Handlers a `special` rule may name.
pub const HANDLERS: [&str; 3] = ["set-eux", "useradd-not-root", "groupadd-not-root"];

/// Matches any single token.
pub const ANY: &str = "ANY";
const ANY_SEGMENT: &str = "[ANY]";

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{path}: {reason}")]
    SchemaError { path: String, reason: String },
    #[error("duplicate rule id {0}")]
    DuplicateRuleId(u32),
    #[error("unknown special handler `{0}`")]
    UnknownHandler(String),
}

fn schema(path: &str, reason: impl Into<String>) -> RuleError {
    RuleError::SchemaError {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Implies,
    DisjImplies,
    Sandwich,
    Special,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Mandatory,
    Encouraged,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Mandatory => "MANDATORY",
            Level::Encouraged => "ENCOURAGED",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    #[default]
    File,
    Run,
}

#[derive(Debug, Clone)]
enum TokenPattern {
    Any,
    Literal(String),
    Hole(Regex),
}

impl TokenPattern {
    fn compile(token: &str) -> TokenPattern {
        if token == ANY {
            TokenPattern::Any
        } else if token.contains(ANY_SEGMENT) {
            let parts: Vec<String> = token.split(ANY_SEGMENT).map(regex::escape).collect();
            let re = format!(r"^{}$", parts.join(r"\[.+?\]"));
            TokenPattern::Hole(Regex::new(&re).expect("escaped pattern"))
        } else {
            TokenPattern::Literal(token.to_string())
        }
    }

    fn matches(&self, token: &str) -> bool {
        match self {
            TokenPattern::Any => true,
            TokenPattern::Literal(l) => l == token,
            TokenPattern::Hole(re) => re.is_match(token),
        }
    }
}

/// An ordered list of token patterns, matched as a subsequence.
#[derive(Debug, Clone)]
pub struct Matcher {
    tokens: Vec<String>,
    compiled: Vec<TokenPattern>,
}

impl PartialEq for Matcher {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Matcher {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Matcher {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let compiled = tokens.iter().map(|t| TokenPattern::compile(t)).collect();
        Matcher { tokens, compiled }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whether element `i` accepts `token`.
    pub fn accepts(&self, i: usize, token: &str) -> bool {
        self.compiled[i].matches(token)
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`", self.tokens.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: u32,
    pub name: String,
    pub description: String,
    pub kind: RuleKind,
    pub level: Level,
    pub within: Scope,
    pub p: Vec<Matcher>,
    pub q: Vec<Matcher>,
    pub r: Option<Matcher>,
    pub handler: Option<String>,
    pub confidence: Option<f64>,
    pub lift: Option<f64>,
}

fn join(ms: &[Matcher]) -> String {
    ms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" or ")
}

fn describe(kind: RuleKind, p: &[Matcher], q: &[Matcher], r: Option<&Matcher>, handler: Option<&str>) -> String {
    match kind {
        RuleKind::Implies | RuleKind::DisjImplies => {
            format!("{} should be followed by {}", join(p), join(q))
        }
        RuleKind::Sandwich => format!(
            "{} should come after {} and be followed by {}",
            join(q),
            join(p),
            r.map(|m| m.to_string()).unwrap_or_default()
        ),
        RuleKind::Special => match handler {
            Some("set-eux") => "RUN script should start with `set -eux`".to_string(),
            Some("useradd-not-root") => {
                "user created but no later USER switches away from root".to_string()
            }
            Some("groupadd-not-root") => {
                "group created but no later USER switches away from root".to_string()
            }
            Some(h) => format!("special check `{h}`"),
            None => String::new(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleCatalog {
    pub version: String,
    pub rules: Vec<Rule>,
}

impl RuleCatalog {
    pub fn get(&self, id: u32) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Catalog restricted to `ids`.
    pub fn only(&self, ids: &BTreeSet<u32>) -> RuleCatalog {
        RuleCatalog {
            version: self.version.clone(),
            rules: self
                .rules
                .iter()
                .filter(|r| ids.contains(&r.id))
                .cloned()
                .collect(),
        }
    }

    pub fn to_yaml(&self) -> String {
        let raw = RawCatalog {
            version: Some(self.version.clone()),
            rules: self
                .rules
                .iter()
                .map(|r| RawRule {
                    id: r.id,
                    name: r.name.clone(),
                    level: r.level,
                    kind: r.kind,
                    within: r.within,
                    p: r.p.iter().map(|m| m.tokens.clone()).collect(),
                    q: r.q.iter().map(|m| m.tokens.clone()).collect(),
                    r: r.r.as_ref().map(|m| m.tokens.clone()),
                    handler: r.handler.clone(),
                    confidence: r.confidence,
                    lift: r.lift,
                })
                .collect(),
        };
        serde_yaml::to_string(&raw).expect("catalog serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    rules: Vec<RawRule>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: u32,
    name: String,
    level: Level,
    #[serde(rename = "type")]
    kind: RuleKind,
    #[serde(default)]
    within: Scope,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    p: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    q: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    handler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lift: Option<f64>,
}

fn matchers(path: &str, field: &str, lists: Vec<Vec<String>>) -> Result<Vec<Matcher>, RuleError> {
    lists
        .into_iter()
        .map(|l| matcher(path, field, l))
        .collect()
}

fn matcher(path: &str, field: &str, list: Vec<String>) -> Result<Matcher, RuleError> {
    if list.is_empty() {
        return Err(schema(path, format!("{field}: empty matcher")));
    }
    if list.iter().any(|t| t.trim().is_empty()) {
        return Err(schema(path, format!("{field}: empty token")));
    }
    Ok(Matcher::new(list))
}

fn build(path: &str, raw: RawRule) -> Result<Rule, RuleError> {
    let here = format!("{path}: rule {}", raw.id);
    if raw.name.trim().is_empty() {
        return Err(schema(&here, "name is empty"));
    }
    let p = matchers(&here, "p", raw.p)?;
    let q = matchers(&here, "q", raw.q)?;
    let r = raw.r.map(|l| matcher(&here, "r", l)).transpose()?;
    let shape_ok = match raw.kind {
        RuleKind::Implies => p.len() == 1 && q.len() == 1 && r.is_none(),
        RuleKind::DisjImplies => !p.is_empty() && !q.is_empty() && r.is_none(),
        RuleKind::Sandwich => p.len() == 1 && q.len() == 1 && r.is_some(),
        RuleKind::Special => p.is_empty() && q.is_empty() && r.is_none(),
    };
    if !shape_ok {
        return Err(schema(
            &here,
            format!(
                "{:?} rule has {} p, {} q and {} r matchers",
                raw.kind,
                p.len(),
                q.len(),
                usize::from(r.is_some())
            ),
        ));
    }
    match (&raw.kind, &raw.handler) {
        (RuleKind::Special, None) => return Err(schema(&here, "special rule needs a handler")),
        (RuleKind::Special, Some(h)) if !HANDLERS.contains(&h.as_str()) => {
            return Err(RuleError::UnknownHandler(h.clone()))
        }
        (RuleKind::Special, Some(_)) => {}
        (_, Some(_)) => return Err(schema(&here, "only special rules take a handler")),
        (_, None) => {}
    }
    if let Some(c) = raw.confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(schema(&here, "confidence must lie in [0, 1]"));
        }
    }
    if raw.lift.is_some_and(|l| l < 0.0 || l.is_nan()) {
        return Err(schema(&here, "lift must be nonnegative"));
    }
    let description = describe(raw.kind, &p, &q, r.as_ref(), raw.handler.as_deref());
    Ok(Rule {
        id: raw.id,
        name: raw.name,
        description,
        kind: raw.kind,
        level: raw.level,
        within: raw.within,
        p,
        q,
        r,
        handler: raw.handler,
        confidence: raw.confidence,
        lift: raw.lift,
    })
}

/// Parses and validates catalog text; `path` only labels errors.
pub fn parse_rules(path: &str, text: &str) -> Result<RuleCatalog, RuleError> {
    let raw: RawCatalog =
        serde_yaml::from_str(text).map_err(|e| schema(path, e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut rules = Vec::with_capacity(raw.rules.len());
    for r in raw.rules {
        if !seen.insert(r.id) {
            return Err(RuleError::DuplicateRuleId(r.id));
        }
        rules.push(build(path, r)?);
    }
    Ok(RuleCatalog {
        version: raw.version.unwrap_or_else(|| "unversioned".to_string()),
        rules,
    })
}

pub fn load_rules(path: &Path) -> Result<RuleCatalog, RuleError> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| schema(&label, e.to_string()))?;
    parse_rules(&label, &text)
}

pub fn builtin_catalog() -> RuleCatalog {
    parse_rules("builtin.yaml", BUILTIN_YAML).expect("built-in catalog is valid")
}

/// Ids of the rules mined as semantic rules (the rest are syntactic).
pub fn is_semantic(id: u32) -> bool {
    (1..=34).contains(&id)
}
