//! Frequent sequential pattern mining over per-command groups of token
//! sequences.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ir::{command_of, IrSequence, TokenKind};

pub const DEFAULT_MIN_SUPPORT: f64 = 0.4;
pub const DEFAULT_MAX_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MineError {
    #[error("database is empty")]
    EmptyDatabase,
    #[error("minimum support must lie in (0, 1], got {0}")]
    InvalidSupport(f64),
    #[error("no sequence contains the antecedent")]
    ZeroAntecedentSupport,
    #[error("antecedent is empty")]
    EmptyAntecedent,
}

/// The sequences of every file that runs `group_command`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceDatabase {
    pub group_command: String,
    pub sources: Vec<String>,
    pub sequences: Vec<Vec<String>>,
}

impl SequenceDatabase {
    pub fn from_texts(group_command: &str, sequences: Vec<Vec<String>>) -> Self {
        Self {
            group_command: group_command.to_string(),
            sources: (0..sequences.len()).map(|i| format!("#{i}")).collect(),
            sequences,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of sequences holding `pattern` as a subsequence.
    pub fn count(&self, pattern: &[String]) -> usize {
        self.sequences
            .iter()
            .filter(|s| is_subsequence(pattern, s))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SequentialPattern {
    pub tokens: Vec<String>,
    pub support_count: usize,
    #[serde(skip)]
    pub db_size: usize,
}

impl SequentialPattern {
    pub fn support_fraction(&self) -> f64 {
        if self.db_size == 0 {
            0.0
        } else {
            self.support_count as f64 / self.db_size as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatternStats {
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
}

pub fn is_subsequence<A: PartialEq<B>, B>(needle: &[A], hay: &[B]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| n == h))
}

/// One database per shell command; a file appears in the group of every
/// command it runs.
pub fn group_by_command(corpus: &[IrSequence]) -> BTreeMap<String, SequenceDatabase> {
    let mut groups: BTreeMap<String, SequenceDatabase> = BTreeMap::new();
    for seq in corpus {
        let texts: Vec<String> = seq.tokens.iter().map(|t| t.text.clone()).collect();
        for cmd in &seq.commands_present {
            let db = groups.entry(cmd.clone()).or_insert_with(|| SequenceDatabase {
                group_command: cmd.clone(),
                ..Default::default()
            });
            db.sources.push(seq.source_name.clone());
            db.sequences.push(texts.clone());
        }
    }
    groups
}

/// Smallest count reaching `min_support` of `n` sequences.
pub fn min_count(min_support: f64, n: usize) -> usize {
    ((min_support * n as f64) - 1e-9).ceil().max(1.0) as usize
}

fn check_support(min_support: f64) -> Result<(), MineError> {
    if min_support > 0.0 && min_support <= 1.0 {
        Ok(())
    } else {
        Err(MineError::InvalidSupport(min_support))
    }
}

/// All patterns of at most `max_len` tokens whose support fraction is at
/// least `min_support`, sorted by token list.
pub fn prefixspan(
    db: &SequenceDatabase,
    min_support: f64,
    max_len: usize,
) -> Result<Vec<SequentialPattern>, MineError> {
    check_support(min_support)?;
    if db.is_empty() {
        return Err(MineError::EmptyDatabase);
    }
    let mut vocab: Vec<String> = Vec::new();
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let encoded: Vec<Vec<u32>> = db
        .sequences
        .iter()
        .map(|s| {
            s.iter()
                .map(|t| {
                    *ids.entry(t.as_str()).or_insert_with(|| {
                        vocab.push(t.clone());
                        (vocab.len() - 1) as u32
                    })
                })
                .collect()
        })
        .collect();

    let mut miner = Miner {
        seqs: &encoded,
        threshold: min_count(min_support, db.len()),
        max_len,
        last_seen: vec![usize::MAX; vocab.len()],
        counts: vec![0; vocab.len()],
        found: Vec::new(),
    };
    let start: Vec<(usize, usize)> = (0..encoded.len()).map(|i| (i, 0)).collect();
    let mut prefix = Vec::new();
    if max_len > 0 {
        miner.grow(&mut prefix, &start);
    }

    let mut out: Vec<SequentialPattern> = miner
        .found
        .into_iter()
        .map(|(p, c)| SequentialPattern {
            tokens: p.into_iter().map(|i| vocab[i as usize].clone()).collect(),
            support_count: c,
            db_size: db.len(),
        })
        .collect();
    out.sort();
    Ok(out)
}

struct Miner<'a> {
    seqs: &'a [Vec<u32>],
    threshold: usize,
    max_len: usize,
    last_seen: Vec<usize>,
    counts: Vec<usize>,
    found: Vec<(Vec<u32>, usize)>,
}

impl Miner<'_> {
    /// Extends `prefix` using the pseudo-projected database `proj` of
    /// `(sequence, start offset)` pairs.
    fn grow(&mut self, prefix: &mut Vec<u32>, proj: &[(usize, usize)]) {
        let mut items = Vec::new();
        for &(s, pos) in proj {
            for &t in &self.seqs[s][pos..] {
                let t = t as usize;
                if self.last_seen[t] != s {
                    self.last_seen[t] = s;
                    if self.counts[t] == 0 {
                        items.push(t as u32);
                    }
                    self.counts[t] += 1;
                }
            }
        }
        let frequent: Vec<(u32, usize)> = items
            .iter()
            .map(|&t| (t, self.counts[t as usize]))
            .filter(|&(_, c)| c >= self.threshold)
            .collect();
        for &t in &items {
            self.counts[t as usize] = 0;
            self.last_seen[t as usize] = usize::MAX;
        }

        for (t, count) in frequent {
            let next: Vec<(usize, usize)> = proj
                .iter()
                .filter_map(|&(s, pos)| {
                    self.seqs[s][pos..]
                        .iter()
                        .position(|&x| x == t)
                        .map(|i| (s, pos + i + 1))
                })
                .collect();
            prefix.push(t);
            self.found.push((prefix.clone(), count));
            if prefix.len() < self.max_len {
                self.grow(prefix, &next);
            }
            prefix.pop();
        }
    }
}

/// Patterns that are not a subsequence of another pattern in the input.
pub fn maximal(patterns: &[SequentialPattern]) -> Vec<SequentialPattern> {
    let mut order: Vec<&SequentialPattern> = patterns.iter().collect();
    order.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()).then(a.tokens.cmp(&b.tokens)));
    let mut kept: Vec<&SequentialPattern> = Vec::new();
    for p in order {
        let covered = kept
            .iter()
            .any(|k| k.tokens != p.tokens && is_subsequence(&p.tokens, &k.tokens));
        if !covered && !kept.iter().any(|k| k.tokens == p.tokens) {
            kept.push(p);
        }
    }
    let mut out: Vec<SequentialPattern> = kept.into_iter().cloned().collect();
    out.sort();
    out
}

/// Same result as [`maximal`] for input closed under subsequences, such
/// as the output of [`prefixspan`]. There a pattern is covered exactly
/// when deleting one token from another input pattern yields it.
pub fn maximal_of_closed(patterns: &[SequentialPattern]) -> Vec<SequentialPattern> {
    let mut covered: HashSet<Vec<&str>> = HashSet::new();
    for p in patterns {
        for skip in 0..p.tokens.len() {
            covered.insert(
                p.tokens
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, t)| t.as_str())
                    .collect(),
            );
        }
    }
    let mut out: Vec<SequentialPattern> = patterns
        .iter()
        .filter(|p| !covered.contains(&p.tokens.iter().map(String::as_str).collect::<Vec<_>>()))
        .cloned()
        .collect();
    out.sort();
    out.dedup_by(|a, b| a.tokens == b.tokens);
    out
}

/// Every command is followed by one of its arguments before the next
/// command, and every argument comes after its command.
pub fn is_tuple_complete<S: AsRef<str>>(tokens: &[S]) -> bool {
    let mut seen: Vec<&str> = Vec::new();
    let mut open: Option<&str> = None;
    for t in tokens {
        let t = t.as_ref();
        match TokenKind::of(t) {
            TokenKind::DockerInstr => {}
            TokenKind::ShellCmd => {
                if open.is_some() {
                    return false;
                }
                let c = command_of(t).unwrap_or("");
                seen.push(c);
                open = Some(c);
            }
            TokenKind::ShellArg => {
                let c = command_of(t).unwrap_or("");
                if !seen.contains(&c) {
                    return false;
                }
                if open == Some(c) {
                    open = None;
                }
            }
        }
    }
    open.is_none()
}

pub fn prune_incomplete(patterns: &[SequentialPattern]) -> Vec<SequentialPattern> {
    patterns
        .iter()
        .filter(|p| is_tuple_complete(&p.tokens))
        .cloned()
        .collect()
}

/// Statistics of the rule "antecedent then consequent" over `db`.
pub fn rule_stats(
    antecedent: &[String],
    consequent: &[String],
    db: &SequenceDatabase,
) -> Result<PatternStats, MineError> {
    if antecedent.is_empty() {
        return Err(MineError::EmptyAntecedent);
    }
    if db.is_empty() {
        return Err(MineError::EmptyDatabase);
    }
    let n = db.len() as f64;
    let a = db.count(antecedent);
    if a == 0 {
        return Err(MineError::ZeroAntecedentSupport);
    }
    let joined: Vec<String> = antecedent.iter().chain(consequent).cloned().collect();
    let both = db.count(&joined);
    let c_frac = db.count(consequent) as f64 / n;
    let confidence = both as f64 / a as f64;
    Ok(PatternStats {
        support: both as f64 / n,
        confidence,
        lift: if c_frac > 0.0 { confidence / c_frac } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinedPattern {
    #[serde(flatten)]
    pub pattern: SequentialPattern,
    #[serde(flatten)]
    pub stats: PatternStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub command: String,
    pub db_size: usize,
    pub min_count: usize,
    pub frequent: usize,
    pub maximal: usize,
    pub pruned: usize,
    /// Surviving patterns; stats read the last token as the consequent of
    /// the ones before it.
    pub patterns: Vec<MinedPattern>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MineConfig {
    pub min_support: f64,
    pub max_len: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            min_support: DEFAULT_MIN_SUPPORT,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

pub fn mine_group(db: &SequenceDatabase, config: MineConfig) -> Result<GroupReport, MineError> {
    let frequent = prefixspan(db, config.min_support, config.max_len)?;
    let max = maximal_of_closed(&frequent);
    let pruned = prune_incomplete(&max);
    let patterns = pruned
        .into_iter()
        .map(|p| {
            let (a, c) = match p.tokens.len() {
                1 => (&p.tokens[..], &p.tokens[1..]),
                n => (&p.tokens[..n - 1], &p.tokens[n - 1..]),
            };
            let stats = rule_stats(a, c, db)?;
            Ok(MinedPattern { pattern: p, stats })
        })
        .collect::<Result<Vec<_>, MineError>>()?;
    Ok(GroupReport {
        command: db.group_command.clone(),
        db_size: db.len(),
        min_count: min_count(config.min_support, db.len()),
        frequent: frequent.len(),
        maximal: max.len(),
        pruned: patterns.len(),
        patterns,
    })
}

/// Mines every command group independently.
pub fn mine(
    corpus: &[IrSequence],
    config: MineConfig,
) -> Result<BTreeMap<String, Result<GroupReport, MineError>>, MineError> {
    check_support(config.min_support)?;
    let groups = group_by_command(corpus);
    Ok(groups
        .into_par_iter()
        .map(|(cmd, db)| {
            let r = mine_group(&db, config);
            (cmd, r)
        })
        .collect())
}

/// JSON report of a mining run.
pub fn report_json(
    config: MineConfig,
    groups: &BTreeMap<String, Result<GroupReport, MineError>>,
) -> serde_json::Value {
    let groups: Vec<serde_json::Value> = groups
        .iter()
        .map(|(cmd, r)| match r {
            Ok(g) => serde_json::to_value(g).expect("report serializes"),
            Err(e) => serde_json::json!({ "command": cmd, "error": e.to_string() }),
        })
        .collect();
    serde_json::json!({
        "min_support": config.min_support,
        "max_len": config.max_len,
        "groups": groups,
    })
}
