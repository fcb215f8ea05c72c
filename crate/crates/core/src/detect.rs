//! Checking a Dockerfile's token sequence against a rule catalog.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{analyze, Analysis};
use crate::dockerfile::{Keyword, LineSpan, SyntaxError};
use crate::ir::{command_name, IrToken};
use crate::rules::{Level, Matcher, Rule, RuleCatalog, RuleKind, Scope};
use crate::shell::{effective_command_index, ShellAst};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule_id: u32,
    pub rule_name: String,
    pub level: Level,
    pub location: LineSpan,
    pub message: String,
}

/// Inclusive token index range of one matcher occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

/// Occurrence of `m` in `seq` with the greatest end, and the greatest start
/// among those.
pub fn last_occurrence<S: AsRef<str>>(seq: &[S], m: &Matcher) -> Option<Window> {
    if m.is_empty() {
        return None;
    }
    let mut k = m.len();
    let mut end = None;
    let mut i = seq.len();
    while k > 0 {
        if i == 0 {
            return None;
        }
        i -= 1;
        if m.accepts(k - 1, seq[i].as_ref()) {
            if end.is_none() {
                end = Some(i);
            }
            k -= 1;
        }
    }
    Some(Window {
        start: i,
        end: end.unwrap(),
    })
}

/// Occurrence of `m` in `seq[from..]` with the smallest end, and the
/// greatest start among those.
pub fn first_occurrence<S: AsRef<str>>(seq: &[S], m: &Matcher, from: usize) -> Option<Window> {
    if m.is_empty() {
        return None;
    }
    let mut k = 0;
    let mut i = from;
    while k < m.len() {
        if i >= seq.len() {
            return None;
        }
        if m.accepts(k, seq[i].as_ref()) {
            k += 1;
        }
        i += 1;
    }
    let end = i - 1;
    last_occurrence(&seq[from..=end], m).map(|w| Window {
        start: from + w.start,
        end,
    })
}

/// Whether `m` occurs within `seq[from..to]`.
pub fn occurs_in<S: AsRef<str>>(seq: &[S], m: &Matcher, from: usize, to: usize) -> bool {
    from < to && first_occurrence(&seq[..to], m, from).is_some()
}

/// P occurrences with no Q between them and the previous cut, scanning
/// from the end and cutting before each P found.
pub fn implies_windows<S: AsRef<str>>(seq: &[S], p: &Matcher, q: &Matcher) -> Vec<Window> {
    let mut out = Vec::new();
    let mut limit = seq.len();
    while let Some(w) = last_occurrence(&seq[..limit], p) {
        if !occurs_in(seq, q, w.end + 1, limit) {
            out.push(w);
        }
        limit = w.start;
    }
    out.reverse();
    out
}

/// The last occurrence of any P alternative, if no Q alternative follows it.
pub fn disj_implies_window<S: AsRef<str>>(seq: &[S], ps: &[Matcher], qs: &[Matcher]) -> Option<Window> {
    let w = ps
        .iter()
        .filter_map(|p| last_occurrence(seq, p))
        .max_by_key(|w| (w.end, w.start))?;
    let satisfied = qs.iter().any(|q| occurs_in(seq, q, w.end + 1, seq.len()));
    (!satisfied).then_some(w)
}

/// Q occurrences lacking a P before them or an R after them.
pub fn sandwich_windows<S: AsRef<str>>(seq: &[S], p: &Matcher, q: &Matcher, r: &Matcher) -> Vec<Window> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(w) = first_occurrence(seq, q, from) {
        let before = occurs_in(seq, p, 0, w.start);
        let after = occurs_in(seq, r, w.end + 1, seq.len());
        if !(before && after) {
            out.push(w);
        }
        from = w.end + 1;
    }
    out
}

fn span_of(tokens: &[&IrToken], w: Window) -> LineSpan {
    let a = tokens[w.start].origin.0;
    let b = tokens[w.end].origin.0;
    LineSpan::new(a.min(b), a.max(b))
}

fn violation(rule: &Rule, location: LineSpan) -> Violation {
    Violation {
        rule_id: rule.id,
        rule_name: rule.name.clone(),
        level: rule.level,
        location,
        message: rule.description.clone(),
    }
}

/// Token slices a rule is checked over.
fn scopes(a: &Analysis, within: Scope) -> Vec<Vec<&IrToken>> {
    match within {
        Scope::File => vec![a.ir.tokens.iter().collect()],
        Scope::Run => {
            let mut by_ins: BTreeMap<usize, Vec<&IrToken>> = BTreeMap::new();
            for t in &a.ir.tokens {
                if a.ast.instructions[t.instruction].keyword == Keyword::Run {
                    by_ins.entry(t.instruction).or_default().push(t);
                }
            }
            by_ins.into_values().collect()
        }
    }
}

pub fn check_rule(a: &Analysis, rule: &Rule) -> Vec<Violation> {
    if rule.kind == RuleKind::Special {
        return special(a, rule);
    }
    let mut out = Vec::new();
    for tokens in scopes(a, rule.within) {
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        let windows = match rule.kind {
            RuleKind::Implies => implies_windows(&texts, &rule.p[0], &rule.q[0]),
            RuleKind::DisjImplies => disj_implies_window(&texts, &rule.p, &rule.q)
                .into_iter()
                .collect(),
            RuleKind::Sandwich => match &rule.r {
                Some(r) => sandwich_windows(&texts, &rule.p[0], &rule.q[0], r),
                None => Vec::new(),
            },
            RuleKind::Special => unreachable!(),
        };
        out.extend(windows.into_iter().map(|w| violation(rule, span_of(&tokens, w))));
    }
    out
}

/// Effective command names of every call in a script.
fn commands(sh: &ShellAst) -> impl Iterator<Item = String> + '_ {
    sh.calls().map(|c| {
        let words: Vec<&str> = std::iter::once(c.command.text.as_str())
            .chain(c.arg_texts())
            .collect();
        command_name(words[effective_command_index(&words)])
    })
}

fn has_set_eux(sh: &ShellAst) -> bool {
    sh.calls().any(|c| {
        if c.command.text != "set" {
            return false;
        }
        let letters: String = c
            .arg_texts()
            .filter(|a| a.starts_with('-') && !a.starts_with("--"))
            .flat_map(|a| a.chars().skip(1))
            .collect();
        ['e', 'u', 'x'].iter().all(|l| letters.contains(*l))
    })
}

fn is_root(user: &str) -> bool {
    let name = user.split(':').next().unwrap_or("");
    name == "root" || name == "0"
}

/// Creation call in some RUN that no later non-root USER follows.
fn creation_without_user(a: &Analysis, creators: &[&str]) -> Option<usize> {
    let last = a
        .shells
        .iter()
        .filter(|(_, sh)| commands(sh).any(|c| creators.contains(&c.as_str())))
        .map(|(i, _)| *i)
        .max()?;
    let switched = a.ast.instructions[last + 1..].iter().any(|ins| {
        ins.keyword == Keyword::User && ins.args.first().is_some_and(|u| !is_root(u))
    });
    (!switched).then_some(last)
}

fn special(a: &Analysis, rule: &Rule) -> Vec<Violation> {
    let span = |i: usize| a.ast.instructions[i].line_span;
    match rule.handler.as_deref() {
        Some("set-eux") => a
            .shells
            .iter()
            .filter(|(_, sh)| !has_set_eux(sh))
            .map(|(i, _)| violation(rule, span(*i)))
            .collect(),
        Some("useradd-not-root") => creation_without_user(a, &["useradd", "adduser"])
            .map(|i| violation(rule, span(i)))
            .into_iter()
            .collect(),
        Some("groupadd-not-root") => creation_without_user(a, &["groupadd", "addgroup"])
            .map(|i| violation(rule, span(i)))
            .into_iter()
            .collect(),
        _ => Vec::new(),
    }
}

pub fn check_analysis(a: &Analysis, catalog: &RuleCatalog) -> Vec<Violation> {
    let mut out: Vec<Violation> = catalog.rules.iter().flat_map(|r| check_rule(a, r)).collect();
    out.sort_by(|x, y| {
        (x.location.start, x.rule_id, x.location.end).cmp(&(y.location.start, y.rule_id, y.location.end))
    });
    out
}

/// Parses `source` and checks it against every rule of `catalog`.
pub fn check_file(name: &str, source: &str, catalog: &RuleCatalog) -> Result<Vec<Violation>, SyntaxError> {
    let a = analyze(name, source)?;
    Ok(check_analysis(&a, catalog))
}
