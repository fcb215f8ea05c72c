//! Lowering of parsed Dockerfiles to abstract token sequences.

pub mod substitution;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dockerfile::{DockerfileAst, Form, Instruction, Keyword};
use crate::shell::{effective_command_index, parse_shell, ShellAst};

pub use substitution::{is_canonical, normalize_expansions, substitute};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenKind {
    DockerInstr,
    ShellCmd,
    ShellArg,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::DockerInstr => "DockerInstr",
            TokenKind::ShellCmd => "ShellCmd",
            TokenKind::ShellArg => "ShellArg",
        }
    }

    /// Kind of a canonical token string.
    pub fn of(text: &str) -> TokenKind {
        match text.strip_prefix("SC-[") {
            Some(rest) => match rest.find(']') {
                Some(end) if rest[end..].starts_with("]-ARG-[") => TokenKind::ShellArg,
                _ => TokenKind::ShellCmd,
            },
            None => TokenKind::DockerInstr,
        }
    }
}

/// Command named by a `SC-[cmd]` or `SC-[cmd]-ARG-[x]` token.
pub fn command_of(text: &str) -> Option<&str> {
    let rest = text.strip_prefix("SC-[")?;
    rest.find(']').map(|end| &rest[..end])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrToken {
    pub kind: TokenKind,
    pub text: String,
    /// Source `(line, column)`.
    pub origin: (u32, u32),
    /// Index of the emitting instruction in the stripped AST.
    pub instruction: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IrSequence {
    pub tokens: Vec<IrToken>,
    pub source_name: String,
    pub commands_present: BTreeSet<String>,
}

impl IrSequence {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// One token per line: `<index>\t<kind>\t<text>\t<line>:<col>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{}\t{}\t{}:{}",
                t.kind.as_str(),
                t.text,
                t.origin.0,
                t.origin.1
            );
        }
        out
    }
}

/// Letters that take a value, per command. A bundle holding one of them
/// stays whole.
fn value_letters(cmd: &str) -> &'static str {
    match cmd {
        "tar" => "fCTXbI",
        "curl" => "oduHXAeTwxKmrbcDFQUz",
        "wget" => "OoPtTUea",
        "apt" | "apt-get" => "oct",
        "useradd" | "adduser" => "ugGdscekpK",
        "groupadd" | "addgroup" => "gKp",
        "ssh-keygen" => "tfbCNm",
        "pip" => "rcei",
        "gpg" => "our",
        "git" => "Cc",
        "make" => "CjfIol",
        "sed" => "ef",
        "grep" => "efmABC",
        "xargs" => "nIPdLsaE",
        "unzip" => "d",
        "mkdir" => "m",
        "sh" | "bash" => "co",
        _ => "",
    }
}

fn is_bundle(arg: &str) -> bool {
    arg.len() > 2
        && arg.starts_with('-')
        && arg[1..].bytes().all(|b| b.is_ascii_alphabetic())
}

/// Expanded argument tokens for one shell parameter of `cmd`.
pub fn expand_argument(cmd: &str, arg: &str) -> Vec<String> {
    let mut out = Vec::new();
    if arg.starts_with("--") {
        if let Some((name, value)) = arg.split_once('=') {
            out.push(normalize_expansions(name));
            if !value.is_empty() {
                out.extend(substitute(value));
            }
            return finish(out);
        }
    }
    if is_bundle(arg) {
        let letters = value_letters(cmd);
        if !arg[1..].chars().any(|c| letters.contains(c)) {
            for c in arg[1..].chars() {
                out.push(format!("-{c}"));
            }
            return finish(out);
        }
    }
    finish(substitute(arg))
}

fn finish(tokens: Vec<String>) -> Vec<String> {
    tokens
        .into_iter()
        .map(|t| sanitize(&t))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Removes `\`, `;`, `|` and `&&`.
pub fn sanitize(text: &str) -> String {
    text.replace("&&", "")
        .chars()
        .filter(|c| !matches!(c, '\\' | ';' | '|'))
        .collect()
}

/// Canonical command name: basename of a path, `pip3` and friends as `pip`.
pub fn command_name(word: &str) -> String {
    let word = normalize_expansions(word);
    let base = word.rsplit('/').next().unwrap_or(&word);
    let base = if base.is_empty() { word.as_str() } else { base };
    let base = if base
        .strip_prefix("pip")
        .is_some_and(|r| r.chars().all(|c| c.is_ascii_digit() || c == '.'))
    {
        "pip"
    } else {
        base
    };
    sanitize(base).replace(['[', ']'], "")
}

struct Emitter {
    tokens: Vec<IrToken>,
    commands: BTreeSet<String>,
}

impl Emitter {
    fn push(&mut self, kind: TokenKind, text: String, origin: (u32, u32), instruction: usize) {
        self.tokens.push(IrToken {
            kind,
            text,
            origin,
            instruction,
        });
    }

    /// One call: `SC-[cmd]` then its arguments.
    fn call(&mut self, words: &[(String, (u32, u32))], instruction: usize) {
        if words.is_empty() {
            return;
        }
        let texts: Vec<&str> = words.iter().map(|(w, _)| w.as_str()).collect();
        let idx = effective_command_index(&texts);
        let cmd = command_name(&words[idx].0);
        if cmd.is_empty() {
            return;
        }
        self.push(
            TokenKind::ShellCmd,
            format!("SC-[{cmd}]"),
            words[idx].1,
            instruction,
        );
        for (arg, origin) in &words[idx + 1..] {
            for t in expand_argument(&cmd, arg) {
                self.push(
                    TokenKind::ShellArg,
                    format!("SC-[{cmd}]-ARG-[{t}]"),
                    *origin,
                    instruction,
                );
            }
        }
        self.commands.insert(cmd);
    }

    fn docker_arg(&mut self, kw: Keyword, value: &str, origin: (u32, u32), instruction: usize) {
        let tokens = if matches!(kw, Keyword::Expose | Keyword::Stopsignal) {
            finish(vec![value.to_string()])
        } else if value.starts_with("--") {
            expand_argument("", value)
        } else {
            finish(substitute(value))
        };
        for t in tokens {
            self.push(
                TokenKind::DockerInstr,
                format!("{kw}-ARG-[{t}]"),
                origin,
                instruction,
            );
        }
    }
}

fn shell_calls(ins: &Instruction, ast: &ShellAst) -> Vec<Vec<(String, (u32, u32))>> {
    ast.calls()
        .map(|c| {
            std::iter::once(&c.command)
                .chain(c.args.iter())
                .map(|w| (w.text.clone(), ins.locate(w.offset)))
                .collect()
        })
        .collect()
}

/// Lowers a declaration-stripped AST. `shells` maps the index of every
/// shell-form RUN to its parsed script.
pub fn to_ir(ast: &DockerfileAst, shells: &BTreeMap<usize, ShellAst>) -> IrSequence {
    let mut em = Emitter {
        tokens: Vec::new(),
        commands: BTreeSet::new(),
    };
    for (i, ins) in ast.instructions.iter().enumerate() {
        let origin = ins.origin();
        match ins.keyword {
            Keyword::Healthcheck | Keyword::Onbuild => {}
            Keyword::From => {
                if let Some(img) = ins.from_image() {
                    let name = sanitize(&normalize_expansions(&img.image));
                    let specific = img.digest.is_some()
                        || img.tag.as_deref().is_some_and(|t| t != "latest");
                    let tag = if specific { "SPECIFIC" } else { "LATEST" };
                    em.push(
                        TokenKind::DockerInstr,
                        format!("FROM-IMAGE-[{name}]-TAG-[{tag}]"),
                        origin,
                        i,
                    );
                }
            }
            Keyword::Run => {
                em.push(TokenKind::DockerInstr, "RUN".into(), origin, i);
                for f in &ins.flags {
                    em.docker_arg(Keyword::Run, &f.to_string(), origin, i);
                }
                match ins.form {
                    Form::Exec => {
                        let words: Vec<_> = ins.args.iter().map(|a| (a.clone(), origin)).collect();
                        em.call(&words, i);
                    }
                    Form::Shell => {
                        if let Some(sh) = shells.get(&i) {
                            for words in shell_calls(ins, sh) {
                                em.call(&words, i);
                            }
                        }
                    }
                }
            }
            kw @ (Keyword::Cmd | Keyword::Entrypoint) => {
                em.push(TokenKind::DockerInstr, kw.to_string(), origin, i);
                let words: Vec<(String, (u32, u32))> = match ins.form {
                    Form::Exec => ins.args.iter().map(|a| (a.clone(), origin)).collect(),
                    Form::Shell => match parse_shell(ins.raw()) {
                        Ok(sh) => shell_calls(ins, &sh).into_iter().flatten().collect(),
                        Err(_) => ins
                            .raw()
                            .split_whitespace()
                            .map(|w| (w.to_string(), origin))
                            .collect(),
                    },
                };
                for (w, o) in words {
                    em.docker_arg(kw, &w, o, i);
                }
            }
            kw => {
                em.push(TokenKind::DockerInstr, kw.to_string(), origin, i);
                for f in &ins.flags {
                    em.docker_arg(kw, &f.to_string(), origin, i);
                }
                for a in &ins.args {
                    em.docker_arg(kw, a, origin, i);
                }
            }
        }
    }
    IrSequence {
        tokens: em.tokens,
        source_name: ast.source_name.clone(),
        commands_present: em.commands,
    }
}
