//! Instruction-level Dockerfile parser.
//!
//! Produces a [`DockerfileAst`] whose instructions keep their source line
//! spans. Line continuations are folded the same way BuildKit folds them:
//! the escape character and the newline are removed and the next physical
//! line is appended verbatim, with comment and blank lines inside a
//! continuation skipped.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A rejected Dockerfile. Any one of these rejects the whole file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct SyntaxError {
    pub line: u32,
    pub reason: String,
}

impl SyntaxError {
    pub(crate) fn new(line: u32, reason: impl Into<String>) -> Self {
        Self {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Keyword {
    From,
    Run,
    Copy,
    Add,
    Env,
    Arg,
    Workdir,
    Expose,
    User,
    Cmd,
    Entrypoint,
    Volume,
    Shell,
    Onbuild,
    Healthcheck,
    Stopsignal,
    Label,
    Maintainer,
}

impl Keyword {
    pub const ALL: [Keyword; 18] = [
        Keyword::From,
        Keyword::Run,
        Keyword::Copy,
        Keyword::Add,
        Keyword::Env,
        Keyword::Arg,
        Keyword::Workdir,
        Keyword::Expose,
        Keyword::User,
        Keyword::Cmd,
        Keyword::Entrypoint,
        Keyword::Volume,
        Keyword::Shell,
        Keyword::Onbuild,
        Keyword::Healthcheck,
        Keyword::Stopsignal,
        Keyword::Label,
        Keyword::Maintainer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::From => "FROM",
            Keyword::Run => "RUN",
            Keyword::Copy => "COPY",
            Keyword::Add => "ADD",
            Keyword::Env => "ENV",
            Keyword::Arg => "ARG",
            Keyword::Workdir => "WORKDIR",
            Keyword::Expose => "EXPOSE",
            Keyword::User => "USER",
            Keyword::Cmd => "CMD",
            Keyword::Entrypoint => "ENTRYPOINT",
            Keyword::Volume => "VOLUME",
            Keyword::Shell => "SHELL",
            Keyword::Onbuild => "ONBUILD",
            Keyword::Healthcheck => "HEALTHCHECK",
            Keyword::Stopsignal => "STOPSIGNAL",
            Keyword::Label => "LABEL",
            Keyword::Maintainer => "MAINTAINER",
        }
    }

    /// Declaration-only instructions, dropped before lowering to tokens.
    pub fn is_declaration(self) -> bool {
        matches!(self, Keyword::Label | Keyword::Maintainer)
    }

    fn accepts_flags(self) -> bool {
        matches!(
            self,
            Keyword::From | Keyword::Run | Keyword::Copy | Keyword::Add | Keyword::Healthcheck
        )
    }

    fn accepts_exec_form(self) -> bool {
        matches!(
            self,
            Keyword::Run
                | Keyword::Cmd
                | Keyword::Entrypoint
                | Keyword::Shell
                | Keyword::Volume
                | Keyword::Copy
                | Keyword::Add
        )
    }

    /// Instructions whose shell-form argument is kept as one raw script.
    fn takes_script(self) -> bool {
        matches!(self, Keyword::Run | Keyword::Cmd | Keyword::Entrypoint)
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Keyword {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Keyword::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Shell,
    Exec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flag {
    pub name: String,
    pub value: Option<String>,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "--{}={}", self.name, v),
            None => write!(f, "--{}", self.name),
        }
    }
}

/// Inclusive, 1-based source line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        debug_assert!(end >= start);
        Self { start, end }
    }

    pub fn contains(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FromImage {
    pub platform: Option<String>,
    pub image: String,
    pub tag: Option<String>,
    pub digest: Option<String>,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Detail {
    None,
    From(FromImage),
    /// The instruction wrapped by ONBUILD.
    Onbuild(Box<Instruction>),
    /// `HEALTHCHECK NONE` carries `None`, otherwise the nested CMD.
    Healthcheck(Option<Box<Instruction>>),
}

/// Maps an offset of the folded logical line back to a source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Segment {
    offset: usize,
    line: u32,
    column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub keyword: Keyword,
    pub form: Form,
    pub args: Vec<String>,
    pub flags: Vec<Flag>,
    pub line_span: LineSpan,
    pub detail: Detail,
    raw: String,
    raw_start: usize,
    segments: Vec<Segment>,
}

impl Instruction {
    /// Argument text after the keyword and any leading flags, with
    /// continuations folded.
    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// The shell script of a shell-form RUN/CMD/ENTRYPOINT.
    pub fn script(&self) -> Option<&str> {
        (self.form == Form::Shell && self.keyword.takes_script()).then_some(self.raw.as_str())
    }

    pub fn from_image(&self) -> Option<&FromImage> {
        match &self.detail {
            Detail::From(f) => Some(f),
            _ => None,
        }
    }

    /// Source `(line, column)` of a byte offset into [`Instruction::raw`].
    pub fn locate(&self, offset: usize) -> (u32, u32) {
        let logical = self.raw_start + offset;
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.offset <= logical)
            .or(self.segments.first())
            .copied()
            .unwrap_or(Segment {
                offset: 0,
                line: self.line_span.start,
                column: 1,
            });
        let delta = logical.saturating_sub(seg.offset) as u32;
        (seg.line, seg.column + delta)
    }

    /// Source position of the keyword.
    pub fn origin(&self) -> (u32, u32) {
        self.segments
            .first()
            .map(|s| (s.line, s.column))
            .unwrap_or((self.line_span.start, 1))
    }

    /// Single-line canonical text; parsing it back yields the same structure.
    pub fn canonical(&self) -> String {
        let mut out = self.keyword.as_str().to_string();
        for flag in &self.flags {
            out.push(' ');
            out.push_str(&flag.to_string());
        }
        if !self.raw.is_empty() {
            out.push(' ');
            out.push_str(&self.raw);
        }
        out
    }

    /// Equality ignoring source positions.
    pub fn same_structure(&self, other: &Instruction) -> bool {
        let detail_eq = match (&self.detail, &other.detail) {
            (Detail::Onbuild(a), Detail::Onbuild(b)) => a.same_structure(b),
            (Detail::Healthcheck(Some(a)), Detail::Healthcheck(Some(b))) => a.same_structure(b),
            (a, b) => a == b,
        };
        self.keyword == other.keyword
            && self.form == other.form
            && self.args == other.args
            && self.flags == other.flags
            && self.raw == other.raw
            && detail_eq
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DockerfileAst {
    pub instructions: Vec<Instruction>,
    pub source_name: String,
    /// Diagnostics such as ignored parser directives.
    pub notes: Vec<String>,
    /// Number of physical source lines.
    pub line_count: u32,
}

impl DockerfileAst {
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for ins in &self.instructions {
            out.push_str(&ins.canonical());
            out.push('\n');
        }
        out
    }

    pub fn same_structure(&self, other: &DockerfileAst) -> bool {
        self.instructions.len() == other.instructions.len()
            && self
                .instructions
                .iter()
                .zip(&other.instructions)
                .all(|(a, b)| a.same_structure(b))
    }
}

/// Drops LABEL and MAINTAINER instructions.
pub fn strip_declarations(ast: DockerfileAst) -> DockerfileAst {
    DockerfileAst {
        instructions: ast
            .instructions
            .into_iter()
            .filter(|i| !i.keyword.is_declaration())
            .collect(),
        ..ast
    }
}

pub fn parse_dockerfile(text: &str) -> Result<DockerfileAst, SyntaxError> {
    parse_named("Dockerfile", text)
}

pub fn parse_named(source_name: &str, text: &str) -> Result<DockerfileAst, SyntaxError> {
    let lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    // A trailing newline does not open another line.
    let line_total = if text.ends_with('\n') {
        lines.len() - 1
    } else {
        lines.len()
    };
    let lines = &lines[..line_total];

    let mut escape = '\\';
    let mut notes = Vec::new();
    let mut idx = 0;

    // Parser directives are only recognised before anything else.
    while idx < lines.len() {
        match parse_directive(lines[idx]) {
            Some((name, value)) => {
                if name == "escape" {
                    escape = match value.as_str() {
                        "\\" => '\\',
                        "`" => '`',
                        other => {
                            return Err(SyntaxError::new(
                                idx as u32 + 1,
                                format!("invalid escape directive value {other:?}"),
                            ))
                        }
                    };
                } else {
                    notes.push(format!(
                        "line {}: parser directive `{name}` ignored",
                        idx + 1
                    ));
                }
                idx += 1;
            }
            None => break,
        }
    }

    let mut instructions = Vec::new();
    while idx < lines.len() {
        let line = lines[idx];
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            idx += 1;
            continue;
        }

        let start_line = idx as u32 + 1;
        let lead = line.len() - trimmed.len();
        let mut logical = String::new();
        let mut segments = vec![Segment {
            offset: 0,
            line: start_line,
            column: lead as u32 + 1,
        }];
        let (body, mut continues) = trim_continuation(trimmed, escape);
        logical.push_str(body);
        let mut end_line = start_line;
        idx += 1;

        while continues && idx < lines.len() {
            let next = lines[idx];
            let next_trim = next.trim_start();
            idx += 1;
            if next_trim.is_empty() || next_trim.starts_with('#') {
                continue;
            }
            end_line = idx as u32;
            segments.push(Segment {
                offset: logical.len(),
                line: end_line,
                column: 1,
            });
            let (body, more) = trim_continuation(next, escape);
            logical.push_str(body);
            continues = more;
        }

        let line_span = LineSpan::new(start_line, end_line);
        let ins = parse_instruction(&logical, 0, &segments, line_span, escape)?;
        instructions.push(ins);
    }

    Ok(DockerfileAst {
        instructions,
        source_name: source_name.to_string(),
        notes,
        line_count: lines.len() as u32,
    })
}

fn parse_directive(line: &str) -> Option<(String, String)> {
    let rest = line.trim_start().strip_prefix('#')?;
    let (name, value) = rest.split_once('=')?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
        return None;
    }
    Some((name.to_ascii_lowercase(), value.trim().to_string()))
}

/// Strips a trailing escape character (plus trailing blanks after it).
fn trim_continuation(line: &str, escape: char) -> (&str, bool) {
    let t = line.trim_end_matches([' ', '\t']);
    match t.strip_suffix(escape) {
        Some(body) => (body, true),
        None => (line, false),
    }
}

fn parse_instruction(
    logical: &str,
    start: usize,
    segments: &[Segment],
    line_span: LineSpan,
    escape: char,
) -> Result<Instruction, SyntaxError> {
    let line = line_span.start;
    let text = &logical[start..];
    let lead = text.len() - text.trim_start().len();
    let text = text.trim_start();
    let kw_len = text.find(char::is_whitespace).unwrap_or(text.len());
    let kw_text = &text[..kw_len];
    let keyword: Keyword = kw_text
        .parse()
        .map_err(|_| SyntaxError::new(line, format!("unknown instruction `{kw_text}`")))?;

    let mut pos = start + lead + kw_len;
    let mut flags = Vec::new();
    if keyword.accepts_flags() {
        loop {
            let rest = &logical[pos..];
            let ws = rest.len() - rest.trim_start().len();
            let rest = rest.trim_start();
            let Some(body) = rest.strip_prefix("--") else {
                break;
            };
            let word_len = body.find(char::is_whitespace).unwrap_or(body.len());
            let word = &body[..word_len];
            if word.is_empty() {
                break;
            }
            let flag = match word.split_once('=') {
                Some((n, v)) => Flag {
                    name: n.to_string(),
                    value: Some(v.to_string()),
                },
                None => Flag {
                    name: word.to_string(),
                    value: None,
                },
            };
            flags.push(flag);
            pos += ws + 2 + word_len;
        }
    }

    let rest = &logical[pos..];
    let raw_start = pos + (rest.len() - rest.trim_start().len());
    let raw = rest.trim().to_string();

    let mut form = Form::Shell;
    let mut args = Vec::new();
    let mut detail = Detail::None;

    if keyword.accepts_exec_form() && looks_like_exec_form(&raw) {
        let list: Vec<String> = serde_json::from_str(&raw).map_err(|_| {
            SyntaxError::new(line, format!("{keyword}: malformed exec-form list"))
        })?;
        form = Form::Exec;
        args = list;
    } else if keyword == Keyword::Shell {
        return Err(SyntaxError::new(line, "SHELL requires an exec-form list"));
    } else {
        match keyword {
            Keyword::Onbuild => {
                if raw.is_empty() {
                    return Err(SyntaxError::new(line, "ONBUILD requires an instruction"));
                }
                let inner = parse_instruction(logical, raw_start, segments, line_span, escape)?;
                if matches!(
                    inner.keyword,
                    Keyword::Onbuild | Keyword::From | Keyword::Maintainer
                ) {
                    return Err(SyntaxError::new(
                        line,
                        format!("ONBUILD cannot wrap {}", inner.keyword),
                    ));
                }
                args.push(raw.clone());
                detail = Detail::Onbuild(Box::new(inner));
            }
            Keyword::Healthcheck => {
                let head = raw.split_whitespace().next().unwrap_or("");
                if head.eq_ignore_ascii_case("NONE") {
                    detail = Detail::Healthcheck(None);
                } else if head.eq_ignore_ascii_case("CMD") {
                    let inner =
                        parse_instruction(logical, raw_start, segments, line_span, escape)?;
                    detail = Detail::Healthcheck(Some(Box::new(inner)));
                } else {
                    return Err(SyntaxError::new(
                        line,
                        "HEALTHCHECK expects NONE or CMD",
                    ));
                }
                args.push(raw.clone());
            }
            k if k.takes_script() => {
                if k == Keyword::Run && has_heredoc(&raw) {
                    return Err(SyntaxError::new(line, "heredocs are not supported"));
                }
                if !raw.is_empty() {
                    args.push(raw.clone());
                }
            }
            _ => {
                if matches!(keyword, Keyword::Copy | Keyword::Add) && has_heredoc(&raw) {
                    return Err(SyntaxError::new(line, "heredocs are not supported"));
                }
                args = split_words(&raw, escape).map_err(|reason| SyntaxError::new(line, reason))?;
            }
        }
    }

    if keyword == Keyword::From {
        detail = Detail::From(parse_from(&args, &flags, line)?);
    } else if args.is_empty()
        && !(form == Form::Exec && matches!(keyword, Keyword::Cmd | Keyword::Entrypoint))
    {
        return Err(SyntaxError::new(
            line,
            format!("{keyword} requires at least one argument"),
        ));
    }

    Ok(Instruction {
        keyword,
        form,
        args,
        flags,
        line_span,
        detail,
        raw,
        raw_start,
        segments: segments.to_vec(),
    })
}

/// `[` followed by a quote or a closing bracket commits to exec form;
/// anything else (such as `[ -f x ]`) is a shell test.
fn looks_like_exec_form(raw: &str) -> bool {
    let Some(rest) = raw.strip_prefix('[') else {
        return false;
    };
    matches!(rest.trim_start().chars().next(), Some('"') | Some(']'))
}

fn has_heredoc(raw: &str) -> bool {
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'<' && bytes[i + 1] == b'<' {
            let prev_lt = i > 0 && bytes[i - 1] == b'<';
            let mut j = i + 2;
            if j < bytes.len() && bytes[j] == b'<' {
                // here-string
                i = j + 1;
                continue;
            }
            if !prev_lt {
                if j < bytes.len() && bytes[j] == b'-' {
                    j += 1;
                }
                while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'"' || bytes[j] == b'\'') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j].is_ascii_alphabetic() || bytes[j] == b'_') {
                    return true;
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    false
}

/// Quote-aware whitespace splitting for non-script instructions.
fn split_words(raw: &str, escape: char) -> Result<Vec<String>, String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut in_word = false;
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == escape {
            in_word = true;
            match chars.next() {
                Some(n) => cur.push(n),
                None => cur.push(c),
            }
        } else if c == '"' || c == '\'' {
            in_word = true;
            let mut closed = false;
            while let Some(n) = chars.next() {
                if n == c {
                    closed = true;
                    break;
                }
                if c == '"' && n == escape {
                    match chars.next() {
                        Some(e) if e == '"' || e == escape => cur.push(e),
                        Some(e) => {
                            cur.push(n);
                            cur.push(e);
                        }
                        None => cur.push(n),
                    }
                } else {
                    cur.push(n);
                }
            }
            if !closed {
                return Err(format!("unterminated {c} quote"));
            }
        } else if c.is_whitespace() {
            if in_word {
                words.push(std::mem::take(&mut cur));
                in_word = false;
            }
        } else {
            in_word = true;
            cur.push(c);
        }
    }
    if in_word {
        words.push(cur);
    }
    Ok(words)
}

fn parse_from(args: &[String], flags: &[Flag], line: u32) -> Result<FromImage, SyntaxError> {
    let (reference, alias) = match args {
        [] => return Err(SyntaxError::new(line, "FROM requires an image")),
        [image] => (image, None),
        [image, as_kw, alias] if as_kw.eq_ignore_ascii_case("AS") => (image, Some(alias.clone())),
        _ => {
            return Err(SyntaxError::new(
                line,
                "FROM expects `<image>[:<tag>] [AS <name>]`",
            ))
        }
    };
    let (name_tag, digest) = match reference.split_once('@') {
        Some((n, d)) => (n, Some(d.to_string())),
        None => (reference.as_str(), None),
    };
    let slash = name_tag.rfind('/').map(|i| i + 1).unwrap_or(0);
    let (image, tag) = match name_tag[slash..].rfind(':') {
        Some(c) => (
            name_tag[..slash + c].to_string(),
            Some(name_tag[slash + c + 1..].to_string()),
        ),
        None => (name_tag.to_string(), None),
    };
    if image.is_empty() {
        return Err(SyntaxError::new(line, "FROM requires an image"));
    }
    let platform = flags
        .iter()
        .find(|f| f.name == "platform")
        .and_then(|f| f.value.clone());
    Ok(FromImage {
        platform,
        image,
        tag,
        digest,
        alias,
    })
}
