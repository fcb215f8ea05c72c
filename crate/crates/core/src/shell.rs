//! A small POSIX-ish shell parser for RUN scripts.
//!
//! Only what the token sequence needs is modelled: simple commands, their
//! words, leading assignments and redirections. Compound commands
//! (`if`, loops, `case`, subshells, brace groups) are flattened into the
//! enclosing statement list and recorded through `has_control_flow`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("offset {position}: {reason}")]
pub struct ShellSyntaxError {
    pub position: usize,
    pub reason: String,
}

impl ShellSyntaxError {
    fn new(position: usize, reason: impl Into<String>) -> Self {
        Self {
            position,
            reason: reason.into(),
        }
    }
}

/// One shell word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    /// Value with quoting removed. Expansions (`$X`, `${X}`, `$(...)`,
    /// backticks) are kept verbatim.
    pub text: String,
    /// Source text of the word, quotes included.
    pub raw: String,
    /// Byte offset of the word in the script.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redirection {
    pub operator: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallStatement {
    pub command: Word,
    pub args: Vec<Word>,
    pub redirections: Vec<Redirection>,
}

impl CallStatement {
    pub fn arg_texts(&self) -> impl Iterator<Item = &str> {
        self.args.iter().map(|w| w.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub name: String,
    pub value: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShellStatement {
    Assign(Assignment),
    Call(CallStatement),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShellAst {
    pub statements: Vec<ShellStatement>,
    pub has_control_flow: bool,
}

impl ShellAst {
    pub fn calls(&self) -> impl Iterator<Item = &CallStatement> {
        self.statements.iter().filter_map(|s| match s {
            ShellStatement::Call(c) => Some(c),
            ShellStatement::Assign(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(Word),
    Op(&'static str, usize),
    Redirect(String, usize),
}

const OPERATORS: [&str; 21] = [
    "&>>", "<<<", "<<-", "&&", "||", ";;", ";&", "|&", "&>", "<<", "<&", "<>", ">>", ">&", ">|",
    "&", ";", "|", "(", ")", "\n",
];
const REDIRECTS: [&str; 12] = [
    "&>>", "<<<", "<<-", "&>", "<<", "<&", "<>", ">>", ">&", ">|", "<", ">",
];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn tokens(mut self) -> Result<Vec<Tok>, ShellSyntaxError> {
        let mut out = Vec::new();
        loop {
            // blanks and line continuations
            loop {
                match self.peek() {
                    Some(' ') | Some('\t') | Some('\r') => {
                        self.pos += 1;
                    }
                    Some('\\') if self.src[self.pos + 1..].starts_with('\n') => {
                        self.pos += 2;
                    }
                    _ => break,
                }
            }
            let Some(c) = self.peek() else { break };
            let rest = &self.src[self.pos..];
            if c == '#' {
                let end = rest.find('\n').unwrap_or(rest.len());
                self.pos += end;
                continue;
            }
            if let Some(op) = REDIRECTS.iter().find(|op| rest.starts_with(**op)) {
                out.push(Tok::Redirect((*op).to_string(), self.pos));
                self.pos += op.len();
                continue;
            }
            if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                out.push(Tok::Op(op, self.pos));
                self.pos += op.len();
                continue;
            }
            let word = self.word()?;
            // `2>&1`: a bare number glued to a redirection is its fd.
            if word.raw.chars().all(|c| c.is_ascii_digit())
                && matches!(self.peek(), Some('<') | Some('>'))
            {
                let rest = &self.src[self.pos..];
                if let Some(op) = REDIRECTS.iter().find(|op| rest.starts_with(**op)) {
                    out.push(Tok::Redirect(format!("{}{}", word.raw, op), word.offset));
                    self.pos += op.len();
                    continue;
                }
            }
            out.push(Tok::Word(word));
        }
        Ok(out)
    }

    fn word(&mut self) -> Result<Word, ShellSyntaxError> {
        let start = self.pos;
        let mut text = String::new();
        while let Some(c) = self.peek() {
            match c {
                ' ' | '\t' | '\r' | '\n' | ';' | '&' | '|' | '(' | ')' | '<' | '>' => break,
                '\\' => {
                    self.bump();
                    match self.bump() {
                        Some('\n') => {}
                        Some(n) => text.push(n),
                        None => text.push('\\'),
                    }
                }
                '\'' => {
                    let open = self.pos;
                    self.bump();
                    let rest = &self.src[self.pos..];
                    let end = rest
                        .find('\'')
                        .ok_or_else(|| ShellSyntaxError::new(open, "unterminated single quote"))?;
                    text.push_str(&rest[..end]);
                    self.pos += end + 1;
                }
                '"' => self.double_quoted(&mut text)?,
                '$' => self.dollar(&mut text)?,
                '`' => self.backtick(&mut text)?,
                _ => {
                    self.bump();
                    text.push(c);
                }
            }
        }
        Ok(Word {
            text,
            raw: self.src[start..self.pos].to_string(),
            offset: start,
        })
    }

    fn double_quoted(&mut self, text: &mut String) -> Result<(), ShellSyntaxError> {
        let open = self.pos;
        self.bump();
        loop {
            match self.peek() {
                None => return Err(ShellSyntaxError::new(open, "unterminated double quote")),
                Some('"') => {
                    self.bump();
                    return Ok(());
                }
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some('\n') => {}
                        Some(n @ ('$' | '`' | '"' | '\\')) => text.push(n),
                        Some(n) => {
                            text.push('\\');
                            text.push(n);
                        }
                        None => {
                            return Err(ShellSyntaxError::new(open, "unterminated double quote"))
                        }
                    }
                }
                Some('$') => self.dollar(text)?,
                Some('`') => self.backtick(text)?,
                Some(c) => {
                    self.bump();
                    text.push(c);
                }
            }
        }
    }

    /// `$name`, `${...}`, `$(...)` and `$((...))`, copied verbatim.
    fn dollar(&mut self, text: &mut String) -> Result<(), ShellSyntaxError> {
        let open = self.pos;
        self.bump();
        match self.peek() {
            Some('(') => {
                self.balanced('(', ')', open, "unbalanced command substitution")?;
            }
            Some('{') => {
                self.balanced('{', '}', open, "unterminated parameter expansion")?;
            }
            _ => {}
        }
        text.push_str(&self.src[open..self.pos]);
        Ok(())
    }

    fn balanced(
        &mut self,
        open_c: char,
        close_c: char,
        open: usize,
        reason: &str,
    ) -> Result<(), ShellSyntaxError> {
        let mut depth = 0usize;
        loop {
            match self.bump() {
                None => return Err(ShellSyntaxError::new(open, reason)),
                Some('\\') => {
                    self.bump();
                }
                Some('\'') => {
                    let rest = &self.src[self.pos..];
                    let end = rest
                        .find('\'')
                        .ok_or_else(|| ShellSyntaxError::new(open, reason))?;
                    self.pos += end + 1;
                }
                Some('"') => {
                    let mut scratch = String::new();
                    self.pos -= 1;
                    self.double_quoted(&mut scratch)
                        .map_err(|_| ShellSyntaxError::new(open, reason))?;
                }
                Some('`') => {
                    self.pos -= 1;
                    let mut scratch = String::new();
                    self.backtick(&mut scratch)
                        .map_err(|_| ShellSyntaxError::new(open, reason))?;
                }
                Some(c) if c == open_c => depth += 1,
                Some(c) if c == close_c => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                Some(_) => {}
            }
        }
    }

    fn backtick(&mut self, text: &mut String) -> Result<(), ShellSyntaxError> {
        let open = self.pos;
        self.bump();
        loop {
            match self.bump() {
                None => {
                    return Err(ShellSyntaxError::new(
                        open,
                        "unbalanced command substitution",
                    ))
                }
                Some('\\') => {
                    self.bump();
                }
                Some('`') => break,
                Some(_) => {}
            }
        }
        text.push_str(&self.src[open..self.pos]);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Next word starts a command.
    CommandStart,
    /// Inside a simple command.
    InCommand,
    /// Skipping a `for` header up to its `do`.
    ForHeader { seen_separator: bool },
    /// After `case WORD in` or `;;`: expecting a pattern or `esac`.
    CasePattern,
    /// Reading a case pattern up to `)`.
    InCasePattern,
    /// `case` seen, skipping its subject and `in`.
    CaseHeader,
}

struct Builder {
    statements: Vec<ShellStatement>,
    has_control_flow: bool,
    words: Vec<Word>,
    redirections: Vec<Redirection>,
    pending_redirect: Option<String>,
    case_depth: usize,
}

impl Builder {
    fn flush(&mut self) {
        let mut words = std::mem::take(&mut self.words).into_iter().peekable();
        let redirections = std::mem::take(&mut self.redirections);
        while let Some(w) = words.next_if(|w| assignment_split(w).is_some()) {
            let (name, value) = assignment_split(&w).unwrap();
            self.statements.push(ShellStatement::Assign(Assignment {
                name,
                value,
                offset: w.offset,
            }));
        }
        if let Some(command) = words.next() {
            self.statements.push(ShellStatement::Call(CallStatement {
                command,
                args: words.collect(),
                redirections,
            }));
        }
    }
}

fn assignment_split(w: &Word) -> Option<(String, String)> {
    let eq = w.raw.find('=')?;
    let name = &w.raw[..eq];
    let mut chars = name.chars();
    let first = chars.next()?;
    if !(first.is_ascii_alphabetic() || first == '_')
        || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return None;
    }
    let value = w.text.split_once('=').map(|(_, v)| v).unwrap_or("");
    Some((name.to_string(), value.to_string()))
}

fn is_unquoted(w: &Word, s: &str) -> bool {
    w.raw == s
}

pub fn parse_shell(script: &str) -> Result<ShellAst, ShellSyntaxError> {
    let tokens = Lexer {
        src: script,
        pos: 0,
    }
    .tokens()?;

    let mut b = Builder {
        statements: Vec::new(),
        has_control_flow: false,
        words: Vec::new(),
        redirections: Vec::new(),
        pending_redirect: None,
        case_depth: 0,
    };
    let mut mode = Mode::CommandStart;

    for tok in tokens {
        if let Some(op) = b.pending_redirect.take() {
            if let Tok::Word(w) = &tok {
                b.redirections.push(Redirection {
                    operator: op,
                    target: w.text.clone(),
                });
                continue;
            }
            b.redirections.push(Redirection {
                operator: op,
                target: String::new(),
            });
        }
        match mode {
            Mode::ForHeader { seen_separator } => {
                match &tok {
                    Tok::Word(w) if seen_separator && is_unquoted(w, "do") => {
                        mode = Mode::CommandStart;
                    }
                    Tok::Op(";", _) | Tok::Op("\n", _) => {
                        mode = Mode::ForHeader {
                            seen_separator: true,
                        }
                    }
                    _ => {}
                }
                continue;
            }
            Mode::CaseHeader => {
                if let Tok::Word(w) = &tok {
                    if is_unquoted(w, "in") {
                        mode = Mode::CasePattern;
                    }
                }
                continue;
            }
            Mode::CasePattern => {
                match &tok {
                    Tok::Op("\n", _) | Tok::Op("(", _) => {}
                    Tok::Word(w) if is_unquoted(w, "esac") => {
                        b.case_depth = b.case_depth.saturating_sub(1);
                        mode = Mode::InCommand;
                    }
                    Tok::Op(")", _) => mode = Mode::CommandStart,
                    _ => mode = Mode::InCasePattern,
                }
                continue;
            }
            Mode::InCasePattern => {
                if let Tok::Op(")", _) = tok {
                    mode = Mode::CommandStart;
                }
                continue;
            }
            Mode::CommandStart | Mode::InCommand => {}
        }

        match tok {
            Tok::Word(w) => {
                if mode == Mode::CommandStart && b.words.is_empty() {
                    match w.raw.as_str() {
                        "if" | "while" | "until" => {
                            b.has_control_flow = true;
                            continue;
                        }
                        "then" | "else" | "elif" | "do" | "!" | "{" => continue,
                        "fi" | "done" | "}" => {
                            mode = Mode::InCommand;
                            continue;
                        }
                        "esac" => {
                            b.case_depth = b.case_depth.saturating_sub(1);
                            mode = Mode::InCommand;
                            continue;
                        }
                        "for" => {
                            b.has_control_flow = true;
                            mode = Mode::ForHeader {
                                seen_separator: false,
                            };
                            continue;
                        }
                        "case" => {
                            b.has_control_flow = true;
                            b.case_depth += 1;
                            mode = Mode::CaseHeader;
                            continue;
                        }
                        _ => {}
                    }
                }
                // Leading assignments keep us at command start.
                if !(mode == Mode::CommandStart && assignment_split(&w).is_some()) {
                    mode = Mode::InCommand;
                }
                b.words.push(w);
            }
            Tok::Redirect(op, _) => {
                b.pending_redirect = Some(op);
            }
            Tok::Op(op, _) => {
                b.flush();
                mode = match op {
                    ";;" | ";&" if b.case_depth > 0 => Mode::CasePattern,
                    _ => Mode::CommandStart,
                };
            }
        }
    }
    if let Some(op) = b.pending_redirect.take() {
        b.redirections.push(Redirection {
            operator: op,
            target: String::new(),
        });
    }
    b.flush();

    Ok(ShellAst {
        statements: b.statements,
        has_control_flow: b.has_control_flow,
    })
}

const WRAPPERS: [&str; 5] = ["sudo", "xargs", "env", "nice", "time"];

fn wrapper_value_flags(wrapper: &str) -> &'static [&'static str] {
    match wrapper {
        "sudo" => &["-u", "-g", "-h", "-p", "-C", "-D", "-r", "-t", "-U"],
        "xargs" => &["-n", "-I", "-P", "-d", "-L", "-s", "-a", "-E"],
        "env" => &["-u", "-C", "-S"],
        "nice" => &["-n"],
        "time" => &["-o", "-f"],
        _ => &[],
    }
}

/// Index into `[command, args...]` of the effective command once wrapper
/// commands (`sudo`, `xargs`, `env`, `nice`, `time`) are peeled off.
pub fn effective_command_index<S: AsRef<str>>(words: &[S]) -> usize {
    let mut idx = 0;
    while idx < words.len() {
        let cmd = words[idx].as_ref();
        if !WRAPPERS.contains(&cmd) {
            return idx;
        }
        let value_flags = wrapper_value_flags(cmd);
        let mut j = idx + 1;
        let mut found = None;
        while j < words.len() {
            let w = words[j].as_ref();
            if w == "--" {
                j += 1;
                if j < words.len() {
                    found = Some(j);
                }
                break;
            }
            if w.starts_with('-') && w.len() > 1 {
                j += if value_flags.contains(&w) { 2 } else { 1 };
                continue;
            }
            if cmd == "env" && w.contains('=') {
                j += 1;
                continue;
            }
            found = Some(j);
            break;
        }
        match found {
            Some(next) => idx = next,
            // A wrapper with nothing to run is itself the command.
            None => return idx,
        }
    }
    0
}

/// Splits a call into its effective command and parameters.
pub fn classify_tokens(stmt: &CallStatement) -> (String, Vec<String>) {
    let words: Vec<&str> = std::iter::once(stmt.command.text.as_str())
        .chain(stmt.arg_texts())
        .collect();
    let idx = effective_command_index(&words);
    (
        words[idx].to_string(),
        words[idx + 1..].iter().map(|s| s.to_string()).collect(),
    )
}
