//! Variable substitution: maps concrete argument values to a closed
//! vocabulary of abstract tokens.

use regex::Regex;
use std::collections::BTreeSet;
use std::sync::LazyLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Url,
    Path,
    File,
    Other,
}

/// What part of an argument a rule's pattern is tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The URL scheme, lowercased (only for `scheme://` arguments).
    Scheme,
    /// The last path component.
    Basename,
    /// The whole argument.
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubstitutionRule {
    pub pattern: &'static str,
    pub target: Target,
    pub category: Category,
    /// Empty for the generic scheme row, whose token is derived from the match.
    pub replacement: &'static str,
    /// Lower wins.
    pub priority: u8,
}

const fn row(
    pattern: &'static str,
    target: Target,
    category: Category,
    replacement: &'static str,
    priority: u8,
) -> SubstitutionRule {
    SubstitutionRule {
        pattern,
        target,
        category,
        replacement,
        priority,
    }
}

use Category::*;
use Target::*;

pub const VAR_REF: &str = "VAR-REF";
pub const CMD_SUBST: &str = "CMD-SUBST";

/// Rows in evaluation order.
pub const TABLE: [SubstitutionRule; 35] = [
    // exact file names
    row(r"^go\.sum$", Basename, File, "FILE-GO-SUM", 1),
    row(r"^go\.mod$", Basename, File, "FILE-GO-MOD", 1),
    row(r"^Cargo\.toml$", Basename, File, "FILE-Rust-CARGO-TOME", 1),
    row(r"^yarn\.lock$", Basename, File, "FILE-YARN-YARN.LOCK", 1),
    row(r"^package\.json$", Basename, File, "FILE-NPM-PACKAGE.JSON", 1),
    row(r"^CMakeLists\.txt$", Basename, File, "FILE-CMAKEFILEM", 1),
    row(
        r"(?i)^.*requirements?[^/]*\.txt$",
        Basename,
        File,
        "FILE-PIP-REQUIREMENT.TXT",
        1,
    ),
    // extensions
    row(r"(?i)\.tar\.gz$", Basename, File, "FILE-TAR-GZ", 2),
    row(r"(?i)\.tar\.bz2$", Basename, File, "FILE-TAR-BZ2", 2),
    row(r"(?i)\.tar$", Basename, File, "FILE-TAR", 2),
    row(r"(?i)\.zip$", Basename, File, "FILE-ZIP", 2),
    row(r"(?i)\.jar$", Basename, File, "FILE-JAVA-JAR", 2),
    row(r"(?i)\.sh$", Basename, File, "FILE-SHELL-SCRIPT", 2),
    row(r"(?i)\.crt$", Basename, File, "FILE-TLS-CERT", 2),
    row(r"(?i)\.pem$", Basename, File, "FILE-TLS-CERT", 2),
    row(r"(?i)\.key$", Basename, File, "FILE-KEY", 2),
    row(r"(?i)\.gem$", Basename, File, "FILE-GEM", 2),
    row(r"(?i)\.asc$", Basename, File, "FILE-ASC", 2),
    // long path prefixes
    row(r"(^|/)var/cache/yum(/|$)", Whole, Path, "PATH-VAR-CACHE-YUM", 3),
    row(r"(^|/)var/cache(/|$)", Whole, Path, "PATH-VAR-CACHE", 3),
    row(r"(^|/)var/lib/apt/lists(/|$)", Whole, Path, "PATH-APT-LIST", 3),
    // short path prefixes
    row(r"^(.*/src(/.*)?|src/.*)$", Whole, Path, "PATH-SRC-DIR", 4),
    row(
        r"^(.*/\.?cache(/.*)?|\.?cache/.*|\.cache)$",
        Whole,
        Path,
        "PATH-DOT-CACHE",
        4,
    ),
    row(r"^~", Whole, Path, "PATH-NORMAL", 4),
    row(r"^\.\.?(/|$)", Whole, Path, "PATH-NORMAL", 4),
    // url protocols
    row(r"^http$", Scheme, Url, "URL-PROTOCOL-HTTP", 5),
    row(r"^https$", Scheme, Url, "URL-PROTOCOL-HTTPS", 5),
    row(r"^ftp$", Scheme, Url, "URL-PROTOCOL-FTP", 5),
    row(r"^git$", Scheme, Url, "URL-PROTOCOL-GIT", 5),
    row(r"(?i)\.git/?$", Whole, Url, "URL-PROTOCOL-GIT", 5),
    row(r"^\w+$", Scheme, Url, "", 5),
    // other
    row(r"^(t|T)rue$", Whole, Other, "TRUE", 6),
    row(r"^(f|F)alse$", Whole, Other, "FALSE", 6),
    row(r"^\*$", Whole, Other, "GLOB-STAR", 6),
    // fallback for anything path-shaped
    row(r"[/.~]", Whole, Path, "PATH-NORMAL", 7),
];

static COMPILED: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    TABLE
        .iter()
        .map(|r| Regex::new(r.pattern).expect("substitution pattern"))
        .collect()
});

static SCHEME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\w+)://").unwrap());
static GENERIC_PROTOCOL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^URL-PROTOCOL-[A-Z0-9_]+$").unwrap());

static VOCABULARY: LazyLock<BTreeSet<&'static str>> = LazyLock::new(|| {
    TABLE
        .iter()
        .map(|r| r.replacement)
        .filter(|r| !r.is_empty())
        .chain([VAR_REF, CMD_SUBST])
        .collect()
});

/// True for tokens of the substitution vocabulary.
pub fn is_canonical(text: &str) -> bool {
    VOCABULARY.contains(text) || GENERIC_PROTOCOL.is_match(text)
}

fn protocol_token(scheme: &str) -> String {
    format!("URL-PROTOCOL-{}", scheme.to_ascii_uppercase())
}

/// Replaces `$X`, `${X}` with `VAR-REF` and `$(..)`, backticks with
/// `CMD-SUBST`, until nothing is left to replace.
pub fn normalize_expansions(raw: &str) -> String {
    let mut cur = expand_once(raw);
    loop {
        let next = expand_once(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn expand_once(raw: &str) -> String {
    if !raw.contains('$') && !raw.contains('`') {
        return raw.to_string();
    }
    let bytes = raw.as_bytes();
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'$' if i + 1 < bytes.len() && bytes[i + 1] == b'(' => {
                i = skip_balanced(bytes, i + 1, b'(', b')');
                out.push_str(CMD_SUBST);
            }
            b'$' if i + 1 < bytes.len() && bytes[i + 1] == b'{' => {
                i = skip_balanced(bytes, i + 1, b'{', b'}');
                out.push_str(VAR_REF);
            }
            b'$' if i + 1 < bytes.len()
                && (bytes[i + 1].is_ascii_alphanumeric()
                    || matches!(bytes[i + 1], b'_' | b'@' | b'*' | b'#' | b'?' | b'!' | b'-')) =>
            {
                i += 1;
                if bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' {
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                } else {
                    i += 1;
                }
                out.push_str(VAR_REF);
            }
            b'`' => {
                let end = raw[i + 1..].find('`').map(|e| i + 1 + e + 1);
                i = end.unwrap_or(bytes.len());
                out.push_str(CMD_SUBST);
            }
            _ => {
                let ch = raw[i..].chars().next().unwrap();
                out.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    out
}

/// Index just past the bracket closing the one at `open`.
fn skip_balanced(bytes: &[u8], open: usize, l: u8, r: u8) -> usize {
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        if bytes[i] == l {
            depth += 1;
        } else if bytes[i] == r {
            depth -= 1;
            if depth == 0 {
                return i + 1;
            }
        }
        i += 1;
    }
    bytes.len()
}

fn basename(s: &str) -> &str {
    let trimmed = s.trim_end_matches('/');
    trimmed.rsplit('/').next().unwrap_or(trimmed)
}

/// The first table row matching `raw` outside of the URL branch, if any.
fn match_plain(s: &str) -> Option<usize> {
    let base = basename(s);
    TABLE.iter().enumerate().position(|(i, r)| match r.target {
        Scheme => false,
        Basename => COMPILED[i].is_match(base),
        Whole => COMPILED[i].is_match(s),
    })
}

fn match_file(base: &str) -> Option<usize> {
    TABLE
        .iter()
        .enumerate()
        .position(|(i, r)| r.category == File && COMPILED[i].is_match(base))
}

/// Indices of the table rows that fire for `raw`, in emission order.
pub fn matching_rows(raw: &str) -> Vec<usize> {
    let s = normalize_expansions(raw);
    if is_canonical(&s) || is_flag(&s) {
        return Vec::new();
    }
    if let Some(cap) = SCHEME.captures(&s) {
        let scheme = cap[1].to_ascii_lowercase();
        let mut rows = Vec::new();
        let proto = TABLE
            .iter()
            .enumerate()
            .position(|(i, r)| r.target == Scheme && COMPILED[i].is_match(&scheme))
            .expect("generic scheme row");
        rows.push(proto);
        let after = &s[cap.get(0).unwrap().end()..];
        let path = after.split(['?', '#']).next().unwrap_or("");
        let base = match path.split_once('/') {
            Some((_, p)) => basename(p),
            None => "",
        };
        let git_row = TABLE
            .iter()
            .position(|r| r.target == Whole && r.replacement == "URL-PROTOCOL-GIT")
            .unwrap();
        if COMPILED[git_row].is_match(base) {
            if TABLE[proto].replacement != "URL-PROTOCOL-GIT" {
                rows.push(git_row);
            }
        } else if let Some(f) = match_file(base) {
            rows.push(f);
        }
        return rows;
    }
    match_plain(&s).into_iter().collect()
}

fn is_flag(s: &str) -> bool {
    s.starts_with('-')
}

/// Canonical tokens for one argument.
pub fn substitute(raw: &str) -> Vec<String> {
    let s = normalize_expansions(raw);
    if is_canonical(&s) || is_flag(&s) {
        return vec![s];
    }
    let rows = matching_rows(raw);
    if rows.is_empty() {
        return vec![s];
    }
    let scheme = SCHEME.captures(&s).map(|c| c[1].to_string());
    rows.into_iter()
        .map(|i| {
            let r = &TABLE[i];
            if r.replacement.is_empty() {
                protocol_token(scheme.as_deref().unwrap_or(""))
            } else {
                r.replacement.to_string()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(s: &str) -> Vec<String> {
        substitute(s)
    }

    #[test]
    fn examples() {
        assert_eq!(
            sub("https://abc.com/a/download.zip"),
            ["URL-PROTOCOL-HTTPS", "FILE-ZIP"]
        );
        assert_eq!(sub("/var/lib/apt/lists/*"), ["PATH-APT-LIST"]);
        assert_eq!(sub("/app/requirement.txt"), ["FILE-PIP-REQUIREMENT.TXT"]);
        assert_eq!(sub("true"), ["TRUE"]);
        assert_eq!(sub("--no-cache-dir"), ["--no-cache-dir"]);
    }

    #[test]
    fn nested_paths_prefer_longest() {
        assert_eq!(sub("/var/cache/yum"), ["PATH-VAR-CACHE-YUM"]);
        assert_eq!(sub("/var/cache/yum/x86_64"), ["PATH-VAR-CACHE-YUM"]);
        assert_eq!(sub("/var/cache/apk"), ["PATH-VAR-CACHE"]);
        assert_eq!(sub("/var/cache"), ["PATH-VAR-CACHE"]);
    }

    #[test]
    fn urls() {
        assert_eq!(sub("http://x.org/"), ["URL-PROTOCOL-HTTP"]);
        assert_eq!(sub("ftp://x.org/f.tar.gz"), ["URL-PROTOCOL-FTP", "FILE-TAR-GZ"]);
        assert_eq!(sub("git://x.org/r.git"), ["URL-PROTOCOL-GIT"]);
        assert_eq!(
            sub("https://github.com/a/b.git"),
            ["URL-PROTOCOL-HTTPS", "URL-PROTOCOL-GIT"]
        );
        assert_eq!(sub("s3://bucket/key"), ["URL-PROTOCOL-S3"]);
        assert_eq!(
            sub("git+ssh://host/x"),
            ["URL-PROTOCOL-SSH"]
        );
        assert_eq!(
            sub("https://x.org/f.zip?raw=1"),
            ["URL-PROTOCOL-HTTPS", "FILE-ZIP"]
        );
        assert_eq!(sub("git@github.com:a/b.git"), ["URL-PROTOCOL-GIT"]);
    }

    #[test]
    fn expansions() {
        assert_eq!(sub("$HOME"), [VAR_REF]);
        assert_eq!(sub("${VERSION}"), [VAR_REF]);
        assert_eq!(sub("$(nproc)"), [CMD_SUBST]);
        assert_eq!(sub("`date`"), [CMD_SUBST]);
        assert_eq!(sub("app-$VERSION.tar.gz"), ["FILE-TAR-GZ"]);
        assert_eq!(sub("${HOME}/.cache/pip"), ["PATH-DOT-CACHE"]);
        assert_eq!(sub("-j$(nproc)"), ["-jCMD-SUBST"]);
    }

    #[test]
    fn plain_words_pass_through() {
        assert_eq!(sub("install"), ["install"]);
        assert_eq!(sub("cache"), ["cache"]);
        assert_eq!(sub("src"), ["src"]);
        assert_eq!(sub("src/main"), ["PATH-SRC-DIR"]);
        assert_eq!(sub("/usr/src/app"), ["PATH-SRC-DIR"]);
        assert_eq!(sub("."), ["PATH-NORMAL"]);
        assert_eq!(sub("~/x"), ["PATH-NORMAL"]);
        assert_eq!(sub("/usr/local/bin"), ["PATH-NORMAL"]);
        assert_eq!(sub("python3.8"), ["PATH-NORMAL"]);
        assert_eq!(sub("*"), ["GLOB-STAR"]);
        assert_eq!(sub("TRUE"), ["TRUE"]);
        assert_eq!(sub("tRue"), ["tRue"]);
    }

    #[test]
    fn vocabulary_is_idempotent() {
        for r in TABLE.iter().filter(|r| !r.replacement.is_empty()) {
            assert_eq!(sub(r.replacement), [r.replacement]);
        }
        assert_eq!(sub("URL-PROTOCOL-S3"), ["URL-PROTOCOL-S3"]);
    }

    #[test]
    fn table_is_sorted_by_priority() {
        assert!(TABLE.windows(2).all(|w| w[0].priority <= w[1].priority));
        assert_eq!(TABLE.iter().filter(|r| r.category == File).count(), 18);
        assert_eq!(TABLE.iter().filter(|r| r.category == Path).count(), 8);
        assert_eq!(TABLE.iter().filter(|r| r.category == Url).count(), 6);
        assert_eq!(TABLE.iter().filter(|r| r.category == Other).count(), 3);
    }
}
