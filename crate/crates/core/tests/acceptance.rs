//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dockmine::analyze;
use dockmine::corpus::{evaluate, parse_annotations, EvalReport};
use dockmine::detect::{check_file, disj_implies_window, implies_windows, sandwich_windows};
use dockmine::ir::substitution::{matching_rows, TABLE};
use dockmine::ir::substitute;
use dockmine::miner::{
    is_subsequence, maximal, maximal_of_closed, mine, prefixspan, MineConfig, SequenceDatabase,
};
use dockmine::rules::{builtin_catalog, is_semantic, Level, Matcher, RuleKind};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn data(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    std::fs::read_to_string(p).expect("test data")
}

fn ir_texts(src: &str) -> Vec<String> {
    analyze("Dockerfile", src)
        .expect("parses")
        .ir
        .tokens
        .into_iter()
        .map(|t| t.text)
        .collect()
}

fn within(limit: Duration, start: Instant) {
    let took = start.elapsed();
    assert!(took < limit, "took {took:?}, limit {limit:?}");
}

fn ir_fidelity() {
    let start = Instant::now();
    let toks = ir_texts(&data("python-app.Dockerfile"));
    assert_eq!(toks[0], "FROM-IMAGE-[python]-TAG-[SPECIFIC]");
    let pip: Vec<&str> = toks
        .iter()
        .map(String::as_str)
        .filter(|t| t.starts_with("SC-[pip]"))
        .collect();
    assert_eq!(
        pip,
        [
            "SC-[pip]",
            "SC-[pip]-ARG-[install]",
            "SC-[pip]-ARG-[--no-cache-dir]",
            "SC-[pip]-ARG-[-r]",
            "SC-[pip]-ARG-[FILE-PIP-REQUIREMENT.TXT]",
        ]
    );
    let without_r: Vec<&str> = pip.iter().copied().filter(|t| *t != "SC-[pip]-ARG-[-r]").collect();
    assert_eq!(
        without_r,
        [
            "SC-[pip]",
            "SC-[pip]-ARG-[install]",
            "SC-[pip]-ARG-[--no-cache-dir]",
            "SC-[pip]-ARG-[FILE-PIP-REQUIREMENT.TXT]",
        ]
    );
    assert!(toks.contains(&"COPY-ARG-[FILE-PIP-REQUIREMENT.TXT]".to_string()));
    assert!(toks.contains(&"SC-[rm]-ARG-[PATH-APT-LIST]".to_string()));
    assert!(toks.iter().all(|t| !t.contains("&&") && !t.contains('\\')));
    within(Duration::from_secs(1), start);
}

fn substitution_coverage() {
    let start = Instant::now();
    let cases: &[(&str, &[usize], &[&str])] = &[
        ("go.sum", &[0], &["FILE-GO-SUM"]),
        ("./go.mod", &[1], &["FILE-GO-MOD"]),
        ("Cargo.toml", &[2], &["FILE-Rust-CARGO-TOME"]),
        ("yarn.lock", &[3], &["FILE-YARN-YARN.LOCK"]),
        ("/app/package.json", &[4], &["FILE-NPM-PACKAGE.JSON"]),
        ("CMakeLists.txt", &[5], &["FILE-CMAKEFILEM"]),
        ("/app/requirement.txt", &[6], &["FILE-PIP-REQUIREMENT.TXT"]),
        ("requirements.txt", &[6], &["FILE-PIP-REQUIREMENT.TXT"]),
        ("pip-requirements.txt", &[6], &["FILE-PIP-REQUIREMENT.TXT"]),
        ("node-v18.tar.gz", &[7], &["FILE-TAR-GZ"]),
        ("/tmp/src.tar.bz2", &[8], &["FILE-TAR-BZ2"]),
        ("rootfs.tar", &[9], &["FILE-TAR"]),
        ("/tmp/app.zip", &[10], &["FILE-ZIP"]),
        ("/opt/app.jar", &[11], &["FILE-JAVA-JAR"]),
        ("entrypoint.sh", &[12], &["FILE-SHELL-SCRIPT"]),
        ("/usr/local/share/ca-certificates/corp.crt", &[13], &["FILE-TLS-CERT"]),
        ("cert.pem", &[14], &["FILE-TLS-CERT"]),
        ("server.key", &[15], &["FILE-KEY"]),
        ("bundler.gem", &[16], &["FILE-GEM"]),
        ("node.tar.gz.asc", &[17], &["FILE-ASC"]),
        ("/var/cache/yum", &[18], &["PATH-VAR-CACHE-YUM"]),
        ("/var/cache/apk/*", &[19], &["PATH-VAR-CACHE"]),
        ("/var/lib/apt/lists/*", &[20], &["PATH-APT-LIST"]),
        ("/usr/src/app", &[21], &["PATH-SRC-DIR"]),
        ("/root/.cache", &[22], &["PATH-DOT-CACHE"]),
        ("~/.npmrc", &[23], &["PATH-NORMAL"]),
        (".", &[24], &["PATH-NORMAL"]),
        ("http://deb.debian.org/", &[25], &["URL-PROTOCOL-HTTP"]),
        (
            "https://abc.com/a/download.zip",
            &[26, 10],
            &["URL-PROTOCOL-HTTPS", "FILE-ZIP"],
        ),
        ("ftp://ftp.gnu.org/gnu/", &[27], &["URL-PROTOCOL-FTP"]),
        ("git://github.com/a/b", &[28], &["URL-PROTOCOL-GIT"]),
        ("git@github.com:a/b.git", &[29], &["URL-PROTOCOL-GIT"]),
        (
            "https://github.com/a/b.git",
            &[26, 29],
            &["URL-PROTOCOL-HTTPS", "URL-PROTOCOL-GIT"],
        ),
        ("s3://bucket/key", &[30], &["URL-PROTOCOL-S3"]),
        ("True", &[31], &["TRUE"]),
        ("false", &[32], &["FALSE"]),
        ("*", &[33], &["GLOB-STAR"]),
        ("/usr/local/bin", &[34], &["PATH-NORMAL"]),
    ];
    let mut covered = BTreeSet::new();
    for (raw, rows, out) in cases {
        assert_eq!(matching_rows(raw), *rows, "rows for {raw}");
        assert_eq!(substitute(raw), *out, "tokens for {raw}");
        covered.extend(rows.iter().copied());
    }
    assert_eq!(TABLE.len(), 35);
    assert_eq!(covered, (0..35).collect::<BTreeSet<_>>());
    within(Duration::from_secs(1), start);
}

fn brute_force(db: &[Vec<String>], min_count: usize) -> BTreeMap<Vec<String>, usize> {
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for s in db {
        let mut subs = BTreeSet::new();
        for mask in 1u32..(1 << s.len()) {
            let sub: Vec<String> = (0..s.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| s[i].clone())
                .collect();
            subs.insert(sub);
        }
        for sub in subs {
            *counts.entry(sub).or_default() += 1;
        }
    }
    counts.retain(|_, c| *c >= min_count);
    counts
}

fn miner_oracle() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let thresholds = [0.25, 0.4, 0.5, 1.0];
    let mut checked = 0;
    for round in 0..240 {
        let t = thresholds[round % thresholds.len()];
        let alphabet = rng.gen_range(1..=6u8);
        let n = rng.gen_range(1..=8usize);
        let seqs: Vec<Vec<String>> = (0..n)
            .map(|_| {
                let len = rng.gen_range(0..=6usize);
                (0..len)
                    .map(|_| ((b'a' + rng.gen_range(0..alphabet)) as char).to_string())
                    .collect()
            })
            .collect();
        let db = SequenceDatabase::from_texts("x", seqs.clone());
        let min_count = (t * n as f64 - 1e-9).ceil().max(1.0) as usize;
        let expected = brute_force(&seqs, min_count);
        let got: BTreeMap<Vec<String>, usize> = prefixspan(&db, t, 12)
            .unwrap()
            .into_iter()
            .map(|p| (p.tokens, p.support_count))
            .collect();
        assert_eq!(got, expected, "db {seqs:?} at {t}");

        let keys: Vec<&Vec<String>> = expected.keys().collect();
        let hand: BTreeSet<Vec<String>> = keys
            .iter()
            .filter(|p| !keys.iter().any(|o| o != *p && is_subsequence(p, o)))
            .map(|p| (*p).clone())
            .collect();
        let got_max: BTreeSet<Vec<String>> = maximal(&prefixspan(&db, t, 12).unwrap())
            .into_iter()
            .map(|p| p.tokens)
            .collect();
        assert_eq!(got_max, hand, "maximal of {seqs:?} at {t}");
        let closed: BTreeSet<Vec<String>> = maximal_of_closed(&prefixspan(&db, t, 12).unwrap())
            .into_iter()
            .map(|p| p.tokens)
            .collect();
        assert_eq!(closed, hand, "closed maximal of {seqs:?} at {t}");
        checked += 1;
    }
    assert!(checked >= 200);
    within(Duration::from_secs(30), start);
}

const RUN_LINES: &[&str] = &[
    "apt-get update && apt-get install -y --no-install-recommends curl && rm -rf /var/lib/apt/lists/*",
    "pip install --no-cache-dir -r requirements.txt",
    "pip install flask",
    "curl -fsSL https://example.com/app.tar.gz -o /tmp/app.tar.gz && tar -xzf /tmp/app.tar.gz -C /opt && rm -f /tmp/app.tar.gz",
    "mkdir -p /opt/app && chown -R app /opt/app",
    "apk add --no-cache git",
    "npm ci && npm run build",
    "useradd -m app",
];

fn shrinkage() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..20 {
        let files: Vec<_> = (0..rng.gen_range(1..=12))
            .map(|i| {
                let mut src = String::from("FROM debian:12\n");
                let amount = rng.gen_range(1..=2);
                let picks = rand::seq::index::sample(&mut rng, RUN_LINES.len(), amount);
                for k in picks {
                    src.push_str("RUN ");
                    src.push_str(RUN_LINES[k]);
                    src.push('\n');
                }
                analyze(&format!("f{i}"), &src).unwrap().ir
            })
            .collect();
        let support = [0.25, 0.4, 0.6, 1.0][rng.gen_range(0..4)];
        let groups = mine(&files, MineConfig { min_support: support, max_len: 4 }).unwrap();
        for g in groups.values() {
            let g = g.as_ref().unwrap();
            assert!(g.frequent >= g.maximal && g.maximal >= g.pruned, "{g:?}");
        }
    }

    // 50 files, 40 of which pass --no-cache-dir.
    let corpus: Vec<_> = (0..50)
        .map(|i| {
            let flag = if i < 40 { " --no-cache-dir" } else { "" };
            let extra = ["flask", "-r requirements.txt", "numpy pandas", "."][i % 4];
            let src = format!(
                "FROM python:3.{}-slim\nWORKDIR /app\nCOPY . /app\nRUN pip install{flag} {extra}\nCMD [\"python\", \"main.py\"]\n",
                8 + i % 4
            );
            analyze(&format!("pip{i}"), &src).unwrap().ir
        })
        .collect();
    let groups = mine(&corpus, MineConfig::default()).unwrap();
    let pip = groups["pip"].as_ref().unwrap();
    assert!(pip.frequent >= pip.maximal && pip.maximal >= pip.pruned);
    let expected = ["SC-[pip]", "SC-[pip]-ARG-[install]", "SC-[pip]-ARG-[--no-cache-dir]"];
    assert!(
        pip.patterns
            .iter()
            .any(|p| is_subsequence(&expected, &p.pattern.tokens)),
        "{:#?}",
        pip.patterns
    );
    within(Duration::from_secs(30), start);
}

fn catalog_completeness() {
    use Level::{Encouraged as E, Mandatory as M};
    use RuleKind::*;
    type Row = (u32, RuleKind, Level, Option<(f64, f64)>);
    let expected: [Row; 34] = [
        (1, Implies, M, Some((0.86, 4.43))),
        (2, Implies, M, Some((0.55, 1.68))),
        (3, Implies, E, Some((0.66, 3.48))),
        (4, Implies, E, Some((0.77, 1.39))),
        (5, Implies, M, Some((0.89, 1.58))),
        (6, Implies, M, Some((0.82, 1.49))),
        (7, Implies, E, Some((0.96, 1.72))),
        (8, Implies, M, Some((0.70, 1.51))),
        (9, Implies, M, Some((0.64, 1.43))),
        (10, Implies, E, Some((0.45, 9.31))),
        (11, Implies, E, Some((0.45, 9.31))),
        (12, Implies, E, Some((0.60, 9.12))),
        (13, Implies, M, Some((0.76, 1.57))),
        (14, Implies, E, Some((0.61, 1.02))),
        (15, Implies, E, Some((0.61, 0.89))),
        (16, Implies, E, Some((0.77, 1.63))),
        (17, Implies, M, Some((0.84, 1.78))),
        (18, Implies, M, Some((0.81, 1.72))),
        (19, Implies, M, Some((0.72, 1.53))),
        (20, Implies, M, Some((0.77, 1.63))),
        (21, Implies, M, Some((0.85, 7.83))),
        (22, Sandwich, M, Some((0.76, 2.09))),
        (23, Sandwich, E, Some((0.91, 4.47))),
        (24, Sandwich, E, Some((0.72, 6.67))),
        (25, DisjImplies, M, Some((0.72, 7.21))),
        (26, DisjImplies, M, Some((0.68, 2.81))),
        (27, DisjImplies, M, Some((0.75, 8.82))),
        (28, DisjImplies, M, Some((0.61, 9.77))),
        (29, DisjImplies, M, Some((0.71, 5.73))),
        (30, DisjImplies, E, Some((0.56, 1.54))),
        (31, DisjImplies, E, Some((0.42, 1.32))),
        (32, Special, E, None),
        (33, Special, E, None),
        (34, Special, E, None),
    ];
    let c = builtin_catalog();
    assert_eq!(c.len(), 53);
    assert_eq!(c.rules.iter().filter(|r| is_semantic(r.id)).count(), 34);
    assert_eq!(c.rules.iter().filter(|r| !is_semantic(r.id)).count(), 19);
    for (id, kind, level, meta) in expected {
        let r = c.get(id).unwrap_or_else(|| panic!("rule {id} missing"));
        assert_eq!(r.kind, kind, "kind of {id}");
        assert_eq!(r.level, level, "level of {id}");
        assert_eq!(r.confidence, meta.map(|m| m.0), "confidence of {id}");
        assert_eq!(r.lift, meta.map(|m| m.1), "lift of {id}");
    }
    let handlers: Vec<_> = (32..=34).map(|i| c.get(i).unwrap().handler.clone().unwrap()).collect();
    assert_eq!(handlers, ["set-eux", "useradd-not-root", "groupadd-not-root"]);
}

fn fixture_suite() {
    let start = Instant::now();
    let dir = fixture_dir();
    let annotations =
        parse_annotations("annotations.tsv", &std::fs::read_to_string(dir.join("annotations.tsv")).unwrap())
            .unwrap();
    assert_eq!(annotations.len(), 68);
    let catalog = builtin_catalog();
    let mut predictions = BTreeMap::new();
    for (name, &violating) in &annotations {
        let src = std::fs::read_to_string(dir.join(name)).unwrap();
        let ids: Vec<u32> = check_file(name, &src, &catalog)
            .unwrap()
            .into_iter()
            .map(|v| v.rule_id)
            .collect();
        let target: u32 = name[4..6].parse().unwrap();
        if violating {
            assert_eq!(ids, [target], "{name}");
        } else {
            assert!(ids.is_empty(), "{name}: {ids:?}");
        }
        predictions.insert(name.clone(), !ids.is_empty());
    }
    let report = evaluate(&predictions, &annotations).unwrap();
    assert_eq!(report.precision, Some(1.0));
    assert_eq!(report.recall, Some(1.0));
    assert_eq!((report.tp, report.fn_), (34, 0));

    let ids = |src: &str| -> Vec<u32> {
        check_file("Dockerfile", src, &catalog)
            .unwrap()
            .into_iter()
            .map(|v| v.rule_id)
            .collect()
    };
    // pip without the cache flag
    assert!(ids("FROM python:3.11\nRUN pip install -r requirements.txt\n").contains(&2));
    assert!(!ids("FROM python:3.11\nRUN pip install --no-cache-dir -r requirements.txt\n").contains(&2));
    // download, unzip, no removal
    let unzip = "FROM debian:12\nRUN wget https://abc.com/a/download.zip && unzip download.zip";
    assert!(ids(unzip).contains(&8));
    assert!(!ids(&format!("{unzip} && rm download.zip")).contains(&8));
    // -y before the subcommand is reported
    let flipped = "FROM debian:12\nRUN set -eux; apt-get update && apt-get -y install --no-install-recommends curl && rm -rf /var/lib/apt/lists/*\n";
    assert_eq!(ids(flipped), [19]);
    // cache cleared before the install it should follow
    let yum = "FROM centos:7\nRUN set -eux; yum clean all && yum makecache && yum install -y httpd\n";
    assert_eq!(ids(yum), [29]);
    within(Duration::from_secs(5), start);
}

fn evaluation_arithmetic() {
    let r: EvalReport = EvalReport::from_counts(195, 19, 85, 1);
    let close = |x: Option<f64>, y: f64| (x.unwrap() - y).abs() <= 0.001;
    assert!(close(r.precision, 0.911), "{r:?}");
    assert!(close(r.recall, 0.995), "{r:?}");
    assert!(close(r.f_measure, 0.951), "{r:?}");

    let mut preds = BTreeMap::new();
    let mut truth = BTreeMap::new();
    let rows = [(195, true, true), (19, true, false), (85, false, false), (1, false, true)];
    let mut k = 0;
    for (n, p, t) in rows {
        for _ in 0..n {
            preds.insert(k, p);
            truth.insert(k, t);
            k += 1;
        }
    }
    assert_eq!(evaluate(&preds, &truth).unwrap(), r);
}

fn synthetic_dockerfile(rng: &mut StdRng, i: usize) -> String {
    let bases = ["debian:12-slim", "python:3.11", "alpine:3.19", "node:20", "golang:1.21"];
    let mut s = format!("FROM {}\n", bases[rng.gen_range(0..bases.len())]);
    s.push_str(&format!("LABEL maintainer=\"dev{i}@example.com\"\nENV APP_HOME=/opt/app PORT=8080\nWORKDIR /opt/app\n"));
    while s.lines().count() < 26 {
        match rng.gen_range(0..5) {
            0 => s.push_str(
                "RUN set -eux; \\\n    apt-get update \\\n    && apt-get install -y --no-install-recommends curl ca-certificates \\\n    && rm -rf /var/lib/apt/lists/*\n",
            ),
            1 => s.push_str("COPY requirements.txt /opt/app/\nRUN pip install --no-cache-dir -r requirements.txt\n"),
            2 => s.push_str(
                "RUN curl -fsSL https://example.com/tool.tar.gz -o /tmp/tool.tar.gz \\\n    && tar -xzf /tmp/tool.tar.gz -C /usr/local \\\n    && rm -f /tmp/tool.tar.gz\n",
            ),
            3 => s.push_str("# build step\nRUN make -j\"$(nproc)\" && make install\n"),
            _ => s.push_str("ARG VERSION=1.0\nRUN echo \"${VERSION}\" > /opt/app/VERSION\n"),
        }
    }
    s.push_str("EXPOSE 8080\nUSER nobody\nCMD [\"/opt/app/run.sh\"]\n");
    s
}

fn throughput() {
    let mut rng = StdRng::seed_from_u64(1000);
    let files: Vec<String> = (0..1000).map(|i| synthetic_dockerfile(&mut rng, i)).collect();
    let avg = files.iter().map(|f| f.lines().count()).sum::<usize>() as f64 / 1000.0;
    assert!((25.0..=40.0).contains(&avg), "average {avg} lines");
    let catalog = builtin_catalog();
    let start = Instant::now();
    let mut total = 0;
    for (i, f) in files.iter().enumerate() {
        total += check_file(&format!("f{i}"), f, &catalog).unwrap().len();
    }
    assert!(total > 0);
    within(Duration::from_secs(60), start);
}

fn oracle_implies(seq: &[&str], p: &str, q: &str) -> usize {
    let ps: Vec<usize> = (0..seq.len()).filter(|&i| seq[i] == p).collect();
    ps.iter()
        .enumerate()
        .filter(|(k, &i)| {
            let stop = ps.get(k + 1).copied().unwrap_or(seq.len());
            !seq[i + 1..stop].contains(&q)
        })
        .count()
}

fn oracle_disj(seq: &[&str], ps: &[&str], qs: &[&str]) -> usize {
    match (0..seq.len()).rev().find(|&i| ps.contains(&seq[i])) {
        Some(i) => usize::from(!seq[i + 1..].iter().any(|t| qs.contains(t))),
        None => 0,
    }
}

fn oracle_sandwich(seq: &[&str], p: &str, q: &str, r: &str) -> usize {
    (0..seq.len())
        .filter(|&j| seq[j] == q)
        .filter(|&j| !(seq[..j].contains(&p) && seq[j + 1..].contains(&r)))
        .count()
}

fn check_all(seq: &[&str]) {
    let m = |t: &str| Matcher::new([t]);
    assert_eq!(
        implies_windows(seq, &m("p"), &m("q")).len(),
        oracle_implies(seq, "p", "q"),
        "implies {seq:?}"
    );
    assert_eq!(
        usize::from(disj_implies_window(seq, &[m("p"), m("r")], &[m("q"), m("x")]).is_some()),
        oracle_disj(seq, &["p", "r"], &["q", "x"]),
        "disj {seq:?}"
    );
    assert_eq!(
        sandwich_windows(seq, &m("p"), &m("q"), &m("r")).len(),
        oracle_sandwich(seq, "p", "q", "r"),
        "sandwich {seq:?}"
    );
}

fn checker_oracle() {
    let start = Instant::now();
    let alphabet = ["p", "q", "r", "x"];
    // every sequence up to length 8
    for len in 0..=8u32 {
        for code in 0..4usize.pow(len) {
            let mut c = code;
            let seq: Vec<&str> = (0..len)
                .map(|_| {
                    let t = alphabet[c % 4];
                    c /= 4;
                    t
                })
                .collect();
            check_all(&seq);
        }
    }
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..20_000 {
        let len = rng.gen_range(9..=12);
        let seq: Vec<&str> = (0..len).map(|_| alphabet[rng.gen_range(0..4)]).collect();
        check_all(&seq);
    }
    within(Duration::from_secs(30), start);
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        ("ir fidelity of the pip example", ir_fidelity),
        ("substitution table coverage", substitution_coverage),
        ("prefixspan equals brute force", miner_oracle),
        ("pipeline shrinkage and pip pattern", shrinkage),
        ("built-in catalog completeness", catalog_completeness),
        ("fixture suite precision and recall", fixture_suite),
        ("evaluation arithmetic", evaluation_arithmetic),
        ("throughput on 1000 files", throughput),
        ("checkers equal brute force", checker_oracle),
    ];
    panic::set_hook(Box::new(|info| eprintln!("    {info}")));
    let mut failed = 0;
    // optional criterion numbers on the command line select a subset
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !picked.is_empty() && !picked.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let ok = panic::catch_unwind(f).is_ok();
        println!(
            "criterion {} {name}: {} ({:.2?})",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed()
        );
        failed += usize::from(!ok);
    }
    let ran = if picked.is_empty() { criteria.len() } else { picked.len() };
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
