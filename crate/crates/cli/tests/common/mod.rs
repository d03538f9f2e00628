#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_tmne");

pub fn tmne(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("TMNE_CONFIG")
        .output()
        .expect("run tmne")
}

/// Run and require success; returns stdout.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tmne(dir, args);
    assert!(
        out.status.success(),
        "tmne {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub const SCORER: [&str; 4] = ["--scorer", "lexical_baseline", "--scorer-lexicon", "fx/lexicon.tsv"];

/// A fixture ingested and indexed with the lexicon mock embedder.
pub struct Workspace {
    pub tmp: TempDir,
}

impl Workspace {
    pub fn new(fixture_args: &[&str]) -> Workspace {
        let tmp = TempDir::new().unwrap();
        let w = Workspace { tmp };
        let mut args = vec!["fixture", "--out", "fx"];
        args.extend_from_slice(fixture_args);
        ok(w.dir(), &args);
        ok(w.dir(), &["ingest", "--kind", "tm", "--input", "fx/tm.tsv", "--output", "tm.corpus"]);
        ok(w.dir(), &["ingest", "--kind", "mono", "--input", "fx/mono.txt", "--output", "mono.corpus"]);
        ok(w.dir(), &["ingest", "--kind", "test", "--input", "fx/test.tsv", "--output", "test.corpus"]);
        w.build("idx", &[]);
        w
    }

    pub fn small() -> Workspace {
        Workspace::new(&["--tm-size", "300", "--mono-size", "400", "--test-size", "60"])
    }

    pub fn dir(&self) -> &Path {
        self.tmp.path()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir().join(name)
    }

    pub fn build(&self, out: &str, extra: &[&str]) -> String {
        let mut args = vec![
            "build", "--tm", "tm.corpus", "--mono", "mono.corpus", "--out", out,
            "--provider", "lexicon_mock", "--provider-lexicon", "fx/lexicon.tsv", "--dim", "64",
        ];
        args.extend_from_slice(extra);
        ok(self.dir(), &args)
    }

    /// Test sources and references in file order.
    pub fn tests(&self) -> Vec<(String, String)> {
        std::fs::read_to_string(self.path("fx/test.tsv"))
            .unwrap()
            .lines()
            .map(|l| {
                let (s, r) = l.split_once('\t').unwrap();
                (s.to_string(), r.to_string())
            })
            .collect()
    }

    /// Rows of the fixture's ground truth file, header dropped.
    pub fn truth(&self) -> Vec<Vec<String>> {
        std::fs::read_to_string(self.path("fx/truth.tsv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split('\t').map(str::to_string).collect())
            .collect()
    }
}
