#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// Flags that shrink a run to a few seconds.
pub const SMALL: &[&str] = &[
    "--n",
    "60",
    "--epochs",
    "4",
    "--checkpoint-every",
    "2",
    "--particles",
    "16",
    "--candidates",
    "16",
    "--ascent-steps",
    "5",
];

pub fn iom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iom"))
        .args(args)
        .env_remove("IOM_OUT_DIR")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

/// Runs the binary and returns stdout, failing the test on a nonzero exit.
pub fn iom_ok(args: &[&str]) -> String {
    let out = iom(args);
    assert!(
        out.status.success(),
        "iom {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs the binary expecting failure and returns stderr.
pub fn iom_err(args: &[&str]) -> String {
    let out = iom(args);
    assert!(!out.status.success(), "iom {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

pub fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

/// Every file under `root` by relative path, except the timestamped logs.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().unwrap() != "log.txt" {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Asserts two trees hold the same files with the same bytes.
pub fn assert_same_tree(a: &Path, b: &Path) {
    let (ta, tb) = (tree(a), tree(b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(
            bytes == &tb[name],
            "{name} differs between {} and {}",
            a.display(),
            b.display()
        );
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
