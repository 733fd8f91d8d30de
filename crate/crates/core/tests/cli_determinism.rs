//! Every subcommand twice with the same seed; outputs must match byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_hierdit");

const MODEL: &[&str] = &[
    "--d-model",
    "48",
    "--heads",
    "2",
    "--depth",
    "1",
    "--grid",
    "4",
    "--patch",
    "4",
    "--pool-kernel",
    "2",
    "--steps",
    "6",
];

fn run(args: &[&str]) -> Vec<u8> {
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen -> train -> sample -> eval -> ablate -> segment-regions in `root`.
fn pipeline(root: &Path) -> Vec<u8> {
    let corpus = root.join("corpus");
    let train = root.join("train");
    let samples = root.join("samples");
    let (single, eval_csv, ablate, regions) = (
        root.join("one.png"),
        root.join("eval.csv"),
        root.join("ablate"),
        root.join("regions"),
    );
    run(&[
        "gen",
        "--seed",
        "4",
        "--count",
        "6",
        "--size",
        "16",
        "--min-primitives",
        "1",
        "--max-primitives",
        "1",
        "--motion",
        "large",
        "--jobs",
        "2",
        "--out",
        s(&corpus),
    ]);
    let mut args = vec![
        "train",
        "--corpus",
        s(&corpus),
        "--out",
        s(&train),
        "--seed",
        "3",
        "--pretrain-steps",
        "8",
        "--lora-steps",
        "6",
    ];
    args.extend(["--holdout", "2", "--checkpoint-every", "5", "--batch-size", "2"]);
    args.extend(MODEL);
    run(&args);
    let ckpt = train.join("final.ckpt");
    run(&[
        "sample",
        "--checkpoint",
        s(&ckpt),
        "--corpus",
        s(&corpus),
        "--holdout",
        "2",
        "--out",
        s(&samples),
        "--seed",
        "9",
        "--jobs",
        "2",
    ]);
    run(&[
        "sample",
        "--checkpoint",
        s(&ckpt),
        "--line",
        s(&corpus.join("00000_line.png")),
        "--reference",
        s(&corpus.join("00000_ref.png")),
        "--out",
        s(&single),
        "--steps",
        "3",
    ]);
    let mut stdout = run(&["eval", "--gen", s(&samples), "--corpus", s(&corpus)]);
    run(&[
        "eval",
        "--gen",
        s(&samples),
        "--corpus",
        s(&corpus),
        "--out",
        s(&eval_csv),
        "--jobs",
        "2",
    ]);
    let mut args = vec![
        "ablate",
        "--corpus",
        s(&corpus),
        "--out",
        s(&ablate),
        "--seed",
        "1,2",
        "--arms",
        "nohier,cos",
    ];
    args.extend(["--pretrain-steps", "4", "--lora-steps", "3", "--holdout", "2"]);
    args.extend(MODEL);
    run(&args);
    run(&[
        "segment-regions",
        "--gt",
        s(&corpus.join("00001_target.png")),
        "--line",
        s(&corpus.join("00001_line.png")),
        "--out",
        s(&regions),
    ]);
    stdout.extend(b"--");
    stdout
}

#[test]
fn every_subcommand_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (out_a, out_b) = (pipeline(a.path()), pipeline(b.path()));
    assert_eq!(out_a, out_b);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let names: Vec<_> = ta.iter().map(|(p, _)| p.clone()).collect();
    for want in [
        "train/final.ckpt",
        "train/loss.csv",
        "samples/00004.png",
        "samples/00005.png",
        "one.png",
        "eval.csv",
        "ablate/report.md",
        "ablate/report.csv",
        "regions/regions.png",
    ] {
        assert!(names.contains(&PathBuf::from(want)), "missing {want}: {names:?}");
    }
    for ((pa, da), (pb, db)) in ta.iter().zip(&tb) {
        assert_eq!(pa, pb);
        assert!(da == db, "{} differs", pa.display());
    }
    assert_eq!(ta.len(), tb.len());
}

#[test]
fn resumed_training_writes_the_same_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    let corpus = root.path().join("corpus");
    run(&[
        "gen",
        "--seed",
        "5",
        "--count",
        "4",
        "--size",
        "16",
        "--min-primitives",
        "1",
        "--max-primitives",
        "1",
        "--out",
        s(&corpus),
    ]);
    let train = |out: &Path, pre: &str, lora: &str, resume: Option<&Path>| {
        let mut args = vec![
            "train",
            "--corpus",
            s(&corpus),
            "--out",
            s(out),
            "--pretrain-steps",
            pre,
            "--lora-steps",
            lora,
            "--checkpoint-every",
            "0",
        ];
        args.extend(MODEL);
        if let Some(r) = resume {
            args.extend(["--resume", s(r)]);
        }
        run(&args);
    };
    let (full, part, rest) = (root.path().join("full"), root.path().join("part"), root.path().join("rest"));
    train(&full, "6", "4", None);
    train(&part, "6", "2", None);
    train(&rest, "6", "4", Some(&part.join("final.ckpt")));
    assert_eq!(
        fs::read(full.join("final.ckpt")).unwrap(),
        fs::read(rest.join("final.ckpt")).unwrap()
    );
}

#[test]
fn bad_arguments_exit_nonzero() {
    let out = Command::new(BIN)
        .args(["sample", "--checkpoint", "/nonexistent.ckpt", "--out", "/tmp/x.png"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(BIN)
        .args(["gen", "--out", "/tmp/never", "--motion", "huge"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
