use std::path::Path;
use std::process::Command;

use sentence_contrast::cli::run;
use sentence_contrast::error::{EXIT_DATA, EXIT_OK, EXIT_USAGE};
use sentence_contrast::synthetic::generate;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("sentence-contrast").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = call(&["train"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("corpus"), "{err}");
    assert_eq!(call(&["train", "--corpus", "x", "--no-such-flag", "1"]).0, EXIT_USAGE);
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(call(&["train", "--corpus", "x", "--batch-size", "zero"]).0, EXIT_USAGE);
    assert_eq!(call(&["--help"]).0, EXIT_OK);
}

#[test]
fn missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(call(&["train", "--corpus", s(&missing)]).0, EXIT_DATA);
    let (code, _, err) = call(&["eval", "--checkpoint", s(&missing), s(&missing)]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.starts_with("error: "));
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_sentence-contrast");
    let status = Command::new(bin).arg("train").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let status = Command::new(bin)
        .args(["augment-preview", "--sentence", "hello there", "--strategy", "none"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    assert_eq!(String::from_utf8(status.stdout).unwrap(), "hello there\n");
}

#[test]
fn augment_preview_none_echoes_input() {
    let sentence = "Hello,   World! It's a test.";
    let (code, out, _) = call(&["augment-preview", "--sentence", sentence, "--strategy", "none", "--samples", "3"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, format!("{sentence}\n{sentence}\n{sentence}\n"));
}

#[test]
fn augment_preview_repeats_words() {
    let args = ["augment-preview", "--sentence", "the quick brown fox jumps", "--seed", "4", "--samples", "20"];
    let (code, out, _) = call(&args);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 20);
    assert!(out.lines().all(|l| l.split_whitespace().count() >= 5));
    assert_eq!(out, call(&args).1);
    assert_eq!(call(&["augment-preview", "--sentence", "x", "--strategy", "bogus"]).0, EXIT_USAGE);
}

#[test]
fn train_then_eval_embed_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(40, 30, 2);
    data.write(dir.path()).unwrap();
    let corpus = dir.path().join("corpus.txt");
    let dev = dir.path().join("dev.tsv");
    let out_dir = dir.path().join("run");
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "# tiny model\nwidth = 16\nheads = 2\nff-width = 32\nlayers = 1\nbatch-size = 8\n").unwrap();

    let (code, out, err) = call(&[
        "train",
        "--config",
        s(&config),
        "--corpus",
        s(&corpus),
        "--dev",
        s(&dev),
        "--out",
        s(&out_dir),
        "--eval-every",
        "2",
        "--quiet",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("best_step = "));
    for f in ["best.ckpt", "momentum.ckpt", "vocab.txt", "train_log.tsv", "config.txt"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(out_dir.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().next(), Some("step\tloss\tqueue_fill\tdev_spearman"));
    assert_eq!(log.lines().count(), 1 + 5);
    let saved = std::fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(saved.contains("width = 16") && saved.contains("eval-every = 2"), "{saved}");

    let ckpt = out_dir.join("best.ckpt");
    let (code, out, err) = call(&["eval", "--checkpoint", s(&ckpt), s(&dev), s(&dev)]);
    assert_eq!(code, EXIT_OK, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("dev = ") && lines[2].starts_with("avg = "));
    assert_eq!(lines[0]["dev = ".len()..], lines[2]["avg = ".len()..]);

    let (code, out, _) = call(&["eval", "--checkpoint", s(&ckpt), "--json", s(&dev)]);
    assert_eq!(code, EXIT_OK);
    let first: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["pairs"], 30);

    let (code, out, _) = call(&["audit", "--checkpoint", s(&ckpt), s(&dev)]);
    assert_eq!(code, EXIT_OK);
    let keys: Vec<&str> = out.lines().map(|l| l.split(" = ").next().unwrap()).collect();
    assert_eq!(
        keys,
        ["dataset", "threshold", "small.pairs", "small.spearman", "large.pairs", "large.spearman"]
    );
    assert!(out.contains("threshold = 3\n"));
    let (_, json, _) = call(&["audit", "--checkpoint", s(&ckpt), "--threshold", "1", "--json", s(&dev)]);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["threshold"], 1);
    assert_eq!(
        v["small"]["pairs"].as_u64().unwrap() + v["large"]["pairs"].as_u64().unwrap(),
        30
    );

    let embedded = dir.path().join("emb.tsv");
    let (code, _, err) = call(&["embed", "--checkpoint", s(&ckpt), "--input", s(&corpus), "--output", s(&embedded)]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rows = std::fs::read_to_string(&embedded).unwrap();
    assert_eq!(rows.lines().count(), 40);
    assert!(rows.lines().all(|l| l.split('\t').count() == 16));

    // A vocabulary that does not belong to the checkpoint is rejected.
    let other = dir.path().join("other_vocab.txt");
    std::fs::write(&other, "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nzebra\n").unwrap();
    let (code, _, _) = call(&["eval", "--checkpoint", s(&ckpt), "--vocab", s(&other), s(&dev)]);
    assert_eq!(code, EXIT_DATA);
}
