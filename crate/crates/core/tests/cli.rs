//! End-to-end runs of the `biophilic` binary over generated files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biophilic::data::{write_embeddings, write_labels, LabelTaxonomy};
use biophilic::synthetic::{generate, SyntheticSpec};
use serde_json::Value;
use sha2::{Digest, Sha256};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// 240 synthetic 64-d embeddings over the default 15 labels.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { n_samples: 240, dim: 64, ..SyntheticSpec::default() };
        let data = generate(&spec).unwrap().data;
        let tax = LabelTaxonomy::biophilic_default();
        write_embeddings(dir.path().join("emb.bemb"), &data.embeddings()).unwrap();
        write_labels(dir.path().join("labels.csv"), &data.label_records(), &tax).unwrap();
        std::fs::write(dir.path().join("tax.json"), tax.to_json()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_biophilic"))
            .args(args)
            .env_remove("BIOPHILIC_SEED")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn data_args(&self) -> Vec<String> {
        ["--embeddings", &self.p("emb.bemb"), "--labels", &self.p("labels.csv"), "--taxonomy", &self.p("tax.json")]
            .map(String::from)
            .to_vec()
    }

    fn train(&self, checkpoint: &str) -> Value {
        self.ok(&["split", "--seed", "1", "--embeddings", &self.p("emb.bemb"), "--out", &self.p("split.json")]);
        let mut args = vec!["train".to_string()];
        args.extend(self.data_args());
        args.extend(
            ["--split", &self.p("split.json"), "--checkpoint", &self.p(checkpoint), "--epochs", "4", "--seed", "3"]
                .map(String::from),
        );
        args.extend(["--history".into(), self.p("history.jsonl")]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        serde_json::from_str(&self.ok(&refs)).unwrap()
    }
}

fn sha256_hex(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn split_is_byte_identical_per_seed() {
    let ws = Workspace::new();
    let emb = ws.p("emb.bemb");
    ws.ok(&["split", "--seed", "1", "--embeddings", &emb, "--out", &ws.p("a.json")]);
    ws.ok(&["split", "--seed", "1", "--embeddings", &emb, "--out", &ws.p("b.json")]);
    let a = std::fs::read(ws.path("a.json")).unwrap();
    assert_eq!(a, std::fs::read(ws.path("b.json")).unwrap());

    // The environment variable stands in for --seed.
    let via_env = Command::new(env!("CARGO_BIN_EXE_biophilic"))
        .args(["split", "--embeddings", &emb])
        .env("BIOPHILIC_SEED", "1")
        .output()
        .unwrap();
    assert_eq!(via_env.stdout, a);

    let other = ws.ok(&["split", "--seed", "2", "--embeddings", &emb]);
    assert_ne!(other.as_bytes(), a.as_slice());
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["train_ids"].as_array().unwrap().len(), 168);
    assert_eq!(v["val_ids"].as_array().unwrap().len(), 48);
    assert_eq!(v["test_ids"].as_array().unwrap().len(), 24);
    let counts = ws.ok(&["split", "--embeddings", &emb, "--counts", "200,20,20"]);
    let v: Value = serde_json::from_str(&counts).unwrap();
    assert_eq!(v["train_ids"].as_array().unwrap().len(), 200);
}

#[test]
fn train_eval_predict_tag_gallery() {
    let ws = Workspace::new();
    let report = ws.train("m.bdec");
    assert_eq!(report["train_loss"].as_array().unwrap().len(), 4);
    assert!(report["best_val_weighted_f1"].as_f64().unwrap() > 0.0);
    let history = std::fs::read_to_string(ws.path("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 4);

    // Re-training with the same seed writes the same checkpoint.
    ws.train("m2.bdec");
    assert_eq!(std::fs::read(ws.path("m.bdec")).unwrap(), std::fs::read(ws.path("m2.bdec")).unwrap());

    let mut eval = vec!["eval", "--checkpoint"];
    let ck = ws.p("m.bdec");
    eval.push(&ck);
    let data = ws.data_args();
    eval.extend(data.iter().map(String::as_str));
    let split = ws.p("split.json");
    eval.extend(["--split", &split, "--subset", "val"]);
    let metrics: Value = serde_json::from_str(&ws.ok(&eval)).unwrap();
    assert_eq!(metrics["per_class"].as_array().unwrap().len(), 15);
    for avg in ["micro", "macro", "weighted", "samples"] {
        assert!(metrics[avg]["f1"].is_number(), "{avg} missing");
    }
    // The validation subset scores what training recorded for the best epoch
    // (up to the report's 4-decimal rendering).
    let best = report["best_val_weighted_f1"].as_f64().unwrap();
    assert!((metrics["weighted"]["f1"].as_f64().unwrap() - best).abs() <= 5e-5);
    eval.extend(["--format", "text"]);
    assert!(ws.ok(&eval).contains("weighted"));

    let emb = ws.p("emb.bemb");
    let preds = ws.ok(&["predict", "--checkpoint", &ck, "--embeddings", &emb]);
    assert_eq!(preds.lines().count(), 240);
    std::fs::write(ws.path("preds.jsonl"), &preds).unwrap();

    let tags = ws.ok(&["tag", "--threshold", "0.65", "--checkpoint", &ck, "--embeddings", &emb]);
    let first: Value = serde_json::from_str(tags.lines().next().unwrap()).unwrap();
    assert_eq!(first["threshold"], 0.65);
    assert!(first["dominant"].is_string() && first["biophilic"].is_boolean());
    let from_file = ws.ok(&["tag", "--threshold", "0.65", "--predictions", &ws.p("preds.jsonl")]);
    assert_eq!(tags, from_file);

    let gallery: Value =
        serde_json::from_str(&ws.ok(&["gallery", "--checkpoint", &ck, "--embeddings", &emb])).unwrap();
    assert_eq!(gallery["metadata"]["checkpoint_sha256"], sha256_hex(&ws.path("m.bdec")));
    assert_eq!(gallery["metadata"]["threshold"], 0.65);
    let grouped: usize = gallery["groups"].as_array().unwrap().iter().map(|g| g["records"].as_array().unwrap().len()).sum();
    assert_eq!(grouped, 240);
}

#[test]
fn hpo_reports_sampled_trials() {
    let ws = Workspace::new();
    let config = ws.path("hpo.json");
    std::fs::write(
        &config,
        r#"{"space": {"optimizers": ["adam", "sgd"], "learning_rates": [0.001, 0.01]}, "train": {"batch_size": 24}}"#,
    )
    .unwrap();
    let mut args = vec!["hpo".to_string()];
    args.extend(ws.data_args());
    args.extend(["--config", config.to_str().unwrap(), "--trials", "3", "--epochs-per-trial", "1", "--jobs", "2"].map(String::from));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let v: Value = serde_json::from_str(&ws.ok(&refs)).unwrap();
    assert_eq!(v["trials"].as_array().unwrap().len(), 3);
    assert_eq!(v["best_config"]["batch_size"], 24);
    // Parallelism does not change the result.
    let serial: Vec<&str> = refs.iter().map(|a| if *a == "2" { "1" } else { a }).collect();
    let again: Value = serde_json::from_str(&ws.ok(&serial)).unwrap();
    assert_eq!(v, again);
}

#[test]
fn usage_and_runtime_errors() {
    let ws = Workspace::new();
    let out = ws.run(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ws.run(&["eval", "--checkpoint", &ws.p("missing.bdec"), "--embeddings", &ws.p("emb.bemb"), "--labels", &ws.p("labels.csv")]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");

    std::fs::write(ws.path("bad.bdec"), b"nope").unwrap();
    let out = ws.run(&["predict", "--checkpoint", &ws.p("bad.bdec"), "--embeddings", &ws.p("emb.bemb")]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "format");

    let help = ws.ok(&["train", "--help"]);
    for flag in ["--config", "--checkpoint", "--seed", "--history", "--learning-rate"] {
        assert!(help.contains(flag), "{flag} undocumented");
    }
}

/// Embeds a PNG as a fixed function of its bytes: the provider protocol
/// without a real encoder.
const FAKE_PROVIDER: &str = r#"
import base64, hashlib, json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req["id"] == "FAIL" or len(sys.argv) > 1:
        print(json.dumps({"id": req["id"], "error": "refused"}), flush=True)
        continue
    png = base64.b64decode(req["png_b64"])
    d = hashlib.sha256(png).digest()
    print(json.dumps({"id": req["id"], "embedding": [d[i % 32] / 255.0 - 0.5 for i in range(64)]}), flush=True)
"#;

fn have_python() -> bool {
    Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn explain_through_a_provider_process() {
    if !have_python() {
        eprintln!("python3 not available; skipping provider round trip");
        return;
    }
    let ws = Workspace::new();
    ws.train("m.bdec");
    std::fs::write(ws.path("provider.py"), FAKE_PROVIDER).unwrap();
    let img = image::RgbImage::from_fn(40, 30, |x, y| image::Rgb([(x * 6) as u8, (y * 8) as u8, ((x + y) * 3) as u8]));
    img.save(ws.path("art.png")).unwrap();

    let args = |out: &str, overlay: &str| {
        [
            "explain", "--image", &ws.p("art.png"), "--checkpoint", &ws.p("m.bdec"), "--provider", "python3",
            "--provider-arg", &ws.p("provider.py"), "--samples", "60", "--segments", "8", "--seed", "5",
            "--out", &ws.p(out), "--overlay", &ws.p(overlay),
        ]
        .map(String::from)
    };
    let a = args("e1.json", "o1.png");
    ws.ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let b = args("e2.json", "o2.png");
    ws.ok(&b.iter().map(String::as_str).collect::<Vec<_>>());

    let e1 = std::fs::read(ws.path("e1.json")).unwrap();
    assert_eq!(e1, std::fs::read(ws.path("e2.json")).unwrap());
    assert_eq!(std::fs::read(ws.path("o1.png")).unwrap(), std::fs::read(ws.path("o2.png")).unwrap());
    let e: Value = serde_json::from_slice(&e1).unwrap();
    assert_eq!(e["n_samples"], 60);
    assert!(e["label"].is_string());
    assert_eq!(e["weights"].as_array().unwrap().len(), e["n_segments"].as_u64().unwrap() as usize);
    assert_eq!(image::open(ws.path("o1.png")).unwrap().to_rgb8().dimensions(), (40, 30));

    // A provider that refuses every image fails the run with a predict error.
    let mut refused = args("e3.json", "o3.png").to_vec();
    refused.extend(["--provider-arg".into(), "refuse".into()]);
    let out = ws.run(&refused.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "predict");
}
