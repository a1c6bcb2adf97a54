use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn facecloud(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facecloud"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = facecloud(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn generate(dir: &Path, ids: usize, exprs: usize, offset: usize, seed: u64) {
    ok(&[
        "generate",
        "--toy-model",
        "--identities",
        &ids.to_string(),
        "--expressions",
        &exprs.to_string(),
        "--id-offset",
        &offset.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(dir),
    ]);
}

#[test]
fn generation_counts_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, 30, 20, 0, 7);
    generate(&b, 30, 20, 0, 7);
    let fa = files(&a);
    assert_eq!(fa.iter().filter(|(n, _)| n.ends_with(".s3pc")).count(), 600);
    assert!(fa.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(fa, files(&b));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    let code = |args: &[&str]| facecloud(args).status.code();
    assert_eq!(code(&["generate", "--toy-model", "--identities", "0", "--out", out]), Some(2));
    assert_eq!(code(&["generate", "--identities", "3", "--out", out]), Some(2));
    assert_eq!(code(&["generate", "--no-such-flag"]), Some(2));
    assert_eq!(code(&["bench", "--kernel", "fps", "--n", "500", "--nb", "10", "--reps", "5"]), Some(2));
}

#[test]
fn ply_import() {
    let tmp = tempfile::tempdir().unwrap();
    let ply = tmp.path().join("tri.ply");
    std::fs::write(
        &ply,
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n0.001 0 0\n0 0.002 0\n",
    )
    .unwrap();
    let plain = tmp.path().join("tri.s3pc");
    ok(&["import-ply", s(&ply), "-o", s(&plain)]);
    let bytes = std::fs::read(&plain).unwrap();
    assert_eq!(&bytes[..4], b"S3PC");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0);

    let scaled = tmp.path().join("mm.s3pc");
    ok(&["import-ply", s(&ply), "-o", s(&scaled), "--scale", "1000", "--nose-tip", "0,0,1"]);
    let bytes = std::fs::read(&scaled).unwrap();
    let x1 = f32::from_le_bytes(bytes[28..32].try_into().unwrap());
    assert!((x1 - 1.0).abs() < 1e-6);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1 << 2);
}

fn micro_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("preset = \"micro\"\n[train]\nbatch_size = 8\n{extra}")).unwrap();
    p
}

/// Small train/verification sets and a two-epoch micro run.
struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        generate(&root.join("train"), 4, 4, 0, 1);
        generate(&root.join("ver"), 3, 3, 100, 2);
        Fixture { _tmp: tmp, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn train(&self, out: &str, epochs: u32, resume: bool) -> Output {
        let cfg = micro_config(&self.root, "");
        let epochs = epochs.to_string();
        let (train, ver, out) = (self.path("train/manifest.json"), self.path("ver/manifest.json"), self.path(out));
        let mut args = vec![
            "train",
            "--config",
            s(&cfg),
            "--seed",
            "3",
            "--train",
            s(&train),
            "--verification",
            s(&ver),
            "--out",
            s(&out),
            "--epochs",
            &epochs,
        ];
        if resume {
            args.push("--resume");
        }
        ok(&args)
    }
}

#[test]
fn train_eval_resume_and_partial_runs() {
    let fx = Fixture::new();
    fx.train("full", 2, false);
    let metrics = std::fs::read_to_string(fx.path("full/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "epoch,train_loss,rr1,vr,auc,verification_loss,lr");
    assert_eq!(metrics.lines().count(), 3);
    assert!(fx.path("full/best.s3ck").exists() && fx.path("full/summary.json").exists());

    // interrupted after one epoch, then resumed
    fx.train("split", 1, false);
    fx.train("split", 2, true);
    assert_eq!(metrics, std::fs::read_to_string(fx.path("split/metrics.csv")).unwrap());
    assert_eq!(
        std::fs::read(fx.path("full/last.s3ck")).unwrap(),
        std::fs::read(fx.path("split/last.s3ck")).unwrap()
    );

    // self-match through the CLI
    let ver = fx.path("ver/manifest.json");
    let ckpt = fx.path("full/best.s3ck");
    let report_dir = fx.path("self");
    ok(&["eval", "--checkpoint", s(&ckpt), "--gallery", s(&ver), "--probes", s(&ver), "--out", s(&report_dir)]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["rr1"], 1.0);
    assert_eq!(report["far_target"], 1e-3);
    assert!(report_dir.join("report.csv").exists() && report_dir.join("ranks.csv").exists());

    let far_dir = fx.path("far");
    ok(&["eval", "--checkpoint", s(&ckpt), "--gallery", s(&ver), "--probes", s(&ver), "--out", s(&far_dir), "--far", "0.01"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(far_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["far_target"], 0.01);

    // an unreadable probe is listed and the exit code flags a partial run
    let probes = fx.path("ver/probes.json");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&probes).unwrap()).unwrap();
    let victim = manifest["records"][0]["path"].as_str().unwrap().to_string();
    std::fs::write(fx.path("ver").join(&victim), b"S3PC").unwrap();
    let partial_dir = fx.path("partial");
    let gallery = fx.path("ver/gallery.json");
    let out = facecloud(&["eval", "--checkpoint", s(&ckpt), "--gallery", s(&gallery), "--probes", s(&probes), "--out", s(&partial_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(partial_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["errors"].as_array().unwrap().len(), 1);
}

#[test]
fn overlapping_identities_are_refused() {
    let fx = Fixture::new();
    let cfg = micro_config(&fx.root, "");
    let train = fx.path("train/manifest.json");
    let out = facecloud(&[
        "train",
        "--config",
        s(&cfg),
        "--train",
        s(&train),
        "--verification",
        s(&train),
        "--out",
        s(&fx.path("overlap")),
        "--epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("disjoint"));
    assert!(!fx.path("overlap/best.s3ck").exists());
}

#[test]
fn bench_prints_one_row_per_kernel() {
    let out = ok(&["bench", "--kernel", "fps,ball-query", "--n", "2048", "--nb", "128", "--k", "8", "--reps", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kernel,n,nb,k,radius,reps,median_ms,mean_ms,std_ms,min_ms,max_ms");
    assert_eq!(lines.len(), 3);
    for (line, name) in lines[1..].iter().zip(["fps", "ball-query"]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 11);
        assert_eq!(f[0], name);
        assert!(f[6].parse::<f64>().unwrap() >= 0.0);
    }
}
