use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hcaecs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcaecs"))
        .args(args)
        .env_remove("HCAECS_DATA_ROOT")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two well separated classes of short ramps.
fn write_toy(dir: &Path, name: &str) -> PathBuf {
    let mut text = String::new();
    for i in 0..12 {
        let label = i % 2;
        let vals: Vec<String> = (0..10)
            .map(|t| {
                let x = t as f64 / 9.0;
                let y = if label == 0 { x } else { 1.0 - x * x };
                format!("{}", y + 0.01 * i as f64)
            })
            .collect();
        text.push_str(&format!("{label}\t{}\n", vals.join("\t")));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_raw_writes_report_and_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_toy(dir.path(), "Toy_TRAIN.tsv");
    let out = dir.path().join("out");
    let o = hcaecs(&["run-raw", "--train", s(&train), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("on Toy"), "{stdout}");
    for f in ["report.json", "clusters_CH.csv", "clusters_MA.csv", "clusters_ML.csv", "dendrogram_ML.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn staged_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_toy(dir.path(), "Toy_TRAIN.tsv");
    let ae = dir.path().join("ae");
    let o = hcaecs(&[
        "--serial", "train-aecs", "--train", s(&train), "--h1", "6", "--h2", "3", "--epochs", "2",
        "--batch", "4", "--out", s(&ae),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.json", "latent.csv", "trace.json"] {
        assert!(ae.join(f).exists(), "missing {f}");
    }

    let latent = ae.join("latent.csv");
    let cl = dir.path().join("cl");
    let o = hcaecs(&["cluster", "--features", s(&latent), "--k", "2", "--measures", "CH,ML", "--out", s(&cl)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cl.join("clusters_CH.csv").exists());
    assert!(!cl.join("clusters_MA.csv").exists());

    let sel = dir.path().join("sel.json");
    let o = hcaecs(&[
        "select", "--features", s(&latent), "--clusters", s(&cl.join("clusters_CH.csv")),
        s(&cl.join("clusters_ML.csv")), "--out", s(&sel),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sel).unwrap()).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_toy(dir.path(), "Toy_TRAIN.tsv");
    let o = hcaecs(&["run", "--train", s(&train), "--h1", "4", "--h2", "8"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hcaecs(&["run-raw", "--train", s(&train), "--k", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = hcaecs(&["run-raw", "--train", s(&dir.path().join("absent.tsv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.tsv"));
}

#[test]
fn bench_continues_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    std::fs::create_dir_all(root.join("Toy")).unwrap();
    write_toy(&root.join("Toy"), "Toy_TRAIN.tsv");
    let manifest = dir.path().join("manifest.txt");
    std::fs::write(&manifest, "# toy run\nToy,2\nAbsent\n").unwrap();
    let table = dir.path().join("bench.csv");
    let o = hcaecs(&[
        "bench", "--manifest", s(&manifest), "--data-root", s(&root), "--mode", "hc-raw", "--out", s(&table),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("Toy,hc_raw,ok,12,2,"), "{}", lines[1]);
    assert!(lines[2].starts_with("Absent,,error"), "{}", lines[2]);
}
