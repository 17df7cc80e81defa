use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qsdlab::closed_forms::{qsd_cdf, qsd_density};
use qsdlab_cli::RunManifest;
use tempfile::TempDir;

fn qsdlab(config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_qsdlab"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn qsd_eval_csv_matches_closed_forms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", "command = \"qsd-eval\"\n[params]\nc = 1.0\nr = 0.5\nx_max = 10.0\npoints = 201\n");
    let out = tmp.path().join("out");
    assert_eq!(qsdlab(&cfg, &out), 0);
    let mut rdr = csv::Reader::from_path(out.join("qsd.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x", "w", "W"]);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = rec.iter().map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - qsd_density(1.0, 0.5, v[0]).unwrap()).abs() < 1e-15);
        assert!((v[2] - qsd_cdf(1.0, 0.5, v[0]).unwrap()).abs() < 1e-15);
        assert!((v[2] - (1.0 - (1.0 + v[0]) * (-v[0]).exp())).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 201);
}

#[test]
fn levy_analyze_brownian_rates() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "l.toml", "command = \"levy-analyze\"\n[params]\nc_grid = [0.5, 1.0, 2.0]\n");
    let out = tmp.path().join("out");
    assert_eq!(qsdlab(&cfg, &out), 0);
    let rates: Vec<f64> = serde_json::from_value(summary(&out)["rates"].clone()).unwrap();
    for (got, want) in rates.iter().zip([0.125, 0.5, 2.0]) {
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn errors_map_to_exit_codes_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("syntax.toml", "command = \"qsd-eval\"\n[params\n", 2),
        ("unknown_top.toml", "command = \"qsd-eval\"\nextra = 1\n", 2),
        ("unknown_param.toml", "command = \"qsd-eval\"\n[params]\nc = 1.0\nr = 0.5\nzeta = 3\n", 2),
        ("bad_value.toml", "command = \"qsd-eval\"\n[params]\nc = 1.0\nr = 0.9\n", 2),
        ("no_command.toml", "seed = 3\n", 2),
        (
            "extinct.toml",
            "command = \"fv-sim\"\n[params]\nc = 50.0\nn = 2\ndt = 0.1\nt_max = 1.0\nburn_in = 0.0\ninit = { kind = \"point\", x = 0.01 }\nbridge_correction = false\n",
            4,
        ),
    ];
    for (name, body, code) in cases {
        let cfg = write_config(&tmp, name, body);
        let out = tmp.path().join(format!("out-{name}"));
        assert_eq!(qsdlab(&cfg, &out), code, "{name}");
        assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none(), "{name} left artifacts");
    }
    assert_eq!(qsdlab(&tmp.path().join("missing.toml"), &tmp.path().join("o")), 5);
}

fn small_configs() -> Vec<(&'static str, String)> {
    vec![
        (
            "fv",
            "command = \"fv-sim\"\nseed = 5\n[params]\nc = 1.0\nn = 50\ndt = 0.01\nt_max = 3.0\nreplicas = 3\ndump_positions = true\n".into(),
        ),
        ("nbbm", "command = \"nbbm-sim\"\nseed = 5\n[params]\nn = 40\nr = 0.5\nt_max = 20.0\nreplicas = 2\n".into()),
        (
            "nbrw",
            "command = \"nbrw-sim\"\nseed = 5\n[params]\nn = 40\nt_max = 20.0\ndisplacement = { kind = \"point_masses\", atoms = [[-1.0, 0.5], [1.0, 0.5]] }\n".into(),
        ),
        ("mckean", "command = \"bbm-mckean\"\nseed = 5\n[params]\nr = 1.0\nt = 0.5\nreplicas = 300\npde_h = 0.1\n".into()),
        (
            "report",
            "command = \"correspondence-report\"\nseed = 5\n[params]\nc = 1.0\nn = 30\nt_max = 5.0\ndt = 0.01\n".into(),
        ),
    ]
}

fn csv_bytes(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulations_are_byte_reproducible_from_config_and_manifest() {
    let tmp = TempDir::new().unwrap();
    for (name, body) in small_configs() {
        let cfg = write_config(&tmp, &format!("{name}.toml"), &body);
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        let c = tmp.path().join(format!("{name}-c"));
        assert_eq!(qsdlab(&cfg, &a), 0, "{name}");
        assert_eq!(qsdlab(&cfg, &b), 0, "{name}");
        assert_eq!(qsdlab(&a.join("manifest.json"), &c), 0, "{name} from manifest");
        let first = csv_bytes(&a);
        assert!(!first.is_empty());
        assert_eq!(first, csv_bytes(&b), "{name}");
        assert_eq!(first, csv_bytes(&c), "{name} from manifest");
        assert_eq!(manifest(&a).config, manifest(&c).config);
    }
}

#[test]
fn different_seeds_differ() {
    let tmp = TempDir::new().unwrap();
    let body = |seed: u64| format!("command = \"fv-sim\"\nseed = {seed}\n[params]\nc = 1.0\nn = 20\ndt = 0.01\nt_max = 1.0\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(qsdlab(&write_config(&tmp, "a.toml", &body(1)), &a), 0);
    assert_eq!(qsdlab(&write_config(&tmp, "b.toml", &body(2)), &b), 0);
    assert_ne!(fs::read(a.join("snapshots.csv")).unwrap(), fs::read(b.join("snapshots.csv")).unwrap());
}

#[test]
fn manifest_lists_every_file() {
    use sha2::{Digest, Sha256};
    let tmp = TempDir::new().unwrap();
    for (name, body) in small_configs().into_iter().take(2) {
        let cfg = write_config(&tmp, &format!("{name}.toml"), &body);
        let out = tmp.path().join(name);
        assert_eq!(qsdlab(&cfg, &out), 0);
        let m = manifest(&out);
        let on_disk: BTreeSet<String> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.json")
            .collect();
        let listed: BTreeSet<String> = m.files.iter().map(|f| f.name.clone()).collect();
        assert_eq!(on_disk, listed);
        for f in &m.files {
            let bytes = fs::read(out.join(&f.name)).unwrap();
            assert_eq!(bytes.len(), f.bytes);
            let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            assert_eq!(hex, f.sha256);
        }
    }
}

#[test]
fn report_survives_degenerate_budget() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "r.toml", "command = \"correspondence-report\"\nseed = 3\n[params]\nc = 1.0\nn = 2\nt_max = 1.0\n");
    let out = tmp.path().join("out");
    assert_eq!(qsdlab(&cfg, &out), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 2);
    assert!(report["checks"].as_array().unwrap().len() >= 7);
    assert!(fs::read_to_string(out.join("report.md")).unwrap().contains("| check |"));
}

#[test]
fn report_scales_with_c() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "r.toml",
        "command = \"correspondence-report\"\nseed = 9\n[params]\nc = 2.0\nn = 300\nt_max = 10.0\ndt = 2.5e-4\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(qsdlab(&cfg, &out), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["r"], 2.0);
    let rate = report["fleming_viot"]["absorption_rate"]["value"].as_f64().unwrap();
    let speed = report["nbbm"]["velocity"]["value"].as_f64().unwrap();
    assert!((rate / 2.0 - 1.0).abs() < 0.25, "rate {rate}");
    assert!(speed <= 2.04 && speed > 1.5, "speed {speed}");
}
