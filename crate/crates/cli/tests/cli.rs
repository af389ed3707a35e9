use std::fs;
use std::path::Path;
use std::process::Command;

fn clab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("lab.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn covariance_toy_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cov");
    let cfg = write_config(dir.path(), "[covariance]\nn_images = 60\nn_seeds = 2\n");
    let status = clab()
        .args(["--experiment", "covariance_toy", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("covariance_rank.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"completed\""));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "epochs = 50\nseed = 3\n[dataset]\nn = 64\n");
    let status = clab()
        .args(["--experiment", "bound_tracking", "--epochs", "1", "--seed", "4", "--projector", "mlp", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let manifest: serde_like::Manifest = serde_like::read(&out.join("manifest.json"));
    assert_eq!(manifest.epochs, 1);
    assert_eq!(manifest.seed, 4);
    assert_eq!(manifest.projector, "mlp");
    assert_eq!(fs::read_to_string(out.join("epochs.csv")).unwrap().lines().count(), 3);
}

#[test]
fn unknown_experiment_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nothing");
    let o = clab().args(["--experiment", "fig42"]).arg("--out-dir").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown experiment"));
    assert!(!out.exists());
}

#[test]
fn bad_flag_value_is_a_validation_error() {
    let o = clab().args(["--preset", "huge"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_config_value_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "batch_size = 0\n");
    let o = clab().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = clab().args(["--experiment", "covariance_toy", "--out-dir"]).arg(blocker.join("sub")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

/// Pulls the few config fields the tests check out of a manifest without a
/// JSON dependency.
mod serde_like {
    use std::path::Path;

    pub struct Manifest {
        pub epochs: u64,
        pub seed: u64,
        pub projector: String,
    }

    fn field<'a>(text: &'a str, key: &str) -> &'a str {
        let pat = format!("\"{key}\": ");
        let start = text.find(&pat).unwrap_or_else(|| panic!("no {key}")) + pat.len();
        let rest = &text[start..];
        rest[..rest.find([',', '\n']).unwrap()].trim_matches('"')
    }

    pub fn read(path: &Path) -> Manifest {
        let text = std::fs::read_to_string(path).unwrap();
        Manifest {
            epochs: field(&text, "epochs").parse().unwrap(),
            seed: field(&text, "seed").parse().unwrap(),
            projector: field(&text, "projector").to_string(),
        }
    }
}
