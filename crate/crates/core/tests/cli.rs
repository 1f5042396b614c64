use std::process::Command;

fn cfc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfc"))
}

#[test]
fn indexset_writes_one_row_per_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lambda.csv");
    let status = cfc()
        .args(["indexset", "--dim", "8", "--order", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = text.lines().filter(|l| !l.trim().is_empty()).count();
    assert_eq!(rows, 432);
}

#[test]
fn sweep_writes_table_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = cfc()
        .args([
            "sweep", "--dim", "2", "--order", "39", "--solution", "u1", "--method", "omp,lsq", "--m-grid", "32,64",
            "--trials", "2", "--seed", "3", "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 5);
    let sidecars: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(sidecars.len(), 1);
}

#[test]
fn hard_errors_exit_nonzero() {
    let bad_dim = cfc().args(["indexset", "--dim", "0", "--order", "3"]).output().unwrap();
    assert!(!bad_dim.status.success());
    assert!(String::from_utf8_lossy(&bad_dim.stderr).contains("error"));

    let no_order = cfc().args(["indexset", "--dim", "2"]).output().unwrap();
    assert!(!no_order.status.success());

    let bad_coefficient = cfc().args(["riesz", "--coefficient", "nope"]).output().unwrap();
    assert!(!bad_coefficient.status.success());
}
