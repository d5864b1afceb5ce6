use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use odometer_cli::records::read_csv;
use odometer_cli::{aggregate, RunRecord, Snapshot, TableRow};

fn odometer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odometer"))
        .args(args)
        .current_dir(dir)
        .env_remove("ODOMETER_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = odometer(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn rejects_zero_chips() {
    let dir = tempfile::tempdir().unwrap();
    let out = odometer(&["simulate", "--n", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positive"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(odometer(&["simulate", "--n", "10", "--seq", "NNES"], p).status.code(), Some(2));
    assert_eq!(odometer(&["simulate", "--model", "idla", "--n", "10", "--key", "xyz"], p).status.code(), Some(2));
    assert_eq!(odometer(&["sweep", "--n-list", "2^x"], p).status.code(), Some(2));
    fs::write(p.join("junk.snap"), b"ODOSNAP\0junk").unwrap();
    assert_eq!(odometer(&["render", "--snapshot", "junk.snap", "--out", "x.ppm"], p).status.code(), Some(2));
}

#[test]
fn oracle_and_fast_runs_write_identical_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("fast"), dir.path().join("slow"));
    let base = ["simulate", "--model", "idla", "--n", "3000", "--run", "5", "--verify", "--out"];
    ok(&[&base[..], &[a.to_str().unwrap()]].concat(), dir.path());
    ok(&[&base[..], &[b.to_str().unwrap(), "--oracle"]].concat(), dir.path());
    let name = "idla_00000000_N3000_a5.snap";
    let fast = fs::read(a.join(name)).unwrap();
    assert_eq!(fast, fs::read(b.join(name)).unwrap());
    assert_eq!(Snapshot::from_bytes(&fast).unwrap().chips(), 3000);
}

fn without_runtime(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0).collect::<Vec<_>>().join("\n")
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["simulate", "--model", "lds", "--n", "5000", "--run", "2", "--key", &"ab".repeat(32)], p);
    let stem = "lds_abababab_N5000_a2";
    ok(&["replay", "--manifest", &format!("{stem}.json"), "--out", "again"], p);
    for ext in ["snap", "moments.csv"] {
        let f = format!("{stem}.{ext}");
        assert_eq!(fs::read(p.join(&f)).unwrap(), fs::read(p.join("again").join(&f)).unwrap(), "{f}");
    }
    let f = format!("{stem}.csv");
    assert_eq!(
        without_runtime(&fs::read_to_string(p.join(&f)).unwrap()),
        without_runtime(&fs::read_to_string(p.join("again").join(&f)).unwrap())
    );
    let out = ok(&["verify", "--manifest", &format!("{stem}.json"), "--snapshot", &format!("{stem}.snap")], p);
    assert!(out.starts_with("ok"));
}

#[test]
fn verify_rejects_a_foreign_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["simulate", "--model", "idla", "--n", "500"], p);
    ok(&["simulate", "--model", "idla", "--n", "500", "--run", "2"], p);
    let out = odometer(&["verify", "--manifest", "idla_00000000_N500_a1.json", "--snapshot", "idla_00000000_N500_a2.snap"], p);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_table_matches_offline_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["sweep", "--model", "idla", "--n-list", "2^8,300", "--trials", "5", "--jobs", "2", "--moments", "4", "--out", "sw"], p);
    let runs: Vec<RunRecord> = read_csv(&p.join("sw/runs.csv")).unwrap();
    assert_eq!(runs.len(), 10);
    let table: Vec<TableRow> = read_csv(&p.join("sw/table.csv")).unwrap();
    assert_eq!(table, aggregate(&runs));
    ok(&["aggregate", "--runs", "sw/runs.csv", "--out", "offline.csv"], p);
    assert_eq!(fs::read(p.join("offline.csv")).unwrap(), fs::read(p.join("sw/table.csv")).unwrap());
    let moments = fs::read_to_string(p.join("sw/moments.csv")).unwrap();
    assert_eq!(moments.lines().count(), 1 + 10 * 4);
}

#[test]
fn renders_a_single_chip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["simulate", "--n", "1", "--render", "chips", "--render", "rotors", "--scale", "2"], p);
    let ppm = fs::read(p.join("rotor_NWSE_N1.chips.ppm")).unwrap();
    let header = b"P6\n6 6\n255\n";
    assert!(ppm.starts_with(header));
    let px = &ppm[header.len()..];
    assert_eq!(px.len(), 6 * 6 * 3);
    let black = px.chunks(3).filter(|c| *c == [0, 0, 0]).count();
    assert_eq!(black, 4);
    assert_eq!(&px[(2 * 6 + 2) * 3..(2 * 6 + 2) * 3 + 3], &[0, 0, 0]);
    let rotors = fs::read(p.join("rotor_NWSE_N1.rotors.ppm")).unwrap();
    assert!(rotors[header.len()..].iter().all(|b| *b == 255));
    ok(&["render", "--snapshot", "rotor_NWSE_N1.snap", "--mode", "chips", "--scale", "2", "--out", "again.ppm"], p);
    assert_eq!(fs::read(p.join("again.ppm")).unwrap(), ppm);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_odometer"))
        .args(["simulate", "--n", "16"])
        .current_dir(dir.path())
        .env("ODOMETER_OUT", "envdir")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("envdir/rotor_NWSE_N16.json").exists());
}

#[test]
fn kernel_dump() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["kernel", "--radius", "3"], dir.path());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,p_num,p_den,q_num,q_den"));
    assert!(text.lines().any(|l| l == "1,1,0,1,4,1"));
}
