use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn qpart() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qpart"));
    cmd.env_remove("QPART_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    qpart().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_example(dir: &Path) -> String {
    let path = dir.join("two.txt");
    std::fs::write(&path, "qubits 4\ncx 0 1\ncx 0 2\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in [
        &[][..],
        &["map"],
        &["bench"],
        &["serve"],
        &["gen"],
        &["oracle"],
    ] {
        let mut args: Vec<&str> = sub.to_vec();
        args.push("--help");
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["map", "--cores", "2"][..],
        &["frobnicate"],
        &["map", "--gen", "cuccaro:2", "--cores", "x"],
        &[
            "map",
            "--gen",
            "cuccaro:2",
            "--cores",
            "2",
            "--method",
            "ppo",
        ],
        &["gen", "--family", "cuccaro", "--bits", "1", "--bogus"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    for args in [
        vec![
            "map",
            "--circuit",
            missing.to_str().unwrap(),
            "--cores",
            "2",
        ],
        vec!["map", "--gen", "cuccaro:1", "--cores", "3"],
        vec!["oracle", "--gen", "random:16:3:1", "--cores", "4"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "qubits 2\ncx 0 5\n").unwrap();
    let out = run(&["oracle", "--circuit", bad.to_str().unwrap(), "--cores", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("qubit 5 out of range"));
}

#[test]
fn gen_cuccaro_declares_32_qubits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adder.txt");
    stdout(&run(&[
        "gen",
        "--family",
        "cuccaro",
        "--bits",
        "15",
        "--out",
        path.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().any(|l| l.trim() == "qubits 32"), "{text}");
    // the written file is itself a valid input
    let out = stdout(&run(&[
        "map",
        "--circuit",
        path.to_str().unwrap(),
        "--cores",
        "4",
    ]));
    assert!(out.trim().parse::<f64>().unwrap() > 0.0);
}

#[test]
fn gen_is_deterministic_in_seed() {
    let a = stdout(&run(&[
        "gen", "--family", "qaoa", "--qubits", "8", "--seed", "4",
    ]));
    let b = stdout(&run(&[
        "gen", "--family", "qaoa", "--qubits", "8", "--seed", "4",
    ]));
    let c = qpart()
        .args(["gen", "--family", "qaoa", "--qubits", "8"])
        .env("QPART_SEED", "4")
        .output()
        .unwrap();
    assert_eq!(a, b);
    assert_eq!(a, stdout(&c));
    assert_eq!(
        a.lines().filter(|l| l.starts_with("cx")).count(),
        2 * 8 * 3 / 2
    );
}

#[test]
fn oracle_on_a_single_slice_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.txt");
    std::fs::write(&path, "qubits 4\ncx 0 1\ncx 2 3\n").unwrap();
    let out = stdout(&run(&[
        "oracle",
        "--circuit",
        path.to_str().unwrap(),
        "--cores",
        "2",
    ]));
    assert_eq!(out, "0\n");
}

#[test]
fn map_example_against_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_example(dir.path());
    let optimal = stdout(&run(&["oracle", "--circuit", &input, "--cores", "2"]));
    assert_eq!(optimal.trim(), "2");
    let traj = dir.path().join("out/traj.json");
    let avg = stdout(&run(&[
        "map",
        "--circuit",
        &input,
        "--cores",
        "2",
        "--method",
        "fgp-roee",
        "--out",
        traj.to_str().unwrap(),
    ]));
    let avg: f64 = avg.trim().parse().unwrap();
    // one transition, so the optimal average equals the optimal total
    assert!(avg >= 2.0, "{avg}");
    let t: Value = serde_json::from_slice(&std::fs::read(&traj).unwrap()).unwrap();
    assert_eq!(t["assignments"].as_array().unwrap().len(), 2);
    assert_eq!(t["moves_per_step"], json!([0, 2]));
    assert_eq!(t["avg_moves"].as_f64(), Some(avg));
}

#[test]
fn map_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["fgp-roee", "greedy-hard", "random-soft"] {
        let mut outs = Vec::new();
        for i in 0..2 {
            let path = dir.path().join(format!("{method}-{i}.json"));
            let printed = stdout(&run(&[
                "map",
                "--gen",
                "random:8:12:0.5:1",
                "--cores",
                "2",
                "--method",
                method,
                "--seed",
                "9",
                "--budget",
                "4096",
                "--out",
                path.to_str().unwrap(),
            ]));
            outs.push((printed, std::fs::read(&path).unwrap()));
        }
        assert_eq!(outs[0], outs[1], "{method}");
    }
}

#[test]
fn bench_is_byte_identical_and_reads_specs() {
    let dir = tempfile::tempdir().unwrap();
    let flags = |out: &str| {
        vec![
            "bench".to_string(),
            "--qubits=8".into(),
            "--cores=2,4".into(),
            "--slices=8".into(),
            "--trials=2".into(),
            "--instances=2".into(),
            "--budget=512".into(),
            "--methods=fgp-roee,greedy-hard,random-hard,greedy-soft".into(),
            "--jobs=2".into(),
            format!("--out={out}"),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let pa = stdout(&run(&flags(a.to_str().unwrap())
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()));
    let pb = stdout(&run(&flags(b.to_str().unwrap())
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()));
    assert_eq!(pa, pb);
    for f in ["bench.csv", "bench.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let csv = std::fs::read_to_string(a.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 2 * 2);

    let spec = dir.path().join("spec.json");
    let c = dir.path().join("c");
    std::fs::write(
        &spec,
        json!({
            "circuit": {"family": "cuccaro"},
            "qubits": [8],
            "cores": [2],
            "methods": ["fgp_roee", "greedy_hard"],
            "trials": 1,
            "output": c,
        })
        .to_string(),
    )
    .unwrap();
    let printed = stdout(&run(&["bench", "--spec", spec.to_str().unwrap()]));
    assert!(printed.starts_with("method,"));
    let csv = std::fs::read_to_string(c.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("fgp_roee,cuccaro-3,8,2,0,0,"));
}

#[test]
fn bench_without_output_dir_fails() {
    let out = run(&[
        "bench",
        "--qubits=8",
        "--cores=2",
        "--slices=4",
        "--trials=1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_stdio_session() {
    let mut child = qpart()
        .args(["serve", "--transport", "stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    let mut output = BufReader::new(child.stdout.take().unwrap());
    let mut call = |req: Value| -> Value {
        writeln!(input, "{req}").unwrap();
        input.flush().unwrap();
        let mut line = String::new();
        output.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    };
    let config = json!({
        "circuit": {"slices": {"num_qubits": 4, "slices": [[[0, 1]], [[0, 2]]]}},
        "num_cores": 2,
        "mask_mode": "hard",
    });
    let made = call(json!({"cmd": "make", "config": config}));
    assert_eq!(made["env_id"], json!(0));
    let reset = call(json!({"cmd": "reset", "env_id": 0}));
    assert_eq!(reset["obs"].as_array().unwrap().len(), 23);
    assert_eq!(reset["mask"].as_array().unwrap().len(), 11);
    let r = call(json!({"cmd": "step", "env_id": 0, "action": 10}));
    assert_eq!(r["reward"], json!(1.0));
    let r = call(json!({"cmd": "step", "env_id": 0, "action": 99}));
    assert!(r["error"].as_str().unwrap().contains("action out of range"));
    let r = call(json!({"cmd": "step", "env_id": 5, "action": 0}));
    assert!(r["error"].as_str().unwrap().contains("unknown env_id"));
    let r = call(json!({"cmd": "shutdown"}));
    assert!(r.get("error").is_none());
    drop(input);
    assert!(child.wait().unwrap().success());
}
