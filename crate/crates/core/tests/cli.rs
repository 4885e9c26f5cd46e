use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const MIXED_SCALE: &str = r#"[{"interval":[0,1]},{"point":1.5},{"point":2},{"point":2.5},{"interval":[3,5]}]"#;

fn tshopfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tshopfield")).args(args).output().expect("spawn tshopfield")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        fs::write(self.path(name), text).unwrap();
        self.p(name)
    }

    fn generate(&self, name: &str, extra: &[&str]) -> String {
        let out_path = self.p(name);
        let mut args = vec!["generate", "--out", &out_path];
        args.extend_from_slice(extra);
        let out = tshopfield(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_path
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn degrees(network: &str) -> Vec<usize> {
    let v: Value = serde_json::from_str(&fs::read_to_string(network).unwrap()).unwrap();
    let n = v["nodes"].as_array().unwrap().len();
    let mut deg = vec![0; n];
    for e in v["edges"].as_array().unwrap() {
        deg[e[0].as_u64().unwrap() as usize] += 1;
        deg[e[1].as_u64().unwrap() as usize] += 1;
    }
    deg
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&tshopfield(&["--help"])), 0);
    assert_eq!(code(&tshopfield(&["simulate", "--help"])), 0);
    assert_eq!(code(&tshopfield(&[])), 1);
    assert_eq!(code(&tshopfield(&["certify", "--network"])), 1);
    assert_eq!(code(&tshopfield(&["generate", "--kind", "hypercube", "--n", "4"])), 1);
}

#[test]
fn generate_degrees_and_determinism() {
    let ws = Workspace::new();
    let ring = ws.generate("ring.json", &["--kind", "ring", "--n", "10"]);
    assert!(degrees(&ring).iter().all(|&k| k == 2));
    let k5 = ws.generate("k5.json", &["--kind", "complete", "--n", "5"]);
    assert!(degrees(&k5).iter().all(|&k| k == 4));
    let star = ws.generate("star.json", &["--kind", "star", "--n", "6"]);
    assert_eq!(degrees(&star), vec![5, 1, 1, 1, 1, 1]);

    let a = ws.generate("er_a.json", &["--kind", "erdos-renyi", "--n", "10", "--p", "0.3", "--seed", "7"]);
    let b = ws.generate("er_b.json", &["--kind", "erdos-renyi", "--n", "10", "--p", "0.3", "--seed", "7"]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    let c = ws.generate("er_c.json", &["--kind", "erdos-renyi", "--n", "10", "--p", "0.3", "--seed", "8"]);
    assert_ne!(fs::read(ws.path("er_a.json")).unwrap(), fs::read(c).unwrap());
}

#[test]
fn certify_empty_graph_passes() {
    let ws = Workspace::new();
    let net = ws.generate("empty.json", &["--kind", "erdos-renyi", "--n", "4", "--p", "0"]);
    let ts = ws.write("ts.json", r#"[{"grid":{"start":0,"stop":3,"step":0.1}}]"#);
    let out = tshopfield(&["certify", "--network", &net, "--timescale", &ts]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = stdout_json(&out);
    assert_eq!(rep["all_pass"], Value::Bool(true));
    assert_eq!(rep["norms"]["spectral"].as_f64().unwrap(), 0.0);
    let mu = rep["mu_star"].as_f64().unwrap();
    assert!((mu - 0.1).abs() < 1e-12);
}

#[test]
fn certify_star_with_large_benefit_fails_size_independent() {
    let ws = Workspace::new();
    let net = ws.generate("star.json", &["--kind", "star", "--n", "8", "--b", "5", "--c", "1"]);
    let ts = ws.write("ts.json", MIXED_SCALE);
    let report_path = ws.p("report.json");
    let out = tshopfield(&["certify", "--network", &net, "--timescale", &ts, "--out", &report_path]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("size_independent"));
    let rep: Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(rep["size_independent"]["pass"], Value::Bool(false));
    for key in ["pass", "lhs", "rhs", "slack", "witness"] {
        assert!(rep["size_independent"].get(key).is_some(), "verdict lacks {key}");
    }
    let failures = rep["failures"].as_array().unwrap();
    assert!(failures.iter().any(|f| f.as_str().unwrap().starts_with("size_independent")));
}

#[test]
fn certify_input_errors() {
    let ws = Workspace::new();
    let bad = ws.write("bad.json", "{ \"nodes\": [");
    let ts = ws.write("ts.json", MIXED_SCALE);
    let out = tshopfield(&["certify", "--network", &bad, "--timescale", &ts]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let net = ws.generate("ring.json", &["--kind", "ring", "--n", "10"]);
    let missing = ws.p("nope.json");
    assert_eq!(code(&tshopfield(&["certify", "--network", &net, "--timescale", &missing])), 2);
    // declared mu* below the observed graininess
    assert_eq!(code(&tshopfield(&["certify", "--network", &net, "--timescale", &ts, "--mu-star", "0.1"])), 2);
}

#[test]
fn simulate_scalar_decay_matches_closed_form() {
    let ws = Workspace::new();
    let net = ws.write(
        "scalar.json",
        r#"{"nodes":[{"C":1.0,"R":0.8,"lambda":1.0,"M":1.0}],"edges":[],"payoff":{"b":2,"c":1}}"#,
    );
    let ts = ws.write("ts.json", r#"[{"interval":[0,2]}]"#);
    let csv_path = ws.p("traj.csv");
    let out = tshopfield(&["simulate", "--network", &net, "--timescale", &ts, "--u0", "1.5", "--out", &csv_path]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(Path::new(&csv_path));
    assert_eq!(header, vec!["t", "node_0", "V", "envelope_bound"]);
    let b = 1.0 / 0.8;
    let v0: f64 = rows[0][2].parse().unwrap();
    let last = rows.last().unwrap();
    let t: f64 = last[0].parse().unwrap();
    let v: f64 = last[2].parse().unwrap();
    assert_eq!(t, 2.0);
    assert_eq!(v0, 2.25);
    assert!((v - (-2.0 * b * t).exp() * v0).abs() <= 1e-6);
}

#[test]
fn simulate_with_envelope_check_on_twenty_starts() {
    let ws = Workspace::new();
    let net = ws.generate("ring.json", &["--kind", "ring", "--n", "10"]);
    let ts = ws.write("ts.json", MIXED_SCALE);
    let dir = ws.p("runs");
    let args = ["simulate", "--network", &net, "--timescale", &ts, "--runs", "20", "--seed", "4", "--check-envelope", "--out", &dir];
    let out = tshopfield(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["all_envelopes_pass"], Value::Bool(true));
    assert_eq!(summary["all_lyapunov_pass"], Value::Bool(true));
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 20);
    for (i, r) in runs.iter().enumerate() {
        assert_eq!(r["run"].as_u64().unwrap() as usize, i);
        assert!(r["envelope"]["max_ratio"].as_f64().unwrap() <= 1.0 + 1e-8);
    }
    let (header, rows) = read_csv(&ws.path("runs/run_007.csv"));
    assert_eq!(header.len(), 1 + 10 + 2);
    assert_eq!(header[11], "V");
    assert!(rows.iter().all(|r| !r[12].is_empty()));

    // same seed, same bytes
    let again = tshopfield(&args);
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn simulate_rejects_end_time_outside_scale() {
    let ws = Workspace::new();
    let net = ws.generate("ring.json", &["--kind", "ring", "--n", "10"]);
    let ts = ws.write("ts.json", MIXED_SCALE);
    assert_eq!(code(&tshopfield(&["simulate", "--network", &net, "--timescale", &ts, "--tf", "1.2"])), 2);
    assert_eq!(code(&tshopfield(&["simulate", "--network", &net, "--timescale", &ts, "--u0", "1,2"])), 2);
}

#[test]
fn simulate_reports_integrator_failure() {
    let ws = Workspace::new();
    let net = ws.generate("ring.json", &["--kind", "ring", "--n", "4", "--capacitance", "1e-6"]);
    let ts = ws.write("ts.json", r#"[{"interval":[0,1]}]"#);
    let out = tshopfield(&["simulate", "--network", &net, "--timescale", &ts, "--u0", "1,1,1,1", "--max-steps", "2000"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn equilibrium_commands() {
    let ws = Workspace::new();
    // no coupling: u* = B^-1 J = R C J
    let net = ws.write(
        "free.json",
        r#"{"nodes":[{"C":2.0,"R":1.5,"lambda":1,"M":1,"J":0.4},{"C":1.0,"R":3.0,"lambda":1,"M":1,"J":-0.2}],
            "edges":[],"payoff":{"b":2,"c":1}}"#,
    );
    let out = tshopfield(&["equilibrium", "--network", &net]);
    assert_eq!(code(&out), 0);
    let res = stdout_json(&out);
    let u: Vec<f64> = res["u_star"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((u[0] - 1.2).abs() <= 1e-12 && (u[1] + 0.6).abs() <= 1e-12);

    let ring = ws.generate("ring.json", &["--kind", "ring", "--n", "10"]);
    let res = stdout_json(&tshopfield(&["equilibrium", "--network", &ring]));
    assert_eq!(res["within_r0"], Value::Bool(true));
    assert!(res["residual"].as_f64().unwrap() <= 1e-10);

    // strong positive coupling: no certificate holds and the damped search stalls
    let wild = ws.generate(
        "wild.json",
        &["--kind", "complete", "--n", "6", "--b", "30", "--c", "1", "--lambda", "5", "--input", "0.7", "--activation", "logistic"],
    );
    let out = tshopfield(&["equilibrium", "--network", &wild]);
    assert_eq!(code(&out), 3);
    assert_eq!(stdout_json(&out)["converged"], Value::Bool(false));
    let ts = ws.write("ts.json", MIXED_SCALE);
    assert_eq!(code(&tshopfield(&["certify", "--network", &wild, "--timescale", &ts])), 3);
}

#[test]
fn game_commands() {
    let ws = Workspace::new();
    let ring = ws.generate("ring.json", &["--kind", "ring", "--n", "6", "--threshold", "0.5"]);
    let csv_path = ws.p("game.csv");
    let out = tshopfield(&["game", "--network", &ring, "--steps", "5", "--out", &csv_path]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(Path::new(&csv_path));
    assert_eq!(header[0], "step");
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[1..].iter().all(|x| x == "0")));

    let k3 = ws.generate("k3.json", &["--kind", "complete", "--n", "3", "--b", "2", "--c", "1", "--threshold", "0.1"]);
    let out = tshopfield(&["game", "--network", &k3, "--init", "cooperate", "--steps", "3"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "step,node_0,node_1,node_2\n0,1,1,1\n1,1,1,1\n2,1,1,1\n3,1,1,1\n");

    // path 0-1, b = 2, c = 1, U = (1.5, 0.5), start (0, 1):
    // sync -> (1, 0); seq -> node 1 sees node 0 already cooperating -> (1, 1)
    let path = ws.write(
        "path.json",
        r#"{"nodes":[{"C":1,"R":1,"lambda":1,"M":1,"U":1.5},{"C":1,"R":1,"lambda":1,"M":1,"U":0.5}],
            "edges":[[0,1]],"payoff":{"b":2,"c":1}}"#,
    );
    let step = |mode: &str| {
        let out = tshopfield(&["game", "--network", &path, "--init", "0,1", "--steps", "1", "--mode", mode]);
        String::from_utf8(out.stdout).unwrap().lines().last().unwrap().to_string()
    };
    assert_eq!(step("sync"), "1,1,0");
    assert_eq!(step("seq"), "1,1,1");
}

#[test]
fn generated_network_round_trips_through_every_command() {
    let ws = Workspace::new();
    let net = ws.generate("er.json", &["--kind", "erdos-renyi", "--n", "8", "--p", "0.25", "--seed", "3"]);
    let ts = ws.write("ts.json", MIXED_SCALE);
    for args in [
        vec!["certify", "--network", &net, "--timescale", &ts],
        vec!["equilibrium", "--network", &net],
        vec!["game", "--network", &net, "--mode", "seq"],
        vec!["simulate", "--network", &net, "--timescale", &ts, "--runs", "3"],
    ] {
        let out = tshopfield(&args);
        assert!(matches!(code(&out), 0 | 3), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
