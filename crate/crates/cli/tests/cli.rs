use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qa-ensemble"));
    c.env_remove("QA_ENSEMBLE__SEED");
    c
}

fn example() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let calibration = path.with_file_name("calibration.csv");
    std::fs::read_to_string(&path)
        .unwrap()
        .replace("trials = 100000", "trials = 20000")
        .replace(
            "calibration_path = \"calibration.csv\"",
            &format!("calibration_path = {calibration:?}"),
        )
}

struct Fixture {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Fixture {
    fn new(config_text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("exp.toml");
        std::fs::write(&config, config_text).unwrap();
        Self { dir, config }
    }

    fn with_data(config_text: &str) -> Self {
        let f = Self::new(config_text);
        let data = f.dir.path().join("data");
        let out = f.cmd(&[
            "synth",
            "--queries",
            "60",
            "--dataset-out",
            data.join("dataset.jsonl").to_str().unwrap(),
            "--store-out",
            data.join("kb.jsonl").to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        f
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn cmd(&self, args: &[&str]) -> Output {
        bin()
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .output()
            .unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_table_shaped_report_and_traces() {
    let f = Fixture::with_data(&example());
    let o = f.cmd(&["run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(f.out().join("report.csv")).unwrap();
    let header = report.lines().next().unwrap();
    assert_eq!(
        header,
        "experiment_version,recall,precision,f1,hallucination_rate,incongruent_response_rate,\
         mean_cost,p50_latency_ms,answered_fraction,config_hash,seed"
    );
    let traces = std::fs::read_to_string(f.out().join("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 60);
    let first: serde_json::Value = serde_json::from_str(traces.lines().next().unwrap()).unwrap();
    assert_eq!(first["seed"], 42);
    assert_eq!(first["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_reproduces_run_metrics() {
    let f = Fixture::with_data(&example());
    assert!(f.cmd(&["run"]).status.success());
    let o = f.cmd(&["eval"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = std::fs::read_to_string(f.out().join("report.csv")).unwrap();
    let eval = std::fs::read_to_string(f.out().join("eval.csv")).unwrap();
    assert_eq!(run, eval);
}

#[test]
fn json_format() {
    let f = Fixture::with_data(&example());
    assert!(f.cmd(&["--format", "json", "run"]).status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.out().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["rows"][0]["seed"], 42);
    assert!(v["rows"][0]["precision"].is_f64());
}

#[test]
fn negative_cost_is_a_config_error() {
    let f = Fixture::new(&example().replacen("cost_per_call = 1.0", "cost_per_call = -1.0", 1));
    let o = f.cmd(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("agents[0].cost_per_call"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let f = Fixture::new(&example().replace("seed = 42", "seed = 42\nsede = 1"));
    let o = f.cmd(&["plan"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sede"), "{}", stderr(&o));
}

#[test]
fn unreachable_sla_exits_3() {
    let f = Fixture::with_data(
        &example().replace("hallucination_rate<=0.23", "hallucination_rate<=0.10"),
    );
    let o = f.cmd(&["run"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no configuration meets the SLA"));
}

#[test]
fn plan_examples() {
    let f = Fixture::new(&example());
    let pick = |sla: &str| {
        let o = f.cmd(&["--format", "json", "plan", "--sla", sla]);
        (
            o.status.code(),
            serde_json::from_slice::<serde_json::Value>(&o.stdout).ok(),
        )
    };
    let (code, v) = pick("hallucination_rate<=0.23");
    assert_eq!(code, Some(0));
    assert!(v.unwrap()["fingerprint"]
        .as_str()
        .unwrap()
        .starts_with("n=3;"));
    let (code, v) = pick("hallucination_rate<=0.30");
    assert_eq!(code, Some(0));
    let v = v.unwrap();
    assert!(v["fingerprint"].as_str().unwrap().starts_with("n=1;"));
    assert_eq!(v["predicted_cost"], 1.0);
    assert_eq!(pick("hallucination_rate<=0.10").0, Some(3));
}

#[test]
fn env_override_changes_seed_and_hash() {
    let f = Fixture::new(&example());
    let plan = |seed: Option<&str>| {
        let mut c = bin();
        if let Some(s) = seed {
            c.env("QA_ENSEMBLE__SEED", s);
        }
        let o = c
            .arg("--config")
            .arg(&f.config)
            .args(["--format", "json", "plan"])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    let (a, b) = (plan(None), plan(Some("7")));
    assert_eq!(a["seed"], 42);
    assert_eq!(b["seed"], 7);
    assert_ne!(a["config_hash"], b["config_hash"]);
}

#[test]
fn env_override_reaches_nested_keys() {
    let f = Fixture::new(&example());
    let o = bin()
        .env("QA_ENSEMBLE__AGENTS__0__COST_PER_CALL", "-2")
        .arg("--config")
        .arg(&f.config)
        .arg("plan")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("agents[0].cost_per_call"));
}

#[test]
fn simulate_reports_mc_oracle_and_delta() {
    let f = Fixture::new(&example());
    let o = f.cmd(&["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(f.out().join("simulate.csv")).unwrap();
    let names: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["mc", "oracle", "delta"]);
}

#[test]
fn simulate_skips_oracle_beyond_eight_agents() {
    let mut text = example().replace("agents = [\"control\", \"aggressive\", \"vertical\"]\n", "");
    let agent = text[text.find("[[agents]]\nagent_id = \"control\"").unwrap()
        ..text.find("[[agents]]\nagent_id = \"rerank\"\n").unwrap()]
        .to_string();
    for i in 0..4 {
        text.push_str(&agent.replace(
            "agent_id = \"control\"",
            &format!("agent_id = \"extra{i}\""),
        ));
    }
    let f = Fixture::new(&text);
    let o = f.cmd(&["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("oracle skipped"), "{}", stderr(&o));
    let text = std::fs::read_to_string(f.out().join("simulate.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let f = Fixture::new(&example());
    let read = |seed: &str| {
        assert!(f.cmd(&["--seed", seed, "simulate"]).status.success());
        std::fs::read(f.out().join("simulate.csv")).unwrap()
    };
    assert_eq!(read("7"), read("7"));
    assert_ne!(read("7"), read("8"));
}

#[test]
fn missing_config_flag() {
    let o = bin().arg("run").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
