//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use qa_ensemble::agents::reasoner::reasoner_registry;
use qa_ensemble::agents::AgentProfile;
use qa_ensemble::dataset::synthetic::{generate, SyntheticSpec};
use qa_ensemble::dataset::{load_dataset, IntentLabel};
use qa_ensemble::engine::{summarize, Engine, EnsembleSource, QueryRecord};
use qa_ensemble::evalsim::report::{report_json, write_report_csv, Provenance, ReportRow};
use qa_ensemble::evalsim::simulate::SimAccounting;
use qa_ensemble::evalsim::{
    brute_force_ensemble_oracle, monte_carlo, IrrDenominator, MetricsReport, SimulationSpec,
};
use qa_ensemble::planning::{
    CalibrationTable, EnsembleConfig, Estimator, IntentClassifier, IntentRulePack,
    MonteCarloEstimator, PlanError, Planner, SearchSpace,
};
use qa_ensemble::retrieval::DocumentStore;
use qa_ensemble::sla::QosKind;

use crate::config::{self, ConfigError, Format, LoadedConfig};
use crate::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn plan_error(e: PlanError) -> CliError {
    match e {
        PlanError::InfeasibleSla { .. } => CliError::Infeasible(e.to_string()),
        PlanError::UnknownAgent(_) | PlanError::EmptySearchSpace => {
            CliError::Config(format!("planner: {e}"))
        }
        _ => CliError::Other(e.to_string()),
    }
}

/// Settings shared by every subcommand once flags and config are merged.
struct Ctx {
    loaded: LoadedConfig,
    seed: u64,
    out_dir: PathBuf,
    format: Format,
    threads: usize,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required".into()))?;
        let loaded = config::load(path, &config::env_overrides())?;
        let c = &loaded.config;
        Ok(Self {
            seed: cli.seed.unwrap_or(c.seed),
            out_dir: cli.out.clone().unwrap_or_else(|| c.output.dir.clone()),
            format: cli.format.unwrap_or(c.output.format),
            threads: cli.threads.unwrap_or(c.threads),
            loaded,
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.loaded.hash.clone(),
            seed: self.seed,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(other)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| other(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| other(format!("{}: {e}", path.display())))
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run => cmd_run(&Ctx::new(cli)?),
        Command::Simulate => cmd_simulate(&Ctx::new(cli)?),
        Command::Plan { intent, sla } => cmd_plan(&Ctx::new(cli)?, intent, sla.as_deref()),
        Command::Eval { trace } => cmd_eval(cli, trace.as_deref()),
        Command::Synth {
            queries,
            p_global_context,
            distractors,
            dataset_out,
            store_out,
        } => cmd_synth(
            &Ctx::new(cli)?,
            *queries,
            *p_global_context,
            *distractors,
            dataset_out,
            store_out,
        ),
    }
}

fn write_rows(ctx: &Ctx, stem: &str, rows: &[ReportRow]) -> Result<PathBuf, CliError> {
    let prov = ctx.provenance();
    let (name, format) = match ctx.format {
        Format::Csv => (format!("{stem}.csv"), Format::Csv),
        Format::Json => (format!("{stem}.json"), Format::Json),
    };
    let mut out = ctx.create(&name)?;
    match format {
        Format::Csv => write_report_csv(rows, Some(&prov), &mut out).map_err(other)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report_json(rows, Some(&prov)))
                .map_err(other)?;
            writeln!(out).map_err(other)?;
        }
    }
    out.flush().map_err(other)?;
    Ok(ctx.out_dir.join(name))
}

fn load_stores(ctx: &Ctx) -> Result<BTreeMap<String, DocumentStore>, CliError> {
    let c = &ctx.loaded.config;
    c.stores
        .iter()
        .map(|(label, path)| {
            DocumentStore::load(label.as_str(), ctx.loaded.resolve(path), c.retrieval.dim)
                .map(|s| (label.clone(), s))
                .map_err(|e| CliError::Config(format!("stores.{label}: {e}")))
        })
        .collect()
}

fn classifier(ctx: &Ctx) -> Result<Arc<dyn IntentClassifier>, CliError> {
    Ok(match &ctx.loaded.config.intent_rules {
        None => Arc::new(IntentRulePack::default()),
        Some(rules) => Arc::new(
            IntentRulePack::new(rules)
                .map_err(|e| CliError::Config(format!("intent_rules: {e}")))?,
        ),
    })
}

fn estimator(ctx: &Ctx, trials: u64) -> MonteCarloEstimator {
    let c = &ctx.loaded.config;
    MonteCarloEstimator {
        trials,
        seed: ctx.seed,
        scorer_model: c.simulate.scorer_model,
        p_global_context: c.simulate.p_global_context,
        irr: c.metrics.irr_denominator,
        accounting: c.accounting,
    }
}

fn planner(ctx: &Ctx) -> Result<Option<Planner>, CliError> {
    let c = &ctx.loaded.config;
    let Some(p) = &c.planner else { return Ok(None) };
    let calibration = match &p.calibration_path {
        Some(path) => CalibrationTable::load(ctx.loaded.resolve(path))
            .map_err(|e| CliError::Config(format!("planner.calibration_path: {e}")))?,
        None => CalibrationTable::new(),
    };
    let fallback = p
        .fallback_trials
        .map(|t| Arc::new(estimator(ctx, t)) as Arc<dyn Estimator>);
    Ok(Some(Planner {
        pool: c.agents.clone(),
        space: SearchSpace {
            ensembles: p.ensembles.clone(),
            thresholds: p.thresholds.clone(),
            arbitration_kinds: p.arbitration_kinds.clone(),
            rounding: p.rounding,
        },
        calibration,
        fallback,
    }))
}

fn fixed_ensemble(ctx: &Ctx) -> EnsembleConfig {
    let c = &ctx.loaded.config;
    EnsembleConfig::new(c.agents.clone(), c.arbitration)
}

/// One line of `traces.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    #[serde(flatten)]
    record: QueryRecord,
    config_hash: String,
    seed: u64,
}

fn cmd_run(ctx: &Ctx) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let dataset_path = c
        .dataset_path
        .as_ref()
        .ok_or_else(|| CliError::Config("dataset_path: required by `run`".into()))?;
    let dataset = load_dataset(ctx.loaded.resolve(dataset_path))
        .map_err(|e| CliError::Config(format!("dataset_path: {e}")))?;
    let stores = load_stores(ctx)?;
    let source = match planner(ctx)? {
        Some(p) => EnsembleSource::Planned(p),
        None => EnsembleSource::Fixed(fixed_ensemble(ctx)),
    };
    let mut engine = Engine::new(
        classifier(ctx)?,
        config::sla(c)?,
        config::environment(c),
        source,
        stores,
        reasoner_registry(c.reasoner_http.clone()),
        c.scorer.build(),
        ctx.seed,
    )
    .with_dataset(Arc::new(dataset))
    .with_accounting(c.accounting);
    engine.top_k_per_vertical = c.retrieval.top_k_per_vertical;

    let ensemble = engine.ensemble().map_err(plan_error)?;
    let queries: Vec<(String, String)> = engine
        .dataset
        .as_ref()
        .expect("dataset attached")
        .queries()
        .into_iter()
        .map(|(id, q)| (id.to_string(), q.to_string()))
        .collect();
    let records = ctx.pool()?.install(|| engine.run_batch(&queries));

    let prov = ctx.provenance();
    let mut out = ctx.create("traces.jsonl")?;
    for record in records.iter().cloned() {
        let line = TraceLine {
            record,
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
        };
        serde_json::to_writer(&mut out, &line).map_err(other)?;
        writeln!(out).map_err(other)?;
    }
    out.flush().map_err(other)?;

    let summary = summarize(&records, c.metrics.irr_denominator).map_err(other)?;
    let row = ReportRow::new(
        ensemble.fingerprint.key(),
        &summary.metrics,
        summary.mean_cost,
        summary.p50_latency_ms,
    );
    let report = write_rows(ctx, "report", &[row])?;
    eprintln!(
        "{}: {} traced, {} unsupported, {} failed; precision {:.3}, recall {:.3}, hallucination rate {:.3} -> {}",
        ensemble.fingerprint,
        summary.traced,
        summary.unsupported,
        summary.failed,
        summary.metrics.precision,
        summary.metrics.recall,
        summary.metrics.hallucination_rate,
        report.display()
    );
    Ok(())
}

fn delta_row(mc: &ReportRow, oracle: &ReportRow) -> ReportRow {
    let d = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    ReportRow {
        experiment_version: "delta".into(),
        recall: mc.recall - oracle.recall,
        precision: mc.precision - oracle.precision,
        f1: mc.f1 - oracle.f1,
        hallucination_rate: mc.hallucination_rate - oracle.hallucination_rate,
        incongruent_response_rate: mc.incongruent_response_rate - oracle.incongruent_response_rate,
        mean_cost: d(mc.mean_cost, oracle.mean_cost),
        p50_latency_ms: d(mc.p50_latency_ms, oracle.p50_latency_ms),
        answered_fraction: d(mc.answered_fraction, oracle.answered_fraction),
    }
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let agents: Vec<_> = match &c.simulate.agents {
        Some(ids) => ids
            .iter()
            .filter_map(|id| c.agents.iter().find(|a| &a.agent_id == id))
            .collect(),
        None => c.agents.iter().collect(),
    };
    let profiles: Vec<AgentProfile> = agents
        .iter()
        .map(|a| {
            a.profile.ok_or_else(|| {
                CliError::Config(format!(
                    "agents.{}.profile: required by `simulate`",
                    a.agent_id
                ))
            })
        })
        .collect::<Result<_, _>>()?;
    let n = profiles.len();
    let mut spec = SimulationSpec::new(profiles.clone(), c.arbitration, c.simulate.scorer_model);
    spec.trials = c.trials;
    spec.seed = ctx.seed;
    spec.p_global_context = c.simulate.p_global_context;
    spec.irr = c.metrics.irr_denominator;
    spec.accounting = Some(SimAccounting {
        agent_costs: agents.iter().map(|a| a.cost_per_call).collect(),
        latency_models: agents.iter().map(|a| a.latency_model.clone()).collect(),
        params: c.accounting,
    });
    let result = ctx
        .pool()?
        .install(|| monte_carlo(&spec, n))
        .map_err(other)?;
    let mc = ReportRow::new(
        "mc",
        &result.metrics,
        result.mean_cost,
        result.p50_latency_ms,
    );
    let mut rows = vec![mc.clone()];
    match brute_force_ensemble_oracle(
        &profiles,
        &c.arbitration,
        c.simulate.scorer_model,
        spec.p_global_context,
        spec.irr,
    ) {
        Ok(m) => {
            let exact_cost = c.accounting.overhead_cost
                + agents.iter().map(|a| a.cost_per_call).sum::<f64>()
                + c.accounting.arbitration_cost.eval(n);
            let oracle = ReportRow::new("oracle", &m, Some(exact_cost), None);
            rows.push(delta_row(&mc, &oracle));
            rows.insert(1, oracle);
        }
        Err(e) => eprintln!("warning: oracle skipped: {e}"),
    }
    let path = write_rows(ctx, "simulate", &rows)?;
    eprintln!("{} agents, {} trials -> {}", n, spec.trials, path.display());
    Ok(())
}

#[derive(Serialize)]
struct PlanOutput {
    intent: IntentLabel,
    fingerprint: String,
    members: Vec<String>,
    arbitration: qa_ensemble::arbitration::ArbitrationStrategy,
    predicted: BTreeMap<QosKind, f64>,
    predicted_cost: Option<f64>,
    considered: usize,
    config_hash: String,
    seed: u64,
}

fn cmd_plan(ctx: &Ctx, intent: &str, sla: Option<&str>) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let intent: IntentLabel = intent
        .parse()
        .map_err(|_| CliError::Config(format!("--intent: unknown intent `{intent}`")))?;
    let sla = match sla {
        Some(s) => {
            let objectives: Vec<String> = s
                .split(',')
                .map(|o| o.trim().to_string())
                .filter(|o| !o.is_empty())
                .collect();
            config::parse_sla("cli", &objectives)
                .map_err(|e| CliError::Config(format!("--sla: {e}")))?
        }
        None => config::sla(c)?,
    };
    let planner = planner(ctx)?
        .ok_or_else(|| CliError::Config("planner: section required by `plan`".into()))?;
    let plan = ctx
        .pool()?
        .install(|| planner.plan(intent, &sla, &config::environment(c)))
        .map_err(plan_error)?;
    let prov = ctx.provenance();
    let out = PlanOutput {
        intent,
        fingerprint: plan.ensemble.fingerprint.key(),
        members: plan
            .ensemble
            .member_ids()
            .into_iter()
            .map(String::from)
            .collect(),
        arbitration: plan.ensemble.arbitration,
        predicted_cost: plan.predicted.get(&QosKind::CostPerQuery).copied(),
        predicted: plan.predicted,
        considered: plan.considered,
        config_hash: prov.config_hash,
        seed: prov.seed,
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match ctx.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &out).map_err(other)?;
            writeln!(w).map_err(other)?;
        }
        Format::Csv => {
            let mut header = vec!["fingerprint".to_string(), "members".to_string()];
            let mut values = vec![out.fingerprint.clone(), out.members.join("+")];
            for (k, v) in &out.predicted {
                header.push(format!("predicted_{k}"));
                values.push(v.to_string());
            }
            header.extend(["config_hash".to_string(), "seed".to_string()]);
            values.extend([out.config_hash.clone(), out.seed.to_string()]);
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(&header).map_err(other)?;
            csv.write_record(&values).map_err(other)?;
            csv.flush().map_err(other)?;
        }
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, trace: Option<&Path>) -> Result<(), CliError> {
    let (irr, ctx) = match &cli.config {
        Some(_) => {
            let ctx = Ctx::new(cli)?;
            (ctx.loaded.config.metrics.irr_denominator, Some(ctx))
        }
        None => (IrrDenominator::default(), None),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| ctx.as_ref().map(|c| c.out_dir.clone()))
        .unwrap_or_else(|| "out".into());
    let path = trace
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_dir.join("traces.jsonl"));
    let file = File::open(&path).map_err(|e| other(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut provenance: Option<Provenance> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(other)?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TraceLine = serde_json::from_str(&line)
            .map_err(|e| other(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let p = Provenance {
            config_hash: t.config_hash,
            seed: t.seed,
        };
        match &provenance {
            Some(q) if *q != p => {
                return Err(other(format!(
                    "{}:{}: mixed provenance",
                    path.display(),
                    i + 1
                )))
            }
            _ => provenance = Some(p),
        }
        records.push(t.record);
    }
    let summary = summarize(&records, irr).map_err(other)?;
    let name = records
        .iter()
        .find_map(|r| r.trace().map(|t| t.fingerprint.clone()))
        .unwrap_or_else(|| "eval".into());
    let row = ReportRow::new(
        name,
        &summary.metrics,
        summary.mean_cost,
        summary.p50_latency_ms,
    );
    let format = cli
        .format
        .or_else(|| ctx.as_ref().map(|c| c.format))
        .unwrap_or_default();
    std::fs::create_dir_all(&out_dir).map_err(other)?;
    let (file_name, body) = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_report_csv(&[row], provenance.as_ref(), &mut buf).map_err(other)?;
            ("eval.csv", buf)
        }
        Format::Json => {
            let mut buf = serde_json::to_vec_pretty(&report_json(&[row], provenance.as_ref()))
                .map_err(other)?;
            buf.push(b'\n');
            ("eval.json", buf)
        }
    };
    std::fs::write(out_dir.join(file_name), body).map_err(other)?;
    print_metrics(&summary.metrics);
    Ok(())
}

fn print_metrics(m: &MetricsReport) {
    println!(
        "recall {:.3}  precision {:.3}  f1 {:.3}  hallucination_rate {:.3}  incongruent_response_rate {:.3}",
        m.recall, m.precision, m.f1, m.hallucination_rate, m.incongruent_response_rate
    );
}

fn cmd_synth(
    ctx: &Ctx,
    queries: usize,
    p_global_context: f64,
    distractors: usize,
    dataset_out: &Path,
    store_out: &Path,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&p_global_context) {
        return Err(CliError::Config(format!(
            "--p-global-context: {p_global_context} is outside [0, 1]"
        )));
    }
    let agents = ctx
        .loaded
        .config
        .agents
        .iter()
        .map(|a| {
            a.profile.map(|p| (a.agent_id.clone(), p)).ok_or_else(|| {
                CliError::Config(format!(
                    "agents.{}.profile: required by `synth`",
                    a.agent_id
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let corpus = generate(&SyntheticSpec {
        queries,
        agents,
        p_global_context,
        distractors_per_query: distractors,
        seed: ctx.seed,
    });
    for path in [dataset_out, store_out] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(other)?;
        }
    }
    corpus.dataset.save(dataset_out).map_err(other)?;
    let mut w = BufWriter::new(File::create(store_out).map_err(other)?);
    DocumentStore::write_jsonl(&corpus.documents, &mut w).map_err(other)?;
    w.flush().map_err(other)?;
    eprintln!(
        "{} records, {} documents -> {}, {}",
        corpus.dataset.len(),
        corpus.documents.len(),
        dataset_out.display(),
        store_out.display()
    );
    Ok(())
}
