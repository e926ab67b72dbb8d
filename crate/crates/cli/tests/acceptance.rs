//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qa_ensemble::agents::reasoner::ReasonerKind;
use qa_ensemble::agents::{AgentConfig, AgentProfile, CandidateResponse, LatencyModel};
use qa_ensemble::arbitration::{threshold_gate, ArbitrationKind, ArbitrationStrategy, Rounding};
use qa_ensemble::dataset::{AnswerQuality, IntentLabel};
use qa_ensemble::engine::accounting::{cost_of, latency_of, AccountingParams, ScalingFn};
use qa_ensemble::evalsim::report::ReportRow;
use qa_ensemble::evalsim::{
    brute_force_ensemble_oracle, compute_metrics, f1, monte_carlo, IrrDenominator, QueryOutcome,
    ScorerModel, SimulationSpec,
};
use qa_ensemble::planning::{plan, CalibrationTable, Environment, PlanError, SearchSpace};
use qa_ensemble::preprocess::{apply_strategy, PreprocessStrategy, StrategyKind};
use qa_ensemble::retrieval::{Document, ScoredDoc, VerticalResults};
use qa_ensemble::scoring::JaccardScorer;
use qa_ensemble::sla::{compose_sla, QosKind, Slo};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// 1. Reference F1 values are the harmonic mean of the reference P and R.
fn f1_consistency() -> Outcome {
    // (row, recall, precision, f1)
    const ROWS: [(&str, f64, f64, f64); 11] = [
        ("Thresholding (control)", 0.640, 0.656, 0.648),
        ("Rerank with thresholding", 0.529, 0.652, 0.584),
        ("Rerank with vertical thresholding", 0.571, 0.619, 0.594),
        ("Aggressive Thresholding", 0.656, 0.670, 0.663),
        ("Vertical Thresholding", 0.656, 0.654, 0.655),
        ("vote_with_thresh, N=3", 0.655, 0.672, 0.663),
        ("vote_with_thresh, N=5", 0.684, 0.691, 0.688),
        ("vote_most_relevant, N=3", 0.666, 0.674, 0.670),
        ("vote_most_relevant, N=5", 0.684, 0.681, 0.683),
        ("vote_most_relevant_with_thresh, N=3", 0.652, 0.672, 0.661),
        ("vote_most_relevant_with_thresh, N=5", 0.684, 0.691, 0.688),
    ];
    let mut worst = 0.0f64;
    for (name, r, p, printed) in ROWS {
        let got = f1(p, r).map_err(|e| e.to_string())?;
        let err = (got - printed).abs();
        check(
            err <= 0.001 + 1e-12,
            format!("{name}: f1({p}, {r}) = {got:.5}, printed {printed}"),
        )?;
        worst = worst.max(err);
    }
    Ok(format!("11 rows, max |error| {worst:.5}"))
}

// 2. Exhaustive gate check against integer arithmetic.
fn gate_exhaustive() -> Outcome {
    let mut cases = 0;
    for n in 1..=10usize {
        for tenths in 1..=9usize {
            let t = tenths as f64 / 10.0;
            let floor_k = tenths * n / 10;
            let ceil_k = (tenths * n).div_ceil(10);
            for aff in 0..=n {
                for (rounding, k) in [(Rounding::Floor, floor_k), (Rounding::Ceil, ceil_k)] {
                    let g = threshold_gate(n, aff, t, rounding).map_err(|e| e.to_string())?;
                    check(
                        g.pass == (aff >= k) && g.k == k,
                        format!(
                            "n={n} T={t} aff={aff} {rounding:?}: got k={} pass={}, want k={k}",
                            g.k, g.pass
                        ),
                    )?;
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} (n, T, affirmative, rounding) cases"))
}

// 3. Cost and latency equal a naive recomputation, bit for bit.
fn accounting_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dyadic = |rng: &mut ChaCha8Rng| rng.gen_range(0..4096) as f64 / 8.0;
    for case in 0..1000 {
        let scaling = |rng: &mut ChaCha8Rng| match rng.gen_range(0..3) {
            0 => ScalingFn::Constant { value: dyadic(rng) },
            1 => ScalingFn::Linear {
                per_agent: dyadic(rng),
            },
            _ => ScalingFn::Affine {
                base: dyadic(rng),
                per_agent: dyadic(rng),
            },
        };
        let params = AccountingParams {
            overhead_cost: dyadic(&mut rng),
            overhead_latency_ms: dyadic(&mut rng),
            arbitration_cost: scaling(&mut rng),
            arbitration_latency: scaling(&mut rng),
        };
        let n = rng.gen_range(1..=10);
        let cands: Vec<CandidateResponse> = (0..n)
            .map(|i| CandidateResponse {
                cost: dyadic(&mut rng),
                latency_ms: dyadic(&mut rng),
                ..CandidateResponse::negative(format!("a{i}"))
            })
            .collect();
        let eval = |s: &ScalingFn| match *s {
            ScalingFn::Constant { value } => value,
            ScalingFn::Linear { per_agent } => per_agent * n as f64,
            ScalingFn::Affine { base, per_agent } => base + per_agent * n as f64,
        };
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        for c in &cands {
            sum += c.cost;
            if c.latency_ms > max {
                max = c.latency_ms;
            }
        }
        let want_c = params.overhead_cost + sum + eval(&params.arbitration_cost);
        let want_l = params.overhead_latency_ms + max + eval(&params.arbitration_latency);
        let (got_c, got_l) = (cost_of(&cands, &params), latency_of(&cands, &params));
        check(
            got_c.to_bits() == want_c.to_bits() && got_l.to_bits() == want_l.to_bits(),
            format!("case {case}: cost {got_c} vs {want_c}, latency {got_l} vs {want_l}"),
        )?;
    }
    Ok("1000 randomized cases bit-equal".into())
}

// 4. Monte Carlo agrees with exact enumeration.
fn mc_vs_oracle() -> Outcome {
    let profiles = [
        AgentProfile::new(0.9, 0.6, 0.3, 0.1).unwrap(),
        AgentProfile::new(0.656 / 0.670, 0.670, 0.235, 0.095).unwrap(),
        AgentProfile::new(0.5, 0.5, 0.25, 0.25).unwrap(),
    ];
    let kinds = [
        ArbitrationKind::RandomWithThreshold,
        ArbitrationKind::MostRelevant,
        ArbitrationKind::MostRelevantWithThreshold,
    ];
    let mut cases = 0;
    let mut worst = 0.0f64;
    for (pi, p) in profiles.iter().enumerate() {
        for n in [1usize, 3, 5] {
            for kind in kinds {
                let model = if pi == 1 {
                    ScorerModel::OracleFavorsCorrect
                } else {
                    ScorerModel::Uniform
                };
                let strategy = ArbitrationStrategy::new(kind, 0.5, Rounding::Floor).unwrap();
                let ps = vec![*p; n];
                let mut spec = SimulationSpec::new(ps.clone(), strategy, model);
                spec.trials = 100_000;
                spec.seed = 1000 + cases;
                spec.p_global_context = if pi == 2 { 0.8 } else { 1.0 };
                let mc = monte_carlo(&spec, n).map_err(|e| e.to_string())?.metrics;
                let exact = brute_force_ensemble_oracle(
                    &ps,
                    &strategy,
                    model,
                    spec.p_global_context,
                    IrrDenominator::default(),
                )
                .map_err(|e| e.to_string())?;
                for (name, a, b) in [
                    ("precision", mc.precision, exact.precision),
                    (
                        "hallucination_rate",
                        mc.hallucination_rate,
                        exact.hallucination_rate,
                    ),
                    (
                        "answered_fraction",
                        mc.answered_fraction,
                        exact.answered_fraction,
                    ),
                ] {
                    check(
                        (a - b).abs() <= 0.01,
                        format!("profile {pi} N={n} {kind}: {name} mc {a:.4} oracle {b:.4}"),
                    )?;
                    worst = worst.max((a - b).abs());
                }
                cases += 1;
            }
        }
    }
    let p = AgentProfile::new(1.0, 0.6, 0.4, 0.0).unwrap();
    let strategy =
        ArbitrationStrategy::new(ArbitrationKind::MostRelevant, 0.5, Rounding::Floor).unwrap();
    let exact = brute_force_ensemble_oracle(
        &[p; 3],
        &strategy,
        ScorerModel::OracleFavorsCorrect,
        1.0,
        IrrDenominator::default(),
    )
    .map_err(|e| e.to_string())?;
    check(
        (exact.precision - 0.936).abs() < 1e-12,
        format!("closed form: precision {}", exact.precision),
    )?;
    Ok(format!(
        "{cases} cases, max |mc - oracle| {worst:.4}; closed form 0.936 exact"
    ))
}

// 5. Precision does not drop as iid agents are added.
fn scaling_trend() -> Outcome {
    let p = AgentProfile::new(0.656 / 0.670, 0.670, 0.235, 0.095).map_err(|e| e.to_string())?;
    let strategy = ArbitrationStrategy::new(
        ArbitrationKind::MostRelevantWithThreshold,
        0.5,
        Rounding::Floor,
    )
    .unwrap();
    let precision = |n: usize| {
        brute_force_ensemble_oracle(
            &vec![p; n],
            &strategy,
            ScorerModel::OracleFavorsCorrect,
            1.0,
            IrrDenominator::default(),
        )
        .map(|m| m.precision)
        .map_err(|e| e.to_string())
    };
    let (p1, p3, p5) = (precision(1)?, precision(3)?, precision(5)?);
    check(
        p1 <= p3 && p3 <= p5,
        format!("precision N=1 {p1:.4}, N=3 {p3:.4}, N=5 {p5:.4}"),
    )?;
    check(
        (p1 - 0.670).abs() < 1e-12,
        format!("single-agent precision {p1} != 0.670"),
    )?;
    Ok(format!(
        "precision N=1 {p1:.4} <= N=3 {p3:.4} <= N=5 {p5:.4}"
    ))
}

// 6. The planner equals exhaustive filter-then-argmin.
fn planner_equivalence() -> Outcome {
    let kinds_all = StrategyKind::ALL;
    let pool: Vec<AgentConfig> = kinds_all
        .iter()
        .flat_map(|k| ["a", "b"].map(|s| (*k, format!("{}_{s}", k.as_str()))))
        .map(|(k, id)| AgentConfig {
            agent_id: id,
            strategy: PreprocessStrategy::new(k),
            reasoner: ReasonerKind::OracleReplay,
            data_source_policy: ["kb".to_string()].into(),
            sources: None,
            cost_per_call: 1.0,
            latency_model: LatencyModel::Constant { ms: 1.0 },
            profile: None,
        })
        .collect();
    let strategy_of: BTreeMap<&str, &str> = pool
        .iter()
        .map(|a| (a.agent_id.as_str(), a.strategy.kind.as_str()))
        .collect();
    let env = Environment::new(["kb"]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut feasible, mut infeasible, mut relaxations) = (0, 0, 0);
    for case in 0..600 {
        let ensembles: Vec<Vec<String>> = (0..rng.gen_range(1..6))
            .map(|_| {
                let n = rng.gen_range(1..=4);
                let mut ids: Vec<String> = Vec::new();
                while ids.len() < n {
                    let id = pool[rng.gen_range(0..pool.len())].agent_id.clone();
                    if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
                ids
            })
            .collect();
        let thresholds: Vec<f64> = [0.25, 0.5, 0.75]
            .into_iter()
            .filter(|_| rng.gen_bool(0.6))
            .collect();
        let thresholds = if thresholds.is_empty() {
            vec![0.5]
        } else {
            thresholds
        };
        let kinds: Vec<ArbitrationKind> = ArbitrationKind::ALL
            .into_iter()
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let kinds = if kinds.is_empty() {
            vec![ArbitrationKind::MostRelevant]
        } else {
            kinds
        };
        let space = SearchSpace {
            ensembles: ensembles.clone(),
            thresholds: thresholds.clone(),
            arbitration_kinds: kinds.clone(),
            rounding: Rounding::Floor,
        };

        // Independent key: sorted strategy names; size-one ensembles ignore T and kind.
        let key = |ids: &[String], t: f64, k: ArbitrationKind| {
            let mut names: Vec<&str> = ids.iter().map(|i| strategy_of[i.as_str()]).collect();
            names.sort();
            if ids.len() == 1 {
                format!("n=1;strategies={}", names[0])
            } else {
                format!(
                    "n={};t={t};arb={};strategies={}",
                    ids.len(),
                    k.as_str(),
                    names.join("+")
                )
            }
        };
        // (precision, hallucination_rate, cost)
        let mut measured: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
        for ids in &ensembles {
            for &t in &thresholds {
                for &k in &kinds {
                    let fp = key(ids, t, k);
                    if !measured.contains_key(&fp) && rng.gen_bool(0.75) {
                        let m = (
                            rng.gen_range(0..=20) as f64 / 20.0,
                            rng.gen_range(0..=20) as f64 / 40.0,
                            rng.gen_range(1..=6) as f64,
                        );
                        measured.insert(fp, m);
                    }
                }
            }
        }
        let rows: Vec<ReportRow> = measured
            .iter()
            .map(|(fp, (p, hr, c))| ReportRow {
                experiment_version: fp.clone(),
                recall: 0.5,
                precision: *p,
                f1: 0.5,
                hallucination_rate: *hr,
                incongruent_response_rate: 0.0,
                mean_cost: Some(*c),
                p50_latency_ms: None,
                answered_fraction: None,
            })
            .collect();
        let table = CalibrationTable::from_rows(&rows).map_err(|e| format!("case {case}: {e}"))?;

        let oracle = |min_p: f64, max_hr: f64| -> Option<(f64, usize, String, Vec<String>)> {
            let mut best: Option<(f64, usize, String, Vec<String>)> = None;
            for ids in &ensembles {
                for &t in &thresholds {
                    for &k in &kinds {
                        let fp = key(ids, t, k);
                        let Some(&(p, hr, c)) = measured.get(&fp) else {
                            continue;
                        };
                        if p >= min_p && hr <= max_hr {
                            let cand = (c, ids.len(), fp, ids.clone());
                            let better = match &best {
                                None => true,
                                Some(b) => {
                                    (cand.0, cand.1, &cand.2, &cand.3) < (b.0, b.1, &b.2, &b.3)
                                }
                            };
                            if better {
                                best = Some(cand);
                            }
                        }
                    }
                }
            }
            best
        };
        let min_p = rng.gen_range(0..=20) as f64 / 20.0;
        let max_hr = rng.gen_range(0..=20) as f64 / 40.0;
        let sla = compose_sla(vec![
            Slo::at_least(QosKind::Precision, min_p),
            Slo::at_most(QosKind::HallucinationRate, max_hr),
        ])
        .map_err(|e| e.to_string())?;
        let got = plan(
            IntentLabel::DirectlyAnswerable,
            &sla,
            &env,
            &pool,
            &space,
            &table,
            None,
        );
        let cost_of_plan = match (oracle(min_p, max_hr), got) {
            (None, Err(PlanError::InfeasibleSla { .. })) => {
                infeasible += 1;
                None
            }
            (Some((c, _, fp, ids)), Ok(p)) => {
                let members: Vec<String> = p
                    .ensemble
                    .member_ids()
                    .into_iter()
                    .map(String::from)
                    .collect();
                check(
                    p.ensemble.fingerprint.key() == fp && members == ids,
                    format!(
                        "case {case}: planner chose {} {:?}, oracle {fp} {ids:?}",
                        p.ensemble.fingerprint, members
                    ),
                )?;
                feasible += 1;
                Some(c)
            }
            (want, got) => return Err(format!("case {case}: oracle {want:?}, planner {got:?}")),
        };
        if let Some(c) = cost_of_plan {
            let relaxed = max_hr + rng.gen_range(1..=10) as f64 / 40.0;
            let sla = compose_sla(vec![
                Slo::at_least(QosKind::Precision, min_p),
                Slo::at_most(QosKind::HallucinationRate, relaxed),
            ])
            .map_err(|e| e.to_string())?;
            let p = plan(
                IntentLabel::DirectlyAnswerable,
                &sla,
                &env,
                &pool,
                &space,
                &table,
                None,
            )
            .map_err(|e| format!("case {case}: relaxed SLA became infeasible: {e}"))?;
            let rc = p.predicted[&QosKind::CostPerQuery];
            check(
                rc <= c,
                format!("case {case}: relaxing HR raised cost {c} -> {rc}"),
            )?;
            relaxations += 1;
        }
    }
    Ok(format!(
        "{} cases: {feasible} feasible, {infeasible} infeasible, {relaxations} relaxations",
        feasible + infeasible
    ))
}

// 7. Context windows respect budgets, grow by extension, honour vertical limits.
fn preprocessing_budget() -> Outcome {
    let docs = prop::collection::vec((0usize..4, 0usize..40, 0u32..100), 1..16);
    let strategy = (docs, 0usize..5, 1usize..120, 0usize..120, 1usize..4);
    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let result = runner.run(&strategy, |(docs, kind, b1, extra, limit)| {
        let scored: Vec<ScoredDoc> = docs
            .iter()
            .enumerate()
            .map(|(i, (v, len, score))| ScoredDoc {
                doc: Document {
                    uid: i as u64 + 1,
                    vertical: format!("v{v}"),
                    body: (0..*len)
                        .map(|w| format!("t{i}w{w}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                    embedding: None,
                },
                score: *score as f64 / 100.0,
            })
            .collect();
        let results = VerticalResults::from_scored(scored, 100);
        let kind = StrategyKind::ALL[kind];
        let mut small = PreprocessStrategy::new(kind).with_budget(b1);
        if kind.uses_verticals() {
            small.vertical_limit = Some(limit);
        }
        let large = small.with_budget(b1 + extra);
        let q = "t0w1 t2w0 t3w3";
        let ws = apply_strategy(q, &results, &small, Some(&JaccardScorer)).unwrap();
        let wl = apply_strategy(q, &results, &large, Some(&JaccardScorer)).unwrap();
        prop_assert!(ws.total_tokens <= b1);
        prop_assert!(wl.total_tokens <= b1 + extra);
        let stream = |w: &qa_ensemble::preprocess::ContextWindow| -> Vec<(u64, String)> {
            w.entries
                .iter()
                .flat_map(|e| e.text.split(' ').map(move |t| (e.uid, t.to_string())))
                .collect()
        };
        let (ts, tl) = (stream(&ws), stream(&wl));
        prop_assert!(
            tl.len() >= ts.len() && tl[..ts.len()] == ts[..],
            "small window is not a prefix of the large one"
        );
        if kind == StrategyKind::VerticalThreshold {
            let allowed: BTreeSet<&str> = results
                .verticals
                .iter()
                .take(limit)
                .map(|v| v.label.as_str())
                .collect();
            prop_assert!(wl
                .entries
                .iter()
                .all(|e| allowed.contains(e.vertical.as_str())));
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("512 random result sets x 5 strategies".into())
}

// 8. `run` and `simulate` are byte-identical across invocations and thread counts.
fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let cfg_text = std::fs::read_to_string(&config).map_err(|e| e.to_string())?;
    let cfg_text = cfg_text
        .replace("trials = 100000", "trials = 50000")
        .replace(
            "calibration_path = \"calibration.csv\"",
            &format!(
                "calibration_path = {:?}",
                config.with_file_name("calibration.csv")
            ),
        );
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, cfg_text).map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_qa-ensemble");
    let exec = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin)
            .arg("--config")
            .arg(&cfg)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        check(
            out.status.success(),
            format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)),
        )
    };
    let data = dir.path().join("data");
    exec(&[
        "synth",
        "--queries",
        "150",
        "--p-global-context",
        "0.9",
        "--dataset-out",
        data.join("dataset.jsonl").to_str().unwrap(),
        "--store-out",
        data.join("kb.jsonl").to_str().unwrap(),
    ])?;
    let mut outputs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let out_s = out.to_str().unwrap();
        exec(&["--threads", threads, "--out", out_s, "run"])?;
        exec(&["--threads", threads, "--out", out_s, "simulate"])?;
        let mut files = BTreeMap::new();
        for name in ["traces.jsonl", "report.csv", "simulate.csv"] {
            files.insert(
                name.to_string(),
                std::fs::read(out.join(name)).map_err(|e| format!("{name}: {e}"))?,
            );
        }
        outputs.push(files);
    }
    for (i, o) in outputs.iter().enumerate().skip(1) {
        for (name, bytes) in o {
            check(
                bytes == &outputs[0][name],
                format!("{name} differs between invocation 0 and {i}"),
            )?;
        }
    }
    let traces = String::from_utf8_lossy(&outputs[0]["traces.jsonl"])
        .lines()
        .count();
    Ok(format!(
        "run + simulate identical over 3 invocations (1, 4, 4 threads), {traces} trace lines"
    ))
}

// 9. Metrics equal a naive recount.
fn metrics_recount() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..1000 {
        let n = rng.gen_range(0..15);
        let outcomes: Vec<QueryOutcome> = (0..n)
            .map(|i| {
                let answered = rng.gen_bool(0.7);
                let quality = answered.then(|| match rng.gen_range(0..3) {
                    0 => AnswerQuality::Correct,
                    1 => AnswerQuality::Hallucination,
                    _ => AnswerQuality::Incongruent,
                });
                QueryOutcome {
                    query_id: format!("q{i}"),
                    global_context_hit: rng.gen_bool(0.8),
                    answered,
                    quality,
                }
            })
            .collect();
        let (mut provided, mut correct, mut correct_hit, mut hall, mut inc, mut hits) =
            (0u32, 0u32, 0u32, 0u32, 0u32, 0u32);
        for o in &outcomes {
            hits += o.global_context_hit as u32;
            if o.answered {
                provided += 1;
                match o.quality {
                    Some(AnswerQuality::Correct) => {
                        correct += 1;
                        correct_hit += o.global_context_hit as u32;
                    }
                    Some(AnswerQuality::Hallucination) => hall += 1,
                    Some(AnswerQuality::Incongruent) => inc += 1,
                    None => {}
                }
            }
        }
        let ratio = |a: u32, b: u32| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(correct, provided);
        let r = ratio(correct_hit, hits);
        let f = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        let want = [p, r, f, ratio(hall, provided), ratio(inc, provided)];
        let m = compute_metrics(&outcomes, IrrDenominator::AnswersProvided)
            .map_err(|e| e.to_string())?;
        let got = [
            m.precision,
            m.recall,
            m.f1,
            m.hallucination_rate,
            m.incongruent_response_rate,
        ];
        for (name, g, w) in [
            "precision",
            "recall",
            "f1",
            "hallucination_rate",
            "incongruent_response_rate",
        ]
        .iter()
        .zip(got)
        .zip(want)
        .map(|((n, g), w)| (n, g, w))
        {
            check(
                (g - w).abs() < 1e-12,
                format!("case {case}: {name} {g} vs recount {w}"),
            )?;
        }
        let m =
            compute_metrics(&outcomes, IrrDenominator::TotalQueries).map_err(|e| e.to_string())?;
        check(
            (m.incongruent_response_rate - ratio(inc, n as u32)).abs() < 1e-12,
            format!(
                "case {case}: total-queries IRR {}",
                m.incongruent_response_rate
            ),
        )?;
    }
    Ok("1000 random outcome sets, five metrics".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("F1 consistency with the reference table", f1_consistency),
        ("threshold gate, exhaustive", gate_exhaustive),
        ("cost/latency model exactness", accounting_exact),
        ("Monte Carlo vs exact enumeration", mc_vs_oracle),
        ("ensemble-scaling precision trend", scaling_trend),
        ("planner oracle equivalence", planner_equivalence),
        ("preprocessing budget safety", preprocessing_budget),
        ("end-to-end determinism", end_to_end_determinism),
        ("metrics recount oracle", metrics_recount),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("acceptance {}: PASS  {name} ({detail}; {secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {}: FAIL  {name}: {why} ({secs:.2}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
