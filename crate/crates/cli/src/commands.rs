use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use minrule_core::config::{bundled, bundled_names, Scenario};
use minrule_core::engine::{run as simulate, sweep_map};
use minrule_core::graphs::{certify, CertificationReport, CertifyMode};
use minrule_core::metrics::{
    baseline_reference_rates, concentration_probe, probe_log_ratio, probe_sample, theoretical_bounds, BoundMode,
    ConcentrationCurve,
};
use minrule_core::rules::lazy_metropolis_weights;
use minrule_core::{f_local, Rule};

use crate::output::{ensure_dir, summarize, write_json, write_trajectory, RunManifest, RunSummary};
use crate::{ScenarioArgs, VERSION};

fn parse_rule(name: &str, f: usize) -> Result<Rule> {
    Ok(match name {
        "min_rule" | "min" => Rule::MinRule,
        "lfrhe" => Rule::Lfrhe { f },
        "linear" => Rule::Linear,
        "loglinear" | "log_linear" => Rule::LogLinear,
        other => bail!("unknown rule `{other}`; expected min_rule, lfrhe, linear or loglinear"),
    })
}

/// Read a scenario from a path, falling back to the bundled set by name.
pub fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let path = Path::new(&args.config);
    let mut scenario = if path.exists() {
        Scenario::load(path).with_context(|| format!("in {}", path.display()))?
    } else if let Some(text) = bundled(&args.config) {
        Scenario::parse(text).with_context(|| format!("in bundled scenario {}", args.config))?
    } else {
        bail!(
            "{} is neither a file nor a bundled scenario ({})",
            args.config,
            bundled_names().collect::<Vec<_>>().join(", ")
        );
    };
    if let Some(rule) = &args.rule {
        scenario.config.rule = parse_rule(rule, args.f)?;
        scenario
            .config
            .validate()
            .context("the scenario does not support this rule")?;
    }
    Ok(scenario)
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    config_digest: String,
    report: &'a CertificationReport,
    /// For the filtered rule: at most f Byzantine in-neighbors per regular agent.
    f_local: Option<bool>,
    verdict: bool,
}

fn certification(scenario: &Scenario) -> Result<(CertificationReport, Option<bool>)> {
    let c = &scenario.config;
    let mode = scenario.certify_mode()?;
    let report = certify(&c.model, &c.schedule, mode)?;
    let local = match mode {
        CertifyMode::Lfrhe { f } => Some(f_local(
            &c.adversary,
            c.schedule.as_static().expect("certified static"),
            f,
        )),
        _ => None,
    };
    Ok((report, local))
}

pub fn check(args: &ScenarioArgs, out: &Path) -> Result<ExitCode> {
    let scenario = load(args)?;
    let (report, local) = certification(&scenario)?;
    let verdict = report.verdict && local.unwrap_or(true);
    println!("{report}");
    if let Some(ok) = local {
        let f = match scenario.config.rule {
            Rule::Lfrhe { f } => f,
            _ => 0,
        };
        println!("adversaries {}-local: {}", f, if ok { "yes" } else { "no" });
        println!("overall: {}", if verdict { "PASS" } else { "FAIL" });
    }
    ensure_dir(out)?;
    let path = out.join("check.json");
    write_json(
        &path,
        &CheckOutput {
            config_digest: scenario.digest(),
            report: &report,
            f_local: local,
            verdict,
        },
    )?;
    eprintln!("wrote {}", path.display());
    Ok(if verdict { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// Certification problems do not stop a simulation, they only warn.
fn warn_uncertified(scenario: &Scenario) {
    match certification(scenario) {
        Ok((r, local)) if r.verdict && local.unwrap_or(true) => {}
        Ok(_) => eprintln!("warning: the scenario does not meet the conditions for learning; see `minrule check`"),
        Err(e) => eprintln!("warning: not certified: {e}"),
    }
}

pub fn run(
    args: &ScenarioArgs,
    out: &Path,
    band: f64,
    stride: Option<usize>,
    seed: Option<u64>,
    horizon: Option<usize>,
) -> Result<()> {
    let started = Instant::now();
    let mut scenario = load(args)?;
    let c = &mut scenario.config;
    if let Some(s) = stride {
        c.record.stride = s;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(h) = horizon {
        c.horizon = h;
    }
    c.record.local = true;
    c.validate()?;
    warn_uncertified(&scenario);

    let record = simulate(&scenario.config)?;
    let summary = summarize(&scenario, &record, band)?;
    ensure_dir(out)?;
    let csv = out.join("trajectory.csv");
    let json = out.join("summary.json");
    write_trajectory(&csv, &scenario, &record)?;
    write_json(&json, &summary)?;
    let manifest = RunManifest {
        config_digest: scenario.digest(),
        artifact_version: VERSION,
        seeds: vec![scenario.config.seed],
        outputs: vec![csv, json],
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        verdicts: serde_json::to_value(&summary.verdicts)?,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    print_verdicts(&summary);
    Ok(())
}

fn print_verdicts(s: &RunSummary) {
    println!(
        "seed {}: consistent {}, not recovered {:?}, rates within bound {}",
        s.seed,
        s.verdicts.consistent,
        s.verdicts.not_recovered,
        s.verdicts
            .rates_within_bound
            .map_or("n/a".to_string(), |b| b.to_string())
    );
}

fn parse_seeds(spec: &str) -> Result<(u64, u64)> {
    let (a, b) = spec
        .split_once("..")
        .ok_or_else(|| anyhow!("seed range must look like a..b, got `{spec}`"))?;
    let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
    if b < a {
        bail!("empty seed range {a}..{b}");
    }
    Ok((a, b))
}

pub fn sweep(
    args: &ScenarioArgs,
    out: &Path,
    band: f64,
    seeds: &str,
    horizon: Option<usize>,
    grid: Option<Vec<usize>>,
    epsilon: Option<f64>,
) -> Result<()> {
    let started = Instant::now();
    let (a, b) = parse_seeds(seeds)?;
    let seeds: Vec<u64> = (a..=b).collect();
    let mut scenario = load(args)?;
    if let Some(h) = horizon {
        scenario.config.horizon = h;
    }
    let h = scenario.config.horizon;
    let grid = grid.unwrap_or_else(|| (1..=10).map(|k| (k * h / 10).max(1)).collect());
    if let Some(&bad) = grid.iter().find(|&&t| t == 0 || t > h) {
        bail!("probe time {bad} is outside 1..={h}");
    }
    scenario.config.record.times.extend(grid.iter().copied());
    scenario.config.record.local = true;
    scenario.config.validate()?;
    warn_uncertified(&scenario);

    let star = scenario.config.model.true_index();
    let m = scenario.config.model.m();
    let false_hyps: Vec<usize> = (0..m).filter(|&k| k != star).collect();
    let results = sweep_map(&scenario.config, &seeds, |rec| {
        let summary = summarize(&scenario, &rec, band);
        let samples: Vec<_> = false_hyps.iter().map(|&k| probe_sample(&rec, k, &grid)).collect();
        (summary, samples)
    })?;

    ensure_dir(out)?;
    let mut outputs = Vec::new();
    let mut consistent = 0;
    let mut per_hyp: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); false_hyps.len()];
    for (seed, (summary, samples)) in seeds.iter().zip(results) {
        let summary = summary?;
        consistent += summary.verdicts.consistent as usize;
        let path = out.join(format!("summary-seed-{seed}.json"));
        write_json(&path, &summary)?;
        outputs.push(path);
        for (slot, s) in per_hyp.iter_mut().zip(samples) {
            slot.push(s?);
        }
    }

    let model = &scenario.config.model;
    let bounds = theoretical_bounds(model, &scenario.config.schedule, &BoundMode::AllSources)?;
    let names = model.hypotheses().names();
    let mut curves: Vec<(usize, ConcentrationCurve)> = Vec::new();
    for (&k, samples) in false_hyps.iter().zip(&per_hyp) {
        let k_bar = bounds.per_hypothesis[k].unwrap_or(0.0);
        let eps = epsilon.unwrap_or(k_bar / 2.0);
        match concentration_probe(samples, k_bar, eps, probe_log_ratio(model)) {
            Ok(curve) => curves.push((k, curve)),
            Err(e) => {
                eprintln!("note: no exceedance curve for {}: {e}", names[k]);
            }
        }
    }
    if !curves.is_empty() {
        let path = out.join(format!("concentration-{a}-{b}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record([
            "hypothesis",
            "t",
            "fraction",
            "epsilon",
            "k_bar",
            "reference_slope",
            "seeds",
        ])?;
        for (k, c) in &curves {
            for p in &c.points {
                w.write_record([
                    names[*k].clone(),
                    p.t.to_string(),
                    p.fraction.to_string(),
                    c.epsilon.to_string(),
                    c.k_bar.to_string(),
                    c.reference_slope.to_string(),
                    c.seeds.to_string(),
                ])?;
            }
        }
        w.flush()?;
        outputs.push(path);
    }
    let manifest = RunManifest {
        config_digest: scenario.digest(),
        artifact_version: VERSION,
        seeds: seeds.clone(),
        outputs,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        verdicts: serde_json::json!({ "consistent_seeds": consistent, "seeds": seeds.len() }),
    };
    write_json(&out.join(format!("manifest-{a}-{b}.json")), &manifest)?;
    println!("{consistent}/{} seeds consistent", seeds.len());
    Ok(())
}

#[derive(Serialize)]
struct RatesRow {
    hypothesis: String,
    all_sources: f64,
    reachable_sources: Option<f64>,
    regular_sources: Option<f64>,
    pooling_reference: Option<f64>,
}

#[derive(Serialize)]
struct RatesOutput {
    rows: Vec<RatesRow>,
    warnings: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

pub fn rates(args: &ScenarioArgs, json: bool) -> Result<()> {
    let scenario = load(args)?;
    let c = &scenario.config;
    let (model, schedule) = (&c.model, &c.schedule);
    let all = theoretical_bounds(model, schedule, &BoundMode::AllSources)?;
    let mut warnings = all.warnings.clone();
    let reachable = schedule
        .is_static()
        .then(|| theoretical_bounds(model, schedule, &BoundMode::ReachableSources))
        .transpose()?;
    let regular = (schedule.is_static() && !c.adversary.is_empty())
        .then(|| {
            let regular = c.adversary.regular(model.n()).into_iter().collect();
            theoretical_bounds(model, schedule, &BoundMode::RegularSources { regular })
        })
        .transpose()?;
    for b in reachable.iter().chain(&regular) {
        warnings.extend(
            b.warnings
                .iter()
                .filter(|w| !warnings.contains(w))
                .cloned()
                .collect::<Vec<_>>(),
        );
    }
    let reference = match schedule.as_static().map(lazy_metropolis_weights) {
        Some(Ok(w)) => Some(baseline_reference_rates(model, &w)?),
        _ => None,
    };
    let names = model.hypotheses().names();
    let rows: Vec<RatesRow> = (0..model.m())
        .filter(|&k| k != model.true_index())
        .map(|k| RatesRow {
            hypothesis: names[k].clone(),
            all_sources: all.per_hypothesis[k].unwrap_or(0.0),
            reachable_sources: reachable.as_ref().and_then(|b| b.per_hypothesis[k]),
            regular_sources: regular.as_ref().and_then(|b| b.per_hypothesis[k]),
            pooling_reference: reference.as_ref().and_then(|r| r[k]),
        })
        .collect();
    if json {
        println!("{}", serde_json::to_string_pretty(&RatesOutput { rows, warnings })?);
        return Ok(());
    }
    println!("true hypothesis: {}", names[model.true_index()]);
    println!(
        "{:<12} {:>12} {:>12} {:>12} {:>12}",
        "hypothesis", "all-sources", "reachable", "regular", "pooling-ref"
    );
    for r in &rows {
        println!(
            "{:<12} {:>12.6} {:>12} {:>12} {:>12}",
            r.hypothesis,
            r.all_sources,
            fmt_opt(r.reachable_sources),
            fmt_opt(r.regular_sources),
            fmt_opt(r.pooling_reference)
        );
    }
    println!("network (min over hypotheses): {:.6}", all.network);
    for w in &warnings {
        println!("warning: {w}");
    }
    Ok(())
}

pub fn configs(name: Option<&str>, canonical: bool) -> Result<()> {
    match name {
        None => {
            for n in bundled_names() {
                println!("{n}");
            }
        }
        Some(n) => {
            let text = bundled(n).ok_or_else(|| anyhow!("no bundled scenario named {n}"))?;
            if canonical {
                print!("{}", Scenario::parse(text)?.to_canonical_toml());
            } else {
                print!("{text}");
            }
        }
    }
    Ok(())
}
