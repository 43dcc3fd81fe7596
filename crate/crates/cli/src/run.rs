use anyhow::{ensure, Context, Result};
use lookahead::evaluation::{frontier_csv, frontier_sweep_each};
use lookahead::{load_csv, EvalReport, Experiment, SplitSpec, TrainConfig};
use serde::Serialize;

use crate::manifest::{to_json, write_file, Command, DataSource, RunManifest};

fn experiment(m: &RunManifest) -> Result<Experiment> {
    let seed = m.config.seed;
    match &m.data_source {
        DataSource::Synthetic { samples } => {
            Ok(Experiment::synthetic_split(*samples, seed, m.train_fraction)?)
        }
        DataSource::Csv {
            path,
            target,
            mutable,
            oracle_lr,
            oracle_epochs,
        } => {
            let (data, mut mask) = load_csv(path, target, mutable)?;
            if mutable.is_empty() {
                mask = lookahead::FeatureMask::all_mutable(data.dim());
            }
            let spec = SplitSpec::new(m.train_fraction, seed);
            Experiment::from_data(&data, mask, spec, *oracle_lr, *oracle_epochs)
                .with_context(|| format!("preparing {}", path.display()))
        }
    }
}

/// Runs the manifest's command; `Ok(false)` means some work failed but
/// the rest was written.
pub fn execute(m: &RunManifest) -> Result<bool> {
    std::fs::create_dir_all(&m.output_dir)
        .with_context(|| format!("creating {}", m.output_dir.display()))?;
    m.write()?;
    let exp = experiment(m)?;
    match m.command {
        Command::Synth => synth(m, &exp).map(|_| true),
        Command::Train => train(m, &exp).map(|_| true),
        Command::Sweep => sweep(m, &exp),
    }
}

#[derive(Serialize)]
struct Comparison {
    eta: f64,
    baseline: EvalReport,
    lookahead: EvalReport,
}

fn compare(exp: &Experiment, config: &TrainConfig) -> Result<Comparison> {
    let baseline = exp.baseline(config)?;
    let bundle = exp.train(config)?;
    Ok(Comparison {
        eta: config.eta,
        baseline: exp.evaluate(&baseline, config.eta)?,
        lookahead: exp.evaluate(&bundle.predictive, config.eta)?,
    })
}

fn synth(m: &RunManifest, exp: &Experiment) -> Result<()> {
    let etas = m.etas.clone().unwrap_or_else(|| vec![m.config.eta]);
    let mut csv = String::from("eta,model,rmse,improvement_rate,improvement_magnitude,n_test\n");
    let mut rows = Vec::new();
    for eta in etas {
        let config = TrainConfig {
            eta,
            ..m.config.clone()
        };
        log::info!("eta={eta}: baseline and lookahead");
        let c = compare(exp, &config).with_context(|| format!("eta={eta}"))?;
        for (name, r) in [("baseline", &c.baseline), ("lookahead", &c.lookahead)] {
            csv.push_str(&format!(
                "{eta},{name},{},{},{},{}\n",
                r.rmse, r.improvement_rate, r.improvement_magnitude, r.n_test
            ));
        }
        rows.push(c);
    }
    write_file(&m.output_dir.join("results.csv"), &csv)?;
    write_file(&m.output_dir.join("results.json"), &to_json(&rows)?)
}

fn train(m: &RunManifest, exp: &Experiment) -> Result<()> {
    let bundle = exp.train(&m.config)?;
    let baseline = exp.baseline(&m.config)?;
    let report = Comparison {
        eta: m.config.eta,
        baseline: exp.evaluate(&baseline, m.config.eta)?,
        lookahead: exp.evaluate(&bundle.predictive, m.config.eta)?,
    };
    let mut bundle_json = bundle.to_json()?;
    bundle_json.push('\n');
    write_file(&m.output_dir.join("bundle.json"), &bundle_json)?;
    write_file(&m.output_dir.join("trace.csv"), &bundle.trace_csv())?;
    write_file(&m.output_dir.join("report.json"), &to_json(&report)?)
}

#[derive(Serialize)]
struct SweepRecord {
    lambda: f64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn sweep(m: &RunManifest, exp: &Experiment) -> Result<bool> {
    let grid = m.lambda_grid.clone().unwrap_or_default();
    ensure!(!grid.is_empty(), "empty lambda grid");
    let mut points = Vec::new();
    let mut records = Vec::new();
    for (lambda, result) in frontier_sweep_each(exp, &m.config, &grid) {
        match result {
            Ok(p) => {
                records.push(SweepRecord {
                    lambda,
                    status: "ok",
                    report: Some(p.report.clone()),
                    final_penalty: Some(p.final_penalty),
                    error: None,
                });
                points.push(p);
            }
            Err(e) => {
                log::error!("{e}");
                records.push(SweepRecord {
                    lambda,
                    status: "failed",
                    report: None,
                    final_penalty: None,
                    error: Some(format!("{:#}", anyhow::Error::from(e))),
                });
            }
        }
    }
    write_file(&m.output_dir.join("frontier.csv"), &frontier_csv(&points))?;
    write_file(&m.output_dir.join("frontier.json"), &to_json(&records)?)?;
    let failed = records.iter().filter(|r| r.status == "failed").count();
    if failed > 0 {
        eprintln!("error: {failed} of {} lambda values failed; see frontier.json", records.len());
    }
    Ok(failed == 0)
}
