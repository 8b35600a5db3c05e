use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use perturbkit::data::{blobs, patterns};
use perturbkit::io::to_json_string;
use perturbkit::metrics::{self, MetricsError, RobustnessMeasure};
use perturbkit::report::AttackReport;
use perturbkit::tensor::compensated_sum;
use perturbkit::train::{train_toy, ArchSpec};
use perturbkit::{Dataset, Exponent, Model, RegressionContext};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{AttackCmd, DataKind, GenDataCmd, RobustnessCmd, SweepCmd, TrainCmd};
use crate::attacks::{resolve, Family, Resolved};
use crate::error::CliError;

/// Slack allowed when re-checking `‖η‖_p ≤ ε` on emitted records.
const EMIT_BUDGET_ATOL: f64 = 1e-9;

fn load_model(path: &Path) -> Result<Model, CliError> {
    Model::load(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path, model: &Model) -> Result<Dataset, CliError> {
    let data =
        Dataset::load(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if data.is_empty() {
        return Err(CliError::config(format!(
            "{}: dataset is empty",
            path.display()
        )));
    }
    data.validate(model.input_dim(), model.output_dim())
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(data)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                CliError::config(format!("{}: {e}", p.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn json<T: Serialize>(value: &T) -> String {
    to_json_string(value).expect("records serialize")
}

#[derive(Serialize)]
struct Record<'a> {
    index: usize,
    attack: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(flatten)]
    report: &'a AttackReport,
    /// PSNR of `f(x + η)` against the regression target.
    #[serde(skip_serializing_if = "Option::is_none")]
    psnr: Option<f64>,
}

/// One attacked example together with the data the emitters need.
struct Outcome {
    report: AttackReport,
    label: Option<usize>,
    mse: Option<f64>,
}

fn check_budget(
    index: usize,
    report: &AttackReport,
    p: Exponent,
    eps: f64,
) -> Result<(), CliError> {
    let n = report.norm(p);
    if n > eps + EMIT_BUDGET_ATOL {
        return Err(CliError::Runtime(format!(
            "example {index}: perturbation has ‖η‖_{p} = {n}, above the budget {eps}"
        )));
    }
    Ok(())
}

fn run_example(
    attack: &Resolved,
    model: &Model,
    data: &Dataset,
    index: usize,
) -> Result<Outcome, CliError> {
    let e = &data.examples[index];
    match attack {
        Resolved::Classify(a) => {
            let report = a
                .run(model, &e.x, e.label, index as u64)
                .map_err(|err| CliError::at(index, err))?;
            if let Some((p, eps)) = a.budget() {
                check_budget(index, &report, p, eps)?;
            }
            Ok(Outcome {
                report,
                label: e.label,
                mse: None,
            })
        }
        Resolved::Regress(a) => {
            let ctx = match &e.target {
                Some(y) => RegressionContext::with_target(model, &e.x, y),
                None => RegressionContext::self_referenced(model, &e.x),
            }
            .map_err(|err| CliError::at(index, err))?;
            let report = a
                .run(&ctx, index as u64)
                .map_err(|err| CliError::at(index, err))?;
            let (p, eps) = a.budget();
            check_budget(index, &report, p, eps)?;
            if let Some((partition, steps)) = a.support() {
                let used = partition.mixed_zero_norm(&report.eta);
                if used > steps {
                    return Err(CliError::Runtime(format!(
                        "example {index}: perturbation touches {used} subsets, at most {steps} allowed"
                    )));
                }
            }
            // loss_after = ‖f(x + η) − y‖², so the MSE follows without another forward pass.
            let mse = report.loss_after / model.output_dim() as f64;
            Ok(Outcome {
                report,
                label: None,
                mse: Some(mse),
            })
        }
    }
}

/// Runs `attack` on every example in parallel; results come back in example order.
fn run_all(attack: &Resolved, model: &Model, data: &Dataset) -> Result<Vec<Outcome>, CliError> {
    (0..data.len())
        .into_par_iter()
        .map(|i| run_example(attack, model, data, i))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn attack(cmd: &AttackCmd) -> Result<(), CliError> {
    let model = load_model(&cmd.model)?;
    let data = load_data(&cmd.data, &model)?;
    let attack = resolve(
        &cmd.attack,
        cmd.eps,
        &cmd.opts,
        data.has_labels(),
        model.input_dim(),
    )?;
    let budget = match &attack {
        Resolved::Classify(a) => a.budget(),
        Resolved::Regress(a) => Some(a.budget()),
    };
    let outcomes = run_all(&attack, &model, &data)?;
    let mut out = open_out(cmd.out.as_deref())?;
    for (index, o) in outcomes.iter().enumerate() {
        let record = Record {
            index,
            attack: &cmd.attack,
            label: o.label,
            p: budget.map(|b| b.0),
            eps: budget.map(|b| b.1),
            report: &o.report,
            psnr: o.mse.map(|m| metrics::psnr_from_mse(m, cmd.opts.peak)),
        };
        writeln!(out, "{}", json(&record))?;
    }
    out.flush()?;
    Ok(())
}

pub fn sweep(cmd: &SweepCmd) -> Result<(), CliError> {
    let model = load_model(&cmd.model)?;
    let data = load_data(&cmd.data, &model)?;
    if let Some(bad) = cmd.eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(CliError::config(format!(
            "--eps must be finite and >= 0, got {bad}"
        )));
    }
    // One configuration per grid point so ε-relative flags such as `first=eps` follow each budget.
    let mut grid = Vec::with_capacity(cmd.attack.len() * cmd.eps.len());
    for name in &cmd.attack {
        for &eps in &cmd.eps {
            let attack = resolve(
                name,
                Some(eps),
                &cmd.opts,
                data.has_labels(),
                model.input_dim(),
            )?;
            grid.push((name.as_str(), eps, attack));
        }
    }
    let family = grid[0].2.family();
    if grid.iter().any(|g| g.2.family() != family) {
        return Err(CliError::config(
            "a sweep cannot mix classification and regression attacks",
        ));
    }
    if family == Family::Classification && !data.has_labels() {
        return Err(CliError::config("classification sweeps need labelled data"));
    }

    let rows: Vec<Vec<String>> = grid
        .par_iter()
        .map(|(name, eps, attack)| -> Result<Vec<String>, CliError> {
            let name = name.to_string();
            match attack {
                Resolved::Classify(a) => {
                    let fr = metrics::fooling_ratio(&model, &data, a)?;
                    Ok(vec![
                        name,
                        eps.to_string(),
                        fr.ratio.to_string(),
                        fr.fooled.to_string(),
                        fr.correct.to_string(),
                    ])
                }
                Resolved::Regress(_) => {
                    let outcomes = run_all(attack, &model, &data)?;
                    let mses: Vec<f64> = outcomes
                        .iter()
                        .map(|o| o.mse.expect("regression outcome"))
                        .collect();
                    let n = mses.len() as f64;
                    let psnr = compensated_sum(
                        mses.iter()
                            .map(|&m| metrics::psnr_from_mse(m, cmd.opts.peak)),
                    ) / n;
                    let mse = compensated_sum(mses.iter().copied()) / n;
                    Ok(vec![
                        name,
                        eps.to_string(),
                        psnr.to_string(),
                        mse.to_string(),
                        mses.len().to_string(),
                    ])
                }
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let header: &[&str] = match family {
        Family::Classification => &["attack", "eps", "fooling_ratio", "fooled", "correct"],
        Family::Regression => &["attack", "eps", "mean_psnr", "mean_mse", "n"],
    };
    let mut w = csv::Writer::from_writer(open_out(cmd.out.as_deref())?);
    w.write_record(header)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for row in rows {
        w.write_record(&row)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Counts {
    examples: usize,
    correct: usize,
    rho1_used: usize,
    rho1_excluded: usize,
    rho2_used: usize,
    rho2_excluded: usize,
}

#[derive(Serialize)]
struct Robustness {
    p: Exponent,
    rho1: Option<f64>,
    rho2: Option<f64>,
    min_eps_99: Option<f64>,
    counts: Counts,
}

/// Keeps "every example excluded" as an absent measure instead of an error.
fn measure(
    r: Result<RobustnessMeasure, MetricsError>,
) -> Result<(Option<f64>, usize, usize), CliError> {
    match r {
        Ok(m) => Ok((Some(m.value), m.used, m.excluded)),
        Err(MetricsError::EmptyEffectiveSet { excluded }) => Ok((None, 0, excluded)),
        Err(e) => Err(e.into()),
    }
}

pub fn robustness(cmd: &RobustnessCmd) -> Result<(), CliError> {
    let model = load_model(&cmd.model)?;
    let data = load_data(&cmd.data, &model)?;
    if !data.has_labels() {
        return Err(CliError::config("robustness needs labelled data"));
    }
    let correct = metrics::correctly_classified(&model, &data)?.len();
    if correct == 0 {
        return Err(CliError::Runtime(
            "no example is classified correctly".into(),
        ));
    }
    if let Some(bad) = cmd
        .eps
        .iter()
        .flatten()
        .find(|e| !(e.is_finite() && **e >= 0.0))
    {
        return Err(CliError::config(format!(
            "--eps must be finite and >= 0, got {bad}"
        )));
    }

    let norms = metrics::deepfool_norms(&model, &data, cmd.p, cmd.max_iter)?;
    // Without a grid every achieved norm is a candidate, which gives the exact minimum.
    let grid = cmd
        .eps
        .clone()
        .unwrap_or_else(|| norms.iter().filter_map(|(_, n)| *n).collect());
    let (rho1, r1u, r1x) = measure(metrics::rho1_from_norms(&data, cmd.p, &norms))?;
    let (rho2, r2u, r2x) = measure(metrics::rho2(&model, &data, cmd.p))?;
    let min_eps_99 = metrics::min_eps_fooling(&norms, &grid, 0.99);

    let report = Robustness {
        p: cmd.p,
        rho1,
        rho2,
        min_eps_99,
        counts: Counts {
            examples: data.len(),
            correct,
            rho1_used: r1u,
            rho1_excluded: r1x,
            rho2_used: r2u,
            rho2_excluded: r2x,
        },
    };
    let mut out = open_out(cmd.out.as_deref())?;
    writeln!(out, "{}", json(&report))?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    initial_loss: f64,
    final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
}

pub fn train(cmd: &TrainCmd) -> Result<(), CliError> {
    if !(cmd.lr.is_finite() && cmd.lr > 0.0) {
        return Err(CliError::config(format!(
            "--lr must be positive, got {}",
            cmd.lr
        )));
    }
    let data = Dataset::load(&cmd.data)
        .map_err(|e| CliError::config(format!("{}: {e}", cmd.data.display())))?;
    if data.is_empty() {
        return Err(CliError::config(format!(
            "{}: dataset is empty",
            cmd.data.display()
        )));
    }
    let arch = ArchSpec::new(cmd.sizes.clone(), cmd.hidden, cmd.output);
    let outcome = train_toy(&arch, &data, cmd.epochs, cmd.lr, cmd.seed)?;
    outcome
        .model
        .save(&cmd.out)
        .map_err(|e| CliError::config(format!("{}: {e}", cmd.out.display())))?;
    let summary = TrainSummary {
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
        accuracy: outcome.accuracy,
    };
    println!("{}", json(&summary));
    Ok(())
}

pub fn gen_data(cmd: &GenDataCmd) -> Result<(), CliError> {
    let (data, out) = match &cmd.kind {
        DataKind::Blobs {
            n,
            dim,
            classes,
            separation,
            spread,
            seed,
            out,
        } => {
            if *dim < 2 || *classes < 2 {
                return Err(CliError::config("blobs need dim >= 2 and classes >= 2"));
            }
            (blobs(*n, *dim, *classes, *separation, *spread, *seed), out)
        }
        DataKind::Patterns {
            n,
            dim,
            rank,
            seed,
            out,
        } => (patterns(*n, *dim, *rank, *seed), out),
    };
    data.save(out)
        .map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    Ok(())
}
