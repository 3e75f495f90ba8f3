use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::output::{atomic_write, ModelFile};
use super::{BenchArgs, DataArgs, EvaluateArgs, ModelArgs, PredictArgs, SyntheticArgs, TrainArgs};
use crate::dataset::{binarize_one_vs_all, load_path, split, BinaryDataset, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{median_heuristic_gamma, solve_kernel, KernelOptions, KernelSpec};
use crate::measures::{evaluate as evaluate_scores, MeasureSpec, MeasureValue, Rates};
use crate::moments::{estimate_moments, regularize, ClassMoments};
use crate::mpm::{solve_mpm, MpmOptions};
use crate::solver::{train_linear, tune_bias, AlphaGrid, SolverOptions, SolverResult};
use crate::synthetic::{synthetic_table, table_csv};

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::invalid(format!("no such file: {}", path.display())));
    }
    Ok(())
}

fn measure_of(args: &ModelArgs) -> Result<MeasureSpec> {
    let name = args.measure.trim().to_ascii_lowercase();
    if name == "fbeta" {
        return MeasureSpec::f_beta(args.beta.unwrap_or(1.0));
    }
    let spec: MeasureSpec = name.parse()?;
    if let (Some(own), Some(flag)) = (spec.beta(), args.beta) {
        if own != flag {
            return Err(Error::invalid(format!(
                "--beta {flag} contradicts measure `{}`",
                args.measure
            )));
        }
    }
    Ok(spec)
}

/// Beta used for the F column of evaluation tables.
fn report_beta(args: &ModelArgs) -> Result<f64> {
    Ok(measure_of(args)?.beta().or(args.beta).unwrap_or(1.0))
}

fn solver_options(
    grid_points: Option<usize>,
    grid_step: Option<f64>,
    max_rounds: usize,
) -> Result<SolverOptions> {
    let mut options = SolverOptions {
        max_rounds,
        ..Default::default()
    };
    if let Some(n) = grid_points {
        options.grid = AlphaGrid::Points(n);
    }
    if let Some(h) = grid_step {
        options.grid = AlphaGrid::Step(h);
    }
    options.validate()?;
    Ok(options)
}

fn model_options(args: &ModelArgs) -> Result<SolverOptions> {
    solver_options(args.grid_points, args.grid_step, args.max_rounds)
}

fn load_dataset(path: &Path, label_column: usize) -> Result<Dataset> {
    require_file(path)?;
    load_path(path, label_column)
}

fn positive_label(label: Option<i64>) -> Result<i64> {
    label.ok_or_else(|| Error::invalid("--positive-label is required with data files"))
}

fn kernel_spec(args: &ModelArgs, name: &str, train: &BinaryDataset) -> Result<KernelSpec> {
    if name.trim().eq_ignore_ascii_case("rbf") {
        let gamma = match args.gamma {
            Some(g) => g,
            None => median_heuristic_gamma(train.features(), args.seed)?,
        };
        return KernelSpec::rbf(gamma);
    }
    name.parse()
}

fn estimated_moments(train: &BinaryDataset, jitter: f64) -> Result<ClassMoments> {
    if !(jitter >= 0.0) {
        return Err(Error::invalid("jitter must be nonnegative"));
    }
    regularize(&estimate_moments(train)?, jitter)
}

/// Fits the model selected by `args` on `train`.
fn fit(args: &ModelArgs, train: &BinaryDataset) -> Result<(ModelFile, Option<SolverResult>)> {
    let measure = measure_of(args)?;
    if args.baseline.is_some() {
        let result = solve_mpm(
            &estimated_moments(train, args.jitter)?,
            &MpmOptions::default(),
        )?;
        return Ok((ModelFile::Mpm(result.to_model()), None));
    }
    let options = model_options(args)?;
    if let Some(name) = &args.kernel {
        let spec = kernel_spec(args, name, train)?;
        let kernel_options = KernelOptions {
            subsample: (args.subsample > 0).then_some(args.subsample),
            seed: args.seed,
            ridge: args.ridge,
        };
        let (model, result) = solve_kernel(&spec, train, measure, &options, &kernel_options)?;
        return Ok((ModelFile::Kernel(model), Some(result)));
    }
    let (model, result) = train_linear(&estimated_moments(train, args.jitter)?, measure, &options)?;
    Ok((ModelFile::Linear(model), Some(result)))
}

fn fit_moments(
    args: &ModelArgs,
    moments: &ClassMoments,
) -> Result<(ModelFile, Option<SolverResult>)> {
    if args.kernel.is_some() {
        return Err(Error::invalid("kernel models need --data, not --moments"));
    }
    if args.baseline.is_some() {
        let result = solve_mpm(moments, &MpmOptions::default())?;
        return Ok((ModelFile::Mpm(result.to_model()), None));
    }
    let (model, result) = train_linear(moments, measure_of(args)?, &model_options(args)?)?;
    Ok((ModelFile::Linear(model), Some(result)))
}

fn load_binary(data: &DataArgs) -> Result<BinaryDataset> {
    let path = data
        .data
        .as_ref()
        .ok_or_else(|| Error::invalid("--data is required"))?;
    let label = positive_label(data.positive_label)?;
    binarize_one_vs_all(&load_dataset(path, data.label_column)?, label)
}

#[derive(Serialize)]
struct TrainSummary {
    measure: String,
    q_value: f64,
    alpha_p: f64,
    alpha_n: f64,
    rounds: usize,
    wall_ms: f64,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    measure_of(&args.model)?;
    let moments = match (&args.moments, &args.data.data) {
        (Some(path), _) => {
            require_file(path)?;
            Some(ClassMoments::from_json(&std::fs::read_to_string(path)?)?)
        }
        (None, Some(path)) => {
            require_file(path)?;
            None
        }
        (None, None) => return Err(Error::invalid("train needs --data or --moments")),
    };
    let start = Instant::now();
    let (model, result) = match &moments {
        Some(m) => fit_moments(&args.model, m)?,
        None => fit(&args.model, &load_binary(&args.data)?)?,
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    atomic_write(&args.out.join("model.json"), model.to_json().as_bytes())?;
    if let Some(r) = &result {
        atomic_write(&args.out.join("trace.csv"), r.trace.to_csv().as_bytes())?;
    }
    let (measure, q_value, alpha_p, alpha_n) = match &model {
        ModelFile::Linear(m) => (m.measure, m.q_value, m.alpha_p, m.alpha_n),
        ModelFile::Kernel(m) => (m.measure, m.q_value, m.alpha_p, m.alpha_n),
        ModelFile::Mpm(m) => (
            m.model.measure,
            m.model.q_value,
            m.model.alpha_p,
            m.model.alpha_n,
        ),
    };
    let summary = TrainSummary {
        measure: measure.to_string(),
        q_value,
        alpha_p,
        alpha_n,
        rounds: result.as_ref().map_or(0, SolverResult::rounds),
        wall_ms,
    };
    if args.pretty {
        println!(
            "measure {}  Q {:.6}  alpha_P {:.4}  alpha_N {:.4}  rounds {}  {:.1} ms",
            summary.measure,
            summary.q_value,
            summary.alpha_p,
            summary.alpha_n,
            summary.rounds,
            summary.wall_ms
        );
    } else {
        println!("{}", serde_json::to_string(&summary)?);
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    require_file(path)?;
    ModelFile::from_json(&std::fs::read_to_string(path)?)
}

/// Pads the test features to the model dimension; wider data is a mismatch.
fn aligned(data: Dataset, dim: usize) -> Result<Dataset> {
    data.with_feature_dim(dim)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = aligned(load_dataset(&args.data, args.label_column)?, model.dim())?;
    let scores = model.scores(data.features())?;
    let mut out = String::from("index,score,label\n");
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i},{s},{}", if *s > 0.0 { 1 } else { -1 }).unwrap();
    }
    atomic_write(&args.out, out.as_bytes())?;
    println!(
        "{}",
        json!({ "predictions": scores.len(), "out": args.out.display().to_string() })
    );
    Ok(())
}

#[derive(Serialize)]
struct TunedReport {
    /// Predict +1 iff `score + bias > threshold`.
    threshold: f64,
    validation_value: f64,
    rates: Rates,
    measures: BTreeMap<String, MeasureValue>,
}

#[derive(Serialize)]
struct ClassReport {
    positive_label: i64,
    p: f64,
    rates: Rates,
    measures: BTreeMap<String, MeasureValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuned: Option<TunedReport>,
}

fn measure_table(
    scores: &[f64],
    labels: &[i8],
    beta: f64,
) -> Result<(Rates, f64, BTreeMap<String, MeasureValue>)> {
    let mut table = BTreeMap::new();
    let mut rates = None;
    let mut p = 0.0;
    for spec in MeasureSpec::all(beta) {
        let e = evaluate_scores(scores, labels, spec, None)?;
        rates = Some(e.rates);
        p = e.p;
        table.insert(spec.to_string(), e.measure);
    }
    Ok((rates.expect("measure list is nonempty"), p, table))
}

fn model_measure(model: &ModelFile) -> MeasureSpec {
    match model {
        ModelFile::Linear(m) => m.measure,
        ModelFile::Kernel(m) => m.measure,
        ModelFile::Mpm(m) => m.model.measure,
    }
}

fn report_class(
    model: &ModelFile,
    validation: Option<&BinaryDataset>,
    test: &BinaryDataset,
    label: i64,
    beta: f64,
) -> Result<ClassReport> {
    let scores = model.scores(test.features())?;
    let (rates, p, measures) = measure_table(&scores, test.labels(), beta)?;
    let tuned = match validation {
        None => None,
        Some(val) => {
            let bias = model.bias();
            let raw: Vec<f64> = model
                .scores(val.features())?
                .iter()
                .map(|s| s + bias)
                .collect();
            let t = tune_bias(&raw, val.labels(), model_measure(model), bias)?;
            let shifted: Vec<f64> = scores.iter().map(|s| s + bias - t.threshold).collect();
            let (rates, _, measures) = measure_table(&shifted, test.labels(), beta)?;
            Some(TunedReport {
                threshold: t.threshold,
                validation_value: t.value,
                rates,
                measures,
            })
        }
    };
    Ok(ClassReport {
        positive_label: label,
        p,
        rates,
        measures,
        tuned,
    })
}

fn macro_average<'a>(
    tables: impl Iterator<Item = &'a BTreeMap<String, MeasureValue>>,
) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for t in tables {
        for (k, v) in t {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v.value;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

fn tuning_split(
    data: &BinaryDataset,
    fraction: Option<f64>,
    seed: u64,
) -> Result<(BinaryDataset, Option<BinaryDataset>)> {
    match fraction {
        None => Ok((data.clone(), None)),
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!(
                    "--tune-bias fraction must lie in (0, 1), got {f}"
                )));
            }
            let (fit_part, val) = split(data, 1.0 - f, seed)?;
            Ok((fit_part, Some(val)))
        }
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let beta = report_beta(&args.train)?;
    require_file(&args.test)?;
    if let Some(p) = &args.model {
        require_file(p)?;
    }
    if let Some(p) = &args.data.data {
        require_file(p)?;
    }
    let saved = args.model.as_deref().map(load_model).transpose()?;
    let dim = saved.as_ref().map(ModelFile::dim);
    let train_data = match &args.data.data {
        Some(path) => Some(load_dataset(path, args.data.label_column)?),
        None => None,
    };
    let test_data = load_dataset(&args.test, args.data.label_column)?;
    let width = dim
        .unwrap_or(0)
        .max(test_data.feature_dim())
        .max(train_data.as_ref().map_or(0, Dataset::feature_dim));
    let test_data = aligned(test_data, dim.unwrap_or(width))?;
    let train_data = train_data
        .map(|d| aligned(d, dim.unwrap_or(width)))
        .transpose()?;

    let labels: Vec<i64> = if args.one_vs_all {
        train_data
            .as_ref()
            .ok_or_else(|| Error::invalid("--one-vs-all needs --data"))?
            .classes()
    } else {
        vec![positive_label(args.data.positive_label)?]
    };
    if saved.is_none() && train_data.is_none() {
        return Err(Error::invalid("evaluate needs --model or --data"));
    }
    if saved.is_some() && args.tune_bias.is_some() && train_data.is_none() {
        return Err(Error::invalid(
            "--tune-bias needs --data for the validation split",
        ));
    }

    let mut reports = Vec::with_capacity(labels.len());
    for &label in &labels {
        let test = binarize_one_vs_all(&test_data, label)?;
        let (fit_part, validation) = match &train_data {
            Some(d) => tuning_split(
                &binarize_one_vs_all(d, label)?,
                args.tune_bias,
                args.train.seed,
            )?,
            None => (test.clone(), None),
        };
        let model = match &saved {
            Some(m) => m.clone(),
            None => fit(&args.train, &fit_part)?.0,
        };
        reports.push(report_class(
            &model,
            validation.as_ref(),
            &test,
            label,
            beta,
        )?);
    }

    let raw_macro = macro_average(reports.iter().map(|r| &r.measures));
    let tuned_tables: Vec<_> = reports
        .iter()
        .filter_map(|r| r.tuned.as_ref().map(|t| &t.measures))
        .collect();
    let mut doc = json!({ "beta": beta, "classes": reports, "macro": raw_macro });
    if !tuned_tables.is_empty() {
        doc["macro_tuned"] = serde_json::to_value(macro_average(tuned_tables.into_iter()))?;
    }
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    atomic_write(&args.out, text.as_bytes())?;

    if args.pretty {
        let names: Vec<String> = MeasureSpec::all(beta)
            .iter()
            .map(ToString::to_string)
            .collect();
        println!(
            "{:>8} {}",
            "class",
            names.iter().map(|n| format!("{n:>9}")).collect::<String>()
        );
        for r in &reports {
            let row: String = names
                .iter()
                .map(|n| format!("{:>9.4}", r.measures[n].value))
                .collect();
            println!("{:>8} {row}", r.positive_label);
        }
        let row: String = names
            .iter()
            .map(|n| format!("{:>9.4}", raw_macro[n]))
            .collect();
        println!("{:>8} {row}", "macro");
    } else {
        println!(
            "{}",
            serde_json::to_string(&json!({ "classes": labels.len(), "macro": raw_macro }))?
        );
    }
    Ok(())
}

pub fn reproduce_synthetic(args: &SyntheticArgs) -> Result<()> {
    let options = match args.grid_points {
        Some(n) => solver_options(Some(n), None, args.max_rounds)?,
        None => solver_options(None, Some(args.grid_step), args.max_rounds)?,
    };
    let rows = synthetic_table(&options)?;
    atomic_write(&args.out, table_csv(&rows).as_bytes())?;
    if args.pretty {
        println!("{:>6} {:>5} {:>8} {:>8}", "p", "beta", "alpha_P", "alpha_N");
        for r in &rows {
            println!(
                "{:>6} {:>5} {:>8.4} {:>8.4}",
                r.p, r.beta, r.alpha_p, r.alpha_n
            );
        }
    } else {
        for r in &rows {
            println!("{}", serde_json::to_string(r)?);
        }
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    for path in &args.data {
        require_file(path)?;
    }
    if args.repeats == 0 {
        return Err(Error::invalid("--repeats must be positive"));
    }
    let label = positive_label(args.positive_label)?;
    let measures: Vec<MeasureSpec> = args
        .measures
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_>>()?;
    let options = solver_options(args.grid_points, None, args.max_rounds)?;
    if args.repeats == 1 {
        log::warn!("a single repeat gives a low-confidence timing");
    }

    let mut out = String::from("dataset,measure,repeats,median_ms,min_ms,max_ms,low_confidence\n");
    for path in &args.data {
        let data = binarize_one_vs_all(&load_path(path, args.label_column)?, label)?;
        for &measure in &measures {
            let mut times = Vec::with_capacity(args.repeats);
            for _ in 0..args.repeats {
                let start = Instant::now();
                let moments = estimated_moments(&data, args.jitter)?;
                train_linear(&moments, measure, &options)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            let min = times.iter().copied().fold(f64::INFINITY, f64::min);
            let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let med = median(&mut times);
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            writeln!(
                out,
                "{name},{measure},{},{med:.3},{min:.3},{max:.3},{}",
                args.repeats,
                args.repeats == 1
            )
            .unwrap();
            if args.pretty {
                println!("{name:>24} {:>8} {med:>10.3} ms", measure.to_string());
            } else {
                println!(
                    "{}",
                    json!({ "dataset": name, "measure": measure.to_string(), "median_ms": med, "repeats": args.repeats })
                );
            }
        }
    }
    atomic_write(&args.out, out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_args(measure: &str, beta: Option<f64>) -> ModelArgs {
        ModelArgs {
            measure: measure.into(),
            beta,
            kernel: None,
            gamma: None,
            subsample: 200,
            ridge: 0.0,
            seed: 0,
            grid_points: None,
            grid_step: None,
            max_rounds: 200,
            jitter: 1e-8,
            baseline: None,
        }
    }

    #[test]
    fn measure_flags() {
        assert_eq!(
            measure_of(&model_args("fbeta", Some(3.0))).unwrap(),
            MeasureSpec::FBeta { beta: 3.0 }
        );
        assert_eq!(
            measure_of(&model_args("f1", None)).unwrap(),
            MeasureSpec::FBeta { beta: 1.0 }
        );
        assert!(measure_of(&model_args("f1", Some(2.0))).is_err());
        assert_eq!(report_beta(&model_args("gm", Some(2.0))).unwrap(), 2.0);
        assert!(measure_of(&model_args("auc", None)).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
