use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::{
    BestParams, EvalPoint, HarnessError, LearningCurve, Params, Result, RunRecord, RunStatus,
    SensitivityRow,
};
use crate::agents::Algorithm;
use crate::sketch::SketchFamily;

pub const RESULTS_HEADER: [&str; 15] = [
    "run_id",
    "seed",
    "algorithm",
    "env",
    "features",
    "k",
    "sketch_family",
    "alpha",
    "lambda",
    "eta",
    "xi",
    "step",
    "rmse",
    "status",
    "step_time_us",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn err(path: &Path, message: impl ToString) -> HarnessError {
    HarnessError::Results {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| err(path, e))
}

/// One row per evaluation point; a diverged run ends with a row carrying the
/// divergence step and an empty `rmse`. Overwrites `path`.
pub fn write_results(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RESULTS_HEADER).map_err(|e| err(path, e))?;
    for r in records {
        let p = &r.params;
        let prefix = [
            r.run_id.to_string(),
            r.seed.to_string(),
            r.algorithm.to_string(),
            r.env.clone(),
            r.features.clone(),
            opt(p.k),
            opt(p.sketch),
            opt(p.alpha),
            p.lambda.to_string(),
            opt(p.eta),
            opt(p.xi),
        ];
        let status = r.status.as_str().to_string();
        for pt in &r.curve {
            let mut row = prefix.to_vec();
            row.extend([
                pt.step.to_string(),
                pt.rmse.to_string(),
                status.clone(),
                opt(pt.step_time_us),
            ]);
            w.write_record(&row).map_err(|e| err(path, e))?;
        }
        if let Some(step) = r.diverged_at {
            let mut row = prefix.to_vec();
            row.extend([
                step.to_string(),
                String::new(),
                status.clone(),
                String::new(),
            ]);
            w.write_record(&row).map_err(|e| err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse<T: FromStr>(path: &Path, field: &str, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| err(path, format!("column {field}: `{s}`: {e}")))
}

fn parse_opt<T: FromStr>(path: &Path, field: &str, s: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if s.is_empty() {
        Ok(None)
    } else {
        parse(path, field, s).map(Some)
    }
}

/// Inverse of [`write_results`]; records come back in file order.
pub fn read_results(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| err(path, e))?;
    let header = rd.headers().map_err(|e| err(path, e))?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(err(path, "unexpected header"));
    }
    let mut records: Vec<RunRecord> = Vec::new();
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    for row in rd.records() {
        let row = row.map_err(|e| err(path, e))?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let run_id: usize = parse(path, "run_id", f(0))?;
        let status = match f(13) {
            "completed" => RunStatus::Completed,
            "diverged" => RunStatus::Diverged,
            other => return Err(err(path, format!("unknown status `{other}`"))),
        };
        let slot = match index.get(&run_id) {
            Some(&i) => i,
            None => {
                let algorithm: Algorithm = f(2).parse().map_err(|e| err(path, e))?;
                let sketch: Option<SketchFamily> = match f(6) {
                    "" => None,
                    s => Some(s.parse().map_err(|e| err(path, e))?),
                };
                records.push(RunRecord {
                    run_id,
                    seed: parse(path, "seed", f(1))?,
                    algorithm,
                    params: Params {
                        alpha: parse_opt(path, "alpha", f(7))?,
                        lambda: parse(path, "lambda", f(8))?,
                        eta: parse_opt(path, "eta", f(9))?,
                        xi: parse_opt(path, "xi", f(10))?,
                        k: parse_opt(path, "k", f(5))?,
                        sketch,
                    },
                    env: f(3).to_string(),
                    features: f(4).to_string(),
                    curve: Vec::new(),
                    status,
                    diverged_at: None,
                });
                index.insert(run_id, records.len() - 1);
                records.len() - 1
            }
        };
        let step: usize = parse(path, "step", f(11))?;
        let rec = &mut records[slot];
        match parse_opt::<f64>(path, "rmse", f(12))? {
            Some(rmse) => rec.curve.push(EvalPoint {
                step,
                rmse,
                step_time_us: parse_opt(path, "step_time_us", f(14))?,
            }),
            None => rec.diverged_at = Some(step),
        }
    }
    Ok(records)
}

pub fn write_sensitivity(rows: &[SensitivityRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "algorithm",
        "param_name",
        "param_value",
        "best_lambda",
        "mean_rmse",
        "stderr",
    ])
    .map_err(|e| err(path, e))?;
    for r in rows {
        w.write_record([
            r.algorithm.to_string(),
            r.param_name.clone(),
            r.param_value.to_string(),
            r.best_lambda.to_string(),
            r.mean_rmse.to_string(),
            r.stderr.to_string(),
        ])
        .map_err(|e| err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_best_params(best: &[BestParams], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "algorithm",
        "k",
        "sketch_family",
        "alpha",
        "lambda",
        "eta",
        "xi",
        "score",
        "runs",
    ])
    .map_err(|e| err(path, e))?;
    for b in best {
        let p = &b.params;
        w.write_record([
            b.algorithm.to_string(),
            opt(p.k),
            opt(p.sketch),
            opt(p.alpha),
            p.lambda.to_string(),
            opt(p.eta),
            opt(p.xi),
            b.score.to_string(),
            b.runs.to_string(),
        ])
        .map_err(|e| err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_learning_curves(curves: &[LearningCurve], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "algorithm",
        "k",
        "sketch_family",
        "alpha",
        "lambda",
        "eta",
        "xi",
        "step",
        "mean_rmse",
        "stderr",
        "runs",
        "diverged",
    ])
    .map_err(|e| err(path, e))?;
    for c in curves {
        let p = &c.params;
        for i in 0..c.steps.len() {
            w.write_record([
                c.algorithm.to_string(),
                opt(p.k),
                opt(p.sketch),
                opt(p.alpha),
                p.lambda.to_string(),
                opt(p.eta),
                opt(p.xi),
                c.steps[i].to_string(),
                c.mean[i].to_string(),
                c.stderr[i].to_string(),
                c.runs.to_string(),
                c.diverged.to_string(),
            ])
            .map_err(|e| err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}
