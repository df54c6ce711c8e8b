use std::io::Write;

use rayon::prelude::*;

use super::stats::{mean, mean_absolute_error, quantile};
use super::HarnessError;
use crate::checkpoint::{release_ppi, ReleaseError};
use crate::event_log::{enumerate_windows, filter_scope, EventLog, Scope};
use crate::mechanisms::{stream_rng, MechanismError};
use crate::ppi_model::{evaluate_plain, EvalError, PpiDefinition};

/// One (window, PPI) cell of a case-study run.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyRow {
    pub scope: Scope,
    pub ppi: String,
    /// `node:mechanism` pairs of the admissible set, `;`-separated.
    pub mechanisms: String,
    pub epsilon: f64,
    pub traces: usize,
    pub true_value: Option<f64>,
    pub released: Vec<f64>,
    /// Why the window has no (or fewer) releases, e.g. `TooFewTraces`.
    pub gap: Option<String>,
}

impl CaseStudyRow {
    pub fn mean_released(&self) -> Option<f64> {
        mean(&self.released)
    }

    pub fn mae(&self) -> Option<f64> {
        mean_absolute_error(&self.released, self.true_value?)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseStudyReport {
    pub rows: Vec<CaseStudyRow>,
}

impl CaseStudyReport {
    /// `(true, mean released)` per window for one PPI, skipping gaps.
    pub fn series(&self, ppi: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.ppi == ppi)
            .filter_map(|r| Some((r.true_value?, r.mean_released()?)))
            .collect()
    }

    /// Long format: one line per release, and one line per gap.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["month", "ppi", "size", "epsilon", "mechanism", "run", "true_value", "released_value", "status"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let head = [row.scope.label(), row.ppi.clone(), row.traces.to_string(), row.epsilon.to_string(), row.mechanisms.clone()];
            for (run, value) in row.released.iter().enumerate() {
                let mut rec = head.to_vec();
                rec.extend([run.to_string(), opt(row.true_value), value.to_string(), "ok".into()]);
                w.write_record(&rec)?;
            }
            if let Some(gap) = &row.gap {
                let mut rec = head.to_vec();
                rec.extend([String::new(), opt(row.true_value), String::new(), gap.clone()]);
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, sink: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "month", "ppi", "size", "epsilon", "mechanism", "true_value", "releases", "mean_released", "mae", "q05",
            "q95", "status",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.scope.label(),
                row.ppi.clone(),
                row.traces.to_string(),
                row.epsilon.to_string(),
                row.mechanisms.clone(),
                opt(row.true_value),
                row.released.len().to_string(),
                opt(row.mean_released()),
                opt(row.mae()),
                opt(quantile(&row.released, 0.05)),
                opt(quantile(&row.released, 0.95)),
                row.gap.clone().unwrap_or_else(|| "ok".into()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gap_code(e: &ReleaseError) -> String {
    match e {
        ReleaseError::Mechanism {
            error: MechanismError::TooFewTraces { .. },
            ..
        } => "TooFewTraces".into(),
        ReleaseError::Mechanism { error, .. } => format!("{error:?}"),
        ReleaseError::Evaluation(EvalError::EmptyDataset { .. }) => "EmptyDataset".into(),
        other => other.to_string(),
    }
}

/// Evaluates and releases every PPI `repetitions` times in each calendar
/// window of its granularity. `epsilon` overrides the definitions' values.
pub fn run_case_study(
    log: &EventLog,
    definitions: &[PpiDefinition],
    epsilon: Option<f64>,
    repetitions: usize,
    n_max: u32,
    seed: u64,
) -> Result<CaseStudyReport, HarnessError> {
    if repetitions == 0 {
        return Err(HarnessError::InvalidParameter("repetitions must be at least 1".into()));
    }
    if let Some(e) = epsilon {
        if !(e.is_finite() && e > 0.0) {
            return Err(HarnessError::InvalidParameter("epsilon must be positive".into()));
        }
    }
    let mut cells = Vec::new();
    for (p, def) in definitions.iter().enumerate() {
        let windows = enumerate_windows(log, def.scope_granularity)?;
        cells.extend(windows.into_iter().enumerate().map(|(w, scope)| (p, w, scope)));
    }
    let rows = cells
        .par_iter()
        .map(|&(p, w, scope)| {
            let def = &definitions[p];
            let eps = epsilon.unwrap_or(def.epsilon);
            let traces = filter_scope(log, &scope);
            let mut row = CaseStudyRow {
                scope,
                ppi: def.id.clone(),
                mechanisms: String::new(),
                epsilon: eps,
                traces: traces.len(),
                true_value: None,
                released: Vec::with_capacity(repetitions),
                gap: None,
            };
            if traces.is_empty() {
                row.gap = Some("EmptyScope".into());
                return row;
            }
            row.true_value = evaluate_plain(&def.tree, &traces).ok();
            for rep in 0..repetitions {
                let stream = ((p as u64) << 40) | ((w as u64) << 20) | rep as u64;
                match release_ppi(def, &traces, eps, n_max, &mut stream_rng(seed, stream)) {
                    Ok(out) => {
                        if row.mechanisms.is_empty() {
                            row.mechanisms = out
                                .nodes
                                .iter()
                                .map(|n| format!("{}:{}", n.node, n.mechanism.name()))
                                .collect::<Vec<_>>()
                                .join(";");
                        }
                        row.released.push(out.value);
                    }
                    Err(e) => {
                        row.gap.get_or_insert_with(|| gap_code(&e));
                    }
                }
            }
            row
        })
        .collect();
    Ok(CaseStudyReport { rows })
}
