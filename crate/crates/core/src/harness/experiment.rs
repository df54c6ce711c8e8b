use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use super::generators::{generate_dataset, Generator};
use super::stats::{mean_absolute_error, quantile};
use super::HarnessError;
use crate::event_log::Dataset;
use crate::mechanisms::{
    default_bucket_count, estimate_domain, interval_distribution, laplace_aggregate_release,
    sample_aggregate_release, stream_rng, AggregateFn, Comparator, DomainEstimate, DomainMode, Mechanism,
    MechanismConfig, MechanismError, ThresholdSpec, DEFAULT_XI,
};

/// Relative target `x <op> f(X) + offset` with a separate offset for sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    pub op: Comparator,
    pub offset_sum: f64,
    pub offset_other: f64,
}

impl Default for ThresholdPlan {
    fn default() -> Self {
        ThresholdPlan {
            op: Comparator::Lt,
            offset_sum: 100.0,
            offset_other: 10.0,
        }
    }
}

impl ThresholdPlan {
    pub fn spec_for(&self, f: AggregateFn) -> ThresholdSpec<f64> {
        let offset = if f == AggregateFn::Sum {
            self.offset_sum
        } else {
            self.offset_other
        };
        ThresholdSpec::relative(self.op, offset)
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Generator>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Generator),
        Many(Vec<Generator>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(g) => vec![g],
        OneOrMany::Many(v) => v,
    })
}

fn default_generators() -> Vec<Generator> {
    vec![Generator::GAUSSIAN]
}
fn default_sizes() -> Vec<usize> {
    vec![200]
}
fn default_epsilons() -> Vec<f64> {
    vec![0.1]
}
fn default_extensions() -> Vec<f64> {
    vec![0.0]
}
fn default_functions() -> Vec<AggregateFn> {
    AggregateFn::ALL.to_vec()
}
fn default_mechanisms() -> Vec<Mechanism> {
    vec![Mechanism::Laplace, Mechanism::Interval]
}
fn default_runs() -> usize {
    200
}
fn default_xi() -> u32 {
    DEFAULT_XI
}

/// Full-factorial experiment description. Missing fields take the defaults
/// of a single Gaussian(50, 10) dataset of 200 values at ε = 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_generators", alias = "generator", deserialize_with = "one_or_many")]
    pub generators: Vec<Generator>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Fractions by which both domain bounds are pushed outwards.
    #[serde(default = "default_extensions")]
    pub extensions: Vec<f64>,
    #[serde(default = "default_functions")]
    pub functions: Vec<AggregateFn>,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub threshold: ThresholdPlan,
    #[serde(default = "default_xi")]
    pub xi: u32,
    #[serde(default)]
    pub buckets: Option<usize>,
    /// Shared fixed domain; when absent each dataset's min and max are used.
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidParameter(m.into()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.sizes.contains(&0) {
            return bad("sizes must be at least 1");
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("epsilons must be positive");
        }
        if self.extensions.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("extensions must be non-negative");
        }
        if self.xi == 0 {
            return bad("xi must be at least 1");
        }
        if self.buckets.is_some_and(|m| m < 2) {
            return bad("buckets must be at least 2");
        }
        if let Some((lo, hi)) = self.domain {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad("domain must satisfy lower <= upper");
            }
        }
        let empty = [
            self.generators.is_empty(),
            self.sizes.is_empty(),
            self.epsilons.is_empty(),
            self.extensions.is_empty(),
            self.functions.is_empty(),
            self.mechanisms.is_empty(),
        ];
        if empty.iter().any(|e| *e) {
            return bad("every factor needs at least one level");
        }
        Ok(())
    }

    pub fn configuration_count(&self) -> usize {
        self.generators.len()
            * self.sizes.len()
            * self.epsilons.len()
            * self.extensions.len()
            * self.functions.len()
            * self.mechanisms.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub generator: String,
    pub size: usize,
    pub epsilon: f64,
    pub extension: f64,
    pub function: AggregateFn,
    pub mechanism: Mechanism,
    pub true_value: f64,
    pub released: Vec<f64>,
    pub errors: Vec<String>,
}

impl ExperimentRow {
    pub fn mae(&self) -> Option<f64> {
        mean_absolute_error(&self.released, self.true_value)
    }

    pub fn quantile(&self, q: f64) -> Option<f64> {
        quantile(&self.released, q)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<ExperimentRow>,
}

pub const EXPERIMENT_COLUMNS: [&str; 9] = [
    "generator",
    "size",
    "epsilon",
    "extension",
    "function",
    "mechanism",
    "run",
    "true_value",
    "released_value",
];

impl RunReport {
    /// First row matching the given factor levels.
    pub fn find(&self, function: AggregateFn, mechanism: Mechanism, size: usize, epsilon: f64, extension: f64) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| {
            r.function == function && r.mechanism == mechanism && r.size == size && r.epsilon == epsilon && r.extension == extension
        })
    }

    /// Long format: one line per released value.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(EXPERIMENT_COLUMNS)?;
        for row in &self.rows {
            for (run, value) in row.released.iter().enumerate() {
                w.write_record([
                    row.generator.clone(),
                    row.size.to_string(),
                    row.epsilon.to_string(),
                    row.extension.to_string(),
                    row.function.name().to_string(),
                    row.mechanism.name().to_string(),
                    run.to_string(),
                    row.true_value.to_string(),
                    value.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One line per configuration with MAE, quantiles and error count.
    pub fn write_summary_csv<W: Write>(&self, sink: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "generator", "size", "epsilon", "extension", "function", "mechanism", "true_value", "releases", "errors",
            "mae", "q05", "q50", "q95",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.generator.clone(),
                row.size.to_string(),
                row.epsilon.to_string(),
                row.extension.to_string(),
                row.function.name().to_string(),
                row.mechanism.name().to_string(),
                row.true_value.to_string(),
                row.released.len().to_string(),
                row.errors.len().to_string(),
                opt(row.mae()),
                opt(row.quantile(0.05)),
                opt(row.quantile(0.5)),
                opt(row.quantile(0.95)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Config {
    /// Shared by configurations that differ only in epsilon or extension, so
    /// those comparisons are paired on the same noise draws.
    stream: u64,
    generator: usize,
    size: usize,
    epsilon: f64,
    extension: f64,
    function: AggregateFn,
    mechanism: Mechanism,
}

fn dataset_stream(generator: usize, size: usize) -> u64 {
    (1 << 63) | ((generator as u64) << 32) | size as u64
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport, HarnessError> {
    spec.validate()?;
    let mut datasets = Vec::new();
    for (g, generator) in spec.generators.iter().enumerate() {
        for (s, &size) in spec.sizes.iter().enumerate() {
            let mut rng = stream_rng(spec.seed, dataset_stream(g, s));
            datasets.push(((g, size), generate_dataset(generator, size, &mut rng)?));
        }
    }
    let mut configs = Vec::with_capacity(spec.configuration_count());
    let per_size = (spec.functions.len() * spec.mechanisms.len()) as u64;
    let per_generator = spec.sizes.len() as u64 * per_size;
    for g in 0..spec.generators.len() {
        for (s, &size) in spec.sizes.iter().enumerate() {
            for &epsilon in &spec.epsilons {
                for &extension in &spec.extensions {
                    for (fi, &function) in spec.functions.iter().enumerate() {
                        for (mi, &mechanism) in spec.mechanisms.iter().enumerate() {
                            configs.push(Config {
                                stream: g as u64 * per_generator
                                    + s as u64 * per_size
                                    + (fi * spec.mechanisms.len() + mi) as u64,
                                generator: g,
                                size,
                                epsilon,
                                extension,
                                function,
                                mechanism,
                            });
                        }
                    }
                }
            }
        }
    }
    let rows = configs
        .par_iter()
        .map(|c| {
            let data = &datasets
                .iter()
                .find(|(key, _)| *key == (c.generator, c.size))
                .expect("dataset generated")
                .1;
            run_configuration(spec, c, data)
        })
        .collect();
    Ok(RunReport { rows })
}

fn experiment_domain(spec: &ExperimentSpec, data: &Dataset<f64>, extension: f64) -> Result<DomainEstimate<f64>, MechanismError> {
    match spec.domain {
        Some((lo, hi)) => DomainEstimate::new(lo, hi, extension, extension, DomainMode::Fixed),
        None => estimate_domain(data, extension, extension),
    }
}

fn run_configuration(spec: &ExperimentSpec, c: &Config, data: &Dataset<f64>) -> ExperimentRow {
    let mut row = ExperimentRow {
        generator: spec.generators[c.generator].label(),
        size: c.size,
        epsilon: c.epsilon,
        extension: c.extension,
        function: c.function,
        mechanism: c.mechanism,
        true_value: c.function.apply(data.values()).expect("datasets are non-empty"),
        released: Vec::with_capacity(spec.runs),
        errors: Vec::new(),
    };
    let mut rng = stream_rng(spec.seed, c.stream);
    match release_many(spec, c, data, &mut rng) {
        Ok(outcomes) => {
            for o in outcomes {
                match o {
                    Ok(v) => row.released.push(v),
                    Err(e) => row.errors.push(e.to_string()),
                }
            }
        }
        Err(e) => row.errors = vec![e.to_string(); spec.runs],
    }
    row
}

/// `spec.runs` releases for one configuration. Partitions are built once and
/// sampled repeatedly.
fn release_many<R: Rng>(
    spec: &ExperimentSpec,
    c: &Config,
    data: &Dataset<f64>,
    rng: &mut R,
) -> Result<Vec<Result<f64, MechanismError>>, MechanismError> {
    let domain = experiment_domain(spec, data, c.extension)?;
    let f = c.function;
    match c.mechanism {
        Mechanism::Laplace => Ok((0..spec.runs)
            .map(|_| laplace_aggregate_release(f, data, c.epsilon, &domain, rng).map(|o| o.value))
            .collect()),
        Mechanism::Interval | Mechanism::Threshold => {
            let config = MechanismConfig::new(c.epsilon)?.with_xi(spec.xi)?;
            let threshold = spec.threshold.spec_for(f);
            let threshold = (c.mechanism == Mechanism::Threshold).then_some(&threshold);
            match interval_distribution(f, data, &config, &domain, threshold) {
                Ok((scored, _)) => Ok((0..spec.runs).map(|_| Ok(scored.sample(rng))).collect()),
                Err(MechanismError::DegenerateRange) => {
                    let exact = f.apply(domain.clamp(data).values()).expect("non-empty");
                    Ok(vec![Ok(exact); spec.runs])
                }
                Err(e) => Err(e),
            }
        }
        Mechanism::SampleAggregate => {
            let m = spec.buckets.unwrap_or_else(|| default_bucket_count(data.len()));
            let clamped = domain.clamp(data);
            let (lo, hi) = (domain.extended_lower(), domain.extended_upper());
            let range = if f == AggregateFn::Sum {
                let small = (data.len() / m) as f64;
                let large = (data.len() - (m - 1) * (data.len() / m)) as f64;
                (lo.min(lo * small).min(lo * large), hi.max(hi * large).max(hi * small))
            } else {
                (lo, hi)
            };
            Ok((0..spec.runs)
                .map(|_| {
                    sample_aggregate_release(
                        clamped.values(),
                        m,
                        c.epsilon,
                        Some(range),
                        |bucket: &[&f64]| f.apply(&bucket.iter().map(|v| **v).collect::<Vec<_>>()),
                        rng,
                    )
                    .map(|o| o.value)
                })
                .collect())
        }
    }
}

/// Probability mass the plain and the threshold-sensitive interval mechanism
/// put on values whose threshold outcome equals that of the true result.
pub fn outcome_preserving_mass(
    function: AggregateFn,
    data: &Dataset<f64>,
    config: &MechanismConfig<f64>,
    domain: &DomainEstimate<f64>,
    threshold: &ThresholdSpec<f64>,
) -> Result<(f64, f64), MechanismError> {
    let truth = function.apply(domain.clamp(data).values()).ok_or(MechanismError::EmptyDataset)?;
    let bound = threshold.resolve(truth);
    let holds = threshold.test(truth, truth);
    let below = matches!(threshold.comparator, Comparator::Lt | Comparator::Le);
    let (lo, hi) = if holds == below {
        (f64::NEG_INFINITY, bound)
    } else {
        (bound, f64::INFINITY)
    };
    let (plain, _) = interval_distribution(function, data, config, domain, None)?;
    let (sensitive, _) = interval_distribution(function, data, config, domain, Some(threshold))?;
    Ok((plain.mass_between(lo, hi), sensitive.mass_between(lo, hi)))
}
