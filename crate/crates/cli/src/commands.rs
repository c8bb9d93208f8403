//! The subcommands. Each resolves its config, runs the analysis and writes a
//! report to the configured output (standard output when none is given).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use oed_core::category::{category_space, enumerate_structures, ms54_structure, rank_structures, structure_eig};
use oed_core::coin::{all_sequences, coin_space, rank_sequences, sequence_curve};
use oed_core::design::{expected_information_gain, information_gain, posterior_from_log_likelihoods, softmax_sample};
use oed_core::dist::ln_binomial_pmf;
use oed_core::{
    CategoryStructure, CoinExperiment, CoinSequence, DesignReport, Flip, Model, ModelSpace, OedError, VectorModel,
};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::{json, Value};

use crate::config::{resolve, Format, Overrides, RunConfig, Suite};
use crate::error::{CliError, ConfigError};

type CoinSpace = ModelSpace<Model<CoinSequence, Flip>>;
type CategorySpace = ModelSpace<VectorModel<CategoryStructure>>;

/// Key accepted in place of a structure key for the bundled 5-4 structure.
pub const MS54_ALIAS: &str = "ms54";

/// One ranked experiment as written to reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub rank: usize,
    pub experiment: String,
    pub eig: f64,
    pub detail: Option<Value>,
}

fn coin_space_for(cfg: &RunConfig) -> Result<CoinSpace, CliError> {
    coin_space(&cfg.model_refs(), Some(cfg.prior())).map_err(|e| CliError::Analysis(e.to_string()))
}

fn category_space_for(cfg: &RunConfig) -> Result<CategorySpace, CliError> {
    category_space(&cfg.model_refs(), Some(cfg.prior()), cfg.parameter_mode())
        .expect("model names validated")
        .map_err(CliError::from)
}

fn write_output(cfg: &RunConfig, content: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cfg.output_path() {
        Some(path) => std::fs::write(path, content)?,
        None => stdout.write_all(content.as_bytes())?,
    }
    Ok(())
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Analysis(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Analysis(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}

fn coin_rows(reports: &[DesignReport<CoinExperiment, u32>]) -> Vec<RankRow> {
    reports
        .iter()
        .map(|r| RankRow {
            rank: r.rank,
            experiment: r.key.clone(),
            eig: r.eig,
            detail: r.per_outcome.as_ref().map(|outcomes| {
                json!(outcomes
                    .iter()
                    .map(|c| json!({
                        "heads": c.response,
                        "probability": c.probability,
                        "kl": c.kl,
                        "impossible": c.impossible,
                    }))
                    .collect::<Vec<_>>())
            }),
        })
        .collect()
}

/// Ranks every experiment of the configured suite.
pub fn rank_rows(cfg: &RunConfig) -> Result<(Vec<RankRow>, Option<String>), CliError> {
    let n = cfg.group_size();
    match cfg.suite() {
        Suite::Coin => {
            let space = coin_space_for(cfg)?;
            let reports = rank_sequences(&space, n, cfg.outcome())?;
            let sampled = sample(cfg, &reports)?;
            Ok((coin_rows(&reports), sampled))
        }
        Suite::Category => {
            let space = category_space_for(cfg)?;
            let reports = rank_structures(&space, &enumerate_structures(), n, cfg.outcome())?;
            let sampled = sample(cfg, &reports)?;
            let rows = reports
                .iter()
                .map(|r| RankRow {
                    rank: r.rank,
                    experiment: r.key.clone(),
                    eig: r.eig,
                    detail: None,
                })
                .collect();
            Ok((rows, sampled))
        }
    }
}

fn sample<X, R>(cfg: &RunConfig, reports: &[DesignReport<X, R>]) -> Result<Option<String>, CliError> {
    let Some(t) = cfg.temperature else {
        return Ok(None);
    };
    let mut rng = StdRng::seed_from_u64(cfg.seed.unwrap_or(0));
    let pick = softmax_sample(reports, t, &mut rng).ok_or_else(|| CliError::Analysis("nothing to sample".into()))?;
    Ok(Some(pick.key.clone()))
}

fn top_table(rows: &[RankRow]) -> String {
    let top = &rows[..rows.len().min(5)];
    let width = top
        .iter()
        .map(|r| r.experiment.len())
        .max()
        .unwrap_or(0)
        .max("experiment".len());
    let mut out = format!("{:>4}  {:<width$}  {}\n", "rank", "experiment", "eig_nats");
    for r in top {
        out.push_str(&format!("{:>4}  {:<width$}  {}\n", r.rank, r.experiment, fmt6(r.eig)));
    }
    out
}

pub fn cmd_rank(overrides: &Overrides, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(overrides, None)?;
    let (rows, sampled) = rank_rows(&cfg)?;
    let content = match cfg.format() {
        Format::Csv => csv_string(
            &["rank", "experiment", "eig_nats"].map(String::from),
            &rows
                .iter()
                .map(|r| vec![r.rank.to_string(), r.experiment.clone(), fmt6(r.eig)])
                .collect::<Vec<_>>(),
        )?,
        Format::Json => json_string(&json!({
            "config": cfg,
            "reports": rows.iter().map(|r| {
                let mut v = json!({"rank": r.rank, "experiment": r.experiment, "eig": r.eig});
                if let Some(d) = &r.detail {
                    v["perOutcome"] = d.clone();
                }
                v
            }).collect::<Vec<_>>(),
            "sampled": sampled,
        })),
    };
    if cfg.output_path().is_some() {
        stdout.write_all(top_table(&rows).as_bytes())?;
        if let Some(key) = &sampled {
            writeln!(stdout, "sampled experiment: {key}")?;
        }
    }
    write_output(&cfg, &content, stdout)
}

/// A suite experiment named by its key.
#[derive(Debug, Clone)]
pub enum SuiteExperiment {
    Coin(CoinSequence),
    Category(CategoryStructure),
}

pub fn parse_experiment(suite: Suite, key: &str) -> Result<SuiteExperiment, String> {
    match suite {
        Suite::Coin => key.parse().map(SuiteExperiment::Coin),
        Suite::Category if key == MS54_ALIAS => ms54_structure()
            .map(SuiteExperiment::Category)
            .map_err(|e| e.to_string()),
        Suite::Category => key
            .parse()
            .map(SuiteExperiment::Category)
            .map_err(|e: oed_core::StructureError| e.to_string()),
    }
}

/// `(experiment, n, eig)` rows in experiment order, then by `n`.
pub fn curve_rows(cfg: &RunConfig) -> Result<Vec<(String, u32, f64)>, CliError> {
    let suite = cfg.suite();
    let keys: Vec<String> = match (&cfg.experiments, suite) {
        (Some(k), _) => k.clone(),
        (None, Suite::Coin) => all_sequences().iter().map(ToString::to_string).collect(),
        (None, Suite::Category) => vec![MS54_ALIAS.to_string()],
    };
    let [lo, hi] = cfg.n_range.unwrap_or([1, cfg.group_size()]);
    let ns: Vec<u32> = (lo..=hi).collect();
    let experiments = keys
        .iter()
        .map(|k| parse_experiment(suite, k).map_err(|m| ConfigError::new("experiments", None, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(keys.len() * ns.len());
    match suite {
        Suite::Coin => {
            let space = coin_space_for(cfg)?;
            for (key, x) in keys.iter().zip(&experiments) {
                let SuiteExperiment::Coin(seq) = x else { unreachable!() };
                for (n, eig) in sequence_curve(&space, seq, &ns, cfg.outcome())? {
                    rows.push((key.clone(), n, eig));
                }
            }
        }
        Suite::Category => {
            let space = category_space_for(cfg)?;
            for (key, x) in keys.iter().zip(&experiments) {
                let SuiteExperiment::Category(s) = x else {
                    unreachable!()
                };
                for &n in &ns {
                    rows.push((key.clone(), n, structure_eig(&space, s, n, cfg.outcome())?));
                }
            }
        }
    }
    Ok(rows)
}

pub fn cmd_curve(overrides: &Overrides, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(overrides, None)?;
    let rows = curve_rows(&cfg)?;
    let content = match cfg.format() {
        Format::Csv => csv_string(
            &["experiment", "n", "eig_nats"].map(String::from),
            &rows
                .iter()
                .map(|(k, n, e)| vec![k.clone(), n.to_string(), fmt6(*e)])
                .collect::<Vec<_>>(),
        )?,
        Format::Json => json_string(&json!({
            "config": cfg,
            "rows": rows.iter().map(|(k, n, e)| json!({"experiment": k, "n": n, "eig": e})).collect::<Vec<_>>(),
        })),
    };
    if let Some(path) = cfg.output_path() {
        writeln!(stdout, "wrote {} rows to {}", rows.len(), path.display())?;
    }
    write_output(&cfg, &content, stdout)
}

pub fn cmd_enumerate(overrides: &Overrides, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(overrides, Some(Suite::Category))?;
    if cfg.suite() != Suite::Category {
        return Err(ConfigError::new("--suite", None, "enumerate is only defined for the category suite").into());
    }
    let structures = enumerate_structures();
    let mut content = String::new();
    for s in &structures {
        content.push_str(&serde_json::to_string(s).expect("structures serialize"));
        content.push('\n');
    }
    match cfg.output_path() {
        Some(path) => {
            std::fs::write(path, content)?;
            writeln!(stdout, "{} structures", structures.len())?;
        }
        None => {
            stdout.write_all(content.as_bytes())?;
            eprintln!("{} structures", structures.len());
        }
    }
    Ok(())
}

/// An observed outcome: head count for coin, per-object A-label counts for
/// category (object order `0000`..`1111`).
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Heads(u32),
    Labels(Vec<u32>),
}

impl Observation {
    fn render(&self) -> String {
        match self {
            Observation::Heads(k) => k.to_string(),
            Observation::Labels(v) => v.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"),
        }
    }

    fn add(&mut self, other: &Observation) {
        match (self, other) {
            (Observation::Heads(a), Observation::Heads(b)) => *a += b,
            (Observation::Labels(a), Observation::Labels(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            _ => unreachable!("one suite per data file"),
        }
    }
}

/// One data row after parsing and range checks.
#[derive(Debug, Clone)]
pub struct EmpiricalRecord {
    pub line: usize,
    pub key: String,
    pub experiment: SuiteExperiment,
    pub n: u32,
    pub response: Observation,
}

pub fn read_records(suite: Suite, path: &Path) -> Result<Vec<EmpiricalRecord>, CliError> {
    let shown = path.display().to_string();
    let data_err = |line: usize, message: String| CliError::Data {
        path: shown.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| data_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["experiment", "n", "response"] {
        return Err(data_err(1, "header must be `experiment,n,response`".into()));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| data_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let key = row[0].to_string();
        let experiment = parse_experiment(suite, &key).map_err(|m| data_err(line, m))?;
        let n: u32 = row[1]
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| data_err(line, format!("invalid participant count `{}`", &row[1])))?;
        let count = |s: &str| -> Result<u32, CliError> {
            let c: u32 = s
                .trim()
                .parse()
                .map_err(|_| data_err(line, format!("invalid count `{s}`")))?;
            if c > n {
                return Err(data_err(line, format!("count {c} exceeds n = {n}")));
            }
            Ok(c)
        };
        let response = match suite {
            Suite::Coin => Observation::Heads(count(&row[2])?),
            Suite::Category => {
                let counts = row[2].split(';').map(count).collect::<Result<Vec<_>, _>>()?;
                if counts.len() != 16 {
                    return Err(data_err(line, format!("expected 16 counts, got {}", counts.len())));
                }
                Observation::Labels(counts)
            }
        };
        records.push(EmpiricalRecord {
            line,
            key,
            experiment,
            n,
            response,
        });
    }
    Ok(records)
}

/// Result of one AIG evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AigRow {
    pub line: usize,
    pub experiment: String,
    pub n: u32,
    pub response: String,
    pub outcome: Result<AigValues, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AigValues {
    pub aig: f64,
    pub eig: f64,
    pub posterior: Vec<f64>,
}

enum Spaces {
    Coin(CoinSpace),
    Category(CategorySpace),
}

fn evaluate(
    spaces: &Spaces,
    cfg: &RunConfig,
    x: &SuiteExperiment,
    n: u32,
    y: &Observation,
) -> Result<AigValues, OedError> {
    let (log_lik, eig, prior): (Vec<f64>, f64, &[f64]) = match (spaces, x, y) {
        (Spaces::Coin(space), SuiteExperiment::Coin(seq), Observation::Heads(k)) => {
            let log_lik = space
                .models()
                .iter()
                .map(|m| {
                    Ok(ln_binomial_pmf(
                        u64::from(n),
                        m.predict(seq)?.prob(&Flip::H),
                        u64::from(*k),
                    ))
                })
                .collect::<Result<_, OedError>>()?;
            let group = space.groupify();
            let gx = CoinExperiment::new(n, *seq)?;
            let responses: Vec<u32> = (0..=n).collect();
            let eig = expected_information_gain(&group, &gx, cfg.outcome(), &responses)?.eig;
            (log_lik, eig, space.prior_weights())
        }
        (Spaces::Category(space), SuiteExperiment::Category(s), Observation::Labels(counts)) => {
            let log_lik = space
                .models()
                .iter()
                .map(|m| m.items(s)?.count_log_likelihood(counts, n))
                .collect::<Result<_, OedError>>()?;
            let eig = structure_eig(space, s, n, cfg.outcome())?;
            (log_lik, eig, space.prior_weights())
        }
        _ => unreachable!("records are parsed for the configured suite"),
    };
    let posterior = posterior_from_log_likelihoods(prior, &log_lik)?;
    Ok(AigValues {
        aig: information_gain(&posterior, prior),
        eig,
        posterior,
    })
}

/// AIG and matched EIG for each record. In prefix mode records of the same
/// experiment accumulate in file order and each row reports the running
/// total.
pub fn aig_rows(cfg: &RunConfig, records: &[EmpiricalRecord]) -> Result<Vec<AigRow>, CliError> {
    let spaces = match cfg.suite() {
        Suite::Coin => Spaces::Coin(coin_space_for(cfg)?),
        Suite::Category => Spaces::Category(category_space_for(cfg)?),
    };
    let prefix = cfg.prefix.unwrap_or(false);
    let mut totals: HashMap<&str, (u32, Observation)> = HashMap::new();
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let (n, y) = if prefix {
            let entry = totals.entry(&r.key).or_insert_with(|| {
                let zero = match &r.response {
                    Observation::Heads(_) => Observation::Heads(0),
                    Observation::Labels(v) => Observation::Labels(vec![0; v.len()]),
                };
                (0, zero)
            });
            entry.0 += r.n;
            entry.1.add(&r.response);
            entry.clone()
        } else {
            (r.n, r.response.clone())
        };
        rows.push(AigRow {
            line: r.line,
            experiment: r.key.clone(),
            n,
            response: y.render(),
            outcome: evaluate(&spaces, cfg, &r.experiment, n, &y).map_err(|e| match e {
                OedError::AllZeroLikelihood => "all-zero-likelihood".to_string(),
                other => other.to_string(),
            }),
        });
    }
    Ok(rows)
}

pub fn cmd_aig(overrides: &Overrides, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(overrides, None)?;
    let path = cfg
        .data
        .clone()
        .ok_or_else(|| ConfigError::new("--data", None, "aig needs a data file"))?;
    let records = read_records(cfg.suite(), &path)?;
    let rows = aig_rows(&cfg, &records)?;
    let models = cfg.model_refs();
    let content = match cfg.format() {
        Format::Csv => {
            let mut header: Vec<String> = ["line", "experiment", "n", "response", "aig_nats", "eig_nats"]
                .map(String::from)
                .to_vec();
            header.extend(models.iter().map(|m| format!("posterior_{m}")));
            header.push("status".into());
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.line.to_string(),
                        r.experiment.clone(),
                        r.n.to_string(),
                        r.response.clone(),
                    ];
                    match &r.outcome {
                        Ok(v) => {
                            row.push(fmt6(v.aig));
                            row.push(fmt6(v.eig));
                            row.extend(v.posterior.iter().map(|p| fmt6(*p)));
                            row.push("ok".into());
                        }
                        Err(msg) => {
                            row.extend(std::iter::repeat_n(String::new(), 2 + models.len()));
                            row.push(msg.clone());
                        }
                    }
                    row
                })
                .collect();
            csv_string(&header, &body)?
        }
        Format::Json => json_string(&json!({
            "config": cfg,
            "rows": rows.iter().map(|r| {
                let mut v = json!({"line": r.line, "experiment": r.experiment, "n": r.n, "response": r.response});
                match &r.outcome {
                    Ok(vals) => {
                        v["aig"] = json!(vals.aig);
                        v["eig"] = json!(vals.eig);
                        v["posterior"] = json!(models.iter().zip(&vals.posterior)
                            .map(|(m, p)| (m.to_string(), json!(p)))
                            .collect::<serde_json::Map<_, _>>());
                        v["status"] = json!("ok");
                    }
                    Err(msg) => v["status"] = json!(msg),
                }
                v
            }).collect::<Vec<_>>(),
        })),
    };
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} rows could not be evaluated (see status column)",
            rows.len()
        );
    }
    if let Some(out) = cfg.output_path() {
        writeln!(stdout, "wrote {} rows to {}", rows.len(), out.display())?;
    }
    write_output(&cfg, &content, stdout)
}

pub fn cmd_print_config(overrides: &Overrides, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve(overrides, None)?;
    stdout.write_all(json_string(&serde_json::to_value(&cfg).expect("config serializes")).as_bytes())?;
    Ok(())
}
