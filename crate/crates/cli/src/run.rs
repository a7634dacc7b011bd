use std::fs;
use std::path::Path;

use qvar::estimator::{estimate_c, estimate_c_aggregated, normalized_asymptotic_variance, AggregationPlan};
use qvar::experiments::{SGrid, StudyConfig, VarianceCurveConfig, FULL_REPLICATES};
use qvar::fisher::{cramer_rao_bound, efficiency, fisher_information, FamilyKind, IncrementFamily};
use qvar::grid2d::{estimate_separable, ingest_grid, simulate_separable, SeparableExpModel};
use qvar::io::{read_path_file, write_matrix_csv, write_path_csv};
use qvar::seqalg::{parse_sequence_list, VariationSequence};
use qvar::simulate::{Sampler, DEFAULT_JITTER};
use qvar::{DenominatorMode, DriftSpec, Error, ModelSpec, Result, SimConfig};
use serde::Serialize;

use crate::args::*;

/// Primary output of a command plus anything worth recording in the manifest.
pub struct Outcome {
    pub body: Vec<u8>,
    pub warnings: Vec<String>,
    /// Seed actually used, when the command is random.
    pub seed: Option<u64>,
}

impl Outcome {
    fn new(body: Vec<u8>) -> Self {
        Self {
            body,
            warnings: vec![],
            seed: None,
        }
    }

    fn json<T: Serialize>(value: &T) -> Result<Self> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        Ok(Self::new(body))
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn read_study(path: &Path) -> Result<StudyConfig> {
    parse_json(
        &format!("study config {}", path.display()),
        &fs::read_to_string(path)?,
    )
}

pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Vtilde(a) => vtilde(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Fisher(a) => fisher(a),
        Command::McStudy(a) => mc_study(a),
        Command::CurveStudy(a) => curve_study(a),
        Command::Simulate2d(a) => simulate2d(a),
        Command::Estimate2d(a) => estimate2d(a),
        Command::Replay(_) => unreachable!("replay is resolved before execution"),
    }
}

fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let model: ModelSpec = parse_json("--model", &a.model)?;
    let drift: Option<DriftSpec> = a.drift.as_deref().map(|d| parse_json("--drift", d)).transpose()?;
    if a.replicates == 0 {
        return Err(Error::InvalidParameter("--N must be at least 1".into()));
    }
    let config = SimConfig {
        model,
        n: a.n,
        delta: a.delta,
        alpha: if a.delta.is_none() {
            Some(a.alpha.unwrap_or(1.0))
        } else {
            None
        },
        drift,
        seed: a.seed,
        jitter: DEFAULT_JITTER,
    };
    let sampler = Sampler::new(&config)?;
    let paths = sampler.sample_many(a.replicates);
    let mut body = Vec::new();
    match a.format {
        SimFormat::Path => {
            if a.replicates != 1 {
                return Err(Error::InvalidParameter(
                    "--format path writes a single replicate; use --N 1".into(),
                ));
            }
            write_path_csv(&mut body, &paths[0])?;
        }
        SimFormat::Matrix => {
            let comments = vec![
                format!("model: {}", serde_json::to_string(&config.model)?),
                format!(
                    "n = {}, delta = {}, seed = {}, replicates = {}",
                    a.n,
                    sampler.delta(),
                    a.seed,
                    a.replicates
                ),
                "one replicate per row; column j holds X(j * delta), j = 1..n".to_string(),
            ];
            let rows: Vec<Vec<f64>> = paths.into_iter().map(|p| p.values).collect();
            write_matrix_csv(&mut body, &comments, &rows)?;
        }
    }
    let mut out = Outcome::new(body);
    out.seed = Some(a.seed);
    if let Some(j) = sampler.jitter_applied() {
        out.warnings
            .push(format!("covariance jitter {j:e} x max diagonal was applied"));
    }
    Ok(out)
}

fn estimate(a: &EstimateArgs) -> Result<Outcome> {
    let path = read_path_file(&a.path)?;
    let mode: DenominatorMode = a.denominator.parse()?;
    let sequences = parse_sequence_list(&a.sequences)?;
    let report = if a.aggregate {
        estimate_c_aggregated(&path, &sequences, a.d, a.s, mode)?
    } else {
        if sequences.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "{} sequences given; pass --aggregate to combine them",
                sequences.len()
            )));
        }
        estimate_c(&path, &sequences[0], a.d, a.s, mode)?
    }
    .with_level(a.level)?;
    let mut out = match a.format {
        ReportFormat::Json => Outcome::json(&report)?,
        ReportFormat::Csv => {
            Outcome::new(format!("{}\n{}\n", qvar::EstimateReport::CSV_HEADER, report.csv_row()).into_bytes())
        }
    };
    out.warnings = report.diagnostics.clone();
    Ok(out)
}

#[derive(Serialize)]
struct VtildeOut<'a> {
    sequence: &'a str,
    #[serde(rename = "D")]
    d: usize,
    s: f64,
    vtilde: f64,
}

fn vtilde(a: &VtildeArgs) -> Result<Outcome> {
    let seq = VariationSequence::from_spec(&a.sequence)?;
    let v = normalized_asymptotic_variance(&seq, a.d, a.s)?;
    if a.json {
        Outcome::json(&VtildeOut {
            sequence: seq.label(),
            d: a.d,
            s: a.s,
            vtilde: v,
        })
    } else {
        Ok(Outcome::new(format!("{v:?}\n").into_bytes()))
    }
}

fn aggregate(a: &AggregateArgs) -> Result<Outcome> {
    let sequences = parse_sequence_list(&a.sequences)?;
    let plan = if a.strict {
        AggregationPlan::new(&sequences, a.d, a.s)?
    } else {
        AggregationPlan::reduced(&sequences, a.d, a.s)?
    };
    let mut out = Outcome::json(&plan)?;
    out.warnings = plan
        .dropped
        .iter()
        .map(|l| format!("{l} is spanned by the other sequences; weight set to 0"))
        .collect();
    Ok(out)
}

#[derive(Serialize)]
struct FisherOut {
    family: IncrementFamily,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "I_C")]
    i_c: f64,
    #[serde(rename = "CR_bound")]
    cr_bound: f64,
    linear_in_c: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    vtilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficiency: Option<f64>,
}

fn fisher(a: &FisherArgs) -> Result<Outcome> {
    let kind: FamilyKind = a.family.parse()?;
    let family = match a.delta {
        Some(delta) => IncrementFamily::new(kind, a.d, a.s, a.n, delta)?,
        None => IncrementFamily::infill(kind, a.d, a.s, a.n)?,
    };
    let vtilde = a
        .sequence
        .as_deref()
        .map(|spec| normalized_asymptotic_variance(&VariationSequence::from_spec(spec)?, a.d, a.s))
        .transpose()?;
    Outcome::json(&FisherOut {
        family,
        c: a.c,
        i_c: fisher_information(&family, a.c)?,
        cr_bound: cramer_rao_bound(&family, a.c)?,
        linear_in_c: family.is_linear_at(a.c),
        vtilde,
        efficiency: vtilde.map(efficiency).transpose()?,
    })
}

fn table_outcome(config: &StudyConfig) -> Result<Outcome> {
    let mut body = Vec::new();
    config.run()?.write(&mut body)?;
    let mut out = Outcome::new(body);
    out.seed = config.seed();
    Ok(out)
}

fn mc_study(a: &StudyArgs) -> Result<Outcome> {
    let mut config = read_study(&a.config)?;
    if !matches!(
        config,
        StudyConfig::Histogram(_) | StudyConfig::DriftRobustness(_)
    ) {
        return Err(Error::InvalidParameter(
            "mc-study runs histogram or drift-robustness studies; use curve-study for curves".into(),
        ));
    }
    if a.full {
        config.set_replicates(FULL_REPLICATES);
    } else if let Some(r) = a.replicates {
        config.set_replicates(r);
    }
    if let Some(seed) = a.seed {
        match &mut config {
            StudyConfig::Histogram(c) => c.seed = seed,
            StudyConfig::DriftRobustness(c) => c.seed = seed,
            _ => {}
        }
    }
    table_outcome(&config)
}

fn curve_study(a: &CurveArgs) -> Result<Outcome> {
    let config = match (&a.config, &a.sequences) {
        (Some(path), _) => read_study(path)?,
        (None, Some(list)) => StudyConfig::VarianceCurve(VarianceCurveConfig {
            d: a.d,
            sequences: parse_sequence_list(list)?
                .iter()
                .map(|s| s.label().to_string())
                .collect(),
            s_grid: SGrid {
                from: a.s_from,
                to: a.s_to,
                step: a.s_step,
            },
            out: None,
        }),
        (None, None) => {
            return Err(Error::InvalidParameter(
                "curve-study needs --config or --sequences".into(),
            ))
        }
    };
    if !matches!(
        config,
        StudyConfig::VarianceCurve(_) | StudyConfig::AggregationCurve(_)
    ) {
        return Err(Error::InvalidParameter(
            "curve-study runs variance-curve or aggregation-curve studies; use mc-study for Monte Carlo"
                .into(),
        ));
    }
    table_outcome(&config)
}

/// Step of the reference 16 x 16 grid on the unit square.
const DEFAULT_GRID_STEP: f64 = 1.0 / 15.0;

fn simulate2d(a: &Simulate2dArgs) -> Result<Outcome> {
    let model = SeparableExpModel {
        sigma2: a.sigma2,
        theta1: a.theta1,
        theta2: a.theta2,
        mu: a.mu,
    };
    let grid = simulate_separable(
        &model,
        a.nx,
        a.ny,
        a.step_x.unwrap_or(DEFAULT_GRID_STEP),
        a.step_y.unwrap_or(DEFAULT_GRID_STEP),
        a.seed,
        a.replicate,
    )?;
    let mut body = Vec::new();
    grid.write_csv(&mut body)?;
    let mut out = Outcome::new(body);
    out.seed = Some(a.seed);
    Ok(out)
}

fn estimate2d(a: &Estimate2dArgs) -> Result<Outcome> {
    let grid = ingest_grid(&a.grid, a.step_x, a.step_y)?;
    let est = estimate_separable(&grid)?;
    let mut out = Outcome::json(&est)?;
    out.warnings = est.diagnostics.clone();
    Ok(out)
}
