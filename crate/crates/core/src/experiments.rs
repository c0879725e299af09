//! Reproduces the two published enrollment experiments and writes their
//! learning curves and per-node difference vectors as CSV.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::codec::encode_password;
use crate::error::{Error, Result};
use crate::template::{Template, TrainingMeta, VerifyOutcome};
use crate::trainer::{train, LearningCurve, TrainingConfig};

#[derive(Clone, Copy, Debug)]
pub struct Experiment {
    pub name: &'static str,
    pub password: &'static str,
    pub candidates: &'static [&'static str],
    pub seed: u64,
}

pub const EXPERIMENTS: [Experiment; 2] = [
    Experiment {
        name: "exp1",
        password: "neural",
        candidates: &["neural", "meural", "neurba", "signal"],
        seed: 1,
    },
    Experiment {
        name: "exp2",
        password: "architecture",
        candidates: &["architecture", "manojkrsingh", "manoj_singh"],
        seed: 2,
    },
];

#[derive(Clone, Debug)]
pub struct CandidateResult {
    pub candidate: &'static str,
    pub outcome: VerifyOutcome<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub template: Template<f64>,
    pub curve: LearningCurve<f64>,
    pub results: Vec<CandidateResult>,
}

impl ExperimentReport {
    pub fn final_error(&self) -> f64 {
        self.curve.final_error().unwrap_or(f64::NAN)
    }
}

/// Enrolls the experiment's password and verifies each candidate against it.
pub fn run_experiment(experiment: &Experiment) -> Result<ExperimentReport> {
    let config = TrainingConfig::<f64>::with_seed(experiment.seed);
    let input = encode_password(experiment.password)?;
    let trained = train(&input, &config)?;
    let meta = TrainingMeta {
        eta: config.eta,
        epsilon: config.epsilon,
        target: config.target,
        seed: config.seed,
        epochs: trained.curve.epochs(),
    };
    let template = Template::from_parts(
        trained.architecture,
        trained.weights,
        trained.activations.hidden_outputs,
        trained.activations.final_output,
        meta,
    )?;
    let results = experiment
        .candidates
        .iter()
        .map(|&candidate| {
            template
                .verify(candidate)
                .map(|outcome| CandidateResult { candidate, outcome })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        experiment: *experiment,
        template,
        curve: trained.curve,
        results,
    })
}

/// `node_index,abs_difference`, nodes numbered from 1, final output last.
/// A length-rejected candidate has no rows.
pub fn write_diff_csv<W: Write>(outcome: &VerifyOutcome<f64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "node_index,abs_difference")?;
    for (i, diff) in outcome.diff_vector.iter().enumerate() {
        writeln!(out, "{},{:.9e}", i + 1, diff)?;
    }
    out.flush()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs both experiments, writing `<exp>_curve.csv` and
/// `<exp>_diff_<candidate>.csv` into `out_dir`.
pub fn replicate_experiments(out_dir: &Path) -> Result<Vec<ExperimentReport>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut reports = Vec::with_capacity(EXPERIMENTS.len());
    for experiment in &EXPERIMENTS {
        let report = run_experiment(experiment)?;
        let curve_path = out_dir.join(format!("{}_curve.csv", experiment.name));
        report
            .curve
            .write_csv(create(&curve_path)?)
            .map_err(|e| Error::io(&curve_path, e))?;
        for result in &report.results {
            let path = out_dir.join(format!("{}_diff_{}.csv", experiment.name, result.candidate));
            write_diff_csv(&result.outcome, create(&path)?).map_err(|e| Error::io(&path, e))?;
        }
        reports.push(report);
    }
    Ok(reports)
}
