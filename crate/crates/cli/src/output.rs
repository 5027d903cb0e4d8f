use partwave_core::nld::NldDiagnostics;
use partwave_core::verify::{CheckEntry, ContractionReport, Gate, NldReport, RatioStudy};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] partwave_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// What a command produced, before anything touches the disk.
pub enum Outcome {
    Studies(Vec<RatioStudy>),
    Checks(Vec<CheckEntry>),
    Nld(Box<NldReport>),
    Contraction(ContractionReport),
    Run { diagnostics: Vec<NldDiagnostics>, summary: Value },
    Table { header: Vec<&'static str>, rows: Vec<Vec<f64>>, summary: Value, pass: bool },
}

fn gates_pass(g: &[Gate]) -> bool {
    g.iter().all(|g| g.pass)
}

#[derive(Serialize)]
struct StudySummary<'a> {
    estimate_id: &'a str,
    max: f64,
    median: f64,
    drift: Option<f64>,
    t_growth: Option<f64>,
    pass: bool,
    gates: &'a [Gate],
    failures: &'a [String],
    meta: &'a std::collections::BTreeMap<String, f64>,
}

impl Outcome {
    pub fn passes(&self) -> bool {
        match self {
            Outcome::Studies(s) => s.iter().all(|s| s.passes() && s.failures.is_empty()),
            Outcome::Checks(c) => c.iter().all(|c| c.pass),
            Outcome::Nld(r) => r.passes(),
            Outcome::Contraction(r) => gates_pass(&r.gates),
            Outcome::Run { .. } => true,
            Outcome::Table { pass, .. } => *pass,
        }
    }

    pub fn summary(&self, study: &str) -> Value {
        let body = match self {
            Outcome::Studies(ss) => json!(ss
                .iter()
                .map(|s| StudySummary {
                    estimate_id: &s.estimate_id,
                    max: s.max_ratio,
                    median: s.median_ratio,
                    drift: s.drift(),
                    t_growth: s.growth(),
                    pass: s.passes() && s.failures.is_empty(),
                    gates: &s.gates,
                    failures: &s.failures,
                    meta: &s.meta,
                })
                .collect::<Vec<_>>()),
            Outcome::Checks(c) => json!(c),
            Outcome::Nld(r) => json!({
                "eps": r.eps, "t_end": r.t_end, "sup_lambda_h1": r.sup_lambda_h1,
                "x_half": r.x_half, "x_end": r.x_end, "picard_residual": r.picard_residual, "gates": r.gates,
            }),
            Outcome::Contraction(r) => json!(r),
            Outcome::Run { summary, .. } | Outcome::Table { summary, .. } => summary.clone(),
        };
        json!({ "study": study, "pass": self.passes(), "results": body })
    }

    fn write_csv(&self, dir: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(dir.join("study.csv"))?;
        match self {
            Outcome::Studies(ss) => {
                w.write_record(["estimate_id", "member", "descriptor", "lhs", "rhs", "ratio"])?;
                for s in ss {
                    for m in &s.ensemble {
                        let r = m.ratio.map(num).unwrap_or_default();
                        w.write_record([s.estimate_id.clone(), m.id.to_string(), m.descriptor.clone(), num(m.lhs), num(m.rhs), r])?;
                    }
                }
            }
            Outcome::Checks(cs) => {
                w.write_record(["name", "residual", "tolerance", "pass"])?;
                for c in cs {
                    w.write_record([c.name.clone(), num(c.residual), num(c.tolerance), c.pass.to_string()])?;
                }
            }
            Outcome::Nld(r) => write_gates(&mut w, &r.gates)?,
            Outcome::Contraction(r) => {
                w.write_record(["radius", "lipschitz_ratio"])?;
                for (a, b) in r.radii.iter().zip(&r.ratios) {
                    w.write_record([num(*a), num(*b)])?;
                }
            }
            Outcome::Run { diagnostics, .. } => write_diagnostics(&mut w, diagnostics)?,
            Outcome::Table { header, rows, .. } => {
                w.write_record(header)?;
                for r in rows {
                    w.write_record(r.iter().map(|x| num(*x)))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    fn diagnostics(&self) -> Option<&[NldDiagnostics]> {
        match self {
            Outcome::Nld(r) => Some(&r.diagnostics),
            Outcome::Run { diagnostics, .. } => Some(diagnostics),
            _ => None,
        }
    }

    /// study.csv, summary.json, manifest.json and, for time-dependent runs,
    /// trajectory.csv.
    pub fn write(&self, dir: &Path, study: &str, manifest: Value) -> Result<Value, CliError> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(dir)?;
        if let Some(d) = self.diagnostics() {
            let mut w = csv::Writer::from_path(dir.join("trajectory.csv"))?;
            write_diagnostics(&mut w, d)?;
            w.flush()?;
        }
        let summary = self.summary(study);
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(summary)
    }
}

fn write_gates(w: &mut csv::Writer<std::fs::File>, gates: &[Gate]) -> Result<(), CliError> {
    w.write_record(["gate", "value", "limit", "pass"])?;
    for g in gates {
        w.write_record([g.name.clone(), num(g.value), num(g.limit), g.pass.to_string()])?;
    }
    Ok(())
}

fn write_diagnostics(w: &mut csv::Writer<std::fs::File>, d: &[NldDiagnostics]) -> Result<(), CliError> {
    w.write_record(["t", "l2", "h1", "lambda_h1", "x_running"])?;
    for x in d {
        w.write_record([num(x.t), num(x.l2), num(x.h1), num(x.lambda_h1), num(x.x_running)])?;
    }
    Ok(())
}
