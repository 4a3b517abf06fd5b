use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use btn_core::acceptance;
use btn_core::analysis::{lemma_ratio_ledger, write_ledger_csv, write_trajectory_csv};
use btn_core::config::{parse_config, SimulationConfig};
use btn_core::dynamics::{SimulationState, Simulator};
use btn_core::grid::snapshot::save_field;
use btn_core::steady::{crossover, kappa_sweep, solve_steady, write_sweep_csv};
use btn_core::{BtnError, ErrorKind};
use serde::Serialize;

use crate::manifest::RunManifest;

/// κ values swept when `--kappas` is absent.
pub const DEFAULT_KAPPAS: [f64; 9] = [0.01, 0.02, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(BtnError),
    /// A run that failed part way; the partial outputs were written.
    Partial { error: BtnError, written: Vec<String> },
    VerifyFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) | CliError::Partial { error: e, .. } => match e.kind() {
                ErrorKind::Validation => 1,
                ErrorKind::Numerical => 2,
                ErrorKind::Io => 3,
            },
            CliError::VerifyFailed(_) => 2,
        }
    }

    pub fn class(&self) -> &'static str {
        match self.exit_code() {
            1 => "validation",
            2 => "numerical",
            _ => "io",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Partial { error, written } => {
                write!(f, "{error} (partial output: {})", written.join(", "))
            }
            CliError::VerifyFailed(n) => write!(f, "{n} acceptance criteria failed"),
        }
    }
}

impl From<BtnError> for CliError {
    fn from(e: BtnError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(BtnError::Io(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn load_config(path: &Path) -> CliResult<SimulationConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        BtnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(parse_config(&text)?)
}

fn prepare_out(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| {
        BtnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))
    })?;
    Ok(())
}

fn write_with(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> btn_core::Result<()>) -> CliResult<String> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    body(&mut w)?;
    w.flush()?;
    Ok(name.to_string())
}

fn save_state_fields(dir: &Path, m: &btn_core::grid::VectorField2, p: &btn_core::grid::ScalarField) -> CliResult<Vec<String>> {
    let mut files = Vec::new();
    for (name, f) in [("m1.btnf", m.c1()), ("m2.btnf", m.c2()), ("p.btnf", p)] {
        save_field(f, dir.join(name))?;
        files.push(name.to_string());
    }
    Ok(files)
}

pub fn cmd_run(config: &Path, out: &Path) -> CliResult {
    let start = Instant::now();
    let cfg = load_config(config)?;
    prepare_out(out)?;
    let sim = Simulator::new(&cfg)?;
    let manifest = RunManifest::new("run", &cfg, &sim.grid());
    let (trajectory, state, failure): (_, Option<SimulationState>, _) = match sim.run() {
        Ok(o) => (o.trajectory, Some(o.final_state), None),
        Err(f) => (f.trajectory, None, Some(f.error)),
    };
    let mut files = vec![
        write_with(out, "trajectory.csv", |w| write_trajectory_csv(&trajectory, w))?,
        write_with(out, "ledger.csv", |w| write_ledger_csv(&lemma_ratio_ledger(&trajectory, cfg.kappa), w))?,
    ];
    if let Some(error) = failure {
        return Err(CliError::Partial { error, written: files });
    }
    let state = state.expect("successful run has a final state");
    files.extend(save_state_fields(out, &state.m, &state.p)?);
    manifest.finish(out, files, start.elapsed())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SteadySummary {
    kappa: f64,
    gamma: f64,
    converged: bool,
    residual: f64,
    iterations: usize,
    pseudo_time: f64,
    m_inf_linf: f64,
}

pub fn cmd_steady(config: &Path, out: &Path) -> CliResult {
    let start = Instant::now();
    let cfg = load_config(config)?;
    prepare_out(out)?;
    let grid = cfg.grid()?;
    let res = solve_steady(&cfg, cfg.initial.evaluate(grid)?, cfg.steady_tol)?;
    let summary = SteadySummary {
        kappa: cfg.kappa,
        gamma: cfg.gamma,
        converged: res.converged,
        residual: res.residual,
        iterations: res.iterations,
        pseudo_time: res.pseudo_time,
        m_inf_linf: res.m_inf.linf(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
    fs::write(out.join("steady.json"), json + "\n")?;
    let mut files = vec!["steady.json".to_string()];
    files.extend(save_state_fields(out, &res.m_inf, &res.p_inf)?);
    RunManifest::new("steady", &cfg, &grid).finish(out, files, start.elapsed())?;
    Ok(())
}

pub fn cmd_sweep(config: &Path, out: &Path, kappas: Option<&[f64]>) -> CliResult {
    let start = Instant::now();
    let cfg = load_config(config)?;
    prepare_out(out)?;
    let kappas = kappas.unwrap_or(&DEFAULT_KAPPAS);
    let rows = kappa_sweep(&cfg, kappas)?;
    let file = write_with(out, "sweep.csv", |w| write_sweep_csv(&rows, w))?;
    let mut manifest = RunManifest::new("sweep", &cfg, &cfg.grid()?);
    manifest.notes = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("kappa {}: {e}", r.kappa)))
        .collect();
    manifest.notes.push(match crossover(&rows) {
        Some((lo, hi)) => format!("crossover between kappa {lo} and {hi}"),
        None => "no crossover in the swept range".to_string(),
    });
    manifest.finish(out, vec![file], start.elapsed())?;
    Ok(())
}

pub fn cmd_verify(config: Option<&Path>, out: Option<&Path>) -> CliResult {
    if let Some(path) = config {
        load_config(path)?;
    }
    if let Some(dir) = out {
        prepare_out(dir)?;
    }
    let mut lines = Vec::new();
    let results = acceptance::run_with(|c| {
        println!("{c}");
        lines.push(c.to_string());
    });
    let failed = results.iter().filter(|c| !c.passed).count();
    if let Some(dir) = out {
        fs::write(dir.join("verify.txt"), lines.join("\n") + "\n")?;
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(BtnError::validation("kappa", "bad")).exit_code(), 1);
        assert_eq!(CliError::from(BtnError::NonFinite("m")).exit_code(), 2);
        assert_eq!(CliError::from(std::io::Error::other("disk")).exit_code(), 3);
        assert_eq!(CliError::VerifyFailed(1).exit_code(), 2);
        assert_eq!(CliError::VerifyFailed(1).class(), "numerical");
    }
}
