//! The `smag` command-line front end.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::diagnostics::{self, ExperimentKind, ExperimentSpec};
use crate::error::{Error, Result};
use crate::evolve::{Simulation, TrajectoryStatus};
use crate::fields::{self, NormRequest};
use crate::io::{self as cio, Checkpoint, DiagnosticsWriter, RunConfig};
use crate::mild::{self, PicardConfig};
use crate::regimes::{self, Real, RegimeReport};

#[derive(Debug, Parser)]
#[command(name = "smag", version, about = "Fractional Stokes-Magneto simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configuration and stream diagnostics as NDJSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides io.out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides io.checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Solve the mild formulation by Picard iteration.
    Picard {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify parameters and print the derived exponents.
    CheckRegime {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        beta: String,
        #[arg(long, default_value = "2")]
        s: String,
        #[arg(long, default_value = "1")]
        eta: String,
        /// Lebesgue exponent to classify against the critical scaling.
        #[arg(long)]
        p: Option<String>,
    },
    /// Run one of the packaged experiments.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Experiment to run; defaults to the `experiment` table of the config.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long, default_value_t = 2)]
        lambda: u32,
        #[arg(long)]
        s_low: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print norms of a checkpointed field.
    Norms {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Norm labels such as L2, Linf, H1, Hdot0.5; repeatable.
        #[arg(long = "norm", default_values_t = ["L2".to_string(), "H1".to_string()])]
        norms: Vec<String>,
    },
    /// Continue a run from a checkpoint, appending to its diagnostics.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Scaling,
    Decay,
    Logsob,
    Amplitude,
    PicardCross,
}

/// Parses `argv` (including the program name), executes, and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli.command, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn open_out<'a>(path: Option<&Path>, append: bool, fallback: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => {
            let file = if append {
                OpenOptions::new().append(true).create(true).open(p)?
            } else {
                File::create(p)?
            };
            Box::new(BufWriter::new(file))
        }
        None => Box::new(fallback),
    })
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::parse(&text)
}

pub fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            out,
            checkpoint,
            checkpoint_every,
            t_end,
        } => {
            let mut cfg = load_config(config)?;
            if let Some(t) = t_end {
                cfg.sim.t_end = *t;
            }
            override_io(&mut cfg, out.clone(), checkpoint.clone(), *checkpoint_every);
            cfg.sim.validate()?;
            let sink = open_out(cfg.io.out.as_deref(), false, stdout)?;
            let writer = DiagnosticsWriter::new(sink, &cfg)?;
            let sim = Simulation::new(cfg.sim.clone())?;
            drive(sim, writer, &cfg, true)
        }
        Command::Resume {
            checkpoint,
            out,
            checkpoint_every,
            t_end,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            let mut cfg = RunConfig {
                sim: ck.params.clone(),
                ..RunConfig::default()
            };
            if let Some(t) = t_end {
                cfg.sim.t_end = *t;
            }
            cfg.io.checkpoint = Some(checkpoint.clone());
            override_io(&mut cfg, out.clone(), None, *checkpoint_every);
            let sink = open_out(cfg.io.out.as_deref(), true, stdout)?;
            let sim = Simulation::restore(cfg.sim.clone(), ck.field, ck.acc)?;
            drive(sim, DiagnosticsWriter::append(sink), &cfg, false)
        }
        Command::Picard { config, out } => {
            let cfg = load_config(config)?;
            let sink = open_out(out.as_deref().or(cfg.io.out.as_deref()), false, stdout)?;
            let mut writer = DiagnosticsWriter::new(sink, &cfg)?;
            picard(&cfg, &mut writer)?;
            writer.flush()
        }
        Command::CheckRegime {
            d,
            alpha,
            beta,
            s,
            eta,
            p,
        } => {
            let p = p.as_deref().map(Real::parse).transpose()?;
            let report = regimes::classify(
                *d,
                Real::parse(alpha)?,
                Real::parse(beta)?,
                Real::parse(s)?,
                Real::parse(eta)?,
                p,
            );
            stdout.write_all(regime_text(&report).as_bytes())?;
            Ok(())
        }
        Command::Experiment {
            config,
            kind,
            lambda,
            s_low,
            out,
        } => {
            let cfg = load_config(config)?;
            let kind = experiment_kind(&cfg, *kind, *lambda, *s_low)?;
            let spec = ExperimentSpec {
                kind,
                base: cfg.sim.clone(),
            };
            let report = diagnostics::run_experiment(&spec)?;
            let sink = open_out(out.as_deref().or(cfg.io.out.as_deref()), false, stdout)?;
            let mut writer = DiagnosticsWriter::new(sink, &cfg)?;
            writer.write_line(&report)?;
            writer.flush()
        }
        Command::Norms { checkpoint, norms } => {
            let ck = Checkpoint::load(checkpoint)?;
            let mut line = serde_json::Map::new();
            line.insert("t".into(), ck.acc.t.into());
            for label in norms {
                let value = fields::norm(&ck.field, NormRequest::parse(label)?)?;
                line.insert(label.clone(), value.into());
            }
            stdout.write_all(cio::to_json_line(&line)?.as_bytes())?;
            Ok(())
        }
    }
}

fn override_io(cfg: &mut RunConfig, out: Option<PathBuf>, checkpoint: Option<PathBuf>, every: Option<usize>) {
    if out.is_some() {
        cfg.io.out = out;
    }
    if checkpoint.is_some() {
        cfg.io.checkpoint = checkpoint;
    }
    if every.is_some() {
        cfg.io.checkpoint_every = every;
    }
}

fn save_checkpoint(sim: &Simulation, path: &Path) -> Result<()> {
    Checkpoint {
        params: sim.params().clone(),
        field: sim.field().clone(),
        acc: sim.accumulators(),
    }
    .save(path)
}

/// Steps to completion, writing records and periodic checkpoints.
fn drive<W: Write>(mut sim: Simulation, mut writer: DiagnosticsWriter<W>, cfg: &RunConfig, fresh: bool) -> Result<()> {
    let every = cfg.io.checkpoint_every.filter(|&k| k > 0);
    let path = cfg.io.checkpoint.clone();
    let mut samples = 0usize;
    let on_sample = |s: &Simulation, rec: &diagnostics::DiagnosticsRecord| -> Result<()> {
        writer.write_record(rec)?;
        samples += 1;
        if let (Some(p), Some(k)) = (&path, every) {
            if samples % k == 0 {
                writer.flush()?;
                save_checkpoint(s, p)?;
            }
        }
        Ok(())
    };
    let traj = if fresh {
        sim.run_with(false, on_sample)?
    } else {
        sim.resume_with(false, on_sample)?
    };
    if let Some(p) = &path {
        save_checkpoint(&sim, p)?;
    }
    writer.write_line(&RunSummary {
        status: format!("{:?}", traj.status),
        steps: traj.steps,
        t: sim.time(),
    })?;
    writer.flush()?;
    match traj.status {
        TrajectoryStatus::Diverged => Err(Error::NonFiniteField),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct RunSummary {
    status: String,
    steps: u64,
    t: f64,
}

#[derive(Serialize)]
struct PicardSample {
    t: f64,
    b_l2: f64,
    b_lq: f64,
}

#[derive(Serialize)]
struct PicardSummary {
    iterations: usize,
    converged: bool,
    contraction_ratio: f64,
    distances: Vec<f64>,
    ft_norm: f64,
}

fn picard<W: Write>(cfg: &RunConfig, writer: &mut DiagnosticsWriter<W>) -> Result<()> {
    let params = &cfg.sim;
    let grid = params.grid()?;
    let b0 = fields::make_initial(&params.ic, &grid, params.seed)?;
    let pc = PicardConfig::for_params(params)?;
    let res = mild::picard_solve(&b0, &pc, params)?;
    for (t, b) in res.times.iter().zip(&res.trajectory) {
        writer.write_line(&PicardSample {
            t: *t,
            b_l2: b.norm_sq().sqrt(),
            b_lq: fields::norm(b, NormRequest::Lp(pc.q))?,
        })?;
    }
    writer.write_line(&PicardSummary {
        iterations: res.iterations,
        converged: res.converged,
        contraction_ratio: res.contraction_ratio,
        ft_norm: mild::ft_norm_samples(&res.times, &res.trajectory, pc.sigma, pc.q)?,
        distances: res.distances,
    })
}

fn experiment_kind(cfg: &RunConfig, kind: Option<KindArg>, lambda: u32, s_low: Option<f64>) -> Result<ExperimentKind> {
    let from_cfg = cfg.experiment.clone();
    let Some(kind) = kind else {
        return from_cfg.ok_or_else(|| Error::Configuration("no experiment given (use --kind or an experiment table)".into()));
    };
    let matches_cfg = |k: &ExperimentKind| {
        matches!(
            (kind, k),
            (KindArg::Scaling, ExperimentKind::Scaling { .. })
                | (KindArg::Decay, ExperimentKind::DecayProbe { .. })
                | (KindArg::Logsob, ExperimentKind::LogSobolevSweep { .. })
                | (KindArg::Amplitude, ExperimentKind::AmplitudeSweep { .. })
                | (KindArg::PicardCross, ExperimentKind::PicardCross)
        )
    };
    if let Some(k) = from_cfg.filter(matches_cfg) {
        return Ok(k);
    }
    Ok(match kind {
        KindArg::Scaling => ExperimentKind::Scaling { lambda },
        KindArg::Decay => ExperimentKind::DecayProbe {
            s_low: s_low.ok_or_else(|| Error::Configuration("decay probe needs --s-low".into()))?,
        },
        KindArg::Logsob => {
            let cut = cfg.sim.grid()?.dealias_cutoff() as f64;
            let mut n_max = vec![];
            let mut n = 2.0;
            while n <= cut {
                n_max.push(n);
                n *= 2.0;
            }
            ExperimentKind::LogSobolevSweep { n_max }
        }
        KindArg::Amplitude => ExperimentKind::AmplitudeSweep {
            amplitudes: vec![1.0, 2.0, 4.0],
            growth: 2.0,
        },
        KindArg::PicardCross => ExperimentKind::PicardCross,
    })
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        format!("\"{x}\"")
    }
}

/// `key = value` lines for a regime report.
pub fn regime_text(r: &RegimeReport) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    line("d", r.d.to_string());
    line("alpha", num(r.alpha));
    line("beta", num(r.beta));
    line("s", num(r.s));
    line("eta", num(r.eta));
    line("lwp_case", format!("\"{:?}\"", r.lwp_case));
    if let Some(a) = r.alpha_star {
        line("alpha_star", num(a));
    }
    line("low_regularity_velocity", r.low_regularity_velocity.to_string());
    line("global_nonresistive", r.global_nonresistive.to_string());
    line("mild_admissible", r.mild_admissible.to_string());
    let reasons: Vec<String> = r.mild_reasons.iter().map(|m| format!("{m:?}")).collect();
    line("mild_reasons", format!("[{}]", reasons.join(", ")));
    if let Some(e) = &r.exponents {
        for (k, v, exact) in [
            ("p", e.p, &e.p_exact),
            ("q", e.q, &e.q_exact),
            ("r", e.r, &e.r_exact),
            ("sigma", e.sigma, &e.sigma_exact),
        ] {
            line(k, num(v));
            if let Some(x) = exact {
                line(&format!("{k}_exact"), format!("\"{x}\""));
            }
        }
    }
    if let Some((lo, hi)) = r.theta_window {
        line("theta_window", format!("[{}, {}]", num(lo), num(hi)));
    }
    if let Some(c) = r.scaling_class {
        line("scaling_p", num(r.scaling_p.unwrap_or(f64::NAN)));
        line("scaling_class", format!("\"{c:?}\""));
    }
    if let Some(id) = &r.identities {
        line("sigma_identity_defect", num(id.sigma_defect));
        line("holder_identity_defect", num(id.holder_defect));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(args: &[&str]) -> (Result<()>, String) {
        let cli = Cli::try_parse_from(std::iter::once("smag").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let res = execute(&cli.command, &mut buf);
        (res, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn check_regime_prints_exponents() {
        let (res, text) = exec(&["check-regime", "--d", "3", "--alpha", "1", "--beta", "1"]);
        res.unwrap();
        assert!(text.contains("\np = 3\n"), "{text}");
        assert!(text.contains("\nq = 4.5\n"));
        assert!(text.contains("mild_admissible = true"));
        assert!(text.contains("sigma_exact = \"1/6\""));
        let parsed: toml::Value = toml::from_str(&text).unwrap();
        assert_eq!(parsed["q"].as_float(), Some(4.5));
    }

    #[test]
    fn bad_arguments_exit_with_one() {
        assert_eq!(cli_main(["smag", "frobnicate"]), 1);
        assert_eq!(cli_main(["smag", "check-regime", "--d", "3", "--alpha", "x", "--beta", "1"]), 1);
        assert_eq!(cli_main(["smag", "norms", "--checkpoint", "/nonexistent/ck"]), 3);
        assert_eq!(cli_main(["smag", "--help"]), 0);
    }
}
