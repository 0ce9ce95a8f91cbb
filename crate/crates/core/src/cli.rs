//! Command-line front end. `run` returns the process exit code so the whole
//! interface is testable in-process.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

use crate::dist::{CondFamily, ProbTable};
use crate::error::{Error, Result};
use crate::fixtures::{self, FIXTURES};
use crate::io::{load_table, read_csv, read_json, write_csv, write_json};
use crate::measures::{all_measures, MeasureKind, MeasureReport};
use crate::oracle::{search_counterexample, verify, Scenario, Target, TrialConfig, VerificationReport};
use crate::par::ExecMode;
use crate::regress::{cochran_path, default_grid, local_poly_deriv, Column, LinearPathModel, SampleFrame, DEFAULT_BANDWIDTH, DEFAULT_DEGREE};
use crate::sign::DEFAULT_TOL;
use crate::transitivity::{check_all, check_rule, detect_simpson, detect_simpson_joint, propagate, RuleId, SignKnowledge, SimpsonReport, TheoremVerdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_RULE: i32 = 3;
pub const EXIT_COUNTEREXAMPLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "assoc-sign", version, about = "Association signs, transitivity rules and their verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All four association measures for one ordered pair.
    Measures {
        #[command(flatten)]
        source: Source,
        /// `DRIVER,RESPONSE`.
        #[arg(long)]
        pair: String,
        #[arg(long)]
        given: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one rule checker, or every rule with `auto`.
    Transit {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "auto")]
        rule: String,
        #[command(flatten)]
        common: Common,
    },
    /// Reversal detection from a joint table or from `(X, Z) | Y` slices.
    Simpson {
        #[command(flatten)]
        source: Source,
        /// JSON conditional family with target `[X, Z]` and given `[Y]`.
        #[arg(long, conflicts_with_all = ["fixture", "input"])]
        slices: Option<PathBuf>,
        /// Table over `Y` used to collapse the slices.
        #[arg(long, requires = "slices")]
        py: Option<PathBuf>,
        #[arg(long, default_value = "density")]
        measure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Sign propagation from declared knowledge (JSON).
    Propagate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Seeded soundness sweep for a rule or `LEMMA1`, or a counterexample
    /// search for a weakened rule such as `T3-dropped-premise1`.
    Verify {
        #[arg(long)]
        rule: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Level counts per variable, upper bounds unless `--fixed-dims`.
        #[arg(long, default_value = "3,3,3")]
        dims: String,
        #[arg(long)]
        fixed_dims: bool,
        #[arg(long, default_value_t = 200_000)]
        max_rejects: usize,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Local polynomial estimate of `E(Z|y)` and its derivative from samples.
    Deriv {
        /// CSV with columns `y` and `z` (and `x` for `--path`).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = DEFAULT_DEGREE)]
        degree: usize,
        /// `LO:HI:POINTS`; defaults to 101 points over the central 95% of `y`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Write the curve here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also fit the linear path models and report the slope sign.
        #[arg(long)]
        path: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Built-in example tables.
    Fixtures {
        #[arg(long, conflicts_with = "show")]
        list: bool,
        /// Fixture name such as `SMOKE` or `EX1:0.3`.
        #[arg(long)]
        show: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Args)]
pub struct Source {
    #[arg(long, conflicts_with = "input")]
    pub fixture: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// `VAR=v1,v2,...` numeric scores for a variable's levels.
    #[arg(long = "scores")]
    pub scores: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Emit the JSON report instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Source {
    fn load(&self) -> Result<ProbTable> {
        let p = match (&self.fixture, &self.input) {
            (Some(f), None) => fixtures::load(f)?,
            (None, Some(path)) => match self.format {
                Some(Format::Csv) => read_csv(std::fs::File::open(path)?)?,
                Some(Format::Json) => read_json(std::fs::File::open(path)?)?,
                None => load_table(&path.to_string_lossy())?,
            },
            _ => return Err(Error::Invalid("give exactly one of --fixture or --input".into())),
        };
        self.scores.iter().try_fold(p, |p, spec| {
            let (name, vals) = spec.split_once('=').ok_or_else(|| Error::Parse(format!("--scores expects VAR=v1,v2,..., got `{spec}`")))?;
            let vals = vals
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad score `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            p.with_scores(name, vals)
        })
    }
}

/// Parse `args` (program name first) and run, writing reports to `out` and
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        // a closed downstream pipe is not an input error
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

fn split_pair(pair: &str) -> Result<(String, String)> {
    let (a, b) = pair.split_once(',').ok_or_else(|| Error::Parse(format!("--pair expects A,B, got `{pair}`")))?;
    Ok((a.trim().to_string(), b.trim().to_string()))
}

fn fmt_values(v: &[Option<f64>]) -> String {
    let cells: Vec<String> = v.iter().map(|x| x.map_or("undef".into(), |x| format!("{x:.6}"))).collect();
    format!("[{}]", cells.join(", "))
}

fn print_measure(out: &mut dyn Write, r: &MeasureReport) -> Result<()> {
    let given = if r.conditioning.is_empty() { String::new() } else { format!(" | {}", r.conditioning.join(",")) };
    writeln!(out, "{}({} on {}{}): {}", r.kind, r.response, r.driver, given, r.sign)?;
    writeln!(out, "  values {:?}: {}", r.shape, fmt_values(&r.grid))?;
    if r.kind == MeasureKind::Density {
        let ors: Vec<Option<f64>> = r.grid.iter().map(|v| v.map(f64::exp)).collect();
        writeln!(out, "  odds ratios: {}", fmt_values(&ors))?;
    }
    if let Some(c) = &r.correlation {
        writeln!(out, "  correlation: {}", fmt_values(c))?;
    }
    Ok(())
}

fn parse_rule(s: &str) -> Result<RuleId> {
    s.parse()
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Measures { source, pair, given, common } => {
            let p = source.load()?;
            let (driver, response) = split_pair(&pair)?;
            let reports = all_measures(&p, &driver, &response, given.as_deref(), common.tol)?;
            for r in &reports {
                if r.undefined == r.grid.len() {
                    writeln!(err, "warning: {}({} on {}) has no defined entry; reported as {}", r.kind, r.response, r.driver, r.sign)?;
                }
            }
            if common.json {
                emit_json(out, &reports)?;
            } else {
                for r in &reports {
                    print_measure(out, r)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Transit { source, rule, common } => {
            let p = source.load()?;
            let verdicts: Vec<TheoremVerdict> = if rule.eq_ignore_ascii_case("auto") {
                check_all(&p, common.tol)?
            } else {
                vec![check_rule(parse_rule(&rule)?, &p, common.tol)?]
            };
            if common.json {
                emit_json(out, &verdicts)?;
            } else {
                for v in &verdicts {
                    write!(out, "{v}")?;
                }
            }
            let fired = verdicts.iter().any(|v| v.fires);
            if !fired && !common.json {
                writeln!(out, "no rule fires")?;
            }
            Ok(if fired { EXIT_OK } else { EXIT_NO_RULE })
        }
        Command::Simpson { source, slices, py, measure, common } => {
            let kind: MeasureKind = measure.parse()?;
            let report = match slices {
                Some(path) => {
                    let fam: CondFamily = serde_json::from_reader(std::fs::File::open(path)?)?;
                    let py = py.map(|p| load_table(&p.to_string_lossy())).transpose()?;
                    detect_simpson(&fam, py.as_ref(), kind, common.tol)?
                }
                None => detect_simpson_joint(&source.load()?, kind, common.tol)?,
            };
            if common.json {
                emit_json(out, &report)?;
            } else {
                print_simpson(out, &report)?;
            }
            Ok(EXIT_OK)
        }
        Command::Propagate { input, common } => {
            let k: SignKnowledge = serde_json::from_reader(std::fs::File::open(input)?)?;
            let prop = propagate(&k)?;
            if common.json {
                emit_json(out, &prop)?;
            } else {
                for v in prop.verdicts.iter().filter(|v| v.fires) {
                    write!(out, "{v}")?;
                }
                for n in &prop.notes {
                    writeln!(out, "note: {n}")?;
                }
            }
            let any = prop.conclusions().next().is_some();
            if !any && !common.json {
                writeln!(out, "no rule fires")?;
            }
            Ok(if any { EXIT_OK } else { EXIT_NO_RULE })
        }
        Command::Verify { rule, trials, seed, dims, fixed_dims, max_rejects, sequential, common } => {
            let dims = dims
                .split(',')
                .map(|d| d.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad --dims entry `{d}`"))))
                .collect::<Result<Vec<_>>>()?;
            let cfg = TrialConfig {
                seed,
                trials,
                dims,
                vary_dims: !fixed_dims,
                max_rejects,
                tol: common.tol,
                mode: if sequential { ExecMode::Sequential } else { ExecMode::Parallel },
            };
            let report = match rule.parse::<Scenario>() {
                Ok(sc) => search_counterexample(sc, &cfg)?,
                Err(_) => verify(rule.parse::<Target>()?, &cfg)?,
            };
            if common.json {
                emit_json(out, &report)?;
            } else {
                writeln!(out, "{report}")?;
            }
            if report.passed {
                return Ok(EXIT_OK);
            }
            print_replay(err, &report)?;
            Ok(EXIT_COUNTEREXAMPLE)
        }
        Command::Deriv { input, bandwidth, degree, grid, output, path, common } => {
            let frame = SampleFrame::read_csv(std::fs::File::open(input)?)?;
            let yz = frame.rows(&[Column::Y, Column::Z]);
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => default_grid(&yz[0], 101)?,
            };
            let curve = local_poly_deriv(&yz[0], &yz[1], &grid, bandwidth, degree, ExecMode::Parallel)?;
            let sign = curve.derivative_sign(common.tol);
            let summary = match sign {
                Some(s) => format!("derivative sign: {s}"),
                None => "derivative sign: undefined (no grid point has enough local support)".into(),
            };
            let flagged = curve.undefined_points();
            let mut lines = vec![summary];
            if flagged > 0 {
                lines.push(format!("{flagged} of {} grid points undefined (effective weight or local rank too low)", curve.grid.len()));
            }
            if path {
                let v = cochran_path(&LinearPathModel::fit(&frame)?, Some(&curve), common.tol)?;
                lines.push(format!("linear path: {}", v.reason));
            }
            match output {
                Some(p) => {
                    curve.write_csv(std::fs::File::create(p)?)?;
                    for l in &lines {
                        writeln!(out, "{l}")?;
                    }
                }
                None if common.json => emit_json(out, &curve)?,
                None => {
                    curve.write_csv(&mut *out)?;
                    for l in &lines {
                        writeln!(err, "{l}")?;
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Fixtures { list, show, format } => {
            if let Some(name) = show {
                let p = fixtures::load(&name)?;
                match format {
                    Format::Csv => write_csv(&p, &mut *out)?,
                    Format::Json => {
                        write_json(&p, &mut *out)?;
                        writeln!(out)?;
                    }
                }
            } else if list {
                for f in FIXTURES.iter() {
                    writeln!(out, "{:<6} {}\n       {}", f.name, f.provenance, f.description)?;
                }
            } else {
                return Err(Error::Invalid("fixtures needs --list or --show NAME".into()));
            }
            Ok(EXIT_OK)
        }
    }
}

fn print_simpson(out: &mut dyn Write, r: &SimpsonReport) -> Result<()> {
    writeln!(out, "{}({} on {}) stratified by {}", r.measure, r.response, r.driver, r.stratifier)?;
    for (i, (s, v)) in r.slice_signs.iter().zip(&r.slice_values).enumerate() {
        let label = s.map_or("empty".to_string(), |s| s.to_string());
        writeln!(out, "  slice {i}: {label} {}", fmt_values(v))?;
    }
    match (&r.marginal_sign, &r.marginal_values) {
        (Some(s), Some(v)) => writeln!(out, "  marginal: {s} {}", fmt_values(v))?,
        _ => writeln!(out, "  marginal: not computed (no P(Y) given)")?,
    }
    writeln!(out, "reversal: {}", r.reversal)?;
    if r.certificate.issued {
        writeln!(out, "certificate: no reversal possible ({})", r.certificate.reason)?;
    } else {
        writeln!(out, "certificate: not issued ({})", r.certificate.reason)?;
    }
    for w in &r.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

fn print_replay(err: &mut dyn Write, r: &VerificationReport) -> Result<()> {
    for c in r.counterexamples.iter().take(10) {
        match &c.fixture {
            Some(_) => writeln!(err, "counterexample from seed table {}", c.detail)?,
            None => writeln!(err, "counterexample: replay with --seed {} trial {}: {}", r.seed, c.trial, c.detail)?,
        }
    }
    if r.counterexamples.len() > 10 {
        writeln!(err, "... {} more (use --json for all)", r.counterexamples.len() - 10)?;
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("--grid expects LO:HI:POINTS, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    if n < 2 || !(hi > lo) {
        return Err(bad());
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("assoc-sign").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn grid_spec() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&["measures", "--pair", "X,Z"]).0, EXIT_INPUT);
        assert_eq!(call(&["bogus"]).0, EXIT_INPUT);
        assert_eq!(call(&["verify", "--rule", "T1"]).0, EXIT_INPUT);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }
}
