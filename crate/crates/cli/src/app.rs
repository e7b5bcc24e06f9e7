//! Argument handling and the check commands.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use explorer::{check_lower, check_upper, count_histories, BudgetExceeded, Config};
use opacity::{check_history_ddo, check_history_durable_opacity, check_opacity_execution, check_wellformed, fig4, History};
use pmdk_core::Mutation;
use pmem_sim::Model;
use stm_concurrent::Algo;

use crate::fixtures;
use crate::trace::{emit_trace, parse_trace, records_from_actions, Trace};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "cli", about = "Bounded checks of persistent transactional memory implementations")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a check.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum What {
    /// Every produced history is a DDTMS history.
    Upper,
    /// Every sequential DDTMS history is produced.
    Lower,
    /// Dynamic durable opacity of a trace or of the fig4 fixtures.
    Opacity,
    /// Well-formedness of a trace.
    Wf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Fixture {
    Fig4,
}

#[derive(clap::Args, Debug)]
struct CheckArgs {
    what: What,
    #[arg(long = "impl", default_value = "pmdk-tml", value_parser = parse_algo)]
    algo: Algo,
    #[arg(long, default_value = "psc", value_parser = parse_model)]
    model: Model,
    #[arg(long, default_value_t = 2)]
    txns: usize,
    #[arg(long, default_value_t = 2)]
    locs: usize,
    #[arg(long, default_value_t = 2)]
    vals: usize,
    #[arg(long, default_value_t = 2)]
    buf: usize,
    #[arg(long, default_value_t = 1)]
    crashes: usize,
    /// Reads, writes and allocations per transaction.
    #[arg(long, default_value_t = 2)]
    ops: usize,
    /// Cut runs in which an operation retries more often than this.
    #[arg(long)]
    retry_bound: Option<u16>,
    /// Accepted for compatibility; there is no partial-order reduction.
    #[arg(long)]
    por: bool,
    /// Allocation may return any free location.
    #[arg(long)]
    branch_alloc: bool,
    /// `--txns` bounds the whole run instead of each era.
    #[arg(long)]
    total_txns: bool,
    #[arg(long, value_parser = parse_mutation)]
    mutate: Option<Mutation>,
    /// Where to write the counterexample or unproducible history.
    #[arg(long)]
    emit_traces: Option<PathBuf>,
    #[arg(long, value_enum)]
    fixtures: Option<Fixture>,
    /// Trace file to check.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000_000)]
    max_states: usize,
    /// Skip counting the distinct histories of an upper-bound run.
    #[arg(long)]
    no_count: bool,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse()
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse()
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Usage, budget and input errors.
struct Failure(String);

impl From<BudgetExceeded> for Failure {
    fn from(e: BudgetExceeded) -> Self {
        Failure(e.to_string())
    }
}

/// Run with `args` (program name first), writing the report to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    let Cmd::Check(c) = args.cmd;
    let r = match c.what {
        What::Upper => upper(&c, out),
        What::Lower => lower(&c, out),
        What::Opacity => opacity(&c, out),
        What::Wf => wf(&c, out),
    };
    match r {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(out, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn config(c: &CheckArgs) -> Config {
    Config {
        txns: c.txns,
        per_era: !c.total_txns,
        locs: c.locs,
        vals: c.vals,
        buf: c.buf,
        crashes: c.crashes,
        ops: c.ops,
        retry_bound: c.retry_bound,
        branch_alloc: c.branch_alloc,
        mutation: c.mutate,
        max_states: c.max_states,
        ..Config::new(c.algo, c.model)
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure(e.to_string())
}

fn write_trace(path: &Path, t: &explorer::Trace) -> Result<(), Failure> {
    fs::write(path, emit_trace(&records_from_actions(&t.actions, t.fault))).map_err(io)
}

fn verdict(out: &mut dyn Write, pass: bool) -> Result<i32, Failure> {
    writeln!(out, "verdict: {}", if pass { "pass" } else { "FAIL" }).map_err(io)?;
    Ok(if pass { EXIT_PASS } else { EXIT_VIOLATION })
}

fn upper(c: &CheckArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = config(c);
    if c.por {
        writeln!(out, "note: --por has no effect, the search is unreduced").map_err(io)?;
    }
    let start = Instant::now();
    let r = check_upper(&cfg)?;
    writeln!(out, "check upper: {cfg}").map_err(io)?;
    writeln!(out, "states explored: {}", r.states).map_err(io)?;
    writeln!(out, "transitions: {}", r.transitions).map_err(io)?;
    if !c.no_count {
        let (n, _) = count_histories(&cfg)?;
        writeln!(out, "histories checked: {n}").map_err(io)?;
    }
    writeln!(out, "rejected histories: {} ({} transitions)", r.rejected.len(), r.violations).map_err(io)?;
    writeln!(out, "faults: {} ({} not justified by DDTMS)", r.faults, r.unjustified_faults).map_err(io)?;
    writeln!(out, "wall time: {:.3}s", start.elapsed().as_secs_f64()).map_err(io)?;
    if let Some(t) = r.counterexamples.first() {
        let path = c.emit_traces.clone().unwrap_or_else(|| "counterexample.jsonl".into());
        write_trace(&path, t)?;
        let ddo = check_history_ddo(&opacity::ordered_history(&t.actions)).ok();
        writeln!(out, "shortest counterexample ({} moves, DDO: {ddo}) written to {}", t.moves.len(), path.display())
            .map_err(io)?;
        writeln!(out, "{t}").map_err(io)?;
    }
    verdict(out, r.violations == 0)
}

fn lower(c: &CheckArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = config(c);
    let start = Instant::now();
    let r = check_lower(&cfg)?;
    writeln!(out, "check lower: {}", r.config).map_err(io)?;
    writeln!(out, "states explored: {}", r.states).map_err(io)?;
    writeln!(out, "histories checked: {}", r.histories).map_err(io)?;
    writeln!(out, "unproducible: {}", r.unproducible.len()).map_err(io)?;
    writeln!(out, "wall time: {:.3}s", start.elapsed().as_secs_f64()).map_err(io)?;
    if let Some(h) = r.unproducible.first() {
        let path = c.emit_traces.clone().unwrap_or_else(|| "unproducible.jsonl".into());
        fs::write(&path, emit_trace(&records_from_actions(h, false))).map_err(io)?;
        writeln!(out, "first unproducible history written to {}", path.display()).map_err(io)?;
    }
    verdict(out, r.passed())
}

fn load(path: &Path) -> Result<Trace, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "✓"
    } else {
        "✗"
    }
}

fn history_report(out: &mut dyn Write, t: &Trace) -> Result<bool, Failure> {
    let h: History = t.history();
    let dur = check_history_durable_opacity(&h);
    let ddo = check_history_ddo(&h);
    let acc = ddtms::accepts_history(&t.actions());
    let prefix = |v: &opacity::Verdict| v.failing_prefix.map(|n| format!(" (first failing prefix: {n} events)")).unwrap_or_default();
    writeln!(out, "durably opaque: {}{}", mark(dur.ok()), prefix(&dur)).map_err(io)?;
    writeln!(out, "dynamically durably opaque: {}{}", mark(ddo.ok()), prefix(&ddo)).map_err(io)?;
    writeln!(out, "DDTMS: {}", if acc.strict { "accepted" } else if acc.accepted { "accepted after a fault" } else { "rejected" })
        .map_err(io)?;
    Ok(ddo.ok())
}

fn opacity(c: &CheckArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let start = Instant::now();
    let pass = match (c.fixtures, &c.history) {
        (Some(Fixture::Fig4), None) => {
            let mut all = true;
            for (lit, (name, text)) in fig4().iter().zip(fixtures::FIG4) {
                let got = check_opacity_execution(&lit.graph);
                let why = got.as_ref().err().map(|a| format!(" ({a})")).unwrap_or_default();
                let t = parse_trace(text).map_err(|e| Failure(format!("{name}: {e}")))?;
                let hist = check_history_durable_opacity(&t.history()).ok();
                writeln!(out, "{}: {}{why}  history: {}", &name[4..], mark(got.is_ok()), mark(hist)).map_err(io)?;
                all &= got == lit.expect && hist == lit.expect.is_ok();
            }
            all
        }
        (None, Some(p)) => history_report(out, &load(p)?)?,
        _ => return Err(Failure("check opacity needs exactly one of --fixtures fig4 and --history PATH".into())),
    };
    writeln!(out, "wall time: {:.3}s", start.elapsed().as_secs_f64()).map_err(io)?;
    verdict(out, pass)
}

fn wf(c: &CheckArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let traces: Vec<(String, Trace)> = match (c.fixtures, &c.history) {
        (Some(Fixture::Fig4), None) => fixtures::FIG4
            .iter()
            .map(|(n, t)| parse_trace(t).map(|t| (n.to_string(), t)).map_err(|e| Failure(format!("{n}: {e}"))))
            .collect::<Result<_, _>>()?,
        (None, Some(p)) => vec![(p.display().to_string(), load(p)?)],
        _ => return Err(Failure("check wf needs exactly one of --fixtures fig4 and --history PATH".into())),
    };
    let mut pass = true;
    for (name, t) in traces {
        let v = check_wellformed(&t.history());
        writeln!(out, "{name}: {}", if v.is_empty() { "well-formed".to_string() } else { format!("{} violation(s)", v.len()) })
            .map_err(io)?;
        for x in &v {
            writeln!(out, "  {}: {}", x.clause, x.detail).map_err(io)?;
        }
        pass &= v.is_empty();
    }
    verdict(out, pass)
}
