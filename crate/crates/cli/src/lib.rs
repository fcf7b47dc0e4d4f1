//! Command-line front end: parses a run, consults the result cache, executes
//! the library computation and writes the report, its artifacts and a
//! metadata sidecar.
//!
//! Exit status is 0 on success, 2 on a typed domain error (written to stderr
//! as `{"error": <name>, "message": ...}`) and 1 on usage errors.

pub mod args;
pub mod cache;
pub mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use hyperdyn::dynsys::{parse_system, SystemSpec};
use serde::Serialize;
use serde_json::json;

use crate::args::{Cli, Command};
use crate::cache::{Cache, Entry, Lookup};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] hyperdyn::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything that determines a run's results.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub version: &'static str,
    pub system: Option<PathBuf>,
    /// Normalized system definition.
    pub system_text: Option<String>,
    /// SHA-256 of every input file, in argument order.
    pub inputs: Vec<(PathBuf, String)>,
    pub seed: u64,
    pub command: Command,
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a RunConfig,
    result: &'a serde_json::Value,
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn json_line(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("JSON values serialize")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(CliError::Domain(e)) => {
            let _ = writeln!(stderr, "{}", json_line(&json!({"error": e.name(), "message": e.to_string()})));
            2
        }
        Err(e @ CliError::Usage(_)) => {
            let _ = writeln!(stderr, "error: {e}\n\nRun with --help for usage.");
            1
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn config(cli: &Cli) -> Result<(RunConfig, Option<hyperdyn::SmoothMap2D>), CliError> {
    let mut system_text = None;
    let mut map = None;
    if cli.command.needs_system() {
        let path = cli.system.as_ref().ok_or_else(|| CliError::Usage("this command needs --system".into()))?;
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let spec = parse_system(&text)?;
        let built = spec.build()?;
        system_text = Some(SystemSpec::from_map(&built).to_text());
        map = Some(built);
    }
    let mut inputs = Vec::new();
    for p in cli.command.inputs() {
        let bytes = fs::read(&p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
        inputs.push((p, cache::digest(&bytes)));
    }
    let cfg = RunConfig {
        version: env!("CARGO_PKG_VERSION"),
        system: if cli.command.needs_system() { cli.system.clone() } else { None },
        system_text,
        inputs,
        seed: cli.seed,
        command: cli.command.clone(),
    };
    Ok((cfg, map))
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let started = unix_seconds();
    let clock = Instant::now();
    let (cfg, map) = config(cli)?;
    let key = cache::key(&serde_json::to_value(&cfg).expect("config serializes"));
    let store = Cache::new(cli.out.join("cache"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cli.workers)))?;
    let compute = || pool.install(|| commands::execute(&cli.command, map.as_ref(), cli.seed));

    let (entry, status): (Entry, &str) = if cli.no_cache {
        (compute()?, "bypass")
    } else {
        match store.load(&key) {
            Lookup::Hit(e) => (e, "hit"),
            Lookup::Miss => {
                let e = compute()?;
                store.store(&key, &e)?;
                (e, "miss")
            }
            Lookup::Corrupt(reason) => {
                let _ = writeln!(stderr, "{}", json_line(&json!({"warning": "CorruptCache", "key": key, "reason": reason})));
                let e = compute()?;
                store.store(&key, &e)?;
                (e, "recomputed")
            }
        }
    };

    let stem = cli.command.stem();
    fs::create_dir_all(&cli.out)?;
    let mut body = serde_json::to_string_pretty(&Report { config: &cfg, result: &entry.result }).expect("report serializes");
    body.push('\n');
    fs::write(cli.out.join(format!("{stem}.json")), &body)?;
    let mut written = Vec::new();
    for (name, contents) in &entry.artifacts {
        let file = format!("{stem}.{name}");
        fs::write(cli.out.join(&file), contents)?;
        written.push(file);
    }
    let meta = json!({
        "key": key,
        "cache": status,
        "workers": pool.current_num_threads(),
        "started_unix": started,
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "artifacts": written,
    });
    fs::write(cli.out.join(format!("{stem}.meta.json")), serde_json::to_string_pretty(&meta).expect("serializes") + "\n")?;
    stdout.write_all(body.as_bytes())?;
    Ok(())
}
