//! Front end behind the `thinfilm` binary: loads a configuration, runs one
//! command and writes its artifacts, `manifest.json` and, on failure,
//! `errors.json` into the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thinfilm::config::Config;
use thinfilm::manifest::{file_hash, RunManifest};
use thinfilm::Error;

mod commands;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Evolve the initial data and write the time series.
    Run,
    /// Evaluate the growth criteria of the initial data.
    Criteria,
    /// Run, then apply the configured monitors.
    Diagnose,
    /// Run the configured experiment.
    Sweep,
    /// Run the configured experiment and check its acceptance properties.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Criteria => "criteria",
            Command::Diagnose => "diagnose",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    /// A TOML configuration, or a `manifest.json` to replay.
    pub config: PathBuf,
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps; 0 uses every core.
    pub workers: usize,
    /// Seed of the randomized corpus; replays reuse the recorded one.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEntry {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorEntry {
    fn from(e: &Error) -> Self {
        ErrorEntry {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

/// What a command left behind.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub out_dir: PathBuf,
    pub errors: Vec<ErrorEntry>,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub(crate) enum Failure {
    Config(Error),
    Run(Vec<ErrorEntry>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(vec![ErrorEntry::from(&e)])
    }
}

pub(crate) struct Loaded {
    pub cfg: Config,
    pub seed: u64,
}

fn load(opts: &Options) -> Result<Loaded, Error> {
    let is_manifest = opts.config.extension().is_some_and(|e| e == "json");
    if !is_manifest {
        return Ok(Loaded {
            cfg: Config::load(&opts.config)?,
            seed: opts.seed.unwrap_or(0),
        });
    }
    let m = RunManifest::read(&opts.config)?;
    let cfg: Config = serde_json::from_value(m.config).map_err(|e| Error::Parse(format!("manifest config: {e}")))?;
    cfg.validate()?;
    let seed = opts
        .seed
        .or_else(|| m.input.get("seed").and_then(|v| v.as_u64()))
        .unwrap_or(0);
    Ok(Loaded { cfg, seed })
}

/// Descriptor hashed into the manifest next to the configuration.
pub(crate) fn input_descriptor(cfg: &Config, seed: u64) -> Result<serde_json::Value, Error> {
    let mut v = json!({ "initial_data": cfg.initial_data, "seed": seed });
    if let thinfilm::initial_data::InitialData::File { path } = &cfg.initial_data {
        v["file_sha256"] = file_hash(path)?.into();
    }
    Ok(v)
}

fn write_errors(dir: &Path, command: Command, code: i32, errors: &[ErrorEntry]) {
    let doc = json!({ "command": command.name(), "exit_code": code, "errors": errors });
    let _ = std::fs::create_dir_all(dir);
    let text = serde_json::to_string_pretty(&doc).unwrap_or_default();
    if let Err(e) = std::fs::write(dir.join("errors.json"), text + "\n") {
        eprintln!("cannot write errors.json: {e}");
    }
}

/// Runs `command`, writing artifacts under the output directory.
pub fn execute(command: Command, opts: &Options) -> Outcome {
    let loaded = load(opts);
    let out_dir = match (&opts.out, &loaded) {
        (Some(dir), _) => dir.clone(),
        (None, Ok(l)) => l.cfg.output.dir.clone(),
        (None, Err(_)) => PathBuf::from("out"),
    };
    let result = match loaded {
        Ok(l) => {
            // a stale errors.json from an earlier attempt would be misleading
            let _ = std::fs::remove_file(out_dir.join("errors.json"));
            commands::dispatch(command, &l, &out_dir, opts.workers)
        }
        Err(e) => Err(Failure::Config(e)),
    };
    let (code, errors) = match result {
        Ok(()) => (EXIT_OK, Vec::new()),
        Err(Failure::Config(e)) => (EXIT_CONFIG_ERROR, vec![ErrorEntry::from(&e)]),
        Err(Failure::Run(errs)) => (EXIT_RUN_FAILURE, errs),
    };
    if code != EXIT_OK {
        write_errors(&out_dir, command, code, &errors);
    }
    Outcome { code, out_dir, errors }
}
