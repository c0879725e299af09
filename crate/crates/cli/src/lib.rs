//! `neuroauth` command line: enrollment, guarded access (optionally with a
//! two-factor token), reset mode, intrusion log inspection, token export and
//! the experiment replication harness.
//!
//! Exit status: 0 granted/success, 1 denied, 2 locked or intruder declared,
//! 3 usage or I/O error.

pub mod prompt;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use neuroauth::experiments::replicate_experiments;
use neuroauth::guard::{evaluate_attempt, Credential, GuardConfig, GuardDecision, Layer};
use neuroauth::template::{PasswordCheck, Template};
use neuroauth::trainer::{DEFAULT_EPSILON, DEFAULT_ETA, DEFAULT_LAMBDA, DEFAULT_MAX_EPOCHS};
use neuroauth::vault::log::format_record;
use neuroauth::vault::two_factor::{combine, ServerPart, TokenPart};
use neuroauth::vault::{
    load_profile, read_log, reset_profile, save_profile, NewPasswords, Profile, ProfileLock, ResetCredentials, Role,
};
use neuroauth::TrainingConfig;

use crate::prompt::{Entries, TimedEntry};

pub const EXIT_GRANTED: i32 = 0;
pub const EXIT_DENIED: i32 = 1;
pub const EXIT_LOCKED: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("no terminal available; pass --password (and --time-ms) for scripted use")]
    NoTerminal,
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] neuroauth::Error),
}

#[derive(Debug, Parser)]
#[command(name = "neuroauth", version, about = "Neural-network password authentication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a profile: resource password(s) then the reset password.
    Enroll(EnrollArgs),
    /// Resource mode: pass the four guard layers.
    Access(AccessArgs),
    /// Reset mode: re-enroll after giving every current password.
    Reset(ResetArgs),
    /// Reset mode: print the intrusion log after giving every current password.
    Log(LogArgs),
    /// Move one template's hidden layer to a token file.
    ExportToken(ExportArgs),
    /// Re-run the two published experiments and write CSV results.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
struct Scripted {
    /// Password, in prompt order (repeatable). Skips the terminal prompt.
    #[arg(long = "password", value_name = "S")]
    passwords: Vec<String>,
    /// Insertion time for the matching --password (repeatable).
    #[arg(long = "time-ms", value_name = "N")]
    times: Vec<u64>,
}

#[derive(Debug, Args)]
struct EnrollArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Separate service-provider and service-user passwords.
    #[arg(long)]
    two_passwords: bool,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    max_epochs: usize,
    /// Random when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = neuroauth::guard::DEFAULT_MAX_TRIALS)]
    max_trials: u32,
    /// Accepted typing time in milliseconds, `MIN,MAX`.
    #[arg(long, value_name = "MIN,MAX", value_parser = parse_window, conflicts_with = "no_time_layer")]
    time_window: Option<(u64, u64)>,
    #[arg(long)]
    no_time_layer: bool,
    /// Intrusion log location; defaults to `<profile>.log` beside the profile.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    scripted: Scripted,
}

#[derive(Debug, Args)]
struct AccessArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Server half of a split template (two-factor mode).
    #[arg(long, requires = "token")]
    server: Option<PathBuf>,
    /// Token holding the hidden layer (two-factor mode).
    #[arg(long, requires = "server")]
    token: Option<PathBuf>,
    #[command(flatten)]
    scripted: Scripted,
}

#[derive(Debug, Args)]
struct ResetArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Replace the passwords instead of retraining the current ones.
    #[arg(long)]
    new_passwords: bool,
    /// Replacement password in provider/user/reset order (repeatable).
    #[arg(long = "new-password", value_name = "S", requires = "new_passwords")]
    new_password: Vec<String>,
    /// Random when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Token for a split template, `ROLE=PATH` (repeatable).
    #[arg(long = "token", value_name = "ROLE=PATH", value_parser = parse_token_arg)]
    tokens: Vec<(Role, PathBuf)>,
    #[command(flatten)]
    scripted: Scripted,
}

#[derive(Debug, Args)]
struct LogArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long = "token", value_name = "ROLE=PATH", value_parser = parse_token_arg)]
    tokens: Vec<(Role, PathBuf)>,
    #[command(flatten)]
    scripted: Scripted,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_parser = parse_role)]
    which: Role,
    #[arg(long)]
    token_out: PathBuf,
    #[arg(long)]
    server_out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_window(text: &str) -> Result<(u64, u64), String> {
    let (min, max) = text.split_once(',').ok_or("expected MIN,MAX")?;
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(min)?, parse(max)?))
}

fn parse_role(text: &str) -> Result<Role, String> {
    text.parse()
}

fn parse_token_arg(text: &str) -> Result<(Role, PathBuf), String> {
    let (role, path) = text.split_once('=').ok_or("expected ROLE=PATH")?;
    Ok((role.parse()?, PathBuf::from(path)))
}

/// Exit status for a guard decision.
pub fn exit_status(decision: &GuardDecision) -> i32 {
    if decision.is_granted() {
        EXIT_GRANTED
    } else if decision.intruder_declared || decision.failed_layer == Some(Layer::Trail) {
        EXIT_LOCKED
    } else {
        EXIT_DENIED
    }
}

fn random_seed() -> u64 {
    rand::random()
}

fn role_prompt(role: Role) -> String {
    format!("{role} password: ")
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_GRANTED };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Enroll(args) => enroll(args, out),
        Command::Access(args) => access(args, out, err),
        Command::Reset(args) => reset(args, out),
        Command::Log(args) => show_log(args, out),
        Command::ExportToken(args) => export_token(args, out),
        Command::Replicate(args) => replicate(args, out),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Core(neuroauth::Error::ResetDenied)) => {
            let _ = writeln!(err, "reset denied");
            EXIT_DENIED
        }
        Err(e) => {
            let _ = writeln!(err, "neuroauth: {e}");
            EXIT_ERROR
        }
    }
}

fn enroll(args: EnrollArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if args.profile.exists() {
        return Err(CliError::Usage(format!("{} already exists", args.profile.display())));
    }
    let _lock = ProfileLock::acquire(&args.profile)?;
    let guard = GuardConfig {
        max_trials: args.max_trials,
        time_min_ms: args.time_window.map_or(neuroauth::guard::DEFAULT_TIME_MIN_MS, |w| w.0),
        time_max_ms: args.time_window.map_or(neuroauth::guard::DEFAULT_TIME_MAX_MS, |w| w.1),
        time_layer_enabled: !args.no_time_layer,
    };
    guard.validate()?;
    let config = TrainingConfig {
        eta: args.eta,
        epsilon: args.epsilon,
        max_epochs: args.max_epochs,
        seed: args.seed.unwrap_or_else(random_seed),
        lambda: args.lambda,
        ..TrainingConfig::default()
    };
    config.validate()?;

    let mut entries = Entries::scripted_or_terminal(&args.scripted.passwords, &args.scripted.times)?;
    let roles: &[Role] = if args.two_passwords {
        &[Role::Provider, Role::User]
    } else {
        &[Role::User]
    };
    let resources = roles
        .iter()
        .map(|&role| entries.next(&role_prompt(role)).map(|e| e.text))
        .collect::<Result<Vec<_>, _>>()?;
    let reset = entries.next(&role_prompt(Role::Reset))?.text;
    entries.finish()?;

    let log_path = args.log.unwrap_or_else(|| {
        let name = args
            .profile
            .file_name()
            .map_or_else(|| "profile".into(), |n| n.to_string_lossy().into_owned());
        PathBuf::from(format!("{name}.log"))
    });
    let refs: Vec<&str> = resources.iter().map(String::as_str).collect();
    let profile = Profile::enroll(&refs, &reset, &config, guard, log_path)?;
    save_profile(&profile, &args.profile)?;
    for (role, slot) in profile.slots() {
        let template = slot.resolve(None)?;
        let arch = template.architecture();
        writeln!(
            out,
            "enrolled {role}: {}/{}/1 network, {} epochs",
            arch.input_count,
            arch.hidden_count,
            template.meta().epochs
        )
        .map_err(io_err)?;
    }
    Ok(EXIT_GRANTED)
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn access(args: AccessArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let _lock = ProfileLock::acquire(&args.profile)?;
    let mut profile = load_profile(&args.profile)?;

    let templates: Vec<Template<f64>> = match (&args.server, &args.token) {
        (Some(server), Some(token)) => {
            vec![combine(&TokenPart::load(token)?, &ServerPart::load(server)?)?]
        }
        _ => profile
            .resource_templates
            .iter()
            .map(|slot| slot.resolve(None))
            .collect::<Result<_, _>>()
            .map_err(|e| match e {
                neuroauth::Error::MissingToken => {
                    CliError::Usage("profile template is split; use --server and --token".into())
                }
                other => other.into(),
            })?,
    };
    let roles: &[Role] = if templates.len() == 2 {
        &[Role::Provider, Role::User]
    } else {
        &[Role::User]
    };

    let mut entries = Entries::scripted_or_terminal(&args.scripted.passwords, &args.scripted.times)?;
    let attempt: Vec<Credential> = if profile.guard_state.locked && !entries.is_scripted() {
        // a seized profile does not accept password entry at all
        Vec::new()
    } else {
        let attempt = roles
            .iter()
            .map(|&role| {
                entries
                    .next(&role_prompt(role))
                    .map(|TimedEntry { text, insertion_ms }| Credential::new(text, insertion_ms))
            })
            .collect::<Result<Vec<_>, _>>()?;
        entries.finish()?;
        attempt
    };

    let checks: Vec<&dyn PasswordCheck<f64>> = templates.iter().map(|t| t as &dyn PasswordCheck<f64>).collect();
    let evaluation = evaluate_attempt(
        &profile.guard_state,
        &profile.guard_config,
        &checks,
        &attempt,
        Utc::now(),
    );
    profile.intrusion_log(&args.profile).append(&evaluation.records)?;
    profile.guard_state = evaluation.state;
    save_profile(&profile, &args.profile)?;

    let decision = evaluation.decision;
    match decision.failed_layer {
        None => writeln!(out, "access granted").map_err(io_err)?,
        Some(layer) => {
            writeln!(out, "access denied at {layer} layer").map_err(io_err)?;
            if decision.intruder_declared {
                writeln!(err, "intruder declared: profile locked; use reset mode").map_err(io_err)?;
            } else if layer == Layer::Trail {
                writeln!(err, "profile locked; use reset mode").map_err(io_err)?;
            }
        }
    }
    Ok(exit_status(&decision))
}

fn load_tokens(tokens: &[(Role, PathBuf)]) -> Result<std::collections::BTreeMap<Role, TokenPart>, CliError> {
    tokens
        .iter()
        .map(|(role, path)| Ok((*role, TokenPart::load(path)?)))
        .collect()
}

fn reset_credentials(
    profile: &Profile,
    entries: &mut Entries,
    tokens: &[(Role, PathBuf)],
) -> Result<ResetCredentials, CliError> {
    let mut next = |role: Role| {
        entries
            .next(&format!("current {}", role_prompt(role)))
            .map(|e| Credential::new(e.text, e.insertion_ms))
    };
    let provider = if profile.resource_templates.len() == 2 {
        Some(next(Role::Provider)?)
    } else {
        None
    };
    let user = next(Role::User)?;
    let reset = next(Role::Reset)?;
    let mut credentials = ResetCredentials::new(provider, user, reset);
    credentials.tokens = load_tokens(tokens)?;
    Ok(credentials)
}

fn reset(args: ResetArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let _lock = ProfileLock::acquire(&args.profile)?;
    let profile = load_profile(&args.profile)?;
    let mut entries = Entries::scripted_or_terminal(&args.scripted.passwords, &args.scripted.times)?;
    let credentials = reset_credentials(&profile, &mut entries, &args.tokens)?;
    entries.finish()?;

    let new_passwords = if args.new_passwords {
        let mut fresh = Entries::scripted_or_terminal(&args.new_password, &[])?;
        let provider = match &credentials.provider {
            Some(_) => Some(fresh.next(&format!("new {}", role_prompt(Role::Provider)))?.text),
            None => None,
        };
        let user = fresh.next(&format!("new {}", role_prompt(Role::User)))?.text;
        let reset = fresh.next(&format!("new {}", role_prompt(Role::Reset)))?.text;
        fresh.finish()?;
        Some(NewPasswords { provider, user, reset })
    } else {
        None
    };

    let log = profile.intrusion_log(&args.profile);
    let seed = args.seed.unwrap_or_else(random_seed);
    let next = reset_profile(&profile, &credentials, new_passwords.as_ref(), seed, &log, Utc::now())?;
    save_profile(&next, &args.profile)?;
    writeln!(out, "profile reset; {} templates re-enrolled", next.slots().count()).map_err(io_err)?;
    Ok(EXIT_GRANTED)
}

fn show_log(args: LogArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let profile = load_profile(&args.profile)?;
    let mut entries = Entries::scripted_or_terminal(&args.scripted.passwords, &args.scripted.times)?;
    let credentials = reset_credentials(&profile, &mut entries, &args.tokens)?;
    entries.finish()?;
    let log = profile.intrusion_log(&args.profile);
    let records = read_log(&profile, &credentials, &log, Utc::now())?;
    for record in &records {
        write!(out, "{}", format_record(record)).map_err(io_err)?;
    }
    Ok(EXIT_GRANTED)
}

fn export_token(args: ExportArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let _lock = ProfileLock::acquire(&args.profile)?;
    let mut profile = load_profile(&args.profile)?;
    let (token, server) = profile.export_token(args.which)?;
    token.save(&args.token_out)?;
    server.save(&args.server_out)?;
    save_profile(&profile, &args.profile)?;
    writeln!(
        out,
        "exported {} hidden layer to {}; server part at {}",
        args.which,
        args.token_out.display(),
        args.server_out.display()
    )
    .map_err(io_err)?;
    Ok(EXIT_GRANTED)
}

fn replicate(args: ReplicateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let reports = replicate_experiments(&args.out_dir)?;
    for report in &reports {
        let arch = report.template.architecture();
        writeln!(
            out,
            "{} {:?}: {}/{}/1, {} epochs, final error {:.3e}",
            report.experiment.name,
            report.experiment.password,
            arch.input_count,
            arch.hidden_count,
            report.curve.epochs(),
            report.final_error()
        )
        .map_err(io_err)?;
        for result in &report.results {
            let status = match (result.outcome.authenticated, result.outcome.max_diff()) {
                (true, _) => "authenticated".to_string(),
                (false, Some(max)) => format!("rejected, max diff {max:.3e}"),
                (false, None) => "rejected at length check".to_string(),
            };
            writeln!(out, "  {:<14} {status}", result.candidate).map_err(io_err)?;
        }
    }
    writeln!(out, "wrote CSV files to {}", display(&args.out_dir)).map_err(io_err)?;
    Ok(EXIT_GRANTED)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}
