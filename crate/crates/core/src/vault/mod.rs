//! Durable state: profile files, the reset protocol, two-factor parts and
//! the intrusion log.
//!
//! Profile file layout (UTF-8, LF line endings):
//!
//! ```text
//! neuroauth-profile v1
//! lambda = <hex>
//! guard.max_trials = 3
//! guard.time_min_ms = 50
//! guard.time_max_ms = 30000
//! guard.time_layer_enabled = true
//! guard.failed_count = 0
//! guard.locked = false
//! guard.locked_at = -
//! log_path = profile.log
//! template user
//! input_count = 42
//! hidden_count = 13
//! eta = <hex>
//! epsilon = <hex>
//! seed = 7
//! epochs = 3301
//! target = <hex>
//! storage = local            (or `split`: w1/b1 live on a token)
//! w1 = <hex> <hex> ...       (one line per hidden node; local only)
//! b1 = ...                   (local only)
//! w2 = ...
//! b2 = <hex>
//! mapped_hidden = ...
//! mapped_final = <hex>
//! template reset
//! ...
//! checksum <16 hex digits>
//! ```
//!
//! `<hex>` is the 16-digit IEEE-754 binary64 bit pattern, so every real
//! survives a round trip exactly.

pub mod format;
pub mod log;
pub mod two_factor;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};

use self::format::{check_header, verify_checksum, Reader, Writer};
use self::log::{format_timestamp, parse_timestamp, IntrusionLog};
use self::two_factor::{
    combine, read_meta_header, read_rows, split_two_factor, write_meta_header, write_rows, ServerPart, TokenPart,
};
use crate::error::{Error, Result};
use crate::guard::{check_content, AttemptRecord, Credential, GuardConfig, GuardState};
use crate::network::{Architecture, WeightSet};
use crate::template::{enroll, PasswordCheck, Template, TrainingMeta};
use crate::trainer::TrainingConfig;

pub const PROFILE_MAGIC: &str = "neuroauth-profile";
pub const PROFILE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Provider,
    User,
    Reset,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Provider => "provider",
            Role::User => "user",
            Role::Reset => "reset",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "provider" => Ok(Role::Provider),
            "user" => Ok(Role::User),
            "reset" => Ok(Role::Reset),
            other => Err(format!("unknown role {other:?} (expected provider, user or reset)")),
        }
    }
}

/// A stored template, either whole or with its hidden layer exported to a token.
#[derive(Clone, Debug, PartialEq)]
pub enum TemplateSlot {
    Local(Template<f64>),
    Split(ServerPart),
}

impl TemplateSlot {
    pub fn input_count(&self) -> usize {
        match self {
            TemplateSlot::Local(t) => t.architecture().input_count,
            TemplateSlot::Split(s) => s.input_count,
        }
    }

    fn lambda(&self) -> f64 {
        match self {
            TemplateSlot::Local(t) => t.architecture().lambda,
            TemplateSlot::Split(s) => s.lambda,
        }
    }

    /// A runnable template; split slots need their token.
    pub fn resolve(&self, token: Option<&TokenPart>) -> Result<Template<f64>> {
        match self {
            TemplateSlot::Local(t) => Ok(t.clone()),
            TemplateSlot::Split(server) => combine(token.ok_or(Error::MissingToken)?, server),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub version: u32,
    pub lambda: f64,
    pub guard_config: GuardConfig,
    pub guard_state: GuardState,
    /// Relative paths are resolved against the profile file's directory.
    pub log_path: PathBuf,
    /// `[user]` or `[provider, user]`.
    pub resource_templates: Vec<TemplateSlot>,
    pub reset_template: TemplateSlot,
}

/// Seeds for the templates of one enrollment: consecutive from `base`.
fn template_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

impl Profile {
    /// Enrolls 1 or 2 resource passwords plus the reset password.
    /// Template `i` (provider, user, reset order) trains with `config.seed + i`.
    pub fn enroll(
        resource_passwords: &[&str],
        reset_password: &str,
        config: &TrainingConfig<f64>,
        guard_config: GuardConfig,
        log_path: impl Into<PathBuf>,
    ) -> Result<Self> {
        if !(1..=2).contains(&resource_passwords.len()) {
            return Err(Error::InvalidProfile(format!(
                "expected 1 or 2 resource passwords, got {}",
                resource_passwords.len()
            )));
        }
        guard_config.validate()?;
        let mut templates = resource_passwords
            .iter()
            .chain(std::iter::once(&reset_password))
            .enumerate()
            .map(|(i, pw)| {
                let config = TrainingConfig {
                    seed: template_seed(config.seed, i),
                    ..*config
                };
                enroll(pw, &config).map(TemplateSlot::Local)
            })
            .collect::<Result<Vec<_>>>()?;
        let reset_template = templates.pop().expect("reset template enrolled");
        let profile = Self {
            version: PROFILE_VERSION,
            lambda: config.lambda,
            guard_config,
            guard_state: GuardState::default(),
            log_path: log_path.into(),
            resource_templates: templates,
            reset_template,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn resource_roles(&self) -> &'static [Role] {
        if self.resource_templates.len() == 2 {
            &[Role::Provider, Role::User]
        } else {
            &[Role::User]
        }
    }

    /// Every slot with its role: resources first, reset last.
    pub fn slots(&self) -> impl Iterator<Item = (Role, &TemplateSlot)> {
        self.resource_roles()
            .iter()
            .copied()
            .zip(&self.resource_templates)
            .chain(std::iter::once((Role::Reset, &self.reset_template)))
    }

    pub fn slot(&self, role: Role) -> Option<&TemplateSlot> {
        self.slots().find(|(r, _)| *r == role).map(|(_, s)| s)
    }

    pub fn slot_mut(&mut self, role: Role) -> Option<&mut TemplateSlot> {
        match (role, self.resource_templates.len()) {
            (Role::Reset, _) => Some(&mut self.reset_template),
            (Role::Provider, 2) => self.resource_templates.get_mut(0),
            (Role::User, 2) => self.resource_templates.get_mut(1),
            (Role::User, 1) => self.resource_templates.get_mut(0),
            _ => None,
        }
    }

    /// The intrusion log, with relative paths taken from `profile_path`'s directory.
    pub fn intrusion_log(&self, profile_path: &Path) -> IntrusionLog {
        if self.log_path.is_absolute() {
            IntrusionLog::new(&self.log_path)
        } else {
            let dir = profile_path.parent().unwrap_or_else(|| Path::new(""));
            IntrusionLog::new(dir.join(&self.log_path))
        }
    }

    /// Moves the hidden layer of one template out to a token. The profile
    /// keeps only the server half afterwards.
    pub fn export_token(&mut self, role: Role) -> Result<(TokenPart, ServerPart)> {
        let slot = self
            .slot_mut(role)
            .ok_or_else(|| Error::InvalidProfile(format!("profile has no {role} template")))?;
        let TemplateSlot::Local(template) = slot else {
            return Err(Error::InvalidProfile(format!("{role} template is already split")));
        };
        let (token, server) = split_two_factor(template);
        *slot = TemplateSlot::Split(server.clone());
        Ok((token, server))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PROFILE_VERSION {
            return Err(Error::VersionUnsupported(format!("v{}", self.version)));
        }
        if !(1..=2).contains(&self.resource_templates.len()) {
            return Err(Error::InvalidProfile(format!(
                "expected 1 or 2 resource templates, found {}",
                self.resource_templates.len()
            )));
        }
        self.guard_config.validate()?;
        if self.guard_state.locked && self.guard_state.failed_count < self.guard_config.max_trials {
            return Err(Error::InvalidProfile(
                "locked profile with fewer failures than max_trials".into(),
            ));
        }
        for (role, slot) in self.slots() {
            if slot.lambda().to_bits() != self.lambda.to_bits() {
                return Err(Error::InvalidProfile(format!(
                    "{role} template lambda {} differs from profile lambda {}",
                    slot.lambda(),
                    self.lambda
                )));
            }
        }
        let log_path = self.log_path.to_str().unwrap_or("");
        if log_path.is_empty() || log_path.contains(['\n', '\r']) {
            return Err(Error::InvalidProfile(
                "log_path must be a non-empty single-line UTF-8 path".into(),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut w = Writer::new(&format!("{PROFILE_MAGIC} v{PROFILE_VERSION}"));
        w.real("lambda", self.lambda)?;
        w.kv("guard.max_trials", self.guard_config.max_trials);
        w.kv("guard.time_min_ms", self.guard_config.time_min_ms);
        w.kv("guard.time_max_ms", self.guard_config.time_max_ms);
        w.kv("guard.time_layer_enabled", self.guard_config.time_layer_enabled);
        w.kv("guard.failed_count", self.guard_state.failed_count);
        w.kv("guard.locked", self.guard_state.locked);
        w.kv(
            "guard.locked_at",
            self.guard_state
                .locked_at
                .as_ref()
                .map_or_else(|| "-".to_string(), format_timestamp),
        );
        w.kv("log_path", self.log_path.display());
        for (role, slot) in self.slots() {
            w.line(&format!("template {role}"));
            write_slot(&mut w, slot)?;
        }
        Ok(w.finish())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        check_header(text, PROFILE_MAGIC)?;
        let (payload, _) = verify_checksum(text)?;
        let mut r = Reader::new(payload);
        let lambda = r.real("lambda")?;
        let guard_config = GuardConfig {
            max_trials: r.parse("guard.max_trials")?,
            time_min_ms: r.parse("guard.time_min_ms")?,
            time_max_ms: r.parse("guard.time_max_ms")?,
            time_layer_enabled: r.parse("guard.time_layer_enabled")?,
        };
        let failed_count = r.parse("guard.failed_count")?;
        let locked = r.parse("guard.locked")?;
        let (line, locked_at) = r.value("guard.locked_at")?;
        let locked_at = match locked_at {
            "-" => None,
            ts => Some(parse_timestamp(ts).map_err(|reason| Error::MalformedField {
                line,
                key: "guard.locked_at".into(),
                reason,
            })?),
        };
        let (_, log_path) = r.value("log_path")?;

        let mut blocks = Vec::new();
        while !r.is_done() {
            let (line, header) = r.raw("template")?;
            let role: Role = header
                .strip_prefix("template ")
                .ok_or_else(|| "expected `template <role>`".to_string())
                .and_then(str::parse)
                .map_err(|reason| Error::MalformedField {
                    line,
                    key: "template".into(),
                    reason,
                })?;
            blocks.push((line, role, read_slot(&mut r, lambda)?));
        }
        r.finish()?;

        let roles: Vec<Role> = blocks.iter().map(|(_, role, _)| *role).collect();
        let expected: &[&[Role]] = &[&[Role::User, Role::Reset], &[Role::Provider, Role::User, Role::Reset]];
        if !expected.contains(&roles.as_slice()) {
            return Err(Error::MalformedField {
                line: blocks.first().map_or(r.next_line_no(), |(l, _, _)| *l),
                key: "template".into(),
                reason: format!("template roles {roles:?} must be [user, reset] or [provider, user, reset]"),
            });
        }
        let mut slots: Vec<TemplateSlot> = blocks.into_iter().map(|(_, _, slot)| slot).collect();
        let reset_template = slots.pop().expect("reset block present");

        let profile = Self {
            version: PROFILE_VERSION,
            lambda,
            guard_config,
            guard_state: GuardState {
                failed_count,
                locked,
                locked_at,
            },
            log_path: PathBuf::from(log_path),
            resource_templates: slots,
            reset_template,
        };
        profile.validate()?;
        Ok(profile)
    }
}

fn write_slot(w: &mut Writer, slot: &TemplateSlot) -> Result<()> {
    match slot {
        TemplateSlot::Local(t) => {
            let (token, server) = split_two_factor(t);
            write_meta_header(w, server.input_count, server.hidden_count, &server.meta)?;
            w.kv("storage", "local");
            write_rows(w, "w1", &token.w1, token.input_count)?;
            w.reals("b1", &token.b1)?;
            server.write_body(w)
        }
        TemplateSlot::Split(server) => {
            write_meta_header(w, server.input_count, server.hidden_count, &server.meta)?;
            w.kv("storage", "split");
            server.write_body(w)
        }
    }
}

fn read_slot(r: &mut Reader<'_>, lambda: f64) -> Result<TemplateSlot> {
    let header_line = r.next_line_no();
    let (input_count, hidden_count, meta) = read_meta_header(r)?;
    let invalid = |e: Error| match e {
        Error::MalformedField { .. } => e,
        other => Error::MalformedField {
            line: header_line,
            key: "template".into(),
            reason: other.to_string(),
        },
    };
    let arch = Architecture::new(input_count, hidden_count, lambda).map_err(invalid)?;
    let (line, storage) = r.value("storage")?;
    match storage {
        "local" => {
            let w1 = read_rows(r, "w1", hidden_count, input_count)?;
            let b1 = r.reals("b1", hidden_count)?;
            let server = ServerPart::read_body(r, input_count, hidden_count, lambda, meta)?;
            let weights =
                WeightSet::from_parts(input_count, hidden_count, w1, b1, server.w2, server.b2).map_err(invalid)?;
            Template::from_parts(arch, weights, server.mapped_hidden, server.mapped_final, meta)
                .map(TemplateSlot::Local)
                .map_err(invalid)
        }
        "split" => {
            let server = ServerPart::read_body(r, input_count, hidden_count, lambda, meta)?;
            check_split_meta(&server).map_err(invalid)?;
            Ok(TemplateSlot::Split(server))
        }
        other => Err(Error::MalformedField {
            line,
            key: "storage".into(),
            reason: format!("expected local or split, found {other:?}"),
        }),
    }
}

fn check_split_meta(server: &ServerPart) -> Result<()> {
    let TrainingMeta { epsilon, target, .. } = server.meta;
    if (target - server.mapped_final).abs() < epsilon {
        Ok(())
    } else {
        Err(Error::InvalidProfile(
            "mapped final output is not within epsilon of target".into(),
        ))
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text` to a temporary sibling, syncs it, then renames it over `path`.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = temp_sibling(path);
    let result = File::create(&tmp)
        .and_then(|mut file| {
            file.write_all(text.as_bytes())?;
            file.sync_all()
        })
        .and_then(|()| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// `.<name>.tmp` next to `path`.
pub fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map_or_else(|| "profile".into(), |n| n.to_string_lossy());
    path.with_file_name(format!(".{name}.tmp"))
}

pub fn save_profile(profile: &Profile, path: &Path) -> Result<()> {
    let text = profile.to_text()?;
    profile.validate()?;
    write_atomic(path, &text)
}

pub fn load_profile(path: &Path) -> Result<Profile> {
    Profile::from_text(&read_file(path)?)
}

/// Exclusive hold on a profile for the duration of a state-mutating command,
/// backed by a `<profile>.lock` file created with `create_new`.
#[derive(Debug)]
pub struct ProfileLock {
    path: PathBuf,
}

impl ProfileLock {
    pub fn acquire(profile_path: &Path) -> Result<Self> {
        let mut name = profile_path.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::ProfileBusy(profile_path.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for ProfileLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// The passwords (and tokens for split templates) that open reset mode.
#[derive(Clone, Debug)]
pub struct ResetCredentials {
    pub provider: Option<Credential>,
    pub user: Credential,
    pub reset: Credential,
    pub tokens: BTreeMap<Role, TokenPart>,
}

impl ResetCredentials {
    pub fn new(provider: Option<Credential>, user: Credential, reset: Credential) -> Self {
        Self {
            provider,
            user,
            reset,
            tokens: BTreeMap::new(),
        }
    }

    fn in_slot_order(&self) -> Vec<Credential> {
        self.provider.iter().chain([&self.user, &self.reset]).cloned().collect()
    }
}

/// Replacement passwords for a reset, in provider/user/reset order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewPasswords {
    pub provider: Option<String>,
    pub user: String,
    pub reset: String,
}

/// Checks every current password against its template (length and ANN
/// layers; the trail lockout does not apply). On failure the attempt is
/// logged and `ResetDenied` is returned without saying which one failed.
pub fn authenticate_reset_mode(
    profile: &Profile,
    credentials: &ResetCredentials,
    log: &IntrusionLog,
    now: DateTime<Utc>,
) -> Result<()> {
    let attempt = credentials.in_slot_order();
    let templates = profile
        .slots()
        .map(|(role, slot)| slot.resolve(credentials.tokens.get(&role)))
        .collect::<Result<Vec<_>>>()?;
    let checks: Vec<&dyn PasswordCheck<f64>> = templates.iter().map(|t| t as &dyn PasswordCheck<f64>).collect();
    // a missing provider password shows up as a count mismatch at the length layer
    let Some(failure) = check_content(&checks, &attempt) else {
        return Ok(());
    };
    let records: Vec<AttemptRecord> = failure
        .failing
        .iter()
        .map(|&i| AttemptRecord {
            timestamp: now,
            failed_layer: failure.layer,
            attempted_password: attempt[i].password.clone(),
            insertion_ms: attempt[i].insertion_ms,
        })
        .collect();
    log.append(&records)?;
    Err(Error::ResetDenied)
}

/// Opens reset mode, then re-enrolls every template (with the new passwords
/// if given, otherwise the current ones) from `new_seed` and clears the
/// guard state. The input profile is never modified.
pub fn reset_profile(
    profile: &Profile,
    credentials: &ResetCredentials,
    new_passwords: Option<&NewPasswords>,
    new_seed: u64,
    log: &IntrusionLog,
    now: DateTime<Utc>,
) -> Result<Profile> {
    authenticate_reset_mode(profile, credentials, log, now)?;

    let passwords: Vec<String> = match new_passwords {
        Some(new) => {
            if new.provider.is_some() != credentials.provider.is_some() {
                return Err(Error::InvalidProfile(
                    "new passwords must keep the profile's shape".into(),
                ));
            }
            new.provider.iter().chain([&new.user, &new.reset]).cloned().collect()
        }
        None => credentials.in_slot_order().into_iter().map(|c| c.password).collect(),
    };

    let mut slots = profile
        .slots()
        .zip(&passwords)
        .enumerate()
        .map(|(i, ((_, slot), pw))| {
            let meta = match slot {
                TemplateSlot::Local(t) => *t.meta(),
                TemplateSlot::Split(s) => s.meta,
            };
            let config = TrainingConfig {
                eta: meta.eta,
                target: meta.target,
                epsilon: meta.epsilon,
                lambda: profile.lambda,
                seed: template_seed(new_seed, i),
                ..TrainingConfig::default()
            };
            enroll(pw, &config).map(TemplateSlot::Local)
        })
        .collect::<Result<Vec<_>>>()?;
    let reset_template = slots.pop().expect("reset slot");

    let next = Profile {
        guard_state: GuardState::default(),
        resource_templates: slots,
        reset_template,
        ..profile.clone()
    };
    next.validate()?;
    Ok(next)
}

/// Intrusion records, readable only after reset-mode authentication.
pub fn read_log(
    profile: &Profile,
    credentials: &ResetCredentials,
    log: &IntrusionLog,
    now: DateTime<Utc>,
) -> Result<Vec<AttemptRecord>> {
    authenticate_reset_mode(profile, credentials, log, now)?;
    log.read()
}
