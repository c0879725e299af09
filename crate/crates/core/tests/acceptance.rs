//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line with its
//! measurement and wall time, then asserts.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::Utc;
use common::{random_other, random_password, rng};
use neuroauth::codec::encode_password;
use neuroauth::error::Error;
use neuroauth::experiments::{replicate_experiments, EXPERIMENTS};
use neuroauth::guard::{evaluate_attempt, Credential, GuardConfig, GuardState, Layer};
use neuroauth::network::{forward_bits, init_weights, Architecture, WeightSet};
use neuroauth::template::{enroll, PasswordCheck, RejectionStage, Template, VerifyOutcome};
use neuroauth::trainer::{compute_gradient, train, TrainingConfig};
use neuroauth::vault::two_factor::{combine, split_two_factor, verify_two_factor};
use neuroauth::vault::{load_profile, reset_profile, save_profile, Profile, ResetCredentials, Role, TemplateSlot};
use rand::Rng;

const MATCH: f64 = 1e-12;
const WRONG_MIN_DIFF: f64 = 1e-3;

fn gate(id: u32, title: &str, started: Instant, limit: Duration, ok: bool, detail: String) {
    let elapsed = started.elapsed();
    let in_time = elapsed < limit;
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    println!(
        "[{verdict}] AC{id:02} {title}: {detail} ({:.3}s, limit {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "AC{id:02} {title} failed: {detail}");
    assert!(in_time, "AC{id:02} {title} exceeded {limit:?} ({elapsed:?})");
}

#[test]
fn ac01_architecture_pinning() {
    let t0 = Instant::now();
    let neural: Template<f64> = enroll("neural", &TrainingConfig::with_seed(1)).unwrap();
    let arch: Template<f64> = enroll("architecture", &TrainingConfig::with_seed(1)).unwrap();
    let dims = |t: &Template<f64>| (t.architecture().input_count, t.architecture().hidden_count, 1);
    let ok = dims(&neural) == (42, 13, 1) && dims(&arch) == (84, 25, 1);
    gate(
        1,
        "architecture pinning",
        t0,
        Duration::from_secs(1),
        ok,
        format!("neural {:?}, architecture {:?}", dims(&neural), dims(&arch)),
    );
}

#[test]
fn ac02_convergence() {
    let t0 = Instant::now();
    let config = TrainingConfig::<f64>::default();
    let trained = train(&encode_password("neural").unwrap(), &config).unwrap();
    let error = (0.5 - trained.activations.final_output).abs();
    let ok = config.eta == 0.5 && config.target == 0.5 && error < 1e-5 && trained.curve.final_error() == Some(error);
    gate(
        2,
        "convergence of \"neural\"",
        t0,
        Duration::from_secs(5),
        ok,
        format!(
            "|0.5 - output| = {error:e} after {} epochs (lambda {})",
            trained.curve.epochs(),
            config.lambda
        ),
    );
}

fn loss(arch: &Architecture<f64>, w: &WeightSet<f64>, input: &[u8], target: f64) -> f64 {
    let o = forward_bits(arch, w, input).unwrap().final_output;
    0.5 * (target - o).powi(2)
}

#[test]
fn ac03_gradient_oracle() {
    let t0 = Instant::now();
    let mut rng = rng(3);
    let h = 1e-6;
    let mut worst = 0.0_f64;
    let mut checked = 0;
    let mut tiny_mismatch = false;
    for _ in 0..20 {
        let input_count = rng.gen_range(1..=28);
        let hidden_count = rng.gen_range(1..=8);
        let arch = Architecture::new(input_count, hidden_count, rng.gen_range(0.1..1.5)).unwrap();
        let mut w = init_weights(&arch, rng.gen());
        for v in w.iter_mut() {
            *v = *v * 2.0 - 1.0;
        }
        let input: Vec<u8> = (0..input_count).map(|_| rng.gen_range(0..=1)).collect();
        let target = rng.gen_range(0.1..0.9);
        let analytic: Vec<f64> = compute_gradient(&arch, &w, &input, target)
            .unwrap()
            .iter()
            .copied()
            .collect();
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = w.clone();
            let mut minus = w.clone();
            *plus.iter_mut().nth(k).unwrap() += h;
            *minus.iter_mut().nth(k).unwrap() -= h;
            let numeric = (loss(&arch, &plus, &input, target) - loss(&arch, &minus, &input, target)) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            // zero-input columns: analytic 0, numeric at round-off level
            if scale < 1e-10 {
                tiny_mismatch |= (a - numeric).abs() >= 1e-10;
            } else {
                worst = worst.max((a - numeric).abs() / scale);
            }
            checked += 1;
        }
    }
    gate(
        3,
        "gradient vs central differences",
        t0,
        Duration::from_secs(10),
        worst < 1e-4 && !tiny_mismatch,
        format!("{checked} entries, worst relative error {worst:e}"),
    );
}

fn read_diffs(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node_index,abs_difference"));
    lines.map(|l| l.split_once(',').unwrap().1.parse().unwrap()).collect()
}

#[test]
fn ac04_experiment_replication() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let reports = replicate_experiments(dir.path()).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (experiment, report) in EXPERIMENTS.iter().zip(&reports) {
        let curve = fs::read_to_string(dir.path().join(format!("{}_curve.csv", experiment.name))).unwrap();
        let last_error: f64 = curve
            .lines()
            .last()
            .unwrap()
            .split_once(',')
            .unwrap()
            .1
            .parse()
            .unwrap();
        ok &= curve.starts_with("epoch,error\n") && last_error < 1e-5;
        let input_count = report.template.architecture().input_count;
        for result in &report.results {
            let diffs = read_diffs(
                &dir.path()
                    .join(format!("{}_diff_{}.csv", experiment.name, result.candidate)),
            );
            let max = diffs.iter().copied().fold(0.0, f64::max);
            let pass = if result.candidate == experiment.password {
                diffs.len() == report.template.architecture().hidden_count + 1 && diffs.iter().all(|&d| d <= MATCH)
            } else if result.candidate.len() * 7 != input_count {
                result.outcome.rejected_stage == Some(RejectionStage::Length) && diffs.is_empty()
            } else {
                !result.outcome.authenticated && max > WRONG_MIN_DIFF
            };
            ok &= pass;
            detail.push(format!(
                "{}: max {:.2e}{}",
                result.candidate,
                max,
                if diffs.is_empty() { " (length)" } else { "" }
            ));
        }
    }
    gate(
        4,
        "experiment replication",
        t0,
        Duration::from_secs(30),
        ok,
        detail.join(", "),
    );
}

#[test]
fn ac05_false_accept_sweep() {
    let t0 = Instant::now();
    let mut rng = rng(5);
    let mut accepted = 0;
    let mut nearest = f64::INFINITY;
    for i in 0..20 {
        let len = rng.gen_range(4..=12);
        let password = random_password(&mut rng, len);
        let template: Template<f64> = enroll(&password, &TrainingConfig::with_seed(i)).unwrap();
        for _ in 0..200 {
            let outcome = template.verify(&random_other(&mut rng, &password)).unwrap();
            accepted += usize::from(outcome.authenticated);
            nearest = nearest.min(outcome.max_diff().unwrap_or(f64::INFINITY));
        }
    }
    gate(
        5,
        "false-accept sweep",
        t0,
        Duration::from_secs(120),
        accepted == 0,
        format!("{accepted} of 4000 wrong candidates accepted, nearest max-diff {nearest:.3e}"),
    );
}

struct Counting<'a> {
    inner: &'a Template<f64>,
    calls: std::cell::Cell<usize>,
}

impl PasswordCheck<f64> for Counting<'_> {
    fn input_count(&self) -> usize {
        self.inner.architecture().input_count
    }

    fn check(&self, candidate: &str) -> neuroauth::Result<VerifyOutcome<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.verify(candidate)
    }
}

fn local(slot: &TemplateSlot) -> &Template<f64> {
    match slot {
        TemplateSlot::Local(t) => t,
        TemplateSlot::Split(_) => panic!("expected local template"),
    }
}

fn creds(provider: &str, user: &str, reset: &str) -> ResetCredentials {
    ResetCredentials::new(
        Some(Credential::new(provider, 900)),
        Credential::new(user, 900),
        Credential::new(reset, 900),
    )
}

#[test]
fn ac06_guard_state_machine() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("guard.profile");
    let mut profile = Profile::enroll(
        &["vendor", "client"],
        "rescue",
        &TrainingConfig::with_seed(60),
        GuardConfig::default(),
        "guard.log",
    )
    .unwrap();
    let log = profile.intrusion_log(&path);
    let (provider, user) = (
        local(&profile.resource_templates[0]).clone(),
        local(&profile.resource_templates[1]).clone(),
    );
    let counters = [
        Counting {
            inner: &provider,
            calls: Default::default(),
        },
        Counting {
            inner: &user,
            calls: Default::default(),
        },
    ];
    let checks: Vec<&dyn PasswordCheck<f64>> = counters.iter().map(|c| c as &dyn PasswordCheck<f64>).collect();
    let mut declared_on = None;
    for attempt in 1..=3 {
        let eval = evaluate_attempt(
            &profile.guard_state,
            &profile.guard_config,
            &checks,
            &[Credential::new("vendor", 900), Credential::new("cliemt", 900)],
            Utc::now(),
        );
        log.append(&eval.records).unwrap();
        profile.guard_state = eval.state;
        if eval.decision.intruder_declared {
            declared_on.get_or_insert(attempt);
        }
    }
    let locked_after_three = profile.guard_state.locked && declared_on == Some(3);

    let ann_calls_before = counters.iter().map(|c| c.calls.get()).sum::<usize>();
    let eval = evaluate_attempt(
        &profile.guard_state,
        &profile.guard_config,
        &checks,
        &[Credential::new("vendor", 900), Credential::new("client", 900)],
        Utc::now(),
    );
    let ann_calls_locked = counters.iter().map(|c| c.calls.get()).sum::<usize>() - ann_calls_before;
    let trail_denied = eval.decision.failed_layer == Some(Layer::Trail) && ann_calls_locked == 0;
    log.append(&eval.records).unwrap();
    profile.guard_state = eval.state;
    save_profile(&profile, &path).unwrap();

    // one wrong reset password: nothing changes on disk
    let before = fs::read(&path).unwrap();
    let loaded = load_profile(&path).unwrap();
    let denied = matches!(
        reset_profile(
            &loaded,
            &creds("vendor", "client", "rescuf"),
            None,
            61,
            &log,
            Utc::now()
        ),
        Err(Error::ResetDenied)
    );
    let unchanged = fs::read(&path).unwrap() == before && load_profile(&path).unwrap().guard_state.locked;

    let reset = reset_profile(
        &loaded,
        &creds("vendor", "client", "rescue"),
        None,
        62,
        &log,
        Utc::now(),
    )
    .unwrap();
    save_profile(&reset, &path).unwrap();
    let cleared = load_profile(&path).unwrap().guard_state == GuardState::default();

    let ok = locked_after_three && trail_denied && denied && unchanged && cleared;
    gate(
        6,
        "guard state machine",
        t0,
        Duration::from_secs(5),
        ok,
        format!(
            "intruder on attempt {declared_on:?}, locked-correct ANN calls {ann_calls_locked}, \
             wrong reset denied {denied} unchanged {unchanged}, reset clears lock {cleared}, log {} records",
            log.read().unwrap().len()
        ),
    );
}

#[test]
fn ac07_re_encryption() {
    let t0 = Instant::now();
    let log_dir = tempfile::tempdir().unwrap();
    let profile = Profile::enroll(
        &["vendor", "client"],
        "rescue",
        &TrainingConfig::with_seed(70),
        GuardConfig::default(),
        "re.log",
    )
    .unwrap();
    let log = profile.intrusion_log(&log_dir.path().join("re.profile"));
    let next = reset_profile(
        &profile,
        &creds("vendor", "client", "rescue"),
        None,
        7000,
        &log,
        Utc::now(),
    )
    .unwrap();
    let mut changed_weights = 0;
    let mut total_weights = 0;
    let mut ok = true;
    for (((role, old), (_, new)), pw) in profile.slots().zip(next.slots()).zip(["vendor", "client", "rescue"]) {
        let (old, new) = (local(old), local(new));
        let pairs: Vec<_> = old.weights().iter().zip(new.weights().iter()).collect();
        let changed = pairs.iter().filter(|(a, b)| a.to_bits() != b.to_bits()).count();
        changed_weights += changed;
        total_weights += pairs.len();
        let mapped_changed = old.mapped_hidden() != new.mapped_hidden() && old.mapped_final() != new.mapped_final();
        ok &= changed > 0 && mapped_changed && new.verify(pw).unwrap().authenticated;
        ok &= role == Role::Reset || !new.verify("vendr0").unwrap().authenticated;
    }
    gate(
        7,
        "re-encryption with same passwords",
        t0,
        Duration::from_secs(10),
        ok,
        format!("{changed_weights}/{total_weights} weights changed, all passwords still authenticate"),
    );
}

#[test]
fn ac08_two_factor() {
    let t0 = Instant::now();
    let mut rng = rng(8);
    let template: Template<f64> = enroll("neural", &TrainingConfig::with_seed(80)).unwrap();
    let (token, server) = split_two_factor(&template);
    let combined_equal = combine(&token, &server).unwrap() == template;
    let mut candidates = vec!["neural".to_string(), "meural".into(), "neur".into()];
    while candidates.len() < 20 {
        candidates.push(random_other(&mut rng, "neural"));
    }
    let identical = candidates
        .iter()
        .all(|c| template.verify(c).unwrap() == verify_two_factor(&server, Some(&token), c).unwrap());
    let refuses = matches!(verify_two_factor(&server, None, "neural"), Err(Error::MissingToken));
    let other: Template<f64> = enroll("neural", &TrainingConfig::with_seed(81)).unwrap();
    let (foreign_token, _) = split_two_factor(&other);
    let foreign = verify_two_factor(&server, Some(&foreign_token), "neural").unwrap();
    let ok = combined_equal && identical && refuses && !foreign.authenticated;
    gate(
        8,
        "two-factor split",
        t0,
        Duration::from_secs(10),
        ok,
        format!(
            "20 candidates identical {identical}, server-only refuses {refuses}, foreign token max diff {:.3e}",
            foreign.max_diff().unwrap()
        ),
    );
}

#[test]
fn ac09_persistence() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng(9);
    let mut exact = 0;
    for i in 0..50 {
        let resources: Vec<String> = (0..rng.gen_range(1..=2))
            .map(|_| {
                let len = rng.gen_range(2..=5);
                random_password(&mut rng, len)
            })
            .collect();
        let reset_len = rng.gen_range(2..=5);
        let reset = random_password(&mut rng, reset_len);
        let config = TrainingConfig {
            seed: rng.gen(),
            lambda: rng.gen_range(0.1..0.4),
            eta: rng.gen_range(0.3..0.9),
            ..TrainingConfig::default()
        };
        let min = rng.gen_range(0..1000);
        let guard = GuardConfig {
            max_trials: rng.gen_range(1..=10),
            time_min_ms: min,
            time_max_ms: min + rng.gen_range(1..60_000),
            time_layer_enabled: rng.gen(),
        };
        let refs: Vec<&str> = resources.iter().map(String::as_str).collect();
        let mut profile = Profile::enroll(&refs, &reset, &config, guard, format!("logs/p{i}.log")).unwrap();
        profile.guard_state.failed_count = rng.gen_range(0..guard.max_trials);
        if rng.gen_bool(0.3) {
            profile.guard_state.failed_count = guard.max_trials + rng.gen_range(0..5);
            profile.guard_state.locked = true;
            profile.guard_state.locked_at = Some(Utc::now());
        }
        if rng.gen_bool(0.3) {
            profile.export_token(Role::Reset).unwrap();
        }
        let path = dir.path().join(format!("p{i}.profile"));
        save_profile(&profile, &path).unwrap();
        let loaded = load_profile(&path).unwrap();
        let bit_exact = loaded.to_text().unwrap() == profile.to_text().unwrap()
            && loaded
                .slots()
                .zip(profile.slots())
                .all(|((_, a), (_, b))| match (a, b) {
                    (TemplateSlot::Local(a), TemplateSlot::Local(b)) => {
                        a.weights()
                            .iter()
                            .zip(b.weights().iter())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                            && a.mapped_final().to_bits() == b.mapped_final().to_bits()
                    }
                    (a, b) => a == b,
                });
        exact += usize::from(loaded == profile && bit_exact);
    }

    let text = fs::read_to_string(dir.path().join("p0.profile")).unwrap();
    let at = text.find("\nw1 = ").unwrap_or_else(|| text.find("\nw2 = ").unwrap()) + 6;
    let mut bytes = text.into_bytes();
    bytes[at + 7] = if bytes[at + 7] == b'a' { b'b' } else { b'a' };
    let tampered_path = dir.path().join("tampered.profile");
    fs::write(&tampered_path, bytes).unwrap();
    let tamper_detected = matches!(load_profile(&tampered_path), Err(Error::ChecksumMismatch { .. }));

    gate(
        9,
        "profile persistence",
        t0,
        Duration::from_secs(10),
        exact == 50 && tamper_detected,
        format!("{exact}/50 bit-exact round trips, single-hex-digit tamper detected {tamper_detected}"),
    );
}

#[test]
fn ac10_determinism() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let make = |name: &str| {
        let profile = Profile::enroll(
            &["vendor", "client"],
            "rescue",
            &TrainingConfig::with_seed(1010),
            GuardConfig::default(),
            "same.log",
        )
        .unwrap();
        let path = dir.path().join(name);
        save_profile(&profile, &path).unwrap();
        fs::read(path).unwrap()
    };
    let (a, b) = (make("a.profile"), make("b.profile"));
    gate(
        10,
        "enrollment determinism",
        t0,
        Duration::from_secs(5),
        a == b,
        format!("{} vs {} bytes, identical {}", a.len(), b.len(), a == b),
    );
}
