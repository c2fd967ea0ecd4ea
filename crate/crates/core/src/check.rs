//! Self-check suite behind `cvtransfer check`, and the analytic-vs-Monte-Carlo
//! comparison table used by `cvtransfer mc`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gaussian::{mean, variance, ModeExpr, Quadrature};
use crate::mc::{estimate_channel_snr, simulate_protocol_shots, MCConfig, MCEstimate};
use crate::metrics::{clone_fidelities, fidelity_bound_transfer, protocol_channel_snr};
use crate::protocol::{build_transfer, ids, GainPolicy, ProtocolOutputs, ProtocolParams};

/// Environment variable overriding the Monte-Carlo shot count of `check`.
pub const CHECK_SHOTS_ENV: &str = "CVTRANSFER_CHECK_SHOTS";
pub const DEFAULT_CHECK_SHOTS: u64 = 200_000;

/// Number of standard errors tolerated between Monte-Carlo and analytic values.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub output: String,
    pub quantity: &'static str,
    pub analytic: f64,
    pub estimate: f64,
    pub stderr: f64,
}

impl Comparison {
    pub fn z(&self) -> f64 {
        (self.estimate - self.analytic) / self.stderr
    }

    pub fn passes(&self) -> bool {
        self.z().abs() < MC_SIGMAS
    }
}

fn compare_mode(
    name: &str,
    expr: &ModeExpr,
    est: &MCEstimate,
    out: &ProtocolOutputs,
    with_fidelity: bool,
) -> Result<Vec<Comparison>> {
    let (mx, my) = mean(expr, &out.state)?;
    let row = |quantity, analytic, estimate, stderr| Comparison {
        output: name.to_owned(),
        quantity,
        analytic,
        estimate,
        stderr,
    };
    let mut v = vec![
        row("mean_x", mx, est.mean_x, est.stderr_mean_x),
        row("mean_y", my, est.mean_y, est.stderr_mean_y),
        row(
            "var_x",
            variance(expr, &out.state, Quadrature::X)?,
            est.var_x,
            est.stderr_var_x,
        ),
        row(
            "var_y",
            variance(expr, &out.state, Quadrature::Y)?,
            est.var_y,
            est.stderr_var_y,
        ),
    ];
    if with_fidelity {
        let f = crate::metrics::fidelity_coherent(expr, &out.state, out.params.input_mean)?;
        v.push(row("fidelity", f.fidelity, est.fidelity_estimate, est.stderr_fidelity));
    }
    Ok(v)
}

/// Analytic engine against the Monte-Carlo oracle for every output.
pub fn compare_protocol(params: &ProtocolParams, cfg: &MCConfig) -> Result<Vec<Comparison>> {
    let out = build_transfer(params)?;
    let est = simulate_protocol_shots(params, cfg)?;
    let mut rows = compare_mode("channel", &out.channel, &est.channel, &out, false)?;
    rows.extend(compare_mode("out1", &out.out1, &est.out1, &out, true)?);
    match &out.clones {
        Some(clones) => {
            for (k, (c, e)) in clones.iter().zip(&est.clones).enumerate() {
                rows.extend(compare_mode(&format!("clone{}", k + 1), c, e, &out, true)?);
            }
        }
        None => rows.extend(compare_mode("out2", &out.out2, &est.out2, &out, true)?),
    }
    Ok(rows)
}

/// A random valid transfer or cloning configuration.
pub fn random_params<R: Rng>(rng: &mut R) -> ProtocolParams {
    let squeezing = rng.random_range(0.0..2.0);
    let eta = if rng.random_bool(0.5) {
        1.0
    } else {
        rng.random_range(0.05..1.0)
    };
    let mut p = if rng.random_bool(0.4) {
        ProtocolParams::cloner(rng.random_range(2..=8), squeezing)
    } else {
        ProtocolParams::new(rng.random_range(0.01..0.99), squeezing)
    };
    p.eta = eta;
    p.gain_policy = match rng.random_range(0..3) {
        0 => GainPolicy::Cancellation,
        1 => GainPolicy::LossCompensated,
        _ => GainPolicy::Manual(rng.random_range(0.0..4.0)),
    };
    p.input_mean = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, failures: Vec<String>, checked: usize) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{checked} checks")
        } else {
            failures.join("; ")
        },
    }
}

fn check_commutator_suite() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut failures = Vec::new();
    for k in 0..1000 {
        let p = random_params(&mut rng);
        let rep = build_transfer(&p)?.check_commutators();
        if !rep.is_ok() {
            failures.push(format!("circuit {k} {p:?}: {:?}", rep.violations));
        }
    }
    Ok(outcome("commutators of 1000 random circuits", failures, 1000))
}

fn check_closed_forms() -> Result<CheckOutcome> {
    let mut failures = Vec::new();
    let mut n = 0;
    for k in 0..=10 {
        let rf = if k == 10 { 0.99 } else { k as f64 / 10.0 };
        for &r in &[0.0, 0.1, 2f64.ln() / 2.0, 1.0] {
            n += 1;
            let f = build_transfer(&ProtocolParams::new(rf, r))?.fidelity_out1()?.fidelity;
            let closed = 1.0 / (1.0 + rf * (-2.0 * r).exp());
            if (f - closed).abs() > 1e-12 {
                failures.push(format!("F(out1) R={rf} r={r}: {f} vs {closed}"));
            }
            if r == 0.0 && (f - fidelity_bound_transfer(rf)?).abs() > 1e-12 {
                failures.push(format!("boundary R={rf}: {f}"));
            }
        }
    }
    Ok(outcome("fidelity closed forms", failures, n))
}

fn check_clone_table() -> Result<CheckOutcome> {
    let mut failures = Vec::new();
    let mut n = 0;
    for m in 2..=8 {
        for &r in &[0.0, 0.1, 2f64.ln() / 2.0, 0.5, 1.0] {
            n += 1;
            let c = clone_fidelities(m, r)?;
            if !c.agrees() {
                failures.push(format!("M={m} r={r}: deviation {:e}", c.max_deviation()));
            }
        }
    }
    Ok(outcome("1->M clone fidelities, M = 2..8", failures, n))
}

fn check_loss_table() -> Result<CheckOutcome> {
    let mut failures = Vec::new();
    let mut n = 0;
    for &rf in &[0.3, 0.5, 0.8] {
        for &eta in &[0.6, 0.9] {
            let p = ProtocolParams::new(rf, 0.4)
                .with_eta(eta)
                .with_gain(GainPolicy::LossCompensated);
            let out = build_transfer(&p)?;
            let sr = rf.sqrt();
            let expected = [
                (ids::INPUT, 1.0, 0.0),
                (ids::EPR_ALICE, 0.0, -sr - (1.0 - eta) * (1.0 - rf) / sr),
                (ids::INPUT_VACUUM, -(1.0 - eta) * (1.0 - rf).sqrt() / sr, 0.0),
                (ids::LOSS_VACUUM, ((1.0 - eta * eta) * (1.0 - rf)).sqrt(), 0.0),
                (ids::EPR_BOB, sr, 0.0),
            ];
            for (id, a, c) in expected {
                n += 1;
                let (ga, gc) = out.out1.ladder_coefficients(&id.into())?;
                if (ga - a).abs() > 1e-12 || (gc - c).abs() > 1e-12 {
                    failures.push(format!("R={rf} eta={eta} {id}: ({ga}, {gc}) vs ({a}, {c})"));
                }
            }
        }
    }
    Ok(outcome("lossy out1 coefficient table", failures, n))
}

fn check_snr() -> Result<CheckOutcome> {
    let mut failures = Vec::new();
    let mut n = 0;
    let mut last = f64::INFINITY;
    for k in 0..10 {
        let rf = k as f64 / 10.0;
        n += 2;
        let zero = protocol_channel_snr(&ProtocolParams::new(rf, 0.0), (1.0, 1.0))?;
        let (px, _) = zero.printed_formula.unwrap_or((f64::NAN, f64::NAN));
        if (zero.snr_x - px).abs() > 1e-12 {
            failures.push(format!("r=0 R={rf}: {} vs printed {px}", zero.snr_x));
        }
        let one = protocol_channel_snr(&ProtocolParams::new(rf, 1.0), (1.0, 1.0))?;
        if !(one.snr_x < last) {
            failures.push(format!("r=1 not decreasing at R={rf}"));
        }
        last = one.snr_x;
    }
    Ok(outcome("channel SNR", failures, n))
}

fn check_monte_carlo(shots: u64) -> Result<CheckOutcome> {
    let cases = [
        ProtocolParams::new(0.5, 0.0),
        ProtocolParams::new(0.5, 2f64.ln() / 2.0).with_mean(1.0, -2.0),
        ProtocolParams::new(0.3, 1.0)
            .with_eta(0.8)
            .with_gain(GainPolicy::LossCompensated),
        ProtocolParams::cloner(4, 0.5),
    ];
    let cfg = MCConfig::new(shots, 7);
    let mut failures = Vec::new();
    let mut n = 0;
    for p in &cases {
        // fidelity and variance of out1 only; the full table is in `mc`
        for c in compare_protocol(p, &cfg)? {
            if c.output != "out1" || !(c.quantity.starts_with("var") || c.quantity == "fidelity") {
                continue;
            }
            n += 1;
            if !c.passes() {
                failures.push(format!(
                    "R={} r={} {} {}: z={:.2}",
                    p.reflectivity,
                    p.squeezing,
                    c.output,
                    c.quantity,
                    c.z()
                ));
            }
        }
    }
    let snr_params = ProtocolParams::new(0.5, 1.0);
    let est = estimate_channel_snr(&snr_params, &cfg, (1.0, 1.0))?;
    let exact = protocol_channel_snr(&snr_params, (1.0, 1.0))?;
    n += 1;
    if (est.snr_x - exact.snr_x).abs() >= MC_SIGMAS * est.stderr_x {
        failures.push(format!("SNR: {} vs {}", est.snr_x, exact.snr_x));
    }
    Ok(outcome("Monte-Carlo concordance", failures, n))
}

/// Run every check; errors inside a check count as failures.
pub fn run_suite(shots: u64) -> Vec<CheckOutcome> {
    type Check = Box<dyn Fn() -> Result<CheckOutcome>>;
    let checks: Vec<(&'static str, Check)> = vec![
        ("commutators", Box::new(check_commutator_suite)),
        ("closed forms", Box::new(check_closed_forms)),
        ("clone table", Box::new(check_clone_table)),
        ("loss table", Box::new(check_loss_table)),
        ("snr", Box::new(check_snr)),
        ("monte carlo", Box::new(move || check_monte_carlo(shots))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            })
        })
        .collect()
}
