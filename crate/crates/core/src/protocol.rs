//! End-to-end simulation of the multi-selection architecture: the client
//! perturbs its value, the server returns k shifted results, and the client
//! keeps the nearest one. Messages use a newline-delimited JSON wire format;
//! an empirical auditor checks that server responses inherit the signal's
//! privacy guarantee.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Domain;
use crate::disutility::DisutilityFn;
use crate::error::{Error, Result};
use crate::mechanism::MechanismConfig;
use crate::rng::{child_seed, Rng};

/// Client -> server: the perturbed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMsg {
    pub session_id: u64,
    pub domain: Domain,
    pub signal: f64,
}

/// Server -> client: the k result positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMsg {
    pub session_id: u64,
    pub results: Vec<f64>,
}

/// Outcome of one session from the client's perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub user_value: f64,
    pub signal: f64,
    pub results: Vec<f64>,
    pub chosen_index: usize,
    pub disutility: f64,
}

/// Draw the client signal: the user's value plus mechanism noise
/// (ring: wrapped into [0, 2 pi)).
pub fn client_signal(u: f64, mech: &MechanismConfig, rng: &mut Rng) -> Result<SignalMsg> {
    if let Domain::Ring(c) = mech.domain {
        if !(0.0..c).contains(&u) {
            return Err(Error::DomainMismatch { domain: "ring", value: u });
        }
    }
    let noise = mech.noise.sample(rng);
    let signal = match mech.domain {
        Domain::Line => u + noise,
        Domain::Ring(c) => (u + noise).rem_euclid(c),
    };
    Ok(SignalMsg { session_id: 0, domain: mech.domain, signal })
}

/// Server response: signal + offset_i for each configured offset
/// (ring: mod 2 pi). Deterministic.
pub fn server_respond(msg: &SignalMsg, mech: &MechanismConfig) -> ResponseMsg {
    let results = mech
        .offsets
        .iter()
        .map(|a| match mech.domain {
            Domain::Line => msg.signal + a,
            Domain::Ring(c) => (msg.signal + a).rem_euclid(c),
        })
        .collect();
    ResponseMsg { session_id: msg.session_id, results }
}

/// Pick the result nearest to the user's value; exact ties go to the
/// smallest index.
pub fn pick_best(u: f64, resp: &ResponseMsg, h: &DisutilityFn, domain: Domain) -> SelectionRecord {
    assert!(!resp.results.is_empty(), "response carries no results");
    let mut chosen = 0usize;
    let mut best = f64::INFINITY;
    for (i, &r) in resp.results.iter().enumerate() {
        let d = domain.distance(u, r);
        if d < best {
            best = d;
            chosen = i;
        }
    }
    SelectionRecord {
        user_value: u,
        signal: f64::NAN,
        results: resp.results.clone(),
        chosen_index: chosen,
        disutility: h.eval(best),
    }
}

// --- wire format --------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "t", deny_unknown_fields)]
enum WireRepr {
    #[serde(rename = "sig")]
    Sig { sid: u64, dom: WireDomain, x: f64 },
    #[serde(rename = "resp")]
    Resp { sid: u64, rs: Vec<f64> },
}

#[derive(Serialize, Deserialize, Clone, Copy)]
enum WireDomain {
    #[serde(rename = "line")]
    Line,
    #[serde(rename = "ring")]
    Ring,
}

/// A parsed wire message.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMsg {
    Signal(SignalMsg),
    Response(ResponseMsg),
}

/// Encode a signal message as one NDJSON line (without the newline).
pub fn encode_signal(msg: &SignalMsg) -> String {
    let dom = match msg.domain {
        Domain::Line => WireDomain::Line,
        Domain::Ring(_) => WireDomain::Ring,
    };
    serde_json::to_string(&WireRepr::Sig { sid: msg.session_id, dom, x: msg.signal }).unwrap()
}

/// Encode a response message as one NDJSON line (without the newline).
pub fn encode_response(msg: &ResponseMsg) -> String {
    serde_json::to_string(&WireRepr::Resp { sid: msg.session_id, rs: msg.results.clone() })
        .unwrap()
}

/// Parse one wire line. Unknown "t" tags are rejected; "resp" lines must
/// carry exactly `expected_k` results; ring values must lie in [0, 2 pi).
pub fn parse_wire(line: &str, expected_k: usize) -> Result<WireMsg> {
    let repr: WireRepr =
        serde_json::from_str(line).map_err(|e| Error::WireFormat(e.to_string()))?;
    match repr {
        WireRepr::Sig { sid, dom, x } => {
            let domain = match dom {
                WireDomain::Line => Domain::Line,
                WireDomain::Ring => {
                    if !(0.0..std::f64::consts::TAU).contains(&x) {
                        return Err(Error::WireFormat(format!("ring signal {x} out of range")));
                    }
                    Domain::Ring(std::f64::consts::TAU)
                }
            };
            Ok(WireMsg::Signal(SignalMsg { session_id: sid, domain, signal: x }))
        }
        WireRepr::Resp { sid, rs } => {
            if rs.len() != expected_k {
                return Err(Error::WireFormat(format!(
                    "expected {expected_k} results, got {}",
                    rs.len()
                )));
            }
            Ok(WireMsg::Response(ResponseMsg { session_id: sid, results: rs }))
        }
    }
}

// --- simulation -----------------------------------------------------------

/// Aggregate outcome of a batch of simulated sessions.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub n: u64,
    pub mean_disutility: f64,
    pub stderr: f64,
}

/// Run `n` sessions for a user at `u` with per-session derived seeds.
/// Sessions are simulated in parallel; the NDJSON log (one sig and one resp
/// line per session, in session order) is written sequentially so a fixed
/// seed reproduces it byte for byte.
pub fn simulate(
    mech: &MechanismConfig,
    u: f64,
    n: u64,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<SimulationSummary> {
    const CHUNK: u64 = 1 << 14;
    let chunks: Vec<(u64, u64)> = (0..n.div_ceil(CHUNK))
        .map(|i| (i * CHUNK, (n - i * CHUNK).min(CHUNK)))
        .collect();

    let mut mean_acc = 0.0f64;
    let mut sq_acc = 0.0f64;
    for &(start, count) in &chunks {
        let sessions: Vec<(String, String, f64)> = (start..start + count)
            .into_par_iter()
            .map(|sid| {
                let mut rng = Rng::new(child_seed(seed, sid));
                let mut sig = client_signal(u, mech, &mut rng).expect("domain-checked user value");
                sig.session_id = sid;
                let resp = server_respond(&sig, mech);
                let rec = pick_best(u, &resp, &mech.h, mech.domain);
                (encode_signal(&sig), encode_response(&resp), rec.disutility)
            })
            .collect();
        for (sig_line, resp_line, d) in sessions {
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{sig_line}").map_err(|e| Error::WireFormat(e.to_string()))?;
                writeln!(w, "{resp_line}").map_err(|e| Error::WireFormat(e.to_string()))?;
            }
            mean_acc += d;
            sq_acc += d * d;
        }
    }
    let mean = mean_acc / n as f64;
    let var = (sq_acc / n as f64 - mean * mean).max(0.0);
    Ok(SimulationSummary { n, mean_disutility: mean, stderr: (var / n as f64).sqrt() })
}

/// Collect full selection records for a (smaller) batch of sessions.
pub fn collect_records(
    mech: &MechanismConfig,
    u: f64,
    n: u64,
    seed: u64,
) -> Result<Vec<SelectionRecord>> {
    (0..n)
        .map(|sid| {
            let mut rng = Rng::new(child_seed(seed, sid));
            let mut sig = client_signal(u, mech, &mut rng)?;
            sig.session_id = sid;
            let resp = server_respond(&sig, mech);
            let mut rec = pick_best(u, &resp, &mech.h, mech.domain);
            rec.signal = sig.signal;
            Ok(rec)
        })
        .collect()
}

// --- empirical privacy audit ----------------------------------------------

/// Result of the response-histogram audit.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub max_log_ratio: f64,
    /// eps * d(u1, u2) + slack
    pub bound: f64,
    /// binomial noise allowance 3 * sqrt(2 / min_count)
    pub slack: f64,
    pub min_count: u64,
    pub passed: bool,
}

/// Histogram the first response coordinate for two users over shared bins
/// and compare the worst per-bin log likelihood ratio against
/// eps * d(u1, u2) plus a binomial-noise slack. Post-processing means the
/// responses must inherit the signal's guarantee, so a sound mechanism
/// passes and an undernoised one fails.
pub fn empirical_privacy_audit(
    mech: &MechanismConfig,
    u1: f64,
    u2: f64,
    n: u64,
    bins: usize,
    seed: u64,
) -> Result<AuditReport> {
    assert!(n >= 100_000, "audit needs at least 1e5 samples per user");
    assert!(bins >= 2);
    const MIN_COUNT: u64 = 50;

    let draw = |user: f64, stream: u64| -> Result<Vec<f64>> {
        let mut rng = Rng::new(child_seed(seed, stream));
        (0..n)
            .map(|_| {
                let sig = client_signal(user, mech, &mut rng)?;
                let resp = server_respond(&sig, mech);
                Ok(resp.results[0])
            })
            .collect()
    };
    let s1 = draw(u1, 1)?;
    let s2 = draw(u2, 2)?;

    // shared bin range: pooled 0.1% .. 99.9% quantiles
    let mut pooled: Vec<f64> = s1.iter().chain(s2.iter()).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = pooled[(pooled.len() as f64 * 0.001) as usize];
    let hi = pooled[((pooled.len() as f64 * 0.999) as usize).min(pooled.len() - 1)];
    drop(pooled);
    let width = (hi - lo) / bins as f64;

    let histogram = |samples: &[f64]| -> Vec<u64> {
        let mut counts = vec![0u64; bins];
        for &x in samples {
            if x >= lo && x < hi {
                counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        counts
    };
    let h1 = histogram(&s1);
    let h2 = histogram(&s2);

    let min_count = h1.iter().chain(h2.iter()).copied().min().unwrap();
    if min_count < MIN_COUNT {
        return Err(Error::InsufficientCounts { count: min_count, need: MIN_COUNT });
    }

    let mut max_log_ratio = 0.0f64;
    for (&c1, &c2) in h1.iter().zip(&h2) {
        let ratio = ((c1 as f64 / n as f64).ln() - (c2 as f64 / n as f64).ln()).abs();
        max_log_ratio = max_log_ratio.max(ratio);
    }
    let slack = 3.0 * (2.0 / min_count as f64).sqrt();
    let bound = mech.eps * mech.domain.distance(u1, u2) + slack;
    Ok(AuditReport { max_log_ratio, bound, slack, min_count, passed: max_log_ratio <= bound })
}
