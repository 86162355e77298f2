//! Replay a labelled dataset against a running service at a paced rate.

use std::sync::Arc;
use std::time::{Duration, Instant};

use fsnt_core::flowdata::{ClassLabel, Dataset, NUM_CLASSES};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::decision::Decision;
use crate::server::DetectionResponse;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("invalid replay option: {0}")]
    InvalidOption(String),
    #[error("connection failure: {failures} of {} requests failed ({message})", .report.sent)]
    ConnectionFailure {
        message: String,
        failures: usize,
        report: Box<ReplayReport>,
    },
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Flows per second; `None` sends as fast as the in-flight bound allows.
    pub rate: Option<f64>,
    pub max_in_flight: usize,
    pub shuffle_seed: Option<u64>,
    /// Source identifier attached to every request.
    pub source: Option<String>,
    pub timeout: Duration,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            rate: None,
            max_in_flight: 32,
            shuffle_seed: None,
            source: None,
            timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassReplay {
    pub class_id: usize,
    pub label: String,
    pub flows: usize,
    pub responses: usize,
    /// Responses whose predicted class equals the true class.
    pub class_correct: usize,
    /// BLOCK for attack classes, ALLOW for benign.
    pub correct_decisions: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub sent: usize,
    pub responses: usize,
    pub failures: usize,
    pub transport_failures: usize,
    pub allowed: usize,
    pub blocked: usize,
    pub per_class: Vec<ClassReplay>,
    /// Share of attack-labelled responses that were blocked.
    pub attack_recall: Option<f64>,
    /// Share of benign-labelled responses that were blocked.
    pub benign_block_rate: Option<f64>,
    /// Client-observed round trip.
    pub latency: Option<LatencySummary>,
    pub elapsed_s: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize_latencies(ms: &[f64]) -> Option<LatencySummary> {
    if ms.is_empty() {
        return None;
    }
    let mut s = ms.to_vec();
    s.sort_by(f64::total_cmp);
    Some(LatencySummary {
        p50_ms: percentile(&s, 0.50),
        p90_ms: percentile(&s, 0.90),
        p99_ms: percentile(&s, 0.99),
        max_ms: s[s.len() - 1],
        mean_ms: s.iter().sum::<f64>() / s.len() as f64,
    })
}

enum Outcome {
    Ok(DetectionResponse, f64),
    Http,
    Transport(String),
}

fn request_body(names: &[String], values: &[f64], flow_id: usize, source: Option<&str>) -> Value {
    let features: Map<String, Value> = names
        .iter()
        .zip(values)
        .map(|(n, &v)| (n.clone(), serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)))
        .collect();
    let mut body = Map::new();
    body.insert("flow_id".into(), Value::String(flow_id.to_string()));
    body.insert("features".into(), Value::Object(features));
    if let Some(s) = source {
        body.insert("source".into(), Value::String(s.to_string()));
    }
    Value::Object(body)
}

/// POST every record of `d` to `{base_url}/classify`.
///
/// The target is probed with `GET /ddos/result` first; if that fails nothing
/// is sent. Any transport failure during the run yields
/// `ConnectionFailure` carrying the partial report.
pub async fn replay(d: &Dataset, base_url: &str, opts: &ReplayOptions) -> Result<ReplayReport, ReplayError> {
    if let Some(r) = opts.rate {
        if !(r.is_finite() && r > 0.0) {
            return Err(ReplayError::InvalidOption(format!("rate must be positive, got {r}")));
        }
    }
    if opts.max_in_flight == 0 {
        return Err(ReplayError::InvalidOption("max_in_flight must be at least 1".into()));
    }
    let base = base_url.trim_end_matches('/').to_string();
    let client = reqwest::Client::builder()
        .timeout(opts.timeout)
        .build()
        .map_err(|e| ReplayError::InvalidOption(e.to_string()))?;

    if let Err(e) = client
        .get(format!("{base}/ddos/result"))
        .send()
        .await
        .and_then(|r| r.error_for_status())
    {
        return Err(ReplayError::ConnectionFailure {
            message: e.to_string(),
            failures: 0,
            report: Box::default(),
        });
    }

    let mut order: Vec<usize> = (0..d.len()).collect();
    if let Some(seed) = opts.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }

    let names: Arc<[String]> = d.schema().names().into();
    let url: Arc<str> = format!("{base}/classify").into();
    let permits = Arc::new(Semaphore::new(opts.max_in_flight));
    let mut tasks = JoinSet::new();
    let start = Instant::now();
    let mut sent = 0;
    for (i, &idx) in order.iter().enumerate() {
        if let Some(rate) = opts.rate {
            tokio::time::sleep_until((start + Duration::from_secs_f64(i as f64 / rate)).into()).await;
        }
        let permit = Arc::clone(&permits).acquire_owned().await.expect("semaphore closed");
        let rec = &d.records()[idx];
        let body = request_body(&names, &rec.values, idx, opts.source.as_deref());
        let label = rec.label;
        let (client, url) = (client.clone(), Arc::clone(&url));
        sent += 1;
        tasks.spawn(async move {
            let t0 = Instant::now();
            let outcome = match client.post(&*url).json(&body).send().await {
                Err(e) => Outcome::Transport(e.to_string()),
                Ok(r) if !r.status().is_success() => Outcome::Http,
                Ok(r) => match r.json::<DetectionResponse>().await {
                    Ok(resp) => Outcome::Ok(resp, t0.elapsed().as_secs_f64() * 1e3),
                    Err(e) => Outcome::Transport(e.to_string()),
                },
            };
            drop(permit);
            (label, outcome)
        });
    }

    let mut report = ReplayReport {
        sent,
        ..Default::default()
    };
    let mut per_class: Vec<ClassReplay> = ClassLabel::ALL
        .iter()
        .map(|c| ClassReplay {
            class_id: c.id(),
            label: c.name().to_string(),
            ..Default::default()
        })
        .collect();
    let mut latencies = Vec::with_capacity(sent);
    let mut last_error = None;
    while let Some(joined) = tasks.join_next().await {
        let (label, outcome) = joined.expect("replay task panicked");
        if let Some(c) = label {
            per_class[c.id()].flows += 1;
        }
        match outcome {
            Outcome::Ok(resp, ms) => {
                report.responses += 1;
                latencies.push(ms);
                match resp.decision {
                    Decision::Allow => report.allowed += 1,
                    Decision::Block => report.blocked += 1,
                }
                if let Some(c) = label {
                    let row = &mut per_class[c.id()];
                    row.responses += 1;
                    row.class_correct += usize::from(resp.class_id == c.id());
                    let wanted = if c.is_attack() { Decision::Block } else { Decision::Allow };
                    row.correct_decisions += usize::from(resp.decision == wanted);
                }
            }
            Outcome::Http => report.failures += 1,
            Outcome::Transport(e) => {
                report.failures += 1;
                report.transport_failures += 1;
                last_error = Some(e);
            }
        }
    }
    report.elapsed_s = start.elapsed().as_secs_f64();
    report.latency = summarize_latencies(&latencies);

    if d.labeled() {
        for row in &mut per_class {
            row.recall = (row.responses > 0).then(|| row.correct_decisions as f64 / row.responses as f64);
        }
        let attack: (usize, usize) = per_class[1..NUM_CLASSES]
            .iter()
            .fold((0, 0), |(b, n), r| (b + r.correct_decisions, n + r.responses));
        report.attack_recall = (attack.1 > 0).then(|| attack.0 as f64 / attack.1 as f64);
        let benign = &per_class[ClassLabel::Benign.id()];
        report.benign_block_rate = (benign.responses > 0)
            .then(|| (benign.responses - benign.correct_decisions) as f64 / benign.responses as f64);
        report.per_class = per_class;
    }

    match last_error {
        Some(message) => Err(ReplayError::ConnectionFailure {
            message,
            failures: report.transport_failures,
            report: Box::new(report),
        }),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&[7.0], 0.99), 7.0);
        assert!(summarize_latencies(&[]).is_none());
    }

    #[test]
    fn body_keys_follow_schema() {
        let names = vec!["a".to_string(), "b".to_string()];
        let b = request_body(&names, &[1.5, 2.0], 9, Some("10.0.0.1"));
        assert_eq!(b["features"]["a"], 1.5);
        assert_eq!(b["flow_id"], "9");
        assert_eq!(b["source"], "10.0.0.1");
    }
}
