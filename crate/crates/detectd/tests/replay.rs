mod common;

use std::time::Instant;

use common::{corpus, models, TestServer};
use fsnt_core::flowdata::{ClassLabel, Dataset};
use fsnt_detectd::{replay, ReplayError, ReplayOptions};

fn only(d: &Dataset, class: ClassLabel, n: usize) -> Dataset {
    let idx: Vec<usize> = (0..d.len()).filter(|&i| d.records()[i].label == Some(class)).take(n).collect();
    d.select(&idx)
}

#[tokio::test]
async fn unreachable_target_sends_nothing() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let d = corpus(5, 1);
    match replay(&d, &format!("http://{addr}"), &ReplayOptions::default()).await {
        Err(ReplayError::ConnectionFailure { report, .. }) => {
            assert_eq!(report.sent, 0);
            assert_eq!(report.responses + report.failures, 0);
        }
        other => panic!("expected ConnectionFailure, got {other:?}"),
    }
}

#[tokio::test]
async fn benign_replay_is_not_flagged() {
    let s = TestServer::with_model(models().0.clone()).await;
    let d = only(&corpus(150, 21), ClassLabel::Benign, 100);
    let opts = ReplayOptions {
        shuffle_seed: Some(3),
        ..Default::default()
    };
    let r = replay(&d, &s.base, &opts).await.unwrap();
    assert_eq!(r.sent, 100);
    assert_eq!(r.sent, r.responses + r.failures);
    assert_eq!(r.failures, 0);
    assert!(r.blocked <= 5, "{} benign flows blocked", r.blocked);
    assert_eq!(r.benign_block_rate, Some(r.blocked as f64 / 100.0));
    assert_eq!(r.attack_recall, None);
    s.stop().await;
}

#[tokio::test]
async fn mixed_replay_reports_per_class_recall() {
    let s = TestServer::with_model(models().0.clone()).await;
    let d = corpus(50, 22);
    let r = replay(&d, &s.base, &ReplayOptions::default()).await.unwrap();
    assert_eq!((r.sent, r.responses), (200, 200));
    assert_eq!(r.allowed + r.blocked, 200);
    assert_eq!(r.per_class.iter().map(|c| c.flows).sum::<usize>(), 200);
    assert!(r.attack_recall.unwrap() >= 0.9);
    assert!(r.per_class.iter().all(|c| c.recall.is_some()));
    let lat = r.latency.unwrap();
    assert!(lat.p50_ms <= lat.p99_ms && lat.p99_ms <= lat.max_ms);

    // server-side window saw every replayed flow
    let v: serde_json::Value = reqwest::get(s.url("/ddos/result")).await.unwrap().json().await.unwrap();
    assert_eq!(v["window"]["requests"], 200);
    assert_eq!(v["window"]["blocked"], r.blocked as u64);
    s.stop().await;
}

#[tokio::test]
async fn pacing_is_honoured() {
    let s = TestServer::with_model(models().1.clone()).await;
    let d = corpus(13, 4);
    let d = d.select(&(0..50).collect::<Vec<_>>());
    let opts = ReplayOptions {
        rate: Some(10.0),
        ..Default::default()
    };
    let t = Instant::now();
    let r = replay(&d, &s.base, &opts).await.unwrap();
    assert!(t.elapsed().as_secs_f64() >= 4.9);
    assert_eq!(r.sent, 50);
    s.stop().await;
}

#[tokio::test]
async fn invalid_rate_rejected() {
    let d = corpus(2, 1);
    for rate in [0.0, -1.0, f64::NAN] {
        let opts = ReplayOptions {
            rate: Some(rate),
            ..Default::default()
        };
        assert!(matches!(
            replay(&d, "http://127.0.0.1:1", &opts).await,
            Err(ReplayError::InvalidOption(_))
        ));
    }
}
