mod common;

use std::collections::BTreeSet;

use common::{body, corpus, models, TestServer};
use fsnt_core::flowdata::ClassLabel;
use fsnt_core::learn::{model_to_bytes, save_model};
use fsnt_detectd::blocklist::BlockList;
use fsnt_detectd::{AppState, DetectionResponse, RuntimeConfig};
use serde_json::{json, Value};

async fn post(c: &reqwest::Client, url: &str, body: &Value) -> (u16, Value) {
    let r = c.post(url).json(body).send().await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

async fn get(c: &reqwest::Client, url: &str) -> Value {
    let r = c.get(url).send().await.unwrap();
    assert_eq!(r.status(), 200);
    r.json().await.unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[tokio::test]
async fn fresh_status_has_exact_fields() {
    let s = TestServer::with_model(models().0.clone()).await;
    let c = reqwest::Client::new();
    let v = get(&c, &s.url("/ddos/result")).await;
    let want: BTreeSet<String> = ["ddos", "accuracy", "calculation_time_s", "window", "timeline"]
        .map(String::from)
        .into();
    assert_eq!(keys(&v), want);
    assert_eq!(v["ddos"], false);
    assert_eq!(v["window"]["requests"], 0);
    assert_eq!(v["timeline"].as_array().unwrap().len(), 60);
    let stored = models().0.meta.evaluation.unwrap();
    assert_eq!(v["accuracy"].as_f64().unwrap(), stored.accuracy);
    assert_eq!(v["calculation_time_s"].as_f64().unwrap(), stored.execution_time_s);
    s.stop().await;
}

#[tokio::test]
async fn classify_without_model_is_unavailable() {
    let s = TestServer::start(AppState::new(RuntimeConfig::default(), BlockList::default(), None)).await;
    let c = reqwest::Client::new();
    let d = corpus(5, 3);
    let (status, _) = post(&c, &s.url("/classify"), &body(&d, 0)).await;
    assert_eq!(status, 503);
    let v = get(&c, &s.url("/ddos/result")).await;
    assert_eq!(v["accuracy"], 0.0);
    assert_eq!(get(&c, &s.url("/model")).await["loaded"], false);
    s.stop().await;
}

#[tokio::test]
async fn bad_requests_name_the_field() {
    let s = TestServer::with_model(models().0.clone()).await;
    let c = reqwest::Client::new();
    let d = corpus(5, 3);

    let mut b = body(&d, 0);
    b["features"].as_object_mut().unwrap().remove("Protocol");
    let (status, v) = post(&c, &s.url("/classify"), &b).await;
    assert_eq!(status, 400);
    assert_eq!(v["field"], "Protocol");

    let mut b = body(&d, 0);
    b["features"]["Flow Bytes/s"] = json!("NaN");
    let (status, v) = post(&c, &s.url("/classify"), &b).await;
    assert_eq!((status, v["field"].as_str()), (400, Some("Flow Bytes/s")));

    let (status, v) = post(&c, &s.url("/classify"), &json!({"flow_id": 1})).await;
    assert_eq!((status, v["field"].as_str()), (400, Some("features")));

    let mut b = body(&d, 0);
    b["source"] = json!("");
    assert_eq!(post(&c, &s.url("/classify"), &b).await.0, 400);

    let r = c.post(s.url("/classify")).body("{not json").send().await.unwrap();
    assert_eq!(r.status(), 400);

    // rejected requests are not counted
    assert_eq!(get(&c, &s.url("/ddos/result")).await["window"]["requests"], 0);
    s.stop().await;
}

#[tokio::test]
async fn responses_follow_the_decision_rule_and_window_conserves() {
    let s = TestServer::with_model(models().0.clone()).await;
    let c = reqwest::Client::new();
    let d = corpus(25, 7);
    let mut blocked = 0;
    for i in 0..100 {
        let mut b = body(&d, i);
        b["flow_id"] = json!(format!("x{i}"));
        let (status, v) = post(&c, &s.url("/classify"), &b).await;
        assert_eq!(status, 200);
        let want: BTreeSet<String> = [
            "flow_id",
            "class_id",
            "label",
            "probabilities",
            "ddos",
            "decision",
            "latency_ms",
            "model_id",
        ]
        .map(String::from)
        .into();
        assert_eq!(keys(&v), want);
        let r: DetectionResponse = serde_json::from_value(v).unwrap();
        assert_eq!(r.flow_id, format!("x{i}"));
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(r.class_id, fsnt_core::learn::argmax(&r.probabilities));
        assert_eq!(r.label, ClassLabel::from_id(r.class_id).unwrap().name());
        assert_eq!(r.ddos, r.class_id != 0);
        let p_attack = 1.0 - r.probabilities[0];
        assert_eq!(r.decision == fsnt_detectd::Decision::Block, r.ddos && p_attack >= 0.5);
        assert!(r.latency_ms >= 0.0);
        assert_eq!(r.model_id, "RF#1");
        blocked += usize::from(r.decision == fsnt_detectd::Decision::Block);
    }
    let v = get(&c, &s.url("/ddos/result")).await;
    assert_eq!(v["window"]["requests"], 100);
    let timeline_sum: u64 = v["timeline"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["requests"].as_u64().unwrap())
        .sum();
    assert_eq!(timeline_sum, 100);
    let per_class_sum: u64 = v["window"]["per_class"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["count"].as_u64().unwrap())
        .sum();
    assert_eq!(per_class_sum, 100);
    assert_eq!(v["window"]["blocked"], blocked as u64);
    assert_eq!(v["ddos"], blocked > 0);
    s.stop().await;
}

#[tokio::test]
async fn held_out_benign_flows_are_allowed() {
    let s = TestServer::with_model(models().0.clone()).await;
    let c = reqwest::Client::new();
    let d = corpus(100, 99);
    let mut ok = 0;
    let mut total = 0;
    for (i, r) in d.records().iter().enumerate() {
        if r.label != Some(ClassLabel::Benign) {
            continue;
        }
        let (_, v) = post(&c, &s.url("/classify"), &body(&d, i)).await;
        total += 1;
        ok += usize::from(v["class_id"] == 0 && v["decision"] == "ALLOW");
    }
    assert_eq!(total, 100);
    assert!(ok >= 95, "{ok}/100 benign flows allowed");
    s.stop().await;
}

#[tokio::test]
async fn blocklisted_source_is_blocked() {
    let s = TestServer::with_model(models().0.clone()).await;
    let c = reqwest::Client::new();
    let d = corpus(20, 5);
    let row = d.records().iter().position(|r| r.label == Some(ClassLabel::Benign)).unwrap();
    let r = c.put(s.url("/blocklist/198.51.100.23")).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let mut b = body(&d, row);
    b["source"] = json!("198.51.100.23");
    let (_, v) = post(&c, &s.url("/classify"), &b).await;
    assert_eq!(v["decision"], "BLOCK");
    b["source"] = json!("198.51.100.24");
    let (_, v) = post(&c, &s.url("/classify"), &b).await;
    assert_eq!(v["decision"], if v["ddos"] == true { "BLOCK" } else { "ALLOW" });
    s.stop().await;
}

#[tokio::test]
async fn model_endpoint_swaps_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let (rf, dt) = models();
    let dt_path = dir.path().join("dt.fsnt");
    save_model(dt, &dt_path).unwrap();
    let s = TestServer::with_model(rf.clone()).await;
    let c = reqwest::Client::new();

    let r = c.put(s.url("/model")).json(&json!({"path": dt_path})).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let v = get(&c, &s.url("/model")).await;
    assert_eq!(v["kind"], "DT");
    assert_eq!(v["model_id"], "DT#2");
    assert_eq!(v["accuracy"].as_f64(), dt.meta.evaluation.as_ref().map(|e| e.accuracy));

    let missing = dir.path().join("nope.fsnt");
    let r = c.put(s.url("/model")).json(&json!({"path": missing})).send().await.unwrap();
    assert_eq!(r.status(), 400);
    let r = c.put(s.url("/model")).json(&json!({"file": "x"})).send().await.unwrap();
    assert_eq!(r.status(), 400);

    let mut bytes = model_to_bytes(rf);
    let corrupt = dir.path().join("corrupt.fsnt");
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&corrupt, &bytes).unwrap();
    let r = c.put(s.url("/model")).json(&json!({"path": corrupt})).send().await.unwrap();
    assert_eq!(r.status(), 422);

    let mut bytes = model_to_bytes(rf);
    bytes[4] += 1;
    let future = dir.path().join("future.fsnt");
    std::fs::write(&future, &bytes).unwrap();
    let r = c.put(s.url("/model")).json(&json!({"path": future})).send().await.unwrap();
    assert_eq!(r.status(), 422);

    // failed loads leave the active model alone
    assert_eq!(get(&c, &s.url("/model")).await["model_id"], "DT#2");
    s.stop().await;
}

#[tokio::test]
async fn config_threshold_semantics() {
    let s = TestServer::with_model(models().0.clone()).await;
    let c = reqwest::Client::new();
    let d = corpus(200, 11);
    let rf = &models().0;
    // an attack prediction the forest is not unanimous about
    let row = d
        .records()
        .iter()
        .position(|r| {
            let p = rf.predict_proba(&r.values).unwrap();
            fsnt_core::learn::argmax(&p) != 0 && p[0] > 0.0
        })
        .expect("no borderline attack in corpus");

    let (_, before) = post(&c, &s.url("/classify"), &body(&d, row)).await;
    assert_eq!(before["ddos"], true);

    let r = c.put(s.url("/config")).json(&json!({"threshold": 1.0})).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let v: Value = r.json().await.unwrap();
    assert_eq!(v, json!({"threshold": 1.0, "window_seconds": 60}));
    assert_eq!(get(&c, &s.url("/config")).await["threshold"], 1.0);

    let (_, after) = post(&c, &s.url("/classify"), &body(&d, row)).await;
    assert_eq!(after["ddos"], true);
    assert_eq!(after["decision"], "ALLOW");

    for bad in [json!({"threshold": -0.1}), json!({"threshold": 1.5}), json!({"window_seconds": 0}), json!({"tau": 0.2})] {
        let r = c.put(s.url("/config")).json(&bad).send().await.unwrap();
        assert_eq!(r.status(), 400, "{bad}");
    }
    let r = c.put(s.url("/config")).json(&json!({"window_seconds": 5})).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let v = get(&c, &s.url("/ddos/result")).await;
    assert_eq!(v["timeline"].as_array().unwrap().len(), 5);
    assert_eq!(get(&c, &s.url("/config")).await, json!({"threshold": 1.0, "window_seconds": 5}));
    s.stop().await;
}

#[tokio::test]
async fn blocklist_is_durable_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blocklist.json");
    let c = reqwest::Client::new();

    let s = TestServer::start(AppState::new(RuntimeConfig::default(), BlockList::default(), Some(path.clone()))).await;
    for _ in 0..2 {
        let r = c.put(s.url("/blocklist/203.0.113.5")).send().await.unwrap();
        assert_eq!(r.status(), 200);
    }
    c.put(s.url("/blocklist/bot%20net")).send().await.unwrap();
    let v = get(&c, &s.url("/blocklist")).await;
    assert_eq!(v["count"], 2);
    let sources: Vec<&str> = v["entries"].as_array().unwrap().iter().map(|e| e["source"].as_str().unwrap()).collect();
    assert_eq!(sources, ["203.0.113.5", "bot net"]);
    // acknowledged mutations are already on disk
    assert_eq!(BlockList::load(&path).unwrap().len(), 2);

    let r = c.delete(s.url("/blocklist/bot%20net")).send().await.unwrap();
    assert_eq!(r.status(), 204);
    let r = c.delete(s.url("/blocklist/bot%20net")).send().await.unwrap();
    assert_eq!(r.status(), 404);
    let long = "a".repeat(257);
    let r = c.put(s.url(&format!("/blocklist/{long}"))).send().await.unwrap();
    assert_eq!(r.status(), 400);
    s.stop().await;

    let cfg = fsnt_detectd::ServiceConfig {
        blocklist_path: Some(path.clone()),
        ..Default::default()
    };
    let s = TestServer::start(AppState::from_config(&cfg).unwrap()).await;
    let v = get(&c, &s.url("/blocklist")).await;
    assert_eq!(v["count"], 1);
    assert_eq!(v["entries"][0]["source"], "203.0.113.5");
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn swap_under_load_never_mixes_models() {
    let dir = tempfile::tempdir().unwrap();
    let (rf, dt) = models();
    let paths = [dir.path().join("rf.fsnt"), dir.path().join("dt.fsnt")];
    save_model(rf, &paths[0]).unwrap();
    save_model(dt, &paths[1]).unwrap();
    let s = TestServer::with_model(rf.clone()).await;
    let c = reqwest::Client::new();
    let d = corpus(60, 13);

    let mut tasks = tokio::task::JoinSet::new();
    for i in 0..d.len() {
        let (c, url, b) = (c.clone(), s.url("/classify"), body(&d, i));
        tasks.spawn(async move {
            let r = c.post(url).json(&b).send().await.unwrap();
            (i, r.json::<DetectionResponse>().await.unwrap())
        });
    }
    let mut ids = vec!["RF#1".to_string()];
    for k in 0..10 {
        let r = c.put(s.url("/model")).json(&json!({"path": paths[(k + 1) % 2]})).send().await.unwrap();
        let v: Value = r.json().await.unwrap();
        ids.push(v["model_id"].as_str().unwrap().to_string());
    }
    let mut seen = BTreeSet::new();
    while let Some(res) = tasks.join_next().await {
        let (i, r) = res.unwrap();
        assert!(ids.contains(&r.model_id), "unknown model id {}", r.model_id);
        seen.insert(r.model_id.clone());
        let m = if r.model_id.starts_with("RF") { rf } else { dt };
        let want = m.predict_proba(&d.records()[i].values).unwrap();
        for (a, b) in r.probabilities.iter().zip(want) {
            assert_eq!(a.to_bits(), b.to_bits(), "{} served probabilities of another model", r.model_id);
        }
        assert_eq!(r.class_id, fsnt_core::learn::argmax(&want));
    }
    assert!(!seen.is_empty());
    s.stop().await;
}
