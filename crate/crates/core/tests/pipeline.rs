use fsnt_core::eval::EvalOptions;
use fsnt_core::features::FeatureError;
use fsnt_core::flowdata::{Dataset, FlowDataError, FlowRecord};
use fsnt_core::learn::{EstimatorKind, EstimatorSpec};
use fsnt_core::pipeline::{compare, prepare, train_model, PipelineConfig, PipelineError};
use fsnt_core::trafficgen::{generate_dataset, GeneratorSpec};

fn quick() -> PipelineConfig {
    PipelineConfig {
        eval: EvalOptions {
            repeats: 1,
            timing: false,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn rejects_unlabeled_and_oversized_k() {
    let d = generate_dataset(&GeneratorSpec::with_counts([10, 10, 10, 10], 1)).unwrap();
    let unlabeled = Dataset::new(
        d.schema().clone(),
        d.records().iter().map(|r| FlowRecord::new(r.values.clone(), None)).collect(),
    )
    .unwrap();
    assert!(matches!(
        prepare(&unlabeled, &quick()),
        Err(PipelineError::Data(FlowDataError::NotLabeled))
    ));
    let cfg = PipelineConfig {
        components: Some(25),
        ..quick()
    };
    assert!(matches!(
        prepare(&d, &cfg),
        Err(PipelineError::Feature(FeatureError::KTooLarge { k: 25, dim: 24 }))
    ));
}

#[test]
fn dirty_rows_are_cleaned_before_split() {
    let d = generate_dataset(&GeneratorSpec::with_counts([20, 20, 20, 20], 2)).unwrap();
    let mut recs = d.records().to_vec();
    recs.push(recs[0].clone());
    recs.push(recs[1].clone());
    let mut bad = recs[2].clone();
    bad.values[4] = f64::NAN;
    recs.push(bad);
    let dirty = Dataset::new(d.schema().clone(), recs).unwrap();
    let p = prepare(&dirty, &quick()).unwrap();
    assert_eq!(p.dropped_invalid, 1);
    assert_eq!(p.duplicates, 2);
    assert_eq!(p.train.len() + p.test_raw.len(), 80);
    assert_eq!(p.train.schema().count(), 24);
}

#[test]
fn forest_generalizes_across_generator_seeds() {
    let train = generate_dataset(&GeneratorSpec::with_counts([800, 1500, 800, 1750], 42)).unwrap();
    let held_out = generate_dataset(&GeneratorSpec::with_counts([400, 750, 400, 875], 4242)).unwrap();
    let p = prepare(&train, &quick()).unwrap();
    let (m, report) = train_model(&p, &EstimatorSpec::new(EstimatorKind::Rf).with("trees", 40.0), &quick().eval).unwrap();
    assert!(report.accuracy() >= 0.95, "{}", report.accuracy());
    let correct = held_out
        .records()
        .iter()
        .filter(|r| m.predict(&r.values).unwrap() == r.label.unwrap())
        .count();
    let acc = correct as f64 / held_out.len() as f64;
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

#[test]
fn comparison_has_one_sorted_row_per_model() {
    let d = generate_dataset(&GeneratorSpec::with_counts([150, 280, 150, 320], 3)).unwrap();
    let p = prepare(&d, &quick()).unwrap();
    let specs: Vec<EstimatorSpec> = EstimatorKind::ALL
        .iter()
        .map(|&k| match k {
            EstimatorKind::Rf => EstimatorSpec::new(k).with("trees", 20.0),
            EstimatorKind::Gbt => EstimatorSpec::new(k).with("rounds", 20.0),
            _ => EstimatorSpec::new(k),
        })
        .collect();
    let (t, models) = compare(&p, &specs, &quick().eval).unwrap();
    assert_eq!(t.rows.len(), 8);
    assert_eq!(models.len(), 8);
    for w in t.rows.windows(2) {
        assert!(w[0].accuracy >= w[1].accuracy);
    }
    assert!(t.rows.iter().all(|r| r.execution_time_s.is_none()));
}
