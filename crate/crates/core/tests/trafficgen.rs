use fsnt_core::flowdata::{read_csv, write_csv_to, FeatureSchema, SchemaMode, CANONICAL_FEATURES};
use fsnt_core::trafficgen::{generate_dataset, within_physical_bounds, GeneratorSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn samples_are_physical(seed in any::<u64>(), counts in prop::array::uniform4(0usize..60)) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let d = generate_dataset(&GeneratorSpec::with_counts(counts, seed)).unwrap();
        prop_assert_eq!(d.class_counts(), counts);
        for r in d.records() {
            prop_assert!(within_physical_bounds(&r.values), "{:?}", r.values);
            let proto = r.values[2];
            prop_assert!(proto == 6.0 || proto == 17.0);
        }
    }
}

#[test]
fn csv_round_trip_preserves_records() {
    let d = generate_dataset(&GeneratorSpec::with_counts([5, 5, 5, 5], 1)).unwrap();
    let mut buf = Vec::new();
    write_csv_to(&d, &mut buf).unwrap();
    let header = String::from_utf8_lossy(&buf).lines().next().unwrap().to_string();
    assert_eq!(header, format!("{},Label", CANONICAL_FEATURES.join(",")));
    let back = read_csv(&buf[..], &FeatureSchema::canonical(), SchemaMode::Strict).unwrap();
    assert_eq!(back, d);
}

#[test]
fn attack_signatures() {
    let d = generate_dataset(&GeneratorSpec::with_counts([0, 400, 400, 400], 2)).unwrap();
    let share = |class: usize, pred: &dyn Fn(&[f64]) -> bool| {
        let rows: Vec<_> = d.records().iter().filter(|r| r.label.unwrap().id() == class).collect();
        rows.iter().filter(|r| pred(&r.values)).count() as f64 / rows.len() as f64
    };
    assert!(share(1, &|v| v[1] == 53.0) > 0.7);
    assert!(share(2, &|v| v[1] == 123.0) > 0.7);
    // UDP floods carry almost no backward traffic
    assert!(share(3, &|v| v[5] <= 1.0) > 0.9);
    // NTP amplification replies are near MTU size
    assert!(share(2, &|v| v[14] > 1000.0) > 0.9);
}
