use pcfocus::corruptions::{corrupt_dataset, Family, SeveritySchedule};
use pcfocus::geometry::{generate_dataset, Split};
use pcfocus::network::{predict, train, TrainConfig};
use pcfocus::refocus::{refocus_infer, RefocusConfig};

#[test]
fn removed_points_are_enriched_in_outliers() {
    let data = generate_dataset(20, 256, 5, Split::Train).unwrap();
    let config = TrainConfig {
        epochs: 8,
        batch_size: 16,
        learning_rate: 1e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    let net = train(&data, None, &config, None).unwrap().params;
    let test = generate_dataset(5, 256, 5, Split::Test).unwrap();
    let corrupted = corrupt_dataset(
        &test,
        Family::AddGlobal,
        5,
        11,
        &SeveritySchedule::default(),
    )
    .unwrap();

    let (mut removed, mut removed_flagged, mut total, mut flagged) =
        (0usize, 0usize, 0usize, 0usize);
    for (sample, label) in corrupted.dataset.samples.iter().zip(&corrupted.labels) {
        let out = refocus_infer(&net, &sample.cloud, &RefocusConfig::default()).unwrap();
        let kept = &out.diagnostics.retained;
        let n = sample.cloud.len();
        for i in (0..n).filter(|i| kept.binary_search(i).is_err()) {
            removed += 1;
            removed_flagged += label.inserted[i] as usize;
        }
        total += n;
        flagged += label.count();
    }
    assert!(removed > 0);
    let removed_rate = removed_flagged as f64 / removed as f64;
    let base_rate = flagged as f64 / total as f64;
    assert!(removed_rate > base_rate, "{removed_rate} vs {base_rate}");
}

#[test]
fn full_retention_matches_plain_prediction() {
    let data = generate_dataset(2, 200, 8, Split::Train).unwrap();
    let net = train(
        &data,
        None,
        &TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        },
        None,
    )
    .unwrap()
    .params;
    for sample in &data.samples {
        let n = sample.cloud.len();
        let config = RefocusConfig {
            fixed_k: Some(n),
            ..RefocusConfig::default()
        };
        let out = refocus_infer(&net, &sample.cloud, &config).unwrap();
        let (class, probs) = predict(&net, &sample.cloud).unwrap();
        assert_eq!(out.class, class);
        assert_eq!(out.probs, probs);
    }
}
