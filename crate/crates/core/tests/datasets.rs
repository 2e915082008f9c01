use perfpred_core::datasets::{gen_synthetic, split, SyntheticSpec};
use perfpred_core::models::{accuracy, LinearSigmoidModel};
use perfpred_core::{BaseDataset, LabelEncoding, RngStream, Sample};

#[test]
fn teacher_is_perfect_without_flips() {
    let data = gen_synthetic(&SyntheticSpec {
        flip_frac: 0.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let model = LinearSigmoidModel::new(0.1, 1e-3, 10).unwrap();
    assert_eq!(
        accuracy(&model, &data.theta_o, data.train.samples()).unwrap(),
        1.0
    );
    assert!(data.flipped.is_empty());
}

#[test]
fn ten_percent_flips_cost_ten_percent_accuracy() {
    let data = gen_synthetic(&SyntheticSpec::default()).unwrap();
    let model = LinearSigmoidModel::new(0.1, 1e-3, 10).unwrap();
    assert_eq!(data.train.len(), 800);
    assert_eq!(data.test.len(), 200);
    assert_eq!(data.flipped.len(), 80);
    assert_eq!(
        accuracy(&model, &data.theta_o, data.train.samples()).unwrap(),
        0.9
    );
    assert_eq!(
        accuracy(&model, &data.theta_o, data.test.samples()).unwrap(),
        1.0
    );
}

#[test]
fn random_labels_give_chance_accuracy() {
    let m = 4000;
    let model = LinearSigmoidModel::new(1.0, 0.0, 5).unwrap();
    let mut total = 0.0;
    for seed in 0..20 {
        let mut rng = RngStream::new(seed);
        let samples: Vec<Sample> = (0..m)
            .map(|_| {
                let x = (0..5).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                Sample::new(x, if rng.uniform() < 0.5 { -1 } else { 1 })
            })
            .collect();
        let theta = rng.normal_vec(5);
        let acc = accuracy(&model, &theta, &samples).unwrap();
        assert!(
            (acc - 0.5).abs() <= 3.0 / (m as f64).sqrt(),
            "seed {seed}: {acc}"
        );
        total += acc;
    }
    assert!((total / 20.0 - 0.5).abs() <= 3.0 / (20.0 * m as f64).sqrt());
}

#[test]
fn zero_parameters_predict_positive_class() {
    let data = gen_synthetic(&SyntheticSpec {
        m: 300,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let model = LinearSigmoidModel::new(0.1, 1e-3, 10).unwrap();
    let positives = data.train.samples().iter().filter(|z| z.y == 1).count() as f64 / 300.0;
    assert_eq!(
        accuracy(&model, &[0.0; 10], data.train.samples()).unwrap(),
        positives
    );
}

#[test]
fn features_are_centred() {
    for seed in 0..10 {
        let data = gen_synthetic(&SyntheticSpec {
            m: 100_000,
            m_test: 1,
            d: 4,
            flip_frac: 0.0,
            seed,
        })
        .unwrap();
        for k in 0..4 {
            let mean: f64 = data.train.samples().iter().map(|z| z.x[k]).sum::<f64>() / 100_000.0;
            assert!(mean.abs() <= 0.02, "seed {seed} coord {k}: {mean}");
            assert!(data.train.samples().iter().all(|z| z.x[k].abs() <= 1.0));
        }
    }
}

#[test]
fn train_and_test_streams_are_independent() {
    let spec = SyntheticSpec {
        m: 50,
        m_test: 50,
        d: 3,
        flip_frac: 0.0,
        seed: 5,
    };
    let data = gen_synthetic(&spec).unwrap();
    assert_ne!(data.train.samples(), data.test.samples());
    let bigger = gen_synthetic(&SyntheticSpec { m: 80, ..spec }).unwrap();
    assert_eq!(bigger.test.samples(), data.test.samples());
}

#[test]
fn split_partitions_the_data() {
    let samples: Vec<Sample> = (0..37)
        .map(|i| Sample::new(vec![i as f64], i % 2))
        .collect();
    let data = BaseDataset::new(samples, LabelEncoding::ZeroOne).unwrap();
    let (train, test) = split(&data, 0.8, 6).unwrap();
    assert_eq!((train.len(), test.len()), (29, 8));
    let mut ids: Vec<i64> = train
        .samples()
        .iter()
        .chain(test.samples())
        .map(|z| z.x[0] as i64)
        .collect();
    ids.sort();
    assert_eq!(ids, (0..37).collect::<Vec<_>>());
    assert_eq!(split(&data, 0.8, 6).unwrap().0, train);
    assert!(split(&data, 0.0, 6).is_err());
    assert!(split(&data, 1.0, 6).is_err());
}
