use perfpred_core::datasets::{gen_synthetic, SyntheticSpec};
use perfpred_core::diagnostics::{
    descent_check, descent_trace, estimate_sigma, estimate_smoothness, sensitivity_check,
    w1_discrete, SmoothnessProbe, DESCENT_SUPPORT_CAP,
};
use perfpred_core::models::LinearSigmoidModel;
use perfpred_core::numkit::linalg::{dist1, norm1};
use perfpred_core::shiftmaps::{decoupled_grad_exact, LocationShiftMap};
use perfpred_core::{BaseDataset, LabelEncoding, Loss, RngStream, Sample, ShiftMap};

fn points(rng: &mut RngStream, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
        .collect()
}

// Minimum over all n! assignments by Heap's algorithm.
fn brute_force_w1(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |perm: &[usize]| {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| dist1(&p[i], &q[j]))
            .sum::<f64>()
    };
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

#[test]
fn hungarian_agrees_with_brute_force() {
    let mut rng = RngStream::new(1);
    for n in 1..=7 {
        for _ in 0..5 {
            let d = 1 + rng.index(3);
            let p = points(&mut rng, n, d);
            let q = points(&mut rng, n, d);
            let fast = w1_discrete(&p, &q).unwrap();
            let slow = brute_force_w1(&p, &q);
            assert!((fast - slow).abs() <= 1e-12, "n={n}: {fast} vs {slow}");
        }
    }
}

#[test]
fn translation_costs_its_l1_length() {
    let mut rng = RngStream::new(2);
    for n in 2..=7 {
        let p = points(&mut rng, n, 3);
        let v: Vec<f64> = (0..3).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let q: Vec<Vec<f64>> = p
            .iter()
            .map(|x| x.iter().zip(&v).map(|(a, b)| a + b).collect())
            .collect();
        let q_shuffled: Vec<Vec<f64>> = rng
            .permutation(n)
            .into_iter()
            .map(|i| q[i].clone())
            .collect();
        assert!((brute_force_w1(&p, &q_shuffled) - norm1(&v)).abs() <= 1e-12);
        assert!((w1_discrete(&p, &q_shuffled).unwrap() - norm1(&v)).abs() <= 1e-12);
    }
}

#[test]
fn w1_is_a_metric_on_samples() {
    let mut rng = RngStream::new(3);
    for _ in 0..20 {
        let n = 2 + rng.index(6);
        let a = points(&mut rng, n, 2);
        let b = points(&mut rng, n, 2);
        let c = points(&mut rng, n, 2);
        let ab = w1_discrete(&a, &b).unwrap();
        assert!((ab - w1_discrete(&b, &a).unwrap()).abs() <= 1e-12);
        assert!(ab <= w1_discrete(&a, &c).unwrap() + w1_discrete(&c, &b).unwrap() + 1e-9);
    }
}

#[test]
fn location_sensitivity_is_tight() {
    let mut rng = RngStream::new(4);
    for _ in 0..50 {
        let m = 1 + rng.index(8);
        let d = 1 + rng.index(3);
        let eps = rng.uniform_in(0.0, 3.0);
        let data = gen_synthetic(&SyntheticSpec {
            m,
            m_test: 1,
            d,
            flip_frac: 0.0,
            seed: rng.index(1000) as u64,
        })
        .unwrap();
        let map = LocationShiftMap::new(data.train, eps).unwrap();
        let t1 = rng.normal_vec(d);
        let t2 = rng.normal_vec(d);
        let r = sensitivity_check(&map, &t1, &t2).unwrap();
        assert!((r.w1 - eps * dist1(&t1, &t2)).abs() <= 1e-9);
        assert!(r.slack >= -1e-9);
    }
}

#[test]
fn zero_sensitivity_and_equal_parameters_give_zero_distance() {
    let data = gen_synthetic(&SyntheticSpec {
        m: 6,
        m_test: 1,
        d: 2,
        flip_frac: 0.0,
        seed: 5,
    })
    .unwrap();
    let still = LocationShiftMap::new(data.train.clone(), 0.0).unwrap();
    assert_eq!(
        sensitivity_check(&still, &[1.0, 2.0], &[-3.0, 0.5])
            .unwrap()
            .w1,
        0.0
    );
    let moving = LocationShiftMap::new(data.train, 2.0).unwrap();
    assert_eq!(
        sensitivity_check(&moving, &[1.0, 2.0], &[1.0, 2.0])
            .unwrap()
            .w1,
        0.0
    );
}

#[test]
fn sigma_matches_monte_carlo_variance() {
    let data = gen_synthetic(&SyntheticSpec {
        m: 30,
        m_test: 1,
        d: 3,
        flip_frac: 0.1,
        seed: 6,
    })
    .unwrap();
    let map = LocationShiftMap::new(data.train, 0.5).unwrap();
    let model = LinearSigmoidModel::new(1.0, 1e-3, 3).unwrap();
    let theta = RngStream::new(7).normal_vec(3);
    let est = estimate_sigma(&model, &theta, &map).unwrap();
    let mean = decoupled_grad_exact(&model, &theta, &theta, &map).unwrap();
    let mut rng = RngStream::new(8);
    let n = 100_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let z = map.shifted(rng.index(30), &theta).unwrap();
        let g = model.grad(&theta, &z).unwrap();
        let dev: f64 = g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        s += dev;
        s2 += dev * dev;
    }
    let mc = s / n as f64;
    let se = ((s2 / n as f64 - mc * mc) / n as f64).sqrt();
    assert!(
        (mc - est.variance).abs() <= 5.0 * se,
        "{mc} vs {} (se {se})",
        est.variance
    );
    assert!((est.sigma0 * est.sigma0 - est.variance).abs() <= 1e-15);
}

#[test]
fn smoothness_estimate_is_stable() {
    let data = gen_synthetic(&SyntheticSpec {
        m: 200,
        m_test: 1,
        d: 10,
        flip_frac: 0.1,
        seed: 9,
    })
    .unwrap();
    let model = LinearSigmoidModel::new(0.1, 1e-3, 10).unwrap();
    let probe = SmoothnessProbe::default();
    let est: Vec<f64> = (0..3)
        .map(|s| {
            estimate_smoothness(
                &model,
                data.train.samples(),
                &probe,
                10_000,
                &mut RngStream::new(10 + s),
            )
            .unwrap()
        })
        .collect();
    let mean = est.iter().sum::<f64>() / 3.0;
    for e in est {
        assert!((e - mean).abs() <= 0.1 * mean, "{e} vs mean {mean}");
    }
}

fn descent_instance(
    m: usize,
    d: usize,
    eps: f64,
    seed: u64,
) -> (LinearSigmoidModel, LocationShiftMap) {
    let data = gen_synthetic(&SyntheticSpec {
        m,
        m_test: 1,
        d,
        flip_frac: 0.1,
        seed,
    })
    .unwrap();
    (
        LinearSigmoidModel::new(0.1, 1e-3, d).unwrap(),
        LocationShiftMap::new(data.train, eps).unwrap(),
    )
}

#[test]
fn descent_holds_with_compliant_step() {
    let (model, map) = descent_instance(40, 5, 0.5, 11);
    let l_hat = estimate_smoothness(
        &model,
        map.base().samples(),
        &SmoothnessProbe::default(),
        10_000,
        &mut RngStream::new(12),
    )
    .unwrap();
    let theta0 = RngStream::new(13).normal_vec(5);
    let trace = descent_trace(
        &model,
        &map,
        &theta0,
        0.1 / l_hat,
        l_hat,
        200,
        &mut RngStream::new(14),
    )
    .unwrap();
    assert_eq!(trace.len(), 200);
    for (k, r) in trace.iter().enumerate() {
        assert!(r.holds, "step {k}: lhs {} rhs {}", r.lhs, r.rhs);
        assert!(r.lhs >= 0.0);
        let bound = r.residual_bound.unwrap();
        assert!(
            r.residual.abs() <= bound * (1.0 + 1e-9) + 1e-15,
            "step {k}: {} > {bound}",
            r.residual
        );
    }
}

#[test]
fn vanishing_step_collapses_both_sides() {
    let (model, map) = descent_instance(20, 3, 1.0, 15);
    let theta = RngStream::new(16).normal_vec(3);
    let r = descent_check(&model, &map, &theta, 1e-12, 1.0, DESCENT_SUPPORT_CAP).unwrap();
    assert!(r.holds);
    assert!(r.lhs <= 1e-11);
}

#[test]
fn zero_variance_support_descends_exactly() {
    let base = BaseDataset::new(
        vec![Sample::new(vec![0.5, -1.0], 1); 8],
        LabelEncoding::PlusMinusOne,
    )
    .unwrap();
    let map = LocationShiftMap::new(base, 0.3).unwrap();
    let model = LinearSigmoidModel::new(1.0, 1e-3, 2).unwrap();
    let r = descent_check(&model, &map, &[0.2, 0.7], 0.5, 0.3, DESCENT_SUPPORT_CAP).unwrap();
    assert!(r.sigma0_sq <= 1e-30);
    assert!(r.holds);
}

#[test]
fn oversized_support_is_rejected() {
    let (model, map) = descent_instance(65, 2, 0.1, 17);
    assert!(descent_check(&model, &map, &[0.0, 0.0], 0.1, 1.0, DESCENT_SUPPORT_CAP).is_err());
}
