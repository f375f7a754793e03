mod common;

use common::*;
use decaf::regress::{active_learn, fit, fit_vector, ActiveLearning, Candidate, VectorMode, VectorSample};
use decaf::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixed_featurizer() -> Featurizer {
    Featurizer::new(default_grid(), DensityModel::standard(), FrameSource::Fixed(CanonicalFrame::identity()))
}

fn random_fingerprints(seed: u64, n: usize) -> Vec<Fingerprint> {
    let f = fixed_featurizer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=5);
            let atoms = random_atoms(&mut rng, k, 3.0);
            f.extract(&neighborhood(&atoms, 6.0)).unwrap().remove(0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_is_linear_in_targets(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let x = random_fingerprints(seed, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let y1: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
        let hp = GPHyperparameters::new(1.0, 2.0);
        let m1 = GPModel::with_hyperparameters(x.clone(), y1, hp).unwrap();
        let m2 = GPModel::with_hyperparameters(x.clone(), y2, hp).unwrap();
        let m3 = GPModel::with_hyperparameters(x, mix, hp).unwrap();
        for q in random_fingerprints(seed ^ 2, 4) {
            let want = a * m1.predict(&q).unwrap().0 + b * m2.predict(&q).unwrap().0;
            prop_assert!((m3.predict(&q).unwrap().0 - want).abs() < 1e-6 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn variance_never_grows_with_more_data(seed in any::<u64>()) {
        let x = random_fingerprints(seed, 10);
        let y = vec![0.0; 10];
        let hp = GPHyperparameters::new(1.5, 2.0);
        let small = GPModel::with_hyperparameters(x[..5].to_vec(), y[..5].to_vec(), hp).unwrap();
        let large = GPModel::with_hyperparameters(x, y, hp).unwrap();
        for q in random_fingerprints(seed ^ 3, 6) {
            let (_, v_small) = small.predict(&q).unwrap();
            let (_, v_large) = large.predict(&q).unwrap();
            prop_assert!(v_large <= v_small + 1e-9);
            prop_assert!((0.0..=hp.output_scale.powi(2) + 1e-12).contains(&v_large));
        }
    }
}

#[test]
fn fit_interpolates_training_targets() {
    let x = random_fingerprints(5, 25);
    let y: Vec<f64> = x.iter().map(|f| (0.3 * f.norm()).cos()).collect();
    let m = fit(x.clone(), y.clone(), &HyperSearch::default()).unwrap();
    let hp = m.hyperparameters();
    for (f, t) in x.iter().zip(&y) {
        let (mean, var) = m.predict(f).unwrap();
        assert!((mean - t).abs() < 10.0 * hp.jitter.sqrt() * hp.output_scale);
        assert!(var < 10.0 * hp.noise());
    }
}

#[test]
fn duplicate_inputs_escalate_jitter() {
    let x = random_fingerprints(6, 3);
    let inputs = vec![x[0].clone(), x[0].clone(), x[1].clone(), x[2].clone()];
    let hp = GPHyperparameters { jitter: 1e-14, ..GPHyperparameters::new(1.0, 1.0) };
    let m = GPModel::with_hyperparameters(inputs, vec![1.0, 1.0, 0.0, 2.0], hp).unwrap();
    assert!(m.hyperparameters().jitter >= 1e-14);
    assert!(m.predict(&x[0]).unwrap().0.is_finite());
}

#[test]
fn active_learning_reaches_target() {
    let x = random_fingerprints(8, 40);
    let labels: Vec<f64> = x.iter().map(|f| (0.2 * f.norm()).sin()).collect();
    let pool: Vec<Candidate> = x.into_iter().map(|f| Candidate { fingerprints: vec![f] }).collect();
    let settings = ActiveLearning { max_uncertainty: 0.05, max_samples: 40, ..ActiveLearning::default() };
    let res = active_learn(&pool, &[0, 1], |i| Ok(labels[i]), None, &HyperSearch::default(), &settings).unwrap();
    assert!(res.converged);
    assert!(res.trace.last().unwrap().max_uncertainty < 0.05);
    let mut seen = res.training.clone();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len(), res.training.len());
}

#[test]
fn oracle_errors_propagate() {
    let x = random_fingerprints(9, 5);
    let pool: Vec<Candidate> = x.into_iter().map(|f| Candidate { fingerprints: vec![f] }).collect();
    let res = active_learn(
        &pool,
        &[0, 1],
        |i| if i < 2 { Ok(i as f64) } else { Err("oracle down".into()) },
        None,
        &HyperSearch::default(),
        &ActiveLearning { max_uncertainty: 1e-9, ..ActiveLearning::default() },
    );
    assert!(res.is_err());
}

#[test]
fn vector_model_is_rotation_equivariant() {
    let f = featurizer(MinisumKernel::SquareAngle);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let field = |atoms: &[(&str, Vec3)]| atoms.iter().map(|(_, x)| x * (-x.norm()).exp()).sum::<Vec3>();
    let samples: Vec<VectorSample> = (0..12)
        .map(|_| {
            let atoms = random_atoms(&mut rng, 4, 2.5);
            VectorSample { fingerprints: f.extract(&neighborhood(&atoms, 6.0)).unwrap(), vector: field(&atoms) }
        })
        .collect();
    let model = fit_vector(&samples, VectorMode::Molecular, &HyperSearch::default()).unwrap();
    for _ in 0..5 {
        let atoms = random_atoms(&mut rng, 4, 2.5);
        let r = random_rotation(&mut rng);
        let (a, _) = model.predict(&f.extract(&neighborhood(&atoms, 6.0)).unwrap()).unwrap();
        let (b, _) = model.predict(&f.extract(&neighborhood(&rotated(&atoms, &r), 6.0)).unwrap()).unwrap();
        assert!((r * a - b).norm() < 1e-6 * (1.0 + a.norm()));
    }
}
