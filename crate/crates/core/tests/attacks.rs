use ndarray::{arr1, arr2, Array2, Axis};
use proptest::prelude::*;
use quivernet::attacks::*;
use quivernet::data_io::{gaussian_blobs, Split};
use quivernet::nn::{train, Activation, Mlp, MlpSpec, OptimizerConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rngs(n: usize, seed: u64) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| sample_rng(seed, i)).collect()
}

fn random_inputs(n: usize, d: usize, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || rng.random::<f32>())
}

fn run(cfg: AttackConfig, mlp: &Mlp<f32>, x: &Array2<f32>, y: &[usize], seed: u64) -> Array2<f32> {
    let attack = build_attack(&cfg).unwrap();
    attack.perturb(mlp, x.view(), y, &mut rngs(x.nrows(), seed))
}

fn trained_blob_net() -> (Mlp<f32>, quivernet::data_io::Dataset) {
    let tr = gaussian_blobs(1200, 20, 4, 0.15, 5, Split::Train).unwrap();
    let te = gaussian_blobs(400, 20, 4, 0.15, 5, Split::Test).unwrap();
    let mlp = Mlp::<f32>::init(&MlpSpec::new(20, vec![32, 32], 4).with_seed(1)).unwrap();
    let cfg = TrainConfig::new(OptimizerConfig::adam(), 1e-2, 32, 5);
    let (mlp, _) = train(mlp, &tr, None, &cfg).unwrap();
    (mlp, te)
}

fn linf(a: &Array2<f32>, b: &Array2<f32>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(r, s)| r.iter().zip(s).map(|(p, q)| (p - q).abs() as f64).fold(0.0, f64::max))
        .collect()
}

fn l2(a: &Array2<f32>, b: &Array2<f32>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(r, s)| r.iter().zip(s).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>().sqrt())
        .collect()
}

#[test]
fn zero_budget_is_identity() {
    let mlp = Mlp::<f32>::init(&MlpSpec::new(12, vec![10], 3).with_seed(2)).unwrap();
    let x = random_inputs(16, 12, 3);
    let y = mlp.predict_batch(x.view());
    for m in METHODS.iter().filter(|&&m| m != "deepfool") {
        let adv = run(AttackConfig::new(m).with_eps(0.0), &mlp, &x, &y, 1);
        assert_eq!(adv, x, "{m}");
    }
    let adv = run(AttackConfig::new("deepfool").with_steps(0), &mlp, &x, &y, 1);
    assert_eq!(adv, x);
}

#[test]
fn fgsm_logistic_oracle() {
    // logits (0, w x + b): the loss at label 0 grows with x iff w > 0
    for (w, b) in [(2.0f32, -0.3f32), (-1.5, 0.2)] {
        let spec = MlpSpec::new(1, vec![], 2).with_activation(Activation::Identity);
        let mlp = Mlp::from_parts(spec, vec![arr2(&[[0.0], [w]])], vec![arr1(&[0.0, b])]).unwrap();
        let x = arr2(&[[0.4f32], [0.7]]);
        let adv = run(AttackConfig::new("fgsm").with_eps(0.1), &mlp, &x, &[0, 0], 0);
        let expected = x.mapv(|v| v + 0.1 * w.signum());
        for (a, e) in adv.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-6);
        }
    }
}

#[test]
fn deepfool_linear_oracle() {
    let w = arr1(&[0.8f64, -0.5, 0.3]);
    let b = 0.05;
    let spec = MlpSpec::new(3, vec![], 2).with_activation(Activation::Identity);
    let weights = arr2(&[[0.0f32, 0.0, 0.0], [0.8, -0.5, 0.3]]);
    let mlp = Mlp::from_parts(spec, vec![weights], vec![arr1(&[0.0, 0.05])]).unwrap();
    let x = arr2(&[[0.1f32, 0.7, 0.2]]);
    let f = w.dot(&x.row(0).mapv(|v| v as f64)) + b;
    assert!(f < 0.0, "sample starts in class 0");
    let adv = run(AttackConfig::new("deepfool"), &mlp, &x, &[0], 0);
    let dist = l2(&adv, &x)[0];
    let expected = 1.02 * f.abs() / w.dot(&w).sqrt();
    assert!((dist - expected).abs() < 1e-5, "{dist} vs {expected}");
    assert_eq!(mlp.predict_batch(adv.view()), vec![1]);

    // a sample already off its label stays put
    let adv = run(AttackConfig::new("deepfool"), &mlp, &x, &[1], 0);
    assert_eq!(adv, x);
}

#[test]
fn pgd_single_step_is_fgsm() {
    let mlp = Mlp::<f32>::init(&MlpSpec::new(8, vec![6], 3).with_seed(4)).unwrap();
    let x = random_inputs(20, 8, 5);
    let y = mlp.predict_batch(x.view());
    let pgd = run(
        AttackConfig::new("pgd").with_eps(0.1).with_alpha(0.03).with_steps(1).with_random_start(false),
        &mlp,
        &x,
        &y,
        0,
    );
    let fgsm = run(AttackConfig::new("fgsm").with_eps(0.03), &mlp, &x, &y, 0);
    assert_eq!(pgd, fgsm);
}

#[test]
fn mifgsm_without_decay_is_iterated_fgsm() {
    let mlp = Mlp::<f32>::init(&MlpSpec::new(8, vec![6], 3).with_seed(6)).unwrap();
    let x = random_inputs(20, 8, 7);
    let y = mlp.predict_batch(x.view());
    let mi = run(AttackConfig::new("mifgsm").with_decay(0.0), &mlp, &x, &y, 0);
    let pgd = run(AttackConfig::new("pgd").with_random_start(false), &mlp, &x, &y, 0);
    assert_eq!(mi, pgd);
}

#[test]
fn pgd_l2_single_step_is_normalized_gradient_step() {
    let mlp = Mlp::<f32>::init(&MlpSpec::new(8, vec![6], 3).with_seed(8)).unwrap();
    // keep away from the box so clipping is inactive
    let x = random_inputs(10, 8, 9).mapv(|v| 0.4 + 0.2 * v);
    let y = mlp.predict_batch(x.view());
    let adv = run(
        AttackConfig::new("pgd_l2").with_eps(1.0).with_alpha(0.05).with_steps(1).with_random_start(false),
        &mlp,
        &x,
        &y,
        0,
    );
    let (_, g) = mlp.loss_input_gradient(x.view(), &y);
    for ((a, xr), gr) in adv.rows().into_iter().zip(x.rows()).zip(g.rows()) {
        let n = gr.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        for ((a, xv), gv) in a.iter().zip(xr).zip(gr) {
            let e = *xv as f64 + 0.05 * *gv as f64 / n;
            assert!((*a as f64 - e).abs() < 1e-6);
        }
    }
}

#[test]
fn gaussian_noise_mean_absolute_deviation() {
    let mlp = Mlp::<f32>::init(&MlpSpec::new(50, vec![], 2)).unwrap();
    let x = Array2::from_elem((400, 50), 0.5f32);
    let std = 0.05;
    let adv = run(AttackConfig::new("gn").with_eps(std), &mlp, &x, &[0; 400], 3);
    let mad = (&adv - &x).mapv(|v| v.abs() as f64).mean().unwrap();
    let expected = std * (2.0 / std::f64::consts::PI).sqrt();
    assert!((mad - expected).abs() < 0.02 * expected, "{mad} vs {expected}");
    assert_eq!(adv, run(AttackConfig::new("gn").with_eps(std), &mlp, &x, &[0; 400], 3));
    assert_ne!(adv, run(AttackConfig::new("gn").with_eps(std), &mlp, &x, &[0; 400], 4));
}

#[test]
fn pgd_increases_loss_on_trained_net() {
    let (mlp, te) = trained_blob_net();
    let x = te.images().clone();
    let y = te.labels().to_vec();
    let adv = run(AttackConfig::new("pgd"), &mlp, &x, &y, 11);
    let per_row = |z: &Array2<f32>| -> Vec<f64> {
        (0..z.nrows())
            .map(|i| mlp.loss_input_gradient(z.select(Axis(0), &[i]).view(), &y[i..=i]).0)
            .collect()
    };
    let (before, after) = (per_row(&x), per_row(&adv));
    let up = before.iter().zip(&after).filter(|(b, a)| a >= b).count();
    assert!(up as f64 >= 0.9 * x.nrows() as f64, "{up} of {}", x.nrows());
}

#[test]
fn deepfool_perturbs_less_than_pgd() {
    let (mlp, te) = trained_blob_net();
    let x = te.images().clone();
    let y = te.labels().to_vec();
    let df = run(AttackConfig::new("deepfool"), &mlp, &x, &y, 0);
    let pgd = run(AttackConfig::new("pgd").with_eps(0.3).with_alpha(0.03).with_steps(20), &mlp, &x, &y, 0);
    let flip = |z: &Array2<f32>| mlp.predict_batch(z.view()).iter().zip(&y).map(|(p, t)| p != t).collect::<Vec<_>>();
    let (fd, fp) = (flip(&df), flip(&pgd));
    let both: Vec<usize> = (0..y.len()).filter(|&i| fd[i] && fp[i]).collect();
    assert!(both.len() > y.len() / 4, "too few common flips: {}", both.len());
    let (nd, np) = (l2(&df, &x), l2(&pgd, &x));
    let mean = |v: &[f64]| both.iter().map(|&i| v[i]).sum::<f64>() / both.len() as f64;
    assert!(mean(&nd) <= mean(&np), "{} vs {}", mean(&nd), mean(&np));
}

#[test]
fn results_do_not_depend_on_batching() {
    let mlp = Mlp::<f32>::init(&MlpSpec::new(6, vec![5], 3).with_seed(3)).unwrap();
    let x = random_inputs(9, 6, 1);
    let y = mlp.predict_batch(x.view());
    for m in METHODS {
        let attack = build_attack(&AttackConfig::new(m)).unwrap();
        let whole = attack.perturb(&mlp, x.view(), &y, &mut rngs(9, 42));
        for i in 0..9 {
            let row = x.select(Axis(0), &[i]);
            let mut rng = vec![sample_rng(42, i)];
            let single = attack.perturb(&mlp, row.view(), &y[i..=i], &mut rng);
            assert_eq!(single.row(0), whole.row(i), "{m} row {i}");
        }
    }
}

#[test]
fn registry_names_and_errors() {
    let registry = attack_registry();
    for m in METHODS {
        assert!(registry.contains(m));
    }
    assert!(build_attack(&AttackConfig::new("onepixel")).is_err());
    assert_eq!(build_attack(&AttackConfig::new("PGDL2")).unwrap().name(), "PGDL2");
    assert_eq!(build_attack(&AttackConfig::new("fgsm")).unwrap().budget(), Budget::Linf(8.0 / 255.0));
}

#[test]
fn suite_bookkeeping_and_persistence() {
    let (mlp, te) = trained_blob_net();
    assert!(run_attack_suite(&mlp, &te, &[], 0).unwrap().is_empty());
    let configs = vec![AttackConfig::new("fgsm").with_eps(0.2), AttackConfig::new("gn")];
    let sets = run_attack_suite(&mlp, &te, &configs, 17).unwrap();
    assert_eq!(sets.len(), 2);
    let preds = mlp.predict_batch(te.images().view());
    let correct = (0..te.len()).filter(|&i| preds[i] == te.label(i)).count();
    for s in &sets {
        assert_eq!(s.len(), correct);
        assert!(s.indices.iter().all(|&i| preds[i] == te.label(i)));
        let again = mlp.predict_batch(s.inputs.view());
        assert_eq!(again, s.adversarial_pred);
        assert_eq!(s.flip_count(), s.adversarial_pred.iter().zip(&s.original_pred).filter(|(a, b)| a != b).count());
    }
    assert!(sets[0].flip_count() > 0);
    assert_eq!(sets, run_attack_suite(&mlp, &te, &configs, 17).unwrap());

    let dir = tempfile::tempdir().unwrap();
    sets[0].write(dir.path(), "fgsm", "run").unwrap();
    assert_eq!(AdversarialSet::read(dir.path(), "fgsm").unwrap(), sets[0]);
}

#[test]
fn untrained_net_suite_completes() {
    let te = gaussian_blobs(60, 10, 3, 0.2, 1, Split::Test).unwrap();
    let mlp = Mlp::<f32>::init(&MlpSpec::new(10, vec![8], 3).with_seed(9)).unwrap();
    let configs: Vec<AttackConfig> = METHODS.iter().map(|m| AttackConfig::new(m)).collect();
    let sets = run_attack_suite(&mlp, &te, &configs, 0).unwrap();
    assert_eq!(sets.len(), METHODS.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn budgets_hold(seed in any::<u64>(), eps in 0.0f64..0.5, n in 1usize..6) {
        let mlp = Mlp::<f32>::init(&MlpSpec::new(7, vec![6, 5], 4).with_seed(seed)).unwrap();
        let x = random_inputs(n, 7, seed ^ 1);
        let y = mlp.predict_batch(x.view());
        for m in ["fgsm", "rfgsm", "ffgsm", "pgd", "mifgsm"] {
            let adv = run(AttackConfig::new(m).with_eps(eps), &mlp, &x, &y, seed);
            prop_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(linf(&adv, &x).iter().all(|&d| d <= eps + 1e-6), "{}", m);
        }
        let l2eps = eps * 4.0;
        let adv = run(AttackConfig::new("pgd_l2").with_eps(l2eps).with_alpha(l2eps / 3.0), &mlp, &x, &y, seed);
        prop_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(l2(&adv, &x).iter().all(|&d| d <= l2eps + 1e-6));
        for m in ["gn", "deepfool"] {
            let adv = run(AttackConfig::new(m), &mlp, &x, &y, seed);
            prop_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
