use boostvi::density::{Component, Family};
use boostvi::exec::Exec;
use boostvi::mixture::Mixture;
use boostvi::rng::SeedTree;
use boostvi::targets::metrics::{auroc, exact_kl_oracle};
use boostvi::targets::{synthetic_logistic, BlrModel, Dataset, GaussianMixtureTarget, SyntheticLogistic, Target};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn fd_hessian(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = w.len();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let at = |di: f64, dj: f64| {
                let mut x = w.to_vec();
                x[i] += di;
                x[j] += dj;
                f(&x)
            };
            out[i][j] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
        }
    }
    out
}

/// Cholesky succeeds iff the symmetric matrix is positive definite.
fn is_positive_definite(a: &[Vec<f64>]) -> bool {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if v <= 0.0 {
                    return false;
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

#[test]
fn blr_log_joint_is_concave() {
    let mut rng = SeedTree::new(201).stream("blr", &[]);
    for d in 1..=3 {
        let (ds, _) = synthetic_logistic(&SyntheticLogistic { dim: d, rows: 60, label_noise: 0.1, train_fraction: 1.0, seed: d as u64 })
            .unwrap();
        let model = BlrModel::from_train(&ds).unwrap();
        for _ in 0..5 {
            let w: Vec<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let h = fd_hessian(|x| model.log_density(x), &w, 1e-3);
            let neg: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
            assert!(is_positive_definite(&neg), "d={d} w={w:?} hessian {h:?}");
        }
    }
}

#[test]
fn standardized_train_split_has_zero_mean_unit_variance() {
    let mut rng = SeedTree::new(202).stream("data", &[]);
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|i| vec![3.0 + 10.0 * rng.random::<f64>(), -50.0 + rng.sample::<f64, _>(StandardNormal), (i % 7) as f64])
        .collect();
    let labels: Vec<u8> = (0..500).map(|i| (i % 2) as u8).collect();
    let ds = Dataset::split_and_standardize(rows, labels, vec!["a".into(), "b".into(), "c".into()], 0.7, 9).unwrap();
    let (train, _) = ds.train_rows();
    let m = train.len() as f64;
    for j in 0..3 {
        let mean = train.iter().map(|r| r[j]).sum::<f64>() / m;
        let var = train.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / m;
        assert!(mean.abs() <= 1e-10, "column {j} mean {mean}");
        assert!((var - 1.0).abs() <= 1e-8, "column {j} variance {var}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auroc_ignores_monotone_transforms(
        pairs in prop::collection::vec((-5.0..5.0f64, any::<bool>()), 2..200),
        a in 0.1..5.0f64,
        b in -3.0..3.0f64,
    ) {
        let labels: Vec<u8> = pairs.iter().map(|p| u8::from(p.1)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let base = auroc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert_eq!(base, auroc(&affine, &labels).unwrap());
        prop_assert_eq!(base, auroc(&cubed, &labels).unwrap());
        prop_assert_eq!(base, auroc(&squashed, &labels).unwrap());
    }

    #[test]
    fn exact_kl_is_nonnegative_up_to_noise(
        m1 in -4.0..4.0f64,
        s1 in 0.3..3.0f64,
        m2 in -4.0..4.0f64,
        w in 0.05..0.95f64,
        laplace in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let family = if laplace { Family::Laplace } else { Family::Gaussian };
        let q = Mixture::new(
            vec![Component::new(family, vec![m1], vec![s1]).unwrap(), Component::new(family, vec![m2], vec![1.0]).unwrap()],
            vec![w, 1.0 - w],
        ).unwrap();
        let target = GaussianMixtureTarget::bimodal(1, 2.0);
        let kl = exact_kl_oracle(&q, &target, 500, &mut SeedTree::new(seed).stream("kl", &[]), Exec::Sequential).unwrap();
        prop_assert!(kl.value >= -3.0 * kl.std_err, "{} +/- {}", kl.value, kl.std_err);
    }
}
