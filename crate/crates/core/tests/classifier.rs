mod common;

use common::{bayes_oracle, random_model};
use lmxpairs_core::classifier::{
    confidence_filter, fit, fit_temperature, Level, VarianceFloor, LEVELS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn lv(v: u8) -> Level {
    Level::new(v).unwrap()
}

#[test]
fn posterior_matches_bayes_rule_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let dim = rng.random_range(1..=12);
        let n_classes = rng.random_range(2..=9);
        let mut classes: Vec<usize> = (0..LEVELS).collect();
        for i in 0..LEVELS {
            let j = rng.random_range(i..LEVELS);
            classes.swap(i, j);
        }
        let m = random_model(&mut rng, dim, &classes[..n_classes]);
        let f: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = m.posterior(&f).unwrap();
        let want = bayes_oracle(&m, &f);
        for k in 0..LEVELS {
            assert!((got.probs[k] - want[k]).abs() < 1e-9, "{} vs {}", got.probs[k], want[k]);
        }
        let best = (0..LEVELS).max_by(|&a, &b| want[a].total_cmp(&want[b])).unwrap();
        assert_eq!(got.label.get() as usize, best + 1);
        assert_eq!(got.confidence, got.probs[best]);
    }
}

#[test]
fn ml_estimates_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 4;
    let labels: Vec<Level> = (0..60).map(|i| lv(1 + (i % 3) as u8 * 3)).collect();
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let m = fit(&x, &labels, VarianceFloor::default()).unwrap();
    for level in [1u8, 4, 7] {
        let rows: Vec<&Vec<f64>> = x.iter().zip(&labels).filter(|(_, l)| l.get() == level).map(|(r, _)| r).collect();
        let k = level as usize - 1;
        assert!((m.priors[k] - rows.len() as f64 / 60.0).abs() < 1e-15);
        for i in 0..dim {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
            let var = rows.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / rows.len() as f64;
            assert!((m.means[k][i] - mean).abs() < 1e-12);
            assert!((m.variances[k][i] - var).abs() < 1e-12);
        }
    }
}

#[test]
fn self_generated_data_calibrates_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = random_model(&mut rng, 3, &[0, 2, 4, 6, 8]);
    model.temperature = 1.0;
    for k in 0..LEVELS {
        for i in 0..3 {
            model.means[k][i] = rng.random_range(-1.5..1.5);
            model.variances[k][i] = 1.0;
        }
    }
    let cum: Vec<f64> = model.priors.iter().scan(0.0, |s, p| { *s += p; Some(*s) }).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..20_000 {
        let u: f64 = rng.random();
        let k = cum.iter().position(|&c| u < c).unwrap_or(LEVELS - 1);
        let row: Vec<f64> = (0..3)
            .map(|i| Normal::new(model.means[k][i], model.variances[k][i].sqrt()).unwrap().sample(&mut rng))
            .collect();
        x.push(row);
        y.push(lv(k as u8 + 1));
    }
    let t = fit_temperature(&model, &x, &y).unwrap().temperature;
    assert!((t - 1.0).abs() <= 0.1, "temperature {t}");
}

#[test]
fn single_held_out_sample_terminates() {
    let m = fit(&[[0.0], [1.0], [5.0], [6.0]], &[lv(1), lv(1), lv(2), lv(2)], VarianceFloor::default()).unwrap();
    let t = fit_temperature(&m, &[[0.2]], &[lv(1)]).unwrap().temperature;
    assert!(t.is_finite() && (0.05..=20.0).contains(&t));
}

#[test]
fn keeps_75_of_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c: Vec<f64> = (0..100).map(|_| rng.random()).collect();
    assert_eq!(confidence_filter(&c, 0.25).unwrap().len(), 75);
}

#[test]
fn far_features_stay_finite() {
    let m = fit(&[[0.0], [1.0], [5.0], [6.0]], &[lv(1), lv(1), lv(9), lv(9)], VarianceFloor::default()).unwrap();
    let p = m.posterior(&[1e4]).unwrap();
    assert!(p.probs.iter().all(|x| x.is_finite()));
    assert_eq!(p.label, lv(9));
}

proptest! {
    #[test]
    fn filter_equals_sort_and_slice(c in prop::collection::vec(prop::sample::select(vec![0.1, 0.2, 0.3, 0.5, 0.9]), 1..60), frac in 0.0f64..0.99) {
        let drop = (frac * c.len() as f64 + 1e-9).floor() as usize;
        let mut idx: Vec<usize> = (0..c.len()).collect();
        // lowest first; among equals, latest first
        idx.sort_by(|&a, &b| c[a].partial_cmp(&c[b]).unwrap().then(b.cmp(&a)));
        let mut want: Vec<usize> = idx[drop..].to_vec();
        want.sort();
        prop_assert_eq!(confidence_filter(&c, frac).unwrap(), want);
    }

    #[test]
    fn posteriors_are_distributions_and_temperature_keeps_labels(
        seed in any::<u64>(),
        f in prop::collection::vec(-50.0f64..50.0, 5),
        t in 0.05f64..20.0,
        scale in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, 5, &[0, 3, 4, 8]);
        let p = m.posterior(&f).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.probs.iter().all(|&x| (0.0..=1.0).contains(&x)));

        let mut hot = m.clone();
        hot.temperature = t;
        prop_assert_eq!(hot.posterior(&f).unwrap().label, p.label);

        let mut scaled = m.clone();
        scaled.priors.iter_mut().for_each(|x| *x *= scale);
        let q = scaled.posterior(&f).unwrap();
        for k in 0..LEVELS {
            prop_assert!((q.probs[k] - p.probs[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn fitted_temperature_keeps_labels(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 4) as f64 + rng.random_range(-2.0..2.0), rng.random()]).collect();
        let y: Vec<Level> = (0..40).map(|i| lv(1 + (i % 4) as u8)).collect();
        let m = fit(&x[..20], &y[..20], VarianceFloor::default()).unwrap();
        let cal = fit_temperature(&m, &x[20..], &y[20..]).unwrap();
        for row in &x {
            prop_assert_eq!(cal.posterior(row).unwrap().label, m.posterior(row).unwrap().label);
        }
    }
}
