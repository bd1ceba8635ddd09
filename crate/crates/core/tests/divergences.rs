use pairconf::loss::{pair_loss, ConfusionMetric, PairLossConfig};
use pairconf::simplex::{
    euclidean_confusion, jeffreys_divergence, jeffreys_pathology_bound, kl_divergence, total_variation, ProbVector,
};
use proptest::prelude::*;

fn full_support(max_dim: usize) -> impl Strategy<Value = (ProbVector, ProbVector)> {
    (2..=max_dim).prop_flat_map(|n| {
        let w = prop::collection::vec(1e-6f64..10.0, n);
        (w.clone(), w).prop_map(|(a, b)| (ProbVector::from_weights(&a).unwrap(), ProbVector::from_weights(&b).unwrap()))
    })
}

/// Occasionally sharp: some weights are many orders of magnitude below others.
fn skewed(max_dim: usize) -> impl Strategy<Value = (ProbVector, ProbVector)> {
    (2..=max_dim).prop_flat_map(|n| {
        let w = prop::collection::vec(-12.0f64..1.0, n);
        (w.clone(), w).prop_map(|(a, b)| {
            let exp = |v: Vec<f64>| v.into_iter().map(|e| 10f64.powf(e)).collect::<Vec<_>>();
            (ProbVector::from_weights(&exp(a)).unwrap(), ProbVector::from_weights(&exp(b)).unwrap())
        })
    })
}

const SLACK: f64 = 1e-12;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn inequality_chain((p, q) in full_support(200)) {
        let ec = euclidean_confusion(&p, &q).unwrap().get();
        let tv = total_variation(&p, &q).unwrap().get();
        let j = jeffreys_divergence(&p, &q).unwrap().get();
        prop_assert!(ec <= 4.0 * tv * tv * (1.0 + SLACK) + f64::MIN_POSITIVE);
        prop_assert!(4.0 * tv * tv <= j * (1.0 + SLACK) + f64::MIN_POSITIVE);
        prop_assert!(ec <= j * (1.0 + SLACK) + f64::MIN_POSITIVE);
    }

    #[test]
    fn inequality_chain_on_sharp_vectors((p, q) in skewed(8)) {
        let ec = euclidean_confusion(&p, &q).unwrap().get();
        let tv = total_variation(&p, &q).unwrap().get();
        let j = jeffreys_divergence(&p, &q).unwrap().get();
        prop_assert!(ec <= 4.0 * tv * tv * (1.0 + SLACK) + f64::MIN_POSITIVE);
        prop_assert!(4.0 * tv * tv <= j * (1.0 + SLACK) + f64::MIN_POSITIVE);
    }

    #[test]
    fn exact_symmetry((p, q) in full_support(50)) {
        prop_assert_eq!(jeffreys_divergence(&p, &q).unwrap().get().to_bits(), jeffreys_divergence(&q, &p).unwrap().get().to_bits());
        prop_assert_eq!(total_variation(&p, &q).unwrap().get().to_bits(), total_variation(&q, &p).unwrap().get().to_bits());
        prop_assert_eq!(euclidean_confusion(&p, &q).unwrap().get().to_bits(), euclidean_confusion(&q, &p).unwrap().get().to_bits());
    }

    #[test]
    fn identity_of_indiscernibles((p, q) in full_support(50)) {
        prop_assert_eq!(kl_divergence(&p, &p).unwrap().get(), 0.0);
        prop_assert_eq!(jeffreys_divergence(&p, &p).unwrap().get(), 0.0);
        prop_assert_eq!(total_variation(&p, &p).unwrap().get(), 0.0);
        prop_assert_eq!(euclidean_confusion(&p, &p).unwrap().get(), 0.0);
        let differs = p.as_slice().iter().zip(q.as_slice()).any(|(a, b)| (a - b).abs() > 1e-12);
        if differs {
            prop_assert!(kl_divergence(&p, &q).unwrap().get() > 0.0);
            prop_assert!(jeffreys_divergence(&p, &q).unwrap().get() > 0.0);
            prop_assert!(total_variation(&p, &q).unwrap().get() > 0.0);
            prop_assert!(euclidean_confusion(&p, &q).unwrap().get() > 0.0);
        }
    }

    #[test]
    fn jeffreys_is_symmetrized_kl((p, q) in full_support(50)) {
        let j = jeffreys_divergence(&p, &q).unwrap().get();
        let kl = kl_divergence(&p, &q).unwrap().get() + kl_divergence(&q, &p).unwrap().get();
        prop_assert!((j - kl).abs() <= 1e-10 * (1.0 + kl));
    }

    #[test]
    fn ranges((p, q) in full_support(50)) {
        prop_assert!(total_variation(&p, &q).unwrap().get() <= 1.0 + SLACK);
        prop_assert!(euclidean_confusion(&p, &q).unwrap().get() <= 2.0 + SLACK);
    }

    #[test]
    fn pair_loss_swap_symmetry((p, q) in full_support(10), lambda in 0.0f64..20.0, jeffreys in any::<bool>()) {
        let metric = if jeffreys { ConfusionMetric::Jeffreys } else { ConfusionMetric::EuclideanConfusion };
        let cfg = PairLossConfig::new(lambda, metric).unwrap();
        let n = p.dim();
        let (y1, y2) = (0, n - 1);
        let a = pair_loss(&p, y1, &q, y2, &cfg).unwrap();
        let b = pair_loss(&q, y2, &p, y1, &cfg).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-12 * (1.0 + a.total.abs()));
        prop_assert_eq!(a.parts.confusion.to_bits(), b.parts.confusion.to_bits());
        if !jeffreys {
            prop_assert!((0.0..=2.0 + SLACK).contains(&a.parts.confusion));
        }
    }

    #[test]
    fn zero_lambda_is_two_cross_entropies((p, q) in full_support(10), y1 in 0usize..2, y2 in 0usize..2) {
        let cfg = PairLossConfig::euclidean(0.0).unwrap();
        let l = pair_loss(&p, y1, &q, y2, &cfg).unwrap();
        let ce = -p.as_slice()[y1].ln() + -q.as_slice()[y2].ln();
        prop_assert_eq!(l.total, l.parts.ce1 + l.parts.ce2);
        prop_assert!((l.total - ce).abs() <= 1e-12 * (1.0 + ce));
    }
}

#[test]
fn pathology_bound_decreases_on_grid() {
    let grid: Vec<f64> = (1..=400).map(|k| k as f64 * 1e-3).collect();
    let values: Vec<f64> = grid.iter().map(|&d| jeffreys_pathology_bound(d, d).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn jeffreys_confusion_grows_with_confidence() {
    let confident = |delta: f64| {
        let p = ProbVector::new(vec![1.0 - delta, delta]).unwrap();
        let q = ProbVector::new(vec![delta, 1.0 - delta]).unwrap();
        let cfg = PairLossConfig::new(1.0, ConfusionMetric::Jeffreys).unwrap();
        pair_loss(&p, 0, &q, 1, &cfg).unwrap().parts.confusion
    };
    assert!(confident(1e-4) > confident(1e-2));
    assert!(confident(1e-8) > confident(1e-4));
    // EC saturates instead.
    let ec = |delta: f64| {
        let p = ProbVector::new(vec![1.0 - delta, delta]).unwrap();
        let q = ProbVector::new(vec![delta, 1.0 - delta]).unwrap();
        euclidean_confusion(&p, &q).unwrap().get()
    };
    assert!(ec(1e-8) < 2.0 && ec(1e-8) > ec(1e-2));
}
