mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bsw_core::classifier::{
    loss_and_gradient, probe_words, sigmoid, Classifier, ClassifierError, FeatureVector,
    LinearModel, RemoteClassifier, RetryPolicy, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fast_retry(max_retries: u32) -> RetryPolicy {
    RetryPolicy {
        max_retries,
        initial_backoff: Duration::from_millis(1),
        max_backoff: Duration::from_millis(4),
    }
}

// Objective evaluated directly, without the stable softplus form.
fn naive_loss(w: &[f64], b: f64, xs: &[FeatureVector], ys: &[f64], l2: f64) -> f64 {
    let n = xs.len() as f64;
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let z: f64 = w.iter().zip(&x.0).map(|(a, c)| a * c).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    data / n + 0.5 * l2 * w.iter().map(|a| a * a).sum::<f64>()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 1e-5;
    for _ in 0..20 {
        let dim = rng.gen_range(2..8);
        let n = rng.gen_range(3..30);
        let xs: Vec<FeatureVector> = (0..n)
            .map(|_| FeatureVector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let ys: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let l2 = rng.gen_range(0.0..0.1);
        let refs: Vec<&FeatureVector> = xs.iter().collect();
        let (loss, grad_w, grad_b) = loss_and_gradient(&w, b, &refs, &ys, l2);
        assert!((loss - naive_loss(&w, b, &xs, &ys, l2)).abs() < 1e-10);

        let rel = |analytic: f64, numeric: f64| {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
        };
        for j in 0..dim {
            let mut plus = w.clone();
            plus[j] += eps;
            let mut minus = w.clone();
            minus[j] -= eps;
            let numeric = (naive_loss(&plus, b, &xs, &ys, l2)
                - naive_loss(&minus, b, &xs, &ys, l2))
                / (2.0 * eps);
            assert!(
                rel(grad_w[j], numeric) < 1e-4,
                "w[{j}]: {} vs {numeric}",
                grad_w[j]
            );
        }
        let numeric = (naive_loss(&w, b + eps, &xs, &ys, l2)
            - naive_loss(&w, b - eps, &xs, &ys, l2))
            / (2.0 * eps);
        assert!(rel(grad_b, numeric) < 1e-4);
    }
}

proptest! {
    #[test]
    fn score_is_monotone_along_the_weights(
        w in prop::collection::vec(-3.0f64..3.0, 3),
        x in prop::collection::vec(-1.0f64..1.0, 3),
        step in 0.01f64..1.0,
    ) {
        let norm2: f64 = w.iter().map(|a| a * a).sum();
        prop_assume!(norm2 > 1e-3);
        let model = LinearModel { weights: w.clone(), bias: 0.1, train_config: TrainConfig::with_seed(0), final_loss: 0.0 };
        let before = model.predict_features(&FeatureVector(x.clone()));
        let moved: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi + step * wi / norm2.sqrt()).collect();
        let after = model.predict_features(&FeatureVector(moved));
        prop_assert!(after.p_hateful > before.p_hateful || before.p_hateful == 1.0);
        prop_assert!((after.p_hateful + after.p_neutral - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn sigmoid_of_zero_is_one_half() {
    assert_eq!(sigmoid(0.0), 0.5);
}

#[test]
fn remote_backend_reads_probability() {
    let url = common::serve(Arc::new(|req: &common::Request| {
        let p = if req.text == "muslims" { 0.81 } else { 0.1 };
        (200, format!("{{\"p_hateful\": {p}}}"))
    }));
    let remote = RemoteClassifier::new(&url, 0.0).unwrap();
    let dist = remote.predict("muslims").unwrap();
    assert_eq!(dist.p_hateful, 0.81);
    assert!((dist.p_hateful + dist.p_neutral - 1.0).abs() <= 1e-9);
}

#[test]
fn remote_backend_sends_auth_header() {
    let url = common::serve(Arc::new(|req: &common::Request| {
        let ok = req
            .headers
            .iter()
            .any(|(k, v)| k == "authorization" && v == "Bearer s3cret");
        if ok {
            (200, "{\"p_hateful\": 0.3}".into())
        } else {
            (401, "{}".into())
        }
    }));
    let remote = RemoteClassifier::new(&url, 0.0)
        .unwrap()
        .with_retry(fast_retry(0));
    assert!(remote.predict("a").is_err());
    let remote = remote
        .with_auth_header("Authorization: Bearer s3cret")
        .unwrap();
    assert_eq!(remote.predict("a").unwrap().p_hateful, 0.3);
}

#[test]
fn remote_backend_retries_transient_failures() {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let url = common::serve(Arc::new(move |_req: &common::Request| {
        if counter.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, "busy".into())
        } else {
            (200, "{\"p_hateful\": 0.6}".into())
        }
    }));
    let remote = RemoteClassifier::new(&url, 0.0)
        .unwrap()
        .with_retry(fast_retry(3));
    assert_eq!(remote.predict("w").unwrap().p_hateful, 0.6);
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_retries_carry_the_text() {
    let url = common::serve(Arc::new(|_req: &common::Request| (200, "not json".into())));
    let remote = RemoteClassifier::new(&url, 0.0)
        .unwrap()
        .with_retry(fast_retry(2));
    match remote.predict("muslims") {
        Err(ClassifierError::Transport { text, attempts, .. }) => {
            assert_eq!(text, "muslims");
            assert_eq!(attempts, 3);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn rate_limit_holds_across_threads() {
    let url = common::serve(Arc::new(|_req: &common::Request| {
        (200, "{\"p_hateful\": 0.5}".into())
    }));
    let remote = RemoteClassifier::new(&url, 10.0).unwrap();
    let words: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
    let start = std::time::Instant::now();
    let out = probe_words(&remote, &words, 3, |_, _| {}).unwrap();
    assert_eq!(out.len(), 6);
    // six starts spaced 100 ms apart
    assert!(start.elapsed() >= Duration::from_millis(500));
}
