use proptest::prelude::*;
use textlime::sampler::weight_table;
use textlime::surrogate::responses;
use textlime::theory::{alpha, alpha_limit, alpha_lower_bound, sigma_set};
use textlime::{explain_batch, fit_idf, sample_batch, weight, Bandwidth, Corpus, Document, LocalTfIdf, Model};

const VOCAB: [&str; 12] =
    ["food", "bad", "good", "service", "the", "was", "place", "cold", "warm", "staff", "slow", "loud"];

fn corpus() -> Corpus {
    Corpus::from_texts([
        "the food was good",
        "bad service and cold food",
        "the place was loud",
        "warm staff slow service",
        "good good food",
    ])
}

fn document() -> impl Strategy<Value = Document> {
    prop::collection::vec(0..VOCAB.len(), 1..25)
        .prop_map(|ix| Document::new(ix.into_iter().map(|i| VOCAB[i].to_owned()).collect()))
}

fn bandwidth() -> impl Strategy<Value = Bandwidth> {
    prop_oneof![(0.05f64..20.0).prop_map(|v| Bandwidth::new(v).unwrap()), Just(Bandwidth::INFINITE),]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_has_unit_norm(doc in document()) {
        let idf = fit_idf(&corpus()).unwrap();
        let local = LocalTfIdf::new(&doc, &idf).unwrap();
        let norm: f64 = local.phi().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert!(local.phi().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn repeating_the_document_leaves_the_embedding_unchanged(doc in document(), k in 2usize..5) {
        let idf = fit_idf(&corpus()).unwrap();
        let repeated = Document::new(doc.tokens.iter().cycle().take(k * doc.len()).cloned().collect());
        let a = LocalTfIdf::new(&doc, &idf).unwrap();
        let b = LocalTfIdf::new(&repeated, &idf).unwrap();
        for (x, y) in a.phi().iter().zip(b.phi()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn removal_rescales_survivors(doc in document(), mask in prop::collection::vec(any::<bool>(), 12)) {
        let idf = fit_idf(&corpus()).unwrap();
        let local = LocalTfIdf::new(&doc, &idf).unwrap();
        let d = local.d();
        let present: Vec<bool> = mask.iter().cycle().take(d).copied().collect();
        prop_assume!(present.iter().any(|&p| p));
        let phi = local.phi();
        let removed_share: f64 = (0..d).filter(|&k| !present[k]).map(|k| phi[k] * phi[k]).sum();
        let embedded = local.embed(&present);
        for j in 0..d {
            let want = if present[j] { phi[j] / (1.0 - removed_share).sqrt() } else { 0.0 };
            prop_assert!((embedded[j] - want).abs() < 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn alpha_bounds_and_ordering(d in 1usize..60, nu in bandwidth()) {
        let mut prev = f64::INFINITY;
        for p in 0..=d.min(6) {
            let a = alpha(p, d, nu).unwrap();
            prop_assert!(a <= alpha_limit(p, d) * (1.0 + 1e-12) + 1e-300);
            prop_assert!(a >= alpha_lower_bound(p, d, nu) * (1.0 - 1e-12));
            prop_assert!(a <= prev);
            prev = a;
        }
    }

    #[test]
    fn inverse_rows_annihilate_constant_column(d in 2usize..60, nu in (0.2f64..20.0)) {
        // Sigma^{-1} applied to the first column of Sigma gives e_0.
        let s = sigma_set(d, Bandwidth::new(nu).unwrap()).unwrap();
        let df = d as f64;
        let first = s.sigma0 * s.alpha0 + df * s.sigma1 * s.alpha1;
        let other = s.sigma1 * s.alpha0 + s.sigma2 * s.alpha1 + (df - 1.0) * s.sigma3 * s.alpha1;
        prop_assert!((first / s.c - 1.0).abs() < 1e-8, "{}", first / s.c);
        prop_assert!((other / s.c).abs() < 1e-8, "{}", other / s.c);
    }

    #[test]
    fn weights_lie_between_psi_one_and_one(z in prop::collection::vec(any::<bool>(), 1..40), nu in bandwidth()) {
        let w = weight(&z, nu);
        prop_assert!(w <= 1.0 + 1e-15);
        prop_assert!(w >= nu.min_weight() * (1.0 - 1e-12));
        let table = weight_table(z.len(), nu);
        let removed = z.iter().filter(|&&b| !b).count();
        prop_assert!((table[removed] - w).abs() < 1e-12);
    }

    #[test]
    fn surrogate_is_linear_in_the_responses(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let idf = fit_idf(&corpus()).unwrap();
        let doc = Document::new(VOCAB.iter().map(|w| w.to_string()).collect());
        let local = LocalTfIdf::new(&doc, &idf).unwrap();
        let batch = sample_batch(local.dictionary(), 400, Bandwidth::new(0.5).unwrap(), seed).unwrap();
        let f = Model::parse_tree("\"food\" & \"bad\" + \"good\"", local.dictionary()).unwrap();
        let g = Model::parse_tree("\"service\" * !\"cold\"", local.dictionary()).unwrap();
        let combo = textlime::models::combine([(a, f.clone()), (b, g.clone())]);
        let ef = explain_batch(&f, &local, &batch, 0.0).unwrap();
        let eg = explain_batch(&g, &local, &batch, 0.0).unwrap();
        let ec = explain_batch(&combo, &local, &batch, 0.0).unwrap();
        let yc = responses(&combo, &local, &batch);
        let yf = responses(&f, &local, &batch);
        let yg = responses(&g, &local, &batch);
        for i in 0..yc.len() {
            prop_assert!((yc[i] - a * yf[i] - b * yg[i]).abs() < 1e-12);
        }
        prop_assert!((ec.intercept - a * ef.intercept - b * eg.intercept).abs() < 1e-8);
        for j in 0..local.d() {
            let want = a * ef.coefficients[j] + b * eg.coefficients[j];
            prop_assert!((ec.coefficients[j] - want).abs() < 1e-8);
        }
    }
}
