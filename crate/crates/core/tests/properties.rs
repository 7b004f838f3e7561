mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use aose::attention_pool::{pool_forward, AttentionHeadParams};
use aose::classifier_trainer::{train, Model, TrainConfig};
use aose::cost_model::{costs, CostQuery};
use aose::embeddings::{read_corpus, write_corpus, EmbeddingCorpus};
use aose::eval_stats::evaluate;
use aose::numerics::{
    init_params, l2_normalize, matvec, stable_softmax, tanh_vec, DenseMatrix, DenseVector, Seed,
    SplitMix64,
};
use aose::segmenter::{count_tokens, reconstruct, segment, strip_html, RawDocument, SegmentConfig};

use common::{random_corpus, random_unit, separable_corpus};

fn finite(range: f64) -> impl Strategy<Value = f64> {
    -range..range
}

fn dv(xs: &[f64]) -> DenseVector {
    DenseVector::new(xs.to_vec()).unwrap()
}

fn unit_vectors(d: usize, t: usize, seed: u64) -> Vec<DenseVector> {
    let mut rng = SplitMix64::new(seed);
    (0..t).map(|_| random_unit(&mut rng, d)).collect()
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_commutes_with_permutation(
        xs in vec(finite(700.0), 1..40),
        seed in any::<u64>(),
    ) {
        let p = stable_softmax(&dv(&xs)).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));

        let mut order: Vec<usize> = (0..xs.len()).collect();
        SplitMix64::new(seed).shuffle(&mut order);
        let permuted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let q = stable_softmax(&dv(&permuted)).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert!((q[pos] - p[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_ignores_shifts(xs in vec(finite(50.0), 1..20), c in finite(500.0)) {
        let p = stable_softmax(&dv(&xs)).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let q = stable_softmax(&dv(&shifted)).unwrap();
        for i in 0..xs.len() {
            prop_assert!((p[i] - q[i]).abs() < 1e-12, "{} vs {}", p[i], q[i]);
        }
    }

    #[test]
    fn tanh_stays_in_the_open_interval(xs in vec(finite(1e3), 1..30)) {
        for y in tanh_vec(&dv(&xs)).as_slice() {
            prop_assert!((-1.0..=1.0).contains(y));
        }
    }

    #[test]
    fn matvec_is_linear(
        (rows, cols, m, x, y) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (
            Just(r), Just(c), vec(finite(10.0), r * c), vec(finite(10.0), c), vec(finite(10.0), c)
        )),
        a in finite(5.0),
    ) {
        let m = DenseMatrix::new(rows, cols, m).unwrap();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + y).collect();
        let lhs = matvec(&m, &dv(&combo)).unwrap();
        let (mx, my) = (matvec(&m, &dv(&x)).unwrap(), matvec(&m, &dv(&y)).unwrap());
        for r in 0..rows {
            prop_assert!((lhs[r] - (a * mx[r] + my[r])).abs() < 1e-9);
        }
    }

    #[test]
    fn init_is_a_pure_function_of_its_seed(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
        let a = init_params(rows, cols, Seed(seed)).unwrap();
        prop_assert_eq!(&a, &init_params(rows, cols, Seed(seed)).unwrap());
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        prop_assert!(a.as_slice().iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn normalized_vectors_have_unit_norm(xs in vec(finite(1e6), 1..50)) {
        prop_assume!(xs.iter().any(|&x| x != 0.0));
        let n = l2_normalize(&dv(&xs)).unwrap();
        prop_assert!((n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strip_html_is_idempotent(text in "([a-z ]|<[a-z/!?]{0,3}>?|&(amp|lt|gt|quot|#6[0-9]|#x3[cCeE]);?|[<>&;])*") {
        let once = strip_html(&text);
        prop_assert_eq!(strip_html(&once), once);
    }

    #[test]
    fn segmenter_respects_bounds_and_round_trips(
        seed in any::<u64>(),
        min in 1usize..8,
        extra in 0usize..30,
        cap_extra in 0usize..400,
    ) {
        let cap = 2 * min + extra + cap_extra;
        let cfg = SegmentConfig {
            min_tokens: min,
            max_tokens: 2 * min + extra,
            doc_token_cap: cap,
            ..SegmentConfig::default()
        };
        let mut rng = SplitMix64::new(seed);
        let doc = RawDocument { doc_id: "p".into(), text: common::fuzz_text(&mut rng), label: 0 };
        let sentences = segment(&doc, &cfg).unwrap();
        let fallback = sentences.len() == 1 && sentences[0].token_count < min;
        let mut used = 0;
        for (i, s) in sentences.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert_eq!(s.token_count, count_tokens(&s.text));
            prop_assert!(fallback || (min..=cfg.max_tokens).contains(&s.token_count));
            used += s.token_count;
        }
        prop_assert!(used <= cap || (sentences.is_empty() && used == 0));
        let again = segment(
            &RawDocument { text: reconstruct(&sentences), ..doc.clone() },
            &cfg,
        );
        if !sentences.is_empty() {
            prop_assert_eq!(again.unwrap(), sentences);
        }
    }

    #[test]
    fn pooling_is_a_permutation_invariant_convex_combination(
        d in 2usize..10, t in 1usize..12, seed in any::<u64>(),
    ) {
        let params = AttentionHeadParams::init(d, Seed(seed)).unwrap();
        let s = unit_vectors(d, t, seed ^ 0x5eed);
        let out = pool_forward(&params, &s).unwrap();
        let mut rev = s.clone();
        rev.reverse();
        let out_rev = pool_forward(&params, &rev).unwrap();
        for k in 0..d {
            prop_assert!((out.v[k] - out_rev.v[k]).abs() < 1e-12);
            let lo = s.iter().map(|x| x[k]).fold(f64::INFINITY, f64::min);
            let hi = s.iter().map(|x| x[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.v[k] >= lo - 1e-15 && out.v[k] <= hi + 1e-15);
        }
    }

    #[test]
    fn scaling_the_context_vector_keeps_the_top_sentence(
        d in 2usize..10, t in 2usize..12, seed in any::<u64>(), scale in 0.1f64..10.0,
    ) {
        let params = AttentionHeadParams::init(d, Seed(seed)).unwrap();
        let s = unit_vectors(d, t, seed.wrapping_add(1));
        let scaled_u: Vec<f64> = params.u_s.as_slice().iter().map(|u| u * scale).collect();
        let scaled = AttentionHeadParams::new(params.w_s.clone(), params.b_s.clone(), dv(&scaled_u)).unwrap();
        let argmax = |a: &DenseVector| {
            (0..a.len()).fold(0, |best, i| if a[i] > a[best] { i } else { best })
        };
        let a = pool_forward(&params, &s).unwrap();
        let b = pool_forward(&scaled, &s).unwrap();
        let (i, j) = (argmax(&a.alphas), argmax(&b.alphas));
        // ties within rounding may flip, otherwise the winner is unchanged
        prop_assert!(i == j || (a.logits[i] - a.logits[j]).abs() < 1e-12);
    }

    #[test]
    fn corpus_round_trips_exactly(n in 1usize..8, d in 2usize..12, k in 2usize..5, seed in any::<u64>()) {
        let corpus = random_corpus(n, d, k, seed);
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let (back, report) = read_corpus(buf.as_slice()).unwrap();
        prop_assert_eq!(report.renormalized, 0);
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn cost_invariants(t in 1u64..10_000, l in 1u64..2_000, w in 1u64..600, c in 1u64..4_096, g_frac in 0.0f64..1.0) {
        let g = 1 + ((t * l - 1) as f64 * g_frac) as u64;
        let r = costs(&CostQuery { t, l, g, w, c }).unwrap();
        prop_assert!(r.aose <= r.smith);
        if t >= 2 && l >= 2 {
            prop_assert!(r.aose < r.roberta);
        }
        let doubled = costs(&CostQuery { t: 2 * t, l, g, w, c }).unwrap();
        prop_assert_eq!(doubled.aose, 2 * r.aose);
        prop_assert_eq!(doubled.roberta, 4 * r.roberta);
    }

    #[test]
    fn evaluation_ignores_document_order(n in 1usize..30, seed in any::<u64>(), threshold in 0usize..1500) {
        let corpus = random_corpus(n, 6, 3, seed);
        let model = Model::init(6, 3, Seed(seed)).unwrap();
        let report = evaluate(&model, &corpus, threshold).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed).shuffle(&mut order);
        prop_assert_eq!(evaluate(&model, &corpus.subset(&order), threshold).unwrap(), report);

        prop_assert_eq!(report.all.total, report.short.total + report.long.total);
        prop_assert_eq!(report.all.correct, report.short.correct + report.long.correct);
        let acc = report.acc_all().unwrap();
        prop_assert!((acc * n as f64 - report.all.correct as f64).abs() < 1e-9);
    }
}

#[test]
fn smoothed_training_loss_does_not_increase() {
    let corpus: EmbeddingCorpus = separable_corpus(200, 32, 3);
    let cfg = TrainConfig {
        learning_rate: 1e-4,
        epochs: 200,
        seed: Seed(1),
        ..TrainConfig::default()
    };
    let losses: Vec<f64> = train(&corpus, &cfg)
        .unwrap()
        .metrics
        .iter()
        .map(|m| m.mean_loss)
        .collect();
    let smoothed: Vec<f64> = losses
        .windows(5)
        .map(|w| w.iter().sum::<f64>() / 5.0)
        .collect();
    for (i, pair) in smoothed.windows(2).enumerate() {
        assert!(pair[1] <= pair[0], "window {i}: {} -> {}", pair[0], pair[1]);
    }
    assert!(
        losses[losses.len() - 1] < 0.5 * losses[0],
        "{} -> {}",
        losses[0],
        losses[losses.len() - 1]
    );
}
