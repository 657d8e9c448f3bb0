mod common;

use intent_explain::annotator::annotate;
use intent_explain::corpus::{
    is_stopword, parse_conllu, Dataset, ParsedUtterance, Record, Token, Upos,
};
use intent_explain::lime::{
    fit_weighted, kernel_weight, lime_explain, perturb_samples, LimeConfig,
};
use intent_explain::metrics::{
    fleiss_kappa, iou_f1, token_f1, topk_rationale, AgreementTable, Rationale,
};
use intent_explain::model::testutil::random_model;
use intent_explain::model::{
    accumulate_gradient, cross_entropy, sample_prior, train, Example, Gradients, TrainConfig,
};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEPRELS: &[&str] = &[
    "obj", "xcomp", "nsubj", "obl", "compound", "det", "amod", "nmod", "case", "dep", "flat",
    "appos",
];
const FORMS: &[&str] = &[
    "the", "what", "i", "is", "to", "flight", "book", "table", "show", "play", "song", "denver",
    "cheap", "need", "fly", "meal", "options", "price", "service",
];

/// A random single-rooted tree of `m` tokens.
fn random_tree(seed: u64, m: usize) -> ParsedUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (1..=m).collect();
    order.shuffle(&mut rng);
    let mut heads = vec![0usize; m + 1];
    for k in 1..m {
        heads[order[k]] = order[rng.random_range(0..k)];
    }
    let tokens = (1..=m)
        .map(|i| Token {
            index: i,
            form: FORMS.choose(&mut rng).unwrap().to_string(),
            upos: *Upos::ALL.choose(&mut rng).unwrap(),
            head: heads[i],
            deprel: if heads[i] == 0 {
                "root".into()
            } else {
                DEPRELS.choose(&mut rng).unwrap().to_string()
            },
        })
        .collect::<Vec<_>>();
    ParsedUtterance {
        id: format!("t{seed}"),
        text: tokens
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" "),
        tokens,
        intent: "x".into(),
        slots: None,
    }
}

type Field = fn(&mut intent_explain::model::ClassifierParams) -> &mut Vec<f64>;

fn depth(u: &ParsedUtterance, mut i: usize) -> usize {
    let mut d = 0;
    while u.token(i).head != 0 {
        i = u.token(i).head;
        d += 1;
    }
    d
}

fn to_conllu(u: &ParsedUtterance, intent: Option<&str>) -> String {
    let mut s = format!("# sent_id = {}\n# text = {}\n", u.id, u.text);
    if let Some(i) = intent {
        s.push_str(&format!("# intent = {i}\n"));
    }
    for t in &u.tokens {
        s.push_str(&format!(
            "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_\n",
            t.index, t.form, t.upos, t.head, t.deprel
        ));
    }
    s.push('\n');
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn annotation_invariants(seed in any::<u64>(), m in 1usize..15) {
        let u = random_tree(seed, m);
        let (a, trace) = annotate(&u);
        let root = u.root().unwrap();
        prop_assert_eq!(trace.root_index, root);

        let mut marked: Vec<usize> = vec![root];
        marked.extend(trace.level1.iter().map(|&(i, _)| i));
        marked.extend(&trace.compounds);
        for (pos, &v) in a.mask.iter().enumerate() {
            let i = pos + 1;
            if v == 1 {
                prop_assert!(marked.contains(&i));
                prop_assert!(depth(&u, i) <= 2);
                prop_assert!(!is_stopword(&u.token(i).form));
                let t = u.token(i);
                if t.upos == Upos::Propn {
                    prop_assert!(matches!(t.deprel.as_str(), "root" | "obj" | "xcomp"));
                }
            }
        }
        prop_assert_eq!(a.mask[root - 1] == 1, !is_stopword(&u.token(root).form));
        prop_assert_eq!(trace.all_zero, a.mask.iter().all(|&v| v == 0));
        prop_assert_eq!(annotate(&u), (a, trace));
    }

    #[test]
    fn ingestion_only_emits_valid_records(seed in any::<u64>(), blocks in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc = String::new();
        for b in 0..blocks {
            let m = rng.random_range(1..10);
            let mut u = random_tree(seed.wrapping_add(b as u64), m);
            u.id = format!("b{b}");
            match rng.random_range(0..6) {
                0 => u.tokens[rng.random_range(0..m)].head = rng.random_range(0..=m + 1),
                1 => u.tokens[rng.random_range(0..m)].head = 0,
                2 => u.tokens[rng.random_range(0..m)].index += 1,
                _ => {}
            }
            let intent = match rng.random_range(0..5) {
                0 => None,
                1 => Some("a#b"),
                _ => Some("intent_a"),
            };
            let mut block = to_conllu(&u, intent);
            if rng.random_bool(0.1) {
                block = block.replacen("\t_\t_\n", "\t_\n", 1);
            }
            doc.push_str(&block);
        }
        // a wrong column count is a parse error; anything else must yield valid records only
        if let Ok(ingested) = parse_conllu(doc.as_bytes(), 80) {
            for r in &ingested.dataset.records {
                prop_assert!(r.utterance.validate(80).is_ok());
            }
            let accounted = ingested.dataset.len()
                + ingested.report.rejected.len()
                + ingested.report.multi_intent_dropped.len();
            prop_assert_eq!(accounted, blocks);
        }
    }

    #[test]
    fn truncation_keeps_prefix(seed in any::<u64>(), m in 81usize..110) {
        let u = random_tree(seed, m);
        let ingested = parse_conllu(to_conllu(&u, Some("x")).as_bytes(), 80).unwrap();
        prop_assert_eq!(ingested.report.truncated.len(), 1);
        let got = &ingested.dataset.records[0].utterance;
        prop_assert!(got.validate(80).is_ok());
        prop_assert_eq!(got.len(), 80);
        let want: Vec<&str> = u.forms().take(80).collect();
        prop_assert_eq!(got.forms().collect::<Vec<_>>(), want);
    }

    #[test]
    fn forward_is_on_the_simplex(seed in any::<u64>(), classes in 2usize..6, m in 0usize..10) {
        let params = random_model(classes, 4, 12, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = (0..m).map(|_| rng.random_range(0..12)).collect();
        let p = params.forward(&ids).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn joint_gradient_matches_finite_differences(
        seed in any::<u64>(),
        vocab in 3usize..=20,
        dim in 1usize..=8,
        m in 1usize..=6,
        classes in 2usize..=3,
        steps in 1usize..=5,
        lambda in prop_oneof![Just(0.0), Just(1.0), Just(1e3)],
    ) {
        let params = random_model(classes, dim, vocab, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let ids: Vec<usize> = (0..m).map(|_| rng.random_range(1..vocab)).collect();
        let mask: Vec<u8> = (0..m).map(|_| rng.random_range(0..2)).collect();
        let gold = rng.random_range(0..classes);
        let loss = |p: &intent_explain::model::ClassifierParams| {
            let ce = cross_entropy(&p.forward(&ids).unwrap(), gold).unwrap();
            if lambda == 0.0 { ce } else { ce + lambda * sample_prior(p, &ids, &mask, steps).unwrap() }
        };
        let mut g = Gradients::zeros_like(&params);
        let ex = Example { ids: &ids, gold, mask: Some(&mask) };
        accumulate_gradient(&params, &ex, lambda, steps, 1.0, &mut g).unwrap();

        let h = 1e-5;
        let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
        let sections: [(Field, &Vec<f64>); 3] = [
            (|p| &mut p.embeddings, &g.embeddings),
            (|p| &mut p.weights, &g.weights),
            (|p| &mut p.bias, &g.bias),
        ];
        for (field, analytic) in sections {
            for i in 0..analytic.len() {
                if std::ptr::eq(analytic, &g.embeddings) && i < dim {
                    continue; // PAD row is never trained
                }
                let mut up = params.clone();
                field(&mut up)[i] += h;
                let mut down = params.clone();
                field(&mut down)[i] -= h;
                let n = (loss(&up) - loss(&down)) / (2.0 * h);
                diff += (analytic[i] - n).powi(2);
                norm_a += analytic[i].powi(2);
                norm_n += n * n;
            }
        }
        let scale = f64::sqrt(f64::max(norm_a, norm_n));
        if scale > 0.0 {
            prop_assert!(diff.sqrt() / scale <= 1e-4, "relative error {}", diff.sqrt() / scale);
        }
    }

    #[test]
    fn kernel_weights_in_unit_interval(seed in any::<u64>(), m in 1usize..12, width in 0.1f64..50.0) {
        let cfg = LimeConfig { num_samples: 50, kernel_width: width, seed, ..LimeConfig::default() };
        let p = perturb_samples(m, &cfg);
        prop_assert_eq!(kernel_weight(p.distances[0], width), 1.0);
        for &d in &p.distances {
            let w = kernel_weight(d, width);
            prop_assert!(w > 0.0 && w <= 1.0);
        }
        prop_assert_eq!(p, perturb_samples(m, &cfg));
    }

    #[test]
    fn lime_recovers_linear_black_boxes(seed in any::<u64>(), m in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let tokens: Vec<usize> = (0..m).collect();
        let f = |kept: &[usize]| -> intent_explain::Result<Vec<f64>> {
            let y = bias + kept.iter().map(|&i| coef[i]).sum::<f64>();
            Ok(vec![y, 1.0 - y])
        };
        let cfg = LimeConfig { num_samples: 300, ridge_alpha: 1e-10, seed, ..LimeConfig::default() };
        let e = lime_explain(f, &tokens, Some(0), &cfg).unwrap();
        for (got, want) in e.attributions.iter().zip(&coef) {
            prop_assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
        }
        prop_assert!((e.intercept - bias).abs() <= 1e-6);
        prop_assert_eq!(lime_explain(f, &tokens, Some(0), &cfg).unwrap(), e);
    }

    #[test]
    fn f1_symmetry_and_identity(
        pred in proptest::collection::vec(0u8..2, 1..12),
        gold_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(gold_seed);
        let gold: Vec<u8> = pred.iter().map(|_| rng.random_range(0..2)).collect();
        let (p, g) = (Rationale::from_mask(&pred), Rationale::from_mask(&gold));
        prop_assert_eq!(token_f1(&p, &g).unwrap(), token_f1(&g, &p).unwrap());
        prop_assert_eq!(iou_f1(&p, &g).unwrap(), iou_f1(&g, &p).unwrap());
        let f = token_f1(&p, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        if !p.is_empty() {
            prop_assert_eq!(f == 1.0, p == g);
            prop_assert_eq!(token_f1(&p, &p).unwrap(), 1.0);
            prop_assert_eq!(iou_f1(&p, &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn topk_size_and_order(attrs in proptest::collection::vec(-1.0f64..1.0, 1..12), k in 1usize..8) {
        let r = topk_rationale(&attrs, k);
        prop_assert_eq!(r.len(), k.min(attrs.len()));
        let weakest = r.indices().iter().map(|&i| attrs[i]).fold(f64::INFINITY, f64::min);
        for (i, &a) in attrs.iter().enumerate() {
            if !r.contains(i) {
                prop_assert!(a <= weakest);
            }
        }
    }

    #[test]
    fn kappa_invariances(seed in any::<u64>(), items in 1usize..=8, raters in 2usize..=5, cats in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ratings: Vec<Vec<usize>> = (0..items)
            .map(|_| (0..raters).map(|_| rng.random_range(0..cats)).collect())
            .collect();
        let table = |rows: &[Vec<usize>], relabel: &[usize]| {
            let counts = rows.iter().map(|r| {
                let mut c = vec![0; cats];
                r.iter().for_each(|&x| c[relabel[x]] += 1);
                c
            }).collect();
            fleiss_kappa(&AgreementTable::new(counts).unwrap()).unwrap().kappa
        };
        let identity: Vec<usize> = (0..cats).collect();
        let base = table(&ratings, &identity);
        let mut relabel = identity.clone();
        relabel.shuffle(&mut rng);
        prop_assert!((table(&ratings, &relabel) - base).abs() <= 1e-12);
        let mut shuffled = ratings.clone();
        shuffled.shuffle(&mut rng);
        prop_assert!((table(&shuffled, &identity) - base).abs() <= 1e-12);
    }
}

#[test]
fn lambda_zero_ignores_masks() {
    let masked = common::Synthetic {
        samples: 40,
        classes: 4,
        vocab: 40,
        ..common::Synthetic::default()
    }
    .generate(11);
    let unmasked = Dataset::new(
        masked
            .records
            .iter()
            .map(|r| Record {
                utterance: r.utterance.clone(),
                mask: None,
            })
            .collect(),
    )
    .unwrap();
    let config = TrainConfig {
        epochs: 3,
        dim: 8,
        seed: 4,
        ..TrainConfig::default()
    };
    let mut trajectory_a = Vec::new();
    let mut trajectory_b = Vec::new();
    intent_explain::model::train_with_observer(&masked, &config, |_, p| {
        trajectory_a.push(p.clone())
    })
    .unwrap();
    intent_explain::model::train_with_observer(&unmasked, &config, |_, p| {
        trajectory_b.push(p.clone())
    })
    .unwrap();
    assert_eq!(trajectory_a, trajectory_b);
    let (final_a, _) = train(&masked, &config).unwrap();
    assert_eq!(&final_a, trajectory_a.last().unwrap());
}

#[test]
fn pad_row_stays_zero_after_training() {
    let data = common::Synthetic {
        samples: 20,
        classes: 2,
        vocab: 20,
        ..common::Synthetic::default()
    }
    .generate(2);
    let (params, _) = train(
        &data,
        &TrainConfig {
            lambda: 10.0,
            epochs: 2,
            dim: 4,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(params.embedding(0).iter().all(|&x| x == 0.0));
}

#[test]
fn lime_surrogate_weights_rows() {
    // exactly linear data, no ridge
    let masks = vec![vec![1, 1], vec![1, 0], vec![0, 1], vec![0, 0]];
    let outputs = [3.0, 1.0, 2.0, 0.0];
    let s = fit_weighted(&masks, &outputs, &[1.0; 4], 0.0).unwrap();
    assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
    assert!((s.coefficients[1] - 2.0).abs() < 1e-12);
    assert!(s.intercept.abs() < 1e-12);
}
