mod common;

use dyckformer::constructions::{build_dyck_generator, build_dyck_recognizer, select_constants_with, AttnPolicy};
use dyckformer::evalkit::{
    acc_closed, corrupt_once, generate_dataset, malformed_framings, max_tv_over_prefixes, negatives_from,
    network_predictions, recognition_accuracy, Aligned, DatasetKind, EvalError, MetricsReport, Split, SplitSpec,
};
use dyckformer::lang_core::{is_dyck_member, DyckGenParams, GenParams, Lang, Token, TokenSequence};
use dyckformer::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(
    k: usize,
    n_max: usize,
    count: usize,
    seed: u64,
) -> (GenParams, SplitSpec, Vec<dyckformer::evalkit::DatasetRecord>) {
    let gp = GenParams::Dyck(DyckGenParams::uniform(k, 0.5, 0.9).unwrap());
    let split = SplitSpec::new(n_max, 1.2).unwrap();
    let data = generate_dataset(&gp, count, split, DatasetKind::Test, seed, Exec::Sequential);
    (gp, split, data)
}

fn from_process(gp: &GenParams, seq: &TokenSequence) -> Result<Aligned, EvalError> {
    Ok((1..=seq.len()).map(|n| gp.next_distribution(&seq.prefix(n)).ok()).collect())
}

#[test]
fn datasets_are_deterministic_and_split_by_length() {
    let (_, split, a) = dataset(3, 20, 200, 42);
    let (_, _, b) = dataset(3, 20, 200, 42);
    assert_eq!(a, b);
    let gp = GenParams::Dyck(DyckGenParams::uniform(3, 0.5, 0.9).unwrap());
    assert_eq!(a, generate_dataset(&gp, 200, split, DatasetKind::Test, 42, Exec::Parallel));
    for r in &a {
        assert_eq!(r.split, if r.brackets() <= 20 { Split::Id } else { Split::Ood });
        assert!(r.brackets() <= split.ood_cap());
        assert_eq!(is_dyck_member(&r.tokens), !r.truncated);
    }
    let train = generate_dataset(&gp, 200, split, DatasetKind::Train, 42, Exec::Sequential);
    assert!(train.iter().all(|r| r.brackets() <= 20 && r.split == Split::Id));
    assert!(SplitSpec::new(10, 1.0).is_err());
}

#[test]
fn acc_closed_of_the_process_is_one() {
    let (gp, split, data) = dataset(4, 30, 150, 7);
    let rep = acc_closed(|s| from_process(&gp, s), Lang::Dyck, &data, &split, Exec::Sequential).unwrap();
    assert!((rep.id.value.unwrap() - 1.0).abs() < 1e-12);
    assert!(rep.id.count > 0);
    if let Some(v) = rep.ood.value {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn acc_closed_of_a_uniform_predictor_is_one_over_k() {
    let k = 4;
    let (_, split, data) = dataset(k, 30, 150, 8);
    let uniform = |s: &TokenSequence| -> Result<Aligned, EvalError> {
        Ok(vec![Some(vec![1.0 / (2 * k + 2) as f64; 2 * k + 2]); s.len()])
    };
    let rep = acc_closed(uniform, Lang::Dyck, &data, &split, Exec::Sequential).unwrap();
    assert!((rep.id.value.unwrap() - 1.0 / k as f64).abs() < 1e-12);
}

#[test]
fn acc_closed_buckets_by_prefix_length() {
    let k = 2;
    let body = [Token::Open(1), Token::Open(2), Token::Close(2), Token::Close(1)];
    let rec = dyckformer::evalkit::DatasetRecord {
        id: 0,
        lang: Lang::Dyck,
        k,
        split: Split::Ood,
        truncated: false,
        tokens: TokenSequence::framed(&body),
    };
    let split = SplitSpec::new(1, 3.0).unwrap();
    let uniform = |s: &TokenSequence| -> Result<Aligned, EvalError> { Ok(vec![Some(vec![1.0 / 6.0; 6]); s.len()]) };
    let rep = acc_closed(uniform, Lang::Dyck, &[rec], &split, Exec::Sequential).unwrap();
    assert_eq!((rep.id.count, rep.ood.count), (1, 2));
}

#[test]
fn built_generator_tv_and_predictions() {
    let (_, split, data) = dataset(3, 40, 100, 9);
    let dp = DyckGenParams::uniform(3, 0.5, 0.9).unwrap();
    let p = select_constants_with(3, 64, 0.8, AttnPolicy::PerConstruction).0;
    let net = build_dyck_generator(3, &dp, &p).unwrap();
    let tv = max_tv_over_prefixes(&net, &data, &split, Exec::Sequential).unwrap();
    assert!(tv.max() < 2.0 * 4.0 * (-p.c0_gen).exp());
    let preds = network_predictions(&net, &data[0].tokens).unwrap();
    assert_eq!(preds.len(), data[0].tokens.len());
    let rep = acc_closed(|s| network_predictions(&net, s), Lang::Dyck, &data, &split, Exec::Sequential).unwrap();
    assert!(rep.id.value.unwrap() > 1.0 - 1e-6);
}

#[test]
fn recognition_report_counts() {
    let k = 2;
    let p = select_constants_with(k, 40, 0.8, AttnPolicy::PerConstruction).0;
    let net = build_dyck_recognizer(k, &p).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let pos: Vec<TokenSequence> =
        (0..30).map(|i| TokenSequence::framed(&common::random_dyck_body(k, 2 * (i % 12), &mut r))).collect();
    let mut neg = negatives_from(&pos, k, 5);
    neg.extend(malformed_framings(&[Token::Open(1), Token::Close(1)]));
    neg.push(corrupt_once(&pos[3], k, &mut r));
    neg.retain(|s| !common::stack_member(s, k));
    let rep = recognition_accuracy(&net, &pos, &neg, Exec::Sequential).unwrap();
    assert_eq!(rep.total, pos.len() + neg.len());
    assert_eq!((rep.true_pos, rep.true_neg, rep.false_pos, rep.false_neg), (pos.len(), neg.len(), 0, 0));
    assert_eq!(rep.accuracy, 1.0);
}

#[test]
fn metrics_report_shape() {
    let mut m = MetricsReport::new("dyck-gen", 2, serde_json::json!({"n_max": 8}));
    m.split_mut(Split::Id).max_tv = Some(1e-6);
    let v = serde_json::to_value(&m).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    assert_eq!(keys, ["k", "params", "splits", "task"]);
    assert!(v["splits"]["id"].is_object() && v["splits"]["ood"].is_object());
    assert!(m.is_valid());
    m.split_mut(Split::Ood).acc_closed = Some(1.5);
    assert!(!m.is_valid());
}
