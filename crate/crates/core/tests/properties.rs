use lcakp::experiment::{run_pairs, summarize_pairs, write_jsonl, InstanceContext};
use lcakp::generate::{generate, GeneratorSpec, Profile};
use lcakp::instance::{is_eps, partition};
use lcakp::lca::Branch;
use lcakp::rational::Epsilon;
use lcakp::sampling::RandomnessPlan;
use lcakp::{answer_query, KnapsackInstance, LcaConfig, LcaRun};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn eps(s: &str) -> Epsilon {
    Epsilon::parse(s).unwrap()
}

#[test]
fn answers_do_not_depend_on_query_order() {
    let inst = generate(&GeneratorSpec::new(Profile::LargeHeavy, 80, b"order".to_vec())).unwrap();
    let cfg = LcaConfig::new(eps("1/4"));
    let plan = RandomnessPlan::new(b"order-seed".to_vec(), 3);
    let reference = LcaRun::new(&inst, &cfg, &plan).unwrap().answers();
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(1));
    for &i in &order {
        let a = answer_query(&inst, i, &cfg, &plan).unwrap();
        assert_eq!(a.answer, reference[i], "item {i}");
    }
    order.reverse();
    for &i in order.iter().take(10) {
        assert_eq!(answer_query(&inst, i, &cfg, &plan).unwrap().answer, reference[i]);
    }
}

#[test]
fn out_of_range_query_is_an_error() {
    let inst = generate(&GeneratorSpec::new(Profile::Uniform, 10, b"x".to_vec())).unwrap();
    let cfg = LcaConfig::new(eps("1/2"));
    assert!(answer_query(&inst, 10, &cfg, &RandomnessPlan::new(b"s".to_vec(), 0)).is_err());
}

#[test]
fn instance_json_golden() {
    let inst = KnapsackInstance::normalize(&[(3, 2), (4, 5), (3, 6)], 10).unwrap();
    assert_eq!(inst.to_json().unwrap(), r#"{"capacity":10,"items":[{"p":3,"w":2},{"p":4,"w":5},{"p":3,"w":6}]}"#);
    assert_eq!(KnapsackInstance::from_json(&inst.to_json().unwrap()).unwrap(), inst);
}

#[test]
fn report_rows_are_reproducible_and_carry_derived_values() {
    let inst = generate(&GeneratorSpec::new(Profile::Mixed, 50, b"report".to_vec())).unwrap();
    let ctx = InstanceContext::new("mixed-50", &inst);
    let e = eps("1/4");
    let render = || {
        let pairs = run_pairs(&ctx, &e, 32, 6, b"r").unwrap();
        let mut out = Vec::new();
        write_jsonl(&mut out, &[summarize_pairs("consistency", &ctx, &e, &pairs)]).unwrap();
        String::from_utf8(out).unwrap()
    };
    let first = render();
    assert_eq!(first, render());
    let row: serde_json::Value = serde_json::from_str(first.trim_end()).unwrap();
    assert_eq!(row["schema_version"], 1);
    for key in ["q", "t", "tau", "rho", "beta", "m", "a"] {
        assert!(!row["derived"][key].is_null(), "{key}");
    }
    assert_eq!(row["derived"]["epsilon"], "1/4");
}

fn arb_instance() -> impl Strategy<Value = KnapsackInstance> {
    (5u64..200, prop::collection::vec((1u64..100, 1u64..200), 2..40)).prop_filter_map("valid", |(cap, raw)| {
        let raw: Vec<(u64, u64)> = raw.into_iter().map(|(p, w)| (p, 1 + (w - 1) % cap)).collect();
        KnapsackInstance::normalize(&raw, cap).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn run_invariants(inst in arb_instance(), e in prop::sample::select(vec!["1/2", "1/3", "1/4", "1/5"]), nonce in 0u64..1000) {
        let e = eps(e);
        let cfg = LcaConfig::new(e.clone());
        let run = LcaRun::new(&inst, &cfg, &RandomnessPlan::new(b"prop".to_vec(), nonce)).unwrap();
        let s = run.summary();
        if s.b_indicator {
            prop_assert!(s.e_small.is_none());
            prop_assert_eq!(s.index_large.len(), 1);
            prop_assert_eq!(run.branch(), Branch::Singleton);
        }
        if s.e_small.is_some() {
            prop_assert!(s.k >= 3);
        }
        let out = run.outcome();
        let reduced = &out.reduced;
        prop_assert_eq!(reduced.representative_count(), out.sequence.len() * e.inverse_floor() as usize);
        prop_assert!(reduced.large_count() as u64 <= e.inverse_floor().pow(2));
        let part = partition(&inst, &e);
        for i in s.index_large.iter() {
            prop_assert!(part.large.contains(i));
        }
        let c = run.materialize();
        prop_assert!(c.iter().all(|i| !part.garbage.contains(i)));
        if is_eps(&inst, &out.sequence).holds {
            prop_assert!(inst.is_feasible(&c));
        }
        prop_assert_eq!(out.account.samples_drawn, out.params.m + out.params.a);
        let answers = run.answers();
        for (i, &a) in answers.iter().enumerate() {
            prop_assert_eq!(a, c.contains(&i));
        }
    }
}
