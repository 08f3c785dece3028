mod common;

use heapscope_core::query::oracle::brute_force_oracle;
use heapscope_core::query::random::random_query;
use heapscope_core::query::{
    canonicalize, evaluate, parse, Primitive, QueryCache, QueryExpr, Unary,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{classes, eval, soup};

fn query_for(store_seed: u64, query_seed: u64) -> (heapscope_core::store::DatasetStore, QueryExpr) {
    let store = soup(store_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(query_seed);
    let q = random_query(&mut rng, 3, &classes(&store));
    (store, q)
}

fn shuffled(q: &QueryExpr, rng: &mut ChaCha8Rng) -> QueryExpr {
    match q {
        QueryExpr::Unary(op, inner) => QueryExpr::unary(*op, shuffled(inner, rng)),
        QueryExpr::And(qs) | QueryExpr::Or(qs) => {
            let mut qs: Vec<QueryExpr> = qs.iter().map(|c| shuffled(c, rng)).collect();
            let dup = qs[0].clone();
            qs.push(dup);
            qs.shuffle(rng);
            if matches!(q, QueryExpr::And(_)) {
                QueryExpr::And(qs)
            } else {
                QueryExpr::Or(qs)
            }
        }
        leaf => leaf.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_oracle(store_seed in 0u64..10_000, query_seed: u64) {
        let (store, q) = query_for(store_seed, query_seed);
        let cache = QueryCache::in_memory();
        prop_assert_eq!(eval(&store, &q, &cache), brute_force_oracle(&store, &q), "{}", q);
    }

    #[test]
    fn algebra(store_seed in 0u64..10_000, query_seed: u64) {
        let (store, q) = query_for(store_seed, query_seed);
        let cache = QueryCache::in_memory();
        let s = eval(&store, &q, &cache);
        let all = eval(&store, &Primitive::Obj.into(), &cache);
        let not = QueryExpr::negate(q.clone());
        prop_assert_eq!(&eval(&store, &QueryExpr::negate(not.clone()), &cache), &s);
        prop_assert_eq!(&eval(&store, &QueryExpr::And(vec![q.clone()]), &cache), &s);
        prop_assert_eq!(&eval(&store, &QueryExpr::Or(vec![q.clone()]), &cache), &s);
        prop_assert!(eval(&store, &QueryExpr::And(vec![q.clone(), not.clone()]), &cache).is_empty());
        prop_assert_eq!(&eval(&store, &QueryExpr::Or(vec![q.clone(), not]), &cache), &all);
    }

    #[test]
    fn closures_are_monotone_and_idempotent(store_seed in 0u64..10_000, query_seed: u64) {
        let (store, q) = query_for(store_seed, query_seed);
        let cache = QueryCache::in_memory();
        let s = eval(&store, &q, &cache);
        let reach = QueryExpr::unary(Unary::ReachableFrom, q.clone());
        let r = eval(&store, &reach, &cache);
        prop_assert!(s.is_subset(&r));
        prop_assert!(s.is_subset(&eval(&store, &QueryExpr::unary(Unary::CanReach, q.clone()), &cache)));
        prop_assert!(eval(&store, &QueryExpr::unary(Unary::Deeply, q.clone()), &cache).is_subset(&s));
        prop_assert_eq!(eval(&store, &QueryExpr::unary(Unary::ReachableFrom, reach), &cache), r);
        let deeply = eval(&store, &QueryExpr::unary(Unary::Deeply, q.clone()), &cache);
        let heap_deeply = eval(&store, &QueryExpr::unary(Unary::HeapDeeply, q), &cache);
        prop_assert!(deeply.is_subset(&heap_deeply));
    }

    #[test]
    fn cache_is_transparent(store_seed in 0u64..10_000, query_seed: u64) {
        let (store, q) = query_for(store_seed, query_seed);
        let cold = QueryCache::in_memory();
        let first = evaluate(&store, &q, &cold).unwrap();
        let again = evaluate(&store, &q, &cold).unwrap();
        prop_assert!(again.from_cache);
        prop_assert_eq!(&first.objects, &again.objects);
        let dir = tempfile::tempdir().unwrap();
        evaluate(&store, &q, &QueryCache::persistent(dir.path())).unwrap();
        let from_disk = evaluate(&store, &q, &QueryCache::persistent(dir.path())).unwrap();
        prop_assert!(from_disk.from_cache);
        prop_assert_eq!(&first.objects, &from_disk.objects);
    }

    #[test]
    fn canonical_permutations_agree(store_seed in 0u64..10_000, query_seed: u64) {
        let (store, q) = query_for(store_seed, query_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(query_seed ^ 0x5eed);
        let p = shuffled(&q, &mut rng);
        prop_assert_eq!(canonicalize(&p), canonicalize(&q));
        prop_assert_eq!(eval(&store, &p, &QueryCache::in_memory()), eval(&store, &q, &QueryCache::in_memory()));
    }

    #[test]
    fn display_round_trips_through_parse(store_seed in 0u64..100, query_seed: u64) {
        let (_, q) = query_for(store_seed, query_seed);
        prop_assert_eq!(parse(&q.to_string()).unwrap(), q);
    }
}

#[test]
fn fixed_identities_on_soups() {
    for seed in 0..20 {
        let store = soup(seed);
        let cache = QueryCache::in_memory();
        let all = eval(&store, &Primitive::Obj.into(), &cache);
        let q = |s: &str| eval(&store, &parse(s).unwrap(), &cache);
        assert_eq!(q("Deeply(Obj())"), all);
        assert!(q("Not(Obj())").is_empty());
        assert!(q("And(AgeOrderedObj() ReverseAgeOrderedObj())").is_subset(&q("TinyObj()")));
        for p in Primitive::ALL {
            let expr = QueryExpr::Primitive(p);
            assert_eq!(
                eval(&store, &expr, &cache),
                brute_force_oracle(&store, &expr),
                "{expr}"
            );
        }
    }
}
