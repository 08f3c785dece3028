//! Random query trees for property tests and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::ast::{Primitive, QueryExpr, Unary};

/// A tree of at most `max_depth` combinator levels. `InstanceOf` leaves draw
/// from `classes` plus one name that matches nothing.
pub fn random_query<R: Rng + ?Sized>(
    rng: &mut R,
    max_depth: usize,
    classes: &[String],
) -> QueryExpr {
    if max_depth == 0 || rng.random_bool(0.3) {
        return random_leaf(rng, classes);
    }
    match rng.random_range(0..8) {
        0 | 1 => {
            let n = rng.random_range(1..=3);
            let children = (0..n)
                .map(|_| random_query(rng, max_depth - 1, classes))
                .collect();
            if rng.random_bool(0.5) {
                QueryExpr::And(children)
            } else {
                QueryExpr::Or(children)
            }
        }
        _ => {
            let op = *Unary::ALL.choose(rng).expect("non-empty");
            QueryExpr::unary(op, random_query(rng, max_depth - 1, classes))
        }
    }
}

pub fn random_leaf<R: Rng + ?Sized>(rng: &mut R, classes: &[String]) -> QueryExpr {
    if rng.random_bool(0.25) {
        let class = classes.choose(rng).map(String::as_str).unwrap_or("Absent");
        let class = if rng.random_bool(0.1) {
            "Absent"
        } else {
            class
        };
        QueryExpr::instance_of(class)
    } else {
        QueryExpr::Primitive(*Primitive::ALL.choose(rng).expect("non-empty"))
    }
}
