use std::fmt;

/// Selections computed directly from the store tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Obj,
    MutableObj,
    ImmutableObj,
    StationaryObj,
    TinyObj,
    UniqueObj,
    HeapUniqueObj,
    StackBoundObj,
    AgeOrderedObj,
    ReverseAgeOrderedObj,
}

impl Primitive {
    pub const ALL: [Primitive; 10] = [
        Primitive::Obj,
        Primitive::MutableObj,
        Primitive::ImmutableObj,
        Primitive::StationaryObj,
        Primitive::TinyObj,
        Primitive::UniqueObj,
        Primitive::HeapUniqueObj,
        Primitive::StackBoundObj,
        Primitive::AgeOrderedObj,
        Primitive::ReverseAgeOrderedObj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Obj => "Obj",
            Primitive::MutableObj => "MutableObj",
            Primitive::ImmutableObj => "ImmutableObj",
            Primitive::StationaryObj => "StationaryObj",
            Primitive::TinyObj => "TinyObj",
            Primitive::UniqueObj => "UniqueObj",
            Primitive::HeapUniqueObj => "HeapUniqueObj",
            Primitive::StackBoundObj => "StackBoundObj",
            Primitive::AgeOrderedObj => "AgeOrderedObj",
            Primitive::ReverseAgeOrderedObj => "ReverseAgeOrderedObj",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Primitive::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Single-argument combinators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unary {
    RefersTo,
    HeapRefersTo,
    ReferredFrom,
    HeapReferredFrom,
    ReachableFrom,
    HeapReachableFrom,
    CanReach,
    CanHeapReach,
    Deeply,
    HeapDeeply,
    Not,
}

impl Unary {
    pub const ALL: [Unary; 11] = [
        Unary::RefersTo,
        Unary::HeapRefersTo,
        Unary::ReferredFrom,
        Unary::HeapReferredFrom,
        Unary::ReachableFrom,
        Unary::HeapReachableFrom,
        Unary::CanReach,
        Unary::CanHeapReach,
        Unary::Deeply,
        Unary::HeapDeeply,
        Unary::Not,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Unary::RefersTo => "RefersTo",
            Unary::HeapRefersTo => "HeapRefersTo",
            Unary::ReferredFrom => "ReferredFrom",
            Unary::HeapReferredFrom => "HeapReferredFrom",
            Unary::ReachableFrom => "ReachableFrom",
            Unary::HeapReachableFrom => "HeapReachableFrom",
            Unary::CanReach => "CanReach",
            Unary::CanHeapReach => "CanHeapReach",
            Unary::Deeply => "Deeply",
            Unary::HeapDeeply => "HeapDeeply",
            Unary::Not => "Not",
        }
    }

    pub fn from_name(name: &str) -> Option<Unary> {
        Unary::ALL.into_iter().find(|u| u.name() == name)
    }

    /// Whether the combinator only follows field references.
    pub fn heap_only(self) -> bool {
        matches!(
            self,
            Unary::HeapRefersTo
                | Unary::HeapReferredFrom
                | Unary::HeapReachableFrom
                | Unary::CanHeapReach
                | Unary::HeapDeeply
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryExpr {
    Primitive(Primitive),
    InstanceOf(String),
    Unary(Unary, Box<QueryExpr>),
    And(Vec<QueryExpr>),
    Or(Vec<QueryExpr>),
}

impl QueryExpr {
    pub fn unary(op: Unary, q: QueryExpr) -> QueryExpr {
        QueryExpr::Unary(op, Box::new(q))
    }

    pub fn negate(q: QueryExpr) -> QueryExpr {
        QueryExpr::unary(Unary::Not, q)
    }

    pub fn instance_of(class: &str) -> QueryExpr {
        QueryExpr::InstanceOf(class.to_string())
    }

    pub fn depth(&self) -> usize {
        match self {
            QueryExpr::Primitive(_) | QueryExpr::InstanceOf(_) => 0,
            QueryExpr::Unary(_, q) => 1 + q.depth(),
            QueryExpr::And(qs) | QueryExpr::Or(qs) => {
                1 + qs.iter().map(QueryExpr::depth).max().unwrap_or(0)
            }
        }
    }
}

impl From<Primitive> for QueryExpr {
    fn from(p: Primitive) -> Self {
        QueryExpr::Primitive(p)
    }
}

/// Prints in query syntax, children in their given order.
impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryExpr::Primitive(p) => write!(f, "{}()", p.name()),
            QueryExpr::InstanceOf(c) => write!(f, "InstanceOf({c})"),
            QueryExpr::Unary(op, q) => write!(f, "{}({q})", op.name()),
            QueryExpr::And(qs) | QueryExpr::Or(qs) => {
                let name = if matches!(self, QueryExpr::And(_)) {
                    "And"
                } else {
                    "Or"
                };
                write!(f, "{name}(")?;
                for (i, q) in qs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{q}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical text: `And`/`Or` children sorted by their own canonical text
/// and deduplicated. No other rewriting happens.
pub fn canonicalize(q: &QueryExpr) -> String {
    canonical_form(q).1
}

/// Canonical tree together with its printed text.
pub fn canonical_form(q: &QueryExpr) -> (QueryExpr, String) {
    match q {
        QueryExpr::Primitive(_) | QueryExpr::InstanceOf(_) => (q.clone(), q.to_string()),
        QueryExpr::Unary(op, inner) => {
            let (c, text) = canonical_form(inner);
            (QueryExpr::unary(*op, c), format!("{}({text})", op.name()))
        }
        QueryExpr::And(qs) | QueryExpr::Or(qs) => {
            let mut children: Vec<(QueryExpr, String)> = qs.iter().map(canonical_form).collect();
            children.sort_by(|a, b| a.1.cmp(&b.1));
            children.dedup_by(|a, b| a.1 == b.1);
            let is_and = matches!(q, QueryExpr::And(_));
            let text = format!(
                "{}({})",
                if is_and { "And" } else { "Or" },
                children
                    .iter()
                    .map(|c| c.1.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            let exprs = children.into_iter().map(|c| c.0).collect();
            let tree = if is_and {
                QueryExpr::And(exprs)
            } else {
                QueryExpr::Or(exprs)
            };
            (tree, text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;

    fn canon(s: &str) -> String {
        canonicalize(&parse(s).unwrap())
    }

    #[test]
    fn and_children_sorted() {
        assert_eq!(
            canon("And(TinyObj() MutableObj())"),
            canon("And(MutableObj() TinyObj())")
        );
    }

    #[test]
    fn duplicate_children_collapse_to_one() {
        assert_eq!(canon("And(TinyObj() TinyObj())"), "And(TinyObj())");
    }

    #[test]
    fn or_of_instanceofs() {
        assert_eq!(
            canon("Or(InstanceOf(b.B) InstanceOf(a.A))"),
            "Or(InstanceOf(a.A) InstanceOf(b.B))"
        );
    }

    #[test]
    fn double_negation_kept() {
        assert_eq!(canon("Not(Not(Obj()))"), "Not(Not(Obj()))");
    }

    #[test]
    fn nested_sort_uses_canonical_children() {
        assert_eq!(
            canon("Or(Not(And(TinyObj() Obj())) And(TinyObj() Obj()))"),
            "Or(And(Obj() TinyObj()) Not(And(Obj() TinyObj())))"
        );
    }

    #[test]
    fn display_preserves_order() {
        let q = parse("And(HeapUniqueObj() InstanceOf(java.lang.String))").unwrap();
        assert_eq!(
            q.to_string(),
            "And(HeapUniqueObj() InstanceOf(java.lang.String))"
        );
    }
}
