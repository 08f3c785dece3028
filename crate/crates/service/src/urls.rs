use heapscope_core::analytics::CompositeQuery;
use heapscope_core::query::QueryExpr;
use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};

/// Characters escaped inside a single path segment.
const SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'[')
    .add(b'\\')
    .add(b']')
    .add(b'^')
    .add(b'`')
    .add(b'{')
    .add(b'|')
    .add(b'}');

pub fn encode_segment(text: &str) -> String {
    utf8_percent_encode(text, SEGMENT).to_string()
}

pub fn query_url(dataset: &str, q: &QueryExpr) -> String {
    format!(
        "/json/{}/query/{}",
        encode_segment(dataset),
        encode_segment(&q.to_string())
    )
}

/// Parts are encoded one by one and joined with literal slashes.
pub fn matrix_url(dataset: &str, cq: &CompositeQuery) -> String {
    let parts: Vec<String> = cq
        .parts
        .iter()
        .map(|q| encode_segment(&q.to_string()))
        .collect();
    format!(
        "/json/{}/matrix/{}",
        encode_segment(dataset),
        parts.join("/")
    )
}

pub fn object_url(dataset: &str, id: u64) -> String {
    format!("/json/{}/objects/{id}", encode_segment(dataset))
}
