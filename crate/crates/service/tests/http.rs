mod common;

use axum::http::StatusCode;
use heapscope_core::analytics::{parse_composite, refine_focus, refine_hide, refine_split};
use heapscope_core::query::{evaluate, QueryCache};
use heapscope_core::store::ingest;
use heapscope_core::tracegen::builtin_scenario;
use serde_json::{json, Value};

use common::{app, app_with_limit, get, ingest_into, t0_root};

fn ids(v: &Value) -> Vec<u64> {
    v["objects"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap())
        .collect()
}

#[tokio::test]
async fn datasets_empty_then_listed_by_name() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let (status, body) = get(&app(&data), "/datasets").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));

    ingest_into(&data, "t0-minimal", 0, "test");
    let (_, body) = get(&app(&data), "/datasets").await;
    assert_eq!(body.as_array().unwrap().len(), 1);
    assert_eq!(body[0]["name"], "test");
    assert_eq!(body[0]["objectCount"], 2);
    assert_eq!(body[0]["eventCount"], 7);
    assert_eq!(body[0]["classCount"], 2);
    assert!(body[0]["ingestedAt"].as_str().unwrap().ends_with('Z'));

    ingest_into(&data, "string-like", 1, "alpha");
    let (_, body) = get(&app(&data), "/datasets").await;
    let names: Vec<&str> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["alpha", "test"]);
}

#[tokio::test]
async fn t0_queries() {
    let root = t0_root();
    let app = app(&root.path().join("data"));

    let (status, body) = get(&app, "/json/test/query/MutableObj()").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["count"], 1);
    assert_eq!(ids(&body), [1]);
    assert_eq!(body["dataset"], "test");
    assert_eq!(body["query"], "MutableObj()");
    assert_eq!(body["canonicalQuery"], "MutableObj()");
    assert_eq!(body["truncated"], false);
    assert!(body["computeMillis"].is_u64());
    assert!(body.get("summary").is_none());

    let (_, body) = get(&app, "/json/test/query/Not(Obj())").await;
    assert_eq!(body["count"], 0);

    let (_, body) = get(&app, "/json/test/query/And(TinyObj()%20Obj())").await;
    assert_eq!(body["query"], "And(TinyObj() Obj())");
    assert_eq!(body["canonicalQuery"], "And(Obj() TinyObj())");
    assert_eq!(ids(&body), [2]);
}

#[tokio::test]
async fn query_errors() {
    let root = t0_root();
    let app = app(&root.path().join("data"));

    let (status, body) = get(&app, "/json/test/query/And(").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "parse_error");
    assert_eq!(body["offset"], 3);
    assert!(body["message"].is_string());

    let (status, body) = get(&app, "/json/nope/query/Obj()").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_dataset");

    let (status, body) = get(&app, "/json/test/query/Obj()?vis=colour").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "unknown_variable");

    let (status, body) = get(&app, "/json/test/nothing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["code"].is_string());
}

#[tokio::test]
async fn vis_summary() {
    let root = t0_root();
    let app = app(&root.path().join("data"));
    let (_, body) = get(&app, "/json/test/query/Obj()?vis=klass").await;
    assert_eq!(
        body["summary"],
        json!({"variable": "klass", "total": 2, "kind": "categorical",
               "counts": [{"value": "A", "count": 1}, {"value": "B", "count": 1}]})
    );
    let (_, body) = get(&app, "/json/test/query/TinyObj()?vis=lifeTime").await;
    assert_eq!(body["summary"]["kind"], "numerical");
    assert_eq!(body["summary"]["boxStats"]["median"], 4.0);
}

#[tokio::test]
async fn object_list_is_capped() {
    let root = t0_root();
    let app = app_with_limit(&root.path().join("data"), 1);
    let (_, body) = get(&app, "/json/test/query/Obj()").await;
    assert_eq!(body["count"], 2);
    assert_eq!(ids(&body), [1]);
    assert_eq!(body["truncated"], true);
}

#[tokio::test]
async fn t0_matrix() {
    let root = t0_root();
    let app = app(&root.path().join("data"));
    let (status, body) = get(&app, "/json/test/matrix/MutableObj()/TinyObj()").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["n"], 2);
    assert_eq!(body["universeSize"], 2);
    assert_eq!(body["cells"], json!([[1, 0], [0, 1]]));
    assert_eq!(body["percents"], json!([[50, 0], [0, 50]]));
    assert_eq!(body["cellUrls"][0][0], "/json/test/query/MutableObj()");
    assert_eq!(
        body["cellUrls"][0][1],
        "/json/test/query/And(MutableObj()%20TinyObj())"
    );
    assert_eq!(
        body["parts"][1]["refinements"]["hide"],
        "/json/test/matrix/And(Not(TinyObj())%20MutableObj())"
    );

    let (_, single) = get(&app, "/json/test/matrix/Obj()").await;
    assert_eq!(single["n"], 1);
    assert_eq!(single["percents"], json!([[100]]));
    assert!(single["parts"][0].get("refinements").is_none());

    let (status, body) = get(&app, "/json/test/matrix/Obj()//TinyObj()").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("part 2"));
}

#[tokio::test]
async fn focus_url_on_string_composite() {
    let root = t0_root();
    let app = app(&root.path().join("data"));
    let (_, body) = get(
        &app,
        "/json/test/matrix/InstanceOf(java.lang.String)/HeapUniqueObj()",
    )
    .await;
    let focus = body["parts"][1]["refinements"]["focus"].as_str().unwrap();
    assert!(
        focus.ends_with("And(HeapUniqueObj()%20InstanceOf(java.lang.String))"),
        "{focus}"
    );
}

#[tokio::test]
async fn refinement_urls_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    ingest_into(&data, "random-soup", 3, "soup");
    let app = app(&data);
    let composite = "MutableObj()/HeapUniqueObj()/TinyObj()";
    let (_, body) = get(&app, &format!("/json/soup/matrix/{composite}")).await;
    let store = ingest(&builtin_scenario("random-soup", 3).unwrap(), "soup").unwrap();
    let cq = parse_composite(composite).unwrap();
    let cache = QueryCache::in_memory();
    for k in 1..=3 {
        let refs = &body["parts"][k - 1]["refinements"];
        for (kind, local) in [
            ("focus", refine_focus(&cq, k).unwrap()),
            ("hide", refine_hide(&cq, k).unwrap()),
            ("split", refine_split(&cq, k).unwrap()),
        ] {
            let (status, fetched) = get(&app, refs[kind].as_str().unwrap()).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(fetched["composite"], local.to_string());
            for (i, part) in local.parts.iter().enumerate() {
                let url = fetched["parts"][i]["url"].as_str().unwrap();
                let (_, selection) = get(&app, url).await;
                let expected: Vec<u64> = evaluate(&store, part, &cache)
                    .unwrap()
                    .objects
                    .iter()
                    .map(|o| o.get())
                    .collect();
                assert_eq!(ids(&selection), expected, "{kind} part {i}");
            }
        }
    }
}

#[tokio::test]
async fn repeated_reads_are_identical() {
    let root = t0_root();
    let app = app(&root.path().join("data"));
    let uri = "/json/test/query/ReachableFrom(InstanceOf(A))?vis=klass";
    let (_, mut first) = get(&app, uri).await;
    let (_, mut second) = get(&app, uri).await;
    assert_eq!(first["fromCache"], false);
    assert_eq!(second["fromCache"], true);
    assert_eq!(ids(&first), [1, 2]);
    for body in [&mut first, &mut second] {
        let obj = body.as_object_mut().unwrap();
        obj.remove("fromCache");
        obj.remove("computeMillis");
    }
    assert_eq!(first, second);
}

#[tokio::test]
async fn object_details() {
    let root = t0_root();
    let app = app(&root.path().join("data"));
    let (status, body) = get(&app, "/json/test/objects/1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["klass"], "A");
    assert_eq!(body["allocationSite"], json!({"file": "T0.toy", "line": 1}));
    let outgoing = body["outgoing"].as_array().unwrap();
    assert_eq!(outgoing.len(), 1);
    assert_eq!(outgoing[0]["name"], "f");
    assert_eq!(outgoing[0]["kind"], "Field");
    assert_eq!(outgoing[0]["start"], 4);
    assert_eq!(outgoing[0]["end"], 7);
    assert_eq!(outgoing[0]["openAtEnd"], false);
    assert_eq!(body["incoming"], json!([]));

    let (_, o2) = get(&app, "/json/test/objects/2").await;
    assert_eq!(o2["firstusage"], 3);
    assert_eq!(o2["lifeTime"], 4);

    for uri in ["/json/test/objects/99", "/json/test/objects/abc"] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["code"], "unknown_object");
    }
}
