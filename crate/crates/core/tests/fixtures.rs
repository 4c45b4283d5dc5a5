use citycraft::planner::{parse_reply, ParsedReply, ReplayBackend};
use citycraft::retrieval::Catalog;
use citycraft::scene::{read_manifest, write_manifest};
use std::path::{Path, PathBuf};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn bridge_manifest_is_valid() {
    let bytes = std::fs::read(fixtures().join("scene/small_manifest.json")).unwrap();
    let m = read_manifest(&bytes).unwrap();
    m.validate(None).unwrap();
    assert_eq!(m.buildings.len(), 3);
    assert_eq!(m.props.len(), 5);
    assert_eq!(read_manifest(&write_manifest(&m)).unwrap(), m);
}

#[test]
fn recorded_replies_all_parse() {
    let path = fixtures().join("planner/replies.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut plans = 0;
    let mut keeps = 0;
    for line in text.lines() {
        let ex: serde_json::Value = serde_json::from_str(line).unwrap();
        let body: serde_json::Value = serde_json::from_str(ex["response"].as_str().unwrap()).unwrap();
        let content = body["choices"][0]["message"]["content"].as_str().unwrap();
        match parse_reply(content).unwrap() {
            ParsedReply::Plan(_) => plans += 1,
            ParsedReply::Keep => keeps += 1,
            ParsedReply::BadFunction(_, f) => panic!("bad function {f}"),
        }
    }
    assert_eq!((plans, keeps), (10, 10));
    assert_eq!(ReplayBackend::from_path(&path).unwrap().len(), 20);
}

#[test]
fn fixture_catalog_loads() {
    let c = Catalog::load(&fixtures().join("catalog/catalog.json")).unwrap();
    c.validate().unwrap();
    assert_eq!(c.len(), 120);
}
