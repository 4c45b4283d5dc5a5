use super::{OsmDocument, OsmError, OsmNode, OsmWay};
use std::collections::BTreeMap;

fn malformed(doc: &roxmltree::Document, pos: usize, message: impl Into<String>) -> OsmError {
    let p = doc.text_pos_at(pos);
    OsmError::MalformedXml {
        row: p.row,
        col: p.col,
        message: message.into(),
    }
}

fn attr<'a>(
    doc: &roxmltree::Document,
    node: roxmltree::Node<'a, '_>,
    name: &str,
) -> Result<&'a str, OsmError> {
    node.attribute(name)
        .ok_or_else(|| malformed(doc, node.range().start, format!("<{}> missing '{name}'", node.tag_name().name())))
}

fn num<T: std::str::FromStr>(
    doc: &roxmltree::Document,
    node: roxmltree::Node,
    name: &str,
) -> Result<T, OsmError> {
    let raw = attr(doc, node, name)?;
    raw.trim()
        .parse()
        .map_err(|_| malformed(doc, node.range().start, format!("bad {name} '{raw}'")))
}

/// Parse OSM 0.6 XML. Only `node`, `way`, `nd` and `tag` are read; other
/// elements (relations, bounds, metadata) are ignored.
pub fn parse_osm(bytes: &[u8]) -> Result<OsmDocument, OsmError> {
    let text = std::str::from_utf8(bytes).map_err(|e| OsmError::MalformedXml {
        row: 0,
        col: 0,
        message: format!("invalid utf-8 at byte {}", e.valid_up_to()),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let p = e.pos();
        OsmError::MalformedXml {
            row: p.row,
            col: p.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "osm" {
        return Err(malformed(&doc, root.range().start, "root element is not <osm>"));
    }

    let mut out = OsmDocument::default();
    for el in root.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id: i64 = num(&doc, el, "id")?;
                let lat: f64 = num(&doc, el, "lat")?;
                let lon: f64 = num(&doc, el, "lon")?;
                out.nodes.insert(id, OsmNode { lat, lon });
            }
            "way" => {
                let id: i64 = num(&doc, el, "id")?;
                let mut node_ids = Vec::new();
                let mut tags = BTreeMap::new();
                for child in el.children().filter(|n| n.is_element()) {
                    match child.tag_name().name() {
                        "nd" => node_ids.push(num(&doc, child, "ref")?),
                        "tag" => {
                            let k = attr(&doc, child, "k")?;
                            let v = attr(&doc, child, "v")?;
                            tags.insert(k.to_string(), v.to_string());
                        }
                        _ => {}
                    }
                }
                out.ways.push(OsmWay { id, node_ids, tags });
            }
            _ => {}
        }
    }

    // Nodes may legally follow the ways that use them, so resolve at the end.
    for way in &out.ways {
        if let Some(missing) = way.node_ids.iter().find(|id| !out.nodes.contains_key(id)) {
            return Err(OsmError::DanglingNodeRef {
                way: way.id,
                node: *missing,
            });
        }
    }
    Ok(out)
}
