//! XML trees and the structure-preserving XML-to-JSON mapping.
//!
//! Mapping rules: element → object; attribute `a="v"` → key `"@a"`; text
//! content → key `"#text"` (omitted when whitespace-only); repeated sibling
//! element names → array in document order; an element carrying only text
//! (no attributes, no child elements) → plain string. Field names and values
//! pass through unchanged; no vocabulary is enforced across sources.

use std::fmt::Write as _;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::document::Document;

#[derive(Debug, Error)]
pub enum XmlError {
    #[error("malformed XML at byte {position}: {message}")]
    Malformed { position: u64, message: String },
    #[error("element name must not be empty")]
    EmptyName,
    #[error("document has no root element")]
    NoRoot,
    #[error("trailing content after root element")]
    TrailingContent,
    #[error("unexpected closing tag {0:?}")]
    UnbalancedClose(String),
}

/// One XML element: name, ordered attributes, ordered children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlElement {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlNode {
    Element(XmlElement),
    Text(String),
}

impl XmlElement {
    pub fn new(name: impl Into<String>) -> Self {
        XmlElement {
            name: name.into(),
            attributes: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn attr(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push((name.into(), value.into()));
        self
    }

    pub fn child(mut self, child: XmlElement) -> Self {
        self.children.push(XmlNode::Element(child));
        self
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.children.push(XmlNode::Text(text.into()));
        self
    }

    /// Number of elements in this subtree, the root included.
    pub fn element_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| match c {
                XmlNode::Element(e) => e.element_count(),
                XmlNode::Text(_) => 0,
            })
            .sum::<usize>()
    }

    /// Serializes back to XML text.
    pub fn to_xml_string(&self) -> String {
        let mut out = String::new();
        write_element(self, &mut out);
        out
    }
}

fn escape_xml(text: &str, out: &mut String) {
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            other => out.push(other),
        }
    }
}

fn write_element(element: &XmlElement, out: &mut String) {
    let _ = write!(out, "<{}", element.name);
    for (name, value) in &element.attributes {
        let _ = write!(out, " {name}=\"");
        escape_xml(value, out);
        out.push('"');
    }
    if element.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for child in &element.children {
        match child {
            XmlNode::Element(e) => write_element(e, out),
            XmlNode::Text(t) => escape_xml(t, out),
        }
    }
    let _ = write!(out, "</{}>", element.name);
}

/// Parses a well-formed XML document into a tree. Namespace prefixes pass
/// through as part of the name; comments, CDATA, and the prolog are handled.
pub fn parse_xml(text: &str) -> Result<XmlElement, XmlError> {
    let mut reader = Reader::from_str(text);

    let mut stack: Vec<XmlElement> = Vec::new();
    let mut root: Option<XmlElement> = None;

    fn attach(stack: &mut [XmlElement], root: &mut Option<XmlElement>, element: XmlElement) -> Result<(), XmlError> {
        match stack.last_mut() {
            Some(parent) => {
                parent.children.push(XmlNode::Element(element));
                Ok(())
            }
            None => {
                if root.is_some() {
                    return Err(XmlError::TrailingContent);
                }
                *root = Some(element);
                Ok(())
            }
        }
    }

    loop {
        let position = reader.buffer_position();
        let event = reader.read_event().map_err(|e| XmlError::Malformed {
            position,
            message: e.to_string(),
        })?;
        match event {
            Event::Start(start) => {
                if root.is_some() && stack.is_empty() {
                    return Err(XmlError::TrailingContent);
                }
                stack.push(element_from_start(&reader, &start)?);
            }
            Event::Empty(start) => {
                let element = element_from_start(&reader, &start)?;
                attach(&mut stack, &mut root, element)?;
            }
            Event::End(end) => {
                let element = stack.pop().ok_or_else(|| {
                    XmlError::UnbalancedClose(String::from_utf8_lossy(end.name().as_ref()).into_owned())
                })?;
                if end.name().as_ref() != element.name.as_bytes() {
                    return Err(XmlError::Malformed {
                        position,
                        message: format!(
                            "closing tag {:?} does not match {:?}",
                            String::from_utf8_lossy(end.name().as_ref()),
                            element.name
                        ),
                    });
                }
                attach(&mut stack, &mut root, element)?;
            }
            Event::Text(t) => {
                let text = t
                    .unescape()
                    .map_err(|e| XmlError::Malformed {
                        position,
                        message: e.to_string(),
                    })?
                    .into_owned();
                if let Some(parent) = stack.last_mut() {
                    parent.children.push(XmlNode::Text(text));
                } else if !text.trim().is_empty() {
                    return Err(if root.is_some() {
                        XmlError::TrailingContent
                    } else {
                        XmlError::NoRoot
                    });
                }
            }
            Event::CData(c) => {
                let text = String::from_utf8_lossy(&c.into_inner()).into_owned();
                if let Some(parent) = stack.last_mut() {
                    parent.children.push(XmlNode::Text(text));
                }
            }
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }

    if !stack.is_empty() {
        return Err(XmlError::Malformed {
            position: reader.buffer_position(),
            message: format!("unclosed element {:?}", stack.last().unwrap().name),
        });
    }
    root.ok_or(XmlError::NoRoot)
}

fn element_from_start(
    reader: &Reader<&[u8]>,
    start: &quick_xml::events::BytesStart<'_>,
) -> Result<XmlElement, XmlError> {
    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    if name.is_empty() {
        return Err(XmlError::EmptyName);
    }
    let mut element = XmlElement::new(name);
    for attr in start.attributes() {
        let attr = attr.map_err(|e| XmlError::Malformed {
            position: reader.buffer_position(),
            message: e.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| XmlError::Malformed {
                position: reader.buffer_position(),
                message: e.to_string(),
            })?
            .into_owned();
        element.attributes.push((key, value));
    }
    Ok(element)
}

/// Converts an XML tree into its JSON document form. Total on well-formed
/// trees and deterministic; converting twice yields equal documents.
pub fn xml_to_json(tree: &XmlElement) -> Document {
    let mut root = Map::new();
    root.insert(tree.name.clone(), element_value(tree));
    Document::new(Value::Object(root))
}

fn element_value(element: &XmlElement) -> Value {
    let text: String = element
        .children
        .iter()
        .filter_map(|c| match c {
            XmlNode::Text(t) => Some(t.as_str()),
            XmlNode::Element(_) => None,
        })
        .collect::<Vec<_>>()
        .join("");
    let text = text.trim();
    let child_elements: Vec<&XmlElement> = element
        .children
        .iter()
        .filter_map(|c| match c {
            XmlNode::Element(e) => Some(e),
            XmlNode::Text(_) => None,
        })
        .collect();

    // an element with only text collapses to a string
    if element.attributes.is_empty() && child_elements.is_empty() {
        if !text.is_empty() {
            return Value::String(text.to_string());
        }
        return Value::Object(Map::new());
    }

    let mut object = Map::new();
    for (name, value) in &element.attributes {
        object.insert(format!("@{name}"), Value::String(value.clone()));
    }
    for child in child_elements {
        let value = element_value(child);
        match object.get_mut(&child.name) {
            Some(Value::Array(items)) => items.push(value),
            Some(existing) => {
                let first = std::mem::replace(existing, Value::Null);
                *existing = Value::Array(vec![first, value]);
            }
            None => {
                object.insert(child.name.clone(), value);
            }
        }
    }
    if !text.is_empty() {
        object.insert("#text".to_string(), Value::String(text.to_string()));
    }
    Value::Object(object)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn host_metric_example() {
        let tree = parse_xml(r#"<host name="n1"><metric name="load" val="0.5"/></host>"#).unwrap();
        let doc = xml_to_json(&tree);
        assert_eq!(
            doc.value(),
            &json!({"host": {"@name": "n1", "metric": {"@name": "load", "@val": "0.5"}}})
        );
    }

    #[test]
    fn repeated_siblings_become_array() {
        let tree = parse_xml(
            r#"<host name="n1"><metric name="a" val="1"/><metric name="b" val="2"/></host>"#,
        )
        .unwrap();
        let doc = xml_to_json(&tree);
        assert_eq!(
            doc.value(),
            &json!({"host": {"@name": "n1", "metric": [
                {"@name": "a", "@val": "1"},
                {"@name": "b", "@val": "2"}
            ]}})
        );
    }

    #[test]
    fn text_only_element_collapses_to_string() {
        let tree = parse_xml("<status><state>  up  </state></status>").unwrap();
        let doc = xml_to_json(&tree);
        assert_eq!(doc.value(), &json!({"status": {"state": "up"}}));
    }

    #[test]
    fn mixed_text_with_attributes_uses_text_key() {
        let tree = parse_xml(r#"<value units="mb">42</value>"#).unwrap();
        let doc = xml_to_json(&tree);
        assert_eq!(doc.value(), &json!({"value": {"@units": "mb", "#text": "42"}}));
    }

    #[test]
    fn whitespace_only_text_is_omitted() {
        let tree = parse_xml("<a>\n  <b x=\"1\"/>\n</a>").unwrap();
        let doc = xml_to_json(&tree);
        assert_eq!(doc.value(), &json!({"a": {"b": {"@x": "1"}}}));
    }

    #[test]
    fn empty_element_becomes_empty_object() {
        let tree = parse_xml("<nothing/>").unwrap();
        assert_eq!(xml_to_json(&tree).value(), &json!({"nothing": {}}));
    }

    #[test]
    fn entities_unescape_and_reescape() {
        let tree = parse_xml(r#"<m v="a&amp;b">x &lt; y</m>"#).unwrap();
        assert_eq!(
            xml_to_json(&tree).value(),
            &json!({"m": {"@v": "a&b", "#text": "x < y"}})
        );
        let round = parse_xml(&tree.to_xml_string()).unwrap();
        assert_eq!(round, tree);
    }

    #[test]
    fn prolog_and_comments_are_skipped() {
        let tree = parse_xml("<?xml version=\"1.0\"?><!-- hi --><r a=\"1\"/>").unwrap();
        assert_eq!(tree.name, "r");
    }

    #[test]
    fn malformed_inputs_fail() {
        for bad in ["", "<a>", "<a></b>", "text only", "<a/><b/>", "<a><b></a></b>"] {
            assert!(parse_xml(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn namespace_prefixes_pass_through() {
        let tree = parse_xml(r#"<ns:r xmlns:ns="urn:x"><ns:c/></ns:r>"#).unwrap();
        let doc = xml_to_json(&tree);
        assert_eq!(
            doc.value(),
            &json!({"ns:r": {"@xmlns:ns": "urn:x", "ns:c": {}}})
        );
    }

    #[test]
    fn conversion_is_deterministic_and_json_idempotent() {
        let tree = parse_xml(
            r#"<h a="1"><m n="x"/><m n="y"/><note>hello</note></h>"#,
        )
        .unwrap();
        let first = xml_to_json(&tree);
        let second = xml_to_json(&tree);
        assert_eq!(first, second);
        let reparsed = Document::parse(&first.canonical_string()).unwrap();
        assert_eq!(first, reparsed);
    }

    /// Census oracle: walks the JSON output counting values attributable to
    /// elements, independent of the converter's own bookkeeping.
    pub(crate) fn census_json(value: &Value) -> usize {
        fn count_value(v: &Value) -> usize {
            match v {
                Value::Object(map) => 1 + census_object(map),
                // strings and empty objects stand for one element
                _ => 1,
            }
        }
        fn census_object(map: &Map<String, Value>) -> usize {
            let mut total = 0;
            for (key, val) in map {
                if key.starts_with('@') || key == "#text" {
                    continue;
                }
                match val {
                    Value::Array(items) => total += items.iter().map(count_value).sum::<usize>(),
                    other => total += count_value(other),
                }
            }
            total
        }
        match value {
            Value::Object(map) => census_object(map),
            _ => 0,
        }
    }

    fn random_tree(rng: &mut impl rand::Rng, depth: usize) -> XmlElement {
        let names = ["host", "metric", "queue", "job", "note", "svc"];
        let mut element = XmlElement::new(names[rng.gen_range(0..names.len())]);
        for i in 0..rng.gen_range(0..3) {
            element = element.attr(format!("a{i}"), format!("v{}", rng.gen_range(0..100)));
        }
        let child_budget = if depth == 0 { 0 } else { rng.gen_range(0..4) };
        for _ in 0..child_budget {
            if rng.gen_bool(0.3) {
                let text: String = if rng.gen_bool(0.2) {
                    "   ".into()
                } else {
                    format!("t{}", rng.gen_range(0..50))
                };
                element = element.text(text);
            } else {
                element = element.child(random_tree(rng, depth - 1));
            }
        }
        element
    }

    #[test]
    fn census_matches_element_count_on_random_trees() {
        use rand::SeedableRng;
        let mut rng = rand_pcg::Pcg64::seed_from_u64(0x5EED);
        for _ in 0..1_000 {
            let tree = random_tree(&mut rng, 4);
            let doc = xml_to_json(&tree);
            assert_eq!(
                census_json(doc.value()),
                tree.element_count(),
                "tree: {}",
                tree.to_xml_string()
            );
        }
    }

    #[test]
    fn serialize_parse_round_trip_on_random_trees() {
        use rand::SeedableRng;
        let mut rng = rand_pcg::Pcg64::seed_from_u64(0xBEEF);
        for _ in 0..500 {
            let tree = random_tree(&mut rng, 3);
            let text = tree.to_xml_string();
            let reparsed = parse_xml(&text).unwrap();
            // JSON view is identical even where adjacent text nodes merge
            assert_eq!(xml_to_json(&reparsed), xml_to_json(&tree), "{text}");
        }
    }
}
