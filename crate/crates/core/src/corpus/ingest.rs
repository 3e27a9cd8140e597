use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Deserialize;

use super::{CorpusStore, Document};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// RCV1-style `<newsitem>` XML; sentences are `<p>` elements.
    Rcv1Xml,
    /// One JSON document per line.
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rcv1-xml" | "xml" => Ok(InputFormat::Rcv1Xml),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(Error::invalid(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    id: String,
    topics: BTreeSet<String>,
    #[serde(default)]
    parent_topics: BTreeSet<String>,
    sentences: Vec<String>,
}

/// Reads a whole corpus. Any malformed record or repeated id aborts the read.
pub fn ingest_corpus(source: impl Read, format: InputFormat) -> Result<CorpusStore> {
    let mut store = CorpusStore::new();
    ingest_into(&mut store, source, format, "input")?;
    Ok(store)
}

/// Appends the documents in `source` to `store`. `name` prefixes error
/// locators so multi-file ingestion can point at the offending file.
pub fn ingest_into(store: &mut CorpusStore, source: impl Read, format: InputFormat, name: &str) -> Result<usize> {
    let before = store.len();
    match format {
        InputFormat::Jsonl => read_jsonl(store, BufReader::new(source), name)?,
        InputFormat::Rcv1Xml => read_rcv1(store, BufReader::new(source), name)?,
    }
    Ok(store.len() - before)
}

fn read_jsonl(store: &mut CorpusStore, reader: impl BufRead, name: &str) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let locator = format!("{name}:line {}", i + 1);
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::parse(&locator, e))?;
        store.insert(Document {
            doc_id: rec.id,
            topics: rec.topics,
            parent_topics: rec.parent_topics,
            sentences: rec.sentences,
        })?;
    }
    Ok(())
}

fn attr(e: &BytesStart<'_>, key: &str, locator: &str) -> Result<Option<String>> {
    match e.try_get_attribute(key).map_err(|err| Error::parse(locator, err))? {
        Some(a) => Ok(Some(a.unescape_value().map_err(|err| Error::parse(locator, err))?.into_owned())),
        None => Ok(None),
    }
}

#[derive(Default)]
struct PartialItem {
    id: String,
    sentences: Vec<String>,
    topics: BTreeSet<String>,
}

fn read_rcv1(store: &mut CorpusStore, reader: impl BufRead, name: &str) -> Result<()> {
    let mut xml = Reader::from_reader(reader);
    let mut buf = Vec::new();
    let mut item: Option<PartialItem> = None;
    let mut paragraph: Option<String> = None;
    let mut in_topic_codes = false;
    let mut items_seen = 0usize;

    loop {
        let locator = format!("{name}:byte {} (newsitem #{})", xml.buffer_position(), items_seen + 1);
        let event = xml.read_event_into(&mut buf).map_err(|e| Error::parse(&locator, e))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                match e.name().as_ref() {
                    b"newsitem" => {
                        if item.is_some() {
                            return Err(Error::parse(&locator, "nested <newsitem>"));
                        }
                        let id = attr(e, "itemid", &locator)?
                            .ok_or_else(|| Error::parse(&locator, "<newsitem> without itemid"))?;
                        item = Some(PartialItem { id, ..Default::default() });
                    }
                    b"p" if item.is_some() && !empty => paragraph = Some(String::new()),
                    b"codes" => {
                        let class = attr(e, "class", &locator)?.unwrap_or_default();
                        in_topic_codes = !empty && class.contains("topics");
                    }
                    b"code" if in_topic_codes => {
                        if let (Some(it), Some(code)) = (item.as_mut(), attr(e, "code", &locator)?) {
                            it.topics.insert(code);
                        }
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let Some(p) = paragraph.as_mut() {
                    p.push_str(&t.unescape().map_err(|e| Error::parse(&locator, e))?);
                }
            }
            Event::CData(c) => {
                if let Some(p) = paragraph.as_mut() {
                    p.push_str(&String::from_utf8_lossy(&c));
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"p" => {
                    if let (Some(text), Some(it)) = (paragraph.take(), item.as_mut()) {
                        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
                        if !text.is_empty() {
                            it.sentences.push(text);
                        }
                    }
                }
                b"codes" => in_topic_codes = false,
                b"newsitem" => {
                    let it = item.take().ok_or_else(|| Error::parse(&locator, "unbalanced </newsitem>"))?;
                    items_seen += 1;
                    store.insert(Document {
                        doc_id: it.id,
                        topics: it.topics,
                        parent_topics: BTreeSet::new(),
                        sentences: it.sentences,
                    })?;
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if item.is_some() {
        return Err(Error::parse(format!("{name}:eof"), "unterminated <newsitem>"));
    }
    Ok(())
}

/// Parses an RCV1 topic hierarchy listing (`parent: X child: Y ...` per line)
/// into a child → parent map. Root entries are skipped.
pub fn parse_topic_hierarchy(reader: impl BufRead) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let value_after = |key: &str| fields.iter().position(|f| *f == key).and_then(|p| fields.get(p + 1)).copied();
        let (Some(parent), Some(child)) = (value_after("parent:"), value_after("child:")) else {
            return Err(Error::parse(format!("hierarchy:line {}", i + 1), "expected `parent: X child: Y`"));
        };
        if parent.eq_ignore_ascii_case("none") || parent.eq_ignore_ascii_case("root") {
            continue;
        }
        map.insert(child.to_string(), parent.to_string());
    }
    Ok(map)
}
