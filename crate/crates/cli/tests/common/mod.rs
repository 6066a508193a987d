#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use kgprompt_cli::ExperimentConfig;
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// One of the fixture configs (`nn`, `cnn`, `mp`) writing to `out`.
pub fn config(kind: &str, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::load(fixture(&format!("config_{kind}.json"))).unwrap();
    c.out = Some(out.to_path_buf());
    c
}

/// Every file under `root`, keyed by `/`-separated relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn ids(rows: &[Value]) -> Vec<String> {
    rows.iter().map(|r| r["instance_id"].as_str().unwrap().to_string()).collect()
}

/// A dataset line with spans located by substring search.
pub fn instance_line(id: &str, text: &str, e1: &str, e2: &str, label: &str) -> String {
    let char_at = |byte: usize| text[..byte].chars().count();
    let s1 = text.find(e1).unwrap();
    let s2 = s1 + e1.len() + text[s1 + e1.len()..].find(e2).unwrap();
    json!({
        "instance_id": id,
        "text": text,
        "e1": {"start": char_at(s1), "end": char_at(s1 + e1.len())},
        "e2": {"start": char_at(s2), "end": char_at(s2 + e2.len())},
        "label": label,
    })
    .to_string()
}

pub fn search_body(hits: &[(&str, &str)]) -> String {
    let rows: Vec<Value> =
        hits.iter().map(|(id, label)| json!({"id": id, "title": id, "label": label, "description": ""})).collect();
    json!({"search": rows, "success": 1}).to_string()
}

pub fn label_body(label: &str) -> String {
    json!({"head": {"vars": ["label"]}, "results": {"bindings": [
        {"label": {"type": "literal", "xml:lang": "en", "value": label}}
    ]}})
    .to_string()
}

/// SPARQL neighbor rows: (property, property label, neighbor, neighbor label).
pub fn neighbor_body(rows: &[(&str, &str, &str, &str)]) -> String {
    let entity = |id: &str| format!("http://www.wikidata.org/entity/{id}");
    let bindings: Vec<Value> = rows
        .iter()
        .map(|(p, pl, n, nl)| {
            json!({
                "prop": {"type": "uri", "value": entity(p)},
                "propLabel": {"type": "literal", "xml:lang": "en", "value": pl},
                "neighbor": {"type": "uri", "value": entity(n)},
                "neighborLabel": {"type": "literal", "xml:lang": "en", "value": nl},
            })
        })
        .collect();
    json!({"head": {"vars": ["prop", "propLabel", "neighbor", "neighborLabel"]}, "results": {"bindings": bindings}})
        .to_string()
}

/// Canned Wikibase answers for the remote fixture dataset.
pub fn wikibase_responses() -> HashMap<String, String> {
    use kgprompt_remote::render_query;
    use kgprompt_remote::wikidata::{entity_api_key, QUERY_IN, QUERY_LABEL, QUERY_OUT};
    let search = |name: &str| {
        entity_api_key(&[
            ("action", "wbsearchentities"),
            ("search", name),
            ("language", "en"),
            ("type", "item"),
            ("limit", "10"),
            ("format", "json"),
        ])
    };
    let remote = |name: &str| {
        fs::read_to_string(
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../remote/tests/fixtures/responses").join(name),
        )
        .unwrap()
    };
    let mut m = HashMap::new();
    m.insert(search("Prostate Cancer"), remote("search_prostate_cancer.json"));
    m.insert(search("prostate cancer"), remote("search_prostate_cancer.json"));
    m.insert(search("Cabazitaxel"), search_body(&[("Q2934034", "cabazitaxel")]));
    m.insert(search("Nilutamide"), search_body(&[("Q421146", "nilutamide")]));
    m.insert(search("Urology"), search_body(&[("Q191433", "urology")]));
    m.insert(search("Sandbox"), search_body(&[]));
    for f in ["label", "out", "in"] {
        let q = match f {
            "label" => QUERY_LABEL,
            "out" => QUERY_OUT,
            _ => QUERY_IN,
        };
        m.insert(render_query(q, "Q181257").unwrap(), remote(&format!("{f}_Q181257.json")));
    }
    let cabazitaxel_out = neighbor_body(&[("P2175", "medical condition treated", "Q181257", "prostate cancer")]);
    for (id, label, out) in [
        ("Q2934034", "cabazitaxel", cabazitaxel_out.as_str()),
        ("Q421146", "nilutamide", ""),
        ("Q191433", "urology", ""),
    ] {
        let empty = neighbor_body(&[]);
        m.insert(render_query(QUERY_LABEL, id).unwrap(), label_body(label));
        m.insert(render_query(QUERY_OUT, id).unwrap(), if out.is_empty() { empty.clone() } else { out.to_string() });
        m.insert(render_query(QUERY_IN, id).unwrap(), empty);
    }
    m
}

/// Four instances over Wikidata-style entities; `Sandbox` resolves to nothing.
pub fn remote_dataset(dir: &Path) -> PathBuf {
    let lines = [
        instance_line(
            "w1",
            "Cabazitaxel is prescribed for Prostate Cancer.",
            "Cabazitaxel",
            "Prostate Cancer",
            "causal",
        ),
        instance_line("w2", "Nilutamide blocks prostate cancer growth.", "Nilutamide", "prostate cancer", "causal"),
        instance_line(
            "w3",
            "Urology clinics see prostate cancer patients.",
            "Urology",
            "prostate cancer",
            "non-causal",
        ),
        instance_line("w4", "Sandbox notes mention prostate cancer.", "Sandbox", "prostate cancer", "non-causal"),
    ];
    let p = dir.join("remote_dataset.jsonl");
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    p
}

/// A remote-graph config against `base` (a stub server URL), caching in `cache`.
pub fn remote_config(dir: &Path, base: &str, cache: &Path, out: &Path) -> ExperimentConfig {
    let dataset = remote_dataset(dir);
    let cfg = json!({
        "dataset": dataset,
        "kg": {"remote": {
            "endpoint": {
                "sparql_url": format!("{base}/sparql"),
                "entity_api_url": format!("{base}/w/api.php"),
                "timeout": 5.0,
                "max_retries": 0,
                "backoff": 0.0,
                "politeness_delay": 0.0
            },
            "cache": cache,
        }},
        "structure": "NN",
        "labeled_neighbors": true,
        "architecture": "CLM",
        "few_shot": {"k": 2},
        "folds": {"n_folds": 2},
        "backend": {"mock": {"seed": 7}},
        "out": out,
    });
    let path = dir.join("remote_config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    ExperimentConfig::load(&path).unwrap()
}
