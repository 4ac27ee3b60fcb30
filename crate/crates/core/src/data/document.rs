use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::tokenizer::Special;

/// Classes emitted by the upstream multilingual domain classifier.
pub const DOMAIN_CLASSES: [&str; 26] = [
    "Adult",
    "Arts_and_Entertainment",
    "Autos_and_Vehicles",
    "Beauty_and_Fitness",
    "Books_and_Literature",
    "Business_and_Industrial",
    "Computers_and_Electronics",
    "Finance",
    "Food_and_Drink",
    "Games",
    "Health",
    "Hobbies_and_Leisure",
    "Home_and_Garden",
    "Internet_and_Telecom",
    "Jobs_and_Education",
    "Law_and_Government",
    "News",
    "Online_Communities",
    "People_and_Society",
    "Pets_and_Animals",
    "Real_Estate",
    "Science",
    "Sensitive_Subjects",
    "Shopping",
    "Sports",
    "Travel_and_Transportation",
];

pub const DEFAULT_QUALITY_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_probs: Option<BTreeMap<String, f64>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
            quality: None,
            domain_probs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.quality {
            if !(0.0..=1.0).contains(&q) {
                return invalid(format!("document {}: quality {q} outside [0,1]", self.id));
            }
        }
        if let Some(p) = &self.domain_probs {
            check_probs(p)?;
        }
        Ok(())
    }
}

fn check_probs(probs: &BTreeMap<String, f64>) -> Result<()> {
    if probs.is_empty() {
        return invalid("empty domain probability map");
    }
    if probs.values().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return invalid("domain probabilities must be finite and non-negative");
    }
    let total: f64 = probs.values().sum();
    if (total - 1.0).abs() > 1e-6 {
        return invalid(format!("domain probabilities sum to {total}, not 1"));
    }
    Ok(())
}

pub fn read_ndjson(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_ndjson(mut writer: impl Write, docs: &[Document]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Dedup key: SHA-256 of the text with whitespace runs collapsed to one space
/// and the ends trimmed.
pub fn dedup_key(text: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    let mut first = true;
    for word in text.split_whitespace() {
        if !first {
            h.update(b" ");
        }
        h.update(word.as_bytes());
        first = false;
    }
    h.finalize().into()
}

/// Keep the first document of each dedup key, in input order.
pub fn dedup_exact(docs: Vec<Document>) -> Vec<Document> {
    let mut seen = HashSet::with_capacity(docs.len());
    docs.into_iter()
        .filter(|d| seen.insert(dedup_key(&d.text)))
        .collect()
}

/// Keep documents scored at or above `threshold`; unscored documents pass.
pub fn quality_filter(docs: Vec<Document>, threshold: f64) -> Vec<Document> {
    docs.into_iter()
        .filter(|d| d.quality.map_or(true, |q| q >= threshold))
        .collect()
}

/// Target domain → classifier class.
pub type DomainMapping = BTreeMap<String, String>;

pub fn default_domain_mapping() -> DomainMapping {
    [("biomed", "Health"), ("legal", "Law_and_Government")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Top-1 selection: the target domain whose mapped class is the unique argmax.
pub fn domain_select(probs: &BTreeMap<String, f64>, mapping: &DomainMapping) -> Result<Option<String>> {
    check_probs(probs)?;
    let max = probs.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut winners = probs.iter().filter(|(_, &v)| v == max);
    let (class, _) = winners.next().expect("non-empty");
    if winners.next().is_some() {
        return Ok(None);
    }
    Ok(mapping
        .iter()
        .find(|(_, c)| *c == class)
        .map(|(d, _)| d.clone()))
}

/// Keep only documents assigned to `domain` by [`domain_select`].
/// Documents without probabilities are dropped.
pub fn filter_domain(docs: Vec<Document>, domain: &str, mapping: &DomainMapping) -> Result<Vec<Document>> {
    let mut out = Vec::new();
    for d in docs {
        let Some(p) = &d.domain_probs else { continue };
        if domain_select(p, mapping)?.as_deref() == Some(domain) {
            out.push(d);
        }
    }
    Ok(out)
}

pub fn format_translation_pair(src: &str, tgt: &str) -> Result<String> {
    if src.is_empty() || tgt.is_empty() {
        return invalid("translation pair sides must be non-empty");
    }
    Ok(format!("{src}{}{tgt}", Special::Translation.literal()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(i.to_string(), *t, "es"))
            .collect()
    }

    fn texts(d: &[Document]) -> Vec<&str> {
        d.iter().map(|d| d.text.as_str()).collect()
    }

    #[test]
    fn dedup_basic_cases() {
        assert!(dedup_exact(vec![]).is_empty());
        assert_eq!(texts(&dedup_exact(docs(&["a", "b", "a"]))), vec!["a", "b"]);
        assert_eq!(
            texts(&dedup_exact(docs(&["hola  mundo", " hola mundo\n", "hola mundo!"]))),
            vec!["hola  mundo", "hola mundo!"]
        );
    }

    #[test]
    fn quality_boundary_is_inclusive() {
        let mut d = docs(&["keep", "drop", "unscored"]);
        d[0].quality = Some(0.2);
        d[1].quality = Some(0.19);
        assert_eq!(
            texts(&quality_filter(d, DEFAULT_QUALITY_THRESHOLD)),
            vec!["keep", "unscored"]
        );
    }

    fn probs(p: &[(&str, f64)]) -> BTreeMap<String, f64> {
        p.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn domain_top1() {
        let m: DomainMapping = [("biomed".to_string(), "Health".to_string())].into();
        assert_eq!(
            domain_select(&probs(&[("Health", 0.9), ("News", 0.1)]), &m).unwrap(),
            Some("biomed".into())
        );
        assert_eq!(domain_select(&probs(&[("News", 0.6), ("Health", 0.4)]), &m).unwrap(), None);
        assert_eq!(domain_select(&probs(&[("News", 0.5), ("Health", 0.5)]), &m).unwrap(), None);
        assert!(domain_select(&BTreeMap::new(), &m).is_err());
        assert!(domain_select(&probs(&[("Health", 0.7)]), &m).is_err());
    }

    #[test]
    fn default_mapping_targets_known_classes() {
        for class in default_domain_mapping().values() {
            assert!(DOMAIN_CLASSES.contains(&class.as_str()));
        }
    }

    #[test]
    fn translation_pair_format() {
        assert_eq!(
            format_translation_pair("hola", "hello").unwrap(),
            "hola<|translation|>hello"
        );
        assert!(format_translation_pair("", "x").is_err());
        assert!(format_translation_pair("x", "").is_err());
    }

    #[test]
    fn ndjson_roundtrip_and_validation() {
        let mut d = docs(&["uno", "dos"]);
        d[1].quality = Some(0.7);
        d[1].domain_probs = Some(probs(&[("Health", 0.25), ("Law_and_Government", 0.75)]));
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &d).unwrap();
        assert_eq!(read_ndjson(&buf[..]).unwrap(), d);

        let bad = br#"{"id":"x","text":"t","lang":"es","domain_probs":{"Health":0.3}}"#;
        assert!(read_ndjson(&bad[..]).is_err());
    }
}
