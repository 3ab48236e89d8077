//! Sparse term-document matrix under TF, binary or TF-IDF weighting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::idf_ln;
use crate::text::{build_vocabulary, Document, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingScheme {
    #[default]
    Tf,
    Binary,
    Tfidf,
}

impl FromStr for WeightingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tf" => Ok(Self::Tf),
            "binary" => Ok(Self::Binary),
            "tfidf" | "tf-idf" => Ok(Self::Tfidf),
            other => Err(Error::InvalidArgument(format!("unknown weighting scheme `{other}`"))),
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tf => "tf",
            Self::Binary => "binary",
            Self::Tfidf => "tfidf",
        })
    }
}

/// `m x n` weights; only non-zero entries are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDocumentMatrix {
    vocab: Vocabulary,
    doc_ids: Vec<String>,
    #[serde(with = "entry_list")]
    entries: BTreeMap<(usize, usize), f64>,
    scheme: WeightingScheme,
}

impl TermDocumentMatrix {
    pub fn build<'a, I>(corpus: I, scheme: WeightingScheme) -> Self
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let docs: Vec<&Document> = corpus.into_iter().collect();
        let vocab = build_vocabulary(docs.iter().copied());
        let n = docs.len();

        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (j, doc) in docs.iter().enumerate() {
            for term in &doc.tokens {
                let i = vocab.term_id(term).expect("vocabulary built from corpus");
                *counts.entry((i, j)).or_default() += 1;
            }
        }
        let mut df = vec![0usize; vocab.len()];
        for &(i, _) in counts.keys() {
            df[i] += 1;
        }

        let entries = counts
            .into_iter()
            .filter_map(|((i, j), tf)| {
                let w = match scheme {
                    WeightingScheme::Tf => tf as f64,
                    WeightingScheme::Binary => 1.0,
                    WeightingScheme::Tfidf => tf as f64 * idf_ln(n, df[i]),
                };
                (w != 0.0).then_some(((i, j), w))
            })
            .collect();

        Self {
            vocab,
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            entries,
            scheme,
        }
    }

    pub fn scheme(&self) -> WeightingScheme {
        self.scheme
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// `(m, n)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.vocab.len(), self.doc_ids.len())
    }

    pub fn get(&self, term: &str, doc_id: &str) -> Result<f64> {
        let i = self.term_index(term)?;
        let j = self.doc_index(doc_id)?;
        Ok(self.entries.get(&(i, j)).copied().unwrap_or(0.0))
    }

    pub fn column(&self, doc_id: &str) -> Result<BTreeMap<String, f64>> {
        let j = self.doc_index(doc_id)?;
        Ok(self
            .entries
            .iter()
            .filter(|((_, col), _)| *col == j)
            .map(|(&(i, _), &w)| (self.vocab.terms()[i].clone(), w))
            .collect())
    }

    pub fn row(&self, term: &str) -> Result<BTreeMap<String, f64>> {
        let i = self.term_index(term)?;
        Ok(self
            .entries
            .range((i, 0)..(i + 1, 0))
            .map(|(&(_, j), &w)| (self.doc_ids[j].clone(), w))
            .collect())
    }

    /// Row-major dense copy, rows in vocabulary order and columns in corpus order.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let (m, n) = self.shape();
        let mut dense = vec![vec![0.0; n]; m];
        for (&(i, j), &w) in &self.entries {
            dense[i][j] = w;
        }
        dense
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Write `term \t doc_id \t weight` lines for every stored entry.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (&(i, j), w) in &self.entries {
            writeln!(out, "{}\t{}\t{}", self.vocab.terms()[i], self.doc_ids[j], w)?;
        }
        Ok(())
    }

    fn term_index(&self, term: &str) -> Result<usize> {
        self.vocab
            .term_id(term)
            .ok_or_else(|| Error::not_found("term", term))
    }

    fn doc_index(&self, doc_id: &str) -> Result<usize> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .ok_or_else(|| Error::not_found("document", doc_id))
    }
}

mod entry_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        entries: &BTreeMap<(usize, usize), f64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<(usize, usize, f64)> = entries.iter().map(|(&(i, j), &w)| (i, j, w)).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(usize, usize), f64>, D::Error> {
        let list = Vec::<(usize, usize, f64)>::deserialize(d)?;
        Ok(list.into_iter().map(|(i, j, w)| ((i, j), w)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::PipelineConfig;
    use proptest::prelude::*;

    fn fruit_corpus() -> Vec<Document> {
        let c = PipelineConfig::default();
        vec![
            Document::new("D1", "apple banana apple", &c),
            Document::new("D2", "banana orange", &c),
            Document::new("D3", "orange apple orange", &c),
        ]
    }

    #[test]
    fn fruit_tf_matrix() {
        let tdm = TermDocumentMatrix::build(&fruit_corpus(), WeightingScheme::Tf);
        assert_eq!(
            tdm.to_dense(),
            vec![vec![2.0, 0.0, 1.0], vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 2.0]]
        );
        assert_eq!(tdm.shape(), (3, 3));
    }

    #[test]
    fn fruit_binary_matrix() {
        let tdm = TermDocumentMatrix::build(&fruit_corpus(), WeightingScheme::Binary);
        assert_eq!(
            tdm.to_dense(),
            vec![vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]
        );
    }

    #[test]
    fn fruit_tfidf_entry() {
        let tdm = TermDocumentMatrix::build(&fruit_corpus(), WeightingScheme::Tfidf);
        let expected = 2.0 * (3.0f64 / 2.0).ln();
        assert!((tdm.get("apple", "D1").unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.8109).abs() < 1e-4);
    }

    #[test]
    fn rows_and_columns() {
        let tdm = TermDocumentMatrix::build(&fruit_corpus(), WeightingScheme::Tf);
        let col = tdm.column("D1").unwrap();
        assert_eq!(col.len(), 2);
        assert_eq!(col["apple"], 2.0);
        assert_eq!(col["banana"], 1.0);
        let row = tdm.row("orange").unwrap();
        assert_eq!(row.into_iter().collect::<Vec<_>>(), [("D2".into(), 1.0), ("D3".into(), 2.0)]);
        assert!(matches!(tdm.column("D9"), Err(Error::NotFound { .. })));
        assert!(matches!(tdm.row("kiwi"), Err(Error::NotFound { .. })));

        let c = PipelineConfig::default();
        let docs = [Document::new("a", "x", &c), Document::new("empty", "", &c)];
        let tdm = TermDocumentMatrix::build(&docs, WeightingScheme::Tfidf);
        assert!(tdm.column("empty").unwrap().is_empty());
    }

    #[test]
    fn dump_format() {
        let tdm = TermDocumentMatrix::build(&fruit_corpus(), WeightingScheme::Tf);
        let mut out = Vec::new();
        tdm.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("apple\tD1\t2"));
        assert_eq!(text.lines().count(), 6);
    }

    proptest! {
        #[test]
        fn tf_matches_brute_force(raw in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..20), 1..10)) {
            let docs: Vec<Document> = raw
                .iter()
                .enumerate()
                .map(|(i, toks)| Document {
                    doc_id: format!("d{i}"),
                    raw_text: String::new(),
                    tokens: toks.iter().map(|t| format!("w{t}")).collect(),
                })
                .collect();
            let tf = TermDocumentMatrix::build(&docs, WeightingScheme::Tf);
            let bin = TermDocumentMatrix::build(&docs, WeightingScheme::Binary);
            for doc in &docs {
                let col: f64 = tf.column(&doc.doc_id).unwrap().values().sum();
                prop_assert_eq!(col as usize, doc.len());
                for term in tf.vocab().terms() {
                    let count = doc.tokens.iter().filter(|t| *t == term).count() as f64;
                    prop_assert_eq!(tf.get(term, &doc.doc_id).unwrap(), count);
                    let expected_bin = if count > 0.0 { 1.0 } else { 0.0 };
                    prop_assert_eq!(bin.get(term, &doc.doc_id).unwrap(), expected_bin);
                }
            }
        }
    }
}
