//! Health-relevance filtering: multinomial Naive Bayes over unigram tokens
//! with add-one smoothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Health,
    Other,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Health, Label::Other];

    fn index(self) -> usize {
        match self {
            Label::Health => 0,
            Label::Other => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Health => "health",
            Label::Other => "other",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "health" | "1" | "true" | "yes" => Ok(Label::Health),
            "other" | "0" | "false" | "no" => Ok(Label::Other),
            _ => Err(Error::invalid(format!("unknown label {s:?}"))),
        }
    }
}

/// Trained classifier parameters. Index `0` is [`Label::Health`], `1` is [`Label::Other`].
///
/// Each class distributes its probability mass over the vocabulary plus one
/// unseen-token bucket, so `sum(exp(log_likelihoods[.][c])) + exp(log_unseen[c]) == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClassifierModel {
    pub vocabulary: Vec<String>,
    pub log_priors: [f64; 2],
    pub log_likelihoods: Vec<[f64; 2]>,
    pub log_unseen: [f64; 2],
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl TextClassifierModel {
    fn rebuild_index(&mut self) {
        self.index = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let mut m: TextClassifierModel = serde_json::from_str(src)?;
        if m.log_likelihoods.len() != m.vocabulary.len() {
            return Err(Error::invalid("model vocabulary and likelihood table differ in length"));
        }
        m.rebuild_index();
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn vocabulary_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Fits the model. Repeated identical (text, label) documents count once.
pub fn train<S: AsRef<str>>(corpus: &[(S, Label)]) -> Result<TextClassifierModel> {
    let docs: BTreeSet<(&str, Label)> = corpus.iter().map(|(t, l)| (t.as_ref(), *l)).collect();
    let mut doc_counts = [0usize; 2];
    let mut token_counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
    for (text, label) in &docs {
        let c = label.index();
        doc_counts[c] += 1;
        for tok in tokenize(text) {
            token_counts.entry(tok).or_default()[c] += 1;
        }
    }
    if doc_counts.iter().any(|&n| n == 0) {
        return Err(Error::invalid(
            "training corpus must contain both health and other documents",
        ));
    }
    let n_docs = (doc_counts[0] + doc_counts[1]) as f64;
    let vocab_size = token_counts.len() as f64;
    let mut totals = [0u64; 2];
    for counts in token_counts.values() {
        totals[0] += counts[0];
        totals[1] += counts[1];
    }
    let denom = [
        (totals[0] as f64 + vocab_size + 1.0).ln(),
        (totals[1] as f64 + vocab_size + 1.0).ln(),
    ];
    let log_likelihoods = token_counts
        .values()
        .map(|c| {
            [
                ((c[0] + 1) as f64).ln() - denom[0],
                ((c[1] + 1) as f64).ln() - denom[1],
            ]
        })
        .collect();
    let mut model = TextClassifierModel {
        vocabulary: token_counts.into_keys().collect(),
        log_priors: [
            (doc_counts[0] as f64 / n_docs).ln(),
            (doc_counts[1] as f64 / n_docs).ln(),
        ],
        log_likelihoods,
        log_unseen: [-denom[0], -denom[1]],
        index: BTreeMap::new(),
    };
    model.rebuild_index();
    Ok(model)
}

/// Returns the winning label and its posterior probability.
///
/// Tokens outside the vocabulary are ignored, so an empty or fully unseen
/// text falls back to the prior. Exact ties go to [`Label::Other`].
pub fn predict(model: &TextClassifierModel, text: &str) -> (Label, f64) {
    let post = posterior(model, text);
    if post[0] > post[1] {
        (Label::Health, post[0])
    } else {
        (Label::Other, post[1])
    }
}

/// Posterior probabilities `[health, other]`.
pub fn posterior(model: &TextClassifierModel, text: &str) -> [f64; 2] {
    // summed in vocabulary order so the result is bitwise independent of token order
    let mut seen: Vec<usize> = tokenize(text)
        .iter()
        .filter_map(|t| model.vocabulary_index(t))
        .collect();
    seen.sort_unstable();
    let mut score = model.log_priors;
    for i in seen {
        score[0] += model.log_likelihoods[i][0];
        score[1] += model.log_likelihoods[i][1];
    }
    let m = score[0].max(score[1]);
    let e = [(score[0] - m).exp(), (score[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class: BTreeMap<Label, ClassMetrics>,
    /// `confusion[actual][predicted]`
    pub confusion: [[usize; 2]; 2],
}

pub fn evaluate<S: AsRef<str>>(model: &TextClassifierModel, test: &[(S, Label)]) -> Result<Evaluation> {
    let predicted: Vec<Label> = test.iter().map(|(t, _)| predict(model, t.as_ref()).0).collect();
    let actual: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    score_predictions(&predicted, &actual)
}

/// Confusion-matrix metrics. Undefined precision or recall (no predictions
/// or no support for a class) is reported as 0.
pub fn score_predictions(predicted: &[Label], actual: &[Label]) -> Result<Evaluation> {
    if actual.is_empty() || predicted.len() != actual.len() {
        return Err(Error::invalid("evaluation needs equal-length, non-empty label lists"));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (p, a) in predicted.iter().zip(actual) {
        confusion[a.index()][p.index()] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class = Label::ALL
        .iter()
        .map(|&l| {
            let c = l.index();
            let predicted_c = confusion[0][c] + confusion[1][c];
            let support = confusion[c][0] + confusion[c][1];
            (
                l,
                ClassMetrics {
                    precision: ratio(confusion[c][c], predicted_c),
                    recall: ratio(confusion[c][c], support),
                    support,
                },
            )
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / actual.len() as f64,
        per_class,
        confusion,
    })
}

#[derive(Deserialize)]
struct CorpusRow {
    text: String,
    label: String,
}

/// Reads a `text,label` CSV.
pub fn parse_corpus<R: std::io::Read>(reader: R) -> Result<Vec<(String, Label)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CorpusRow>() {
        let row = row?;
        out.push((row.text, row.label.parse()?));
    }
    Ok(out)
}
