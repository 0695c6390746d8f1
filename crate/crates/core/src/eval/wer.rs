//! Token edit distance, error rates and hypothesis selection across systems.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Alignment counts between a reference and a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
    pub total: usize,
}

/// Unit-cost Levenshtein alignment of `hyp` against `reference`.
///
/// Among the minimal-total alignments the one with the most substitutions is
/// reported, which fixes `dels` and `ins` as well (`dels − ins` always equals
/// the length difference). Swapping the arguments therefore swaps `dels` and
/// `ins` and keeps everything else.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    // Cell value: (total edits, −substitutions), minimized lexicographically.
    let cols = hyp.len() + 1;
    let mut prev: Vec<(usize, isize)> = (0..cols).map(|j| (j, 0)).collect();
    let mut cur = vec![(0usize, 0isize); cols];
    for i in 1..=reference.len() {
        cur[0] = (i, 0);
        for j in 1..cols {
            let (dt, ds) = prev[j - 1];
            let diag = if reference[i - 1] == hyp[j - 1] {
                (dt, ds)
            } else {
                (dt + 1, ds - 1)
            };
            let del = (prev[j].0 + 1, prev[j].1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1);
            cur[j] = diag.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (total, neg_subs) = prev[cols - 1];
    let subs = (-neg_subs) as usize;
    let rest = total - subs;
    // dels + ins = rest, dels − ins = |ref| − |hyp|.
    let diff = reference.len() as isize - hyp.len() as isize;
    let dels = ((rest as isize + diff) / 2) as usize;
    let ins = rest - dels;
    EditCounts {
        subs,
        dels,
        ins,
        total,
    }
}

/// Scoring unit: whitespace-separated words, or non-space characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Unit {
    #[default]
    Word,
    Char,
}

impl Unit {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Unit::Word => text
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
            Unit::Char => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub utt_id: String,
    pub tokens: Vec<String>,
    /// Per-token confidence in `[0, 1]`, same length as `tokens`.
    pub confidences: Option<Vec<f64>>,
}

impl Hypothesis {
    pub fn new(utt_id: impl Into<String>, tokens: Vec<String>, confidences: Option<Vec<f64>>) -> Result<Self> {
        let utt_id = utt_id.into();
        if let Some(c) = &confidences {
            if c.len() != tokens.len() {
                return Err(Error::InvalidArgument(format!(
                    "utterance {utt_id:?}: {} confidences for {} tokens",
                    c.len(),
                    tokens.len()
                )));
            }
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!(
                    "utterance {utt_id:?}: confidence outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            utt_id,
            tokens,
            confidences,
        })
    }

    /// Mean token confidence; 0 for an empty hypothesis.
    pub fn mean_confidence(&self) -> Option<f64> {
        let c = self.confidences.as_ref()?;
        if c.is_empty() {
            return Some(0.0);
        }
        Some(c.iter().sum::<f64>() / c.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub system_name: String,
    pub items: BTreeMap<String, Hypothesis>,
}

impl HypothesisSet {
    pub fn new(system_name: impl Into<String>) -> Self {
        Self {
            system_name: system_name.into(),
            items: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, hyp: Hypothesis) -> Result<()> {
        if self.items.contains_key(&hyp.utt_id) {
            return Err(Error::InvalidArgument(format!(
                "duplicate utterance {:?} in {}",
                hyp.utt_id, self.system_name
            )));
        }
        self.items.insert(hyp.utt_id.clone(), hyp);
        Ok(())
    }

    /// Builds a set from `(utt_id, text)` pairs without confidences.
    pub fn from_texts<'a>(
        system_name: &str,
        unit: Unit,
        texts: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut set = Self::new(system_name);
        for (id, text) in texts {
            set.insert(Hypothesis::new(id, unit.tokenize(text), None)?)?;
        }
        Ok(set)
    }

    /// Parses `utt_id<TAB>tokens[<TAB>c1 c2 ...]` lines. In character mode a
    /// word's confidence is repeated for each of its characters.
    pub fn parse(system_name: &str, text: &str, unit: Unit) -> Result<Self> {
        let mut set = Self::new(system_name);
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default();
            let body = fields.next().ok_or_else(|| {
                Error::Parse(format!("{system_name}: line {}: missing <TAB>", n + 1))
            })?;
            let conf_field = fields.next();
            if fields.next().is_some() {
                return Err(Error::Parse(format!("{system_name}: line {}: too many fields", n + 1)));
            }
            let words = Unit::Word.tokenize(body);
            let confidences = conf_field
                .map(|c| {
                    c.split(' ')
                        .filter(|t| !t.is_empty())
                        .map(|t| {
                            t.parse::<f64>().map_err(|_| {
                                Error::Parse(format!("{system_name}: line {}: bad confidence {t:?}", n + 1))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .transpose()?;
            if let Some(c) = &confidences {
                if c.len() != words.len() {
                    return Err(Error::Parse(format!(
                        "{system_name}: line {}: {} confidences for {} words",
                        n + 1,
                        c.len(),
                        words.len()
                    )));
                }
            }
            let (tokens, confidences) = match unit {
                Unit::Word => (words, confidences),
                Unit::Char => {
                    let mut tokens = Vec::new();
                    let mut conf = Vec::new();
                    for (i, w) in words.iter().enumerate() {
                        for ch in Unit::Char.tokenize(w) {
                            tokens.push(ch);
                            if let Some(c) = &confidences {
                                conf.push(c[i]);
                            }
                        }
                    }
                    (tokens, confidences.map(|_| conf))
                }
            };
            let hyp = Hypothesis::new(id, tokens, confidences)
                .map_err(|e| Error::Parse(format!("{system_name}: line {}: {e}", n + 1)))?;
            set.insert(hyp)
                .map_err(|e| Error::Parse(format!("{system_name}: line {}: {e}", n + 1)))?;
        }
        Ok(set)
    }

    pub fn read(path: impl AsRef<Path>, unit: Unit) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::parse(&name, &std::fs::read_to_string(path)?, unit)
    }
}

/// Reference transcripts keyed by utterance id.
pub type References = BTreeMap<String, Vec<String>>;

/// Parses `utt_id<TAB>tokens` lines.
pub fn parse_references(text: &str, unit: Unit) -> Result<References> {
    let mut refs = References::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("references: line {}: missing <TAB>", n + 1)))?;
        if body.contains('\t') {
            return Err(Error::Parse(format!("references: line {}: too many fields", n + 1)));
        }
        if refs.insert(id.to_string(), unit.tokenize(body)).is_some() {
            return Err(Error::Parse(format!("references: duplicate utterance {id:?}")));
        }
    }
    Ok(refs)
}

pub fn read_references(path: impl AsRef<Path>, unit: Unit) -> Result<References> {
    parse_references(&std::fs::read_to_string(path)?, unit)
}

/// Corpus error rate: summed edits over summed reference lengths.
/// Utterances without a hypothesis count as empty hypotheses.
pub fn error_rate(refs: &References, hyps: &HypothesisSet) -> Result<f64> {
    if let Some(id) = hyps.items.keys().find(|id| !refs.contains_key(*id)) {
        return Err(Error::MissingReference(id.clone()));
    }
    let ref_len: usize = refs.values().map(Vec::len).sum();
    if ref_len == 0 {
        return Err(Error::InvalidArgument("total reference length is zero".into()));
    }
    let edits: usize = refs
        .iter()
        .map(|(id, r)| {
            let hyp = hyps.items.get(id).map_or(&[][..], |h| &h.tokens[..]);
            edit_distance(r, hyp).total
        })
        .sum();
    Ok(edits as f64 / ref_len as f64)
}

/// Chosen system per utterance.
pub type Selection = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub selection: Selection,
    pub wer: f64,
}

fn require_coverage<'a>(
    sets: &'a [HypothesisSet],
    ids: impl Iterator<Item = &'a String> + Clone,
) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no hypothesis sets".into()));
    }
    for set in sets {
        if let Some(id) = ids.clone().find(|id| !set.items.contains_key(*id)) {
            return Err(Error::Coverage {
                system: set.system_name.clone(),
                utt_id: id.clone(),
            });
        }
    }
    Ok(())
}

/// Per utterance, the hypothesis with the fewest edits (first system wins
/// ties). Greedy selection is globally optimal since the corpus rate is a
/// sum over utterances with a fixed denominator.
pub fn oracle_select(sets: &[HypothesisSet], refs: &References) -> Result<OracleResult> {
    require_coverage(sets, refs.keys())?;
    let mut selection = Selection::new();
    for (id, r) in refs {
        let best = sets
            .iter()
            .min_by_key(|s| edit_distance(r, &s.items[id].tokens).total)
            .expect("non-empty");
        selection.insert(id.clone(), best.system_name.clone());
    }
    let wer = selection_error_rate(sets, &selection, refs)?;
    Ok(OracleResult { selection, wer })
}

/// Per utterance, the system with the highest mean token confidence (first
/// system wins ties). Utterances are those of the first set.
pub fn confidence_select(sets: &[HypothesisSet]) -> Result<Selection> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidArgument("no hypothesis sets".into()))?;
    require_coverage(sets, first.items.keys())?;
    let mut selection = Selection::new();
    for id in first.items.keys() {
        let mut best: Option<(&HypothesisSet, f64)> = None;
        for set in sets {
            let conf = set.items[id].mean_confidence().ok_or_else(|| Error::MissingConfidences {
                system: set.system_name.clone(),
                utt_id: id.clone(),
            })?;
            if best.is_none_or(|(_, c)| conf > c) {
                best = Some((set, conf));
            }
        }
        selection.insert(id.clone(), best.unwrap().0.system_name.clone());
    }
    Ok(selection)
}

/// Assembles the hypotheses named by `selection` into one set.
pub fn apply_selection(sets: &[HypothesisSet], selection: &Selection) -> Result<HypothesisSet> {
    let mut out = HypothesisSet::new("selection");
    for (id, system) in selection {
        let set = sets
            .iter()
            .find(|s| &s.system_name == system)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown system {system:?}")))?;
        let hyp = set.items.get(id).ok_or_else(|| Error::Coverage {
            system: system.clone(),
            utt_id: id.clone(),
        })?;
        out.insert(hyp.clone())?;
    }
    Ok(out)
}

pub fn selection_error_rate(
    sets: &[HypothesisSet],
    selection: &Selection,
    refs: &References,
) -> Result<f64> {
    error_rate(refs, &apply_selection(sets, selection)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        Unit::Word.tokenize(s)
    }

    fn refs(pairs: &[(&str, &str)]) -> References {
        pairs.iter().map(|(id, t)| (id.to_string(), toks(t))).collect()
    }

    fn set(name: &str, pairs: &[(&str, &str)]) -> HypothesisSet {
        HypothesisSet::from_texts(name, Unit::Word, pairs.iter().copied()).unwrap()
    }

    fn confident(name: &str, items: &[(&str, &str, &[f64])]) -> HypothesisSet {
        let mut s = HypothesisSet::new(name);
        for (id, text, c) in items {
            s.insert(Hypothesis::new(*id, toks(text), Some(c.to_vec())).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn edit_distance_examples() {
        let e = edit_distance(&toks("a b c"), &toks("a x c"));
        assert_eq!(e, EditCounts { subs: 1, dels: 0, ins: 0, total: 1 });

        let e = edit_distance(&toks(""), &toks("a b"));
        assert_eq!(e, EditCounts { subs: 0, dels: 0, ins: 2, total: 2 });

        let e = edit_distance(&toks("k i t t e n"), &toks("s i t t i n g"));
        assert_eq!(e.total, 3);
        assert_eq!((e.subs, e.dels, e.ins), (2, 0, 1));
    }

    #[test]
    fn error_rate_examples() {
        let r = refs(&[("u1", "a b c"), ("u2", "d e")]);
        assert_eq!(error_rate(&r, &set("s", &[("u1", "a b c"), ("u2", "d e")])).unwrap(), 0.0);
        assert_eq!(error_rate(&r, &set("s", &[("u1", "a x c"), ("u2", "d e")])).unwrap(), 0.2);
        assert_eq!(error_rate(&r, &set("s", &[("u1", ""), ("u2", "")])).unwrap(), 1.0);
        assert_eq!(error_rate(&r, &set("s", &[("u1", "a b c x y z w")])).unwrap(), 6.0 / 5.0);
    }

    #[test]
    fn error_rate_errors() {
        let r = refs(&[("u1", "a")]);
        assert!(matches!(
            error_rate(&r, &set("s", &[("u9", "a")])),
            Err(Error::MissingReference(_))
        ));
        assert!(error_rate(&refs(&[("u1", "")]), &set("s", &[("u1", "")])).is_err());
    }

    #[test]
    fn oracle_picks_per_utterance_best() {
        let r = refs(&[("u1", "a b"), ("u2", "c d")]);
        let s1 = set("one", &[("u1", "a b"), ("u2", "x")]);
        let s2 = set("two", &[("u1", "y"), ("u2", "c d")]);
        let o = oracle_select(&[s1.clone(), s2.clone()], &r).unwrap();
        assert_eq!(o.wer, 0.0);
        assert_eq!(o.selection["u1"], "one");
        assert_eq!(o.selection["u2"], "two");

        let o = oracle_select(&[s1.clone(), s1.clone()], &r).unwrap();
        assert_eq!(o.wer, error_rate(&r, &s1).unwrap());

        let partial = set("p", &[("u1", "a b")]);
        assert!(matches!(oracle_select(&[s1, partial], &r), Err(Error::Coverage { .. })));
    }

    #[test]
    fn confidence_selection() {
        let a = confident("a", &[("u", "x y", &[0.9, 0.9])]);
        let b = confident("b", &[("u", "x z", &[0.5, 0.5])]);
        assert_eq!(confidence_select(&[a.clone(), b.clone()]).unwrap()["u"], "a");
        assert_eq!(confidence_select(&[b.clone()]).unwrap()["u"], "b");
        // tie goes to the first system
        let c = confident("c", &[("u", "q", &[0.9])]);
        assert_eq!(confidence_select(&[c, a]).unwrap()["u"], "c");
        // empty hypothesis counts as zero confidence
        let e = confident("e", &[("u", "", &[])]);
        assert_eq!(confidence_select(&[e, b]).unwrap()["u"], "b");

        let plain = set("plain", &[("u", "x")]);
        assert!(matches!(
            confidence_select(&[plain]),
            Err(Error::MissingConfidences { .. })
        ));
    }

    #[test]
    fn confident_but_wrong_system_loses_to_oracle() {
        let r = refs(&[("u1", "the cat sat"), ("u2", "on the mat")]);
        let loud = confident(
            "loud",
            &[("u1", "a bat sat", &[0.99, 0.99, 0.99]), ("u2", "on the mat", &[0.9, 0.9, 0.9])],
        );
        let quiet = confident(
            "quiet",
            &[("u1", "the cat sat", &[0.4, 0.4, 0.4]), ("u2", "on a hat", &[0.3, 0.3, 0.3])],
        );
        let sets = [loud, quiet];
        let sbf = selection_error_rate(&sets, &confidence_select(&sets).unwrap(), &r).unwrap();
        let oracle = oracle_select(&sets, &r).unwrap().wer;
        assert_eq!(oracle, 0.0);
        assert!(sbf > oracle);
    }

    #[test]
    fn parse_files() {
        let r = parse_references("u1\tthe cat\nu2\tsat\n\n", Unit::Word).unwrap();
        assert_eq!(r["u1"], vec!["the", "cat"]);
        let h = HypothesisSet::parse("sys", "u1\tthe hat\t0.9 0.4\nu2\t\n", Unit::Word).unwrap();
        assert_eq!(h.items["u1"].confidences, Some(vec![0.9, 0.4]));
        assert!(h.items["u2"].tokens.is_empty());

        let c = HypothesisSet::parse("sys", "u1\tab c\t0.5 1\n", Unit::Char).unwrap();
        assert_eq!(c.items["u1"].tokens, vec!["a", "b", "c"]);
        assert_eq!(c.items["u1"].confidences, Some(vec![0.5, 0.5, 1.0]));

        assert!(HypothesisSet::parse("s", "u1 no tab\n", Unit::Word).is_err());
        assert!(HypothesisSet::parse("s", "u1\ta b\t0.5\n", Unit::Word).is_err());
        assert!(HypothesisSet::parse("s", "u1\ta\t1.5\n", Unit::Word).is_err());
        assert!(HypothesisSet::parse("s", "u1\ta\nu1\tb\n", Unit::Word).is_err());
        assert!(parse_references("u1\ta\nu1\tb\n", Unit::Word).is_err());
    }

    #[test]
    fn char_unit_drops_spaces() {
        assert_eq!(Unit::Char.tokenize("ab c"), vec!["a", "b", "c"]);
        assert_eq!(Unit::Word.tokenize("Ab, c"), vec!["Ab,", "c"]);
    }
}
