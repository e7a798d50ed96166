use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ReplacementError;
use crate::corpus::{Document, Label, LabeledCorpus};

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub label: Label,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

impl Template {
    pub fn new(label: Label, pattern: impl Into<String>) -> Self {
        Template {
            label,
            pattern: pattern.into(),
        }
    }

    /// Slot names in order of appearance. Both `<slot>` and `⟨slot⟩` mark a
    /// placeholder.
    pub fn slots(&self) -> Vec<String> {
        parse_pattern(&self.pattern)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect()
    }
}

fn parse_pattern(pattern: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find(['<', '⟨']) {
        let close_char = if rest[open..].starts_with('<') {
            '>'
        } else {
            '⟩'
        };
        let body_start = open + rest[open..].chars().next().unwrap().len_utf8();
        let Some(close) = rest[body_start..].find(close_char) else {
            break;
        };
        let name = &rest[body_start..body_start + close];
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            pieces.push(Piece::Text(rest[..body_start].to_string()));
            rest = &rest[body_start..];
            continue;
        }
        if open > 0 {
            pieces.push(Piece::Text(rest[..open].to_string()));
        }
        pieces.push(Piece::Slot(name.to_string()));
        rest = &rest[body_start + close + close_char.len_utf8()..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    pieces
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadlibsSpec {
    pub templates: Vec<Template>,
    pub dictionaries: BTreeMap<String, Vec<String>>,
    pub target_size: usize,
    pub seed: u64,
    /// Slot whose filler is recorded as each document's BSW.
    pub bsw_slot: String,
}

impl MadlibsSpec {
    /// Reads the sectioned text format:
    ///
    /// ```text
    /// [options]
    /// target_size = 1000
    /// seed = 7
    /// bsw_slot = identity
    /// [templates]
    /// Hateful<TAB>being <identity> is <adjectiveNegative>
    /// [dict:identity]
    /// lesbian
    /// ```
    ///
    /// Lines starting with `#` are comments.
    pub fn load(path: &Path) -> Result<Self, ReplacementError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReplacementError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ReplacementError> {
        enum Section {
            None,
            Options,
            Templates,
            Dict(String),
        }
        let mut spec = MadlibsSpec {
            templates: Vec::new(),
            dictionaries: BTreeMap::new(),
            target_size: 0,
            seed: 0,
            bsw_slot: "identity".to_string(),
        };
        let mut section = Section::None;
        for (i, raw) in text.lines().enumerate() {
            let err = |message: String| ReplacementError::Spec {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match header.trim() {
                    "options" => Section::Options,
                    "templates" => Section::Templates,
                    h => match h.strip_prefix("dict:") {
                        Some(slot) if !slot.trim().is_empty() => {
                            let slot = slot.trim().to_string();
                            spec.dictionaries.entry(slot.clone()).or_default();
                            Section::Dict(slot)
                        }
                        _ => return Err(err(format!("unknown section [{h}]"))),
                    },
                };
                continue;
            }
            match &section {
                Section::None => return Err(err("content before the first section".into())),
                Section::Options => {
                    let (key, value) = line
                        .split_once('=')
                        .map(|(k, v)| (k.trim(), v.trim()))
                        .ok_or_else(|| err("expected key = value".into()))?;
                    match key {
                        "target_size" => {
                            spec.target_size = value
                                .parse()
                                .map_err(|_| err(format!("bad target_size `{value}`")))?
                        }
                        "seed" => {
                            spec.seed = value
                                .parse()
                                .map_err(|_| err(format!("bad seed `{value}`")))?
                        }
                        "bsw_slot" => spec.bsw_slot = value.to_string(),
                        _ => return Err(err(format!("unknown option `{key}`"))),
                    }
                }
                Section::Templates => {
                    let (label, pattern) = raw
                        .trim_end_matches(['\r', '\n'])
                        .split_once('\t')
                        .ok_or_else(|| err("expected label<TAB>pattern".into()))?;
                    let label: Label = label.parse().map_err(|e| err(format!("{e}")))?;
                    spec.templates.push(Template::new(label, pattern.trim()));
                }
                Section::Dict(slot) => {
                    spec.dictionaries
                        .get_mut(slot)
                        .expect("created with section")
                        .push(line.to_string());
                }
            }
        }
        Ok(spec)
    }

    fn check_slots<'a, I>(&self, templates: I) -> Result<(), ReplacementError>
    where
        I: IntoIterator<Item = &'a Template>,
    {
        for t in templates {
            for slot in t.slots() {
                match self.dictionaries.get(&slot) {
                    None => {
                        return Err(ReplacementError::UnknownSlot {
                            template: t.pattern.clone(),
                            slot,
                        })
                    }
                    Some(words) if words.is_empty() => {
                        return Err(ReplacementError::EmptySlot(slot))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Generates `count` documents from `templates` (all of one label).
    ///
    /// The BSW slot cycles through its dictionary and templates advance
    /// once per full cycle, so every filler is used about equally often;
    /// other slots are filled at random.
    fn fill(
        &self,
        templates: &[&Template],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(String, Label, Option<String>)> {
        let bsw_fillers = self
            .dictionaries
            .get(&self.bsw_slot)
            .filter(|d| !d.is_empty());
        let cycle = bsw_fillers.map_or(1, Vec::len);
        (0..count)
            .map(|i| {
                let template = templates[(i / cycle) % templates.len()];
                let mut text = String::new();
                let mut bsw = None;
                for piece in parse_pattern(&template.pattern) {
                    match piece {
                        Piece::Text(t) => text.push_str(&t),
                        Piece::Slot(slot) if slot == self.bsw_slot => {
                            let filler = &bsw_fillers.expect("checked")[i % cycle];
                            text.push_str(filler);
                            bsw = Some(filler.clone());
                        }
                        Piece::Slot(slot) => {
                            let dict = &self.dictionaries[&slot];
                            text.push_str(&dict[rng.gen_range(0..dict.len())]);
                        }
                    }
                }
                (text, template.label, bsw)
            })
            .collect()
    }
}

fn to_documents(prefix: &str, rows: Vec<(String, Label, Option<String>)>) -> Vec<Document> {
    rows.into_iter()
        .enumerate()
        .map(|(i, (text, label, bsw))| {
            let doc = Document::new(format!("{prefix}:{i}"), text, Some(label));
            match bsw {
                Some(b) => doc.with_bsw(b),
                None => doc,
            }
        })
        .collect()
}

/// Label-balanced evaluation corpus of `target_size` documents; an odd
/// target gives the extra document to Neutral.
pub fn generate_madlibs(spec: &MadlibsSpec) -> Result<LabeledCorpus, ReplacementError> {
    spec.check_slots(&spec.templates)?;
    let of_label = |label: Label| -> Vec<&Template> {
        spec.templates.iter().filter(|t| t.label == label).collect()
    };
    let hateful = of_label(Label::Hateful);
    let neutral = of_label(Label::Neutral);
    if spec.target_size > 0 {
        if hateful.is_empty() {
            return Err(ReplacementError::MissingLabel(Label::Hateful));
        }
        if neutral.is_empty() {
            return Err(ReplacementError::MissingLabel(Label::Neutral));
        }
    }
    let n_hateful = spec.target_size / 2;
    let n_neutral = spec.target_size - n_hateful;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.target_size);
    if n_hateful > 0 {
        rows.extend(spec.fill(&hateful, n_hateful, &mut rng));
    }
    if n_neutral > 0 {
        rows.extend(spec.fill(&neutral, n_neutral, &mut rng));
    }
    rows.shuffle(&mut rng);
    Ok(LabeledCorpus::new(
        "madlibs",
        to_documents("madlibs", rows),
    )?)
}

/// Appends `spec.target_size` template-generated Neutral documents to
/// `corpus`.
pub fn augment_with_templates(
    corpus: &LabeledCorpus,
    spec: &MadlibsSpec,
) -> Result<LabeledCorpus, ReplacementError> {
    if let Some(t) = spec.templates.iter().find(|t| t.label != Label::Neutral) {
        return Err(ReplacementError::NonNeutralTemplate(t.pattern.clone()));
    }
    spec.check_slots(&spec.templates)?;
    let templates: Vec<&Template> = spec.templates.iter().collect();
    if spec.target_size > 0 && templates.is_empty() {
        return Err(ReplacementError::MissingLabel(Label::Neutral));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows = if spec.target_size > 0 {
        spec.fill(&templates, spec.target_size, &mut rng)
    } else {
        Vec::new()
    };
    let mut documents = corpus.documents().to_vec();
    documents.extend(to_documents(&format!("{}+augment", corpus.name), rows));
    Ok(LabeledCorpus::new(corpus.name.clone(), documents)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn spec(target: usize) -> MadlibsSpec {
        MadlibsSpec {
            templates: vec![
                Template::new(Label::Hateful, "being ⟨identity⟩ is ⟨adjectiveNegative⟩"),
                Template::new(Label::Neutral, "being <identity> is <adjectivePositive>"),
            ],
            dictionaries: dict(&[
                ("identity", &["lesbian"]),
                ("adjectiveNegative", &["disgusting"]),
                ("adjectivePositive", &["wonderful"]),
            ]),
            target_size: target,
            seed: 4,
            bsw_slot: "identity".into(),
        }
    }

    #[test]
    fn pattern_pieces() {
        assert_eq!(
            parse_pattern("a <x> b ⟨y⟩"),
            vec![
                Piece::Text("a ".into()),
                Piece::Slot("x".into()),
                Piece::Text(" b ".into()),
                Piece::Slot("y".into())
            ]
        );
        assert_eq!(
            parse_pattern("1 < 2 and <bad"),
            vec![Piece::Text("1 < 2 and <bad".into())]
        );
        assert_eq!(
            parse_pattern("<a b> <c>"),
            vec![
                Piece::Text("<".into()),
                Piece::Text("a b> ".into()),
                Piece::Slot("c".into())
            ]
        );
    }

    #[test]
    fn balanced_and_filled() {
        let c = generate_madlibs(&spec(100)).unwrap();
        assert_eq!(c.count_label(Label::Hateful), 50);
        assert_eq!(c.count_label(Label::Neutral), 50);
        let hateful = c
            .documents()
            .iter()
            .find(|d| d.label() == Label::Hateful)
            .unwrap();
        assert_eq!(hateful.raw_text, "being lesbian is disgusting");
        assert_eq!(hateful.bsw.as_deref(), Some("lesbian"));
        assert!(generate_madlibs(&spec(0)).unwrap().is_empty());
        assert_eq!(generate_madlibs(&spec(100)).unwrap(), c);
    }

    #[test]
    fn unknown_slot_is_named() {
        let mut s = spec(10);
        s.templates
            .push(Template::new(Label::Neutral, "<nope> here"));
        match generate_madlibs(&s) {
            Err(ReplacementError::UnknownSlot { slot, .. }) => assert_eq!(slot, "nope"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn augmentation_appends_exact_count() {
        let base = LabeledCorpus::new("base", vec![Document::new("0", "hi", Some(Label::Hateful))])
            .unwrap();
        let aug = MadlibsSpec {
            templates: vec![Template::new(Label::Neutral, "i am <identity>")],
            dictionaries: dict(&[("identity", &["gay", "muslim"])]),
            target_size: 2,
            seed: 1,
            bsw_slot: "identity".into(),
        };
        let out = augment_with_templates(&base, &aug).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.count_label(Label::Neutral), 2);
        assert!(augment_with_templates(&base, &spec(2)).is_err());
    }

    #[test]
    fn spec_file_parses() {
        let text = "# comment\n[options]\ntarget_size = 12\nseed = 3\n\n[templates]\nHateful\tbeing <identity> is <neg>\nNeutral\tbeing <identity> is <pos>\n[dict:identity]\ngay\nstraight\n[dict:neg]\nawful\n[dict:pos]\nfine\n";
        let s = MadlibsSpec::parse(text, Path::new("m.txt")).unwrap();
        assert_eq!(s.target_size, 12);
        assert_eq!(s.seed, 3);
        assert_eq!(s.templates.len(), 2);
        assert_eq!(s.dictionaries["identity"], vec!["gay", "straight"]);
        let err = MadlibsSpec::parse("[templates]\nno tab here\n", Path::new("m.txt")).unwrap_err();
        assert!(matches!(err, ReplacementError::Spec { line: 2, .. }));
    }
}
