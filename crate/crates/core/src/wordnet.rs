//! Princeton WordNet flat-file reader and hypernym generalization.
//!
//! Only the noun database is used. Both `@` (hypernym) and `@i` (instance
//! hypernym) pointers are followed.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WordNetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynsetId {
    pub offset: u32,
    pub pos: char,
}

impl SynsetId {
    pub fn noun(offset: u32) -> Self {
        SynsetId { offset, pos: 'n' }
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}-{}", self.offset, self.pos)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: SynsetId,
    /// Lowercase, underscores for internal spaces, in stored order.
    pub lemmas: Vec<String>,
    pub hypernyms: Vec<SynsetId>,
}

#[derive(Debug, Clone, Default)]
pub struct WordNetDb {
    synsets: HashMap<SynsetId, Synset>,
    index: BTreeMap<String, Vec<SynsetId>>,
}

struct Fields<'a> {
    inner: std::str::SplitWhitespace<'a>,
    file: &'a Path,
    line: usize,
}

impl<'a> Fields<'a> {
    fn err(&self, message: impl Into<String>) -> WordNetError {
        WordNetError::Parse {
            file: self.file.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, WordNetError> {
        self.inner
            .next()
            .ok_or_else(|| self.err(format!("missing {what}")))
    }

    fn number(&mut self, what: &str, radix: u32) -> Result<u32, WordNetError> {
        let raw = self.next(what)?;
        u32::from_str_radix(raw, radix).map_err(|_| self.err(format!("bad {what} `{raw}`")))
    }
}

fn parse_data_line(line: &str, file: &Path, line_no: usize) -> Result<Synset, WordNetError> {
    let body = line.split_once(" | ").map_or(line, |(b, _)| b);
    let mut f = Fields {
        inner: body.split_whitespace(),
        file,
        line: line_no,
    };
    let offset = f.number("synset offset", 10)?;
    f.next("lex_filenum")?;
    let ss_type = f.next("ss_type")?;
    let pos = match ss_type {
        "n" => 'n',
        other => return Err(f.err(format!("expected noun synset, found ss_type `{other}`"))),
    };
    let w_cnt = f.number("w_cnt", 16)?;
    let mut lemmas = Vec::with_capacity(w_cnt as usize);
    for _ in 0..w_cnt {
        lemmas.push(f.next("word")?.to_lowercase());
        f.next("lex_id")?;
    }
    if lemmas.is_empty() {
        return Err(f.err("synset has no lemmas"));
    }
    let p_cnt = f.number("p_cnt", 10)?;
    let mut hypernyms = Vec::new();
    for _ in 0..p_cnt {
        let symbol = f.next("pointer symbol")?;
        let target = f.number("pointer offset", 10)?;
        let target_pos = f.next("pointer pos")?;
        f.next("pointer source/target")?;
        if (symbol == "@" || symbol == "@i") && target_pos == "n" {
            hypernyms.push(SynsetId::noun(target));
        }
    }
    Ok(Synset {
        id: SynsetId { offset, pos },
        lemmas,
        hypernyms,
    })
}

fn parse_index_line(
    line: &str,
    file: &Path,
    line_no: usize,
) -> Result<(String, Vec<SynsetId>), WordNetError> {
    let mut f = Fields {
        inner: line.split_whitespace(),
        file,
        line: line_no,
    };
    let lemma = f.next("lemma")?.to_lowercase();
    let pos = f.next("pos")?;
    if pos != "n" {
        return Err(f.err(format!("expected noun index entry, found pos `{pos}`")));
    }
    let synset_cnt = f.number("synset_cnt", 10)?;
    let p_cnt = f.number("p_cnt", 10)?;
    for _ in 0..p_cnt {
        f.next("pointer symbol")?;
    }
    f.number("sense_cnt", 10)?;
    f.number("tagsense_cnt", 10)?;
    let mut senses = Vec::with_capacity(synset_cnt as usize);
    for _ in 0..synset_cnt {
        senses.push(SynsetId::noun(f.number("synset offset", 10)?));
    }
    Ok((lemma, senses))
}

fn content_lines(path: &Path) -> Result<Vec<(usize, String)>, WordNetError> {
    let text = fs::read_to_string(path).map_err(|source| WordNetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    // The license preamble lines start with two spaces.
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with(' '))
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

/// Loads `data.noun` and `index.noun` from a WordNet `dict` directory.
pub fn load_wordnet(dir: &Path) -> Result<WordNetDb, WordNetError> {
    let data_path = dir.join("data.noun");
    let index_path = dir.join("index.noun");
    let mut synsets = HashMap::new();
    for (line_no, line) in content_lines(&data_path)? {
        let synset = parse_data_line(&line, &data_path, line_no)?;
        synsets.insert(synset.id, synset);
    }
    let mut index = BTreeMap::new();
    for (line_no, line) in content_lines(&index_path)? {
        let (lemma, senses) = parse_index_line(&line, &index_path, line_no)?;
        index.insert(lemma, senses);
    }
    WordNetDb::new(synsets.into_values(), index)
}

impl WordNetDb {
    /// Builds a database and validates references and acyclicity.
    pub fn new<I>(synsets: I, index: BTreeMap<String, Vec<SynsetId>>) -> Result<Self, WordNetError>
    where
        I: IntoIterator<Item = Synset>,
    {
        let db = WordNetDb {
            synsets: synsets.into_iter().map(|s| (s.id, s)).collect(),
            index,
        };
        db.validate()?;
        Ok(db)
    }

    fn validate(&self) -> Result<(), WordNetError> {
        let mut ids: Vec<&SynsetId> = self.synsets.keys().collect();
        ids.sort();
        for id in &ids {
            for h in &self.synsets[id].hypernyms {
                if !self.synsets.contains_key(h) {
                    return Err(WordNetError::Integrity(format!(
                        "synset {id} points to missing hypernym {h}"
                    )));
                }
            }
        }
        for (lemma, senses) in &self.index {
            if let Some(missing) = senses.iter().find(|s| !self.synsets.contains_key(s)) {
                return Err(WordNetError::Integrity(format!(
                    "index entry `{lemma}` points to missing synset {missing}"
                )));
            }
        }
        self.check_acyclic(&ids)
    }

    fn check_acyclic(&self, ids: &[&SynsetId]) -> Result<(), WordNetError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        let mut marks: HashMap<SynsetId, Mark> = HashMap::with_capacity(self.synsets.len());
        for &&root in ids {
            if marks.contains_key(&root) {
                continue;
            }
            // (node, next hypernym to visit)
            let mut stack: Vec<(SynsetId, usize)> = vec![(root, 0)];
            marks.insert(root, Mark::Active);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let hypernyms = &self.synsets[&node].hypernyms;
                if *next == hypernyms.len() {
                    marks.insert(node, Mark::Done);
                    stack.pop();
                    continue;
                }
                let child = hypernyms[*next];
                *next += 1;
                match marks.get(&child) {
                    Some(Mark::Done) => {}
                    Some(Mark::Active) => {
                        let start = stack.iter().position(|(n, _)| *n == child).unwrap_or(0);
                        let cycle: Vec<String> = stack[start..]
                            .iter()
                            .map(|(n, _)| self.describe(*n))
                            .chain(std::iter::once(self.describe(child)))
                            .collect();
                        return Err(WordNetError::Integrity(format!(
                            "hypernym cycle: {}",
                            cycle.join(" -> ")
                        )));
                    }
                    None => {
                        marks.insert(child, Mark::Active);
                        stack.push((child, 0));
                    }
                }
            }
        }
        Ok(())
    }

    fn describe(&self, id: SynsetId) -> String {
        match self.synsets.get(&id) {
            Some(s) => format!("{}({id})", s.lemmas[0]),
            None => id.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synset(&self, id: SynsetId) -> Option<&Synset> {
        self.synsets.get(&id)
    }

    /// Noun senses of `lemma` in sense order.
    pub fn senses(&self, lemma: &str) -> &[SynsetId] {
        self.index.get(lemma).map_or(&[], Vec::as_slice)
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn contains_lemma(&self, lemma: &str) -> bool {
        self.index.contains_key(lemma)
    }

    /// Senses of `word`, falling back to a distance-1 spelling correction
    /// against the lemma index.
    pub fn resolve(&self, word: &str) -> Vec<SynsetId> {
        let direct = self.senses(word);
        if !direct.is_empty() {
            return direct.to_vec();
        }
        match spell_correct(word, self.lemmas()) {
            Some(corrected) => {
                log::debug!("spell-corrected `{word}` to `{corrected}`");
                self.senses(&corrected).to_vec()
            }
            None => Vec::new(),
        }
    }

    /// Moves `level` hypernym steps up from `seeds`, breadth first. Paths
    /// that reach a root before `level` steps drop out, so the frontier is
    /// empty once every path has run past the top of the hierarchy.
    pub fn frontier_at_level(&self, seeds: &[SynsetId], level: usize) -> Vec<SynsetId> {
        let mut frontier = dedup(seeds.iter().copied());
        for _ in 0..level {
            frontier = dedup(
                frontier
                    .iter()
                    .flat_map(|id| self.synsets[id].hypernyms.iter().copied()),
            );
        }
        frontier
    }

    /// `frontier` and all of its ancestors, in breadth-first discovery order.
    pub fn upward_closure(&self, frontier: &[SynsetId]) -> Vec<SynsetId> {
        let mut seen: HashSet<SynsetId> = HashSet::new();
        let mut queue: VecDeque<SynsetId> = VecDeque::new();
        for id in frontier {
            if seen.insert(*id) {
                queue.push_back(*id);
            }
        }
        let mut order = Vec::new();
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for h in &self.synsets[&id].hypernyms {
                if seen.insert(*h) {
                    queue.push_back(*h);
                }
            }
        }
        order
    }

    /// Writes `data.noun` and `index.noun` into `dir`. Offsets are
    /// reassigned to byte positions in the new data file.
    pub fn write_flat(&self, dir: &Path) -> Result<(), WordNetError> {
        let io_err = |path: PathBuf| move |source| WordNetError::Io { path, source };
        let mut ordered: Vec<&Synset> = self.synsets.values().collect();
        ordered.sort_by_key(|s| s.id);

        // Offsets are fixed-width, so line lengths do not depend on them.
        let mut remap: HashMap<SynsetId, SynsetId> = HashMap::new();
        let mut position = 0u32;
        for synset in &ordered {
            remap.insert(synset.id, SynsetId::noun(position));
            position += data_line(synset, |id| id).len() as u32 + 1;
        }
        let data_path = dir.join("data.noun");
        let mut data = String::new();
        for synset in &ordered {
            data.push_str(&data_line(synset, |id| remap[&id]));
            data.push('\n');
        }
        fs::write(&data_path, data).map_err(io_err(data_path.clone()))?;

        let index_path = dir.join("index.noun");
        let mut file = fs::File::create(&index_path).map_err(io_err(index_path.clone()))?;
        for (lemma, senses) in &self.index {
            let offsets: Vec<String> = senses
                .iter()
                .map(|s| format!("{:08}", remap[s].offset))
                .collect();
            writeln!(
                file,
                "{lemma} n {n} 1 @ {n} 0 {}  ",
                offsets.join(" "),
                n = senses.len()
            )
            .map_err(io_err(index_path.clone()))?;
        }
        Ok(())
    }
}

fn data_line(synset: &Synset, map: impl Fn(SynsetId) -> SynsetId) -> String {
    let mut line = format!(
        "{:08} 00 n {:02x}",
        map(synset.id).offset,
        synset.lemmas.len()
    );
    for lemma in &synset.lemmas {
        line.push_str(&format!(" {lemma} 0"));
    }
    line.push_str(&format!(" {:03}", synset.hypernyms.len()));
    for h in &synset.hypernyms {
        line.push_str(&format!(" @ {:08} n 0000", map(*h).offset));
    }
    line.push_str(" | ");
    line
}

fn dedup(ids: impl Iterator<Item = SynsetId>) -> Vec<SynsetId> {
    let mut seen = HashSet::new();
    ids.filter(|id| seen.insert(*id)).collect()
}

/// True when `a` and `b` differ by exactly one insertion, deletion,
/// substitution or adjacent transposition.
fn within_one_edit(a: &[char], b: &[char]) -> bool {
    match a.len() as isize - b.len() as isize {
        0 => {
            let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
            match diffs.as_slice() {
                [_] => true,
                [i, j] => *j == i + 1 && a[*i] == b[*j] && a[*j] == b[*i],
                _ => false,
            }
        }
        1 => one_deletion(a, b),
        -1 => one_deletion(b, a),
        _ => false,
    }
}

// `longer` with one char removed equals `shorter`.
fn one_deletion(longer: &[char], shorter: &[char]) -> bool {
    let prefix = longer
        .iter()
        .zip(shorter)
        .take_while(|(x, y)| x == y)
        .count();
    longer[prefix + 1..] == shorter[prefix..]
}

/// The lexicographically smallest lemma at Damerau-Levenshtein distance 1
/// from `word`, if any.
pub fn spell_correct<'a, I>(word: &str, vocab: I) -> Option<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let target: Vec<char> = word.chars().collect();
    vocab
        .into_iter()
        .filter(|cand| {
            let cand: Vec<char> = cand.chars().collect();
            within_one_edit(&cand, &target)
        })
        .min()
        .map(str::to_string)
}

/// All vocabulary lemmas reachable from `word` at `level`, in breadth-first
/// discovery order. Includes `word` itself when its own synsets are part of
/// the search.
pub fn generalization_candidates(
    db: &WordNetDb,
    word: &str,
    level: usize,
    vocab: &HashSet<String>,
) -> Vec<String> {
    let frontier = db.frontier_at_level(&db.resolve(word), level);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for id in db.upward_closure(&frontier) {
        for lemma in &db.synsets[&id].lemmas {
            if vocab.contains(lemma) && seen.insert(lemma.as_str()) {
                out.push(lemma.clone());
            }
        }
    }
    out
}

/// Replaces `word` by the lowest hypernym lemma that occurs in `vocab`.
///
/// Starts from every noun sense of the word, ascends `level` steps, then
/// searches upward breadth first. Returns `None` when nothing in the
/// ancestry is in the vocabulary.
pub fn hypernym_generalize(
    db: &WordNetDb,
    word: &str,
    level: usize,
    vocab: &HashSet<String>,
) -> Option<String> {
    let frontier = db.frontier_at_level(&db.resolve(word), level);
    db.upward_closure(&frontier).into_iter().find_map(|id| {
        db.synsets[&id]
            .lemmas
            .iter()
            .find(|lemma| lemma.as_str() != word && vocab.contains(lemma.as_str()))
            .cloned()
    })
}
