//! `probe`: single-word scores from a backend, appended to a JSONL partial
//! file as they arrive so an interrupted run resumes where it stopped.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use bsw_core::classifier::{probe_words, ClassifierBackend};
use bsw_core::detection::{rank_spcpd, spcpd_probe_set, BswCandidate};
use serde::{Deserialize, Serialize};

use crate::commands::{detection_config, read_corpus, saved_backend};
use crate::config::PipelineConfig;
use crate::output::OutputDir;
use crate::CliError;

pub const PARTIAL_FILE: &str = "probe.partial.jsonl";
pub const RESULT_FILE: &str = "probe.json";

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Header {
    config_hash: String,
    backend: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProbeLine {
    pub word: String,
    pub p_hateful: f64,
}

#[derive(Serialize)]
struct ProbeResult<'a> {
    config_hash: &'a str,
    backend: &'a str,
    probed: usize,
    resumed: usize,
    probes: &'a BTreeMap<String, f64>,
    ranked: Vec<BswCandidate>,
}

/// One word per line, `#` comments skipped, order kept.
pub fn read_wordlist(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

fn backend_identity(config: &PipelineConfig) -> String {
    match (&config.endpoint, &config.model) {
        (Some(e), _) => format!("endpoint:{e}"),
        (None, Some(m)) => format!("model:{}", m.display()),
        (None, None) => "none".into(),
    }
}

/// Completed probes from an earlier run. A torn last line (the process died
/// mid-write) is cut off so appending continues on a clean line.
fn load_partial(path: &Path, header: &Header) -> Result<Option<BTreeMap<String, f64>>, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(CliError::data(&path.display().to_string(), e)),
    };
    let mut done = BTreeMap::new();
    let mut valid_len = 0usize;
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(first) if first.ends_with('\n') => {
            let found: Header = serde_json::from_str(first.trim())
                .map_err(|e| CliError::Data(format!("{}: bad header: {e}", path.display())))?;
            if found.backend != header.backend {
                return Err(CliError::Config(format!(
                    "{} was written for {}, not {}; remove it or choose another --out",
                    path.display(),
                    found.backend,
                    header.backend
                )));
            }
            if found.config_hash != header.config_hash {
                log::warn!(
                    "resuming partial probes written under config {}",
                    found.config_hash
                );
            }
            valid_len += first.len();
        }
        _ => return Ok(None),
    }
    for line in lines {
        if !line.ends_with('\n') {
            log::warn!("dropping incomplete last line of {}", path.display());
            break;
        }
        let entry: ProbeLine = serde_json::from_str(line.trim())
            .map_err(|e| CliError::Data(format!("{}: bad probe line: {e}", path.display())))?;
        if done.insert(entry.word.clone(), entry.p_hateful).is_some() {
            log::warn!(
                "`{}` appears twice in {}; keeping the later score",
                entry.word,
                path.display()
            );
        }
        valid_len += line.len();
    }
    if valid_len < text.len() {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::data(&path.display().to_string(), e))?;
        file.set_len(valid_len as u64)
            .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    }
    Ok(Some(done))
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    if config.endpoint.is_none() && config.model.is_none() {
        return Err(CliError::Config("probe needs `endpoint` or `model`".into()));
    }
    if config.wordlist.is_none() && config.corpus.is_none() {
        return Err(CliError::Config(
            "probe needs `wordlist` or `corpus`".into(),
        ));
    }
    for (key, path) in [
        ("wordlist", &config.wordlist),
        ("corpus", &config.corpus),
        ("model", &config.model),
        ("abusive", &config.abusive),
    ] {
        if let Some(p) = path.as_deref().filter(|p| !p.exists()) {
            return Err(CliError::Config(format!(
                "{key}: {} does not exist",
                p.display()
            )));
        }
    }
    let hash = config.hash();
    let det = detection_config(config)?;
    let words = match &config.wordlist {
        Some(p) => read_wordlist(p)?,
        None => read_corpus(config)?.vocabulary().into_iter().collect(),
    };
    let probe_set = spcpd_probe_set(&words, &det);
    let backend: ClassifierBackend = saved_backend(config)?;

    let mut out = OutputDir::create(&config.out, "probe", &hash)?;
    let partial_path = out.file(PARTIAL_FILE)?;
    let header = Header {
        config_hash: hash.clone(),
        backend: backend_identity(config),
    };
    let mut done = match load_partial(&partial_path, &header)? {
        Some(done) => done,
        None => {
            let line = serde_json::to_string(&header).expect("header serializes");
            std::fs::write(&partial_path, line + "\n")
                .map_err(|e| CliError::data(&partial_path.display().to_string(), e))?;
            BTreeMap::new()
        }
    };
    let wanted: HashSet<&str> = probe_set.iter().map(String::as_str).collect();
    done.retain(|w, _| wanted.contains(w.as_str()));
    let resumed = done.len();
    let remaining: Vec<String> = probe_set
        .iter()
        .filter(|w| !done.contains_key(*w))
        .cloned()
        .collect();
    if resumed > 0 {
        log::info!(
            "resuming: {resumed} words already probed, {} to go",
            remaining.len()
        );
    }

    let mut file = OpenOptions::new()
        .append(true)
        .open(&partial_path)
        .map_err(|e| CliError::data(&partial_path.display().to_string(), e))?;
    let mut write_error: Option<std::io::Error> = None;
    let result = probe_words(&backend, &remaining, config.concurrency, |word, p| {
        if write_error.is_some() {
            return;
        }
        let line = serde_json::to_string(&ProbeLine {
            word: word.to_string(),
            p_hateful: p,
        })
        .expect("probe line serializes");
        if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
            write_error = Some(e);
        }
    });
    if let Some(e) = write_error {
        return Err(CliError::data(&partial_path.display().to_string(), e));
    }
    let fresh = match result {
        Ok(fresh) => fresh,
        Err(e) => {
            eprintln!(
                "probing stopped after {} of {} words; rerun the same command to resume from {}",
                resumed + e.completed.len(),
                probe_set.len(),
                partial_path.display()
            );
            return Err(e.into());
        }
    };
    done.extend(fresh);

    let ranked = rank_spcpd(done.iter().map(|(w, p)| (w.as_str(), *p)), &det);
    out.write_json(
        RESULT_FILE,
        &ProbeResult {
            config_hash: &hash,
            backend: &header.backend,
            probed: done.len(),
            resumed,
            probes: &done,
            ranked,
        },
    )?;
    out.finish()?;
    println!("{} words probed ({resumed} from earlier runs)", done.len());
    Ok(())
}
