//! Fixtures shared by the CLI tests: a synthetic corpus with planted
//! bias, file writers, a tiny HTTP scoring server and a binary runner.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Output;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DIM: usize = 50;
// GloVe-like vector norms
const SCALE: f64 = 5.0;

fn random_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..DIM).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| SCALE * x / n).collect()
}

fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

pub struct World {
    pub entries: Vec<(String, Vec<f64>)>,
    pub docs: Vec<(Vec<String>, bool)>,
    pub planted: Vec<String>,
    pub abusive: Vec<String>,
}

/// 2000 documents, 600 hateful. Hateful documents mostly draw words from a
/// hateful pool, neutral ones from a calm pool; the five `identN` tokens are
/// neutral in embedding space but sit in 60 hateful and 5 neutral documents
/// each. Twenty-five `kinN` words share the identity direction without
/// appearing in the corpus, so centroids have neighbours to average.
pub fn planted_world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hate = random_vector(&mut rng);
    let calm = random_vector(&mut rng);
    let group = random_vector(&mut rng);
    let hateful: Vec<String> = (0..40).map(|i| format!("hate{i}")).collect();
    let neutral: Vec<String> = (0..40).map(|i| format!("calm{i}")).collect();
    let filler: Vec<String> = (0..60).map(|i| format!("fill{i}")).collect();
    let planted: Vec<String> = (0..5).map(|i| format!("ident{i}")).collect();

    let mut entries = Vec::new();
    for w in &hateful {
        let r = random_vector(&mut rng);
        entries.push((w.clone(), mix(&hate, 0.8, &r, 0.6)));
    }
    for w in &neutral {
        let r = random_vector(&mut rng);
        entries.push((w.clone(), mix(&calm, 0.8, &r, 0.6)));
    }
    for w in &filler {
        entries.push((w.clone(), random_vector(&mut rng)));
    }
    for w in &planted {
        let r = random_vector(&mut rng);
        entries.push((w.clone(), mix(&group, 0.6, &r, 0.8)));
    }
    for i in 0..25 {
        let r = random_vector(&mut rng);
        entries.push((format!("kin{i}"), mix(&group, 0.6, &r, 0.8)));
    }

    let mut docs: Vec<(Vec<String>, bool)> = (0..2000)
        .map(|i| {
            let is_hateful = i < 600;
            let len = rng.gen_range(6..12);
            let mut toks: Vec<String> = (0..len)
                .map(|_| filler.choose(&mut rng).unwrap().clone())
                .collect();
            for _ in 0..rng.gen_range(1..4) {
                let own = rng.gen_bool(0.8);
                let pool = if is_hateful == own {
                    &hateful
                } else {
                    &neutral
                };
                let at = rng.gen_range(0..=toks.len());
                toks.insert(at, pool.choose(&mut rng).unwrap().clone());
            }
            (toks, is_hateful)
        })
        .collect();
    for p in &planted {
        let in_hateful = rand::seq::index::sample(&mut rng, 600, 60).into_vec();
        let in_neutral: Vec<usize> = rand::seq::index::sample(&mut rng, 1400, 5)
            .into_iter()
            .map(|i| i + 600)
            .collect();
        for i in in_hateful.into_iter().chain(in_neutral) {
            let at = rng.gen_range(0..=docs[i].0.len());
            docs[i].0.insert(at, p.clone());
        }
    }
    docs.shuffle(&mut rng);
    World {
        entries,
        docs,
        planted,
        abusive: hateful,
    }
}

pub struct Files {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub abusive: PathBuf,
}

pub fn write_world(dir: &Path, world: &World) -> Files {
    let corpus = dir.join("corpus.csv");
    let mut text = String::from("text,label\n");
    for (toks, hateful) in &world.docs {
        text.push_str(&format!("{},{}\n", toks.join(" "), u8::from(*hateful)));
    }
    std::fs::write(&corpus, text).unwrap();

    let embeddings = dir.join("vectors.txt");
    let mut text = String::new();
    for (w, v) in &world.entries {
        let cells: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{w} {}\n", cells.join(" ")));
    }
    std::fs::write(&embeddings, text).unwrap();

    let abusive = dir.join("abusive.txt");
    std::fs::write(&abusive, world.abusive.join("\n") + "\n").unwrap();
    Files {
        dir: dir.to_path_buf(),
        corpus,
        embeddings,
        abusive,
    }
}

impl Files {
    /// Config file pointing at the fixture, with extra `key = value` lines.
    pub fn config(&self, name: &str, extra: &[(&str, &str)]) -> PathBuf {
        let mut text = format!(
            "corpus = {}\nembeddings = {}\nabusive = {}\n",
            self.corpus.display(),
            self.embeddings.display(),
            self.abusive.display()
        );
        for (k, v) in extra {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    }
}

pub fn bsw<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    std::process::Command::new(env!("CARGO_BIN_EXE_bsw"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub struct Request {
    pub text: String,
    pub headers: Vec<(String, String)>,
}

pub type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

/// Serves until the process exits. Returns the endpoint URL.
pub fn serve(handler: Arc<Handler>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/predict", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = Vec::new();
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    return;
                }
                let mut length = 0usize;
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((k, v)) = line.trim_end().split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap_or(0);
                        }
                        headers.push((k.to_ascii_lowercase(), v.trim().to_string()));
                    }
                }
                let mut body = vec![0; length];
                if reader.read_exact(&mut body).is_err() {
                    return;
                }
                let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                let text = json["text"].as_str().unwrap_or_default().to_string();
                let (status, reply) = handler(&Request { text, headers });
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(response.as_bytes());
            });
        }
    });
    url
}

/// Deterministic score in [0, 1) for a word.
pub fn word_score(word: &str) -> f64 {
    let h = word
        .bytes()
        .fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    (h % 1000) as f64 / 1000.0
}
