#![allow(dead_code)]
pub mod oracle;
pub mod random;
pub mod scenario;

use std::path::{Path, PathBuf};

use domstep::dom::{parse_html, DomTree};
use domstep::tokenizer::{BpeTokenizer, Wordlist};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The 20-page HTML corpus as (file name, source).
pub fn pages() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(fixture("pages"))
        .expect("pages dir")
        .map(|e| {
            let p = e.expect("entry").path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).expect("page"))
        })
        .collect();
    out.sort();
    out
}

pub fn parsed_pages() -> Vec<DomTree> {
    pages().iter().map(|(_, src)| parse_html(src)).collect()
}

pub fn toy_bpe() -> BpeTokenizer {
    BpeTokenizer::from_file(&fixture("toy_bpe.json")).expect("toy tokenizer")
}

pub fn wordlist() -> Wordlist {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/words-10k.txt");
    Wordlist::from_text(&std::fs::read_to_string(path).expect("wordlist"))
}
