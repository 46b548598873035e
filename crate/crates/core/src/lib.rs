pub mod agent;
pub mod chunk;
pub mod dom;
pub mod error;
pub mod eval;
pub mod jsonl;
pub mod selector;
pub mod tokenizer;
pub mod workflow;
