pub mod analysis;
pub mod classifier;
pub mod eval;
pub mod fixtures;
pub mod jsonl;
pub mod lmx;
pub mod pairs;
pub mod score;
pub mod sequences;
pub mod similarity;
pub mod time;
