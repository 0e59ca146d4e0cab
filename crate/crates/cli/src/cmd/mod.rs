pub mod collect;
pub mod eval;
pub mod pmi;
pub mod report;
pub mod score;
pub mod sweep;
pub mod synth;
