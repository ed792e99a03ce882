pub mod attribution;
pub mod bucketing;
pub mod cli;
pub mod llm;
pub mod persona;
pub mod planner;
pub mod plot;
pub mod severity;
pub mod synthscore;
pub mod transcript;
