pub mod bench;
pub mod dynamics;
pub mod nlp_solver;
pub mod planner;
pub mod scenario;
pub mod transcription;
