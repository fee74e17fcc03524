pub mod augment;
pub mod config;
pub mod dataio;
pub mod detector;
pub mod features;
pub mod gini;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod seeding;
pub mod synth;
pub mod tensor;
pub mod trainer;
