pub mod evaluate;
pub mod extent;
pub mod infer;
pub mod mine;
pub mod synth;
