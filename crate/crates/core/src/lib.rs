pub mod bernstein;
pub mod cli;
pub mod grid;
pub mod mlf;
pub mod operators;
pub mod quad;
pub mod solver;
pub mod spaces;
pub mod special;
