pub mod bounds;
pub mod cli;
pub mod cutgen;
pub mod estimators;
pub mod expr;
pub mod lp;
pub mod monoidal;
pub mod pipeline;
pub mod plot;
pub mod strengthen;
pub mod validate;
