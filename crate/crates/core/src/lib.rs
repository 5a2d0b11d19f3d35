pub mod diag;
pub mod error;
pub mod experiment;
pub mod families;
pub mod numeric;
pub mod op;
pub mod seq;
pub mod special;
pub mod transforms;
