pub mod candidates;
pub mod engine;
pub mod error;
pub mod forecast;
pub mod formats;
pub mod hash;
pub mod ir;
pub mod ml;
pub mod plan;
pub mod report;
pub mod search;
pub mod selection;
pub mod sql;
pub mod synth;
