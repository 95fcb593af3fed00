pub mod config;
pub mod corpus;
pub mod estimators;
pub mod lcp;
pub mod linalg;
pub mod models;
pub mod orthant;
pub mod output;
pub mod rng;
pub mod skorokhod;
pub mod storage;
