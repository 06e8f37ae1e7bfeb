//! Lyrics search engine and recommender.

pub mod analytics;
pub mod corpus;
pub mod embed;
pub mod engine;
pub mod fixtures;
pub mod hash;
pub mod index;
pub mod recommend;
pub mod search;
pub mod service;
pub mod textprep;
