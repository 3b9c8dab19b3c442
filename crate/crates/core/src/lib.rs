//! Syndromic surveillance over geo-tagged short messages.
//!
//! The crate is organised as a batch pipeline:
//!
//! - [`ingest`]: message/lexicon/clinical/news parsing, symptom matching, daily panels
//! - [`classify`]: health-relevance filtering with a multinomial Naive Bayes model
//! - [`locnet`]: density clustering into location nodes, movement edges, PageRank
//! - [`tsengine`]: ARIMA / regression with ARIMA errors, naive models, metrics
//! - [`detect`]: EARS C2 alarms with count and median filters
//! - [`context`]: event terms, hashtags, representative messages and linked news
//! - [`track`]: nowcasting clinical counts from symptom counts, model comparison
//! - [`forecast`]: influx-augmented forecasting over the location network
//! - [`sim`]: seeded synthetic world used as ground truth
//! - [`pipeline`]: the stage implementations behind the command line tool

pub mod classify;
pub mod context;
pub mod detect;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod io;
pub mod locnet;
pub mod pipeline;
pub mod sim;
pub mod text;
pub mod track;
pub mod tsengine;

pub use error::{Error, Result};

/// Identifier of a location node. Nodes are numbered by descending size.
pub type NodeId = u32;
