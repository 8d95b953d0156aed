//! Tidy Monte Carlo simulation studies.
//!
//! A study is described by four pieces that run in sequence:
//!
//! 1. a [`grid`] of simulation settings (full factorial design stacked over
//!    iterations, one row per simulation, with a per-row seed),
//! 2. a data generation function and
//! 3. an analysis function, bundled together as a [`study::Study`],
//! 4. a tidy [`results`] table with one row per grid row.
//!
//! The [`runner`] executes a study over a grid on a worker pool with per-row
//! error capture, chunking and an append-only checkpoint log. [`aggregate`]
//! summarises the joined grid and results over iterations, and [`plot`]
//! renders the summaries as a faceted SVG chart.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod linmodel;
pub mod numerics;
pub mod plot;
pub mod prepost;
pub mod results;
pub mod runner;
pub mod study;
pub mod table;
pub mod value;

pub use error::{Error, Result};
pub use grid::{derive_seed, expand_grid, FactorKind, FactorSpec, Grid, GridRow, GridSpec, RowView};
pub use results::{ResultRow, ResultsTable, Status};
pub use runner::{run, run_resumable, RunConfig};
pub use study::{DynStudy, OutcomeSchema, Outcomes, Study, StudyError};
pub use table::{Column, Table};
pub use value::{Value, ValueKind};
