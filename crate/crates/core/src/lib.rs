// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod cli;
pub mod corpus;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod fixture;
pub mod generate;
pub mod model;
pub mod optim;
pub mod probe;
pub mod service;
pub mod steer_train;
pub mod stylevec;

pub use error::{Error, Result};
