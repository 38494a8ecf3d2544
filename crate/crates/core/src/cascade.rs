//! Cascades and cascade groups: the atomic observations everything else fits on.
//!
//! A [`Cascade`] is the ordered sequence of relative event times of one
//! diffusion: the initial post at time 0 followed by its reshares. Duplicate
//! timestamps (ties at data resolution) are retained as distinct events;
//! among ties, input order is preserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One diffusion cascade: event times in seconds relative to the first event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    times: Vec<f64>,
    observed_until: Option<f64>,
}

impl Cascade {
    /// Builds a complete (uncensored) cascade. The first time must be 0 and
    /// times must be non-decreasing.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        Self::build(times, None)
    }

    /// Builds a cascade observed up to a censoring horizon `t`; every event
    /// must lie strictly before `t`.
    pub fn with_horizon(times: Vec<f64>, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidHorizon(t));
        }
        Self::build(times, Some(t))
    }

    fn build(times: Vec<f64>, observed_until: Option<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyCascade);
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidTime { index: i, value: t });
            }
        }
        if times[0] != 0.0 {
            return Err(Error::UnorderedTimes(0));
        }
        for i in 1..times.len() {
            if times[i] < times[i - 1] {
                return Err(Error::UnorderedTimes(i));
            }
        }
        if let Some(t) = observed_until {
            if let Some(&last) = times.last() {
                if last >= t {
                    return Err(Error::EventPastHorizon { event: last, horizon: t });
                }
            }
        }
        Ok(Self { times, observed_until })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observed_until(&self) -> Option<f64> {
        self.observed_until
    }

    /// Number of events, i.e. the cascade popularity.
    pub fn size(&self) -> usize {
        self.times.len()
    }

    /// Time of the last observed event.
    pub fn last_event_time(&self) -> f64 {
        *self.times.last().expect("cascade is non-empty")
    }

    /// Events strictly before `t`, with `observed_until` set to `t`.
    /// The seed event at time 0 is always retained.
    pub fn truncate(&self, t: f64) -> Result<Cascade> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidHorizon(t));
        }
        let kept: Vec<f64> = self.times.iter().copied().take_while(|&x| x < t).collect();
        Cascade::with_horizon(kept, t)
    }
}

/// All cascades of one online item, with its publisher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeGroup {
    pub item_id: String,
    pub publisher_id: String,
    cascades: Vec<Cascade>,
}

impl CascadeGroup {
    pub fn new(item_id: String, publisher_id: String, cascades: Vec<Cascade>) -> Result<Self> {
        if cascades.is_empty() {
            return Err(Error::EmptyInput("cascade group"));
        }
        Ok(Self { item_id, publisher_id, cascades })
    }

    pub fn cascades(&self) -> &[Cascade] {
        &self.cascades
    }

    /// Final sizes of all cascades in the group.
    pub fn sizes(&self) -> Vec<u64> {
        self.cascades.iter().map(|c| c.size() as u64).collect()
    }
}
