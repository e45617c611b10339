//! Event records: the exchange format between simulators and the fitting pipeline.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// One simulation event: the sizes of the fragments (clusters) it produced,
/// optionally tagged with the control parameter of its ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    fragment_sizes: Vec<usize>,
    control: Option<f64>,
    system_size: Option<usize>,
}

impl EventRecord {
    pub fn new(fragment_sizes: Vec<usize>, control: Option<f64>) -> Result<Self> {
        if fragment_sizes.contains(&0) {
            return Err(invalid("fragment_sizes", "fragment sizes must be >= 1"));
        }
        Ok(Self {
            fragment_sizes,
            control,
            system_size: None,
        })
    }

    /// Overrides the mass used to normalize yields. Defaults to the sum of
    /// fragment sizes; set it when some mass (e.g. a spanning cluster) is
    /// deliberately left out of the fragment list.
    pub fn with_system_size(mut self, system_size: usize) -> Result<Self> {
        let total: usize = self.fragment_sizes.iter().sum();
        if system_size < total || system_size == 0 {
            return Err(invalid(
                "system_size",
                format!("{system_size} is smaller than the fragment mass {total}"),
            ));
        }
        self.system_size = Some(system_size);
        Ok(self)
    }

    pub fn fragment_sizes(&self) -> &[usize] {
        &self.fragment_sizes
    }

    pub fn multiplicity(&self) -> usize {
        self.fragment_sizes.len()
    }

    pub fn control(&self) -> Option<f64> {
        self.control
    }

    pub fn system_size(&self) -> usize {
        self.system_size
            .unwrap_or_else(|| self.fragment_sizes.iter().sum())
    }

    pub fn largest(&self) -> Option<usize> {
        self.fragment_sizes.iter().copied().max()
    }
}

/// Line format: `control,size1 size2 size3 ...`; an empty control field means
/// no control value.
impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = self.control {
            write!(f, "{c}")?;
        }
        f.write_str(",")?;
        for (i, a) in self.fragment_sizes.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for EventRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let (control, sizes) = line
            .split_once(',')
            .ok_or_else(|| invalid("event", format!("missing ',' in `{line}`")))?;
        let control = match control.trim() {
            "" => None,
            c => Some(
                c.parse::<f64>()
                    .map_err(|e| invalid("event", format!("bad control `{c}`: {e}")))?,
            ),
        };
        let sizes = sizes
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| invalid("event", format!("bad size `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        EventRecord::new(sizes, control)
    }
}

/// Parses a line-delimited events file; blank lines and `#` comments are skipped.
pub fn parse_events(text: &str) -> Result<Vec<EventRecord>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

pub fn format_events(events: &[EventRecord]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}
