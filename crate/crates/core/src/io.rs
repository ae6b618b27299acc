//! Line-oriented readers for the plain-text interchange formats.

use crate::error::{MatmiError, Result};
use std::io::BufRead;

pub(crate) struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    pub fn new(r: R) -> Self {
        Self {
            inner: r.lines(),
            line_no: 0,
        }
    }

    pub fn line_no(&self) -> usize {
        self.line_no
    }

    pub fn next_line(&mut self) -> Result<String> {
        loop {
            self.line_no += 1;
            match self.inner.next() {
                None => {
                    return Err(MatmiError::Format(format!(
                        "unexpected end of input at line {}",
                        self.line_no
                    )))
                }
                Some(line) => {
                    let line = line?;
                    let trimmed = line.trim();
                    if !trimmed.is_empty() {
                        return Ok(trimmed.to_string());
                    }
                }
            }
        }
    }

    pub fn expect_header(&mut self, header: &str) -> Result<()> {
        let line = self.next_line()?;
        if line != header {
            return Err(MatmiError::Format(format!(
                "expected header '{header}', found '{line}'"
            )));
        }
        Ok(())
    }

    pub fn count(&mut self, what: &str) -> Result<usize> {
        let line = self.next_line()?;
        line.parse().map_err(|_| {
            MatmiError::Format(format!(
                "line {}: expected {what}, found '{line}'",
                self.line_no
            ))
        })
    }

    pub fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                MatmiError::Format(format!(
                    "line {}: malformed number in '{line}'",
                    self.line_no
                ))
            })?;
        if v.len() != n {
            return Err(MatmiError::Format(format!(
                "line {}: expected {n} values, found {}",
                self.line_no,
                v.len()
            )));
        }
        Ok(v)
    }

    pub fn float_row(&mut self) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        line.split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| MatmiError::Format(format!("line {}: malformed number", self.line_no)))
    }

    pub fn indices(&mut self, n: usize) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                MatmiError::Format(format!(
                    "line {}: malformed index in '{line}'",
                    self.line_no
                ))
            })?;
        if v.len() != n {
            return Err(MatmiError::Format(format!(
                "line {}: expected {n} indices",
                self.line_no
            )));
        }
        Ok(v)
    }
}
