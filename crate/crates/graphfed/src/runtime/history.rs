//! Round-by-round metrics and the end-of-run report.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub client: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<RoundRecord>,
}

impl History {
    pub fn push(&mut self, rec: RoundRecord) {
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Each client's test accuracy is read at its own best-validation round
    /// (earliest round on ties), then averaged over clients.
    pub fn avg_test_acc_at_best_val(&self) -> Result<f64> {
        if self.records.is_empty() {
            return Err(Error::invalid("history", "no records"));
        }
        let mut best: std::collections::BTreeMap<usize, (f64, f64)> =
            std::collections::BTreeMap::new();
        for rec in &self.records {
            let entry = best
                .entry(rec.client)
                .or_insert((f64::NEG_INFINITY, f64::NAN));
            if rec.val_acc > entry.0 {
                *entry = (rec.val_acc, rec.test_acc);
            }
        }
        let sum: f64 = best.values().map(|(_, t)| t).sum();
        Ok(sum / best.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["round", "client", "train_loss", "val_acc", "test_acc"])?;
        for rec in &self.records {
            w.write_record([
                rec.round.to_string(),
                rec.client.to_string(),
                rec.train_loss.to_string(),
                rec.val_acc.to_string(),
                rec.test_acc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<History> {
        let mut r = csv::Reader::from_path(path)?;
        let want = ["round", "client", "train_loss", "val_acc", "test_acc"];
        if r.headers()? != want.as_slice() {
            return Err(Error::Parse {
                line: 1,
                msg: format!("history header {:?}, expected {want:?}", r.headers()?),
            });
        }
        let mut records = Vec::new();
        for row in r.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| -> Result<&str> {
                row.get(i).ok_or(Error::Parse {
                    line,
                    msg: format!("missing column {i}"),
                })
            };
            let parse_f = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad float `{s}`"),
                })
            };
            let parse_u = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad integer `{s}`"),
                })
            };
            records.push(RoundRecord {
                round: parse_u(field(0)?)?,
                client: parse_u(field(1)?)?,
                train_loss: parse_f(field(2)?)?,
                val_acc: parse_f(field(3)?)?,
                test_acc: parse_f(field(4)?)?,
            });
        }
        Ok(History { records })
    }
}

/// End-of-run summary written next to the history CSV. `epsilon` is absent
/// when uploads are unprotected (mechanism off or noise scale zero).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryReport {
    pub avg_test_acc_at_best_val: f64,
    pub epsilon: Option<f64>,
    pub missing_links: usize,
    pub heterogeneity: f64,
}
