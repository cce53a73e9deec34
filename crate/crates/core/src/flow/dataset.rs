//! Training pairs `(θ, condition)` and their CSV form
//! (`theta_0..theta_{d-1}, stat_0..stat_{k-1}, tag`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ParamSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTag {
    Pretrain,
    Finetune,
}

impl SampleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleTag::Pretrain => "pretrain",
            SampleTag::Finetune => "finetune",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrain" => Some(SampleTag::Pretrain),
            "finetune" => Some(SampleTag::Finetune),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub theta: Vec<f64>,
    /// Raw (unstandardized) conditioning statistics.
    pub cond: Vec<f64>,
    pub tag: SampleTag,
}

impl Sample {
    pub fn pretrain(theta: Vec<f64>, cond: Vec<f64>) -> Self {
        Self {
            theta,
            cond,
            tag: SampleTag::Pretrain,
        }
    }

    pub fn finetune(theta: Vec<f64>, cond: Vec<f64>) -> Self {
        Self {
            theta,
            cond,
            tag: SampleTag::Finetune,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        self.samples.push(s);
    }

    pub fn conditions(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.cond.as_slice())
    }

    /// Checks widths, finiteness and (when given) that every θ is in the box.
    pub fn validate(&self, d: usize, k: usize, space: Option<&ParamSpace>) -> Result<()> {
        for s in &self.samples {
            if s.theta.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.theta.len(),
                });
            }
            if s.cond.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: s.cond.len(),
                });
            }
            if s.theta.iter().chain(&s.cond).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            if let Some(space) = space {
                space.check(&s.theta)?;
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (d, k) = match self.samples.first() {
            Some(s) => (s.theta.len(), s.cond.len()),
            None => (0, 0),
        };
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..d).map(|j| format!("theta_{j}")).collect();
        header.extend((0..k).map(|j| format!("stat_{j}")));
        header.push("tag".into());
        wtr.write_record(&header)?;
        for s in &self.samples {
            let mut rec: Vec<String> = s.theta.iter().chain(&s.cond).map(|v| format!("{v:?}")).collect();
            rec.push(s.tag.as_str().into());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let d = headers.iter().filter(|h| h.starts_with("theta_")).count();
        let k = headers.iter().filter(|h| h.starts_with("stat_")).count();
        if headers.len() != d + k + 1 || headers.get(d + k) != Some("tag") {
            return Err(Error::ConfigInvalid(
                "dataset CSV must have columns theta_*, stat_*, tag".into(),
            ));
        }
        let bad = |what: &str| Error::ConfigInvalid(format!("dataset CSV: bad {what}"));
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = (0..d + k)
                .map(|j| rec[j].parse::<f64>().map_err(|_| bad("number")))
                .collect::<Result<Vec<_>>>()?;
            let tag = SampleTag::parse(&rec[d + k]).ok_or_else(|| bad("tag"))?;
            samples.push(Sample {
                theta: vals[..d].to_vec(),
                cond: vals[d..].to_vec(),
                tag,
            });
        }
        Ok(Self { samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(vec![
            Sample::pretrain(vec![0.7, 0.1], vec![1.0 / 3.0; 9]),
            Sample::finetune(vec![0.5, 1e-17], vec![-2.5; 9]),
        ]);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_0,theta_1,stat_0,"));
        assert!(text.lines().next().unwrap().ends_with("stat_8,tag"));
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn validation() {
        let space = ParamSpace::new(vec![0.0], vec![1.0]).unwrap();
        let ds = Dataset::new(vec![Sample::pretrain(vec![2.0], vec![0.0])]);
        assert!(ds.validate(1, 1, None).is_ok());
        assert!(matches!(
            ds.validate(1, 1, Some(&space)),
            Err(Error::ParamOutOfBounds { .. })
        ));
        assert!(ds.validate(1, 2, None).is_err());
    }
}
