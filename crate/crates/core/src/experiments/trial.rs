//! Trial records and their CSV form.
//!
//! Schema: `t,bx,by,btheta,sig,gt_px,gt_py,contact`. Floats are written in
//! shortest round-trip form; missing ground truth is a pair of empty fields.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::kinematics::{twist_from_pose_pair, BodyTwist, ContactState, Pose2};
use crate::signal::{timestamp_gaps, NOMINAL_RATE_HZ};

pub const TRIAL_HEADER: [&str; 8] = ["t", "bx", "by", "btheta", "sig", "gt_px", "gt_py", "contact"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub t: f64,
    pub base: Pose2,
    /// Sensor counts; may be NaN for a dropped reading.
    pub signal: f64,
    pub ground_truth: Option<ContactState>,
    pub contact: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialRecord {
    pub samples: Vec<TrialSample>,
}

/// A parsed log with the sample indices that follow a timestamp gap.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedLog {
    pub record: TrialRecord,
    pub gaps: Vec<usize>,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_synthetic(&self) -> bool {
        self.samples.iter().any(|s| s.ground_truth.is_some())
    }

    /// Body twist over each interval `[k-1, k]`; the first entry is zero.
    pub fn twists(&self) -> Result<Vec<BodyTwist>, ExperimentError> {
        let mut out = Vec::with_capacity(self.samples.len());
        for (k, s) in self.samples.iter().enumerate() {
            if k == 0 {
                out.push(BodyTwist::ZERO);
                continue;
            }
            let p = &self.samples[k - 1];
            let tw = twist_from_pose_pair(p.base, s.base, s.t - p.t)
                .map_err(|_| ExperimentError::NonIncreasingTime { row: k + 2 })?;
            out.push(tw);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", TRIAL_HEADER.join(","))?;
        for s in &self.samples {
            let (gx, gy) = match s.ground_truth {
                Some(g) => (g.px.to_string(), g.py.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.t,
                s.base.x,
                s.base.y,
                s.base.theta,
                s.signal,
                gx,
                gy,
                u8::from(s.contact)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }

    /// Parses and validates a trial CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<IngestedLog, ExperimentError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names != TRIAL_HEADER {
            return Err(ExperimentError::Parse {
                row: 1,
                column: "header".into(),
                message: format!("expected `{}`", TRIAL_HEADER.join(",")),
            });
        }
        let mut samples = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = k + 2;
            if rec.len() != TRIAL_HEADER.len() {
                return Err(ExperimentError::Parse {
                    row,
                    column: "*".into(),
                    message: format!("expected {} fields, found {}", TRIAL_HEADER.len(), rec.len()),
                });
            }
            let field = |c: usize| rec.get(c).unwrap_or("").trim();
            let perr = |c: usize, message: String| ExperimentError::Parse {
                row,
                column: TRIAL_HEADER[c].to_string(),
                message,
            };
            let num = |c: usize| -> Result<f64, ExperimentError> {
                let raw = field(c);
                raw.parse::<f64>().map_err(|e| perr(c, format!("`{raw}`: {e}")))
            };
            let finite = |c: usize| -> Result<f64, ExperimentError> {
                let v = num(c)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(perr(c, "not finite".into()))
                }
            };
            let t = finite(0)?;
            let base = Pose2 {
                x: finite(1)?,
                y: finite(2)?,
                theta: finite(3)?,
            };
            let signal = num(4)?;
            let ground_truth = match (field(5).is_empty(), field(6).is_empty()) {
                (true, true) => None,
                (false, false) => Some(ContactState::new(num(5)?, num(6)?)),
                _ => return Err(perr(5, "ground truth needs both coordinates or neither".into())),
            };
            let contact = match field(7) {
                "0" => false,
                "1" => true,
                other => return Err(perr(7, format!("expected 0 or 1, got `{other}`"))),
            };
            samples.push(TrialSample {
                t,
                base,
                signal,
                ground_truth,
                contact,
            });
        }
        let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let gaps = timestamp_gaps(&ts, 1.0 / NOMINAL_RATE_HZ)
            .map_err(|e| match e {
                crate::signal::SignalError::NonIncreasingTime { index } => {
                    ExperimentError::NonIncreasingTime { row: index + 2 }
                }
                other => ExperimentError::Signal(other),
            })?;
        Ok(IngestedLog {
            record: TrialRecord { samples },
            gaps,
        })
    }
}

/// Reads a recorded or generated trial file.
pub fn ingest_log(path: impl AsRef<Path>) -> Result<IngestedLog, ExperimentError> {
    let f = std::fs::File::open(path)?;
    TrialRecord::read_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record() -> TrialRecord {
        TrialRecord {
            samples: (0..20)
                .map(|k| TrialSample {
                    t: k as f64 * 0.004,
                    base: Pose2::new(0.001 * k as f64, -0.1 / 3.0, 0.01 * k as f64),
                    signal: 1.0 / (k as f64 + 3.0),
                    ground_truth: (k % 3 != 0).then(|| ContactState::new(0.03, 0.1 / 7.0)),
                    contact: k % 3 != 0,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = record();
        let text = r.to_csv_string();
        let back = TrialRecord::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.record, r);
        assert!(back.gaps.is_empty());
        assert_eq!(back.record.to_csv_string(), text);
        assert!(text.lines().nth(1).unwrap().ends_with(",,,0"));
    }

    #[test]
    fn shuffled_rows_fail_validation() {
        let text = record().to_csv_string();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(4, 9);
        let bad = lines.join("\n");
        assert!(matches!(
            TrialRecord::read_csv(bad.as_bytes()),
            Err(ExperimentError::NonIncreasingTime { .. })
        ));
    }

    #[test]
    fn gap_is_flagged_not_rejected() {
        let mut r = record();
        for s in r.samples.iter_mut().skip(10) {
            s.t += 0.1;
        }
        let back = TrialRecord::read_csv(r.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back.gaps, vec![10]);
    }

    #[test]
    fn schema_errors_name_row_and_column() {
        let text = record().to_csv_string().replacen(",0.001,", ",zz,", 1);
        match TrialRecord::read_csv(text.as_bytes()) {
            Err(ExperimentError::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "bx");
            }
            other => panic!("{other:?}"),
        }
        let bad = "t,bx,by,btheta,sig,gt_px,gt_py,contact\n0,0,0,0,1,0.1,,1\n";
        assert!(TrialRecord::read_csv(bad.as_bytes()).is_err());
        let bad = "t,bx,by,btheta,sig,gt_px,gt_py,contact\n0,0,0,0,1,,,2\n";
        assert!(TrialRecord::read_csv(bad.as_bytes()).is_err());
        assert!(TrialRecord::read_csv("t,x\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_floats_round_trip(vals in proptest::collection::vec((any::<f64>(), any::<f64>(), any::<bool>()), 1..30)) {
            let samples = vals.iter().enumerate().map(|(k, &(a, b, c))| TrialSample {
                t: k as f64,
                base: Pose2 { x: if a.is_finite() { a } else { 0.0 }, y: 0.5, theta: -0.25 },
                signal: b,
                ground_truth: c.then(|| ContactState::new(if b.is_finite() { b } else { 1.0 }, -1e-300)),
                contact: c,
            }).collect();
            let r = TrialRecord { samples };
            let back = TrialRecord::read_csv(r.to_csv_string().as_bytes()).unwrap().record;
            prop_assert_eq!(back.to_csv_string(), r.to_csv_string());
        }
    }
}
