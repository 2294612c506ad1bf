//! Per-tick log records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::frames::{FrameTag, Wrench};
use crate::kinematics::{unit_from_parts, Pose};

#[derive(Debug, Clone, PartialEq)]
pub struct SatRecord {
    /// ODS pose in R.
    pub des_pose: Pose,
    /// Pose reached by the robot, mapped back into R.
    pub act_pose: Pose,
    pub des_vel: Vector3<f64>,
    /// Backward difference of the executed position; zero on the first tick.
    pub act_vel: Vector3<f64>,
    /// Measured wrench in R, torque scaled.
    pub wrench: Wrench,
    pub q: Vec<f64>,
    /// Joint command issued this tick. Kept in memory only; not a CSV column.
    pub q_cmd: Vec<f64>,
    pub safety_stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub tick: u64,
    pub t: f64,
    pub sats: Vec<SatRecord>,
    /// Sphere overlap between the two satellites, 0 when apart or single.
    pub contact_depth: f64,
}

/// A run's records plus the layout needed to write them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Log {
    /// Joint count per satellite.
    pub dofs: Vec<usize>,
    pub records: Vec<LogRecord>,
}

pub fn header(dofs: &[usize]) -> Vec<String> {
    let mut h = vec!["tick".to_string(), "t".to_string()];
    for (i, &dof) in dofs.iter().enumerate() {
        let s = format!("s{}", i + 1);
        for part in ["des", "act"] {
            for c in ["px", "py", "pz", "qx", "qy", "qz", "qw"] {
                h.push(format!("{s}_{part}_{c}"));
            }
        }
        for part in ["des", "act"] {
            for c in ["vx", "vy", "vz"] {
                h.push(format!("{s}_{part}_{c}"));
            }
        }
        for c in ["fx", "fy", "fz", "tx", "ty", "tz"] {
            h.push(format!("{s}_{c}"));
        }
        for j in 1..=dof {
            h.push(format!("{s}_q{j}"));
        }
        h.push(format!("{s}_safety"));
    }
    h.push("contact_depth".to_string());
    h
}

fn pose_fields(p: &Pose, out: &mut Vec<f64>) {
    out.extend(p.position.iter());
    out.extend(p.xyzw());
}

impl LogRecord {
    fn fields(&self) -> Vec<String> {
        let mut out = vec![self.tick.to_string(), self.t.to_string()];
        for s in &self.sats {
            let mut v = Vec::with_capacity(32);
            pose_fields(&s.des_pose, &mut v);
            pose_fields(&s.act_pose, &mut v);
            v.extend(s.des_vel.iter());
            v.extend(s.act_vel.iter());
            v.extend(s.wrench.force.iter());
            v.extend(s.wrench.torque.iter());
            v.extend(&s.q);
            out.extend(v.iter().map(f64::to_string));
            out.push(u8::from(s.safety_stop).to_string());
        }
        out.push(self.contact_depth.to_string());
        out
    }
}

impl Log {
    pub fn new(dofs: Vec<usize>) -> Self {
        Log {
            dofs,
            records: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header(&self.dofs)).map_err(csv_err)?;
        for r in &self.records {
            w.write_record(r.fields()).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses a CSV produced by [`Log::write_csv`]. `q_cmd` is not stored in
    /// the file and reads back empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Log> {
        let mut rd = csv::Reader::from_reader(reader);
        let head: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let dofs = dofs_from_header(&head)?;
        if head != header(&dofs) {
            return Err(Error::Parse("unexpected log header".into()));
        }
        let mut records = Vec::new();
        for (line, row) in rd.records().enumerate() {
            let row = row.map_err(csv_err)?;
            let bad = |what: &str| Error::Parse(format!("log row {}: bad {what}", line + 1));
            let mut it = row.iter();
            let tick: u64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("tick"))?;
            let mut num = || -> Result<f64> { it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("number")) };
            let t = num()?;
            let mut sats = Vec::with_capacity(dofs.len());
            for &dof in &dofs {
                let mut take = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| num()).collect() };
                let pose = |v: Vec<f64>| {
                    Pose::new(
                        Vector3::new(v[0], v[1], v[2]),
                        unit_from_parts(Quaternion::new(v[6], v[3], v[4], v[5])),
                    )
                };
                let des_pose = pose(take(7)?);
                let act_pose = pose(take(7)?);
                let des_vel = Vector3::from_vec(take(3)?);
                let act_vel = Vector3::from_vec(take(3)?);
                let force = Vector3::from_vec(take(3)?);
                let torque = Vector3::from_vec(take(3)?);
                let q = take(dof)?;
                let safety_stop = num()? != 0.0;
                sats.push(SatRecord {
                    des_pose,
                    act_pose,
                    des_vel,
                    act_vel,
                    wrench: Wrench::new(force, torque, FrameTag::R),
                    q,
                    q_cmd: Vec::new(),
                    safety_stop,
                });
            }
            let contact_depth = num()?;
            records.push(LogRecord {
                tick,
                t,
                sats,
                contact_depth,
            });
        }
        Ok(Log { dofs, records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Log> {
        Log::read_csv(std::fs::File::open(path)?)
    }
}

fn dofs_from_header(head: &[String]) -> Result<Vec<usize>> {
    let mut dofs = Vec::new();
    for i in 1.. {
        let prefix = format!("s{i}_q");
        let n = head
            .iter()
            .filter(|h| h.strip_prefix(&prefix).is_some_and(|rest| rest.parse::<usize>().is_ok()))
            .count();
        if n == 0 {
            break;
        }
        dofs.push(n);
    }
    Ok(dofs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("log CSV: {e}"))
}
