//! Trace files: the per-trial CSV, and a lossless binary round-log from
//! which trajectories replay bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DVector;

use crate::engine::{SampleIndexing, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::schedule::StepSchedule;

const MAGIC: &[u8; 8] = b"LSALOG01";

/// CSV header, fixed by contract.
pub const TRACE_HEADER: &str = "trial,k,mse,alpha_k,bound";

/// Writes the trace CSV: one row per `(trial, round)`, ordered by trial then
/// round. `bound[k]` is shared across trials and blank before the bound's
/// anchor round. Floats are printed in shortest round-trip form.
pub fn write_trace_csv(
    path: &Path,
    mse_per_trial: &[Vec<f64>],
    alpha_of_round: impl Fn(usize) -> f64,
    bound: &[Option<f64>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (trial, series) in mse_per_trial.iter().enumerate() {
        for (k, mse) in series.iter().enumerate() {
            let bound_txt = match bound.get(k).copied().flatten() {
                Some(b) => format!("{b}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{trial},{k},{mse},{alpha},{bound_txt}\n",
                alpha = alpha_of_round(k)
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_schedule<W: Write>(w: &mut W, schedule: &StepSchedule) -> Result<()> {
    match schedule {
        StepSchedule::Constant { alpha } => {
            w.write_u8(0)?;
            w.write_f64::<LittleEndian>(*alpha)?;
        }
        StepSchedule::Harmonic { alpha0 } => {
            w.write_u8(1)?;
            w.write_f64::<LittleEndian>(*alpha0)?;
        }
    }
    Ok(())
}

fn read_schedule<R: Read>(r: &mut R) -> Result<StepSchedule> {
    let tag = r.read_u8()?;
    let value = r.read_f64::<LittleEndian>()?;
    match tag {
        0 => Ok(StepSchedule::Constant { alpha: value }),
        1 => Ok(StepSchedule::Harmonic { alpha0: value }),
        other => Err(Error::Parse(format!("unknown schedule tag {other}"))),
    }
}

/// Serializes a trajectory losslessly (raw IEEE-754 bits).
pub fn write_roundlog(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    let m = &traj.meta;
    for v in [m.n_agents, m.local_steps, m.dim, m.rounds] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    w.write_u8(match m.sample_indexing {
        SampleIndexing::Fresh => 0,
        SampleIndexing::PaperLiteral => 1,
    })?;
    write_schedule(&mut w, &m.schedule)?;

    for theta in &traj.bar_theta {
        for &v in theta.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.write_u8(traj.locals.is_some() as u8)?;
    if let Some(locals) = &traj.locals {
        for round in locals {
            for agent in round {
                for theta in agent {
                    for &v in theta.iter() {
                        w.write_f64::<LittleEndian>(v)?;
                    }
                }
            }
        }
    }
    w.write_u8(traj.samples.is_some() as u8)?;
    if let Some(samples) = &traj.samples {
        for round in samples {
            for agent in round {
                for &x in agent {
                    w.write_u64::<LittleEndian>(x as u64)?;
                }
            }
        }
    }
    for &a in &traj.alphas_used {
        w.write_f64::<LittleEndian>(a)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a round-log back into a trajectory, bit-identical to what was
/// written.
pub fn read_roundlog(path: &Path) -> Result<Trajectory> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!(
            "{} is not a round-log (bad magic)",
            path.display()
        )));
    }
    let n_agents = r.read_u64::<LittleEndian>()? as usize;
    let local_steps = r.read_u64::<LittleEndian>()? as usize;
    let dim = r.read_u64::<LittleEndian>()? as usize;
    let rounds = r.read_u64::<LittleEndian>()? as usize;
    let sample_indexing = match r.read_u8()? {
        0 => SampleIndexing::Fresh,
        1 => SampleIndexing::PaperLiteral,
        other => return Err(Error::Parse(format!("unknown indexing tag {other}"))),
    };
    let schedule = read_schedule(&mut r)?;

    let read_vec = |r: &mut dyn Read| -> Result<DVector<f64>> {
        let mut v = DVector::zeros(dim);
        for i in 0..dim {
            v[i] = r.read_f64::<LittleEndian>()?;
        }
        Ok(v)
    };

    let mut bar_theta = Vec::with_capacity(rounds + 1);
    for _ in 0..=rounds {
        bar_theta.push(read_vec(&mut r)?);
    }
    let locals = if r.read_u8()? == 1 {
        let mut all = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let mut round = Vec::with_capacity(n_agents);
            for _ in 0..n_agents {
                let mut agent = Vec::with_capacity(local_steps + 1);
                for _ in 0..=local_steps {
                    agent.push(read_vec(&mut r)?);
                }
                round.push(agent);
            }
            all.push(round);
        }
        Some(all)
    } else {
        None
    };
    let samples = if r.read_u8()? == 1 {
        let mut all = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let mut round = Vec::with_capacity(n_agents);
            for _ in 0..n_agents {
                let mut agent = Vec::with_capacity(local_steps);
                for _ in 0..local_steps {
                    agent.push(r.read_u64::<LittleEndian>()? as usize);
                }
                round.push(agent);
            }
            all.push(round);
        }
        Some(all)
    } else {
        None
    };
    let mut alphas_used = Vec::with_capacity(rounds * local_steps);
    for _ in 0..rounds * local_steps {
        alphas_used.push(r.read_f64::<LittleEndian>()?);
    }

    Ok(Trajectory {
        meta: TrajectoryMeta {
            n_agents,
            local_steps,
            dim,
            rounds,
            sample_indexing,
            schedule,
        },
        bar_theta,
        locals,
        samples,
        alphas_used,
    })
}
