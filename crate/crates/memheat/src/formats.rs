//! File formats: trajectory and history CSV, past-tail CSV input, JSON
//! reports and the binary checkpoint.
//!
//! Every CSV file starts with a `# format_version: 1` comment line.
//!
//! Checkpoint layout (little-endian, no padding):
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 4 | magic `MHCK` |
//! | 4 | 4 | format version, `u32` = 1 |
//! | 8 | 4 | `n_modes`, `u32` |
//! | 12 | 4 | `n_nodes`, `u32` |
//! | 16 | 8 | `t`, `f64` |
//! | 24 | 8·n_nodes | rule nodes `s_i` |
//! | … | 8·n_nodes | rule weights `ω_i` |
//! | … | 8·n_modes | modal coefficients `b_j` |
//! | … | 8·n_modes·n_nodes | history values, mode-major (`e_{j,i}` at `j·n_nodes + i`) |

use anyhow::{bail, Context, Result};
use memheat_core::diagnostics::DiagnosticsRecord;
use memheat_core::history::{HistoryField, SampledPast};
use memheat_core::solver::{SystemState, Trajectory};
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MHCK";

fn version_line<W: Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "# format_version: {FORMAT_VERSION}")
}

/// Writes the trajectory table. Rows are every `stride`-th step plus the
/// final one.
pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    traj: &Trajectory,
    records: &[DiagnosticsRecord],
    stride: usize,
) -> Result<()> {
    version_line(&mut out)?;
    let n = traj.n_modes();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|j| format!("b_{j}")));
    header.extend(["u_h", "u_v", "eta_mu", "energy", "lv2", "dissipation_residual"].map(String::from));
    w.write_record(&header)?;
    let last = traj.len().saturating_sub(1);
    for k in (0..traj.len()).filter(|k| k % stride.max(1) == 0 || *k == last) {
        let r = &records[k];
        let mut row = vec![fmt_f(traj.times()[k])];
        row.extend(traj.state(k).iter().map(|x| fmt_f(*x)));
        row.extend([r.u_h, r.u_v, r.eta_mu, r.energy, r.lv2, r.dissipation_residual].map(fmt_f));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

/// History snapshot: one row per node, `s_i, ω_i, e_1 .. e_n`.
pub fn write_history_csv<W: Write>(mut out: W, eta: &HistoryField) -> Result<()> {
    version_line(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    let n = eta.n_modes();
    let mut header = vec!["s".to_string(), "omega".to_string()];
    header.extend((1..=n).map(|j| format!("e_{j}")));
    w.write_record(&header)?;
    let rule = eta.rule();
    for i in 0..eta.n_nodes() {
        let mut row = vec![fmt_f(rule.nodes[i]), fmt_f(rule.weights[i])];
        row.extend((0..n).map(|j| fmt_f(eta.get(j, i))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sampled past `r, b_1 .. b_n` with `r` increasing to 0.
pub fn read_past_csv(path: &Path, n_modes: usize) -> Result<SampledPast> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.len() != n_modes + 1 {
        bail!(
            "{}: expected {} columns (r, b_1..b_{n_modes}), found {}",
            path.display(),
            n_modes + 1,
            headers.len()
        );
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), line + 1))?;
        times.push(nums[0]);
        values.extend_from_slice(&nums[1..]);
    }
    SampledPast::new(times, values, n_modes).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    format_version: u32,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// JSON report with `format_version` and `kind` fields added at the top.
pub fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let v = Versioned {
        format_version: FORMAT_VERSION,
        kind,
        body,
    };
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    std::fs::write(path, to_json(kind, body)? + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Contents of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub u: Vec<f64>,
    /// mode-major, `n_modes × n_nodes`
    pub eta: Vec<f64>,
}

impl Checkpoint {
    pub fn from_state(state: &SystemState) -> Self {
        let rule = state.eta.rule();
        Checkpoint {
            t: state.t,
            nodes: rule.nodes.clone(),
            weights: rule.weights.clone(),
            u: state.u.coeffs.clone(),
            eta: state.eta.values().to_vec(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.u.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(self.n_modes())?.to_le_bytes())?;
        w.write_all(&u32::try_from(self.n_nodes())?.to_le_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        for x in self.nodes.iter().chain(&self.weights).chain(&self.u).chain(&self.eta) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head).context("checkpoint header truncated")?;
        if &head[..4] != CHECKPOINT_MAGIC {
            bail!("not a checkpoint file (bad magic)");
        }
        let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            bail!("unsupported checkpoint version {version}");
        }
        let (n_modes, n_nodes) = (word(8) as usize, word(12) as usize);
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; 8 * count];
            r.read_exact(&mut buf).context("checkpoint body truncated")?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let t = read_f64s(1)?[0];
        let nodes = read_f64s(n_nodes)?;
        let weights = read_f64s(n_nodes)?;
        let u = read_f64s(n_modes)?;
        let eta = read_f64s(n_modes * n_nodes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            bail!("{} trailing bytes after checkpoint body", rest.len());
        }
        Ok(Checkpoint {
            t,
            nodes,
            weights,
            u,
            eta,
        })
    }
}
