//! Randomized and swept campaigns.
//!
//! Random configurations come from a ChaCha stream keyed by `(seed, index)`,
//! so run `i` of a campaign is the same whatever the campaign size or thread
//! count. Runs are independent and execute on the rayon pool; results come
//! back in index order.

use crate::config::{
    default_collocation, ASection, DomainSection, FSection, FieldSpec, GSection, InitialSection, KernelSection,
    LSection, OutputSection, RunConfig, SpaceSection, TimeSection,
};
use anyhow::{Context, Result};
use memheat_core::diagnostics::{absorbing_entry, envelope_check, separation_decay, AbsorbingStatus};
use memheat_core::history::PastTrajectory;
use memheat_core::solver::solve;
use memheat_core::spectral::SpectralField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Relative envelope tolerance.
pub const ENVELOPE_TOL: f64 = 1e-3;
/// Slack on the ball entry time, as a multiple of the predicted time.
pub const ENTRY_FACTOR: f64 = 1.1;

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// First 16 hex digits of the SHA-256 of the canonical config echo.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.echo().as_bytes());
    hex::encode(&digest[..8])
}

fn modal(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (1..=n).map(|j| scale * rng.random_range(-1.0..=1.0) / j as f64).collect()
}

/// A random configuration satisfying every hypothesis: positive leading
/// coefficient of `f`, `a` bounded below by a positive `m`, and one of the
/// two kernel families with `δ` in `[0.5, 3]`. The past is a mix of
/// exponentials that meets `u₀` at `r = 0`, since a jump there puts a kink
/// into the history that the node rule only resolves to first order. The
/// horizon is a placeholder; [`run_one`] extends it past the predicted entry
/// time.
pub fn random_config(seed: u64, index: u64) -> RunConfig {
    let mut rng = rng_for(seed, index);
    let n = [4usize, 6, 8][rng.random_range(0..3)];
    let length = rng.random_range(0.8..2.0);
    let spec = if rng.random_bool(0.5) {
        format!("exp({:.3},{:.3})", rng.random_range(0.3..2.0), rng.random_range(0.5..3.0))
    } else {
        format!("singular({:.3},{:.3})", rng.random_range(0.5..3.0), rng.random_range(0.1..0.6))
    };
    let lead = rng.random_range(0.5..2.0);
    let coeffs = match rng.random_range(0..10) {
        0 | 1 => vec![lead, rng.random_range(-1.0..1.0)],
        2 => vec![lead, 0.0, 0.0, 0.0, rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)],
        _ => vec![
            lead,
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
        ],
    };
    let a = if rng.random_bool(0.5) {
        ASection::Constant {
            value: rng.random_range(0.5..2.0),
        }
    } else {
        ASection::ClampedAffine {
            base: rng.random_range(0.8..1.5),
            slope: rng.random_range(-0.5..0.5),
            m: rng.random_range(0.3..0.8),
            m_tilde: rng.random_range(1.5..3.0),
        }
    };
    let l_weight = modal(&mut rng, n, 1.0);
    let g_scale = rng.random_range(0.0..2.0);
    let forcing = modal(&mut rng, n, g_scale);
    let u0 = modal(&mut rng, n, 3.0);
    // continuous at r = 0: the amplitudes of each mode add up to u₀
    let past: Vec<Vec<[f64; 2]>> = u0
        .iter()
        .map(|&b| {
            if rng.random_bool(0.5) {
                vec![[b, rng.random_range(0.2..3.0)]]
            } else {
                let split = rng.random_range(-1.0..2.0);
                vec![
                    [split * b, rng.random_range(0.2..3.0)],
                    [(1.0 - split) * b, rng.random_range(0.2..3.0)],
                ]
            }
        })
        .collect();
    let n_collocation = default_collocation(n, &coeffs);
    RunConfig {
        domain: DomainSection { length },
        space: SpaceSection { n_modes: n, n_collocation },
        kernel: KernelSection {
            spec,
            n_nodes: 1024,
            s_max: None,
            points_per_cell: None,
            gamma: None,
            gamma_safety: Some(0.5),
            delta_test: None,
        },
        f: FSection { coeffs },
        a,
        l: LSection {
            weight: FieldSpec::Modal(l_weight),
        },
        g: GSection {
            forcing: FieldSpec::Modal(forcing),
        },
        initial: InitialSection {
            u0: FieldSpec::Modal(u0),
            past: Some(past),
            past_csv: None,
        },
        time: TimeSection {
            dt: 1e-3,
            horizon: 2.0,
            scheme: "imex".into(),
            transport: "characteristic".into(),
        },
        output: OutputSection {
            dir: "out".into(),
            stride: 1,
            seed,
        },
    }
}

/// One row of a campaign summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub index: usize,
    pub config_hash: String,
    /// `‖(u₀, φ)‖²_X`
    pub e0: f64,
    pub horizon: f64,
    pub predicted_entry: Option<f64>,
    pub entry_time: Option<f64>,
    /// `entered`, `late`, `left`, `missed` or `inconclusive`
    pub entry_status: String,
    pub min_envelope_margin: f64,
    pub envelope_tolerance: f64,
    pub envelope_pass: bool,
    pub max_envelope_ratio: f64,
    pub dissipation_violations: usize,
    pub worst_dissipation_excess: f64,
    pub steps: usize,
    pub fitted_separation_rate: Option<f64>,
    pub gamma: f64,
    pub separation_violations: usize,
}

impl RunSummary {
    /// Entry status counts as passing when the ball was reached on time and
    /// kept, or when there is nothing to check.
    pub fn entry_ok(&self) -> bool {
        matches!(self.entry_status.as_str(), "entered" | "inside" | "inconclusive")
    }
}

/// Options shared by every run of a campaign.
#[derive(Debug, Clone, Copy)]
pub struct CampaignOptions {
    /// extend each horizon to at least this multiple of the predicted entry
    /// time, capped at `max_horizon`
    pub horizon_factor: f64,
    pub min_horizon: f64,
    pub max_horizon: f64,
    /// also run a partner trajectory and fit the separation rate
    pub separation: bool,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            horizon_factor: 1.2,
            min_horizon: 2.0,
            max_horizon: 40.0,
            separation: true,
        }
    }
}

/// Runs one configuration and checks the envelope, the absorbing ball and
/// the dissipation residual.
pub fn run_one(index: usize, rc: &RunConfig, opts: &CampaignOptions, base_dir: &Path) -> Result<RunSummary> {
    let hash = config_hash(rc);
    let mut problem = rc.build(base_dir).with_context(|| format!("run {index} ({hash})"))?;
    let x0 = problem.u0.norm_h_sq() + problem.phi.lv2_norm(&problem.cfg.basis, problem.cfg.gamma);
    let predicted = problem.cfg.constants.predicted_entry(x0);
    let horizon = predicted
        .map_or(rc.time.horizon, |p| (opts.horizon_factor * p).max(rc.time.horizon))
        .clamp(opts.min_horizon, opts.max_horizon);
    problem.cfg.horizon = horizon;
    let out = solve(&problem.cfg, &problem.u0, &problem.phi)
        .map_err(|e| anyhow::anyhow!("run {index} ({hash}): {e}"))?;
    let times = out.trajectory.times();
    let xs = out.x_norm_series();
    let env = envelope_check(times, &xs, &out.constants, out.x0, ENVELOPE_TOL);
    let ball = absorbing_entry(times, &xs, &out.constants, out.x0, ENVELOPE_TOL);
    let (entry_time, entry_status) = match (&ball.status, ball.on_time(ENTRY_FACTOR)) {
        (AbsorbingStatus::Entered { time, .. }, _) if *time == 0.0 => (Some(0.0), "inside"),
        (AbsorbingStatus::Entered { time, .. }, Some(true)) => (Some(*time), "entered"),
        (AbsorbingStatus::Entered { time, persistent: false }, _) => (Some(*time), "left"),
        (AbsorbingStatus::Entered { time, .. }, _) => (Some(*time), "late"),
        (AbsorbingStatus::Missed, _) => (None, "missed"),
        (AbsorbingStatus::Inconclusive { .. }, _) => (None, "inconclusive"),
    };
    let worst = out
        .records
        .iter()
        .skip(1)
        .map(|r| r.dissipation_residual - r.dissipation_allowance)
        .fold(f64::NEG_INFINITY, f64::max);
    let (rate, sep_viol) = if opts.separation {
        let u0b = SpectralField::from_coeffs(problem.u0.coeffs.iter().map(|x| 0.5 * x).collect());
        let phib = PastTrajectory::Zero;
        let partner = solve(&problem.cfg, &u0b, &phib).map_err(|e| anyhow::anyhow!("run {index} partner: {e}"))?;
        let sep = separation_decay(&out, &partner, &problem.phi, &phib, &problem.cfg, 1e-3)?;
        (sep.fitted_rate, sep.violations)
    } else {
        (None, 0)
    };
    Ok(RunSummary {
        index,
        config_hash: hash,
        e0: out.x0,
        horizon,
        predicted_entry: predicted,
        entry_time,
        entry_status: entry_status.into(),
        min_envelope_margin: env.min_margin,
        envelope_tolerance: env.tolerance,
        envelope_pass: env.pass,
        max_envelope_ratio: env.max_ratio,
        dissipation_violations: out.dissipation_violations(),
        worst_dissipation_excess: worst,
        steps: times.len() - 1,
        fitted_separation_rate: rate,
        gamma: problem.cfg.gamma,
        separation_violations: sep_viol,
    })
}

/// Runs every configuration on the rayon pool, keeping input order.
pub fn run_campaign(configs: &[RunConfig], opts: &CampaignOptions, base_dir: &Path) -> Vec<Result<RunSummary>> {
    configs
        .par_iter()
        .enumerate()
        .map(|(i, rc)| run_one(i, rc, opts, base_dir))
        .collect()
}

/// `n` random configurations from `seed`.
pub fn random_campaign(seed: u64, n: usize) -> Vec<RunConfig> {
    (0..n as u64).map(|i| random_config(seed, i)).collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

/// Summary CSV, one row per run, in index order.
pub fn write_summary_csv<W: Write>(mut out: W, rows: &[RunSummary]) -> Result<()> {
    writeln!(out, "# format_version: {}", crate::formats::FORMAT_VERSION)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index",
        "config_hash",
        "e0",
        "horizon",
        "predicted_entry",
        "entry_time",
        "entry_status",
        "min_envelope_margin",
        "envelope_pass",
        "dissipation_violations",
        "worst_dissipation_excess",
        "fitted_separation_rate",
        "gamma",
    ])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.config_hash.clone(),
            format!("{:?}", r.e0),
            format!("{:?}", r.horizon),
            opt(r.predicted_entry),
            opt(r.entry_time),
            r.entry_status.clone(),
            format!("{:?}", r.min_envelope_margin),
            r.envelope_pass.to_string(),
            r.dissipation_violations.to_string(),
            format!("{:?}", r.worst_dissipation_excess),
            opt(r.fitted_separation_rate),
            format!("{:?}", r.gamma),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cross product of `key = [values]` lists applied to a base document.
/// Each value is a TOML literal; the result is re-parsed strictly.
pub fn sweep_configs(base: &str, axes: &[(String, Vec<String>)]) -> Result<Vec<RunConfig>> {
    let doc: toml::Table = base.parse().context("base configuration is not valid TOML")?;
    let mut docs = vec![doc];
    for (key, values) in axes {
        let (sec, name) = key
            .split_once('.')
            .with_context(|| format!("sweep key `{key}` must look like section.key"))?;
        let mut next = Vec::with_capacity(docs.len() * values.len());
        for d in &docs {
            for v in values {
                let literal: toml::Table = format!("v = {v}")
                    .parse()
                    .with_context(|| format!("sweep value `{v}` for `{key}` is not a TOML literal"))?;
                let mut d = d.clone();
                let table = d
                    .entry(sec.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()));
                let toml::Value::Table(t) = table else {
                    anyhow::bail!("`{sec}` is not a table");
                };
                t.insert(name.to_string(), literal["v"].clone());
                next.push(d);
            }
        }
        docs = next;
    }
    docs.iter()
        .map(|d| crate::config::parse_str(&toml::to_string(d)?).map_err(anyhow::Error::from))
        .collect()
}
