use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otfs::analysis::{complexity, complexity_report, hann, leakage_profile, PaprAccumulator, WelchAccumulator};
use otfs::config::{load_config, FileConfig};
use otfs::harness::{append_csv, default_pilot, transmit_frames, Component, CsiMode, SimulationPlan, Simulator, CSV_HEADER};
use otfs::numerology::{numerology_report, presets, Numerology, PilotKind, SystemId};
use otfs::{Error, Result};

#[derive(Parser)]
#[command(name = "otfs", version, about = "Oversampled CP-OTFS / UW-OTFS link simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// UW, CP*, CP** or CP***
    #[arg(long, global = true)]
    system: Option<String>,
    /// Eb/N0 grid in dB, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    ebn0: Option<Vec<f64>>,
    /// Maximum velocity in km/h
    #[arg(long, global = true)]
    velocity: Option<f64>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// perfect or estimated
    #[arg(long, global = true)]
    csi: Option<String>,
    /// dirac, uw, embedded or none
    #[arg(long, global = true)]
    pilot: Option<String>,
    #[arg(long = "sigma-u-sq", global = true)]
    sigma_u_sq: Option<f64>,
    #[arg(long = "bem-rate", global = true)]
    bem_rate: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Subtract the channel-distorted pilot (known channel) before detection
    #[arg(long, global = true)]
    cancel_pilot: bool,
    /// Channel paths per realization
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write 0 in the wall_time_s column so repeated runs compare byte for byte
    #[arg(long, global = true)]
    no_wall_time: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derived parameters and spectral efficiency
    Numerology,
    /// Delay-domain energy of an embedded pilot after a fractional delay
    Leakage {
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        q: usize,
        #[arg(long, default_value_t = 16)]
        p0: usize,
        #[arg(long = "k-tau", default_value_t = 1)]
        k_tau: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
        alpha: Vec<f64>,
        /// Energy threshold in dB for the interfered-bin count
        #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
        threshold_db: f64,
    },
    /// Welch PSD of the transmit signal
    Psd {
        /// data, pilot or both
        #[arg(long, default_value = "both")]
        component: String,
        /// Number of frames (default: --realizations or 400)
        #[arg(long)]
        frames: Option<usize>,
    },
    /// CCDF of per-block PAPR
    Papr {
        #[arg(long, default_value = "both")]
        component: String,
        #[arg(long, default_value_t = 5000)]
        blocks: usize,
    },
    /// Multiplication counts and memory footprint
    Complexity {
        /// Detection bins for the UW column
        #[arg(long = "uw-m-b", default_value_t = 64)]
        uw_m_b: usize,
    },
    /// Monte Carlo BER/NMSE run
    Simulate,
}

fn config(opts: &Opts) -> Result<FileConfig> {
    match &opts.config {
        Some(p) => load_config(p),
        None => Ok(FileConfig::default()),
    }
}

/// System named on the command line or in the config file.
fn chosen_system(opts: &Opts, cfg: &FileConfig) -> Result<Option<(String, Numerology)>> {
    if let Some(s) = &opts.system {
        let id: SystemId = s.parse()?;
        return Ok(Some((id.label().to_string(), id.numerology())));
    }
    cfg.numerology()
}

fn build_plan(opts: &Opts, cfg: &FileConfig) -> Result<SimulationPlan> {
    let (label, num) = chosen_system(opts, cfg)?.unwrap_or_else(|| ("UW".into(), SystemId::Uw.numerology()));
    let sim = cfg.simulation.clone().unwrap_or_default();
    let pilot_cfg = cfg.pilot.clone().unwrap_or_default();
    let mut plan = SimulationPlan::preset(SystemId::Uw);
    plan.system = label;
    plan.csi = match opts.csi.as_deref().or(sim.csi.as_deref()) {
        Some(s) => s.parse()?,
        None => CsiMode::Estimated,
    };
    plan.pilot = match opts.pilot.as_deref().or(pilot_cfg.kind.as_deref()) {
        Some(s) => s.parse()?,
        None => default_pilot(num.variant, plan.csi),
    };
    plan.numerology = num;
    if let Some(v) = opts.ebn0.clone().or(sim.ebn0_db) {
        plan.ebn0_db = v;
    }
    if let Some(v) = opts.velocity.or(sim.velocity) {
        plan.velocity = v;
    }
    if let Some(v) = opts.realizations.or(sim.realizations) {
        plan.realizations = v;
    }
    if let Some(v) = opts.seed.or(sim.seed) {
        plan.seed = v;
    }
    if let Some(v) = opts.sigma_u_sq.or(pilot_cfg.sigma_u_sq) {
        plan.sigma_u_sq = v;
    }
    plan.bem_rate = opts.bem_rate.or(cfg.bem.as_ref().and_then(|b| b.rate));
    plan.cancel_pilot = opts.cancel_pilot || sim.cancel_pilot.unwrap_or(false);
    if let Some(v) = opts.paths.or(sim.paths) {
        plan.paths = v;
    }
    plan.validate()?;
    Ok(plan)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(opts: &Opts, text: &str) -> Result<()> {
    match &opts.out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout(text)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let opts = &cli.opts;
    if let Some(t) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = config(opts)?;
    match cli.cmd {
        Cmd::Numerology => {
            let systems = match chosen_system(opts, &cfg)? {
                Some(s) => vec![s],
                None => presets().into_iter().map(|(id, n)| (id.label().to_string(), n)).collect(),
            };
            emit(opts, &numerology_report(&systems))
        }
        Cmd::Complexity { uw_m_b } => {
            let systems = match chosen_system(opts, &cfg)? {
                Some((l, n)) => vec![(l, n)],
                None => vec![
                    ("CP**".to_string(), SystemId::CpStar2.numerology()),
                    (format!("UW(M_b={uw_m_b})"), SystemId::Uw.numerology().with_m_b(uw_m_b)?),
                ],
            };
            let reports: Vec<_> = systems.into_iter().map(|(l, n)| (l, complexity(&n))).collect();
            emit(opts, &complexity_report(&reports))
        }
        Cmd::Leakage { m, q, p0, k_tau, alpha, threshold_db } => {
            let thr = 10f64.powf(threshold_db / 10.0);
            let mut text = String::new();
            for a in alpha {
                let p = leakage_profile(m, q, a, p0, k_tau)?;
                let _ = writeln!(text, "# alpha={a} interfered_bins={}", p.interfered_bins(thr));
                let _ = writeln!(text, "# delay_bin energy_db");
                for (i, e) in p.energy_db.iter().enumerate() {
                    let _ = writeln!(text, "{i} {e:.4}");
                }
                text.push('\n');
            }
            emit(opts, &text)
        }
        Cmd::Psd { component, frames } => {
            let plan = build_plan(opts, &cfg)?;
            let comp: Component = component.parse()?;
            let count = frames.or(opts.realizations).unwrap_or(400);
            let (frames, _) = transmit_frames(&plan, comp, count)?;
            let n = &plan.numerology;
            let seg = 4 * n.m_prime;
            let mut acc = WelchAccumulator::new(seg, 0.5, hann(seg))?;
            for f in &frames {
                acc.push(f)?;
            }
            let psd = acc.finish()?;
            let edge = n.m_s as f64 / (2.0 * n.m_prime as f64);
            let db = psd.relative_db(edge)?;
            let fs = n.m_prime as f64 * n.delta_f;
            let mut text = format!(
                "# system={} component={component} frames={count} oob_at_2x_edge_db={:.2}\n# freq_hz psd_db\n",
                plan.system,
                psd.level_at(2.0 * edge, edge)?
            );
            for (f, d) in psd.freq.iter().zip(&db) {
                let _ = writeln!(text, "{:.1} {d:.4}", f * fs);
            }
            emit(opts, &text)
        }
        Cmd::Papr { component, blocks } => {
            let plan = build_plan(opts, &cfg)?;
            let comp: Component = component.parse()?;
            let n = plan.numerology.n;
            let (frames, len) = transmit_frames(&plan, comp, blocks.div_ceil(n))?;
            let mut acc = PaprAccumulator::default();
            for f in &frames {
                acc.push_blocks(f, len);
            }
            let ccdf = acc.finish()?;
            let mut text = format!(
                "# system={} component={component} blocks={} papr_at_1e-2_db={:.3}\n# papr_db ccdf\n",
                plan.system,
                ccdf.sorted_db.len(),
                ccdf.threshold_at(1e-2)
            );
            for (x, p) in ccdf.table() {
                let _ = writeln!(text, "{x:.4} {p:.6}");
            }
            emit(opts, &text)
        }
        Cmd::Simulate => {
            let plan = build_plan(opts, &cfg)?;
            if plan.pilot == PilotKind::None && plan.csi == CsiMode::Estimated {
                return Err(Error::Config("estimated CSI needs a pilot".into()));
            }
            let mut rows = Simulator::new(plan.clone())?.run()?.rows;
            if opts.no_wall_time {
                rows.iter_mut().for_each(|r| r.wall_time_s = 0.0);
            }
            match &opts.out {
                Some(p) => append_csv(p, &plan, &rows)?,
                None => {
                    let mut text = format!("{CSV_HEADER}\n");
                    for r in &rows {
                        let _ = writeln!(text, "{}", r.to_csv());
                    }
                    stdout(&text)?;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
