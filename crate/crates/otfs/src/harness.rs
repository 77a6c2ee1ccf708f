//! Monte Carlo runs: per-realization seeding, BER/NMSE aggregation and CSV
//! persistence.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{apply_ltv_at, awgn_variance, complex_normal, sample_channel};
use crate::detection::{demap, nmse, QamMapping};
use crate::modem::{Csi, Modem};
use crate::numerology::{default_bem_rate, BemConfig, Numerology, PilotConfig, PilotKind, SystemId, Variant};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsiMode {
    Perfect,
    Estimated,
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" => Ok(CsiMode::Perfect),
            "estimated" => Ok(CsiMode::Estimated),
            _ => Err(Error::Config(format!("unknown CSI mode '{s}' (expected perfect or estimated)"))),
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Estimated => "estimated",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationPlan {
    pub system: String,
    /// Base numerology; `velocity` overrides its v_max.
    pub numerology: Numerology,
    pub ebn0_db: Vec<f64>,
    pub velocity: f64,
    pub realizations: usize,
    pub seed: u64,
    pub pilot: PilotKind,
    pub sigma_u_sq: f64,
    /// GCE-BEM rate; `None` picks the per-velocity default.
    pub bem_rate: Option<f64>,
    pub csi: CsiMode,
    pub cancel_pilot: bool,
    pub paths: usize,
}

/// Estimated CSI needs a pilot; perfect CSI runs without one.
pub fn default_pilot(variant: Variant, csi: CsiMode) -> PilotKind {
    match (csi, variant) {
        (CsiMode::Perfect, _) => PilotKind::None,
        (CsiMode::Estimated, Variant::Uw) => PilotKind::ChirpedDirichletUw,
        (CsiMode::Estimated, Variant::Cp) => PilotKind::EmbeddedImpulse,
    }
}

/// Tuned rates at 200 and 400 km/h, the analytic optimum elsewhere.
pub fn bem_rate_for(n: &Numerology, velocity: f64) -> Result<f64> {
    let tuned = match n.variant {
        Variant::Uw => [7.0, 3.5],
        Variant::Cp => [6.0, 3.0],
    };
    if velocity == 200.0 {
        Ok(tuned[0])
    } else if velocity == 400.0 {
        Ok(tuned[1])
    } else {
        default_bem_rate(n.delta_f, crate::numerology::nu_max_from_velocity(velocity, n.f0))
    }
}

impl SimulationPlan {
    pub fn preset(id: SystemId) -> Self {
        let numerology = id.numerology();
        SimulationPlan {
            system: id.label().to_string(),
            pilot: default_pilot(numerology.variant, CsiMode::Estimated),
            numerology,
            ebn0_db: vec![28.0],
            velocity: 400.0,
            realizations: 400,
            seed: 0,
            sigma_u_sq: 0.5,
            bem_rate: None,
            csi: CsiMode::Estimated,
            cancel_pilot: false,
            paths: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 || self.ebn0_db.is_empty() || self.paths == 0 {
            return Err(Error::Config("realizations, paths and the Eb/N0 grid must be nonempty".into()));
        }
        if self.ebn0_db.iter().any(|x| x.is_nan()) || !(self.velocity >= 0.0) {
            return Err(Error::Config("Eb/N0 values and velocity must be numbers, velocity >= 0".into()));
        }
        if self.csi == CsiMode::Estimated && self.pilot == PilotKind::None {
            return Err(Error::Config("estimated CSI needs a pilot".into()));
        }
        Ok(())
    }

    pub fn resolved_bem_rate(&self) -> Result<f64> {
        match self.bem_rate {
            Some(r) => Ok(r),
            None => bem_rate_for(&self.numerology, self.velocity),
        }
    }

    /// One-line description for result files.
    pub fn describe(&self) -> String {
        let rate = self.resolved_bem_rate().map(|r| r.to_string()).unwrap_or_else(|_| "n/a".into());
        let grid: Vec<String> = self.ebn0_db.iter().map(|x| x.to_string()).collect();
        format!(
            "system={} ebn0_db={} velocity={} realizations={} seed={} csi={} pilot={:?} sigma_u_sq={} \
             bem_rate={} cancel_pilot={} paths={} M={} N={} Q={} M_b={}",
            self.system,
            grid.join(";"),
            self.velocity,
            self.realizations,
            self.seed,
            self.csi,
            self.pilot,
            self.sigma_u_sq,
            rate,
            self.cancel_pilot,
            self.paths,
            self.numerology.m,
            self.numerology.n,
            self.numerology.q,
            self.numerology.m_b,
        )
    }
}

/// Per-realization counts, one entry per Eb/N0 point.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationOutcome {
    pub bit_errors: Vec<u64>,
    pub bits: u64,
    /// Linear NMSE; 0 with perfect CSI.
    pub nmse: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub system: String,
    pub ebn0_db: f64,
    pub velocity: f64,
    pub realizations: usize,
    pub ber: f64,
    pub nmse_db: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

pub const CSV_HEADER: &str = "system,ebn0_db,velocity,realizations,ber,nmse_db,seed,wall_time_s";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{},{},{:.3}",
            self.system, self.ebn0_db, self.velocity, self.realizations, self.ber, self.nmse_db, self.seed, self.wall_time_s
        )
    }
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub rows: Vec<ResultRow>,
    pub realizations: Vec<RealizationOutcome>,
}

/// A plan with its modem and mapping built once and shared by all workers.
pub struct Simulator {
    plan: SimulationPlan,
    num: Numerology,
    modem: Modem,
    mapping: QamMapping,
    mask: Vec<bool>,
}

impl Simulator {
    pub fn new(plan: SimulationPlan) -> Result<Self> {
        plan.validate()?;
        let num = plan.numerology.with_velocity(plan.velocity)?;
        let pilot = PilotConfig::new(&num, plan.pilot, plan.sigma_u_sq)?;
        // the BEM only matters with a pilot; any positive rate will do otherwise
        let rate = match plan.resolved_bem_rate() {
            Ok(r) => r,
            Err(_) if plan.pilot == PilotKind::None => 1.0,
            Err(e) => return Err(e),
        };
        let bem = BemConfig::new(num.n, rate)?;
        let modem = Modem::new(num.clone(), pilot, bem)?;
        let mapping = QamMapping::new(1 << num.k_b)?;
        let mask = modem.data_mask();
        Ok(Self { plan, num, modem, mapping, mask })
    }

    pub fn plan(&self) -> &SimulationPlan {
        &self.plan
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    pub fn run_realization(&self, index: usize) -> Result<RealizationOutcome> {
        let num = &self.num;
        let mut rng = ChaCha8Rng::seed_from_u64(self.plan.seed);
        rng.set_stream(index as u64);
        let ch = sample_channel(&mut rng, self.plan.paths, num.l_prime, num.nu_max, num.delta_f);
        let count = self.mask.iter().filter(|&&b| b).count();
        let bits: Vec<u8> = (0..count * self.mapping.bits_per_symbol()).map(|_| rng.random_range(0..2u8)).collect();
        let tx = self.modem.transmit(&self.mapping.map(&bits)?)?;
        let clean = apply_ltv_at(&tx.samples, tx.origin, &ch, num.m_prime);
        let p_s = clean.iter().map(|x| x.norm_sqr()).sum::<f64>() / clean.len() as f64;
        let noise: Vec<C64> = (0..clean.len()).map(|_| complex_normal(&mut rng)).collect();

        let cancel = if self.plan.cancel_pilot {
            self.modem.pilot_signal()?.map(|p| apply_ltv_at(&p.samples, p.origin, &ch, num.m_prime))
        } else {
            None
        };
        let perfect = match self.plan.csi {
            CsiMode::Estimated => Some(self.modem.perfect_ecms(&ch)?),
            CsiMode::Perfect => None,
        };

        let mut out = RealizationOutcome { bit_errors: vec![], bits: bits.len() as u64, nmse: vec![] };
        for &db in &self.plan.ebn0_db {
            let sigma_w_sq = awgn_variance(p_s, num.bits_per_sample(), 10f64.powf(db / 10.0))?;
            let sd = sigma_w_sq.sqrt();
            let r: Vec<C64> = clean.iter().zip(&noise).map(|(c, w)| c + w * sd).collect();
            let csi = match self.plan.csi {
                CsiMode::Perfect => Csi::Perfect(&ch),
                CsiMode::Estimated => Csi::Estimated,
            };
            let rx = self.modem.receive(&r, sigma_w_sq, csi, cancel.as_deref())?;
            let decided = demap(&rx.d, &self.mapping, &self.mask)?;
            out.bit_errors.push(decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64);
            out.nmse.push(match &perfect {
                Some(p) => nmse(p, &rx.ecm)?,
                None => 0.0,
            });
        }
        Ok(out)
    }

    /// All realizations in parallel, reduced in index order.
    pub fn run(&self) -> Result<PlanOutcome> {
        let start = Instant::now();
        let realizations: Vec<RealizationOutcome> =
            (0..self.plan.realizations).into_par_iter().map(|i| self.run_realization(i)).collect::<Result<_>>()?;
        let wall = start.elapsed().as_secs_f64();
        let rows = self
            .plan
            .ebn0_db
            .iter()
            .enumerate()
            .map(|(k, &db)| {
                let errors: u64 = realizations.iter().map(|o| o.bit_errors[k]).sum();
                let bits: u64 = realizations.iter().map(|o| o.bits).sum();
                let j = realizations.iter().map(|o| o.nmse[k]).sum::<f64>() / realizations.len() as f64;
                ResultRow {
                    system: self.plan.system.clone(),
                    ebn0_db: db,
                    velocity: self.plan.velocity,
                    realizations: self.plan.realizations,
                    ber: errors as f64 / bits as f64,
                    nmse_db: 10.0 * j.log10(),
                    seed: self.plan.seed,
                    wall_time_s: wall,
                }
            })
            .collect();
        Ok(PlanOutcome { rows, realizations })
    }
}

/// Which part of the transmit signal to synthesize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Data,
    Pilot,
    Both,
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "data" => Ok(Component::Data),
            "pilot" => Ok(Component::Pilot),
            "both" => Ok(Component::Both),
            _ => Err(Error::Config(format!("unknown component '{s}' (expected data, pilot or both)"))),
        }
    }
}

/// `count` transmit frames of the plan's system, frame `i` drawn from the
/// same stream as realization `i`. Also returns the delay block length.
pub fn transmit_frames(plan: &SimulationPlan, component: Component, count: usize) -> Result<(Vec<Vec<C64>>, usize)> {
    let mut p = plan.clone();
    p.csi = CsiMode::Perfect;
    match component {
        Component::Data => p.pilot = PilotKind::None,
        Component::Pilot | Component::Both if p.pilot == PilotKind::None => {
            return Err(Error::Config("pilot component requested without a pilot".into()));
        }
        _ => {}
    }
    let sim = Simulator::new(p)?;
    let count_sym = sim.mask.iter().filter(|&&b| b).count();
    let frames = (0..count)
        .into_par_iter()
        .map(|i| {
            let data = if component == Component::Pilot {
                vec![C64::new(0.0, 0.0); count_sym]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(sim.plan.seed);
                rng.set_stream(i as u64);
                let bits: Vec<u8> =
                    (0..count_sym * sim.mapping.bits_per_symbol()).map(|_| rng.random_range(0..2u8)).collect();
                sim.mapping.map(&bits)?
            };
            Ok(sim.modem.transmit(&data)?.samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, sim.num.m_x_prime))
}

pub fn run_plan(plan: &SimulationPlan) -> Result<PlanOutcome> {
    Simulator::new(plan.clone())?.run()
}

/// Appends rows to `path`, writing the header if the file is new or empty.
/// Each batch is preceded by a `# plan:` comment.
pub fn append_csv(path: &Path, plan: &SimulationPlan, rows: &[ResultRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut text = String::new();
    if fresh {
        text.push_str(CSV_HEADER);
        text.push('\n');
    }
    text.push_str(&format!("# plan: {}\n", plan.describe()));
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    f.write_all(text.as_bytes())?;
    Ok(())
}
