//! System numerology: raw parameters, derived integers, presets and
//! spectral-efficiency arithmetic.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::{Error, Result};

/// Speed of light in km/h.
pub const C0_KMH: f64 = 1.079_252_849e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Uw,
    Cp,
}

/// User-facing parameters. Everything marked optional has a default derived
/// from the rest.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNumerology {
    pub variant: Variant,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub delta_f: f64,
    pub tau_m: f64,
    pub f0: f64,
    pub v_max: f64,
    pub k_b: u32,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub m_cp: Option<usize>,
    #[serde(default)]
    pub m_gi: Option<usize>,
    #[serde(default)]
    pub m_b: Option<usize>,
    #[serde(default)]
    pub m_g: Option<usize>,
    #[serde(default)]
    pub m_ce: Option<usize>,
    #[serde(default)]
    pub m_ce_offset: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Numerology {
    raw: RawNumerology,
    pub variant: Variant,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub m_prime: usize,
    pub delta_f: f64,
    pub alpha: f64,
    pub m_alpha: usize,
    pub m_s: usize,
    pub m_b: usize,
    /// CP length; 0 for UW.
    pub m_cp: usize,
    /// Guard-interval length; 0 for CP.
    pub m_gi: usize,
    /// Pilot guard rows, CE extraction rows and their offset; 0 for UW.
    pub m_g: usize,
    pub m_ce: usize,
    pub m_ce_offset: usize,
    pub f0: f64,
    pub tau_m: f64,
    pub v_max: f64,
    pub nu_max: f64,
    pub l_prime: usize,
    pub m_h: usize,
    /// UW extraction offset; 0 for CP.
    pub k_h: usize,
    pub m_x_prime: usize,
    pub k_b: u32,
}

pub fn nu_max_from_velocity(v_kmh: f64, f0: f64) -> f64 {
    v_kmh * f0 / C0_KMH
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Numerology {
    pub fn derive(raw: &RawNumerology) -> Result<Self> {
        let r = raw;
        if !r.m.is_power_of_two() || !r.n.is_power_of_two() {
            return Err(cfg_err(format!("M = {} and N = {} must be powers of two", r.m, r.n)));
        }
        if r.q < 1 {
            return Err(cfg_err("Q >= 1 violated"));
        }
        if !(r.delta_f > 0.0) {
            return Err(cfg_err("delta_f > 0 violated"));
        }
        if !(r.tau_m >= 0.0) || !(r.f0 > 0.0) || !(r.v_max >= 0.0) {
            return Err(cfg_err("tau_m >= 0, f0 > 0 and v_max >= 0 required"));
        }
        if ![2, 4, 6].contains(&r.k_b) {
            return Err(cfg_err(format!("k_b = {} is not one of 2, 4, 6", r.k_b)));
        }
        let m_prime = r.m * r.q;
        let l_prime = (r.tau_m * m_prime as f64 * r.delta_f).round() as usize + 1;
        let nu_max = nu_max_from_velocity(r.v_max, r.f0);

        let mut out = Numerology {
            raw: raw.clone(),
            variant: r.variant,
            m: r.m,
            n: r.n,
            q: r.q,
            m_prime,
            delta_f: r.delta_f,
            alpha: 0.0,
            m_alpha: 0,
            m_s: 0,
            m_b: 0,
            m_cp: 0,
            m_gi: 0,
            m_g: 0,
            m_ce: 0,
            m_ce_offset: 0,
            f0: r.f0,
            tau_m: r.tau_m,
            v_max: r.v_max,
            nu_max,
            l_prime,
            m_h: 0,
            k_h: 0,
            m_x_prime: m_prime,
            k_b: r.k_b,
        };

        match r.variant {
            Variant::Cp => {
                if !(0.0..=1.0).contains(&r.alpha) {
                    return Err(cfg_err(format!("0 <= alpha <= 1 violated (alpha = {})", r.alpha)));
                }
                if r.m_gi.is_some() {
                    return Err(cfg_err("m_gi only applies to the UW variant"));
                }
                let m_cp = r.m_cp.unwrap_or(l_prime - 1);
                if m_cp < l_prime - 1 {
                    return Err(cfg_err(format!("M_cp >= L'-1 violated ({m_cp} < {})", l_prime - 1)));
                }
                let m_alpha = (r.alpha * r.m as f64 / 2.0).floor() as usize;
                let m_g = r.m_g.ok_or_else(|| cfg_err("CP variant needs m_g"))?;
                let m_ce = r.m_ce.ok_or_else(|| cfg_err("CP variant needs m_ce"))?;
                let m_ce_offset = r.m_ce_offset.ok_or_else(|| cfg_err("CP variant needs m_ce_offset"))?;
                if !(m_ce <= m_g && m_g <= r.m) {
                    return Err(cfg_err(format!("M_ce <= M_g <= M violated ({m_ce}, {m_g}, {})", r.m)));
                }
                if m_ce_offset + m_ce > r.m {
                    return Err(cfg_err("m_ce + M_ce <= M violated"));
                }
                out.alpha = r.alpha;
                out.m_alpha = m_alpha;
                out.m_s = r.m + 2 * m_alpha;
                out.m_cp = m_cp;
                out.m_h = m_cp + 1;
                out.m_x_prime = m_prime + m_cp;
                out.m_g = m_g;
                out.m_ce = m_ce;
                out.m_ce_offset = m_ce_offset;
            }
            Variant::Uw => {
                if r.m_cp.is_some() || r.m_g.is_some() || r.m_ce.is_some() || r.m_ce_offset.is_some() {
                    return Err(cfg_err("m_cp, m_g, m_ce and m_ce_offset only apply to the CP variant"));
                }
                if r.alpha != 0.0 {
                    return Err(cfg_err("alpha only applies to the CP variant"));
                }
                let m_gi = r.m_gi.unwrap_or(2 * l_prime - 1);
                if m_gi.is_multiple_of(2) {
                    return Err(cfg_err(format!("M_gi must be odd (got {m_gi})")));
                }
                if m_gi < 2 * l_prime - 1 {
                    return Err(cfg_err(format!("M_gi >= 2L'-1 violated ({m_gi} < {})", 2 * l_prime - 1)));
                }
                out.m_gi = m_gi;
                out.m_h = m_gi.div_ceil(2);
                out.k_h = m_prime - out.m_h;
                out.m_s = r.m + m_gi;
            }
        }
        if out.m_s > m_prime {
            return Err(cfg_err(format!("M_s <= M' violated ({} > {m_prime})", out.m_s)));
        }
        out.m_b = r.m_b.unwrap_or(out.m_s);
        if !(r.m <= out.m_b && out.m_b <= m_prime) {
            return Err(cfg_err(format!("M <= M_b <= M' violated (M_b = {})", out.m_b)));
        }
        Ok(out)
    }

    pub fn raw(&self) -> &RawNumerology {
        &self.raw
    }

    /// Same system with a different maximum velocity.
    pub fn with_velocity(&self, v_kmh: f64) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.v_max = v_kmh;
        Self::derive(&raw)
    }

    pub fn with_m_b(&self, m_b: usize) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.m_b = Some(m_b);
        Self::derive(&raw)
    }

    /// Guard bins of the embedded pilot, M_g·N (0 for UW).
    pub fn m0(&self) -> usize {
        self.m_g * self.n
    }

    /// Bits carried per oversampled delay-domain sample.
    pub fn bits_per_sample(&self) -> f64 {
        let kb = self.k_b as f64;
        match self.variant {
            Variant::Uw => kb * self.m as f64 / self.m_prime as f64,
            Variant::Cp => {
                kb * (self.m * self.n - self.m0()) as f64 / (self.n * self.m_prime) as f64
            }
        }
    }
}

const PRESETS: &str = include_str!("presets.toml");

/// The four published system configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemId {
    Uw,
    CpStar,
    CpStar2,
    CpStar3,
}

impl SystemId {
    pub const ALL: [SystemId; 4] = [SystemId::Uw, SystemId::CpStar, SystemId::CpStar2, SystemId::CpStar3];

    pub fn label(self) -> &'static str {
        match self {
            SystemId::Uw => "UW",
            SystemId::CpStar => "CP*",
            SystemId::CpStar2 => "CP**",
            SystemId::CpStar3 => "CP***",
        }
    }

    fn key(self) -> &'static str {
        match self {
            SystemId::Uw => "uw",
            SystemId::CpStar => "cp*",
            SystemId::CpStar2 => "cp**",
            SystemId::CpStar3 => "cp***",
        }
    }

    pub fn raw(self) -> RawNumerology {
        let mut table: HashMap<String, RawNumerology> =
            toml::from_str(PRESETS).expect("embedded preset table parses");
        table.remove(self.key()).expect("every system has a preset")
    }

    pub fn numerology(self) -> Numerology {
        Numerology::derive(&self.raw()).expect("preset numerology is valid")
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uw" => Ok(SystemId::Uw),
            "cp*" | "cp1" => Ok(SystemId::CpStar),
            "cp**" | "cp2" => Ok(SystemId::CpStar2),
            "cp***" | "cp3" => Ok(SystemId::CpStar3),
            _ => Err(cfg_err(format!("unknown system '{s}' (expected UW, CP*, CP** or CP***)"))),
        }
    }
}

pub fn presets() -> Vec<(SystemId, Numerology)> {
    SystemId::ALL.iter().map(|&s| (s, s.numerology())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEfficiency {
    pub t_tx: f64,
    pub r_s: f64,
    pub bw: f64,
    pub eta: f64,
}

pub fn spectral_efficiency(n: &Numerology, k_b: u32) -> SpectralEfficiency {
    let (t_tx, payload) = match n.variant {
        Variant::Uw => (n.n as f64 / n.delta_f, (n.m * n.n) as f64),
        Variant::Cp => (
            (n.m_prime + n.m_cp) as f64 * n.n as f64 / (n.m_prime as f64 * n.delta_f),
            ((n.m - n.m_g) * n.n) as f64,
        ),
    };
    let r_s = payload / t_tx;
    let bw = n.delta_f * n.m_s as f64;
    SpectralEfficiency { t_tx, r_s, bw, eta: k_b as f64 * r_s / bw }
}

/// Table of BW, T_tx, R_s and η for the given systems. T_tx is rounded up
/// to 0.1 µs and the symbol rate is derived from that rounded duration, the
/// convention used by the published numerology table.
pub fn numerology_report(systems: &[(String, Numerology)]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("delta_f [kHz]".into(), vec![]),
        ("M [-]".into(), vec![]),
        ("M_g, M_ce, m_ce [-]".into(), vec![]),
        ("M_alpha [-]".into(), vec![]),
        ("M_s [-]".into(), vec![]),
        ("BW [MHz]".into(), vec![]),
        ("T_tx [us]".into(), vec![]),
        ("R_s [kBd]".into(), vec![]),
        ("eta [bit/s/Hz]".into(), vec![]),
    ];
    for (_, n) in systems {
        let se = spectral_efficiency(n, n.k_b);
        let t_us = (se.t_tx * 1e7 - 1e-6).ceil() / 10.0;
        let payload = match n.variant {
            Variant::Uw => n.m * n.n,
            Variant::Cp => (n.m - n.m_g) * n.n,
        } as f64;
        let r_s = payload / (t_us * 1e-6);
        let cp = n.variant == Variant::Cp;
        let cells = [
            format!("{:.1}", n.delta_f / 1e3),
            n.m.to_string(),
            if cp { format!("{},{},{}", n.m_g, n.m_ce, n.m_ce_offset) } else { "-".into() },
            if cp { n.m_alpha.to_string() } else { "-".into() },
            n.m_s.to_string(),
            format!("{:.3}", se.bw / 1e6),
            format!("{t_us:.1}"),
            format!("{:.1}", r_s / 1e3),
            format!("{:.3}", n.k_b as f64 * r_s / se.bw),
        ];
        for (row, cell) in rows.iter_mut().zip(cells) {
            row.1.push(cell);
        }
    }
    let mut out = format!("{:<22}", "parameter");
    for (name, _) in systems {
        out.push_str(&format!("{name:>10}"));
    }
    out.push('\n');
    for (name, cells) in rows {
        out.push_str(&format!("{name:<22}"));
        for c in cells {
            out.push_str(&format!("{c:>10}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotKind {
    EmbeddedImpulse,
    DiracUw,
    ChirpedDirichletUw,
    None,
}

impl FromStr for PilotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "embedded" | "embedded-impulse" => Ok(PilotKind::EmbeddedImpulse),
            "dirac" | "dirac-uw" => Ok(PilotKind::DiracUw),
            "uw" | "chirped" | "chirped-dirichlet-uw" => Ok(PilotKind::ChirpedDirichletUw),
            "none" => Ok(PilotKind::None),
            _ => Err(cfg_err(format!("unknown pilot '{s}' (expected dirac, uw, embedded or none)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PilotConfig {
    pub kind: PilotKind,
    pub sigma_u_sq: f64,
    pub rho0_sq: f64,
    pub p0: usize,
    pub q0: usize,
    pub m0: usize,
}

impl PilotConfig {
    /// Pilot with default position; the embedded pilot's energy is matched
    /// to the UW pilot fraction `sigma_u_sq`.
    pub fn new(n: &Numerology, kind: PilotKind, sigma_u_sq: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma_u_sq) {
            return Err(cfg_err(format!("0 <= sigma_u^2 < 1 violated ({sigma_u_sq})")));
        }
        let m0 = n.m0();
        let mut pc = PilotConfig { kind, sigma_u_sq, rho0_sq: 0.0, p0: 0, q0: 0, m0 };
        match (kind, n.variant) {
            (PilotKind::EmbeddedImpulse, Variant::Cp) => {
                if m0 == 0 {
                    return Err(cfg_err("embedded pilot needs M_g >= 1"));
                }
                pc.p0 = (n.m_g - 1) / 2;
                pc.q0 = n.n / 2 - 1;
                pc.rho0_sq = rho0_sq_for(sigma_u_sq, n.m * n.n, m0);
            }
            (PilotKind::DiracUw | PilotKind::ChirpedDirichletUw, Variant::Uw) => {}
            (PilotKind::None, _) => pc.sigma_u_sq = 0.0,
            (k, v) => return Err(cfg_err(format!("pilot {k:?} is not available for {v:?}"))),
        }
        Ok(pc)
    }
}

/// Embedded pilot energy that matches a UW pilot fraction.
pub fn rho0_sq_for(sigma_u_sq: f64, mn: usize, m0: usize) -> f64 {
    sigma_u_sq / (1.0 - sigma_u_sq) * (mn as f64 / m0 as f64 - 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BemConfig {
    pub n_nu: f64,
    pub grid: Vec<f64>,
}

impl BemConfig {
    pub fn new(n: usize, n_nu: f64) -> Result<Self> {
        if !(n_nu > 0.0) || !n_nu.is_finite() {
            return Err(cfg_err(format!("BEM rate must be positive (got {n_nu})")));
        }
        let c = (n as f64 - 1.0) / 2.0;
        Ok(Self { n_nu, grid: (0..n).map(|k| k as f64 - c).collect() })
    }
}

pub fn default_bem_rate(delta_f: f64, nu_max: f64) -> Result<f64> {
    if !(nu_max > 0.0) {
        return Err(cfg_err("static channel (nu_max = 0) has no BEM rate"));
    }
    Ok(delta_f / (2.0 * nu_max))
}
