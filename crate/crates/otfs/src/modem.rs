//! Common receiver vocabulary and a dynamic front for both modems.

use crate::channel::ChannelRealization;
use crate::cp::CpSystem;
use crate::detection::EcmSet;
use crate::numerics::ComplexMatrix;
use crate::numerology::{BemConfig, Numerology, PilotConfig, Variant};
use crate::uw::UwSystem;
use crate::{Result, C64};

#[derive(Clone, Copy, Debug)]
pub enum Csi<'a> {
    Perfect(&'a ChannelRealization),
    Estimated,
}

#[derive(Clone, Debug)]
pub struct RxOutput {
    /// DD-domain symbol estimates, M×N.
    pub d: ComplexMatrix,
    /// Estimated BEM coefficients (estimated-CSI mode only).
    pub h_ce: Option<ComplexMatrix>,
    /// ECMs the detector used, reduced to M_b rows.
    pub ecm: EcmSet,
}

/// Transmit stream plus the absolute time index of its first sample.
#[derive(Clone, Debug)]
pub struct TxSignal {
    pub samples: Vec<C64>,
    pub origin: i64,
}

pub enum Modem {
    Cp(CpSystem),
    Uw(UwSystem),
}

impl Modem {
    pub fn new(num: Numerology, pilot: PilotConfig, bem: BemConfig) -> Result<Self> {
        Ok(match num.variant {
            Variant::Cp => Modem::Cp(CpSystem::new(num, pilot, bem)?),
            Variant::Uw => Modem::Uw(UwSystem::new(num, pilot, bem)?),
        })
    }

    pub fn numerology(&self) -> &Numerology {
        match self {
            Modem::Cp(s) => &s.num,
            Modem::Uw(s) => &s.num,
        }
    }

    /// Row-major M×N indicator of DD bins carrying data.
    pub fn data_mask(&self) -> Vec<bool> {
        match self {
            Modem::Cp(s) => s.data_mask(),
            Modem::Uw(s) => vec![true; s.num.m * s.num.n],
        }
    }

    pub fn data_count(&self) -> usize {
        self.data_mask().iter().filter(|&&b| b).count()
    }

    pub fn transmit(&self, data: &[C64]) -> Result<TxSignal> {
        match self {
            Modem::Cp(s) => s.transmit(data),
            Modem::Uw(s) => s.transmit(data),
        }
    }

    /// The pilot alone as it leaves the transmitter (None without pilot).
    pub fn pilot_signal(&self) -> Result<Option<TxSignal>> {
        match self {
            Modem::Cp(s) => s.pilot_signal(),
            Modem::Uw(s) => Ok(s.pilot_signal()),
        }
    }

    pub fn receive(
        &self,
        r: &[C64],
        sigma_w_sq: f64,
        csi: Csi<'_>,
        cancel: Option<&[C64]>,
    ) -> Result<RxOutput> {
        match self {
            Modem::Cp(s) => s.receive(r, sigma_w_sq, csi, cancel),
            Modem::Uw(s) => s.receive(r, sigma_w_sq, csi, cancel),
        }
    }

    pub fn perfect_ecms(&self, ch: &ChannelRealization) -> Result<EcmSet> {
        match self {
            Modem::Cp(s) => s.perfect_ecms(ch),
            Modem::Uw(s) => s.perfect_ecms(ch),
        }
    }
}
