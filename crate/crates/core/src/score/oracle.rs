use super::{NfeCounter, ScoreModel};
use crate::error::Result;
use crate::sde::{self, SdeParams};
use crate::spectrogram::ComplexSpectrogram;

/// The exact conditional score of the perturbation kernel.
///
/// It knows the clean target, so it is only useful for validating solvers
/// and for self-consistency runs, never as an enhancement method.
#[derive(Debug, Clone)]
pub struct AnalyticOracle {
    x0_ref: ComplexSpectrogram,
    sde: SdeParams,
    counter: NfeCounter,
}

impl AnalyticOracle {
    pub fn new(x0_ref: ComplexSpectrogram, sde: SdeParams) -> Self {
        Self {
            x0_ref,
            sde,
            counter: NfeCounter::default(),
        }
    }

    pub fn x0_ref(&self) -> &ComplexSpectrogram {
        &self.x0_ref
    }
}

impl ScoreModel for AnalyticOracle {
    fn evaluate(&self, xt: &ComplexSpectrogram, y: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        self.counter.bump();
        sde::kernel_score(xt, &self.x0_ref, y, t, &self.sde)
    }

    fn nfe(&self) -> u64 {
        self.counter.get()
    }
}

/// Returns zeros; used for NFE dry runs and degenerate-case tests.
#[derive(Debug, Default, Clone)]
pub struct ZeroScore {
    counter: NfeCounter,
}

impl ScoreModel for ZeroScore {
    fn evaluate(&self, xt: &ComplexSpectrogram, y: &ComplexSpectrogram, _t: f64) -> Result<ComplexSpectrogram> {
        self.counter.bump();
        xt.check_same_shape(y)?;
        Ok(ComplexSpectrogram::zeros(xt.freqs(), xt.frames()))
    }

    fn nfe(&self) -> u64 {
        self.counter.get()
    }
}
