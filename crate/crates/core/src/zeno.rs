//! The chained-Zeno protocol engine.
//!
//! A routine of `N'` small rotations on the subroutine switch, each followed
//! by a subroutine of `N` small rotations on the computer switch with a
//! computer insertion and an output measurement per step. Intermediate
//! measurements are handled by exact post-selection on the success record;
//! the final switch measurement returns both branches.

use alloc::collections::BTreeMap;
use alloc::format;

use core::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::qstate::{BasisLabel, PureState, Register, Unitary2};

/// Protocol flavour. `Modified` inserts the computer twice per subroutine
/// step with a sign change of the `|111⟩` term between the insertions; the
/// second insertion runs the inverse computation, which coincides with the
/// forward one for the bit-setting computer used here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Standard,
    Modified,
}

/// Tally-register behaviour at computer insertions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TallyMode {
    /// No tally register.
    None,
    /// Increment by one whenever the computer runs (switch on).
    AllRuns,
    /// Increment only when the computer output is 1.
    OnlyOutput1,
    /// Increment by `stage + 1` so distinct insertion patterns leave
    /// distinct register values.
    StageDependent,
}

impl TallyMode {
    pub(crate) fn increment(self, x: bool, stage: u64) -> u64 {
        match self {
            TallyMode::None => 0,
            TallyMode::AllRuns => 1,
            TallyMode::OnlyOutput1 => u64::from(x),
            TallyMode::StageDependent => stage + 1,
        }
    }
}

/// Full parameter set for a protocol run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    pub n: u32,
    pub nprime: u32,
    pub variant: Variant,
    /// The true computer output `x`.
    pub computer_output: bool,
    /// Decoherence strength of the noisy computer; 0 for the ideal device.
    pub epsilon: f64,
    pub tally: TallyMode,
}

impl ProtocolParams {
    pub fn new(n: u32, nprime: u32) -> Result<Self> {
        if n == 0 || nprime == 0 {
            return Err(Error::InvalidParameter(format!(
                "step counts must be positive (got N={n}, N'={nprime})"
            )));
        }
        Ok(ProtocolParams {
            n,
            nprime,
            variant: Variant::Standard,
            computer_output: false,
            epsilon: 0.0,
            tally: TallyMode::None,
        })
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_output(mut self, x: bool) -> Self {
        self.computer_output = x;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in [0, 1] (got {epsilon})"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_tally(mut self, tally: TallyMode) -> Self {
        self.tally = tally;
        self
    }

    /// Subroutine rotation angle, `N·θ = π/2` by construction.
    pub fn theta(&self) -> f64 {
        FRAC_PI_2 / self.n as f64
    }

    /// Routine rotation angle, `N'·θ' = π/2` by construction.
    pub fn theta_prime(&self) -> f64 {
        FRAC_PI_2 / self.nprime as f64
    }

    /// Computer insertions per subroutine step.
    pub fn insertions_per_step(&self) -> u32 {
        match self.variant {
            Variant::Standard => 1,
            Variant::Modified => 2,
        }
    }

    /// Total number of computer insertions in a full run.
    pub fn total_insertions(&self) -> u64 {
        u64::from(self.n) * u64::from(self.nprime) * u64::from(self.insertions_per_step())
    }
}

/// Outcome of a post-selected run: probabilities of the success record `m`
/// followed by each final switch outcome, the leftover failure mass, and
/// the un-renormalised post-selected final states.
#[derive(Clone, Debug)]
pub struct ProtocolResult {
    /// `P(m, m₀ | x)`.
    pub p_success_0: f64,
    /// `P(m, m₁ | x)`.
    pub p_success_1: f64,
    /// Probability that some intermediate measurement deviated from `m`.
    pub p_fail: f64,
    /// Post-selected states for final outcomes 0 and 1; their squared norms
    /// equal the corresponding success probabilities.
    pub final_states: [PureState; 2],
}

/// [`ProtocolResult`] plus the tally-register distribution given success.
#[derive(Clone, Debug)]
pub struct TallyRunResult {
    pub result: ProtocolResult,
    /// `P(tally = t | m)`, marginalised over the final switch outcome.
    pub tally_given_success: BTreeMap<u64, f64>,
}

/// One computer insertion in overwrite form: labels with the computer
/// switch on get their output register set to `x` and the tally updated.
/// Other labels pass through.
///
/// This is the insertion used by the standard variant; on states whose
/// switch-on labels hold a cleared output register it coincides with
/// [`insert_computer_reversible`].
pub fn insert_computer(state: &PureState, x: bool, tally: TallyMode, stage: u64) -> PureState {
    let inc = tally.increment(x, stage);
    let mut out = PureState::zero();
    for (&label, &amp) in state.terms() {
        if label.q2 {
            let mut l = label.with_bit(Register::Q3, x);
            l.tally += inc;
            out.add_term(l, amp);
        } else {
            out.add_term(label, amp);
        }
    }
    out
}

/// One computer insertion in reversible form: the output value is XORed
/// into the output register on switch-on labels. Self-inverse, so it also
/// serves as the inverse computation at the modified variant's second
/// insertion.
pub fn insert_computer_reversible(
    state: &PureState,
    x: bool,
    tally: TallyMode,
    stage: u64,
) -> PureState {
    let inc = tally.increment(x, stage);
    let mut out = PureState::zero();
    for (&label, &amp) in state.terms() {
        if label.q2 {
            let mut l = label.with_bit(Register::Q3, label.q3 ^ x);
            l.tally += inc;
            out.add_term(l, amp);
        } else {
            out.add_term(label, amp);
        }
    }
    out
}

pub(crate) fn insertion_for(
    variant: Variant,
    state: &PureState,
    x: bool,
    tally: TallyMode,
    stage: u64,
) -> PureState {
    match variant {
        Variant::Standard => insert_computer(state, x, tally, stage),
        Variant::Modified => insert_computer_reversible(state, x, tally, stage),
    }
}

/// Multiplies the amplitude of every `|111⟩`-sector label by −1.
pub(crate) fn pi_sign_flip(state: &PureState) -> PureState {
    PureState::from_terms(state.terms().map(|(l, a)| {
        if l.q1 && l.q2 && l.q3 {
            (*l, -*a)
        } else {
            (*l, *a)
        }
    }))
}

/// Applies the unitary part of one subroutine step (rotation plus
/// insertion pattern) without measuring.
pub(crate) fn subroutine_step_unitary(
    state: &PureState,
    params: &ProtocolParams,
    step: u32,
) -> Result<PureState> {
    let rotation = Unitary2::rotation(params.theta());
    let mut state = state.apply_one_qubit(Register::Q2, &rotation, |l| l.q1)?;
    let x = params.computer_output;
    match params.variant {
        Variant::Standard => {
            state = insertion_for(Variant::Standard, &state, x, params.tally, u64::from(step));
        }
        Variant::Modified => {
            let stage = 2 * u64::from(step);
            state = insertion_for(Variant::Modified, &state, x, params.tally, stage);
            state = pi_sign_flip(&state);
            state = insertion_for(Variant::Modified, &state, x, params.tally, stage + 1);
        }
    }
    Ok(state)
}

/// Runs one subroutine step on an ideal computer and returns both
/// output-measurement branches with their probabilities.
///
/// `step` is the global subroutine-step index, used for stage-dependent
/// tally increments.
pub fn subroutine_step(
    state: &PureState,
    params: &ProtocolParams,
    step: u32,
) -> Result<([PureState; 2], [f64; 2])> {
    let evolved = subroutine_step_unitary(state, params, step)?;
    let (out0, p0) = evolved.measure(Register::Q3, false)?;
    let (out1, p1) = evolved.measure(Register::Q3, true)?;
    Ok(([out0, out1], [p0, p1]))
}

fn run_postselected(params: &ProtocolParams) -> Result<ProtocolResult> {
    let rotation_prime = Unitary2::rotation(params.theta_prime());
    let mut state = PureState::initial();
    for routine_step in 0..params.nprime {
        state = state.apply_one_qubit(Register::Q1, &rotation_prime, |_| true)?;
        for sub_step in 0..params.n {
            let global_step = routine_step * params.n + sub_step;
            state = subroutine_step_unitary(&state, params, global_step)?;
            state = state.project(Register::Q3, false);
        }
        state = state.project(Register::Q2, false);
    }
    let final_states = [
        state.project(Register::Q1, false),
        state.project(Register::Q1, true),
    ];
    let p_success_0 = final_states[0].norm_sqr();
    let p_success_1 = final_states[1].norm_sqr();
    Ok(ProtocolResult {
        p_success_0,
        p_success_1,
        p_fail: 1.0 - p_success_0 - p_success_1,
        final_states,
    })
}

/// Runs the ideal (`ε = 0`) protocol, post-selecting the success record at
/// every intermediate measurement.
pub fn run_ideal(params: &ProtocolParams) -> Result<ProtocolResult> {
    if params.epsilon != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "run_ideal requires epsilon = 0 (got {}); use the noise module for decoherent runs",
            params.epsilon
        )));
    }
    run_postselected(params)
}

/// Like [`run_ideal`] but with an active tally register; also returns the
/// distribution of final tally values given success.
pub fn run_with_tally(params: &ProtocolParams) -> Result<TallyRunResult> {
    if params.tally == TallyMode::None {
        return Err(Error::InvalidParameter(
            "run_with_tally requires an active tally mode".into(),
        ));
    }
    if params.epsilon != 0.0 {
        return Err(Error::InvalidParameter(
            "run_with_tally is an ideal-computer run; epsilon must be 0".into(),
        ));
    }
    let result = run_postselected(params)?;
    let mut tally_given_success = BTreeMap::new();
    let total = result.p_success_0 + result.p_success_1;
    if total > 0.0 {
        for state in &result.final_states {
            for (label, amp) in state.terms() {
                *tally_given_success.entry(label.tally).or_insert(0.0) +=
                    amp.norm_sqr() / total;
            }
        }
    }
    Ok(TallyRunResult {
        result,
        tally_given_success,
    })
}
