//! Measurement histories with hypothetical computer-switch outcomes.
//!
//! A history is the ordered list of real measurement outcomes together with
//! a hypothetical projective reading (`f` for off, `n` for on) of the
//! computer switch immediately after each computer insertion. Each history
//! carries the un-normalised vector obtained by applying the corresponding
//! projectors, in protocol order, to `|000⟩`. Histories whose vector is
//! identically zero are retained: a cancelled amplitude is part of the
//! record, not an absence.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::qstate::{PureState, Register, Unitary2};
use crate::zeno::{self, ProtocolParams, Variant};

/// One entry of a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistoryEvent {
    /// Hypothetical computer-switch reading: off.
    F,
    /// Hypothetical computer-switch reading: on.
    Nrun,
    /// Real output-qubit measurement after a subroutine step.
    Out(bool),
    /// Real computer-switch measurement at the end of a subroutine pass.
    Switch(bool),
    /// Real subroutine-switch measurement at the end of the protocol.
    Final(bool),
}

impl HistoryEvent {
    pub fn is_hypothetical(&self) -> bool {
        matches!(self, HistoryEvent::F | HistoryEvent::Nrun)
    }
}

impl fmt::Display for HistoryEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryEvent::F => write!(f, "f"),
            HistoryEvent::Nrun => write!(f, "n"),
            HistoryEvent::Out(b) => write!(f, "{}_3", *b as u8),
            HistoryEvent::Switch(b) => write!(f, "{}_2", *b as u8),
            HistoryEvent::Final(b) => write!(f, "{}_1", *b as u8),
        }
    }
}

/// An ordered event list plus its projected vector.
#[derive(Clone, Debug)]
pub struct History {
    pub events: Vec<HistoryEvent>,
    pub vector: PureState,
}

impl History {
    /// Compact string form, e.g. `f0_3n0_31_2`.
    pub fn event_string(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let _ = write!(s, "{e}");
        }
        s
    }

    pub fn contains_n(&self) -> bool {
        self.events.contains(&HistoryEvent::Nrun)
    }

    pub fn is_all_f(&self) -> bool {
        !self.contains_n()
    }

    /// The real (non-hypothetical) outcomes in protocol order.
    pub fn real_events(&self) -> impl Iterator<Item = &HistoryEvent> {
        self.events.iter().filter(|e| !e.is_hypothetical())
    }
}

/// Real outcomes of one routine step: the `N` output readings and the
/// switch reading that closes the step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutineRecord {
    pub outputs: Vec<bool>,
    pub switch: bool,
}

/// A set of real measurement outcomes, possibly covering only a prefix of
/// the protocol. A history "contains" the record when every listed outcome
/// matches the history's real outcome at the same position.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct OutcomeRecord {
    pub routine_steps: Vec<RoutineRecord>,
    pub final_outcome: Option<bool>,
}

impl OutcomeRecord {
    /// The success record: `N` output readings of 0 followed by a switch
    /// reading of 0, for each of the first `routine_steps` routine steps.
    pub fn success_prefix(params: &ProtocolParams, routine_steps: u32) -> Self {
        OutcomeRecord {
            routine_steps: (0..routine_steps)
                .map(|_| RoutineRecord {
                    outputs: alloc::vec![false; params.n as usize],
                    switch: false,
                })
                .collect(),
            final_outcome: None,
        }
    }

    /// The full success record `m mᵢ`: success at every intermediate
    /// measurement and `final_outcome` at the closing switch measurement.
    pub fn success_full(params: &ProtocolParams, final_outcome: bool) -> Self {
        let mut record = Self::success_prefix(params, params.nprime);
        record.final_outcome = Some(final_outcome);
        record
    }

    fn flat(&self) -> Vec<HistoryEvent> {
        let mut seq = Vec::new();
        for step in &self.routine_steps {
            for &o in &step.outputs {
                seq.push(HistoryEvent::Out(o));
            }
            seq.push(HistoryEvent::Switch(step.switch));
        }
        if let Some(f) = self.final_outcome {
            seq.push(HistoryEvent::Final(f));
        }
        seq
    }

    /// True when every outcome listed here appears at the corresponding
    /// position of `history`'s real outcomes.
    pub fn contained_in(&self, history: &History) -> bool {
        let reals: Vec<&HistoryEvent> = history.real_events().collect();
        let wanted = self.flat();
        if wanted.len() > reals.len() {
            return false;
        }
        wanted.iter().zip(reals).all(|(w, r)| w == *r)
    }
}

/// Restricts a history enumeration.
#[derive(Clone, Debug, Default)]
pub struct HistoryFilter {
    /// Enumerate only this many routine steps (the final measurement is
    /// then skipped). `None` covers the full protocol including the final
    /// measurement.
    pub routine_steps: Option<u32>,
    /// Constrain the real outcomes to this record where it lists them.
    pub record: Option<OutcomeRecord>,
}

impl HistoryFilter {
    pub fn one_routine_step() -> Self {
        HistoryFilter {
            routine_steps: Some(1),
            ..Default::default()
        }
    }

    pub fn with_record(mut self, record: OutcomeRecord) -> Self {
        self.record = Some(record);
        self
    }
}

/// Default enumeration cap.
pub const DEFAULT_CAP: u64 = 1 << 20;

struct Enumerator<'a> {
    params: &'a ProtocolParams,
    filter: &'a HistoryFilter,
    routine_steps: u32,
    include_final: bool,
    histories: Vec<History>,
}

impl<'a> Enumerator<'a> {
    fn constrained_out(&self, routine: u32, sub: u32) -> Option<bool> {
        let record = self.filter.record.as_ref()?;
        let step = record.routine_steps.get(routine as usize)?;
        step.outputs.get(sub as usize).copied()
    }

    fn constrained_switch(&self, routine: u32) -> Option<bool> {
        let record = self.filter.record.as_ref()?;
        Some(record.routine_steps.get(routine as usize)?.switch)
    }

    fn constrained_final(&self) -> Option<bool> {
        self.filter.record.as_ref()?.final_outcome
    }

    fn leaf_count(&self) -> u128 {
        let per_step = self.params.insertions_per_step();
        let mut count: u128 = 1;
        for routine in 0..self.routine_steps {
            for sub in 0..self.params.n {
                count = count.saturating_mul(1 << per_step);
                if self.constrained_out(routine, sub).is_none() {
                    count = count.saturating_mul(2);
                }
            }
            if self.constrained_switch(routine).is_none() {
                count = count.saturating_mul(2);
            }
        }
        if self.include_final && self.constrained_final().is_none() {
            count = count.saturating_mul(2);
        }
        count
    }

    fn hypothetical(
        &mut self,
        state: &PureState,
        events: &mut Vec<HistoryEvent>,
        routine: u32,
        sub: u32,
        insertion: u32,
    ) -> Result<()> {
        for (event, on) in [(HistoryEvent::F, false), (HistoryEvent::Nrun, true)] {
            let projected = state.project(Register::Q2, on);
            events.push(event);
            self.after_insertion(&projected, events, routine, sub, insertion)?;
            events.pop();
        }
        Ok(())
    }

    fn after_insertion(
        &mut self,
        state: &PureState,
        events: &mut Vec<HistoryEvent>,
        routine: u32,
        sub: u32,
        insertion: u32,
    ) -> Result<()> {
        let params = self.params;
        let x = params.computer_output;
        if params.variant == Variant::Modified && insertion == 0 {
            let stage = 2 * u64::from(routine * params.n + sub);
            let state = zeno::pi_sign_flip(state);
            let state = zeno::insertion_for(params.variant, &state, x, params.tally, stage + 1);
            return self.hypothetical(&state, events, routine, sub, 1);
        }
        // Output measurement that closes the subroutine step.
        let outcomes: &[bool] = match self.constrained_out(routine, sub) {
            Some(o) => &[o],
            None => &[false, true],
        };
        for &outcome in outcomes {
            let projected = state.project(Register::Q3, outcome);
            events.push(HistoryEvent::Out(outcome));
            self.subroutine_entry(&projected, events, routine, sub + 1)?;
            events.pop();
        }
        Ok(())
    }

    fn subroutine_entry(
        &mut self,
        state: &PureState,
        events: &mut Vec<HistoryEvent>,
        routine: u32,
        sub: u32,
    ) -> Result<()> {
        let params = self.params;
        if sub < params.n {
            let rotation = Unitary2::rotation(params.theta());
            let state = state.apply_one_qubit(Register::Q2, &rotation, |l| l.q1)?;
            let step = u64::from(routine * params.n + sub);
            let stage = match params.variant {
                Variant::Standard => step,
                Variant::Modified => 2 * step,
            };
            let state =
                zeno::insertion_for(params.variant, &state, params.computer_output, params.tally, stage);
            return self.hypothetical(&state, events, routine, sub, 0);
        }
        // Switch measurement that closes the routine step.
        let outcomes: &[bool] = match self.constrained_switch(routine) {
            Some(o) => &[o],
            None => &[false, true],
        };
        for &outcome in outcomes {
            let projected = state.project(Register::Q2, outcome);
            events.push(HistoryEvent::Switch(outcome));
            self.routine_entry(&projected, events, routine + 1)?;
            events.pop();
        }
        Ok(())
    }

    fn routine_entry(
        &mut self,
        state: &PureState,
        events: &mut Vec<HistoryEvent>,
        routine: u32,
    ) -> Result<()> {
        if routine < self.routine_steps {
            let rotation = Unitary2::rotation(self.params.theta_prime());
            let state = state.apply_one_qubit(Register::Q1, &rotation, |_| true)?;
            return self.subroutine_entry(&state, events, routine, 0);
        }
        if !self.include_final {
            self.histories.push(History {
                events: events.clone(),
                vector: state.clone(),
            });
            return Ok(());
        }
        let outcomes: &[bool] = match self.constrained_final() {
            Some(o) => &[o],
            None => &[false, true],
        };
        for &outcome in outcomes {
            let projected = state.project(Register::Q1, outcome);
            events.push(HistoryEvent::Final(outcome));
            self.histories.push(History {
                events: events.clone(),
                vector: projected,
            });
            events.pop();
        }
        Ok(())
    }
}

/// Enumerates every history consistent with `filter`, each with its exact
/// vector. Zero-vector histories are included. Fails without enumerating
/// when the history count would exceed `cap`.
pub fn enumerate_histories(
    params: &ProtocolParams,
    filter: &HistoryFilter,
    cap: u64,
) -> Result<Vec<History>> {
    if params.epsilon != 0.0 {
        return Err(Error::InvalidParameter(
            "history enumeration is defined for the ideal computer (epsilon = 0)".into(),
        ));
    }
    let routine_steps = filter
        .routine_steps
        .unwrap_or(params.nprime)
        .min(params.nprime);
    let include_final = filter.routine_steps.is_none();
    let mut enumerator = Enumerator {
        params,
        filter,
        routine_steps,
        include_final,
        histories: Vec::new(),
    };
    let leaves = enumerator.leaf_count();
    if leaves > u128::from(cap) {
        return Err(Error::CapExceeded { required: leaves });
    }
    let mut events = Vec::new();
    enumerator.routine_entry(&PureState::initial(), &mut events, 0)?;
    Ok(enumerator.histories)
}

/// Coherent sum of the vectors of every history containing `m`.
pub fn coherent_sum(histories: &[History], m: &OutcomeRecord) -> PureState {
    let mut acc = PureState::zero();
    for history in histories {
        if m.contained_in(history) {
            acc = acc.sum(&history.vector);
        }
    }
    acc
}

/// Direct projective run constrained to the record `m`; returns the
/// projected state and its probability. Independent of the enumeration
/// path, and cheaper.
pub fn record_probability(params: &ProtocolParams, m: &OutcomeRecord) -> Result<(PureState, f64)> {
    let rotation_prime = Unitary2::rotation(params.theta_prime());
    let mut state = PureState::initial();
    for (routine, step_record) in m.routine_steps.iter().enumerate() {
        if routine as u32 >= params.nprime {
            break;
        }
        state = state.apply_one_qubit(Register::Q1, &rotation_prime, |_| true)?;
        for (sub, &outcome) in step_record.outputs.iter().enumerate() {
            let global_step = routine as u32 * params.n + sub as u32;
            state = zeno::subroutine_step_unitary(&state, params, global_step)?;
            state = state.project(Register::Q3, outcome);
        }
        state = state.project(Register::Q2, step_record.switch);
    }
    if let Some(final_outcome) = m.final_outcome {
        state = state.project(Register::Q1, final_outcome);
    }
    let prob = state.norm_sqr();
    Ok((state, prob))
}

/// The all-`f` history for the success record ending in `final_outcome`,
/// computed as a single projected trajectory in `O(N·N')` without
/// enumeration.
pub fn all_f_history(params: &ProtocolParams, final_outcome: bool) -> Result<History> {
    let rotation_prime = Unitary2::rotation(params.theta_prime());
    let rotation = Unitary2::rotation(params.theta());
    let mut state = PureState::initial();
    let mut events = Vec::new();
    for routine in 0..params.nprime {
        state = state.apply_one_qubit(Register::Q1, &rotation_prime, |_| true)?;
        for sub in 0..params.n {
            let step = u64::from(routine * params.n + sub);
            state = state.apply_one_qubit(Register::Q2, &rotation, |l| l.q1)?;
            match params.variant {
                Variant::Standard => {
                    state = zeno::insertion_for(
                        params.variant,
                        &state,
                        params.computer_output,
                        params.tally,
                        step,
                    );
                    state = state.project(Register::Q2, false);
                    events.push(HistoryEvent::F);
                }
                Variant::Modified => {
                    let stage = 2 * step;
                    state = zeno::insertion_for(
                        params.variant,
                        &state,
                        params.computer_output,
                        params.tally,
                        stage,
                    );
                    state = state.project(Register::Q2, false);
                    events.push(HistoryEvent::F);
                    state = zeno::pi_sign_flip(&state);
                    state = zeno::insertion_for(
                        params.variant,
                        &state,
                        params.computer_output,
                        params.tally,
                        stage + 1,
                    );
                    state = state.project(Register::Q2, false);
                    events.push(HistoryEvent::F);
                }
            }
            state = state.project(Register::Q3, false);
            events.push(HistoryEvent::Out(false));
        }
        state = state.project(Register::Q2, false);
        events.push(HistoryEvent::Switch(false));
    }
    state = state.project(Register::Q1, final_outcome);
    events.push(HistoryEvent::Final(final_outcome));
    Ok(History {
        events,
        vector: state,
    })
}

/// Why an outcome record failed (or vacuously passed) the counterfactual
/// conditions.
#[derive(Clone, Debug, Default)]
pub struct CounterfactualWitness {
    /// Histories containing the record that carry an `n` with a nonzero
    /// vector (condition 1 violations).
    pub offending_histories: Vec<History>,
    /// Probability the flipped computer output assigns to the record
    /// (condition 2 demands zero).
    pub other_output_probability: f64,
}

const AMPLITUDE_ZERO_TOLERANCE: f64 = 1e-12;

/// Tests the two counterfactual-outcome conditions for `m` under `params`:
/// exactly one history with nonzero vector contains `m` and it is all-`f`,
/// and the flipped computer output assigns `m` zero probability.
pub fn is_counterfactual_outcome(
    params: &ProtocolParams,
    m: &OutcomeRecord,
    cap: u64,
) -> Result<(bool, CounterfactualWitness)> {
    let filter = HistoryFilter {
        routine_steps: if m.final_outcome.is_some() {
            None
        } else {
            Some(m.routine_steps.len() as u32)
        },
        record: Some(m.clone()),
    };
    let histories = enumerate_histories(params, &filter, cap)?;
    let nonzero: Vec<&History> = histories
        .iter()
        .filter(|h| h.vector.norm_sqr() > AMPLITUDE_ZERO_TOLERANCE * AMPLITUDE_ZERO_TOLERANCE)
        .collect();
    let offending: Vec<History> = nonzero
        .iter()
        .filter(|h| h.contains_n())
        .map(|h| (*h).clone())
        .collect();
    let condition1 = offending.is_empty()
        && (nonzero.is_empty() || (nonzero.len() == 1 && nonzero[0].is_all_f()));
    let flipped = params.with_output(!params.computer_output);
    let (_, other_prob) = record_probability(&flipped, m)?;
    let condition2 = other_prob <= AMPLITUDE_ZERO_TOLERANCE;
    Ok((
        condition1 && condition2,
        CounterfactualWitness {
            offending_histories: offending,
            other_output_probability: other_prob,
        },
    ))
}

/// Counterfactualities and success probabilities for both outputs.
#[derive(Clone, Copy, Debug)]
pub struct CounterfactualityReport {
    /// Squared norm of the all-`f` history ending in the final outcome 0.
    pub c0: f64,
    /// Squared norm of the all-`f` history ending in the final outcome 1.
    pub c1: f64,
    /// `P(m m₀ | x = 0)`.
    pub p_mm0_given_0: f64,
    /// `P(m m₁ | x = 1)`.
    pub p_mm1_given_1: f64,
}

/// Computes `c₀`, `c₁` and the matching success probabilities. The all-`f`
/// vector is independent of the true computer output, so the
/// counterfactualities depend only on the step counts and variant.
pub fn counterfactuality_report(params: &ProtocolParams) -> Result<CounterfactualityReport> {
    let c0 = all_f_history(params, false)?.vector.norm_sqr();
    let c1 = all_f_history(params, true)?.vector.norm_sqr();
    let p_mm0_given_0 = zeno::run_ideal(&params.with_output(false))?.p_success_0;
    let p_mm1_given_1 = zeno::run_ideal(&params.with_output(true))?.p_success_1;
    Ok(CounterfactualityReport {
        c0,
        c1,
        p_mm0_given_0,
        p_mm1_given_1,
    })
}
