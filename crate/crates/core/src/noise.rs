//! Decoherent computer runs, in two interchangeable representations.
//!
//! Each computer run leaves the computer-on component of the state with a
//! damped amplitude and sheds a flipped-output component into a fresh,
//! orthogonal environment mode:
//!
//! ```text
//! |11k⟩|e⟩ → (1−ε)|11k⟩|e⟩ + √(2ε−ε²)|11(1−k)⟩|e'⟩
//! ```
//!
//! The branch-ensemble path keeps the environment modes explicit; the
//! density-operator path traces them out into an 8x8 pipeline. They agree
//! exactly and [`crosscheck_representations`] measures the residual.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::qstate::{Amplitude, BasisLabel, PureState, Register};
use crate::zeno::{self, ProtocolParams, TallyMode, Variant};

/// One environment-labelled pure branch. Branches with distinct `env`
/// never interfere; the ensemble probability is the sum of squared norms.
#[derive(Clone, Debug)]
pub struct Branch {
    pub env: u64,
    pub state: PureState,
}

impl Branch {
    pub fn probability(&self) -> f64 {
        self.state.norm_sqr()
    }
}

/// Splits one branch through a single decoherent computer run. The
/// computer-on portion keeps factor `1−ε` in the original branch; its
/// output-flipped image moves to a fresh environment mode with factor
/// `√(2ε−ε²)`. Since `(1−ε)² + (2ε−ε²) = 1` the total probability is
/// preserved.
///
/// Expects the ideal insertion to have acted already; `_x` records which
/// output value the run wrote and is accepted for interface completeness
/// (the split acts on every computer-on component regardless of the value
/// it currently holds).
pub fn decohere_insertion(
    branch: &Branch,
    _x: bool,
    epsilon: f64,
    mut fresh_env: impl FnMut() -> u64,
) -> Result<Vec<Branch>> {
    if !(0.0..=1.0).contains(&epsilon) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 1] (got {epsilon})"
        )));
    }
    if epsilon == 0.0 {
        return Ok(alloc::vec![branch.clone()]);
    }
    let stay_factor = Amplitude::new(1.0 - epsilon, 0.0);
    let flip_factor = Amplitude::new(math::sqrt(2.0 * epsilon - epsilon * epsilon), 0.0);
    let mut stay = PureState::zero();
    let mut flip = PureState::zero();
    for (&label, &amp) in branch.state.terms() {
        if label.q1 && label.q2 {
            stay.add_term(label, amp * stay_factor);
            flip.add_term(label.with_bit(Register::Q3, !label.q3), amp * flip_factor);
        } else {
            stay.add_term(label, amp);
        }
    }
    let mut out = Vec::new();
    if !stay.is_empty() {
        out.push(Branch {
            env: branch.env,
            state: stay,
        });
    }
    if !flip.is_empty() {
        let env = fresh_env();
        let state = PureState::from_terms(flip.terms().map(|(l, a)| (l.with_env(env), *a)));
        out.push(Branch { env, state });
    }
    Ok(out)
}

/// Environment-labelled ensemble of pure branches.
#[derive(Clone, Debug)]
pub struct BranchEnsemble {
    pub branches: Vec<Branch>,
    next_env: u64,
}

impl BranchEnsemble {
    pub fn initial() -> Self {
        BranchEnsemble {
            branches: alloc::vec![Branch {
                env: 0,
                state: PureState::initial(),
            }],
            next_env: 1,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(Branch::probability).sum()
    }

    fn apply<F>(&mut self, f: F) -> Result<()>
    where
        F: Fn(&PureState) -> Result<PureState>,
    {
        for branch in &mut self.branches {
            branch.state = f(&branch.state)?;
        }
        self.branches.retain(|b| !b.state.is_empty());
        Ok(())
    }

    /// Ideal insertion followed by the decoherence split on every branch.
    /// Flip branches born at this insertion that consist of a single label
    /// (ignoring the environment tag) are merged, with weights added in
    /// quadrature; their subsequent evolution is identical and the modes
    /// are mutually orthogonal, so the merge preserves every future
    /// probability.
    fn insert_and_decohere(&mut self, params: &ProtocolParams, stage: u64) -> Result<()> {
        let x = params.computer_output;
        let mut kept: Vec<Branch> = Vec::new();
        let mut merged_flips: alloc::collections::BTreeMap<BasisLabel, f64> =
            alloc::collections::BTreeMap::new();
        let mut unmerged_flips: Vec<Branch> = Vec::new();
        for branch in &self.branches {
            let inserted = Branch {
                env: branch.env,
                state: zeno::insertion_for(params.variant, &branch.state, x, params.tally, stage),
            };
            let mut next_env = self.next_env;
            let split = decohere_insertion(&inserted, x, params.epsilon, || {
                let e = next_env;
                next_env += 1;
                e
            })?;
            self.next_env = next_env;
            for piece in split {
                if piece.env == branch.env {
                    kept.push(piece);
                } else if piece.state.len() == 1 {
                    let (label, amp) = piece.state.terms().next().map(|(l, a)| (*l, *a)).unwrap();
                    *merged_flips.entry(label.with_env(0)).or_insert(0.0) += amp.norm_sqr();
                } else {
                    unmerged_flips.push(piece);
                }
            }
        }
        for (label, weight_sqr) in merged_flips {
            let env = self.next_env;
            self.next_env += 1;
            kept.push(Branch {
                env,
                state: PureState::from_terms([(
                    label.with_env(env),
                    Amplitude::new(math::sqrt(weight_sqr), 0.0),
                )]),
            });
        }
        kept.extend(unmerged_flips);
        self.branches = kept;
        Ok(())
    }

    /// Projects every branch onto `register = outcome`.
    fn project(&mut self, register: Register, outcome: bool) {
        for branch in &mut self.branches {
            branch.state = branch.state.project(register, outcome);
        }
        self.branches.retain(|b| !b.state.is_empty());
    }
}

/// Post-selected probabilities of a decoherent run.
#[derive(Clone, Copy, Debug)]
pub struct NoisyResult {
    /// `P(m | x)`: probability of the success record.
    pub p_m_given_x: f64,
    /// `P(mᵢ | m, x)` for final outcomes 0 and 1.
    pub p_mi_given_m: [f64; 2],
}

/// [`NoisyResult`] plus the probability lost at each intermediate
/// measurement, in protocol order (used for fine-grained outcome
/// partitions).
#[derive(Clone, Debug)]
pub struct NoisyTrace {
    pub result: NoisyResult,
    /// Joint probabilities `P(m, mᵢ | x)`.
    pub p_joint_final: [f64; 2],
    /// Probability of first deviating from the success record at each
    /// intermediate measurement.
    pub p_fail_at: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Density-operator representation
// ---------------------------------------------------------------------------

/// Dense 8x8 matrix over the three-qubit basis, index `q1·4 + q2·2 + q3`.
pub type Matrix8 = [[Amplitude; 8]; 8];

fn zero8() -> Matrix8 {
    [[Amplitude::new(0.0, 0.0); 8]; 8]
}

fn identity8() -> Matrix8 {
    let mut m = zero8();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Amplitude::new(1.0, 0.0);
    }
    m
}

const fn dix(q1: usize, q2: usize, q3: usize) -> usize {
    q1 * 4 + q2 * 2 + q3
}

/// An 8x8 density operator over the three protocol qubits. Sub-normalised
/// after post-selection; the trace is the retained probability.
#[derive(Clone, Debug)]
pub struct DensityOp {
    pub m: Matrix8,
}

impl DensityOp {
    /// `|000⟩⟨000|`.
    pub fn initial() -> Self {
        let mut m = zero8();
        m[0][0] = Amplitude::new(1.0, 0.0);
        DensityOp { m }
    }

    /// Density operator of a pure three-qubit state. Tally and environment
    /// registers must be clear.
    pub fn from_pure(state: &PureState) -> Result<Self> {
        let mut amps = [Amplitude::new(0.0, 0.0); 8];
        for (label, amp) in state.terms() {
            if label.tally != 0 || label.env != 0 {
                return Err(Error::InvalidParameter(
                    "density path covers the three protocol qubits only".into(),
                ));
            }
            amps[dix(label.q1 as usize, label.q2 as usize, label.q3 as usize)] = *amp;
        }
        let mut m = zero8();
        for i in 0..8 {
            for j in 0..8 {
                m[i][j] = amps[i] * amps[j].conj();
            }
        }
        Ok(DensityOp { m })
    }

    pub fn trace(&self) -> f64 {
        (0..8).map(|i| self.m[i][i].re).sum()
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                defect = defect.max((self.m[i][j] - self.m[j][i].conj()).norm());
            }
        }
        defect
    }

    /// Conjugation `ρ → AρA†` by a dense matrix.
    pub fn conjugate(&self, a: &Matrix8) -> DensityOp {
        let mut tmp = zero8();
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = Amplitude::new(0.0, 0.0);
                for k in 0..8 {
                    acc += a[i][k] * self.m[k][j];
                }
                tmp[i][j] = acc;
            }
        }
        let mut out = zero8();
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = Amplitude::new(0.0, 0.0);
                for k in 0..8 {
                    acc += tmp[i][k] * a[j][k].conj();
                }
                out[i][j] = acc;
            }
        }
        DensityOp { m: out }
    }

    pub fn add(&mut self, other: &DensityOp) {
        for i in 0..8 {
            for j in 0..8 {
                self.m[i][j] += other.m[i][j];
            }
        }
    }

    /// In-place rotation of one qubit, optionally controlled on `q1 = 1`.
    fn rotate(&mut self, target: Register, theta: f64, control_q1: bool) {
        let (c, s) = (math::cos(theta), math::sin(theta));
        let pairs: Vec<(usize, usize)> = (0..8)
            .filter(|&i| {
                let q1 = i / 4;
                let bit = match target {
                    Register::Q1 => i / 4,
                    Register::Q2 => (i / 2) % 2,
                    Register::Q3 => i % 2,
                };
                bit == 0 && (!control_q1 || q1 == 1)
            })
            .map(|i| {
                let j = match target {
                    Register::Q1 => i + 4,
                    Register::Q2 => i + 2,
                    Register::Q3 => i + 1,
                };
                (i, j)
            })
            .collect();
        // Row update then column update.
        for &(i0, i1) in &pairs {
            for col in 0..8 {
                let a0 = self.m[i0][col];
                let a1 = self.m[i1][col];
                self.m[i0][col] = c * a0 - s * a1;
                self.m[i1][col] = s * a0 + c * a1;
            }
        }
        for &(i0, i1) in &pairs {
            for row in 0..8 {
                let a0 = self.m[row][i0];
                let a1 = self.m[row][i1];
                self.m[row][i0] = c * a0 - s * a1;
                self.m[row][i1] = s * a0 + c * a1;
            }
        }
    }

    /// In-place reversible computer insertion (output XOR on the
    /// computer-on sector).
    fn insert_reversible(&mut self, x: bool) {
        if !x {
            return;
        }
        for q1 in 0..2 {
            let i0 = dix(q1, 1, 0);
            let i1 = dix(q1, 1, 1);
            self.m.swap(i0, i1);
            for row in 0..8 {
                let tmp = self.m[row][i0];
                self.m[row][i0] = self.m[row][i1];
                self.m[row][i1] = tmp;
            }
        }
    }

    /// In-place sign flip of the `|111⟩` amplitude.
    fn pi_flip(&mut self) {
        let k = dix(1, 1, 1);
        for col in 0..8 {
            self.m[k][col] = -self.m[k][col];
        }
        for row in 0..8 {
            self.m[row][k] = -self.m[row][k];
        }
    }

    /// One decoherent computer run after the ideal insertion: environment
    /// trace of the branch split. Coherences between the computer-on
    /// sector and the rest are damped by `1−ε`; the shed probability
    /// reappears with the output flipped.
    fn decohere(&mut self, epsilon: f64) {
        if epsilon == 0.0 {
            return;
        }
        let i0 = dix(1, 1, 0);
        let i1 = dix(1, 1, 1);
        let stay = 1.0 - epsilon;
        let flip = 2.0 * epsilon - epsilon * epsilon;
        // Flip contribution uses the pre-damping block.
        let b00 = self.m[i0][i0];
        let b01 = self.m[i0][i1];
        let b10 = self.m[i1][i0];
        let b11 = self.m[i1][i1];
        for k in [i0, i1] {
            for col in 0..8 {
                self.m[k][col] *= stay;
            }
            for row in 0..8 {
                self.m[row][k] *= stay;
            }
        }
        // K = √(2ε−ε²) (|110⟩⟨111| + |111⟩⟨110|): KρK† swaps the block.
        self.m[i0][i0] += flip * b11;
        self.m[i0][i1] += flip * b10;
        self.m[i1][i0] += flip * b01;
        self.m[i1][i1] += flip * b00;
    }

    /// Projects onto `register = outcome` without renormalising.
    fn project(&mut self, register: Register, outcome: bool) {
        for i in 0..8 {
            let bit = match register {
                Register::Q1 => i / 4,
                Register::Q2 => (i / 2) % 2,
                Register::Q3 => i % 2,
            };
            if (bit == 1) != outcome {
                for col in 0..8 {
                    self.m[i][col] = Amplitude::new(0.0, 0.0);
                }
                for row in 0..8 {
                    self.m[row][i] = Amplitude::new(0.0, 0.0);
                }
            }
        }
    }
}

/// The Kraus pair of one decoherent run for the designated output value:
/// `K0` is the identity with factor `1−ε` on `|11x⟩` and `K1` moves
/// `|11x⟩` to the flipped output with amplitude `√(2ε−ε²)`. The pair is
/// complete: `K0†K0 + K1†K1 = I`.
pub fn kraus_pair(x: bool, epsilon: f64) -> (Matrix8, Matrix8) {
    let src = dix(1, 1, x as usize);
    let dst = dix(1, 1, !x as usize);
    let mut k0 = identity8();
    k0[src][src] = Amplitude::new(1.0 - epsilon, 0.0);
    let mut k1 = zero8();
    k1[dst][src] = Amplitude::new(math::sqrt(2.0 * epsilon - epsilon * epsilon), 0.0);
    (k0, k1)
}

fn validated(params: &ProtocolParams) -> Result<()> {
    if params.tally != TallyMode::None {
        return Err(Error::InvalidParameter(
            "decoherent runs do not carry a tally register".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.epsilon) || !params.epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 1] (got {})",
            params.epsilon
        )));
    }
    Ok(())
}

/// Exact post-selected probabilities of the decoherent protocol via the
/// density-operator pipeline.
pub fn run_noisy(params: &ProtocolParams) -> Result<NoisyResult> {
    Ok(run_noisy_detailed(params)?.result)
}

/// [`run_noisy`] plus the per-measurement failure profile.
pub fn run_noisy_detailed(params: &ProtocolParams) -> Result<NoisyTrace> {
    validated(params)?;
    let x = params.computer_output;
    let mut rho = DensityOp::initial();
    let mut p_fail_at = Vec::new();
    for _ in 0..params.nprime {
        rho.rotate(Register::Q1, params.theta_prime(), false);
        for _ in 0..params.n {
            rho.rotate(Register::Q2, params.theta(), true);
            rho.insert_reversible(x);
            rho.decohere(params.epsilon);
            if params.variant == Variant::Modified {
                rho.pi_flip();
                rho.insert_reversible(x);
                rho.decohere(params.epsilon);
            }
            let before = rho.trace();
            rho.project(Register::Q3, false);
            p_fail_at.push(before - rho.trace());
        }
        let before = rho.trace();
        rho.project(Register::Q2, false);
        p_fail_at.push(before - rho.trace());
    }
    let p_m = rho.trace();
    let mut rho0 = rho.clone();
    rho0.project(Register::Q1, false);
    let p_joint_0 = rho0.trace();
    let p_joint_1 = p_m - p_joint_0;
    let p_mi_given_m = if p_m > 0.0 {
        [p_joint_0 / p_m, p_joint_1 / p_m]
    } else {
        [0.0, 0.0]
    };
    Ok(NoisyTrace {
        result: NoisyResult {
            p_m_given_x: p_m,
            p_mi_given_m,
        },
        p_joint_final: [p_joint_0, p_joint_1],
        p_fail_at,
    })
}

/// Same quantities via the explicit branch ensemble. Cost grows with the
/// insertion count, so keep the step counts small.
pub fn run_noisy_ensemble(params: &ProtocolParams) -> Result<NoisyResult> {
    validated(params)?;
    let rotation = crate::qstate::Unitary2::rotation(params.theta());
    let rotation_prime = crate::qstate::Unitary2::rotation(params.theta_prime());
    let mut ensemble = BranchEnsemble::initial();
    for routine in 0..params.nprime {
        ensemble.apply(|s| s.apply_one_qubit(Register::Q1, &rotation_prime, |_| true))?;
        for sub in 0..params.n {
            let step = u64::from(routine * params.n + sub);
            ensemble.apply(|s| s.apply_one_qubit(Register::Q2, &rotation, |l| l.q1))?;
            match params.variant {
                Variant::Standard => ensemble.insert_and_decohere(params, step)?,
                Variant::Modified => {
                    ensemble.insert_and_decohere(params, 2 * step)?;
                    ensemble.apply(|s| Ok(zeno::pi_sign_flip(s)))?;
                    ensemble.insert_and_decohere(params, 2 * step + 1)?;
                }
            }
            ensemble.project(Register::Q3, false);
        }
        ensemble.project(Register::Q2, false);
    }
    let p_m = ensemble.total_probability();
    let mut final0 = ensemble.clone();
    final0.project(Register::Q1, false);
    let p_joint_0 = final0.total_probability();
    let p_joint_1 = p_m - p_joint_0;
    let p_mi_given_m = if p_m > 0.0 {
        [p_joint_0 / p_m, p_joint_1 / p_m]
    } else {
        [0.0, 0.0]
    };
    Ok(NoisyResult {
        p_m_given_x: p_m,
        p_mi_given_m,
    })
}

/// Runs both representations and returns the largest absolute difference
/// across the reported probabilities.
pub fn crosscheck_representations(params: &ProtocolParams) -> Result<f64> {
    if params.n > 10 || params.nprime > 10 {
        return Err(Error::InvalidParameter(
            "crosscheck is limited to N, N' <= 10 (branch count)".into(),
        ));
    }
    let density = run_noisy(params)?;
    let ensemble = run_noisy_ensemble(params)?;
    let mut max = math::abs(density.p_m_given_x - ensemble.p_m_given_x);
    for i in 0..2 {
        max = max.max(math::abs(density.p_mi_given_m[i] - ensemble.p_mi_given_m[i]));
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zeno::run_ideal;

    fn re(x: f64) -> Amplitude {
        Amplitude::new(x, 0.0)
    }

    fn apply_kraus(rho: &DensityOp, ks: &[&Matrix8]) -> DensityOp {
        let mut out = DensityOp { m: zero8() };
        for k in ks {
            out.add(&rho.conjugate(k));
        }
        out
    }

    #[test]
    fn decohere_noiseless_is_identity() {
        let branch = Branch {
            env: 0,
            state: PureState::basis(BasisLabel::bits(1, 1, 0)),
        };
        let out = decohere_insertion(&branch, false, 0.0, || panic!("no fresh env needed"))
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].env, 0);
    }

    #[test]
    fn decohere_full_strength_flips_everything() {
        let branch = Branch {
            env: 0,
            state: PureState::from_terms([(BasisLabel::bits(1, 1, 0), re(0.5))]),
        };
        let out = decohere_insertion(&branch, false, 1.0, || 7).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].env, 7);
        assert!(
            (out[0]
                .state
                .amplitude(&BasisLabel::bits(1, 1, 1).with_env(7))
                - re(0.5))
            .norm()
                < 1e-15
        );
    }

    #[test]
    fn decohere_splits_with_printed_factors() {
        // ε = 0.2: stay 0.8, flip √(2·0.2 − 0.04) = 0.6.
        let branch = Branch {
            env: 3,
            state: PureState::from_terms([(BasisLabel::bits(1, 1, 1).with_env(3), re(0.5))]),
        };
        let out = decohere_insertion(&branch, true, 0.2, || 9).unwrap();
        assert_eq!(out.len(), 2);
        assert!(
            (out[0]
                .state
                .amplitude(&BasisLabel::bits(1, 1, 1).with_env(3))
                - re(0.4))
            .norm()
                < 1e-15
        );
        assert!(
            (out[1]
                .state
                .amplitude(&BasisLabel::bits(1, 1, 0).with_env(9))
                - re(0.3))
            .norm()
                < 1e-15
        );
        let total: f64 = out.iter().map(Branch::probability).sum();
        assert!((total - 0.25).abs() < 1e-15);
    }

    #[test]
    fn decohere_rejects_bad_epsilon() {
        let branch = Branch {
            env: 0,
            state: PureState::initial(),
        };
        assert!(decohere_insertion(&branch, false, -0.1, || 1).is_err());
        assert!(decohere_insertion(&branch, false, 1.1, || 1).is_err());
    }

    #[test]
    fn kraus_pair_limits_and_entries() {
        let (k0, k1) = kraus_pair(false, 0.0);
        assert_eq!(k0, identity8());
        assert_eq!(k1, zero8());

        let (k0, k1) = kraus_pair(true, 0.2);
        assert!((k0[dix(1, 1, 1)][dix(1, 1, 1)] - re(0.8)).norm() < 1e-15);
        assert!((k1[dix(1, 1, 0)][dix(1, 1, 1)] - re(0.6)).norm() < 1e-15);
    }

    #[test]
    fn kraus_pair_is_complete() {
        for eps in [0.2, 0.7] {
            for x in [false, true] {
                let (k0, k1) = kraus_pair(x, eps);
                // K0†K0 + K1†K1 over the standard basis.
                for i in 0..8 {
                    for j in 0..8 {
                        let mut acc = Amplitude::new(0.0, 0.0);
                        for k in 0..8 {
                            acc += k0[k][i].conj() * k0[k][j] + k1[k][i].conj() * k1[k][j];
                        }
                        let expected = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (acc - re(expected)).norm() < 1e-14,
                            "x={x} eps={eps} ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn structured_decoherence_matches_kraus_conjugation() {
        // The in-place channel equals {damped identity, coherent flip}
        // applied as explicit Kraus operators.
        let state = PureState::from_terms([
            (BasisLabel::bits(0, 0, 0), re(0.5)),
            (BasisLabel::bits(1, 0, 0), re(0.5)),
            (BasisLabel::bits(1, 1, 0), re(0.5)),
            (BasisLabel::bits(1, 1, 1), re(0.5)),
        ]);
        let rho = DensityOp::from_pure(&state).unwrap();
        let eps = 0.3;
        let mut structured = rho.clone();
        structured.decohere(eps);

        let mut damp = identity8();
        damp[dix(1, 1, 0)][dix(1, 1, 0)] = re(1.0 - eps);
        damp[dix(1, 1, 1)][dix(1, 1, 1)] = re(1.0 - eps);
        let mut flip = zero8();
        let f = re((2.0 * eps - eps * eps).sqrt());
        flip[dix(1, 1, 0)][dix(1, 1, 1)] = f;
        flip[dix(1, 1, 1)][dix(1, 1, 0)] = f;
        let expected = apply_kraus(&rho, &[&damp, &flip]);

        for i in 0..8 {
            for j in 0..8 {
                assert!((structured.m[i][j] - expected.m[i][j]).norm() < 1e-14);
            }
        }
        assert!((structured.trace() - rho.trace()).abs() < 1e-14);
    }

    fn params(n: u32, nprime: u32, x: bool, eps: f64) -> ProtocolParams {
        ProtocolParams::new(n, nprime)
            .unwrap()
            .with_variant(Variant::Modified)
            .with_output(x)
            .with_epsilon(eps)
            .unwrap()
    }

    #[test]
    fn decoherence_table_first_row() {
        let r0 = run_noisy(&params(700, 70, false, 0.2)).unwrap();
        let r1 = run_noisy(&params(700, 70, true, 0.2)).unwrap();
        assert!((r0.p_m_given_x - 0.609).abs() < 2e-3, "{}", r0.p_m_given_x);
        assert!(
            (r0.p_mi_given_m[0] - 0.040).abs() < 2e-3,
            "{}",
            r0.p_mi_given_m[0]
        );
        assert!((r1.p_m_given_x - 0.973).abs() < 2e-3, "{}", r1.p_m_given_x);
        assert!(
            (r1.p_mi_given_m[1] - 0.9999).abs() < 2e-3,
            "{}",
            r1.p_mi_given_m[1]
        );
    }

    #[test]
    fn decoherence_table_conditional_columns() {
        // The post-selected conditional probabilities of the remaining
        // rows; the success marginals of these rows are pinned in the
        // acceptance suite.
        let r = run_noisy(&params(40, 70, false, 0.2)).unwrap();
        assert!((r.p_mi_given_m[0] - 0.975).abs() < 2e-3, "{}", r.p_mi_given_m[0]);
        let r = run_noisy(&params(40, 70, true, 0.2)).unwrap();
        assert!((r.p_mi_given_m[1] - 0.969).abs() < 2e-3, "{}", r.p_mi_given_m[1]);
        let r = run_noisy(&params(40, 700, false, 0.2)).unwrap();
        assert!((r.p_mi_given_m[0] - 0.9998).abs() < 2e-3, "{}", r.p_mi_given_m[0]);
        let r = run_noisy(&params(40, 700, true, 0.2)).unwrap();
        assert!((r.p_mi_given_m[1] - 0.107).abs() < 2e-3, "{}", r.p_mi_given_m[1]);
    }

    #[test]
    fn noiseless_density_run_matches_ideal_engine() {
        for x in [false, true] {
            for variant in [Variant::Standard, Variant::Modified] {
                let p = ProtocolParams::new(3, 4)
                    .unwrap()
                    .with_variant(variant)
                    .with_output(x);
                let noisy = run_noisy(&p).unwrap();
                let ideal = run_ideal(&p).unwrap();
                let p_m = ideal.p_success_0 + ideal.p_success_1;
                assert!((noisy.p_m_given_x - p_m).abs() < 1e-12);
                if p_m > 0.0 {
                    assert!(
                        (noisy.p_mi_given_m[0] - ideal.p_success_0 / p_m).abs() < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn conditional_outcomes_are_complete() {
        let r = run_noisy(&params(5, 5, true, 0.3)).unwrap();
        assert!((r.p_mi_given_m[0] + r.p_mi_given_m[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trace_is_preserved_before_measurements() {
        let p = params(4, 3, true, 0.4);
        let mut rho = DensityOp::initial();
        rho.rotate(Register::Q1, p.theta_prime(), false);
        let before = rho.trace();
        rho.rotate(Register::Q2, p.theta(), true);
        rho.insert_reversible(true);
        rho.decohere(p.epsilon);
        rho.pi_flip();
        rho.insert_reversible(true);
        rho.decohere(p.epsilon);
        assert!((rho.trace() - before).abs() < 1e-12);
        assert!(rho.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn representations_agree_at_small_sizes() {
        for eps in [0.0, 0.2, 0.5] {
            for x in [false, true] {
                for variant in [Variant::Standard, Variant::Modified] {
                    let p = ProtocolParams::new(5, 5)
                        .unwrap()
                        .with_variant(variant)
                        .with_output(x)
                        .with_epsilon(eps)
                        .unwrap();
                    let discrepancy = crosscheck_representations(&p).unwrap();
                    assert!(
                        discrepancy < 1e-9,
                        "variant {variant:?} x={x} eps={eps}: {discrepancy}"
                    );
                }
            }
        }
    }

    #[test]
    fn crosscheck_bounds_protocol_size() {
        let p = ProtocolParams::new(40, 5).unwrap();
        assert!(crosscheck_representations(&p).is_err());
    }

    #[test]
    fn branch_probabilities_never_exceed_unity() {
        let p = params(4, 4, true, 0.3);
        let r = run_noisy_ensemble(&p).unwrap();
        assert!(r.p_m_given_x <= 1.0 + 1e-10);
    }

    #[test]
    fn decoherence_degrades_the_modified_protocol() {
        let clean = run_noisy(&params(40, 70, true, 0.0)).unwrap();
        let noisy = run_noisy(&params(40, 70, true, 0.2)).unwrap();
        assert!(noisy.p_mi_given_m[1] < clean.p_mi_given_m[1]);
    }

    #[test]
    fn failure_profile_accounts_for_all_probability() {
        let trace = run_noisy_detailed(&params(5, 4, false, 0.25)).unwrap();
        let lost: f64 = trace.p_fail_at.iter().sum();
        assert!((lost + trace.result.p_m_given_x - 1.0).abs() < 1e-10);
        assert_eq!(trace.p_fail_at.len(), (5 + 1) * 4);
    }

    #[test]
    fn tally_is_rejected_on_noisy_runs() {
        let p = ProtocolParams::new(2, 2)
            .unwrap()
            .with_tally(TallyMode::AllRuns);
        assert!(run_noisy(&p).is_err());
    }

    /// Smallest eigenvalue via the real embedding [[Re, −Im], [Im, Re]],
    /// whose spectrum doubles the Hermitian one.
    fn min_eigenvalue(rho: &DensityOp) -> f64 {
        let mut embedded = nalgebra::DMatrix::<f64>::zeros(16, 16);
        for i in 0..8 {
            for j in 0..8 {
                embedded[(i, j)] = rho.m[i][j].re;
                embedded[(i + 8, j + 8)] = rho.m[i][j].re;
                embedded[(i, j + 8)] = -rho.m[i][j].im;
                embedded[(i + 8, j)] = rho.m[i][j].im;
            }
        }
        nalgebra::SymmetricEigen::new(embedded)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    #[test]
    fn density_stays_positive_along_randomized_runs() {
        let mut seed = 0x2545f491u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as u32
        };
        for _ in 0..20 {
            let n = 1 + next() % 5;
            let nprime = 1 + next() % 5;
            let eps = f64::from(next() % 1000) / 1000.0;
            let x = next() % 2 == 1;
            let variant = if next() % 2 == 1 {
                Variant::Modified
            } else {
                Variant::Standard
            };
            let p = ProtocolParams::new(n, nprime)
                .unwrap()
                .with_variant(variant)
                .with_output(x)
                .with_epsilon(eps)
                .unwrap();
            let mut rho = DensityOp::initial();
            for _ in 0..p.nprime {
                rho.rotate(Register::Q1, p.theta_prime(), false);
                for _ in 0..p.n {
                    rho.rotate(Register::Q2, p.theta(), true);
                    rho.insert_reversible(x);
                    rho.decohere(eps);
                    if variant == Variant::Modified {
                        rho.pi_flip();
                        rho.insert_reversible(x);
                        rho.decohere(eps);
                    }
                    rho.project(Register::Q3, false);
                    assert!(
                        min_eigenvalue(&rho) >= -1e-10,
                        "negative eigenvalue at N={n} N'={nprime} eps={eps}"
                    );
                    assert!(rho.hermiticity_defect() < 1e-12);
                }
                rho.project(Register::Q2, false);
            }
            assert!(rho.trace() <= 1.0 + 1e-10);
        }
    }
}
