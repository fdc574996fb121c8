//! Plant operating model: modes, feasible actions, rewards and transitions.
//!
//! Two views of the mode chain are exposed. The full chain steps through
//! every partially mothballed and partially reactivated mode one stage at a
//! time. The reduced chain only keeps the modes that admit a real choice
//! (operational and fully mothballed) plus the absorbing abandoned mode, and
//! jumps over the fixed-action processes in a single transition whose stage
//! increment equals the process duration.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plant operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatingMode {
    Abandoned,
    Operational,
    /// Mothballing step `n` of `N_M`; `Mothballed(N_M)` is fully mothballed.
    Mothballed(u32),
    /// Reactivation step `n` of `N_R - 1`.
    Reactivating(u32),
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatingMode::Abandoned => write!(f, "A"),
            OperatingMode::Operational => write!(f, "O"),
            OperatingMode::Mothballed(n) => write!(f, "M{n}"),
            OperatingMode::Reactivating(n) => write!(f, "R{n}"),
        }
    }
}

/// Operating decision. Mode-changing actions are named after the mode they lead to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Produce,
    Suspend,
    Abandon,
    ToMothball(u32),
    ToReactivate(u32),
    ToOperational,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Produce => write!(f, "P"),
            Action::Suspend => write!(f, "S"),
            Action::Abandon => write!(f, "A"),
            Action::ToMothball(n) => write!(f, "M{n}"),
            Action::ToReactivate(n) => write!(f, "R{n}"),
            Action::ToOperational => write!(f, "O"),
        }
    }
}

/// Modes of the reduced chain. The first two carry value function approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReducedMode {
    Operational,
    Mothballed,
    Abandoned,
}

impl ReducedMode {
    pub const ALL: [ReducedMode; 3] = [
        ReducedMode::Operational,
        ReducedMode::Mothballed,
        ReducedMode::Abandoned,
    ];
    /// Modes admitting more than one action.
    pub const CHOICE: [ReducedMode; 2] = [ReducedMode::Operational, ReducedMode::Mothballed];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn has_choice(self) -> bool {
        !matches!(self, ReducedMode::Abandoned)
    }

    pub fn to_mode(self, params: &PlantParams) -> OperatingMode {
        match self {
            ReducedMode::Operational => OperatingMode::Operational,
            ReducedMode::Mothballed => OperatingMode::Mothballed(params.mothball_stages),
            ReducedMode::Abandoned => OperatingMode::Abandoned,
        }
    }

    pub fn from_mode(mode: OperatingMode, params: &PlantParams) -> Option<Self> {
        match mode {
            OperatingMode::Operational => Some(ReducedMode::Operational),
            OperatingMode::Abandoned => Some(ReducedMode::Abandoned),
            OperatingMode::Mothballed(n) if n == params.mothball_stages => {
                Some(ReducedMode::Mothballed)
            }
            _ => None,
        }
    }
}

impl fmt::Display for ReducedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReducedMode::Operational => write!(f, "O"),
            ReducedMode::Mothballed => write!(f, "M"),
            ReducedMode::Abandoned => write!(f, "A"),
        }
    }
}

/// Plant and horizon parameters. Money in millions of dollars, output in
/// millions of gallons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Number of decision stages `I`.
    pub stages: usize,
    /// Mothballing duration `N_M` in stages.
    pub mothball_stages: u32,
    /// Reactivation duration `N_R` in stages.
    pub reactivation_stages: u32,
    /// Output per stage `Q` (million gallons).
    pub output: f64,
    /// Bushels of corn per gallon.
    pub corn_per_gallon: f64,
    /// MMBtu of natural gas per gallon.
    pub gas_per_gallon: f64,
    pub produce_cost: f64,
    pub suspend_cost: f64,
    pub mothball_cost: f64,
    pub mothball_init_cost: f64,
    pub reactivation_init_cost: f64,
    pub salvage: f64,
    /// Per-stage discount factor.
    pub discount: f64,
}

impl PlantParams {
    /// Ethanol plant parameters of the benchmark instances with the given
    /// horizon. The monthly discount factor corresponds to a 0.3% annual
    /// rate, close to short Treasury yields in 2011.
    pub fn ethanol(stages: usize) -> Self {
        PlantParams {
            stages,
            mothball_stages: 1,
            reactivation_stages: 3,
            output: 8.33,
            corn_per_gallon: 0.36,
            gas_per_gallon: 0.035,
            produce_cost: 2.25,
            suspend_cost: 0.5208,
            mothball_cost: 0.02917,
            mothball_init_cost: 0.5,
            reactivation_init_cost: 2.5,
            salvage: 0.0,
            discount: (-0.003f64 / 12.0).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 2 {
            return Err(Error::domain(format!("need at least 2 stages, got {}", self.stages)));
        }
        if self.mothball_stages < 1 || self.reactivation_stages < 1 {
            return Err(Error::domain("mothballing and reactivation durations must be >= 1"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::domain(format!("discount factor {} not in (0, 1]", self.discount)));
        }
        if !(self.mothball_cost < self.suspend_cost && self.suspend_cost < self.produce_cost) {
            return Err(Error::domain(
                "costs must satisfy mothball < suspend < produce",
            ));
        }
        let all = [
            self.output,
            self.corn_per_gallon,
            self.gas_per_gallon,
            self.produce_cost,
            self.suspend_cost,
            self.mothball_cost,
            self.mothball_init_cost,
            self.reactivation_init_cost,
            self.salvage,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("plant parameters must be finite"));
        }
        Ok(())
    }

    pub fn last_stage(&self) -> usize {
        self.stages - 1
    }

    pub fn is_valid_mode(&self, mode: OperatingMode) -> bool {
        match mode {
            OperatingMode::Abandoned | OperatingMode::Operational => true,
            OperatingMode::Mothballed(n) => (1..=self.mothball_stages).contains(&n),
            OperatingMode::Reactivating(n) => n >= 1 && n < self.reactivation_stages,
        }
    }

    /// `delta^k`.
    pub fn discount_pow(&self, k: usize) -> f64 {
        self.discount.powi(k as i32)
    }
}

/// Spot prices of corn ($/bushel), ethanol ($/gallon) and natural gas ($/MMBtu).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotVector {
    pub corn: f64,
    pub ethanol: f64,
    pub gas: f64,
}

impl SpotVector {
    pub fn new(corn: f64, ethanol: f64, gas: f64) -> Result<Self> {
        let s = SpotVector { corn, ethanol, gas };
        if [corn, ethanol, gas].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!("spot prices must be finite and >= 0: {s:?}")));
        }
        Ok(s)
    }

    /// Gross production margin per gallon.
    pub fn spread(&self, params: &PlantParams) -> f64 {
        self.ethanol - params.corn_per_gallon * self.corn - params.gas_per_gallon * self.gas
    }
}

/// Feasible actions of one mode at one stage, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSet {
    actions: [Action; 4],
    len: usize,
}

impl ActionSet {
    fn from_slice(actions: &[Action]) -> Self {
        let mut buf = [Action::Abandon; 4];
        buf[..actions.len()].copy_from_slice(actions);
        ActionSet {
            actions: buf,
            len: actions.len(),
        }
    }
}

impl Deref for ActionSet {
    type Target = [Action];

    fn deref(&self) -> &[Action] {
        &self.actions[..self.len]
    }
}

fn check_stage(i: usize, params: &PlantParams) -> Result<()> {
    if i >= params.stages {
        return Err(Error::domain(format!(
            "stage {i} outside 0..{}",
            params.stages
        )));
    }
    Ok(())
}

fn check_mode(mode: OperatingMode, params: &PlantParams) -> Result<()> {
    if !params.is_valid_mode(mode) {
        return Err(Error::domain(format!("invalid operating mode {mode}")));
    }
    Ok(())
}

/// Feasible action set at stage `i` for `mode`, in the canonical order
/// produce, suspend, process transitions, stay, abandon. This order is the
/// tie-break order used by every argmax in the crate.
pub fn feasible_actions(i: usize, mode: OperatingMode, params: &PlantParams) -> Result<ActionSet> {
    check_stage(i, params)?;
    check_mode(mode, params)?;
    let last = params.last_stage();
    if i == last {
        return Ok(ActionSet::from_slice(&[Action::Abandon]));
    }
    let nm = params.mothball_stages;
    let nr = params.reactivation_stages;
    let set = match mode {
        OperatingMode::Abandoned => ActionSet::from_slice(&[Action::Abandon]),
        OperatingMode::Operational => {
            if i + nm as usize <= last {
                ActionSet::from_slice(&[
                    Action::Produce,
                    Action::Suspend,
                    Action::ToMothball(1),
                    Action::Abandon,
                ])
            } else {
                ActionSet::from_slice(&[Action::Produce, Action::Suspend, Action::Abandon])
            }
        }
        OperatingMode::Mothballed(n) if n < nm => {
            ActionSet::from_slice(&[Action::ToMothball(n + 1)])
        }
        OperatingMode::Mothballed(_) => {
            if i + nr as usize <= last {
                ActionSet::from_slice(&[
                    Action::ToReactivate(1),
                    Action::ToMothball(nm),
                    Action::Abandon,
                ])
            } else {
                ActionSet::from_slice(&[Action::ToMothball(nm), Action::Abandon])
            }
        }
        OperatingMode::Reactivating(n) if n + 1 < nr => {
            ActionSet::from_slice(&[Action::ToReactivate(n + 1)])
        }
        OperatingMode::Reactivating(_) => ActionSet::from_slice(&[Action::ToOperational]),
    };
    Ok(set)
}

/// Whether `action` is feasible for `mode` at some stage.
pub fn is_admissible(mode: OperatingMode, action: Action, params: &PlantParams) -> bool {
    if !params.is_valid_mode(mode) {
        return false;
    }
    if action == Action::Abandon {
        // Every mode is forced to abandon in the last stage.
        return true;
    }
    let nm = params.mothball_stages;
    let nr = params.reactivation_stages;
    match (mode, action) {
        (OperatingMode::Operational, Action::Produce | Action::Suspend | Action::ToMothball(1)) => {
            true
        }
        (OperatingMode::Mothballed(n), Action::ToMothball(m)) if n < nm => m == n + 1,
        (OperatingMode::Mothballed(n), Action::ToMothball(m)) => n == nm && m == nm,
        (OperatingMode::Mothballed(n), Action::ToReactivate(1)) => n == nm,
        (OperatingMode::Reactivating(n), Action::ToReactivate(m)) => n + 1 < nr && m == n + 1,
        (OperatingMode::Reactivating(n), Action::ToOperational) => n + 1 == nr,
        _ => false,
    }
}

fn check_pair(mode: OperatingMode, action: Action, params: &PlantParams) -> Result<()> {
    if !is_admissible(mode, action, params) {
        return Err(Error::domain(format!(
            "action {action} is not feasible in mode {mode}"
        )));
    }
    Ok(())
}

/// Per-stage reward ($M).
pub fn reward(
    mode: OperatingMode,
    spot: &SpotVector,
    action: Action,
    params: &PlantParams,
) -> Result<f64> {
    check_pair(mode, action, params)?;
    let nm = params.mothball_stages;
    let r = match (mode, action) {
        (OperatingMode::Operational, Action::Produce) => {
            spot.spread(params) * params.output - params.produce_cost
        }
        (OperatingMode::Operational, Action::Suspend) => -params.suspend_cost,
        (OperatingMode::Operational, Action::ToMothball(_)) => -params.mothball_init_cost,
        (OperatingMode::Mothballed(n), Action::ToMothball(_)) if n == nm => -params.mothball_cost,
        (OperatingMode::Mothballed(_), Action::ToReactivate(_)) => -params.reactivation_init_cost,
        (OperatingMode::Operational, Action::Abandon) => params.salvage,
        (OperatingMode::Mothballed(n), Action::Abandon) if n == nm => params.salvage,
        // Abandoned mode, in-process steps, and the terminal abandonment of a
        // mode caught mid-process (unreachable under the stage cutoffs).
        _ => 0.0,
    };
    Ok(r)
}

/// Next operating mode on the full chain.
pub fn mode_transition(
    mode: OperatingMode,
    action: Action,
    params: &PlantParams,
) -> Result<OperatingMode> {
    check_pair(mode, action, params)?;
    let next = match action {
        Action::Produce | Action::Suspend | Action::ToOperational => OperatingMode::Operational,
        Action::Abandon => OperatingMode::Abandoned,
        Action::ToMothball(n) => OperatingMode::Mothballed(n),
        Action::ToReactivate(n) if n >= params.reactivation_stages => OperatingMode::Operational,
        Action::ToReactivate(n) => OperatingMode::Reactivating(n),
    };
    Ok(next)
}

/// Next mode on the reduced chain, for modes in `{O, M_{N_M}, A}`.
pub fn reduced_transition(
    mode: OperatingMode,
    action: Action,
    params: &PlantParams,
) -> Result<OperatingMode> {
    let reduced = ReducedMode::from_mode(mode, params)
        .ok_or_else(|| Error::domain(format!("mode {mode} is not on the reduced chain")))?;
    check_pair(mode, action, params)?;
    Ok(reduced_successor(reduced, action).to_mode(params))
}

fn reduced_successor(mode: ReducedMode, action: Action) -> ReducedMode {
    match (mode, action) {
        (_, Action::Abandon) | (ReducedMode::Abandoned, _) => ReducedMode::Abandoned,
        (ReducedMode::Operational, Action::ToMothball(_)) => ReducedMode::Mothballed,
        (ReducedMode::Mothballed, Action::ToMothball(_)) => ReducedMode::Mothballed,
        _ => ReducedMode::Operational,
    }
}

/// Stage reached on the reduced chain after taking `action` at stage `i`.
pub fn stage_transition(
    i: usize,
    mode: OperatingMode,
    action: Action,
    params: &PlantParams,
) -> Result<usize> {
    check_stage(i, params)?;
    let reduced = ReducedMode::from_mode(mode, params)
        .ok_or_else(|| Error::domain(format!("mode {mode} is not on the reduced chain")))?;
    if !feasible_actions(i, mode, params)?.contains(&action) {
        return Err(Error::domain(format!(
            "action {action} is not feasible in mode {mode} at stage {i}"
        )));
    }
    Ok(reduced_stage_step(i, reduced, action, params))
}

fn reduced_stage_step(i: usize, mode: ReducedMode, action: Action, params: &PlantParams) -> usize {
    match (mode, action) {
        (ReducedMode::Operational, Action::ToMothball(_)) => i + params.mothball_stages as usize,
        (ReducedMode::Mothballed, Action::ToReactivate(_)) => {
            i + params.reactivation_stages as usize
        }
        _ => i + 1,
    }
}

/// One arc of the reduced decision graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub action: Action,
    pub next_stage: usize,
    pub next_mode: ReducedMode,
    /// Reward when it does not depend on prices; `None` for production.
    pub fixed_reward: Option<f64>,
    /// `delta^(next_stage - stage)`.
    pub continuation_discount: f64,
}

impl Transition {
    pub fn reward(&self, spot: &SpotVector, params: &PlantParams) -> f64 {
        match self.fixed_reward {
            Some(r) => r,
            None => spot.spread(params) * params.output - params.produce_cost,
        }
    }

    /// Whether the successor carries a value function approximation.
    pub fn has_vfa_successor(&self, params: &PlantParams) -> bool {
        self.next_mode.has_choice() && self.next_stage >= 1 && self.next_stage + 1 < params.stages
    }
}

/// Reduced-chain arcs for every stage and reduced mode, computed once per
/// parameter set and shared by the dynamic programs and the LP assembler.
#[derive(Debug, Clone)]
pub struct DecisionGraph {
    params: PlantParams,
    arcs: Vec<[Vec<Transition>; 3]>,
}

impl DecisionGraph {
    pub fn new(params: &PlantParams) -> Result<Self> {
        params.validate()?;
        let zero = SpotVector {
            corn: 0.0,
            ethanol: 0.0,
            gas: 0.0,
        };
        let mut arcs = Vec::with_capacity(params.stages);
        for i in 0..params.stages {
            let mut per_mode: [Vec<Transition>; 3] = Default::default();
            for mode in ReducedMode::ALL {
                let full = mode.to_mode(params);
                for &action in feasible_actions(i, full, params)?.iter() {
                    let next_stage = if i == params.last_stage() {
                        params.stages
                    } else {
                        reduced_stage_step(i, mode, action, params)
                    };
                    let fixed_reward = match (full, action) {
                        (OperatingMode::Operational, Action::Produce) => None,
                        _ => Some(reward(full, &zero, action, params)?),
                    };
                    per_mode[mode.index()].push(Transition {
                        action,
                        next_stage,
                        next_mode: reduced_successor(mode, action),
                        fixed_reward,
                        continuation_discount: params.discount_pow(next_stage - i),
                    });
                }
            }
            arcs.push(per_mode);
        }
        Ok(DecisionGraph {
            params: params.clone(),
            arcs,
        })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn stages(&self) -> usize {
        self.params.stages
    }

    /// Arcs leaving `(i, mode)`. In the last stage the only arc is the forced
    /// abandonment, whose `next_stage` equals the horizon length.
    pub fn arcs(&self, i: usize, mode: ReducedMode) -> &[Transition] {
        &self.arcs[i][mode.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2() -> PlantParams {
        PlantParams::ethanol(24)
    }

    #[test]
    fn operational_actions_early_stage() {
        let p = table2();
        let a = feasible_actions(0, OperatingMode::Operational, &p).unwrap();
        assert_eq!(
            &*a,
            &[Action::Produce, Action::Suspend, Action::ToMothball(1), Action::Abandon]
        );
    }

    #[test]
    fn last_stage_forces_abandonment() {
        let p = table2();
        for m in [
            OperatingMode::Operational,
            OperatingMode::Mothballed(1),
            OperatingMode::Abandoned,
        ] {
            assert_eq!(&*feasible_actions(23, m, &p).unwrap(), &[Action::Abandon]);
        }
    }

    #[test]
    fn reactivation_tail_and_cutoffs() {
        let p = table2();
        assert_eq!(
            &*feasible_actions(5, OperatingMode::Reactivating(2), &p).unwrap(),
            &[Action::ToOperational]
        );
        assert_eq!(
            &*feasible_actions(5, OperatingMode::Reactivating(1), &p).unwrap(),
            &[Action::ToReactivate(2)]
        );
        assert_eq!(
            &*feasible_actions(22, OperatingMode::Mothballed(1), &p).unwrap(),
            &[Action::ToMothball(1), Action::Abandon]
        );
        assert_eq!(
            &*feasible_actions(20, OperatingMode::Mothballed(1), &p).unwrap(),
            &[Action::ToReactivate(1), Action::ToMothball(1), Action::Abandon]
        );
        assert_eq!(
            &*feasible_actions(22, OperatingMode::Operational, &p).unwrap(),
            &[Action::Produce, Action::Suspend, Action::ToMothball(1), Action::Abandon]
        );
    }

    #[test]
    fn partial_mothball_chain() {
        let mut p = table2();
        p.mothball_stages = 3;
        assert_eq!(
            &*feasible_actions(3, OperatingMode::Mothballed(1), &p).unwrap(),
            &[Action::ToMothball(2)]
        );
        assert_eq!(
            &*feasible_actions(21, OperatingMode::Operational, &p).unwrap(),
            &[Action::Produce, Action::Suspend, Action::Abandon]
        );
        assert_eq!(
            mode_transition(OperatingMode::Mothballed(2), Action::ToMothball(3), &p).unwrap(),
            OperatingMode::Mothballed(3)
        );
    }

    #[test]
    fn invalid_inputs_are_domain_errors() {
        let p = table2();
        assert!(feasible_actions(24, OperatingMode::Operational, &p).is_err());
        assert!(feasible_actions(0, OperatingMode::Mothballed(2), &p).is_err());
        assert!(feasible_actions(0, OperatingMode::Reactivating(3), &p).is_err());
        let s = SpotVector::new(6.0, 2.5, 4.0).unwrap();
        assert!(reward(OperatingMode::Abandoned, &s, Action::Produce, &p).is_err());
        assert!(mode_transition(OperatingMode::Mothballed(1), Action::Produce, &p).is_err());
        assert!(reduced_transition(OperatingMode::Reactivating(1), Action::ToReactivate(2), &p)
            .is_err());
        assert!(SpotVector::new(-1.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn reward_table() {
        let p = table2();
        let s = SpotVector::new(6.0, 2.5, 4.0).unwrap();
        let produce = reward(OperatingMode::Operational, &s, Action::Produce, &p).unwrap();
        assert!((produce - (-0.584)).abs() < 1e-12, "{produce}");
        let cases = [
            (OperatingMode::Operational, Action::Suspend, -0.5208),
            (OperatingMode::Operational, Action::ToMothball(1), -0.5),
            (OperatingMode::Mothballed(1), Action::ToMothball(1), -0.02917),
            (OperatingMode::Mothballed(1), Action::ToReactivate(1), -2.5),
            (OperatingMode::Operational, Action::Abandon, 0.0),
            (OperatingMode::Mothballed(1), Action::Abandon, 0.0),
            (OperatingMode::Abandoned, Action::Abandon, 0.0),
            (OperatingMode::Reactivating(1), Action::ToReactivate(2), 0.0),
            (OperatingMode::Reactivating(2), Action::ToOperational, 0.0),
        ];
        for (m, a, want) in cases {
            assert_eq!(reward(m, &s, a, &p).unwrap(), want, "({m}, {a})");
        }
    }

    #[test]
    fn reward_ignores_prices_except_production() {
        let p = table2();
        let lo = SpotVector::new(1.0, 1.0, 1.0).unwrap();
        let hi = SpotVector::new(9.0, 4.0, 7.0).unwrap();
        for i in 0..p.stages {
            for m in [
                OperatingMode::Operational,
                OperatingMode::Mothballed(1),
                OperatingMode::Reactivating(1),
                OperatingMode::Reactivating(2),
                OperatingMode::Abandoned,
            ] {
                for &a in feasible_actions(i, m, &p).unwrap().iter() {
                    let same = reward(m, &lo, a, &p).unwrap() == reward(m, &hi, a, &p).unwrap();
                    assert_eq!(same, !(m == OperatingMode::Operational && a == Action::Produce));
                }
            }
        }
    }

    #[test]
    fn transitions() {
        let p = table2();
        let o = OperatingMode::Operational;
        let m = OperatingMode::Mothballed(1);
        assert_eq!(mode_transition(o, Action::Produce, &p).unwrap(), o);
        assert_eq!(mode_transition(o, Action::Suspend, &p).unwrap(), o);
        assert_eq!(mode_transition(o, Action::ToMothball(1), &p).unwrap(), m);
        assert_eq!(
            mode_transition(m, Action::ToReactivate(1), &p).unwrap(),
            OperatingMode::Reactivating(1)
        );
        assert_eq!(reduced_transition(m, Action::ToReactivate(1), &p).unwrap(), o);
        assert_eq!(reduced_transition(o, Action::ToMothball(1), &p).unwrap(), m);
        assert_eq!(reduced_transition(m, Action::ToMothball(1), &p).unwrap(), m);
        assert_eq!(
            reduced_transition(OperatingMode::Abandoned, Action::Abandon, &p).unwrap(),
            OperatingMode::Abandoned
        );
        assert_eq!(stage_transition(4, o, Action::ToMothball(1), &p).unwrap(), 5);
        assert_eq!(stage_transition(4, m, Action::ToReactivate(1), &p).unwrap(), 7);
        assert_eq!(stage_transition(4, o, Action::Produce, &p).unwrap(), 5);
        assert!(stage_transition(21, m, Action::ToReactivate(1), &p).is_err());
    }

    #[test]
    fn single_stage_reactivation_goes_straight_to_operational() {
        let mut p = table2();
        p.reactivation_stages = 1;
        let m = OperatingMode::Mothballed(1);
        assert_eq!(
            mode_transition(m, Action::ToReactivate(1), &p).unwrap(),
            OperatingMode::Operational
        );
        assert_eq!(stage_transition(4, m, Action::ToReactivate(1), &p).unwrap(), 5);
    }

    #[test]
    fn reduced_stage_jumps_stay_in_horizon() {
        for (nm, nr) in [(1, 3), (2, 2), (3, 1), (1, 1)] {
            let mut p = PlantParams::ethanol(9);
            p.mothball_stages = nm;
            p.reactivation_stages = nr;
            for i in 0..p.stages {
                for mode in ReducedMode::CHOICE {
                    let full = mode.to_mode(&p);
                    for &a in feasible_actions(i, full, &p).unwrap().iter() {
                        if i < p.last_stage() {
                            assert!(stage_transition(i, full, a, &p).unwrap() <= p.last_stage());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = table2();
        p.suspend_cost = 3.0;
        assert!(p.validate().is_err());
        let mut p = table2();
        p.discount = 1.5;
        assert!(p.validate().is_err());
        let mut p = table2();
        p.stages = 1;
        assert!(p.validate().is_err());
        assert!(table2().validate().is_ok());
    }
}
