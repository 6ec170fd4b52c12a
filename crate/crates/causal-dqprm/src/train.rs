//! Tabular Q-learning for machine-coordinated teams.
//!
//! Three trainers share the same Q-table machinery:
//!
//! * [`dqprm_train`] — fully decentralized: each agent learns against its
//!   projected machine in its own grid, with shared events advancing the
//!   machine stochastically to stand in for the missing teammates. Guarded
//!   by the strict decomposition check.
//! * [`causal_dqprm_train`] — decentralized with causal knowledge: each
//!   agent learns against the product of its projected machine and an
//!   agent-level causal DFA, and an episode is cut short the moment the
//!   best attainable reward from the current machine/DFA pair drops to
//!   zero. Guarded by the relaxed decomposition check.
//! * [`centralized_train`] — a single joint learner over the full team
//!   state, used as a baseline; it can optionally carry the team-level
//!   causal DFA and then applies the same penalty and short-circuit rule.
//!
//! All loops draw from one seeded RNG, so a config plus a seed pins down
//! the entire run, evaluations included. Policies are plain Q-tables;
//! [`execute_team`] and [`execute_centralized`] run them greedily against
//! the synchronized team environment.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compose::{check_relaxed, check_strict, BisimResult};
use crate::envs::{EpisodeCtx, SyncOracle, TeamEnv};
use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet};
use crate::grid::{Action, Cell};
use crate::harness::nearest_rank;
use crate::rm::StateId;
use crate::tilde::{build_tilde, value_iteration, TildeRm, ValueTable};
use crate::tlcd::CausalDfa;

/// Number of primitive movement actions available to a single agent.
pub const NUM_ACTIONS: usize = Action::ALL.len();

/// Hyperparameters and budgets for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Number of training episodes. The flat-loop trainers interpret
    /// `num_episodes * num_steps` as their total step budget.
    pub num_episodes: usize,
    /// Step cap per episode.
    pub num_steps: usize,
    /// Probability that an emitted shared event counts as synchronized
    /// during solo training.
    pub p_sync: f64,
    /// Q-learning step size.
    pub alpha: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Exploration rate for epsilon-greedy sampling.
    pub epsilon: f64,
    /// Cadence, in training steps, of greedy evaluation rollouts.
    pub eval_every: usize,
    /// Greedy team rollouts per evaluation point.
    pub eval_trials: usize,
    /// Greedy team rollouts behind the final success-rate estimates.
    pub post_eval_episodes: usize,
    /// Seed for the run's RNG.
    pub seed: u64,
    /// Record each agent's per-episode consumed-event trace.
    pub log_episodes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_episodes: 200,
            num_steps: 1000,
            p_sync: 0.3,
            alpha: 0.1,
            gamma: 0.9,
            epsilon: 0.15,
            eval_every: 1000,
            eval_trials: 10,
            post_eval_episodes: 50,
            seed: 0,
            log_episodes: false,
        }
    }
}

impl TrainConfig {
    /// Total training steps implied by the episode budget.
    pub fn total_steps(&self) -> usize {
        self.num_episodes * self.num_steps
    }

    /// Rejects out-of-range hyperparameters. A zero episode budget is
    /// allowed and leaves every table untouched.
    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(Error::invalid("num_steps must be positive"));
        }
        if !(self.p_sync > 0.0 && self.p_sync <= 1.0) {
            return Err(Error::invalid(format!(
                "p_sync must lie in (0, 1], got {}",
                self.p_sync
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.eval_every == 0 || self.eval_trials == 0 {
            return Err(Error::invalid("evaluation cadence and trial count must be positive"));
        }
        Ok(())
    }
}

/// A dense Q-table over (environment state, machine mark, action), with
/// epsilon-greedy sampling. "Mark" is whatever machine-side index the
/// trainer uses: a projected-machine state for the decentralized learners,
/// a team machine state or machine/DFA pair for the centralized one.
#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    num_states: usize,
    num_marks: usize,
    num_actions: usize,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    table: Vec<f64>,
}

impl QPolicy {
    pub fn new(num_states: usize, num_marks: usize, num_actions: usize, cfg: &TrainConfig) -> Self {
        QPolicy {
            num_states,
            num_marks,
            num_actions,
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            epsilon: cfg.epsilon,
            table: vec![0.0; num_states * num_marks * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_marks(&self) -> usize {
        self.num_marks
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn offset(&self, s: usize, u: usize, a: usize) -> usize {
        debug_assert!(s < self.num_states && u < self.num_marks && a < self.num_actions);
        (s * self.num_marks + u) * self.num_actions + a
    }

    /// The current value estimate for one state/mark/action triple.
    pub fn q(&self, s: usize, u: usize, a: usize) -> f64 {
        self.table[self.offset(s, u, a)]
    }

    fn max_q(&self, s: usize, u: usize) -> f64 {
        let base = self.offset(s, u, 0);
        self.table[base..base + self.num_actions]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// One temporal-difference backup:
    /// `Q(s,u,a) <- (1-alpha) Q(s,u,a) + alpha (r + gamma max_a' Q(s',u',a'))`,
    /// with the bootstrap term dropped when the transition ended the task.
    pub fn q_update(
        &mut self,
        s: usize,
        u: usize,
        a: usize,
        r: f64,
        s2: usize,
        u2: usize,
        done: bool,
    ) {
        let bootstrap = if done { 0.0 } else { self.gamma * self.max_q(s2, u2) };
        let idx = self.offset(s, u, a);
        self.table[idx] = (1.0 - self.alpha) * self.table[idx] + self.alpha * (r + bootstrap);
    }

    /// Greedy action with uniform tie-breaking.
    pub fn greedy(&self, s: usize, u: usize, rng: &mut impl Rng) -> usize {
        let base = self.offset(s, u, 0);
        let row = &self.table[base..base + self.num_actions];
        let mut best = f64::NEG_INFINITY;
        let mut ties = 0usize;
        for &v in row {
            if v > best {
                best = v;
                ties = 1;
            } else if v == best {
                ties += 1;
            }
        }
        let mut pick = rng.gen_range(0..ties);
        for (a, &v) in row.iter().enumerate() {
            if v == best {
                if pick == 0 {
                    return a;
                }
                pick -= 1;
            }
        }
        unreachable!("tie count out of sync with the Q row");
    }

    /// Epsilon-greedy action.
    pub fn sample(&self, s: usize, u: usize, rng: &mut impl Rng) -> usize {
        if rng.gen::<f64>() < self.epsilon {
            rng.gen_range(0..self.num_actions)
        } else {
            self.greedy(s, u, rng)
        }
    }

    #[cfg(test)]
    pub(crate) fn table(&self) -> &[f64] {
        &self.table
    }
}

/// One point on a run's evaluation curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    /// Training step at which the evaluation was taken.
    pub step: u64,
    /// Median greedy steps-to-completion over the evaluation trials,
    /// with failed trials counted at the episode step cap.
    pub median_steps: f64,
}

/// A value-triggered episode reset taken by a causally informed learner.
#[derive(Debug, Clone, Copy)]
pub struct ShortCircuit {
    pub agent: usize,
    /// Machine state of the pair at the reset.
    pub u: StateId,
    /// Causal-DFA state of the pair at the reset.
    pub q: StateId,
    /// Best attainable reward at the pair. Always zero; recorded so the
    /// invariant can be audited after the fact.
    pub value: f64,
}

/// The consumed-event trace of one training episode for one agent.
#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    /// `(step, event)` pairs; `step` counts the agent's own steps within
    /// the episode starting at 1.
    pub events: Vec<(usize, Event)>,
    /// Total steps the agent took in the episode.
    pub steps: usize,
}

/// Everything observed during a training run besides the policies.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub eval_curve: Vec<EvalPoint>,
    pub short_circuits: Vec<ShortCircuit>,
    /// `episode_logs[i]` lists agent i's episodes in order; empty unless
    /// `TrainConfig::log_episodes` was set. The centralized trainer logs
    /// the whole team under index 0.
    pub episode_logs: Vec<Vec<EpisodeLog>>,
    /// Fraction of post-training greedy rollouts the team completed.
    pub team_success: f64,
    /// Fraction of post-training greedy rollouts each local machine
    /// accepted.
    pub agent_success: Vec<f64>,
}

/// Trained policies plus run statistics. The decentralized trainers return
/// one policy per agent; the centralized one returns a single joint policy.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub policies: Vec<QPolicy>,
    pub stats: TrainStats,
}

/// Outcome of one greedy team rollout.
#[derive(Debug, Clone)]
pub struct Execution {
    /// Whether the team machine accepted within the step budget.
    pub success: bool,
    /// Steps taken until the run ended (acceptance, a dead state, or the
    /// budget).
    pub steps: usize,
    /// Whether each agent's independently tracked local machine accepted.
    pub local_accepts: Vec<bool>,
}

fn decomposition_rejection(kind: &str, counterexample: &[Event]) -> Error {
    let seq = if counterexample.is_empty() {
        "the empty sequence".to_string()
    } else {
        counterexample.iter().map(Event::name).collect::<Vec<_>>().join(" ")
    };
    Error::invalid(format!(
        "the {kind} decomposition criterion rejects this task; \
         team and composed projections disagree on: {seq}"
    ))
}

fn local_alphabets(env: &TeamEnv) -> Vec<EventAlphabet> {
    (0..env.num_agents()).map(|i| env.local(i).machine().alphabet().clone()).collect()
}

/// Runs the trained policies greedily in the synchronized team environment.
///
/// Each agent follows its own policy over its own machine state, advanced
/// by the events in the team label it can observe; an agent whose local
/// machine has accepted is frozen in place. The run ends at team
/// acceptance, at a dead team state, or after `max_steps` steps.
pub fn execute_team(
    env: &TeamEnv,
    policies: &[QPolicy],
    max_steps: usize,
    rng: &mut impl Rng,
) -> Result<Execution> {
    let n = env.num_agents();
    if policies.len() != n {
        return Err(Error::invalid(format!(
            "expected one policy per agent ({n}), got {}",
            policies.len()
        )));
    }
    for (i, pol) in policies.iter().enumerate() {
        if pol.num_marks() != env.local(i).machine().num_states() {
            return Err(Error::invalid(format!(
                "policy {i} indexes {} machine states but agent {i}'s machine has {}",
                pol.num_marks(),
                env.local(i).machine().num_states()
            )));
        }
    }

    let (mut state, ctx) = env.reset(rng);
    let mut locals: Vec<StateId> = (0..n).map(|i| env.local(i).machine().initial()).collect();
    let mut steps = 0;
    for _ in 0..max_steps {
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let local = env.local(i);
            if local.machine().is_terminal(locals[i]) {
                actions.push(Action::Stay);
            } else {
                let s = local.state_index(state.cells[i]);
                actions.push(Action::from_index(policies[i].greedy(s, locals[i], rng)));
            }
        }
        let out = env.team_step(&state, &actions, &ctx)?;
        for i in 0..n {
            let machine = env.local(i).machine();
            for e in out.label.iter() {
                if machine.alphabet().contains(e) {
                    if let Some(next) = machine.delta(locals[i], e) {
                        locals[i] = next;
                    }
                }
            }
        }
        steps += 1;
        state = out.next;
        if env.is_done_state(state.u) {
            break;
        }
    }
    let success = env.team_machine().is_terminal(state.u);
    let local_accepts =
        (0..n).map(|i| env.local(i).machine().is_terminal(locals[i])).collect();
    Ok(Execution { success, steps, local_accepts })
}

/// Runs a joint policy greedily. When the policy was trained with the
/// team-level causal DFA, the same machine/DFA pair is tracked here so the
/// policy sees the marks it was trained on.
pub fn execute_centralized(
    env: &TeamEnv,
    policy: &QPolicy,
    tilde: Option<&TildeRm>,
    max_steps: usize,
    rng: &mut impl Rng,
) -> Result<Execution> {
    let n = env.num_agents();
    let (mut state, ctx) = env.reset(rng);
    let mut locals: Vec<StateId> = (0..n).map(|i| env.local(i).machine().initial()).collect();
    let mut mark = match tilde {
        Some(t) => t.initial(),
        None => env.team_machine().initial(),
    };
    let mut steps = 0;
    for _ in 0..max_steps {
        let s = joint_index(env, &state.cells);
        let joint = policy.greedy(s, mark, rng);
        let actions = decode_joint_action(joint, n);
        let out = env.team_step(&state, &actions, &ctx)?;
        mark = match tilde {
            Some(t) => {
                let mut m = mark;
                for e in out.label.iter() {
                    if let Some((next, _)) = t.step(m, e)? {
                        m = next;
                    }
                }
                debug_assert_eq!(t.pair(m).0, out.next.u);
                m
            }
            None => out.next.u,
        };
        for i in 0..n {
            let machine = env.local(i).machine();
            for e in out.label.iter() {
                if machine.alphabet().contains(e) {
                    if let Some(next) = machine.delta(locals[i], e) {
                        locals[i] = next;
                    }
                }
            }
        }
        steps += 1;
        state = out.next;
        if env.is_done_state(state.u) {
            break;
        }
    }
    let success = env.team_machine().is_terminal(state.u);
    let local_accepts =
        (0..n).map(|i| env.local(i).machine().is_terminal(locals[i])).collect();
    Ok(Execution { success, steps, local_accepts })
}

/// Dense index of a joint cell configuration, agent 0 varying fastest.
pub(crate) fn joint_index(env: &TeamEnv, cells: &[Cell]) -> usize {
    let mut idx = 0;
    for i in (0..env.num_agents()).rev() {
        idx = idx * env.local(i).state_count() + env.local(i).state_index(cells[i]);
    }
    idx
}

/// Number of joint cell configurations.
pub(crate) fn joint_state_count(env: &TeamEnv) -> usize {
    (0..env.num_agents()).map(|i| env.local(i).state_count()).product()
}

/// Splits a joint action index into per-agent actions, agent 0 in the
/// lowest digit.
pub(crate) fn decode_joint_action(joint: usize, n: usize) -> Vec<Action> {
    let mut rest = joint;
    (0..n)
        .map(|_| {
            let a = Action::from_index(rest % NUM_ACTIONS);
            rest /= NUM_ACTIONS;
            a
        })
        .collect()
}

fn median_capped(samples: &mut Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    nearest_rank(samples, 50.0)
}

fn eval_team_policies(
    env: &TeamEnv,
    policies: &[QPolicy],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut samples = Vec::with_capacity(cfg.eval_trials);
    for _ in 0..cfg.eval_trials {
        let ex = execute_team(env, policies, cfg.num_steps, rng)?;
        samples.push(if ex.success { ex.steps as f64 } else { cfg.num_steps as f64 });
    }
    Ok(median_capped(&mut samples))
}

fn eval_centralized_policy(
    env: &TeamEnv,
    policy: &QPolicy,
    tilde: Option<&TildeRm>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut samples = Vec::with_capacity(cfg.eval_trials);
    for _ in 0..cfg.eval_trials {
        let ex = execute_centralized(env, policy, tilde, cfg.num_steps, rng)?;
        samples.push(if ex.success { ex.steps as f64 } else { cfg.num_steps as f64 });
    }
    Ok(median_capped(&mut samples))
}

fn success_rates<F>(n: usize, episodes: usize, mut rollout: F) -> Result<(f64, Vec<f64>)>
where
    F: FnMut() -> Result<Execution>,
{
    if episodes == 0 {
        return Ok((0.0, vec![0.0; n]));
    }
    let mut team = 0usize;
    let mut agents = vec![0usize; n];
    for _ in 0..episodes {
        let ex = rollout()?;
        if ex.success {
            team += 1;
        }
        for (i, &ok) in ex.local_accepts.iter().enumerate() {
            if ok {
                agents[i] += 1;
            }
        }
    }
    let denom = episodes as f64;
    Ok((team as f64 / denom, agents.into_iter().map(|c| c as f64 / denom).collect()))
}

/// Fully decentralized Q-learning against the projected machines.
///
/// Rejects the task (with the distinguishing sequence in the error) unless
/// the team machine is bisimilar to the composition of its projections.
/// Each agent then trains alone: solo grid, projected machine, and shared
/// events advancing with probability `p_sync` when emitted. Completed
/// agents sit out the rest of the episode.
pub fn dqprm_train(env: &TeamEnv, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let n = env.num_agents();
    match check_strict(env.team_machine(), &local_alphabets(env))? {
        BisimResult::Bisimilar { .. } => {}
        BisimResult::NotBisimilar { counterexample } => {
            return Err(decomposition_rejection("strict", &counterexample));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sync = SyncOracle::training(cfg.p_sync)?;
    let mut policies: Vec<QPolicy> = (0..n)
        .map(|i| {
            QPolicy::new(
                env.local(i).state_count(),
                env.local(i).machine().num_states(),
                NUM_ACTIONS,
                cfg,
            )
        })
        .collect();
    let mut stats = TrainStats { episode_logs: vec![Vec::new(); n], ..Default::default() };

    let mut global_step: u64 = 0;
    for _ in 0..cfg.num_episodes {
        let mut cells: Vec<Cell> = (0..n).map(|i| env.local(i).start()).collect();
        let mut marks: Vec<StateId> = (0..n).map(|i| env.local(i).machine().initial()).collect();
        let mut ctxs: Vec<EpisodeCtx> = Vec::with_capacity(n);
        for i in 0..n {
            ctxs.push(env.local(i).draw_ctx(&mut rng));
        }
        let mut logs: Vec<EpisodeLog> = vec![EpisodeLog::default(); n];

        for _ in 0..cfg.num_steps {
            for i in 0..n {
                let local = env.local(i);
                let machine = local.machine();
                if machine.is_terminal(marks[i]) {
                    continue; // task complete: idle until the episode ends
                }
                let (s, u) = (cells[i], marks[i]);
                let si = local.state_index(s);
                let a = policies[i].sample(si, u, &mut rng);
                let s2 = local.local_step(s, u, Action::from_index(a));
                let mut u2 = u;
                let mut r = 0.0;
                if let Some(e) = local.local_label(s, u, s2, &ctxs[i]) {
                    let sharers = env.sharers(&e)?.len();
                    if sync.advances(sharers, &mut rng) {
                        let (next, reward) = machine.step(u, &e)?;
                        u2 = next;
                        r += reward;
                        if cfg.log_episodes {
                            let step_no = logs[i].steps + 1;
                            logs[i].events.push((step_no, e));
                        }
                    }
                }
                policies[i].q_update(
                    si,
                    u,
                    a,
                    r,
                    local.state_index(s2),
                    u2,
                    machine.is_terminal(u2),
                );
                cells[i] = s2;
                marks[i] = u2;
                logs[i].steps += 1;
            }
            global_step += 1;
            if global_step % cfg.eval_every as u64 == 0 {
                let median = eval_team_policies(env, &policies, cfg, &mut rng)?;
                stats.eval_curve.push(EvalPoint { step: global_step, median_steps: median });
            }
        }
        if cfg.log_episodes {
            for i in 0..n {
                stats.episode_logs[i].push(std::mem::take(&mut logs[i]));
            }
        }
    }

    let (team, agents) = success_rates(n, cfg.post_eval_episodes, || {
        execute_team(env, &policies, cfg.num_steps, &mut rng)
    })?;
    stats.team_success = team;
    stats.agent_success = agents;
    Ok(TrainRun { policies, stats })
}

struct Cursor {
    cell: Cell,
    pair: usize,
    steps: usize,
    ctx: EpisodeCtx,
    log: EpisodeLog,
}

/// Decentralized Q-learning with causal knowledge.
///
/// Rejects the task unless the relaxed decomposition check (modulo the
/// team-level causal DFA) holds; the error carries the distinguishing
/// sequence. Each agent then learns against its projected machine crossed
/// with its own causal DFA: transitions that drive the DFA into its
/// rejecting sink pay -1, and an episode restarts as soon as the best
/// attainable reward from the current pair is zero — which also covers
/// ordinary completion, so the run is a single flat loop over the total
/// step budget with per-agent episode cursors.
pub fn causal_dqprm_train(
    env: &TeamEnv,
    cfg: &TrainConfig,
    team_causal: &CausalDfa,
    agent_causal: &[CausalDfa],
) -> Result<TrainRun> {
    cfg.validate()?;
    let n = env.num_agents();
    if agent_causal.len() != n {
        return Err(Error::invalid(format!(
            "expected one causal DFA per agent ({n}), got {}",
            agent_causal.len()
        )));
    }
    match check_relaxed(env.team_machine(), &local_alphabets(env), team_causal.dfa())? {
        BisimResult::Bisimilar { .. } => {}
        BisimResult::NotBisimilar { counterexample } => {
            return Err(decomposition_rejection("relaxed", &counterexample));
        }
    }

    let mut tildes: Vec<TildeRm> = Vec::with_capacity(n);
    let mut values: Vec<ValueTable> = Vec::with_capacity(n);
    for i in 0..n {
        let tilde = build_tilde(env.local(i).machine(), &agent_causal[i])?;
        values.push(value_iteration(&tilde)?);
        tildes.push(tilde);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sync = SyncOracle::training(cfg.p_sync)?;
    let mut policies: Vec<QPolicy> = (0..n)
        .map(|i| {
            QPolicy::new(
                env.local(i).state_count(),
                env.local(i).machine().num_states(),
                NUM_ACTIONS,
                cfg,
            )
        })
        .collect();
    let mut stats = TrainStats { episode_logs: vec![Vec::new(); n], ..Default::default() };

    let mut cursors: Vec<Cursor> = Vec::with_capacity(n);
    for i in 0..n {
        cursors.push(Cursor {
            cell: env.local(i).start(),
            pair: tildes[i].initial(),
            steps: 0,
            ctx: env.local(i).draw_ctx(&mut rng),
            log: EpisodeLog::default(),
        });
    }

    let total = cfg.total_steps() as u64;
    for t in 1..=total {
        for i in 0..n {
            let local = env.local(i);
            let tilde = &tildes[i];

            let value = values[i].value_by_id(cursors[i].pair);
            if cursors[i].steps > cfg.num_steps || value == 0.0 {
                if cursors[i].steps <= cfg.num_steps {
                    // Value-triggered cut. Only ever legal at a pair with
                    // nothing left to gain.
                    assert!(
                        value == 0.0,
                        "short-circuit reset at a pair with positive value {value}"
                    );
                    let (u, q) = tilde.pair(cursors[i].pair);
                    stats.short_circuits.push(ShortCircuit { agent: i, u, q, value });
                }
                if cfg.log_episodes {
                    let mut log = std::mem::take(&mut cursors[i].log);
                    log.steps = cursors[i].steps;
                    stats.episode_logs[i].push(log);
                }
                cursors[i].cell = local.start();
                cursors[i].pair = tilde.initial();
                cursors[i].steps = 0;
                cursors[i].ctx = local.draw_ctx(&mut rng);
            }

            let (s, pair) = (cursors[i].cell, cursors[i].pair);
            let (u, _) = tilde.pair(pair);
            let si = local.state_index(s);
            let a = policies[i].sample(si, u, &mut rng);
            let s2 = local.local_step(s, u, Action::from_index(a));
            let mut pair2 = pair;
            let mut r = 0.0;
            if let Some(e) = local.local_label(s, u, s2, &cursors[i].ctx) {
                let sharers = env.sharers(&e)?.len();
                if sync.advances(sharers, &mut rng) {
                    if let Some((next, reward)) = tilde.step(pair, &e)? {
                        pair2 = next;
                        r += f64::from(reward);
                        if cfg.log_episodes {
                            let step_no = cursors[i].steps + 1;
                            cursors[i].log.events.push((step_no, e));
                        }
                    }
                }
            }
            let (u2, _) = tilde.pair(pair2);
            policies[i].q_update(
                si,
                u,
                a,
                r,
                local.state_index(s2),
                u2,
                tilde.is_terminal(pair2),
            );
            cursors[i].cell = s2;
            cursors[i].pair = pair2;
            cursors[i].steps += 1;
        }
        if t % cfg.eval_every as u64 == 0 {
            let median = eval_team_policies(env, &policies, cfg, &mut rng)?;
            stats.eval_curve.push(EvalPoint { step: t, median_steps: median });
        }
    }
    if cfg.log_episodes {
        for i in 0..n {
            let mut log = std::mem::take(&mut cursors[i].log);
            log.steps = cursors[i].steps;
            stats.episode_logs[i].push(log);
        }
    }

    let (team, agents) = success_rates(n, cfg.post_eval_episodes, || {
        execute_team(env, &policies, cfg.num_steps, &mut rng)
    })?;
    stats.team_success = team;
    stats.agent_success = agents;
    Ok(TrainRun { policies, stats })
}

/// Interval that must contain the team success rate, derived from the
/// per-agent rates alone: `[max(0, sum - (N-1)) - 3s, min + 3s]` where `s`
/// is the largest binomial standard error among the estimates.
///
/// When every episode's team acceptance coincides with the conjunction of
/// the local acceptances, the empirical team rate necessarily lies inside
/// even the unwidened interval; the `3s` margin covers estimation noise.
pub fn frechet_bounds(agent_rates: &[f64], episodes: usize) -> (f64, f64) {
    assert!(!agent_rates.is_empty(), "no per-agent rates");
    assert!(episodes > 0, "bounds need at least one episode");
    let n = agent_rates.len() as f64;
    let sum: f64 = agent_rates.iter().sum();
    let min = agent_rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let se = agent_rates
        .iter()
        .map(|&r| (r * (1.0 - r) / episodes as f64).sqrt())
        .fold(0.0_f64, f64::max);
    ((sum - (n - 1.0)).max(0.0) - 3.0 * se, min + 3.0 * se)
}

/// Centralized Q-learning over the joint state, the baseline both
/// decentralized trainers are compared against.
///
/// One table indexes the joint cell configuration, the team machine state,
/// and the joint action. With a team-level causal DFA supplied, the mark
/// becomes the machine/DFA pair, sink entry pays -1, and episodes restart
/// at zero-value pairs exactly as in the decentralized causal trainer.
pub fn centralized_train(
    env: &TeamEnv,
    cfg: &TrainConfig,
    team_causal: Option<&CausalDfa>,
) -> Result<TrainRun> {
    cfg.validate()?;
    let n = env.num_agents();
    let tilde = match team_causal {
        Some(c) => Some(build_tilde(env.team_machine(), c)?),
        None => None,
    };
    let values = match &tilde {
        Some(t) => Some(value_iteration(t)?),
        None => None,
    };
    let num_marks = match &tilde {
        Some(t) => t.num_pairs(),
        None => env.team_machine().num_states(),
    };
    let joint_actions = NUM_ACTIONS.pow(n as u32);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = QPolicy::new(joint_state_count(env), num_marks, joint_actions, cfg);
    let mut stats = TrainStats { episode_logs: vec![Vec::new()], ..Default::default() };

    let initial_mark = |t: &Option<TildeRm>| match t {
        Some(t) => t.initial(),
        None => env.team_machine().initial(),
    };
    let (mut state, mut ctx) = env.reset(&mut rng);
    let mut mark = initial_mark(&tilde);
    let mut steps = 0usize;
    let mut log = EpisodeLog::default();

    let total = cfg.total_steps() as u64;
    for t in 1..=total {
        let finished = match (&tilde, &values) {
            (Some(_), Some(vt)) => vt.value_by_id(mark) == 0.0,
            _ => env.is_done_state(mark),
        };
        if steps > cfg.num_steps || finished {
            if let Some(vt) = &values {
                if steps <= cfg.num_steps {
                    let value = vt.value_by_id(mark);
                    assert!(
                        value == 0.0,
                        "short-circuit reset at a pair with positive value {value}"
                    );
                    let (u, q) = tilde.as_ref().expect("value table without tilde").pair(mark);
                    stats.short_circuits.push(ShortCircuit { agent: 0, u, q, value });
                }
            }
            if cfg.log_episodes {
                let mut finished_log = std::mem::take(&mut log);
                finished_log.steps = steps;
                stats.episode_logs[0].push(finished_log);
            }
            let fresh = env.reset(&mut rng);
            state = fresh.0;
            ctx = fresh.1;
            mark = initial_mark(&tilde);
            steps = 0;
        }

        let s = joint_index(env, &state.cells);
        let joint = policy.sample(s, mark, &mut rng);
        let actions = decode_joint_action(joint, n);
        let out = env.team_step(&state, &actions, &ctx)?;
        let (mark2, r, done) = match &tilde {
            Some(tl) => {
                let mut m = mark;
                let mut r = 0.0;
                for e in out.label.iter() {
                    if let Some((next, reward)) = tl.step(m, e)? {
                        m = next;
                        r += f64::from(reward);
                    }
                }
                debug_assert_eq!(tl.pair(m).0, out.next.u);
                (m, r, tl.is_terminal(m))
            }
            None => (out.next.u, out.reward, env.team_machine().is_terminal(out.next.u)),
        };
        if cfg.log_episodes {
            for e in out.label.iter() {
                log.events.push((steps + 1, e.clone()));
            }
        }
        policy.q_update(s, mark, joint, r, joint_index(env, &out.next.cells), mark2, done);
        state = out.next;
        mark = mark2;
        steps += 1;

        if t % cfg.eval_every as u64 == 0 {
            let median = eval_centralized_policy(env, &policy, tilde.as_ref(), cfg, &mut rng)?;
            stats.eval_curve.push(EvalPoint { step: t, median_steps: median });
        }
    }
    if cfg.log_episodes {
        let mut finished_log = std::mem::take(&mut log);
        finished_log.steps = steps;
        stats.episode_logs[0].push(finished_log);
    }

    let (team, agents) = success_rates(n, cfg.post_eval_episodes, || {
        execute_centralized(env, &policy, tilde.as_ref(), cfg.num_steps, &mut rng)
    })?;
    stats.team_success = team;
    stats.agent_success = agents;
    Ok(TrainRun { policies: vec![policy], stats })
}
