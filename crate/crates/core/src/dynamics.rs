//! The episode engine: reset, step and episode rollouts.
//!
//! Transition rules per state kind:
//!
//! | state    | action 0                                   | action k in 1..=b |
//! |----------|--------------------------------------------|-------------------|
//! | home     | root wait state                            | root wait state   |
//! | wait     | stay w.p. `p`, else next decision (or end) | fail              |
//! | decision | fail                                       | wait of branch k  |
//!
//! Entering an end state pays the task's end reward, entering fail pays
//! `fail_r`, every other transition pays 0. End and fail are terminal.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::config::{ConfigError, GraphSpec};
use crate::observations::{Observation, ObservationModel, Payload};
use crate::rewards::{draw_goal, DecisionTrace, RewardError, TaskSpec};
use crate::rng::RngStreams;
use crate::topology::{GraphShape, StateId, StateKind};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode; call reset first")]
    StepAfterDone,
    #[error("action {action} is outside [0, {max}]")]
    InvalidAction { action: u32, max: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// `0` is the wait action, `1..=b` choose a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub u32);

impl Action {
    pub const WAIT: Action = Action(0);

    pub fn value(self) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvCursor {
    pub state: StateId,
    pub step_count: u64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// Debug fields describing the state behind the latest observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub state_kind: StateKind,
    pub depth: u32,
    pub obs_class: u32,
}

/// One environment instance: a graph, its task, its RNG streams and a cursor.
#[derive(Debug, Clone)]
pub struct Env {
    shape: GraphShape,
    model: ObservationModel,
    task: TaskSpec,
    streams: RngStreams,
    cursor: EnvCursor,
    trace: DecisionTrace,
    last_class: u32,
    render: bool,
}

impl Env {
    /// Builds the environment; the goal comes from `reward.goal` or is drawn
    /// from the task stream of `spec.seed`.
    pub fn new(spec: &GraphSpec) -> Result<Self, EnvError> {
        Self::with_streams(spec, RngStreams::new(spec.seed))
    }

    pub fn with_streams(spec: &GraphSpec, mut streams: RngStreams) -> Result<Self, EnvError> {
        spec.validate()?;
        let shape = spec.shape()?;
        let goal = match &spec.reward.goal {
            Some(goal) => goal.clone(),
            None => draw_goal(&shape, &mut streams.task_gen),
        };
        let task = spec.task_with_goal(goal);
        let model = ObservationModel::new(spec.observation_config(), shape).map_err(ConfigError::from)?;
        Self::from_parts(shape, model, task, streams)
    }

    pub fn from_parts(
        shape: GraphShape,
        model: ObservationModel,
        task: TaskSpec,
        streams: RngStreams,
    ) -> Result<Self, EnvError> {
        task.validate(&shape)?;
        Ok(Self {
            shape,
            model,
            task,
            streams,
            cursor: EnvCursor { state: StateId::home(), step_count: 0, done: false },
            trace: DecisionTrace::new(),
            last_class: crate::observations::HOME_CLASS,
            render: true,
        })
    }

    /// With rendering off, observations carry only their class label and the
    /// augmentation stream is never touched. Labels, rewards and dynamics are
    /// identical either way.
    pub fn set_rendering(&mut self, on: bool) {
        self.render = on;
    }

    pub fn set_task(&mut self, task: TaskSpec) -> Result<(), EnvError> {
        task.validate(&self.shape)?;
        self.task = task;
        Ok(())
    }

    pub fn shape(&self) -> &GraphShape {
        &self.shape
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn model(&self) -> &ObservationModel {
        &self.model
    }

    pub fn cursor(&self) -> &EnvCursor {
        &self.cursor
    }

    pub fn decision_trace(&self) -> &DecisionTrace {
        &self.trace
    }

    /// Class label of the most recent observation.
    pub fn last_class(&self) -> u32 {
        self.last_class
    }

    pub fn info(&self) -> StepInfo {
        let state = &self.cursor.state;
        StepInfo { state_kind: state.kind(), depth: state.depth(), obs_class: self.last_class }
    }

    pub fn action_count(&self) -> u32 {
        self.shape.action_count()
    }

    fn observe(&mut self) -> Observation {
        let state = &self.cursor.state;
        let class_id = self.model.class_for_state(state, &mut self.streams.obs_choice);
        self.last_class = class_id;
        if self.render {
            self.model.render(class_id, state, &mut self.streams.obs_augment)
        } else {
            Observation { class_id, payload: Payload::Label }
        }
    }

    pub fn reset(&mut self) -> Observation {
        self.cursor.state.reset_to(StateKind::Home);
        self.cursor.step_count = 0;
        self.cursor.done = false;
        self.trace.clear();
        self.observe()
    }

    pub fn step(&mut self, action: Action) -> Result<Step, EnvError> {
        if self.cursor.done {
            return Err(EnvError::StepAfterDone);
        }
        let b = self.shape.branching();
        if action.0 > b {
            return Err(EnvError::InvalidAction { action: action.0, max: b });
        }
        let state = &mut self.cursor.state;
        match state.kind() {
            StateKind::Home => state.set_kind(StateKind::Wait),
            StateKind::Wait if action == Action::WAIT => {
                let p = self.shape.wait_probability();
                let stay = p > 0.0 && self.streams.dynamics.gen::<f64>() < p;
                if !stay {
                    let next = if state.depth() == self.shape.depth() { StateKind::End } else { StateKind::Decision };
                    state.set_kind(next);
                }
            }
            StateKind::Wait => state.reset_to(StateKind::Fail),
            StateKind::Decision if action == Action::WAIT => state.reset_to(StateKind::Fail),
            StateKind::Decision => {
                state.push_branch(action.0);
                state.set_kind(StateKind::Wait);
                self.trace.push(action.0);
            }
            StateKind::End | StateKind::Fail => unreachable!("terminal states set done"),
        }
        self.cursor.step_count += 1;
        let reward = match state.kind() {
            StateKind::End => self.task.end_reward(self.trace.as_slice(), b, &mut self.streams.reward_noise)?,
            StateKind::Fail => self.task.fail_r,
            _ => 0.0,
        };
        let done = state.kind().is_terminal();
        self.cursor.done = done;
        Ok(Step { observation: self.observe(), reward, done })
    }
}

/// An action selector. Reference oracles read the true state through `state`;
/// learners should rely on the observation only.
pub trait Policy {
    fn begin_episode(&mut self, _first: &Observation) {}

    fn act(&mut self, observation: &Observation, state: &StateId) -> Action;

    /// Feedback after each step, for learners.
    fn observe(&mut self, _action: Action, _reward: f64, _next: &Observation, _done: bool) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRecord {
    pub step: u64,
    /// State in which the action was taken.
    pub state: StateId,
    /// Class of the observation the agent saw in `state`.
    pub obs_class: u32,
    pub action: Action,
    /// Reward returned by this step.
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTranscript {
    pub records: Vec<TranscriptRecord>,
    /// State where the episode stopped (end or fail unless truncated).
    pub final_state: StateId,
    pub truncated: bool,
}

pub const TRANSCRIPT_HEADER: &str = "step,state_kind,depth,path,obs_class,action,reward,done";

impl EpisodeTranscript {
    pub fn total_return(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes one CSV row per record (no header). `path` is the branch list
    /// joined with `-`, empty for home.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for r in &self.records {
            let path: Vec<String> = r.state.path().iter().map(|c| c.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                r.state.kind(),
                r.state.depth(),
                path.join("-"),
                r.obs_class,
                r.action.0,
                r.reward,
                r.done
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        writeln!(buf, "{TRANSCRIPT_HEADER}").expect("vec write");
        self.write_csv_rows(&mut buf).expect("vec write");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Resets `env` and steps it with `policy` until the episode ends or `step_cap`
/// steps have been taken (then `truncated` is set).
pub fn run_episode<P: Policy + ?Sized>(
    env: &mut Env,
    policy: &mut P,
    step_cap: u64,
) -> Result<EpisodeTranscript, EnvError> {
    let mut obs = env.reset();
    policy.begin_episode(&obs);
    let mut records = Vec::new();
    while !env.cursor().done && env.cursor().step_count < step_cap {
        let state = env.cursor().state.clone();
        let action = policy.act(&obs, &state);
        let step = env.step(action)?;
        policy.observe(action, step.reward, &step.observation, step.done);
        records.push(TranscriptRecord {
            step: records.len() as u64,
            state,
            obs_class: obs.class_id,
            action,
            reward: step.reward,
            done: step.done,
        });
        obs = step.observation;
    }
    Ok(EpisodeTranscript { final_state: env.cursor().state.clone(), truncated: !env.cursor().done, records })
}

/// Outcome of an episode without the per-step record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub length: u64,
    pub total_return: f64,
    pub final_state: StateId,
    pub truncated: bool,
}

/// Same rollout as [`run_episode`] without allocating a transcript.
pub fn run_episode_summary<P: Policy + ?Sized>(
    env: &mut Env,
    policy: &mut P,
    step_cap: u64,
) -> Result<EpisodeSummary, EnvError> {
    let mut obs = env.reset();
    policy.begin_episode(&obs);
    let mut total_return = 0.0;
    while !env.cursor().done && env.cursor().step_count < step_cap {
        let action = policy.act(&obs, &env.cursor().state);
        let step = env.step(action)?;
        policy.observe(action, step.reward, &step.observation, step.done);
        total_return += step.reward;
        obs = step.observation;
    }
    let cursor = env.cursor();
    Ok(EpisodeSummary {
        length: cursor.step_count,
        total_return,
        final_state: cursor.state.clone(),
        truncated: !cursor.done,
    })
}

/// Replays a fixed action list; the last action repeats if the list runs out.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    actions: Vec<Action>,
    next: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: impl IntoIterator<Item = u32>) -> Self {
        Self { actions: actions.into_iter().map(Action).collect(), next: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn begin_episode(&mut self, _first: &Observation) {
        self.next = 0;
    }

    fn act(&mut self, _observation: &Observation, _state: &StateId) -> Action {
        let a = self.actions[self.next.min(self.actions.len() - 1)];
        self.next += 1;
        a
    }
}
