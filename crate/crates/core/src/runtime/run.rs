use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use log::info;
use serde::{Deserialize, Serialize};

use super::{IngestQueue, Node, StepReport};

/// Dispatched to the agent that took an action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub step: u64,
    pub agent: String,
    pub action: String,
    pub outcome: usize,
}

pub trait Dispatcher {
    fn dispatch(&mut self, cmd: &ActionCommand) -> io::Result<()>;
}

/// Writes one JSON object per line.
pub struct NdjsonDispatcher<W: Write> {
    out: W,
}

impl<W: Write> NdjsonDispatcher<W> {
    pub fn new(out: W) -> Self {
        NdjsonDispatcher { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Dispatcher for NdjsonDispatcher<W> {
    fn dispatch(&mut self, cmd: &ActionCommand) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, cmd)?;
        self.out.write_all(b"\n")
    }
}

/// Agents that acknowledge every command without acting on it.
#[derive(Clone, Debug, Default)]
pub struct SimulatedAgents {
    pub acknowledged: BTreeMap<String, Vec<ActionCommand>>,
}

impl Dispatcher for SimulatedAgents {
    fn dispatch(&mut self, cmd: &ActionCommand) -> io::Result<()> {
        info!("{} acknowledges {} at step {}", cmd.agent, cmd.action, cmd.step);
        self.acknowledged
            .entry(cmd.agent.clone())
            .or_default()
            .push(cmd.clone());
        Ok(())
    }
}

/// A source of sensor updates driven by the loop.
pub trait Feed {
    /// Enqueues every update due before step `step` runs.
    fn before_step(&mut self, step: u64, queue: &IngestQueue);
    /// Whether more updates are still expected.
    fn pending(&self) -> bool;
    /// Blocks until new input may have arrived, the feed closes or
    /// `timeout` elapses. Called when no agent had anything to do.
    fn wait(&mut self, _timeout: Option<Duration>) {}
}

pub struct NoFeed;

impl Feed for NoFeed {
    fn before_step(&mut self, _: u64, _: &IngestQueue) {}

    fn pending(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_steps: u64,
    pub wall: Option<Duration>,
    /// Consecutive non-committing steps with nothing queued after which
    /// the loop stops.
    pub quiesce: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 10_000,
            wall: None,
            quiesce: 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("trace write failed: {0}")]
    Trace(io::Error),
    #[error("action dispatch failed: {0}")]
    Dispatch(io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub commits: usize,
    /// Attempted decisions rejected by the safety check.
    pub rejections: usize,
    pub violations: usize,
    /// Steps whose every attempted decision was unsafe.
    pub unsafe_only_steps: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub reports: Vec<StepReport>,
}

impl Trace {
    pub fn summary(&self) -> TraceSummary {
        let mut s = TraceSummary {
            steps: self.reports.len(),
            ..Default::default()
        };
        for r in &self.reports {
            s.commits += r.committed as usize;
            s.unsafe_only_steps += r.unsafe_only() as usize;
            for a in &r.attempts {
                if !a.verdict.safe {
                    s.rejections += 1;
                    s.violations += a.verdict.violations.len();
                }
            }
        }
        s
    }
}

/// Steps `node` until a limit is hit or it has been quiescent for
/// `limits.quiesce` steps, writing one trace line per step.
pub fn run_loop(
    node: &mut Node,
    limits: &Limits,
    feed: &mut dyn Feed,
    trace_out: &mut dyn Write,
    dispatcher: &mut dyn Dispatcher,
) -> Result<Trace, RunError> {
    let started = Instant::now();
    let mut trace = Trace::default();
    let mut idle = 0;
    let queue = node.queue();
    for _ in 0..limits.max_steps {
        if limits.wall.is_some_and(|w| started.elapsed() >= w) {
            info!("wall-clock limit reached");
            break;
        }
        feed.before_step(node.step_count() + 1, &queue);
        let (report, command) = node.step_once();
        let line = serde_json::to_string(&report).expect("report serializes");
        writeln!(trace_out, "{line}").map_err(RunError::Trace)?;
        if let Some(cmd) = command {
            dispatcher.dispatch(&cmd).map_err(RunError::Dispatch)?;
        }
        let pending = feed.pending();
        let queued = !queue.is_empty();
        if report.committed || queued || pending {
            idle = 0;
        } else {
            idle += 1;
        }
        if pending && !queued && report.agent.is_none() {
            feed.wait(limits.wall.map(|w| w.saturating_sub(started.elapsed())));
        }
        trace.reports.push(report);
        if limits.quiesce > 0 && idle >= limits.quiesce {
            info!("quiescent after {} steps", trace.reports.len());
            break;
        }
    }
    trace_out.flush().map_err(RunError::Trace)?;
    Ok(trace)
}
