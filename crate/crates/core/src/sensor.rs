//! Simulated sensors: scripted scenarios whose raw readings pass through a
//! declarative conversion table before reaching the node's queue.
//!
//! A conversion table is TOML with one `[[rule]]` entry per mapping:
//!
//! ```toml
//! [[rule]]
//! channel = "proximity"
//! comparator = "<"
//! threshold = 0.5
//! kind = "belief"          # default
//! op = "insert"
//! atom = "obstacle(near)"
//! ```
//!
//! Numeric comparators are `<`, `<=`, `>`, `>=`, `==` and `!=` and need a
//! `threshold`. `is` matches a symbolic payload equal to `value`, and `any`
//! matches every payload. The atom template may mention `{payload}`. The
//! first matching rule of the record's channel wins.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::mental::Engine;
use crate::runtime::{
    run_loop, Dispatcher, Feed, IngestQueue, Limits, Node, NodeError, RunError, Trace, UpdateKind,
    UpdateOp, UpdateRecord,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Number(f64),
    Symbol(String),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Number(x) => write!(f, "{x}"),
            Payload::Symbol(s) => f.write_str(s),
        }
    }
}

/// A reading before data processing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub t: u64,
    pub agent: String,
    pub channel: String,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "is")]
    Is,
    #[serde(rename = "any")]
    Any,
}

fn belief() -> UpdateKind {
    UpdateKind::Belief
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionRule {
    pub channel: String,
    pub comparator: Comparator,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default = "belief")]
    pub kind: UpdateKind,
    pub op: UpdateOp,
    pub atom: String,
}

impl ConversionRule {
    fn matches(&self, p: &Payload) -> bool {
        use Comparator::*;
        match (self.comparator, p) {
            (Any, _) => true,
            (Is, Payload::Symbol(s)) => self.value.as_deref() == Some(s),
            (Is, Payload::Number(_)) => false,
            (_, Payload::Symbol(_)) => false,
            (c, Payload::Number(x)) => {
                let t = self.threshold.unwrap_or(f64::NAN);
                match c {
                    Lt => *x < t,
                    Le => *x <= t,
                    Gt => *x > t,
                    Ge => *x >= t,
                    Eq => *x == t,
                    Ne => *x != t,
                    Is | Any => unreachable!(),
                }
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("cannot read conversion table: {0}")]
    Io(#[from] io::Error),
    #[error("invalid conversion table: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("rule {rule}: comparator `{comparator}` needs `{field}`")]
    Missing {
        rule: usize,
        comparator: String,
        field: &'static str,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionTable {
    #[serde(default, rename = "rule")]
    pub rules: Vec<ConversionRule>,
}

impl ConversionTable {
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let table: ConversionTable = toml::from_str(text)?;
        for (i, r) in table.rules.iter().enumerate() {
            let field = match r.comparator {
                Comparator::Any => None,
                Comparator::Is => r.value.is_none().then_some("value"),
                _ => r.threshold.is_none().then_some("threshold"),
            };
            if let Some(field) = field {
                return Err(TableError::Missing {
                    rule: i,
                    comparator: serde_json::to_string(&r.comparator)
                        .unwrap_or_default()
                        .trim_matches('"')
                        .to_string(),
                    field,
                });
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConversionError {
    #[error("no conversion rule for channel `{0}`")]
    UnknownChannel(String),
    #[error("payload {payload} on channel `{channel}` matches no rule")]
    Unmatched { channel: String, payload: String },
}

/// Maps a raw reading to a ground-atom update using the first matching rule.
pub fn data_processing(
    r: &RawRecord,
    table: &ConversionTable,
) -> Result<UpdateRecord, ConversionError> {
    let mut known = false;
    for rule in table.rules.iter().filter(|x| x.channel == r.channel) {
        known = true;
        if rule.matches(&r.payload) {
            return Ok(UpdateRecord {
                agent: r.agent.clone(),
                kind: rule.kind,
                op: rule.op,
                atom: rule.atom.replace("{payload}", &r.payload.to_string()),
            });
        }
    }
    if known {
        Err(ConversionError::Unmatched {
            channel: r.channel.clone(),
            payload: r.payload.to_string(),
        })
    } else {
        Err(ConversionError::UnknownChannel(r.channel.clone()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioInput {
    Update(UpdateRecord),
    Raw(RawRecord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioEntry {
    /// Step before which the entry is delivered.
    pub t: u64,
    pub input: ScenarioInput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectLine {
    t: u64,
    agent: String,
    kind: UpdateKind,
    op: UpdateOp,
    atom: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Direct(DirectLine),
    Raw(RawRecord),
    Meta(ScenarioMeta),
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: not a scenario record: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: t = {t} precedes the previous record's t = {previous}")]
    Order { line: usize, t: u64, previous: u64 },
    #[error("line {line}: metadata must come before every record")]
    LateMeta { line: usize },
}

fn parse_line(text: &str, line: usize) -> Result<Line, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
        line,
        message: e.to_string(),
    })
}

impl ScenarioInput {
    fn from_direct(d: DirectLine) -> (u64, Self) {
        (
            d.t,
            ScenarioInput::Update(UpdateRecord {
                agent: d.agent,
                kind: d.kind,
                op: d.op,
                atom: d.atom,
            }),
        )
    }

    /// Converts raw readings through `table`.
    pub fn resolve(&self, table: &ConversionTable) -> Result<UpdateRecord, ConversionError> {
        match self {
            ScenarioInput::Update(u) => Ok(u.clone()),
            ScenarioInput::Raw(r) => data_processing(r, table),
        }
    }
}

/// A scripted sequence of sensor inputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scenario {
    pub meta: ScenarioMeta,
    pub entries: Vec<ScenarioEntry>,
}

impl Scenario {
    /// Parses NDJSON. Each line is a direct update
    /// `{"t","agent","kind","op","atom"}`, a raw reading
    /// `{"t","agent","channel","payload"}` or, first, a metadata object
    /// `{"name","description"}`. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario::default();
        let mut previous = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let (t, input) = match parse_line(raw, line)? {
                Line::Meta(m) => {
                    if !s.entries.is_empty() {
                        return Err(ScenarioError::LateMeta { line });
                    }
                    s.meta = m;
                    continue;
                }
                Line::Direct(d) => ScenarioInput::from_direct(d),
                Line::Raw(r) => (r.t, ScenarioInput::Raw(r)),
            };
            if t < previous {
                return Err(ScenarioError::Order { line, t, previous });
            }
            previous = t;
            s.entries.push(ScenarioEntry { t, input });
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// What happened to one scenario entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub entry: usize,
    pub t: u64,
    /// Step the entry was delivered before.
    pub step: u64,
    pub update: Option<UpdateRecord>,
    pub seq: Option<u64>,
    pub error: Option<String>,
}

/// Delivers scenario entries synchronously before their scheduled step.
pub struct ScenarioFeed {
    scenario: Scenario,
    table: ConversionTable,
    next: usize,
    pub log: Vec<Delivery>,
}

impl ScenarioFeed {
    pub fn new(scenario: Scenario, table: ConversionTable) -> Self {
        ScenarioFeed {
            scenario,
            table,
            next: 0,
            log: Vec::new(),
        }
    }
}

impl Feed for ScenarioFeed {
    fn before_step(&mut self, step: u64, queue: &IngestQueue) {
        while let Some(e) = self.scenario.entries.get(self.next) {
            if e.t > step {
                break;
            }
            let mut d = Delivery {
                entry: self.next,
                t: e.t,
                step,
                update: None,
                seq: None,
                error: None,
            };
            match e.input.resolve(&self.table) {
                Ok(u) => {
                    match queue.ingest(u.clone()) {
                        Ok(seq) => d.seq = Some(seq),
                        Err(err) => d.error = Some(err.to_string()),
                    }
                    d.update = Some(u);
                }
                Err(err) => {
                    warn!("scenario entry {}: {err}", self.next);
                    d.error = Some(err.to_string());
                }
            }
            self.log.push(d);
            self.next += 1;
        }
    }

    fn pending(&self) -> bool {
        self.next < self.scenario.entries.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioRunError {
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub trace: Trace,
    pub deliveries: Vec<Delivery>,
}

/// Runs a fresh node over `scenario`.
pub fn run_scenario(
    engine: Arc<Engine>,
    scenario: Scenario,
    table: ConversionTable,
    seed: u64,
    limits: &Limits,
    trace_out: &mut dyn Write,
    dispatcher: &mut dyn Dispatcher,
) -> Result<ScenarioRun, ScenarioRunError> {
    let mut node = Node::new(engine, seed)?;
    let mut feed = ScenarioFeed::new(scenario, table);
    let trace = run_loop(&mut node, limits, &mut feed, trace_out, dispatcher)?;
    info!("{} scenario entries delivered", feed.log.len());
    Ok(ScenarioRun {
        trace,
        deliveries: feed.log,
    })
}

/// Reads NDJSON records from a stream on a producer thread and enqueues them
/// as they arrive, ignoring `t`. Metadata lines are skipped.
pub struct StreamFeed {
    open: Arc<AtomicBool>,
    wake: Receiver<()>,
}

impl StreamFeed {
    pub fn spawn<R>(reader: R, table: ConversionTable, queue: IngestQueue) -> Self
    where
        R: BufRead + Send + 'static,
    {
        let open = Arc::new(AtomicBool::new(true));
        let flag = open.clone();
        let (notify, wake) = mpsc::channel();
        thread::spawn(move || {
            for (i, text) in reader.lines().enumerate() {
                let text = match text {
                    Ok(t) => t,
                    Err(e) => {
                        warn!("sensor stream: {e}");
                        break;
                    }
                };
                if text.trim().is_empty() {
                    continue;
                }
                let update = match parse_line(&text, i + 1) {
                    Ok(Line::Direct(d)) => Ok(ScenarioInput::from_direct(d).1),
                    Ok(Line::Raw(r)) => Ok(ScenarioInput::Raw(r)),
                    Ok(Line::Meta(_)) => continue,
                    Err(e) => Err(e.to_string()),
                }
                .and_then(|input| input.resolve(&table).map_err(|e| e.to_string()));
                match update {
                    Ok(u) => {
                        let _ = queue.ingest(u);
                        let _ = notify.send(());
                    }
                    Err(e) => warn!("sensor stream: {e}"),
                }
            }
            flag.store(false, Ordering::SeqCst);
        });
        StreamFeed { open, wake }
    }
}

impl Feed for StreamFeed {
    fn before_step(&mut self, _: u64, _: &IngestQueue) {}

    fn pending(&self) -> bool {
        self.open.load(Ordering::SeqCst)
    }

    fn wait(&mut self, timeout: Option<Duration>) {
        match timeout {
            Some(t) => {
                let _ = self.wake.recv_timeout(t);
            }
            None => {
                let _ = self.wake.recv();
            }
        }
        while self.wake.try_recv().is_ok() {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::load_spec;
    use crate::runtime::{NoFeed, SimulatedAgents};

    const TABLE: &str = r#"
        [[rule]]
        channel = "proximity"
        comparator = "<"
        threshold = 0.5
        op = "insert"
        atom = "obstacle(near)"

        [[rule]]
        channel = "proximity"
        comparator = ">="
        threshold = 0.5
        op = "delete"
        atom = "obstacle(near)"

        [[rule]]
        channel = "mission"
        comparator = "any"
        kind = "goal"
        op = "insert"
        atom = "visited({payload})"
    "#;

    fn raw(channel: &str, payload: Payload) -> RawRecord {
        RawRecord {
            t: 1,
            agent: "r1".into(),
            channel: channel.into(),
            payload,
        }
    }

    #[test]
    fn threshold_rules() {
        let table = ConversionTable::parse(TABLE).unwrap();
        let near = data_processing(&raw("proximity", Payload::Number(0.2)), &table).unwrap();
        assert_eq!(near.op, UpdateOp::Insert);
        assert_eq!(near.kind, UpdateKind::Belief);
        assert_eq!(near.atom, "obstacle(near)");
        let far = data_processing(&raw("proximity", Payload::Number(0.9)), &table).unwrap();
        assert_eq!(far.op, UpdateOp::Delete);
    }

    #[test]
    fn unknown_channel_and_unmatched_payload() {
        let table = ConversionTable::parse(TABLE).unwrap();
        assert_eq!(
            data_processing(&raw("lidar9", Payload::Number(1.0)), &table),
            Err(ConversionError::UnknownChannel("lidar9".into()))
        );
        assert!(matches!(
            data_processing(&raw("proximity", Payload::Symbol("far".into())), &table),
            Err(ConversionError::Unmatched { .. })
        ));
    }

    #[test]
    fn payload_template() {
        let table = ConversionTable::parse(TABLE).unwrap();
        let u = data_processing(&raw("mission", Payload::Symbol("z2".into())), &table).unwrap();
        assert_eq!(u.kind, UpdateKind::Goal);
        assert_eq!(u.atom, "visited(z2)");
    }

    #[test]
    fn table_requires_threshold() {
        let err = ConversionTable::parse(
            "[[rule]]\nchannel = \"x\"\ncomparator = \"<\"\nop = \"insert\"\natom = \"p\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, TableError::Missing { field: "threshold", .. }));
    }

    #[test]
    fn scenario_lines() {
        let s = Scenario::parse(
            "{\"name\":\"demo\"}\n\
             {\"t\":1,\"agent\":\"r1\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"p(a)\"}\n\
             \n\
             {\"t\":3,\"agent\":\"r1\",\"channel\":\"proximity\",\"payload\":0.1}\n",
        )
        .unwrap();
        assert_eq!(s.meta.name.as_deref(), Some("demo"));
        assert_eq!(s.entries.len(), 2);
        assert!(matches!(s.entries[1].input, ScenarioInput::Raw(_)));
        assert_eq!(s.entries[1].t, 3);
    }

    #[test]
    fn scenario_order_enforced() {
        let err = Scenario::parse(
            "{\"t\":2,\"agent\":\"r1\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"p\"}\n\
             {\"t\":1,\"agent\":\"r1\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"p\"}\n",
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::Order { line: 2, .. }));
        assert!(matches!(
            Scenario::parse("{\"t\":1}").unwrap_err(),
            ScenarioError::Syntax { line: 1, .. }
        ));
    }

    const COIN: &str = "system { domains { o = {a}; } \
        actions { action flip() { pre ; effect [0.5] { insert heads; } effect [0.5] { insert tails; } } } \
        rules { if goal(heads) then flip(); } } \
        agent r1 { beliefs { } goals { heads; } }";

    fn engine(src: &str) -> Arc<Engine> {
        Arc::new(Engine::new(load_spec(src).unwrap()).unwrap())
    }

    #[test]
    fn empty_scenario_matches_plain_run() {
        let e = engine(COIN);
        let limits = Limits::default();
        let mut plain = Vec::new();
        let mut node = Node::new(e.clone(), 9).unwrap();
        run_loop(&mut node, &limits, &mut NoFeed, &mut plain, &mut SimulatedAgents::default())
            .unwrap();
        let mut scripted = Vec::new();
        let run = run_scenario(
            e,
            Scenario::default(),
            ConversionTable::default(),
            9,
            &limits,
            &mut scripted,
            &mut SimulatedAgents::default(),
        )
        .unwrap();
        assert_eq!(plain, scripted);
        assert!(run.deliveries.is_empty());
    }

    #[test]
    fn deliveries_logged_with_step() {
        let e = engine(COIN);
        let s = Scenario::parse(
            "{\"t\":0,\"agent\":\"r1\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"tails\"}\n\
             {\"t\":2,\"agent\":\"ghost\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"tails\"}\n\
             {\"t\":2,\"agent\":\"r1\",\"channel\":\"nope\",\"payload\":1}\n",
        )
        .unwrap();
        let run = run_scenario(
            e,
            s,
            ConversionTable::default(),
            0,
            &Limits::default(),
            &mut io::sink(),
            &mut SimulatedAgents::default(),
        )
        .unwrap();
        let steps: Vec<u64> = run.deliveries.iter().map(|d| d.step).collect();
        assert_eq!(steps, vec![1, 2, 2]);
        assert_eq!(run.deliveries[0].seq, Some(0));
        assert!(run.deliveries[1].error.as_deref().unwrap().contains("ghost"));
        assert!(run.deliveries[2].update.is_none());
        assert_eq!(run.trace.reports[0].drained.len(), 1);
    }

    #[test]
    fn stream_feed_enqueues_everything() {
        let e = engine(COIN);
        let node = Node::new(e, 0).unwrap();
        let input = "{\"t\":0,\"agent\":\"r1\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"tails\"}\n\
                     garbage\n\
                     {\"t\":0,\"agent\":\"r1\",\"kind\":\"goal\",\"op\":\"delete\",\"atom\":\"heads\"}\n";
        let feed = StreamFeed::spawn(io::Cursor::new(input), ConversionTable::default(), node.queue());
        while feed.pending() {
            thread::yield_now();
        }
        assert_eq!(node.queue().len(), 2);
    }

    struct Slow {
        delay: Option<Duration>,
        inner: io::Cursor<&'static str>,
    }

    impl io::Read for Slow {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            if let Some(d) = self.delay.take() {
                thread::sleep(d);
            }
            self.inner.read(buf)
        }
    }

    #[test]
    fn idle_run_waits_for_stream_input() {
        let e = engine(&COIN.replace("goals { heads; }", "goals { }"));
        let mut node = Node::new(e, 0).unwrap();
        let reader = io::BufReader::new(Slow {
            delay: Some(Duration::from_millis(50)),
            inner: io::Cursor::new(
                "{\"t\":0,\"agent\":\"r1\",\"kind\":\"goal\",\"op\":\"insert\",\"atom\":\"heads\"}\n",
            ),
        });
        let mut feed = StreamFeed::spawn(reader, ConversionTable::default(), node.queue());
        let trace = run_loop(
            &mut node,
            &Limits::default(),
            &mut feed,
            &mut io::sink(),
            &mut SimulatedAgents::default(),
        )
        .unwrap();
        assert!(trace.reports.len() < 20, "{} steps", trace.reports.len());
        assert!(trace.reports.iter().any(|r| r.drained.len() == 1));
        assert!(trace.reports.iter().any(|r| r.committed));
    }
}
