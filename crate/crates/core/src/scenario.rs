//! Scenario files: flat INI-style sections of `key = value` lines.
//!
//! ```text
//! [scenario]   name, protocol = si | ai, nodes, steps, seed, trials
//! [secrets]    values = v1, v2, ...   |   random = lo, hi
//! [noise]      family = harmonic | geometric, c, d | phi,
//!              distribution = laplace | gaussian | uniform
//! [async]      rate, horizon                      (protocol = ai)
//! [events]     leave = NODE at K
//!              join = NODE at K after ANCHOR secret S
//! [privacy]    delta
//! [tradeoff]   gamma_u, gamma_a, gamma_p
//! [outputs]    list = trajectories, errors, bounds, budget, tradeoff
//! ```
//!
//! `#` and `;` start comments. `leave` and `join` may repeat; every other key
//! appears at most once.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{MembershipEvent, NodeId, NoiseDistribution, NoiseSchedule, ProtocolConfig, ScheduleFamily};
use crate::noise::{NoiseSource, Purpose};

/// The ten-node leave/rejoin scenario.
pub const LEAVE_JOIN: &str = include_str!("../scenarios/leave_join.cfg");

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    Synchronous,
    Asynchronous { rate: f64, horizon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Secrets {
    Values(Vec<f64>),
    /// Uniform on `[lo, hi)`, drawn from the scenario seed.
    Random { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Output {
    Trajectories,
    Errors,
    Bounds,
    Budget,
    Tradeoff,
}

impl Output {
    pub fn name(&self) -> &'static str {
        match self {
            Output::Trajectories => "trajectories",
            Output::Errors => "errors",
            Output::Bounds => "bounds",
            Output::Budget => "budget",
            Output::Tradeoff => "tradeoff",
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Output {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "trajectories" => Output::Trajectories,
            "errors" => Output::Errors,
            "bounds" => Output::Bounds,
            "budget" => Output::Budget,
            "tradeoff" => Output::Tradeoff,
            other => return Err(format!("unknown output '{other}'")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    pub nodes: usize,
    pub steps: u64,
    pub seed: u64,
    pub trials: u32,
    pub secrets: Secrets,
    pub schedule: NoiseSchedule,
    pub distribution: NoiseDistribution,
    pub events: Vec<MembershipEvent>,
    pub delta: f64,
    /// `(gamma_u, gamma_a, gamma_p)`.
    pub balancers: (f64, f64, f64),
    pub outputs: Vec<Output>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    pub fn leave_join() -> Self {
        LEAVE_JOIN.parse().expect("bundled scenario parses")
    }

    pub fn wants(&self, out: Output) -> bool {
        self.outputs.contains(&out)
    }

    /// Protocol configuration with secrets resolved for the current seed.
    pub fn config(&self) -> Result<ProtocolConfig> {
        let secrets = match &self.secrets {
            Secrets::Values(v) => v.clone(),
            Secrets::Random { lo, hi } => {
                let src = NoiseSource::new(self.seed);
                (0..self.nodes as u32)
                    .map(|i| lo + (hi - lo) * src.uniform(Purpose::Aux, i + 1, 0, u32::MAX))
                    .collect()
            }
        };
        let config = ProtocolConfig::uniform(secrets, self.schedule, self.distribution, self.steps, self.seed)
            .with_events(self.events.clone());
        match self.protocol {
            Protocol::Synchronous => config.validate()?,
            Protocol::Asynchronous { .. } => config.validate_async()?,
        }
        Ok(config)
    }
}

struct Entry {
    line: usize,
    value: String,
}

#[derive(Default)]
struct Section {
    line: usize,
    keys: HashMap<String, Entry>,
    repeated: Vec<(String, Entry)>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("scenario", &["name", "protocol", "nodes", "steps", "seed", "trials"]),
    ("secrets", &["values", "random"]),
    ("noise", &["family", "c", "d", "phi", "distribution"]),
    ("async", &["rate", "horizon"]),
    ("events", &["leave", "join"]),
    ("privacy", &["delta"]),
    ("tradeoff", &["gamma_u", "gamma_a", "gamma_p"]),
    ("outputs", &["list"]),
];

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn strip_comment(line: &str) -> &str {
    let cut = line.find(['#', ';']).unwrap_or(line.len());
    line[..cut].trim()
}

fn sections(text: &str) -> Result<(HashMap<String, Section>, usize)> {
    let mut out: HashMap<String, Section> = HashMap::new();
    let mut current: Option<String> = None;
    let mut last = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last = line;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "section header is missing ']'"))?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            if out.contains_key(&name) {
                return Err(err(line, format!("section [{name}] appears twice")));
            }
            out.insert(name.clone(), Section { line, ..Section::default() });
            current = Some(name);
            continue;
        }
        let section = current
            .as_ref()
            .ok_or_else(|| err(line, "key outside of any section"))?;
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{body}'")))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        let allowed = SECTIONS.iter().find(|(s, _)| s == section).expect("known").1;
        if !allowed.contains(&key.as_str()) {
            return Err(err(line, format!("unknown key '{key}' in [{section}]")));
        }
        if value.is_empty() {
            return Err(err(line, format!("'{key}' has no value")));
        }
        let sec = out.get_mut(section).expect("inserted");
        if section == "events" {
            sec.repeated.push((key, Entry { line, value }));
        } else {
            match sec.keys.entry(key) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    return Err(err(line, format!("'{}' given twice in [{section}]", e.key())));
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(Entry { line, value });
                }
            }
        }
    }
    Ok((out, last))
}

fn parse_value<T: FromStr>(entry: &Entry, key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    entry
        .value
        .parse()
        .map_err(|e| err(entry.line, format!("bad value for '{key}': '{}' ({e})", entry.value)))
}

fn parse_list(entry: &Entry, key: &str) -> Result<Vec<f64>> {
    entry
        .value
        .split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|e| {
                err(entry.line, format!("bad number '{}' in '{key}' ({e})", v.trim()))
            })
        })
        .collect()
}

struct Reader<'a> {
    sections: &'a HashMap<String, Section>,
    eof: usize,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.keys.get(key)
    }

    fn anchor(&self, section: &str) -> usize {
        self.sections.get(section).map_or(self.eof, |s| s.line)
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let entry = self
            .get(section, key)
            .ok_or_else(|| err(self.anchor(section), format!("missing '{key}' in [{section}]")))?;
        parse_value(entry, key)
    }

    fn optional<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(section, key).map_or(Ok(default), |e| parse_value(e, key))
    }
}

fn parse_event(key: &str, entry: &Entry) -> Result<MembershipEvent> {
    let words: Vec<&str> = entry.value.split_whitespace().collect();
    let bad = |what: &str| err(entry.line, format!("{key}: {what} in '{}'", entry.value));
    let num = |s: &str, what: &str| -> Result<u64> { s.parse().map_err(|_| bad(&format!("bad {what} '{s}'"))) };
    match (key, words.as_slice()) {
        ("leave", [node, "at", k]) => Ok(MembershipEvent::leave(
            num(k, "step")?,
            NodeId(num(node, "node")? as u32),
        )),
        ("join", [node, "at", k, "after", anchor, "secret", s]) => {
            let secret: f64 = s.parse().map_err(|_| bad(&format!("bad secret '{s}'")))?;
            Ok(MembershipEvent::join(
                num(k, "step")?,
                NodeId(num(node, "node")? as u32),
                NodeId(num(anchor, "node")? as u32),
                secret,
            ))
        }
        ("leave", _) => Err(bad("expected 'NODE at K'")),
        _ => Err(bad("expected 'NODE at K after ANCHOR secret S'")),
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (secs, eof) = sections(text)?;
        let r = Reader { sections: &secs, eof };

        let name: String = r.required("scenario", "name")?;
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(err(r.get("scenario", "name").expect("present").line, "name must be a plain file name"));
        }
        let nodes: usize = r.required("scenario", "nodes")?;
        let trials: u32 = r.optional("scenario", "trials", 1)?;
        let seed: u64 = r.optional("scenario", "seed", 0)?;
        let protocol_name: String = r.optional("scenario", "protocol", "si".to_string())?;
        let protocol = match protocol_name.to_ascii_lowercase().as_str() {
            "si" => Protocol::Synchronous,
            "ai" => Protocol::Asynchronous {
                rate: r.optional("async", "rate", 1.0)?,
                horizon: r.required("async", "horizon")?,
            },
            other => {
                let line = r.get("scenario", "protocol").expect("present").line;
                return Err(err(line, format!("protocol must be 'si' or 'ai', got '{other}'")));
            }
        };
        let steps: u64 = match protocol {
            Protocol::Synchronous => r.required("scenario", "steps")?,
            Protocol::Asynchronous { .. } => r.optional("scenario", "steps", 0)?,
        };

        let secrets = match (r.get("secrets", "values"), r.get("secrets", "random")) {
            (Some(v), None) => {
                let values = parse_list(v, "values")?;
                if values.len() != nodes {
                    return Err(err(v.line, format!("{} secrets for {nodes} nodes", values.len())));
                }
                Secrets::Values(values)
            }
            (None, Some(v)) => match parse_list(v, "random")?.as_slice() {
                &[lo, hi] if lo < hi => Secrets::Random { lo, hi },
                _ => return Err(err(v.line, "random expects 'lo, hi' with lo < hi")),
            },
            (Some(v), Some(_)) => return Err(err(v.line, "give either 'values' or 'random', not both")),
            (None, None) => return Err(err(r.anchor("secrets"), "missing 'values' or 'random' in [secrets]")),
        };

        let family: ScheduleFamily = r.required("noise", "family")?;
        let c: f64 = r.required("noise", "c")?;
        let noise_line = r.anchor("noise");
        let schedule = match family {
            ScheduleFamily::Harmonic => NoiseSchedule::harmonic(c, r.required("noise", "d")?),
            ScheduleFamily::Geometric => NoiseSchedule::geometric(c, r.required("noise", "phi")?),
        }
        .map_err(|e| err(noise_line, e.to_string()))?;
        let distribution: NoiseDistribution = r.optional("noise", "distribution", NoiseDistribution::Gaussian)?;

        let mut events = Vec::new();
        if let Some(sec) = secs.get("events") {
            for (key, entry) in &sec.repeated {
                events.push(parse_event(key, entry)?);
            }
        }
        events.sort_by_key(|e| e.at);

        let delta: f64 = r.optional("privacy", "delta", 1.0)?;
        let balancers = (
            r.optional("tradeoff", "gamma_u", 1.0)?,
            r.optional("tradeoff", "gamma_a", 1.0)?,
            r.optional("tradeoff", "gamma_p", 1.0)?,
        );
        let outputs = match r.get("outputs", "list") {
            None => vec![Output::Trajectories, Output::Errors],
            Some(entry) => {
                let mut outs = entry
                    .value
                    .split(',')
                    .map(|s| s.trim().to_ascii_lowercase().parse::<Output>().map_err(|m| err(entry.line, m)))
                    .collect::<Result<Vec<_>>>()?;
                outs.sort();
                outs.dedup();
                outs
            }
        };

        let scenario = Scenario {
            name,
            protocol,
            nodes,
            steps,
            seed,
            trials,
            secrets,
            schedule,
            distribution,
            events,
            delta,
            balancers,
            outputs,
        };
        scenario
            .config()
            .map_err(|e| err(r.anchor("scenario"), format!("invalid scenario: {e}")))?;
        Ok(scenario)
    }
}
