//! Plain-text CMDP files.
//!
//! ```text
//! cmdp 1
//! name hazard-chain(5)
//! states 5
//! actions 2
//! costs 1
//! gamma 0.9
//! horizon 6
//! thresholds 0.5
//! initial 1 0 0 0 0
//! transition <s> <a> <P(0|s,a)> ... <P(S-1|s,a)>     one line per (s, a)
//! reward <s> <a> <R(s,a,0)> ...                        one line per (s, a)
//! cost <i> <s> <a> <C_i(s,a,0)> ...                    one line per (i, s, a)
//! checksum <sha256 hex of every preceding line, newline-terminated>
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write-read cycle reproduces every table bit for bit.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{CmdpTables, EnvError, TabularCmdp};

const VERSION: &str = "1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn digest(body: &str) -> String {
    Sha256::digest(body.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut out, b| {
            let _ = write!(out, "{b:02x}");
            out
        })
}

impl TabularCmdp {
    pub fn to_text(&self) -> String {
        let (s_n, a_n) = (self.n_states, self.n_actions);
        let mut body = String::new();
        let _ = writeln!(body, "cmdp {VERSION}");
        let _ = writeln!(body, "name {}", self.name);
        let _ = writeln!(body, "states {s_n}");
        let _ = writeln!(body, "actions {a_n}");
        let _ = writeln!(body, "costs {}", self.n_costs());
        let _ = writeln!(body, "gamma {}", self.gamma);
        let _ = writeln!(body, "horizon {}", self.horizon);
        let _ = writeln!(body, "thresholds {}", join(&self.thresholds));
        let _ = writeln!(body, "initial {}", join(&self.initial));
        for s in 0..s_n {
            for a in 0..a_n {
                let start = self.idx(s, a, 0);
                let _ = writeln!(
                    body,
                    "transition {s} {a} {}",
                    join(&self.transitions[start..start + s_n])
                );
            }
        }
        for s in 0..s_n {
            for a in 0..a_n {
                let start = self.idx(s, a, 0);
                let _ = writeln!(body, "reward {s} {a} {}", join(&self.rewards[start..start + s_n]));
            }
        }
        for (i, table) in self.costs.iter().enumerate() {
            for s in 0..s_n {
                for a in 0..a_n {
                    let start = self.idx(s, a, 0);
                    let _ = writeln!(body, "cost {i} {s} {a} {}", join(&table[start..start + s_n]));
                }
            }
        }
        let sum = digest(&body);
        body.push_str(&format!("checksum {sum}\n"));
        body
    }

    pub fn from_text(text: &str) -> Result<Self, EnvError> {
        let mut header = Header::default();
        let mut body = String::new();
        let mut checksum = None;
        let mut rows: Vec<(usize, &str, Vec<&str>)> = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if key == "checksum" {
                checksum = Some(rest.trim().to_string());
                break;
            }
            body.push_str(line);
            body.push('\n');
            let perr = |msg: String| EnvError::Parse { line: line_no, msg };
            match key {
                "cmdp" if rest.trim() == VERSION => header.seen_magic = true,
                "cmdp" => return Err(perr(format!("unsupported format version `{}`", rest.trim()))),
                "name" => header.name = Some(rest.to_string()),
                "states" | "actions" | "costs" | "horizon" => {
                    let v: usize = rest.trim().parse().map_err(|_| perr(format!("bad integer `{rest}`")))?;
                    match key {
                        "states" => header.states = Some(v),
                        "actions" => header.actions = Some(v),
                        "costs" => header.costs = Some(v),
                        _ => header.horizon = Some(v),
                    }
                }
                "gamma" => header.gamma = Some(rest.trim().parse().map_err(|_| perr(format!("bad number `{rest}`")))?),
                "thresholds" => header.thresholds = Some(parse_floats(rest, line_no)?),
                "initial" => header.initial = Some(parse_floats(rest, line_no)?),
                "transition" | "reward" | "cost" => rows.push((line_no, key, rest.split_whitespace().collect())),
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }

        let expected = checksum.ok_or(EnvError::Parse {
            line: text.lines().count(),
            msg: "missing checksum line".into(),
        })?;
        let actual = digest(&body);
        if expected != actual {
            return Err(EnvError::Checksum { expected, actual });
        }
        if !header.seen_magic {
            return Err(EnvError::Parse {
                line: 1,
                msg: "missing `cmdp 1` header".into(),
            });
        }
        let missing = |what: &str| EnvError::Parse {
            line: 0,
            msg: format!("missing `{what}` line"),
        };
        let n_states = header.states.ok_or_else(|| missing("states"))?;
        let n_actions = header.actions.ok_or_else(|| missing("actions"))?;
        let n_costs = header.costs.ok_or_else(|| missing("costs"))?;
        let sas = n_states * n_actions * n_states;
        let mut transitions = vec![f64::NAN; sas];
        let mut rewards = vec![f64::NAN; sas];
        let mut costs = vec![vec![f64::NAN; sas]; n_costs];

        for (line_no, key, fields) in rows {
            let perr = |msg: String| EnvError::Parse { line: line_no, msg };
            let n_index = if key == "cost" { 3 } else { 2 };
            if fields.len() != n_index + n_states {
                return Err(perr(format!(
                    "expected {} fields, got {}",
                    n_index + n_states,
                    fields.len()
                )));
            }
            let index: Vec<usize> = fields[..n_index]
                .iter()
                .map(|f| f.parse().map_err(|_| perr(format!("bad index `{f}`"))))
                .collect::<Result<_, _>>()?;
            let values = parse_floats(&fields[n_index..].join(" "), line_no)?;
            let (table, s, a) = match key {
                "transition" => (&mut transitions, index[0], index[1]),
                "reward" => (&mut rewards, index[0], index[1]),
                _ => {
                    let ch = costs
                        .get_mut(index[0])
                        .ok_or_else(|| perr(format!("cost channel {} out of range", index[0])))?;
                    (ch, index[1], index[2])
                }
            };
            if s >= n_states || a >= n_actions {
                return Err(perr(format!("state/action ({s}, {a}) out of range")));
            }
            let start = (s * n_actions + a) * n_states;
            table[start..start + n_states].copy_from_slice(&values);
        }
        if transitions
            .iter()
            .chain(&rewards)
            .chain(costs.iter().flatten())
            .any(|v| v.is_nan())
        {
            return Err(EnvError::Parse {
                line: 0,
                msg: "some (s, a) rows are missing".into(),
            });
        }
        TabularCmdp::new(CmdpTables {
            name: header.name.unwrap_or_default(),
            n_states,
            n_actions,
            transitions,
            initial: header.initial.ok_or_else(|| missing("initial"))?,
            gamma: header.gamma.ok_or_else(|| missing("gamma"))?,
            rewards,
            costs,
            thresholds: header.thresholds.ok_or_else(|| missing("thresholds"))?,
            horizon: header.horizon.ok_or_else(|| missing("horizon"))?,
        })
    }
}

#[derive(Default)]
struct Header {
    seen_magic: bool,
    name: Option<String>,
    states: Option<usize>,
    actions: Option<usize>,
    costs: Option<usize>,
    horizon: Option<usize>,
    gamma: Option<f64>,
    thresholds: Option<Vec<f64>>,
    initial: Option<Vec<f64>>,
}

fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>, EnvError> {
    s.split_whitespace()
        .map(|f| {
            f.parse::<f64>().map_err(|_| EnvError::Parse {
                line,
                msg: format!("bad number `{f}`"),
            })
        })
        .collect()
}
