//! MATPOWER case ingestion, the bundled 39-bus system, and seeded random
//! candidate overlays.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document::{EdgeDoc, NetworkDocument, NodeDoc, ObjectiveDoc, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::graph::NodeKind;

/// Topology columns of the New England 39-bus case.
pub const CASE39: &str = include_str!("../data/case39.m");

/// Inertia constants `H` (s) of the 39-bus generators.
pub const CASE39_INERTIA_H: [(u32, f64); 10] = [
    (30, 42.0),
    (31, 30.3),
    (32, 35.8),
    (33, 28.6),
    (34, 26.0),
    (35, 34.8),
    (36, 26.4),
    (37, 24.3),
    (38, 34.5),
    (39, 500.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatpowerCase {
    pub buses: Vec<u32>,
    pub generator_buses: BTreeSet<u32>,
    pub branches: Vec<Branch>,
}

/// Rows of the matrix assigned to `mpc.<name>`.
fn matrix(text: &str, name: &str) -> Result<Vec<Vec<f64>>> {
    let head = format!("mpc.{name}");
    let start = text
        .lines()
        .scan(0usize, |off, l| {
            let here = *off;
            *off += l.len() + 1;
            Some((here, l))
        })
        .find(|(_, l)| {
            let t = l.trim_start();
            t.starts_with(&head) && t[head.len()..].trim_start().starts_with('=')
        })
        .map(|(off, _)| off)
        .ok_or_else(|| Error::Document(format!("MATPOWER case has no `{head}` matrix")))?;
    let body = &text[start..];
    let open = body.find('[').ok_or_else(|| Error::Document(format!("`{head}` is not a matrix")))?;
    let close = body.find("];").ok_or_else(|| Error::Document(format!("`{head}` is not terminated by `];`")))?;
    let mut rows = Vec::new();
    for line in body[open + 1..close].lines() {
        let line = line.split('%').next().unwrap_or("");
        for row in line.split(';') {
            let vals = row
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| Error::Document(format!("`{head}`: bad number `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            if !vals.is_empty() {
                rows.push(vals);
            }
        }
    }
    Ok(rows)
}

fn bus_id(v: f64, what: &str) -> Result<u32> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(Error::Document(format!("{what}: invalid bus number {v}")))
    }
}

/// Bus numbers, generator buses and branches of a MATPOWER case. Columns
/// beyond those used are ignored.
pub fn parse_matpower(text: &str) -> Result<MatpowerCase> {
    let buses =
        matrix(text, "bus")?.iter().map(|r| bus_id(r[0], "mpc.bus")).collect::<Result<Vec<_>>>()?;
    let generator_buses =
        matrix(text, "gen")?.iter().map(|r| bus_id(r[0], "mpc.gen")).collect::<Result<BTreeSet<_>>>()?;
    let branches = matrix(text, "branch")?
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r.len() < 4 {
                return Err(Error::Document(format!("mpc.branch row {}: need fbus tbus r x", k + 1)));
            }
            Ok(Branch {
                from: bus_id(r[0], "mpc.branch")?,
                to: bus_id(r[1], "mpc.branch")?,
                r: r[2],
                x: r[3],
                in_service: r.get(10).map_or(true, |&s| s != 0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatpowerCase { buses, generator_buses, branches })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertOptions {
    /// Generator inertia constants `H` in seconds, by bus.
    pub inertia_h: BTreeMap<u32, f64>,
    pub nominal_hz: f64,
    /// Damping of every machine node.
    pub damping: f64,
    /// Non-generator buses become machines with `M = 1e-4` instead of
    /// zero-injection nodes.
    pub paper_overrides: bool,
    /// Defaults to the lowest bus number.
    pub reference: Option<u32>,
}

impl ConvertOptions {
    pub fn case39(paper_overrides: bool) -> Self {
        ConvertOptions {
            inertia_h: CASE39_INERTIA_H.iter().copied().collect(),
            nominal_hz: 60.0,
            damping: 0.025,
            paper_overrides,
            reference: None,
        }
    }
}

pub const OVERRIDE_INERTIA: f64 = 1e-4;

/// Lossless network document: in-service branches become existing lines
/// with susceptance `1/x`; parallel branches are merged.
pub fn to_document(case: &MatpowerCase, opts: &ConvertOptions) -> Result<NetworkDocument> {
    let omega = 2.0 * PI * opts.nominal_hz;
    let mut nodes = Vec::with_capacity(case.buses.len());
    for &bus in &case.buses {
        let node = if case.generator_buses.contains(&bus) {
            let h = opts
                .inertia_h
                .get(&bus)
                .ok_or_else(|| Error::Document(format!("no inertia constant for generator bus {bus}")))?;
            NodeDoc { id: bus, inertia: 2.0 * h / omega, damping: opts.damping, kind: NodeKind::Machine }
        } else if opts.paper_overrides {
            NodeDoc { id: bus, inertia: OVERRIDE_INERTIA, damping: opts.damping, kind: NodeKind::Machine }
        } else {
            NodeDoc { id: bus, inertia: 0.0, damping: 0.0, kind: NodeKind::ZeroInjection }
        };
        nodes.push(node);
    }
    let mut lines: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for br in case.branches.iter().filter(|b| b.in_service) {
        if !(br.x > 0.0) {
            return Err(Error::Document(format!("branch {}-{}: nonpositive reactance {}", br.from, br.to, br.x)));
        }
        *lines.entry((br.from.min(br.to), br.from.max(br.to))).or_insert(0.0) += 1.0 / br.x;
    }
    let edges = lines
        .into_iter()
        .map(|((from, to), b)| EdgeDoc { from, to, susceptance: Some(b), existing: true })
        .collect();
    let reference = opts.reference.or_else(|| case.buses.iter().copied().min()).ok_or_else(|| {
        Error::Document("MATPOWER case has no buses".into())
    })?;
    Ok(NetworkDocument {
        schema_version: SCHEMA_VERSION,
        description: None,
        reference,
        nodes,
        edges,
        objective: ObjectiveDoc::coherence(),
    })
}

/// The bundled 39-bus system: 46 existing lines, generators at buses 30-39.
pub fn case39_document(paper_overrides: bool) -> Result<NetworkDocument> {
    let mut doc = to_document(&parse_matpower(CASE39)?, &ConvertOptions::case39(paper_overrides))?;
    doc.description = Some(format!(
        "39-bus New England system{}",
        if paper_overrides { ", M = 1e-4 and D = 0.025 on non-generator buses" } else { "" }
    ));
    Ok(doc)
}

/// Add `count` candidate lines between distinct non-adjacent node pairs,
/// chosen uniformly with a seeded generator; reactances are uniform over the
/// range of the existing ones.
pub fn random_overlay(doc: &NetworkDocument, count: usize, seed: u64) -> Result<NetworkDocument> {
    let xs: Vec<f64> = doc.edges.iter().filter_map(|e| e.susceptance).map(|b| 1.0 / b).collect();
    let (lo, hi) = xs
        .iter()
        .fold(None, |acc: Option<(f64, f64)>, &x| Some(acc.map_or((x, x), |(a, b)| (a.min(x), b.max(x)))))
        .ok_or_else(|| Error::Document("overlay needs at least one line to take reactances from".into()))?;
    let taken: BTreeSet<(u32, u32)> = doc.edges.iter().map(|e| (e.from.min(e.to), e.from.max(e.to))).collect();
    let mut ids: Vec<u32> = doc.nodes.iter().map(|n| n.id).collect();
    ids.sort_unstable();
    let mut free = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            if !taken.contains(&(i, j)) {
                free.push((i, j));
            }
        }
    }
    if free.len() < count {
        return Err(Error::Config(format!("only {} node pairs are free, asked for {count}", free.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<(u32, u32)> = free.choose_multiple(&mut rng, count).copied().collect();
    picked.sort_unstable();
    let mut out = doc.clone();
    for (from, to) in picked {
        let x = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        out.edges.push(EdgeDoc { from, to, susceptance: Some(1.0 / x), existing: false });
    }
    let note = format!("random overlay of {count} candidate lines, seed {seed}");
    out.description = Some(match &doc.description {
        Some(d) => format!("{d}; {note}"),
        None => note,
    });
    Ok(out)
}
