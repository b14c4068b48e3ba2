//! Text formats: heredity tensors, parameter-set records, test-set recipes and CSV exports.

use std::fmt::Write as _;
use std::str::FromStr;

use rdslab_core::certification::{CertificationPlan, Check, Discrepancy, Overrides, Param, ParameterSet, Provenance};
use rdslab_core::testsets::{CompactSetApprox, Recipe};
use rdslab_core::vpso::PsoTensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {key}: {reason}")]
pub struct FormatError {
    /// One-based line number, 0 when the problem is not tied to a line.
    pub line: usize,
    pub key: String,
    pub reason: String,
}

impl FormatError {
    fn new(line: usize, key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            line,
            key: key.into(),
            reason: reason.into(),
        }
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_num<T: FromStr>(line: usize, key: &str, tok: &str) -> Result<T, FormatError> {
    tok.parse()
        .map_err(|_| FormatError::new(line, key, format!("cannot parse {tok:?}")))
}

/// Reads a tensor file:
///
/// ```text
/// m 2
/// d 2
/// (1,1) 1 1.0
/// (1,2) 2 1.0
/// (2,2) 2 1.0
/// ```
///
/// Parents are one-based and sorted; absent entries are zero. The first violated
/// condition is reported with its key.
pub fn parse_tensor(text: &str) -> Result<PsoTensor, FormatError> {
    let mut m = None;
    let mut d = None;
    let mut entries = Vec::new();
    for (ln, line) in content_lines(text) {
        if let Some(rest) = line.strip_prefix('(') {
            let (m, d) = match (m, d) {
                (Some(m), Some(d)) => (m, d),
                _ => return Err(FormatError::new(ln, "header", "m and d must precede the entries")),
            };
            let close = rest
                .find(')')
                .ok_or_else(|| FormatError::new(ln, line, "unclosed parent tuple"))?;
            let key = format!("({})", &rest[..close]);
            let parents: Vec<usize> = rest[..close]
                .split(',')
                .map(|t| parse_num(ln, &key, t.trim()))
                .collect::<Result<_, _>>()?;
            if parents.len() != d {
                return Err(FormatError::new(ln, &key, format!("expected {d} parents, found {}", parents.len())));
            }
            if let Some(&p) = parents.iter().find(|&&p| p == 0 || p > m) {
                return Err(FormatError::new(ln, &key, format!("parent {p} outside 1..={m}")));
            }
            if parents.windows(2).any(|w| w[0] > w[1]) {
                return Err(FormatError::new(ln, &key, "parents not sorted"));
            }
            let toks: Vec<&str> = rest[close + 1..].split_whitespace().collect();
            if toks.len() != 2 {
                return Err(FormatError::new(ln, &key, "expected `child value` after the parents"));
            }
            let k: usize = parse_num(ln, &key, toks[0])?;
            if k == 0 || k > m {
                return Err(FormatError::new(ln, &key, format!("child {k} outside 1..={m}")));
            }
            let v: f64 = parse_num(ln, &key, toks[1])?;
            entries.push((ln, parents, k, v));
            continue;
        }
        let mut it = line.split_whitespace();
        let (name, val) = (it.next().unwrap_or(""), it.next());
        let val = val.ok_or_else(|| FormatError::new(ln, name, "missing value"))?;
        if it.next().is_some() {
            return Err(FormatError::new(ln, name, "trailing tokens"));
        }
        match name {
            "m" if m.is_none() && entries.is_empty() => m = Some(parse_num(ln, "m", val)?),
            "d" if d.is_none() && entries.is_empty() => d = Some(parse_num(ln, "d", val)?),
            "m" | "d" => return Err(FormatError::new(ln, name, "repeated or misplaced header")),
            _ => return Err(FormatError::new(ln, name, "unknown header")),
        }
    }
    let m = m.ok_or_else(|| FormatError::new(0, "m", "missing"))?;
    let d = d.ok_or_else(|| FormatError::new(0, "d", "missing"))?;
    for i in 0..entries.len() {
        for j in 0..i {
            if entries[i].1 == entries[j].1 && entries[i].2 == entries[j].2 {
                let (ln, p, k, _) = &entries[i];
                return Err(FormatError::new(*ln, tensor_key(p, *k), "duplicate entry"));
            }
        }
    }
    PsoTensor::from_entries(m, d, entries.into_iter().map(|(_, p, k, v)| (p, k, v))).map_err(|e| match e {
        rdslab_core::Error::InvalidTensor { key, reason } => FormatError::new(0, key, reason),
        other => FormatError::new(0, "tensor", other.to_string()),
    })
}

fn tensor_key(parents: &[usize], k: usize) -> String {
    let p: Vec<String> = parents.iter().map(|i| i.to_string()).collect();
    format!("({}) {k}", p.join(","))
}

/// Writes the nonzero entries of `t` in the format read by [`parse_tensor`].
pub fn write_tensor(t: &PsoTensor) -> String {
    let mut s = format!("m {}\nd {}\n", t.m(), t.d());
    for (parents, k, v) in t.entries() {
        if v != 0.0 {
            let p: Vec<String> = parents.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(s, "({}) {k} {v:?}", p.join(","));
        }
    }
    s
}

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::Formula => "formula",
        Provenance::Default => "default",
        Provenance::Override => "override",
    }
}

fn provenance_from(s: &str) -> Option<Provenance> {
    match s {
        "formula" => Some(Provenance::Formula),
        "default" => Some(Provenance::Default),
        "override" => Some(Provenance::Override),
        _ => None,
    }
}

/// Flat tab-separated record of a parameter set. Every line starts with its kind:
///
/// ```text
/// shape   m       2
/// value   alpha1  0.99    override
/// check   λ > 0   0.4     0       pass
/// warning M       7       6
/// ```
pub fn write_params(ps: &ParameterSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "shape\tm\t{}", ps.m);
    let _ = writeln!(s, "shape\td\t{}", ps.d);
    let _ = writeln!(s, "shape\tnu_lower\t{:?}", ps.nu_lower);
    for p in Param::ALL {
        let _ = writeln!(s, "value\t{}\t{:?}\t{}", p.name(), ps.get(p), provenance_name(ps.provenance(p)));
    }
    for c in &ps.validity {
        let _ = writeln!(s, "check\t{}\t{:?}\t{:?}\t{}", c.name, c.lhs, c.rhs, if c.pass { "pass" } else { "fail" });
    }
    for w in &ps.warnings {
        let _ = writeln!(s, "warning\t{}\t{:?}\t{:?}", w.param.name(), w.value, w.formula);
    }
    s
}

/// A parameter-set record read back from text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsRecord {
    pub m: usize,
    pub d: usize,
    pub nu_lower: f64,
    pub values: Vec<(Param, f64, Provenance)>,
    pub checks: Vec<(String, f64, f64, bool)>,
    pub warnings: Vec<(Param, f64, f64)>,
}

impl ParamsRecord {
    /// The values marked as overrides.
    pub fn overrides(&self) -> Overrides {
        self.values
            .iter()
            .filter(|v| v.2 == Provenance::Override)
            .map(|v| (v.0, v.1))
            .collect()
    }

    pub fn rederive(&self) -> rdslab_core::Result<ParameterSet> {
        ParameterSet::evaluate(self.m, self.d, self.nu_lower, &self.overrides())
    }
}

pub fn parse_params(text: &str) -> Result<ParamsRecord, FormatError> {
    let mut m = None;
    let mut d = None;
    let mut nu = None;
    let mut rec = ParamsRecord {
        m: 0,
        d: 0,
        nu_lower: 0.0,
        values: Vec::new(),
        checks: Vec::new(),
        warnings: Vec::new(),
    };
    let param = |ln: usize, name: &str| {
        Param::from_name(name).ok_or_else(|| FormatError::new(ln, name, "unknown parameter"))
    };
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        let want = |n: usize| {
            if f.len() == n {
                Ok(())
            } else {
                Err(FormatError::new(ln, f[0], format!("expected {n} fields, found {}", f.len())))
            }
        };
        match f[0] {
            "shape" => {
                want(3)?;
                match f[1] {
                    "m" => m = Some(parse_num(ln, "m", f[2])?),
                    "d" => d = Some(parse_num(ln, "d", f[2])?),
                    "nu_lower" => nu = Some(parse_num(ln, "nu_lower", f[2])?),
                    other => return Err(FormatError::new(ln, other, "unknown shape field")),
                }
            }
            "value" => {
                want(4)?;
                let p = param(ln, f[1])?;
                let prov = provenance_from(f[3]).ok_or_else(|| FormatError::new(ln, f[1], "unknown provenance"))?;
                rec.values.push((p, parse_num(ln, f[1], f[2])?, prov));
            }
            "check" => {
                want(5)?;
                let pass = match f[4] {
                    "pass" => true,
                    "fail" => false,
                    _ => return Err(FormatError::new(ln, f[1], "result must be pass or fail")),
                };
                rec.checks.push((f[1].to_string(), parse_num(ln, f[1], f[2])?, parse_num(ln, f[1], f[3])?, pass));
            }
            "warning" => {
                want(4)?;
                let p = param(ln, f[1])?;
                rec.warnings.push((p, parse_num(ln, f[1], f[2])?, parse_num(ln, f[1], f[3])?));
            }
            other => return Err(FormatError::new(ln, other, "unknown record kind")),
        }
    }
    rec.m = m.ok_or_else(|| FormatError::new(0, "m", "missing"))?;
    rec.d = d.ok_or_else(|| FormatError::new(0, "d", "missing"))?;
    rec.nu_lower = nu.ok_or_else(|| FormatError::new(0, "nu_lower", "missing"))?;
    Ok(rec)
}

/// Checks in the record format, for summaries.
pub fn check_line(c: &Check) -> String {
    format!("{}: {} vs {} ({})", c.name, c.lhs, c.rhs, if c.pass { "pass" } else { "fail" })
}

pub fn warning_line(w: &Discrepancy) -> String {
    format!("warning: {w}")
}

pub fn parse_recipe(text: &str) -> Result<Recipe, FormatError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| FormatError::new(0, e.path().to_string(), e.inner().message().to_string()))
}

pub fn write_recipe(r: &Recipe) -> String {
    toml::to_string(r).expect("recipes serialize to TOML")
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).expect("in-memory CSV");
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

fn coord_header(prefix: &[&str], dim: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=dim).map(|i| format!("x{i}")))
        .collect()
}

/// One row per point: `id, x1, ..., xd`.
pub fn cloud_csv(set: &CompactSetApprox) -> String {
    csv_string(|w| {
        w.write_record(coord_header(&["id"], set.ambient_dim()))?;
        for (i, p) in set.points.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.iter().map(|v| format!("{v:?}")));
            w.write_record(row)?;
        }
        Ok(())
    })
}

/// Trajectory rows `seed, t, point, x1, ..., xd`.
pub struct TrajectoryRow<'a> {
    pub seed: u64,
    pub t: f64,
    pub point: usize,
    pub coords: &'a [f64],
}

pub fn trajectories_csv<'a>(dim: usize, rows: impl IntoIterator<Item = TrajectoryRow<'a>>) -> String {
    csv_string(|w| {
        w.write_record(coord_header(&["seed", "t", "point"], dim))?;
        for r in rows {
            let mut row = vec![r.seed.to_string(), format!("{:?}", r.t), r.point.to_string()];
            row.extend(r.coords.iter().map(|v| format!("{v:?}")));
            w.write_record(row)?;
        }
        Ok(())
    })
}

/// A plain table with a header and preformatted cells.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    csv_string(|w| {
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        Ok(())
    })
}

/// One record per cover ball: `ball, members, ln_radius, radius, budget, c1, ..., cn`.
pub fn plan_csv(plan: &CertificationPlan) -> String {
    csv_string(|w| {
        let mut h: Vec<String> = ["ball", "members", "ln_radius", "radius", "budget"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let dim = plan.balls.first().map_or(0, |b| b.center.len());
        h.extend((1..=dim).map(|i| format!("c{i}")));
        w.write_record(h)?;
        for (i, b) in plan.balls.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                b.members.to_string(),
                format!("{:?}", b.ln_radius),
                format!("{:?}", b.ln_radius.exp()),
                format!("{:?}", b.budget),
            ];
            row.extend(b.center.iter().map(|v| format!("{v:?}")));
            w.write_record(row)?;
        }
        Ok(())
    })
}
