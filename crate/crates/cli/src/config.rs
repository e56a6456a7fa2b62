//! Plain-text sectioned config format.
//!
//! ```text
//! [system]
//! omega0 = 376.99111843077515
//!
//! [buses]
//! 1 2 3 4 5 6 7 8 9
//!
//! [lines]
//! # from to g b c
//! 1 4 0.0 -17.361 0.0
//!
//! [machines]
//! # bus kind M D X Xprime tau_d tau_q V_fd P_m
//! 1 two_axis 0.1254 0.0125 0.146 0.0608 8.96 0.31 auto 0.0
//! 5 classical 0.0042 0.0003 0.3 - - - 1.0 -1.25
//!
//! [sweep]
//! range = -3.141592653589793 3.141592653589793
//! resolution = 61
//! lossless = false
//!
//! [solver]
//! newton_tol = 1e-10
//! newton_max_iter = 50
//! rtol = 1e-7
//! atol = 1e-9
//! ```
//!
//! `#` starts a comment, `-` marks a field that does not apply to the machine
//! kind, and `V_fd = auto` requests field-voltage calibration (two-axis rows
//! only). Every referenced bus must appear under `[buses]`; buses without a
//! machine are eliminated as zero-injection buses when the model is built.

use anyhow::{anyhow, bail, Context, Result};
use gridpass_core::equilibrium::{self, SolverOpts, SweepGrid};
use gridpass_core::integrator::OdeOpts;
use gridpass_core::model::{
    Machine, MachineKind, MachineParams, NetworkSpec, PowerSystemModel, ReductionNote,
};
use gridpass_core::network::LineParams;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VfdSpec {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineRow {
    pub bus: u32,
    pub kind: MachineKind,
    pub m: Option<f64>,
    pub d: f64,
    pub x: f64,
    pub x_prime: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_q: Option<f64>,
    pub v_fd: VfdSpec,
    pub p_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSection {
    pub range: (f64, f64),
    pub resolution: usize,
    pub lossless: Option<bool>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            range: (-std::f64::consts::PI, std::f64::consts::PI),
            resolution: 61,
            lossless: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            rtol: 1e-7,
            atol: 1e-9,
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpec {
    pub omega0: f64,
    pub bus_ids: Vec<u32>,
    /// `(from, to, g, b, c)` with external bus ids.
    pub lines: Vec<(u32, u32, f64, f64, f64)>,
    pub machines: Vec<MachineRow>,
    pub sweep: SweepSection,
    pub solver: SolverSection,
}

impl ConfigSpec {
    pub fn solver_opts(&self) -> SolverOpts {
        SolverOpts {
            tol: self.solver.newton_tol,
            max_iter: self.solver.newton_max_iter,
            ..Default::default()
        }
    }

    pub fn ode_opts(&self) -> OdeOpts {
        OdeOpts {
            rtol: self.solver.rtol,
            atol: self.solver.atol,
            ..Default::default()
        }
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            lo: self.sweep.range.0,
            hi: self.sweep.range.1,
            resolution: self.sweep.resolution,
        }
    }

    /// Swap the load model of every load row.
    pub fn coerce_loads(&mut self, kind: MachineKind) -> Result<()> {
        for row in self.machines.iter_mut() {
            match (row.kind, kind) {
                (MachineKind::Classical, MachineKind::Droop) => row.kind = MachineKind::Droop,
                (MachineKind::Droop, MachineKind::Classical) => {
                    if row.m.is_none() {
                        bail!(
                            "bus {}: converting a droop row to classical needs an inertia M",
                            row.bus
                        );
                    }
                    row.kind = MachineKind::Classical;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Convert to the core spec plus the list of machines wanting calibration.
    pub fn to_network_spec(&self) -> Result<(NetworkSpec, Vec<usize>)> {
        let index_of: HashMap<u32, usize> = self
            .bus_ids
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, i))
            .collect();
        let mut lines = Vec::new();
        for &(f, t, g, b, c) in &self.lines {
            let from = *index_of
                .get(&f)
                .ok_or_else(|| anyhow!("line references unknown bus {f}"))?;
            let to = *index_of
                .get(&t)
                .ok_or_else(|| anyhow!("line references unknown bus {t}"))?;
            lines.push(LineParams { from, to, g, b, c });
        }
        let mut machines = Vec::new();
        let mut auto = Vec::new();
        // machine order must match the retained-bus order used by the model
        let mut rows = self.machines.clone();
        rows.sort_by_key(|r| index_of.get(&r.bus).copied().unwrap_or(usize::MAX));
        for (k, row) in rows.iter().enumerate() {
            let bus = *index_of
                .get(&row.bus)
                .ok_or_else(|| anyhow!("machine references unknown bus {}", row.bus))?;
            let v_fd = match row.v_fd {
                VfdSpec::Fixed(v) => v,
                VfdSpec::Auto => {
                    if row.kind != MachineKind::TwoAxis {
                        bail!(
                            "bus {}: V_fd = auto is only valid for two_axis machines",
                            row.bus
                        );
                    }
                    auto.push(k);
                    1.0
                }
            };
            let params = match row.kind {
                MachineKind::TwoAxis => {
                    let need = |v: Option<f64>, what: &str| {
                        v.ok_or_else(|| anyhow!("bus {}: two_axis needs {what}", row.bus))
                    };
                    let mut p = MachineParams::two_axis(
                        need(row.m, "M")?,
                        row.d,
                        row.x,
                        need(row.x_prime, "Xprime")?,
                        need(row.tau_d, "tau_d")?,
                        need(row.tau_q, "tau_q")?,
                        v_fd,
                    );
                    p.p_m = row.p_m;
                    p
                }
                MachineKind::Classical => MachineParams::classical(
                    row.m
                        .ok_or_else(|| anyhow!("bus {}: classical needs M", row.bus))?,
                    row.d,
                    row.x,
                    v_fd,
                    row.p_m,
                ),
                MachineKind::Droop => MachineParams::droop(row.d, row.x, v_fd, row.p_m),
            };
            machines.push(Machine { bus, params });
        }
        Ok((
            NetworkSpec {
                omega0: self.omega0,
                bus_ids: self.bus_ids.clone(),
                lines,
                machines,
            },
            auto,
        ))
    }

    /// Build the model, run field-voltage calibration for `auto` rows and
    /// check the lossless expectation if the config states one.
    pub fn prepare_model(&self) -> Result<(PowerSystemModel, ReductionNote, Vec<f64>)> {
        let (spec, auto) = self.to_network_spec()?;
        let (mut model, note) = PowerSystemModel::from_spec(&spec)?;
        if let Some(expect) = self.sweep.lossless {
            if expect != model.reduced.lossless {
                bail!(
                    "config declares lossless = {expect} but the reduced network has max |G_red| = {:.3e}",
                    model.reduced.gred_max()
                );
            }
        }
        let calibrated = if auto.is_empty() {
            model.v_fd().iter().copied().collect()
        } else {
            equilibrium::calibrate_field_voltages(&mut model, &auto, &self.solver_opts())?
                .iter()
                .copied()
                .collect()
        };
        Ok((model, note, calibrated))
    }
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| anyhow!("line {line}: {what} is not a number: `{tok}`"))
}

fn parse_opt_f64(tok: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if tok == "-" {
        Ok(None)
    } else {
        parse_f64(tok, line, what).map(Some)
    }
}

pub fn parse_str(text: &str) -> Result<ConfigSpec> {
    let mut omega0 = None;
    let mut bus_ids: Vec<u32> = Vec::new();
    let mut lines_rows = Vec::new();
    let mut machines = Vec::new();
    let mut sweep = SweepSection::default();
    let mut solver = SolverSection::default();

    let mut section = String::new();
    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            match section.as_str() {
                "system" | "buses" | "lines" | "machines" | "sweep" | "solver" => {}
                other => bail!("line {ln}: unknown section [{other}]"),
            }
            continue;
        }
        match section.as_str() {
            "" => bail!("line {ln}: content before the first section header"),
            "system" => {
                let (k, v) = key_value(line, ln)?;
                match k {
                    "omega0" => omega0 = Some(parse_f64(v, ln, "omega0")?),
                    other => bail!("line {ln}: unknown [system] key `{other}`"),
                }
            }
            "buses" => {
                for tok in line.split_whitespace() {
                    let id: u32 = tok
                        .parse()
                        .map_err(|_| anyhow!("line {ln}: bus id is not an integer: `{tok}`"))?;
                    if bus_ids.contains(&id) {
                        bail!("line {ln}: duplicate bus id {id}");
                    }
                    bus_ids.push(id);
                }
            }
            "lines" => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 5 {
                    bail!(
                        "line {ln}: a line row needs 5 fields (from to g b c), found {}",
                        toks.len()
                    );
                }
                let from: u32 = toks[0]
                    .parse()
                    .map_err(|_| anyhow!("line {ln}: from-bus is not an integer"))?;
                let to: u32 = toks[1]
                    .parse()
                    .map_err(|_| anyhow!("line {ln}: to-bus is not an integer"))?;
                let g = parse_f64(toks[2], ln, "g")?;
                let b = parse_f64(toks[3], ln, "b")?;
                let c = parse_f64(toks[4], ln, "c")?;
                if g < 0.0 {
                    bail!("line {ln}: conductance g must be >= 0, found {g}");
                }
                if b > 0.0 {
                    bail!("line {ln}: susceptance b must be <= 0, found {b}");
                }
                if c < 0.0 {
                    bail!("line {ln}: ground capacitance c must be >= 0, found {c}");
                }
                lines_rows.push((from, to, g, b, c));
            }
            "machines" => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 10 {
                    bail!(
                        "line {ln}: a machine row needs 10 fields \
                         (bus kind M D X Xprime tau_d tau_q V_fd P_m), found {}",
                        toks.len()
                    );
                }
                let bus: u32 = toks[0]
                    .parse()
                    .map_err(|_| anyhow!("line {ln}: machine bus is not an integer"))?;
                let kind = match toks[1] {
                    "two_axis" => MachineKind::TwoAxis,
                    "classical" => MachineKind::Classical,
                    "droop" => MachineKind::Droop,
                    other => bail!("line {ln}: unknown machine kind `{other}`"),
                };
                let v_fd = if toks[8] == "auto" {
                    VfdSpec::Auto
                } else {
                    VfdSpec::Fixed(parse_f64(toks[8], ln, "V_fd")?)
                };
                machines.push(MachineRow {
                    bus,
                    kind,
                    m: parse_opt_f64(toks[2], ln, "M")?,
                    d: parse_f64(toks[3], ln, "D")?,
                    x: parse_f64(toks[4], ln, "X")?,
                    x_prime: parse_opt_f64(toks[5], ln, "Xprime")?,
                    tau_d: parse_opt_f64(toks[6], ln, "tau_d")?,
                    tau_q: parse_opt_f64(toks[7], ln, "tau_q")?,
                    v_fd,
                    p_m: parse_f64(toks[9], ln, "P_m")?,
                });
            }
            "sweep" => {
                let (k, v) = key_value(line, ln)?;
                match k {
                    "range" => {
                        let toks: Vec<&str> = v.split_whitespace().collect();
                        if toks.len() != 2 {
                            bail!("line {ln}: range needs two values");
                        }
                        sweep.range = (
                            parse_f64(toks[0], ln, "range lo")?,
                            parse_f64(toks[1], ln, "range hi")?,
                        );
                    }
                    "resolution" => {
                        sweep.resolution = v
                            .parse()
                            .map_err(|_| anyhow!("line {ln}: resolution is not an integer"))?
                    }
                    "lossless" => {
                        sweep.lossless =
                            Some(v.parse().map_err(|_| {
                                anyhow!("line {ln}: lossless must be true or false")
                            })?)
                    }
                    other => bail!("line {ln}: unknown [sweep] key `{other}`"),
                }
            }
            "solver" => {
                let (k, v) = key_value(line, ln)?;
                match k {
                    "newton_tol" => solver.newton_tol = parse_f64(v, ln, "newton_tol")?,
                    "newton_max_iter" => {
                        solver.newton_max_iter = v
                            .parse()
                            .map_err(|_| anyhow!("line {ln}: newton_max_iter is not an integer"))?
                    }
                    "rtol" => solver.rtol = parse_f64(v, ln, "rtol")?,
                    "atol" => solver.atol = parse_f64(v, ln, "atol")?,
                    other => bail!("line {ln}: unknown [solver] key `{other}`"),
                }
            }
            _ => unreachable!(),
        }
    }

    let omega0 = omega0.ok_or_else(|| anyhow!("missing [system] omega0"))?;
    if bus_ids.is_empty() {
        bail!("missing or empty [buses] section");
    }
    if machines.is_empty() {
        bail!("missing or empty [machines] section");
    }
    for &(f, t, ..) in &lines_rows {
        for b in [f, t] {
            if !bus_ids.contains(&b) {
                bail!("line row references bus {b} which is not in [buses]");
            }
        }
    }
    for m in &machines {
        if !bus_ids.contains(&m.bus) {
            bail!(
                "machine row references bus {} which is not in [buses]",
                m.bus
            );
        }
    }
    Ok(ConfigSpec {
        omega0,
        bus_ids,
        lines: lines_rows,
        machines,
        sweep,
        solver,
    })
}

fn key_value(line: &str, ln: usize) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| anyhow!("line {ln}: expected `key = value`"))?;
    Ok((k.trim(), v.trim()))
}

pub fn parse_file(path: &Path) -> Result<ConfigSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_str(&text).with_context(|| format!("parsing {}", path.display()))
}

// ---------------------------------------------------------------------------
// serialization (canonical form; parse(serialize(x)) == x)
// ---------------------------------------------------------------------------

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "-".into())
}

pub fn serialize(cfg: &ConfigSpec) -> String {
    let mut s = String::new();
    writeln!(s, "[system]").unwrap();
    writeln!(s, "omega0 = {}", cfg.omega0).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "[buses]").unwrap();
    let ids: Vec<String> = cfg.bus_ids.iter().map(|b| b.to_string()).collect();
    writeln!(s, "{}", ids.join(" ")).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "[lines]").unwrap();
    writeln!(s, "# from to g b c").unwrap();
    for &(f, t, g, b, c) in &cfg.lines {
        writeln!(s, "{f} {t} {g} {b} {c}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "[machines]").unwrap();
    writeln!(s, "# bus kind M D X Xprime tau_d tau_q V_fd P_m").unwrap();
    for m in &cfg.machines {
        let v_fd = match m.v_fd {
            VfdSpec::Auto => "auto".to_string(),
            VfdSpec::Fixed(v) => format!("{v}"),
        };
        writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {}",
            m.bus,
            m.kind.as_str(),
            opt(m.m),
            m.d,
            m.x,
            opt(m.x_prime),
            opt(m.tau_d),
            opt(m.tau_q),
            v_fd,
            m.p_m
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "[sweep]").unwrap();
    writeln!(s, "range = {} {}", cfg.sweep.range.0, cfg.sweep.range.1).unwrap();
    writeln!(s, "resolution = {}", cfg.sweep.resolution).unwrap();
    if let Some(l) = cfg.sweep.lossless {
        writeln!(s, "lossless = {l}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "[solver]").unwrap();
    writeln!(s, "newton_tol = {}", cfg.solver.newton_tol).unwrap();
    writeln!(s, "newton_max_iter = {}", cfg.solver.newton_max_iter).unwrap();
    writeln!(s, "rtol = {}", cfg.solver.rtol).unwrap();
    writeln!(s, "atol = {}", cfg.solver.atol).unwrap();
    s
}
