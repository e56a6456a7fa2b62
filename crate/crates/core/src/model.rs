//! Machine parameters, the assembled system model and its state layout.
//!
//! Every retained bus carries exactly one machine. Two-axis machines have the
//! full four-state dynamics; classical machines keep the swing states with a
//! constant internal EMF `(V_fd, 0)`; droop machines reduce further to a
//! first-order angle equation. Classical and droop machines couple to the
//! network through their synchronous reactance, two-axis machines through
//! their transient reactance.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::network::{self, LineParams, ReducedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineKind {
    TwoAxis,
    Classical,
    Droop,
}

impl MachineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MachineKind::TwoAxis => "two_axis",
            MachineKind::Classical => "classical",
            MachineKind::Droop => "droop",
        }
    }
}

/// How a machine enters equilibrium computations: generators have their rotor
/// angle fixed by the operating point and a free mechanical input, loads have
/// a specified power reference and a free angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineRole {
    Generator,
    Load,
}

/// Constants of one machine. Fields that do not apply to a kind are zero.
#[derive(Debug, Clone, Copy)]
pub struct MachineParams {
    pub kind: MachineKind,
    pub role: MachineRole,
    /// Inertia constant \[s\]; zero for droop machines.
    pub m: f64,
    /// Damping coefficient \[pu\].
    pub d: f64,
    /// Synchronous reactance \[pu\].
    pub x: f64,
    /// Transient reactance \[pu\]; equals `x` for classical and droop machines.
    pub x_prime: f64,
    /// d-axis flux time constant \[s\]; two-axis only.
    pub tau_d: f64,
    /// q-axis flux time constant \[s\]; two-axis only.
    pub tau_q: f64,
    /// Constant field voltage \[pu\].
    pub v_fd: f64,
    /// Mechanical / reference power \[pu\]. Free input for two-axis machines
    /// (overwritten by the equilibrium solver), specified for loads.
    pub p_m: f64,
}

impl MachineParams {
    pub fn two_axis(
        m: f64,
        d: f64,
        x: f64,
        x_prime: f64,
        tau_d: f64,
        tau_q: f64,
        v_fd: f64,
    ) -> Self {
        Self {
            kind: MachineKind::TwoAxis,
            role: MachineRole::Generator,
            m,
            d,
            x,
            x_prime,
            tau_d,
            tau_q,
            v_fd,
            p_m: 0.0,
        }
    }

    pub fn classical(m: f64, d: f64, x: f64, v_fd: f64, p_m: f64) -> Self {
        Self {
            kind: MachineKind::Classical,
            role: MachineRole::Load,
            m,
            d,
            x,
            x_prime: x,
            tau_d: 0.0,
            tau_q: 0.0,
            v_fd,
            p_m,
        }
    }

    pub fn droop(d: f64, x: f64, v_fd: f64, p_m: f64) -> Self {
        Self {
            kind: MachineKind::Droop,
            role: MachineRole::Load,
            m: 0.0,
            d,
            x,
            x_prime: x,
            tau_d: 0.0,
            tau_q: 0.0,
            v_fd,
            p_m,
        }
    }

    pub fn with_role(mut self, role: MachineRole) -> Self {
        self.role = role;
        self
    }

    /// Reactance seen by the network reduction: transient for two-axis
    /// machines, synchronous otherwise.
    pub fn coupling_reactance(&self) -> f64 {
        match self.kind {
            MachineKind::TwoAxis => self.x_prime,
            _ => self.x,
        }
    }

    pub fn has_omega_state(&self) -> bool {
        !matches!(self.kind, MachineKind::Droop)
    }

    pub fn has_flux_state(&self) -> bool {
        matches!(self.kind, MachineKind::TwoAxis)
    }

    fn validate(&self, bus: u32) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidMachine { bus, reason });
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.d) {
            return fail(format!("damping D = {} must be > 0", self.d));
        }
        if !positive(self.x) {
            return fail(format!("synchronous reactance X = {} must be > 0", self.x));
        }
        match self.kind {
            MachineKind::TwoAxis => {
                if !positive(self.m) {
                    return fail(format!("inertia M = {} must be > 0", self.m));
                }
                if !(positive(self.x_prime) && self.x_prime <= self.x) {
                    return fail(format!(
                        "transient reactance X' = {} must satisfy 0 < X' <= X = {}",
                        self.x_prime, self.x
                    ));
                }
                if !(positive(self.tau_d) && positive(self.tau_q)) {
                    return fail("flux time constants must be > 0".into());
                }
                if !positive(self.v_fd) {
                    return fail(format!("field voltage V_fd = {} must be > 0", self.v_fd));
                }
            }
            MachineKind::Classical => {
                if !positive(self.m) {
                    return fail(format!("inertia M = {} must be > 0", self.m));
                }
                if !positive(self.v_fd) {
                    return fail(format!("field voltage V_fd = {} must be > 0", self.v_fd));
                }
            }
            MachineKind::Droop => {
                if !positive(self.v_fd) {
                    return fail(format!("field voltage V_fd = {} must be > 0", self.v_fd));
                }
            }
        }
        Ok(())
    }
}

/// A machine placed at a bus (index into the `NetworkSpec` bus list).
#[derive(Debug, Clone, Copy)]
pub struct Machine {
    pub bus: usize,
    pub params: MachineParams,
}

/// Raw system description: buses, lines and machine placements.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub omega0: f64,
    pub bus_ids: Vec<u32>,
    pub lines: Vec<LineParams>,
    pub machines: Vec<Machine>,
}

/// Where each machine's states live in the flat state vector
/// `[delta_0..N | omega | e_q | e_d]`.
#[derive(Debug, Clone)]
pub struct StateLayout {
    pub n_machines: usize,
    pub n_omega: usize,
    pub n_flux: usize,
    /// machine index -> omega slot
    pub omega_of: Vec<Option<usize>>,
    /// machine index -> flux slot
    pub flux_of: Vec<Option<usize>>,
    /// flux slot -> machine index
    pub flux_machine: Vec<usize>,
    /// omega slot -> machine index
    pub omega_machine: Vec<usize>,
}

impl StateLayout {
    pub fn new(machines: &[MachineParams]) -> Self {
        let n = machines.len();
        let mut omega_of = vec![None; n];
        let mut flux_of = vec![None; n];
        let mut omega_machine = Vec::new();
        let mut flux_machine = Vec::new();
        for (i, m) in machines.iter().enumerate() {
            if m.has_omega_state() {
                omega_of[i] = Some(omega_machine.len());
                omega_machine.push(i);
            }
            if m.has_flux_state() {
                flux_of[i] = Some(flux_machine.len());
                flux_machine.push(i);
            }
        }
        Self {
            n_machines: n,
            n_omega: omega_machine.len(),
            n_flux: flux_machine.len(),
            omega_of,
            flux_of,
            flux_machine,
            omega_machine,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_machines + self.n_omega + 2 * self.n_flux
    }
}

/// Dynamic state of the machine network.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Rotor angles, one per machine \[rad\].
    pub delta: DVector<f64>,
    /// Frequency deviations of machines with inertia \[pu\].
    pub omega: DVector<f64>,
    /// q-axis flux EMF of two-axis machines \[pu\].
    pub e_q: DVector<f64>,
    /// d-axis flux EMF of two-axis machines \[pu\].
    pub e_d: DVector<f64>,
}

impl SystemState {
    pub fn zeros(layout: &StateLayout) -> Self {
        Self {
            delta: DVector::zeros(layout.n_machines),
            omega: DVector::zeros(layout.n_omega),
            e_q: DVector::zeros(layout.n_flux),
            e_d: DVector::zeros(layout.n_flux),
        }
    }

    pub fn to_flat(&self, layout: &StateLayout) -> DVector<f64> {
        let mut x = DVector::zeros(layout.dim());
        let n = layout.n_machines;
        x.rows_mut(0, n).copy_from(&self.delta);
        x.rows_mut(n, layout.n_omega).copy_from(&self.omega);
        x.rows_mut(n + layout.n_omega, layout.n_flux)
            .copy_from(&self.e_q);
        x.rows_mut(n + layout.n_omega + layout.n_flux, layout.n_flux)
            .copy_from(&self.e_d);
        x
    }

    pub fn from_flat(layout: &StateLayout, x: &DVector<f64>) -> Self {
        assert_eq!(x.len(), layout.dim());
        let n = layout.n_machines;
        Self {
            delta: x.rows(0, n).into_owned(),
            omega: x.rows(n, layout.n_omega).into_owned(),
            e_q: x.rows(n + layout.n_omega, layout.n_flux).into_owned(),
            e_d: x
                .rows(n + layout.n_omega + layout.n_flux, layout.n_flux)
                .into_owned(),
        }
    }
}

/// Note emitted when a spec is turned into a model.
#[derive(Debug, Clone, Default)]
pub struct ReductionNote {
    /// External ids of eliminated zero-injection buses.
    pub eliminated: Vec<u32>,
    /// Whether the synchronous-reactance reduced susceptance was available.
    pub btilred_ok: bool,
}

/// Assembled analysis model: machines on the Kron-reduced network.
#[derive(Debug, Clone)]
pub struct PowerSystemModel {
    pub omega0: f64,
    pub machines: Vec<MachineParams>,
    /// External ids of the retained buses, aligned with `machines`.
    pub bus_ids: Vec<u32>,
    pub reduced: ReducedNetwork,
    pub layout: StateLayout,
}

impl PowerSystemModel {
    /// Build the model: assemble the admittance matrix, eliminate machine-less
    /// buses, Kron-reduce against the machine coupling reactances and attach
    /// the synchronous-reactance reduced susceptance.
    pub fn from_spec(spec: &NetworkSpec) -> Result<(Self, ReductionNote)> {
        if !(spec.omega0.is_finite() && spec.omega0 > 0.0) {
            return Err(Error::Invalid(format!(
                "system frequency omega0 = {} must be > 0",
                spec.omega0
            )));
        }
        let y_full = network::build_admittance(&spec.bus_ids, &spec.lines, spec.omega0)?;

        let n = spec.bus_ids.len();
        let mut machine_at: Vec<Option<&Machine>> = vec![None; n];
        for m in &spec.machines {
            if m.bus >= n {
                return Err(Error::Dimension {
                    what: format!("machine bus index {} out of range (n = {n})", m.bus),
                });
            }
            if machine_at[m.bus].is_some() {
                return Err(Error::InvalidMachine {
                    bus: spec.bus_ids[m.bus],
                    reason: "more than one machine at this bus".into(),
                });
            }
            m.params.validate(spec.bus_ids[m.bus])?;
            machine_at[m.bus] = Some(m);
        }
        let retain: Vec<usize> = (0..n).filter(|&i| machine_at[i].is_some()).collect();
        if retain.is_empty() {
            return Err(Error::Invalid("no machines in spec".into()));
        }
        let eliminated: Vec<u32> = (0..n)
            .filter(|&i| machine_at[i].is_none())
            .map(|i| spec.bus_ids[i])
            .collect();

        let y = network::eliminate_buses(&y_full, &retain)?;
        let machines: Vec<MachineParams> = retain
            .iter()
            .map(|&i| machine_at[i].unwrap().params)
            .collect();
        let coupling: Vec<f64> = machines.iter().map(|m| m.coupling_reactance()).collect();
        let sync: Vec<f64> = machines.iter().map(|m| m.x).collect();

        let mut reduced = network::kron_reduce(&y, &coupling)?;
        let btilred_ok = match network::build_btilred(&y, &sync) {
            Ok(bt) => {
                reduced.btilred = Some(bt);
                true
            }
            Err(Error::ShuntCondition { .. }) => false,
            Err(e) => return Err(e),
        };

        let layout = StateLayout::new(&machines);
        Ok((
            Self {
                omega0: spec.omega0,
                bus_ids: y.bus_ids.clone(),
                machines,
                reduced,
                layout,
            },
            ReductionNote {
                eliminated,
                btilred_ok,
            },
        ))
    }

    pub fn n(&self) -> usize {
        self.machines.len()
    }

    /// Machine indices with fixed grid angles in equilibrium computations.
    pub fn generator_indices(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.machines[i].role == MachineRole::Generator)
            .collect()
    }

    /// Machine indices with specified power references.
    pub fn load_indices(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.machines[i].role == MachineRole::Load)
            .collect()
    }

    /// Field voltages as a vector over machines.
    pub fn v_fd(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.machines.iter().map(|m| m.v_fd))
    }

    /// Power references as a vector over machines.
    pub fn p_m(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.machines.iter().map(|m| m.p_m))
    }

    /// X - X' gap of a two-axis machine, guarded against degeneracy.
    pub fn flux_gap(&self, machine: usize) -> Result<f64> {
        let p = &self.machines[machine];
        let gap = p.x - p.x_prime;
        if gap <= 1e-12 {
            return Err(Error::DegenerateReactance { machine, gap });
        }
        Ok(gap)
    }
}
