//! Bundled benchmark case: the 9-bus system with three two-axis generators
//! (buses 1-3) and three constant-power loads (buses 5, 6, 8). Buses 4, 7
//! and 9 carry no machine and are eliminated during model assembly.
//!
//! Generator field voltages default to 1.0 pu here and are normally replaced
//! by [`crate::equilibrium::calibrate_field_voltages`] so that the flux
//! steady state at the reference operating point has unit EMF magnitude; use
//! [`ieee9_model`] to get the calibrated model directly.

use crate::equilibrium::{self, SolverOpts};
use crate::error::Result;
use crate::model::{Machine, MachineKind, MachineParams, NetworkSpec, PowerSystemModel};
use crate::network::LineParams;

/// 60 Hz system angular frequency \[rad/s\].
pub const OMEGA0: f64 = 120.0 * std::f64::consts::PI;

/// Load active power references \[pu\] at buses 5, 6, 8.
pub const LOAD_REFS: [f64; 3] = [-1.25, -0.90, -1.00];

fn lines(lossless: bool) -> Vec<LineParams> {
    // (from, to, g, b, c); bus numbering is 1-based in the labels
    let raw: [(usize, usize, f64, f64, f64); 9] = [
        (1, 4, 0.0000, -17.361, 0.0),
        (2, 7, 0.0000, -16.000, 0.0),
        (3, 9, 0.0000, -17.065, 0.0),
        (4, 5, 1.3650, -11.604, 0.4669e-3),
        (4, 6, 1.9420, -10.511, 0.4191e-3),
        (5, 7, 1.1880, -5.9750, 0.8117e-3),
        (6, 9, 1.2820, -5.5880, 0.9496e-3),
        (7, 8, 1.6170, -13.698, 0.3952e-3),
        (8, 9, 1.1550, -9.7840, 0.5544e-3),
    ];
    raw.iter()
        .map(|&(f, t, g, b, c)| LineParams {
            from: f - 1,
            to: t - 1,
            g: if lossless { 0.0 } else { g },
            b,
            c,
        })
        .collect()
}

fn load(kind: MachineKind, p_m: f64) -> MachineParams {
    match kind {
        MachineKind::Classical => MachineParams::classical(0.0042, 0.0003, 0.3, 1.0, p_m),
        MachineKind::Droop => MachineParams::droop(0.0003, 0.3, 1.0, p_m),
        MachineKind::TwoAxis => panic!("loads are classical or droop"),
    }
}

/// The 9-bus spec. `lossless` zeroes every line conductance; `load_kind`
/// selects between induction-motor (classical) and droop load models.
pub fn ieee9(lossless: bool, load_kind: MachineKind) -> NetworkSpec {
    let machines = vec![
        Machine {
            bus: 0,
            params: MachineParams::two_axis(0.1254, 0.0125, 0.1460, 0.0608, 8.9600, 0.3100, 1.0),
        },
        Machine {
            bus: 1,
            params: MachineParams::two_axis(0.0340, 0.0068, 0.8958, 0.1198, 6.0000, 0.5350, 1.0),
        },
        Machine {
            bus: 2,
            params: MachineParams::two_axis(0.0160, 0.0048, 1.3120, 0.1813, 5.8900, 0.6000, 1.0),
        },
        Machine {
            bus: 4,
            params: load(load_kind, LOAD_REFS[0]),
        },
        Machine {
            bus: 5,
            params: load(load_kind, LOAD_REFS[1]),
        },
        Machine {
            bus: 7,
            params: load(load_kind, LOAD_REFS[2]),
        },
    ];
    NetworkSpec {
        omega0: OMEGA0,
        bus_ids: (1..=9).collect(),
        lines: lines(lossless),
        machines,
    }
}

/// Assembled and field-voltage-calibrated 9-bus model.
pub fn ieee9_model(lossless: bool, load_kind: MachineKind) -> Result<PowerSystemModel> {
    let (mut model, _) = PowerSystemModel::from_spec(&ieee9(lossless, load_kind))?;
    let gens = model.generator_indices();
    equilibrium::calibrate_field_voltages(&mut model, &gens, &SolverOpts::default())?;
    Ok(model)
}
