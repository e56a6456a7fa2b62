//! Analysis library for multi-machine power systems with two-axis generator
//! models: admittance assembly and Kron reduction, the reduced closed-loop
//! ODE, strain-energy and Bregman-storage evaluation, linearized
//! electromagnetic subsystems with positive-real / negative-imaginary
//! frequency certificates, and equilibrium sweeps classifying stable versus
//! energy-convex operating points.

pub mod cases;
pub mod dynamics;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod network;

pub use error::{Error, Result};
pub use model::{
    Machine, MachineKind, MachineParams, MachineRole, NetworkSpec, PowerSystemModel, SystemState,
};
pub use network::{AdmittanceMatrix, LineParams, ReducedNetwork};
