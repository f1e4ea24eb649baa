//! Fixtures shared by the benchmarks.

use gridmor_core::{PowerNetwork, SecondOrderModel, Topology};

pub fn model(n: usize, topology: Topology, seed: u64) -> SecondOrderModel {
    SecondOrderModel::from_network(&PowerNetwork::synthetic(n, topology, seed).expect("valid synthetic network"))
}
