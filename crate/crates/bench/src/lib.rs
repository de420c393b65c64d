//! Fixtures shared by the benchmarks.

use sbm_core::ansatz::{random_state, EnergyFunctional};
use sbm_core::{BathDiscretization, MeshSpec, ModelParams, VariationalState};

pub struct Fixture {
    pub params: ModelParams,
    pub bath: BathDiscretization,
    pub state: VariationalState,
}

impl Fixture {
    /// Ohmic bath at `α = 0.5` on a `Λ = 2` mesh with `m` modes and a
    /// random `n`-state trial.
    pub fn new(n: usize, m: usize) -> Self {
        let params = ModelParams::new(0.0, 0.1).expect("valid params");
        let bath = MeshSpec::log(2.0, m).build(0.5).expect("valid mesh");
        let state = random_state(n, m, &bath, 7, 1.0).expect("valid state");
        Fixture { params, bath, state }
    }

    pub fn functional(&self) -> EnergyFunctional<'_> {
        EnergyFunctional::new(self.state.n(), &self.params, &self.bath).expect("valid functional")
    }
}
