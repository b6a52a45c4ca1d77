//! Shared fixtures for the benchmarks.

use causalforge::free_ops::random_loae;
use causalforge::random::stream_rng;
use causalforge::switch::make_quantum_switch;
use causalforge::{FreeOperation, ProcessMatrix};

/// `|w_qs⟩⟨w_qs|` for target dimension `d`.
pub fn switch_process(d: usize) -> ProcessMatrix {
    ProcessMatrix::from_pure(&make_quantum_switch(d).expect("d >= 2")).expect("switch is a process")
}

/// A random qubit LOAE operation drawn from `seed`.
pub fn loae(seed: u64) -> FreeOperation {
    random_loae(2, &mut stream_rng(seed, 0))
}
