#![no_main]

use dicke_stark_cli::grid::Grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(grid) = Grid::parse(text) {
        assert!(!grid.is_empty());
        assert!(grid.values().iter().all(|v| v.is_finite()));
        let _ = grid.counts();
    }
});
