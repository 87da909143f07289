#![no_main]

use std::path::Path;

use deflecto::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::parse(text, Path::new("fuzz.toml")) else {
        return;
    };
    // Validation allocates grid-sized buffers; keep inputs small.
    if cfg.grid.width <= 256 && cfg.grid.height <= 256 {
        let _ = cfg.validate();
    }
    let _ = cfg.to_toml();
});
