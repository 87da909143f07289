#![no_main]

use deflecto::dataset::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = Manifest::parse(text) {
        let _ = m.no_object();
        let _ = m.lenses().count();
        let _ = m.to_toml();
    }
});
