#![no_main]

use deflecto::plot::{parse_sweep_csv, render_svg, series};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(csv) = parse_sweep_csv(text) {
        let _ = series(&csv);
        let _ = render_svg(&csv);
    }
});
