#![no_main]

use deflecto::formats::{decode_spectrum, encode_spectrum};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = decode_spectrum(data, 1.0) else {
        return;
    };
    let Ok(bytes) = encode_spectrum(&s) else {
        return;
    };
    let again = decode_spectrum(&bytes, 1.0).expect("re-encoded spectrum must decode");
    assert_eq!(encode_spectrum(&again).unwrap(), bytes);
});
