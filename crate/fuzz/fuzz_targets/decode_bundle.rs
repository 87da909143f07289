#![no_main]

use deflecto::formats::{decode_bundle, encode_bundle};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((plan, bundle)) = decode_bundle(data) else {
        return;
    };
    // Whatever decodes must re-encode to a fixed point.
    let Ok(bytes) = encode_bundle(&plan, &bundle) else {
        return;
    };
    let (p2, b2) = decode_bundle(&bytes).expect("re-encoded bundle must decode");
    assert_eq!(encode_bundle(&p2, &b2).unwrap(), bytes);
});
