#![no_main]

use dicke_stark_cli::cache::{decode_blob, encode_blob};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = decode_blob(data, None) {
        // anything accepted re-encodes to the same bytes
        let key: [u8; 32] = data[8..40].try_into().unwrap();
        assert_eq!(encode_blob(&key, &d), data);
    }
});
