#![no_main]

use lbl::protocol::{decode_message, encode_message};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // anything the decoder accepts is canonical, so it re-encodes byte for byte
    if let Ok(m) = decode_message(data) {
        assert_eq!(encode_message(&m).unwrap(), data);
    }
});
