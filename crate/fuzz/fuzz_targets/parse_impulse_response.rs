#![no_main]

use libfuzzer_sys::fuzz_target;
use mcanc::io::ir_file::{format_impulse_response, parse_impulse_response};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ir) = parse_impulse_response(text, None) {
        // anything accepted must survive a write/read cycle unchanged
        let again = parse_impulse_response(&format_impulse_response(&ir), Some(ir.sample_rate_hz()))
            .expect("formatted output parses");
        assert_eq!(ir.len(), again.len());
        for (a, b) in ir.taps().iter().zip(again.taps()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
});
