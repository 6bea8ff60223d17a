#![no_main]

use libfuzzer_sys::fuzz_target;
use nimiwae::networks::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // decoding untrusted checkpoints must fail cleanly on shape or name
    // mismatches, never panic
    if let Ok(ck) = serde_json::from_str::<Checkpoint>(text) {
        let _ = ck.into_params();
    }
});
