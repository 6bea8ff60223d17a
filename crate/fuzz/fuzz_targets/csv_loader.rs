#![no_main]

use libfuzzer_sys::fuzz_target;
use nimiwae::dataio::{MaskedDataset, DEFAULT_MISSING_TOKENS};

fuzz_target!(|data: &[u8]| {
    // the loader must reject or accept arbitrary bytes without panicking;
    // exercise both the default tokens and a custom token set
    let _ = MaskedDataset::from_reader(data, DEFAULT_MISSING_TOKENS);
    let _ = MaskedDataset::from_reader(data, &["?", "missing"]);

    // anything that parses must survive a split + standardize round trip
    if let Ok(mut ds) = MaskedDataset::from_reader(data, DEFAULT_MISSING_TOKENS) {
        if ds.n() >= 5 && ds.assign_splits(0).is_ok() && ds.standardize().is_ok() {
            let _ = ds.destandardize();
        }
    }
});
