#![no_main]

use libfuzzer_sys::fuzz_target;
use nimiwae::config::FileConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // parse plus every downstream resolution (enum parsing, validation)
    if let Ok(cfg) = FileConfig::parse(text) {
        let _ = cfg.train_config();
        let _ = cfg.sim_spec();
        let _ = cfg.missing_tokens();
        let _ = cfg.split_seed();
    }
});
