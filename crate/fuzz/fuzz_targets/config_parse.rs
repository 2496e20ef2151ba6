#![no_main]
use libfuzzer_sys::fuzz_target;
use wgqed_cli::config::ExperimentConfig;

// Any accepted config must validate and survive a manifest round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml()).expect("manifest reparses");
        assert_eq!(cfg, again);
    }
});
