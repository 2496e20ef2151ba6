#![no_main]
use libfuzzer_sys::fuzz_target;
use wgqed_cli::config::{apply_override, parse_table, ExperimentConfig};

const BASE: &str = "experiment = \"tls\"\n[grid]\ndt = 0.01\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut table = parse_table(BASE).expect("base config parses");
    for line in text.lines() {
        if apply_override(&mut table, line).is_err() {
            return;
        }
    }
    let _ = ExperimentConfig::from_table(table);
});
