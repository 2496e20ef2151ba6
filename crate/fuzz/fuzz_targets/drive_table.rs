#![no_main]
use libfuzzer_sys::fuzz_target;
use wgqed::model::DriveTable;

// Accepted tables have strictly increasing finite times and finite values.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = DriveTable::parse_csv(text) {
        let t = table.times();
        assert_eq!(t.len(), table.values().len());
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().chain(table.values()).all(|x| x.is_finite()));
    }
});
