#![no_main]

use lbl::cli::ScenarioFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = ScenarioFile::parse(text) {
        // validation must reject bad values without panicking
        let _ = file.scenario();
    }
});
