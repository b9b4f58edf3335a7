#![no_main]

use lbl::cli::ObservationFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = ObservationFile::parse(text) {
        assert_eq!(ObservationFile::parse(&file.render()).unwrap(), file);
        let _ = file.observation_set();
    }
});
