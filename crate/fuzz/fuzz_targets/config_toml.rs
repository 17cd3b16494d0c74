#![no_main]

use dicke_stark_cli::config::{ConfigFile, GlobalArgs, KeyArgs, Settings};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = ConfigFile::from_toml_str(text) {
        // resolution must reject bad values with an error, never a panic
        let _ = Settings::resolve(&GlobalArgs::default(), &KeyArgs::default(), &file, None);
    }
});
