#![no_main]

use libfuzzer_sys::fuzz_target;

// Must reject arbitrary bytes with an error, never panic or hang.
fuzz_target!(|data: &[u8]| {
    let _ = depts::checkpoint::parse_checkpoint(data);
});
