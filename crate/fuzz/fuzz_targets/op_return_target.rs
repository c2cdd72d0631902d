#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    bridgeless_fuzz::checks::op_return_target(data);
});
