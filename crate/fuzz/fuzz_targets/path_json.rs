#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((params, path)) = bolza::io::path_from_json(text) {
        let again = bolza::io::path_to_json(&params, &path).expect("a parsed path serializes");
        let (_, back) = bolza::io::path_from_json(&again).expect("written paths parse");
        assert_eq!(back, path);
    }
});
