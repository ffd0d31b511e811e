#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // whatever parses must survive a write/read cycle unchanged
    if let Ok(rep) = rhk::io::parse_representation(data) {
        let text = serde_json::to_vec(&rhk::io::representation_json(&rep)).unwrap();
        let back = rhk::io::parse_representation(&text).unwrap();
        assert_eq!(back.matrices, rep.matrices);
        assert_eq!(back.lambdas, rep.lambdas);
    }
});
