//! The detection file written by the external exporter, as the reader sees it.

use std::io::BufReader;
use std::path::Path;

use instloc::ingest::{filter_captions, load_detections, read_detections, CaptionStoplist};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/bridge_stub.jsonl");

#[test]
fn stub_export_reads_back() {
    let file = load_detections(Path::new(FIXTURE)).unwrap();
    assert_eq!(file.header.embedding_dim, 4);
    assert_eq!(file.records.len(), 2);
    assert!(file.records[1].detections.is_empty());
    for d in file.records.iter().flat_map(|r| &r.detections) {
        assert_eq!(d.embedding.len(), file.header.embedding_dim);
        assert_eq!(d.mask.dimensions(), (file.header.width, file.header.height));
        let [x0, y0, x1, y1] = d.mask.bounding_box().unwrap();
        assert!(d.bbox.x0 <= x0 as f64 && d.bbox.y0 <= y0 as f64);
        assert!(d.bbox.x1 >= x1 as f64 && d.bbox.y1 >= y1 as f64);
    }
    let chair = &file.records[0].detections[0];
    assert_eq!(chair.mask.count(), 6);
    assert!(chair.mask.get(2, 1) && chair.mask.get(4, 2) && !chair.mask.get(5, 2));
}

#[test]
fn rewriting_is_lossless() {
    let file = load_detections(Path::new(FIXTURE)).unwrap();
    let mut buf = Vec::new();
    instloc::ingest::write_detections(&mut buf, &file).unwrap();
    let back = read_detections(&mut BufReader::new(&buf[..]), Path::new("mem")).unwrap();
    assert_eq!(back, file);
}

#[test]
fn contract_violations_name_the_line() {
    let text = std::fs::read_to_string(FIXTURE).unwrap();
    let cases = [
        // embedding shorter than declared
        text.replace("[0.5,0.5,-0.1,0.0]", "[0.5,0.5,-0.1]"),
        // mask covering the wrong number of pixels
        text.replace("[32,2,6,2,6]", "[32,2,6,2,5]"),
        // box leaving the image
        text.replace("[0,4,2,6]", "[0,4,2,7]"),
    ];
    for bad in cases {
        let err = read_detections(&mut BufReader::new(bad.as_bytes()), Path::new("bad.jsonl")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}

#[test]
fn tagger_adjectives_never_reach_grounding() {
    let stoplist = CaptionStoplist::default();
    let kept = filter_captions(&["wooden".to_string(), "chair".to_string()], &stoplist);
    assert_eq!(kept, vec!["chair".to_string()]);
}
