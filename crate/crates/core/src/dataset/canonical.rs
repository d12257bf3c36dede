//! Line-delimited canonical dataset files.
//!
//! The first line is a header record
//! `{"format":"annoloop-dataset","version":1,"classes":[...],"provenance":"..."}`,
//! followed by one JSON object per image. Output is fully determined by the
//! dataset value, so equal datasets serialize to identical bytes.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Dataset, ImageRecord, IngestError, ParseError, Provenance};

pub const FORMAT_NAME: &str = "annoloop-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    classes: Vec<String>,
    provenance: Provenance,
}

pub fn write_canonical<W: Write>(d: &Dataset, mut sink: W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        classes: d.classes.clone(),
        provenance: d.provenance,
    };
    serde_json::to_writer(&mut sink, &header)?;
    sink.write_all(b"\n")?;
    for im in &d.images {
        serde_json::to_writer(&mut sink, im)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn read_canonical<R: BufRead>(source: R) -> Result<Dataset, IngestError> {
    let mut lines = source.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => return Err(ParseError::new("line 1", "missing header record").into()),
            Some((_, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .map_err(|e| ParseError::new("line 1", format!("bad header: {e}")))?;
            }
        }
    };
    if header.format != FORMAT_NAME {
        return Err(ParseError::new(
            "line 1",
            format!("unexpected format {:?}", header.format),
        )
        .into());
    }
    if header.version != FORMAT_VERSION {
        return Err(IngestError::VersionMismatch {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }

    let mut images = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ImageRecord>(&line) {
            Ok(im) => images.push(im),
            Err(e) => errors.push(ParseError::new(format!("line {}", i + 1), e.to_string())),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Parse(errors));
    }
    let d = Dataset {
        images,
        classes: header.classes,
        provenance: header.provenance,
    };
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GroundTruthObject, ObjectFlag};
    use crate::geometry::BoundingBox;

    fn two_image_dataset() -> Dataset {
        let mut a = ImageRecord::new("img-a", 640, 480);
        a.source_name = "img-a.jpg".into();
        a.sequence_index = Some(1);
        a.objects.push(
            GroundTruthObject::new("person", BoundingBox::new(9.0, 19.0, 110.0, 220.5).unwrap())
                .with_flag(ObjectFlag::Truncated)
                .with_flag(ObjectFlag::Difficult),
        );
        a.objects.push(GroundTruthObject::new(
            "car",
            BoundingBox::new(0.0, 0.0, 640.0, 480.0).unwrap(),
        ));
        let mut b = ImageRecord::new("img-b", 100, 50);
        b.source_name = "img-b.jpg".into();
        b.sequence_index = Some(0);
        Dataset::from_images(vec![a, b], Provenance::Voc).unwrap()
    }

    fn to_bytes(d: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_canonical(d, &mut buf).unwrap();
        buf
    }

    const GOLDEN: &str = concat!(
        r#"{"format":"annoloop-dataset","version":1,"classes":["car","person"],"provenance":"voc"}"#,
        "\n",
        r#"{"image_id":"img-a","source_name":"img-a.jpg","width":640,"height":480,"sequence_index":1,"objects":[{"class_label":"person","box":[9.0,19.0,110.0,220.5],"flags":["truncated","difficult"]},{"class_label":"car","box":[0.0,0.0,640.0,480.0],"flags":[]}]}"#,
        "\n",
        r#"{"image_id":"img-b","source_name":"img-b.jpg","width":100,"height":50,"sequence_index":0,"objects":[]}"#,
        "\n",
    );

    #[test]
    fn golden_bytes() {
        let d = two_image_dataset();
        assert_eq!(String::from_utf8(to_bytes(&d)).unwrap(), GOLDEN);
        assert_eq!(to_bytes(&d), to_bytes(&d.clone()));
    }

    #[test]
    fn round_trip_keeps_empty_images() {
        let d = two_image_dataset();
        let back = read_canonical(&to_bytes(&d)[..]).unwrap();
        assert_eq!(back, d);
        assert!(back.images[1].objects.is_empty());
    }

    #[test]
    fn version_mismatch() {
        let text = GOLDEN.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            read_canonical(text.as_bytes()),
            Err(IngestError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn reports_line_numbers() {
        let mut text = GOLDEN.to_string();
        text.push_str("{not json}\n");
        match read_canonical(text.as_bytes()) {
            Err(IngestError::Parse(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].document, "line 4");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_degenerate_box_on_read() {
        let text = GOLDEN.replace("[9.0,19.0,110.0,220.5]", "[9.0,19.0,9.0,220.5]");
        assert!(matches!(
            read_canonical(text.as_bytes()),
            Err(IngestError::Parse(_))
        ));
    }
}
