//! File formats: `annotations.jsonl`, `features.csv`, `gold.csv`, and the
//! canonical JSON used for every report.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::record::{
    validate_record, AnnotationRecord, Channel, Dimension, FeatureMatrix, GoldStandard, Modality,
};

/// Parses JSON Lines annotation records. Blank lines are skipped; any record
/// that fails validation is rejected with its line number.
pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let report = validate_record(&rec);
        if !report.is_valid() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: format!("invalid record: {:?}", report.violations),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = fs::File::open(path)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_annotations(&text, &path.display().to_string())
}

pub fn annotations_to_string(records: &[AnnotationRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a features CSV (`media_id,t,<names...>`) holding any number of
/// media items for one channel. Items are returned sorted by media id.
pub fn parse_features(text: &str, channel: Channel, origin: &str) -> Result<Vec<FeatureMatrix>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "media_id" || &headers[1] != "t" {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: "header must start with media_id,t and name at least one feature".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut by_media: BTreeMap<String, FeatureMatrix> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |message: String| Error::Parse { path: origin.to_string(), line, message };
        if row.len() != headers.len() {
            return Err(bad(format!("{} fields, expected {}", row.len(), headers.len())));
        }
        let media_id = row[0].to_string();
        let t: f64 = row[1].trim().parse().map_err(|e| bad(format!("t: {e}")))?;
        if !t.is_finite() || ((t * 2.0).round() - t * 2.0).abs() > 1e-6 {
            return Err(bad(format!("t = {t} is not a multiple of 0.5")));
        }
        let values = row
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("feature value: {e}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite feature value".into()));
        }
        let fm = by_media.entry(media_id.clone()).or_insert_with(|| FeatureMatrix {
            media_id,
            channel,
            timestamps: Vec::new(),
            values: Vec::new(),
            feature_names: names.clone(),
        });
        fm.timestamps.push(t);
        fm.values.push(values);
    }
    let out: Vec<FeatureMatrix> = by_media.into_values().collect();
    for fm in &out {
        fm.check()?;
    }
    Ok(out)
}

pub fn read_features(path: &Path, channel: Channel) -> Result<Vec<FeatureMatrix>> {
    let text = fs::read_to_string(path)?;
    parse_features(&text, channel, &path.display().to_string())
}

/// Serializes feature matrices into one CSV. All matrices must share names.
pub fn features_to_string(matrices: &[FeatureMatrix]) -> Result<String> {
    let Some(first) = matrices.first() else {
        return Err(Error::EmptyInput("feature matrices"));
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["media_id".to_string(), "t".to_string()];
    header.extend(first.feature_names.iter().cloned());
    w.write_record(&header)?;
    for fm in matrices {
        if fm.feature_names != first.feature_names {
            return Err(Error::NameMismatch);
        }
        for (t, row) in fm.timestamps.iter().zip(&fm.values) {
            let mut rec = vec![fm.media_id.clone(), format!("{t:.3}")];
            rec.extend(row.iter().map(|v| format_float(*v)));
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn gold_to_string(golds: &[GoldStandard]) -> String {
    let mut out = String::from("media_id,modality,dimension,t,value\n");
    for g in golds {
        for (t, v) in g.timestamps.iter().zip(&g.values) {
            out.push_str(&format!(
                "{},{},{},{t:.3},{}\n",
                g.media_id,
                g.modality,
                g.dimension,
                format_float(*v)
            ));
        }
    }
    out
}

/// Reads `gold.csv`; annotator weights are not part of that file and come
/// back empty.
pub fn parse_gold(text: &str, origin: &str) -> Result<Vec<GoldStandard>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut map: BTreeMap<(String, Modality, Dimension), GoldStandard> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |message: String| Error::Parse { path: origin.to_string(), line: i + 2, message };
        if row.len() != 5 {
            return Err(bad("expected 5 fields".into()));
        }
        let modality: Modality = row[1].parse().map_err(bad)?;
        let dimension: Dimension = row[2].parse().map_err(bad)?;
        let t: f64 = row[3].parse().map_err(|e| bad(format!("t: {e}")))?;
        let v: f64 = row[4].parse().map_err(|e| bad(format!("value: {e}")))?;
        let g = map
            .entry((row[0].to_string(), modality, dimension))
            .or_insert_with(|| GoldStandard {
                media_id: row[0].to_string(),
                modality,
                dimension,
                timestamps: Vec::new(),
                values: Vec::new(),
                annotator_weights: BTreeMap::new(),
            });
        g.timestamps.push(t);
        g.values.push(v);
    }
    Ok(map.into_values().collect())
}

pub fn read_gold(path: &Path) -> Result<Vec<GoldStandard>> {
    let text = fs::read_to_string(path)?;
    parse_gold(&text, &path.display().to_string())
}

/// Shortest round-trip representation of a float.
pub fn format_float(v: f64) -> String {
    let s = format!("{v}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let rounded: f64 = format!("{x:.12}").parse().unwrap_or(x);
            let rounded = if rounded == 0.0 { 0.0 } else { rounded };
            if let Some(num) = serde_json::Number::from_f64(rounded) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and floats rounded to 12 decimals, so equal
/// inputs give byte-identical files.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gems::gems_lookup;
    use crate::record::{AnnotatorProfile, Gender, OverlayMode, Sample};

    fn rec() -> AnnotationRecord {
        AnnotationRecord {
            participant_id: "p7".into(),
            media_id: "song-3".into(),
            modality: Modality::Music,
            overlay_mode: OverlayMode::NotApplicable,
            samples: vec![Sample::new(0.0, 0.1, -0.2), Sample::new(0.51, 0.3, 0.0)],
            familiar: true,
            gems_labels: vec![gems_lookup("Sad").unwrap(), gems_lookup("Blue").unwrap()],
            profile: AnnotatorProfile { gender: Gender::Other, years_musical_training: 0, age: None },
        }
    }

    #[test]
    fn parses_documented_line() {
        let line = r#"{"participant_id":"a","media_id":"m","modality":"audiovisual","overlay_mode":"side","samples":[[0,0.5,-0.5],[0.5,0.6,-0.4]],"familiar":false,"gems_labels":["sad","Feeling of transcendence"],"profile":{"gender":"male","years_musical_training":4,"age":22}}"#;
        let recs = parse_annotations(line, "x").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].overlay_mode, OverlayMode::SideBySide);
        assert_eq!(recs[0].samples[1], Sample::new(0.5, 0.6, -0.4));
        assert_eq!(recs[0].gems_labels[1].term(), "Feeling of transcendence");
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut r = rec();
        r.samples[0].arousal = 1.2;
        let text = serde_json::to_string(&r).unwrap();
        let err = parse_annotations(&text, "f.jsonl").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_unknown_label() {
        let text = serde_json::to_string(&rec()).unwrap().replace("\"Blue\"", "\"Excited\"");
        assert!(parse_annotations(&text, "f").is_err());
    }

    #[test]
    fn features_round_trip() {
        let text = "media_id,t,rms,zcr\nb,0.0,1,2\nb,0.5,3,4\na,0.0,5,6\n";
        let fms = parse_features(text, Channel::Audio, "f").unwrap();
        assert_eq!(fms.len(), 2);
        assert_eq!(fms[0].media_id, "a");
        assert_eq!(fms[1].values, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let again = parse_features(&features_to_string(&fms).unwrap(), Channel::Audio, "g").unwrap();
        assert_eq!(again, fms);
    }

    #[test]
    fn features_reject_off_grid_time() {
        let text = "media_id,t,rms\na,0.0,1\na,0.7,2\n";
        assert!(parse_features(text, Channel::Audio, "f").is_err());
        let text = "media_id,t,rms\na,0.0,1\na,1.0,2\n";
        assert!(matches!(parse_features(text, Channel::Audio, "f"), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn canonical_json_sorts_and_rounds() {
        let v = serde_json::json!({"b": 1.0 / 3.0, "a": [0.1 + 0.2]});
        let s = canonical_json(&v).unwrap();
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("0.333333333333"));
        assert!(s.contains("0.3\n") || s.contains("0.3,") || s.contains("0.3 "), "{s}");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
