//! File formats: score CSVs, landmark JSON and 8-bit RGB PNG.
//!
//! Score CSVs carry a mandatory header. Comment lines start with `#`; a
//! leading `# score_direction: asc|desc` directive declares whether higher
//! (`asc`, the default) or lower (`desc`) values mean "more similar" /
//! "more morph-like". Descending files are negated on load so every score
//! inside the toolkit follows the higher-is-more convention.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    ClassifierRecord, ImageBuffer, ImposterScoreSet, Label, LandmarkSet, MediaProvenance,
    MorphScoreSet, Point, SimilarityRecord,
};

pub const SIMILARITY_HEADER: [&str; 4] = ["morph_id", "subject_index", "sample_index", "score"];
pub const CLASSIFIER_HEADER: [&str; 5] = ["image_id", "label", "score", "algorithm", "provenance"];

/// 1 inch in metres, for PNG `pHYs` conversion.
const METRES_PER_INCH: f64 = 0.0254;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreDirection {
    #[default]
    Asc,
    Desc,
}

impl ScoreDirection {
    fn apply(self, score: f64) -> f64 {
        match self {
            ScoreDirection::Asc => score,
            ScoreDirection::Desc => -score,
        }
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn parse_direction(text: &str, source: &str) -> Result<ScoreDirection> {
    let mut direction = ScoreDirection::Asc;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(comment) = line.strip_prefix('#') else {
            break;
        };
        if let Some(value) = comment.trim().strip_prefix("score_direction:") {
            direction = match value.trim() {
                "asc" => ScoreDirection::Asc,
                "desc" => ScoreDirection::Desc,
                other => {
                    return Err(Error::Malformed {
                        source_name: source.to_string(),
                        line: n as u64 + 1,
                        reason: format!("score_direction must be asc or desc, got {other:?}"),
                    })
                }
            };
        }
    }
    Ok(direction)
}

/// Parsed CSV body: header-checked rows with their 1-based file line.
struct CsvRows {
    rows: Vec<(u64, csv::StringRecord)>,
    direction: ScoreDirection,
    /// Column index by header name.
    columns: Vec<String>,
}

impl CsvRows {
    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn read_csv(text: &str, source: &str, required: &[&str], exact: bool) -> Result<CsvRows> {
    let direction = parse_direction(text, source)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());

    let malformed = |line: u64, reason: String| Error::Malformed {
        source_name: source.to_string(),
        line,
        reason,
    };

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::NoRecords(source.to_string())),
        Some(r) => r.map_err(|e| csv_error(source, e))?,
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    let ok = if exact {
        columns.iter().map(String::as_str).eq(required.iter().copied())
    } else {
        required.iter().all(|r| columns.iter().any(|c| c == r))
    };
    if !ok {
        return Err(malformed(
            header_line,
            format!("expected header {:?}, got {:?}", required.join(","), columns.join(",")),
        ));
    }

    let mut rows = Vec::new();
    for r in records {
        let r = r.map_err(|e| csv_error(source, e))?;
        let line = r.position().map_or(0, |p| p.line());
        rows.push((line, r));
    }
    if rows.is_empty() {
        return Err(Error::NoRecords(source.to_string()));
    }
    Ok(CsvRows {
        rows,
        direction,
        columns,
    })
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Malformed {
        source_name: source.to_string(),
        line,
        reason: e.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(source: &str, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Malformed {
        source_name: source.to_string(),
        line,
        reason: format!("cannot parse {name} from {raw:?}"),
    })
}

fn parse_score(source: &str, line: u64, raw: &str, direction: ScoreDirection) -> Result<f64> {
    let v: f64 = parse_field(source, line, "score", raw)?;
    if !v.is_finite() {
        return Err(Error::NonFinite { line });
    }
    Ok(direction.apply(v))
}

/// Parses a similarity CSV held in memory. `source` names it in errors.
pub fn parse_similarity_scores(text: &str, source: &str) -> Result<MorphScoreSet> {
    let csv = read_csv(text, source, &SIMILARITY_HEADER, true)?;
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::with_capacity(csv.rows.len());
    for (line, r) in &csv.rows {
        let line = *line;
        let morph_id = r[0].to_string();
        if morph_id.is_empty() {
            return Err(Error::Malformed {
                source_name: source.to_string(),
                line,
                reason: "empty morph_id".into(),
            });
        }
        let subject_index: u32 = parse_field(source, line, "subject_index", &r[1])?;
        let sample_index: u32 = parse_field(source, line, "sample_index", &r[2])?;
        if subject_index == 0 || sample_index == 0 {
            return Err(Error::Malformed {
                source_name: source.to_string(),
                line,
                reason: "subject_index and sample_index are 1-based".into(),
            });
        }
        let score = parse_score(source, line, &r[3], csv.direction)?;
        if !seen.insert((morph_id.clone(), subject_index, sample_index)) {
            return Err(Error::Duplicate(format!(
                "(morph_id, subject_index, sample_index) = ({morph_id}, {subject_index}, {sample_index}) at line {line}"
            )));
        }
        records.push(SimilarityRecord {
            morph_id,
            subject_index,
            sample_index,
            score,
        });
    }
    MorphScoreSet::new(records)
}

pub fn load_similarity_scores(path: &Path) -> Result<MorphScoreSet> {
    parse_similarity_scores(&read_to_string(path)?, &path.display().to_string())
}

/// Serializes a score set in the similarity CSV format (ascending direction).
pub fn write_similarity_scores<W: Write>(set: &MorphScoreSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidInput(format!("csv write: {e}"));
    w.write_record(SIMILARITY_HEADER).map_err(io)?;
    for r in set.records() {
        w.write_record([
            r.morph_id.clone(),
            r.subject_index.to_string(),
            r.sample_index.to_string(),
            r.score.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Impostor files need a `score` column; other columns are ignored.
pub fn parse_impostor_scores(text: &str, source: &str) -> Result<ImposterScoreSet> {
    let csv = read_csv(text, source, &["score"], false)?;
    let col = csv.column("score").expect("checked by read_csv");
    let scores = csv
        .rows
        .iter()
        .map(|(line, r)| parse_score(source, *line, &r[col], csv.direction))
        .collect::<Result<Vec<_>>>()?;
    ImposterScoreSet::new(scores)
}

pub fn load_impostor_scores(path: &Path) -> Result<ImposterScoreSet> {
    parse_impostor_scores(&read_to_string(path)?, &path.display().to_string())
}

pub fn parse_classifier_scores(text: &str, source: &str) -> Result<Vec<ClassifierRecord>> {
    let csv = read_csv(text, source, &CLASSIFIER_HEADER, true)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(csv.rows.len());
    for (line, r) in &csv.rows {
        let line = *line;
        let image_id = r[0].to_string();
        let label = match &r[1] {
            "bonafide" => Label::BonaFide,
            "morph" => Label::Morph,
            other => {
                return Err(Error::UnknownLabel {
                    line,
                    label: other.to_string(),
                })
            }
        };
        let detection_score = parse_score(source, line, &r[2], csv.direction)?;
        let morph_algorithm = (!r[3].is_empty()).then(|| r[3].to_string());
        let provenance: MediaProvenance = r[4].parse().map_err(|e: Error| Error::Malformed {
            source_name: source.to_string(),
            line,
            reason: e.to_string(),
        })?;
        if !seen.insert(image_id.clone()) {
            return Err(Error::Duplicate(format!("image_id {image_id:?} at line {line}")));
        }
        out.push(ClassifierRecord {
            image_id,
            label,
            detection_score,
            morph_algorithm,
            provenance,
        });
    }
    Ok(out)
}

pub fn load_classifier_scores(path: &Path) -> Result<Vec<ClassifierRecord>> {
    parse_classifier_scores(&read_to_string(path)?, &path.display().to_string())
}

pub fn write_classifier_scores<W: Write>(records: &[ClassifierRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidInput(format!("csv write: {e}"));
    w.write_record(CLASSIFIER_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.image_id.as_str(),
            r.label.as_str(),
            &r.detection_score.to_string(),
            r.morph_algorithm.as_deref().unwrap_or(""),
            r.provenance.as_str(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    width: u32,
    height: u32,
    points: Vec<[f64; 2]>,
}

pub fn parse_landmarks(text: &str) -> Result<LandmarkSet> {
    let file: LandmarkFile = serde_json::from_str(text)?;
    let points = file.points.iter().map(|&[x, y]| Point::new(x, y)).collect();
    LandmarkSet::new(points, file.width, file.height)
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet> {
    parse_landmarks(&read_to_string(path)?)
}

pub fn landmarks_to_json(set: &LandmarkSet) -> String {
    let file = LandmarkFile {
        width: set.width(),
        height: set.height(),
        points: set.points().iter().map(|p| [p.x, p.y]).collect(),
    };
    serde_json::to_string(&file).expect("landmark file serializes")
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Image(format!("png decode: {e}")))?;
    let ppi = reader.info().pixel_dims.and_then(|d| match d.unit {
        png::Unit::Meter => Some((d.xppu as f64 * METRES_PER_INCH).round() as u32),
        png::Unit::Unspecified => None,
    });
    let (color, depth) = reader.output_color_type();
    if color.samples() == 4 || color == png::ColorType::GrayscaleAlpha {
        return Err(Error::Image(
            "alpha channel is not supported; expected 8-bit RGB".into(),
        ));
    }
    if color != png::ColorType::Rgb || depth != png::BitDepth::Eight {
        return Err(Error::Image(format!(
            "expected 8-bit RGB, got {color:?} at {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Image("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Image(format!("png decode: {e}")))?;
    buf.truncate(info.buffer_size());
    ImageBuffer::new(info.width, info.height, buf)?.with_ppi(ppi.filter(|&p| p > 0))
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Image(msg) => Error::Image(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Pixels per metre stored in `pHYs` for a given PPI (300 → 11811).
pub fn ppi_to_pixels_per_metre(ppi: u32) -> u32 {
    (ppi as f64 / METRES_PER_INCH).round() as u32
}

pub fn encode_png<W: Write>(image: &ImageBuffer, out: W) -> Result<()> {
    let mut encoder = png::Encoder::new(out, image.width(), image.height());
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    if let Some(ppi) = image.ppi() {
        let ppm = ppi_to_pixels_per_metre(ppi);
        encoder.set_pixel_dims(Some(png::PixelDimensions {
            xppu: ppm,
            yppu: ppm,
            unit: png::Unit::Meter,
        }));
    }
    let err = |e: png::EncodingError| Error::Image(format!("png encode: {e}"));
    let mut writer = encoder.write_header().map_err(err)?;
    writer.write_image_data(image.data()).map_err(err)?;
    writer.finish().map_err(err)?;
    Ok(())
}

pub fn write_png(path: &Path, image: &ImageBuffer) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_png(image, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_two_rows() {
        let set = parse_similarity_scores(
            "morph_id,subject_index,sample_index,score\nm1,1,1,0.9\nm1,2,1,0.8\n",
            "t",
        )
        .unwrap();
        assert_eq!(set.morph_count(), 1);
        assert_eq!(set.subject_count("m1"), Some(2));
        assert_eq!(set.sample_count("m1", 1), Some(1));
        assert_eq!(set.sample_count("m1", 2), Some(1));
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_similarity_scores("", "t").unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
        let err = parse_similarity_scores("morph_id,subject_index,sample_index,score\n", "t").unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "# note\nmorph_id,subject_index,sample_index,score\nm1,1,1,0.9\nm1,x,1,0.8\n";
        match parse_similarity_scores(text, "t").unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        let short = "morph_id,subject_index,sample_index,score\nm1,1,1\n";
        assert!(matches!(
            parse_similarity_scores(short, "t").unwrap_err(),
            Error::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let err = parse_similarity_scores("morph,subject,sample,score\nm1,1,1,0.9\n", "t").unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }));
    }

    #[test]
    fn duplicate_triple_and_non_finite() {
        let dup = "morph_id,subject_index,sample_index,score\nm1,1,1,0.9\nm1,1,1,0.8\n";
        assert!(matches!(parse_similarity_scores(dup, "t"), Err(Error::Duplicate(_))));
        let nan = "morph_id,subject_index,sample_index,score\nm1,1,1,NaN\n";
        assert!(matches!(
            parse_similarity_scores(nan, "t"),
            Err(Error::NonFinite { line: 2 })
        ));
        let inf = "morph_id,subject_index,sample_index,score\nm1,1,1,inf\n";
        assert!(matches!(parse_similarity_scores(inf, "t"), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn descending_direction_is_negated() {
        let text = "# score_direction: desc\nmorph_id,subject_index,sample_index,score\nm1,1,1,0.25\n";
        let set = parse_similarity_scores(text, "t").unwrap();
        assert_eq!(set.records()[0].score, -0.25);
        let bad = "# score_direction: up\nmorph_id,subject_index,sample_index,score\nm1,1,1,0.25\n";
        assert!(parse_similarity_scores(bad, "t").is_err());
    }

    #[test]
    fn classifier_rows() {
        let text = "image_id,label,score,algorithm,provenance\na,bonafide,0.1,,digital\nb,morph,0.9,OpenCV,print-scanned\n";
        let recs = parse_classifier_scores(text, "t").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].label, Label::BonaFide);
        assert_eq!(recs[0].morph_algorithm, None);
        assert_eq!(recs[1].morph_algorithm.as_deref(), Some("OpenCV"));
        assert_eq!(recs[1].provenance, MediaProvenance::PrintScanned);
    }

    #[test]
    fn classifier_errors() {
        let genuine = "image_id,label,score,algorithm,provenance\na,genuine,0.1,,digital\n";
        let err = parse_classifier_scores(genuine, "t").unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
        let dup = "image_id,label,score,algorithm,provenance\na,morph,0.1,,digital\na,morph,0.2,,digital\n";
        assert!(matches!(parse_classifier_scores(dup, "t"), Err(Error::Duplicate(_))));
        let nan = "image_id,label,score,algorithm,provenance\na,morph,nan,,digital\n";
        assert!(matches!(parse_classifier_scores(nan, "t"), Err(Error::NonFinite { .. })));
        let prov = "image_id,label,score,algorithm,provenance\na,morph,0.5,,scanned\n";
        assert!(matches!(parse_classifier_scores(prov, "t"), Err(Error::Malformed { .. })));
    }

    #[test]
    fn impostor_extra_columns_ignored() {
        let set = parse_impostor_scores("probe,reference,score\np,r,0.5\nq,r,0.25\n", "t").unwrap();
        assert_eq!(set.scores(), &[0.5, 0.25]);
    }

    #[test]
    fn landmark_json() {
        let pts: Vec<String> = (0..68).map(|k| format!("[{},{}]", k, k)).collect();
        let text = format!("{{\"width\":100,\"height\":80,\"points\":[{}]}}", pts.join(","));
        let set = parse_landmarks(&text).unwrap();
        assert_eq!(set.points()[67], Point::new(67.0, 67.0));
        assert_eq!(parse_landmarks(&landmarks_to_json(&set)).unwrap(), set);

        let short = format!("{{\"width\":100,\"height\":80,\"points\":[{}]}}", pts[..67].join(","));
        assert!(parse_landmarks(&short).unwrap_err().to_string().contains("expected 68 points"));
    }

    #[test]
    fn png_roundtrip_with_ppi() {
        let img = ImageBuffer::from_fn(5, 3, |x, y| [x as u8, y as u8, 7])
            .with_ppi(Some(300))
            .unwrap();
        let mut bytes = Vec::new();
        encode_png(&img, &mut bytes).unwrap();
        let back = decode_png(bytes.as_slice()).unwrap();
        assert_eq!(back, img);
        assert_eq!(ppi_to_pixels_per_metre(300), 11811);
    }

    #[test]
    fn png_alpha_rejected() {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 1, 1);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3, 4]).unwrap();
        }
        let err = decode_png(bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }
}
