use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, LabeledExample, Result};
use crate::textprep::clean_text;

/// Row counts from a converter run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub kept: usize,
    /// Rows whose source class is not the one being selected.
    pub dropped_class: usize,
    /// Rows whose text was empty after cleaning.
    pub dropped_empty: usize,
    /// Manifest rows still waiting for a label.
    pub pending: usize,
}

/// Hate-speech tweet CSV with `class` and `tweet` columns: rows of class 1
/// become cleaned text examples with label 1, all other classes are dropped.
/// The first column, when unnamed, supplies row ids.
pub fn from_hate_speech_csv<R: Read>(reader: R) -> Result<(Corpus, IngestReport)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CorpusError::Schema {
            line: 1,
            message: format!("missing `{name}` column"),
        })
    };
    let (class_col, tweet_col) = (col("class")?, col("tweet")?);
    let id_col = headers.get(0).filter(|h| h.is_empty()).map(|_| 0);

    let mut report = IngestReport::default();
    let mut examples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let class = rec.get(class_col).unwrap_or("").trim();
        let class: u32 = class
            .parse()
            .map_err(|_| CorpusError::Schema { line, message: format!("bad class {class:?}") })?;
        if class != 1 {
            report.dropped_class += 1;
            continue;
        }
        let text = clean_text(rec.get(tweet_col).unwrap_or(""));
        if text.is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        let raw_id = id_col.and_then(|c| rec.get(c)).map(str::to_string).unwrap_or_else(|| i.to_string());
        examples.push(LabeledExample::text(format!("hs-{raw_id}"), text.into_string(), 1, "hate-speech-csv"));
        report.kept += 1;
    }
    Ok((Corpus::new(examples)?, report))
}

#[derive(Deserialize)]
struct RedcapsFile {
    annotations: Vec<RedcapsEntry>,
}

#[derive(Deserialize)]
struct RedcapsEntry {
    image_id: String,
    subreddit: String,
}

/// RedCaps annotation JSON: every entry becomes a label-0 image example at
/// `<images_dir>/<subreddit>/<image_id>.jpg`.
pub fn from_redcaps_annotations<R: Read>(reader: R, images_dir: &Path) -> Result<(Corpus, IngestReport)> {
    let file: RedcapsFile =
        serde_json::from_reader(reader).map_err(|e| CorpusError::Schema { line: e.line(), message: e.to_string() })?;
    let examples: Vec<LabeledExample> = file
        .annotations
        .into_iter()
        .map(|a| {
            let path = images_dir.join(&a.subreddit).join(format!("{}.jpg", a.image_id));
            LabeledExample::image(
                format!("rc-{}", a.image_id),
                path.to_string_lossy(),
                0,
                format!("redcaps:{}", a.subreddit),
            )
        })
        .collect();
    let report = IngestReport { kept: examples.len(), ..Default::default() };
    Ok((Corpus::new(examples)?, report))
}

/// Review manifest CSV `image_path,proposed_query,label` after the manual
/// pass. Rows with a blank label are still pending and skipped.
pub fn from_review_manifest<R: Read>(reader: R) -> Result<(Corpus, IngestReport)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut report = IngestReport::default();
    let mut examples = Vec::new();
    for (i, rec) in rdr.deserialize::<super::fetch::ManifestRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| CorpusError::Schema { line, message: e.to_string() })?;
        let label = match row.label.trim() {
            "" => {
                report.pending += 1;
                continue;
            }
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CorpusError::Schema { line, message: format!("label {other:?} is not 0 or 1") })
            }
        };
        let id = Path::new(&row.image_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| row.image_path.clone());
        examples.push(LabeledExample::image(id, row.image_path, label, format!("search:{}", row.proposed_query)));
        report.kept += 1;
    }
    Ok((Corpus::new(examples)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Modality;

    #[test]
    fn hate_speech_keeps_class_one() {
        let csv = ",count,hate_speech,offensive_language,neither,class,tweet\n\
                   0,3,0,0,3,2,\"!!! RT @mayasolovely: As a woman you shouldn't complain\"\n\
                   1,3,0,3,0,1,\"RT @user: you are a #clown &amp; a fool http://t.co/x\"\n\
                   2,3,3,0,0,0,\"something hateful\"\n\
                   3,3,0,3,0,1,\"@someone https://t.co/only\"\n";
        let (c, r) = from_hate_speech_csv(csv.as_bytes()).unwrap();
        assert_eq!(r, IngestReport { kept: 1, dropped_class: 2, dropped_empty: 1, pending: 0 });
        let ex = &c.examples()[0];
        assert_eq!(ex.id, "hs-1");
        assert_eq!(ex.label, 1);
        assert_eq!(ex.text.as_deref(), Some("you are a clown a fool"));
    }

    #[test]
    fn hate_speech_requires_columns() {
        assert!(matches!(from_hate_speech_csv("a,b\n1,2\n".as_bytes()), Err(CorpusError::Schema { .. })));
        let bad = "class,tweet\nx,hello\n";
        assert!(matches!(from_hate_speech_csv(bad.as_bytes()), Err(CorpusError::Schema { line: 2, .. })));
    }

    #[test]
    fn redcaps_entries_are_negative_images() {
        let json = r#"{"info":{},"annotations":[
            {"image_id":"abc","author":"u","url":"https://i.redd.it/abc.jpg","raw_caption":"r","caption":"c","subreddit":"itookapicture","score":1,"created_utc":0,"permalink":"/r"},
            {"image_id":"def","subreddit":"pics"}]}"#;
        let (c, r) = from_redcaps_annotations(json.as_bytes(), Path::new("imgs")).unwrap();
        assert_eq!(r.kept, 2);
        let ex = &c.examples()[0];
        assert_eq!(ex.modality, Modality::Image);
        assert_eq!(ex.label, 0);
        assert_eq!(ex.image_path.as_deref(), Some("imgs/itookapicture/abc.jpg"));
        assert_eq!(ex.source, "redcaps:itookapicture");
    }

    #[test]
    fn manifest_skips_pending_rows() {
        let csv = "image_path,proposed_query,label\n\
                   out/a1.png,angry mob,1\n\
                   out/b2.png,sunset beach,\n\
                   out/c3.png,puppy,0\n";
        let (c, r) = from_review_manifest(csv.as_bytes()).unwrap();
        assert_eq!((r.kept, r.pending), (2, 1));
        assert_eq!(c.examples()[0].id, "a1");
        assert_eq!(c.examples()[1].label, 0);
        assert_eq!(c.examples()[0].source, "search:angry mob");
        let bad = "image_path,proposed_query,label\nx.png,q,yes\n";
        assert!(matches!(from_review_manifest(bad.as_bytes()), Err(CorpusError::Schema { line: 2, .. })));
    }
}
