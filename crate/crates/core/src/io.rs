//! Tab-separated text formats for every artifact the pipeline reads or writes.
//!
//! Reals are written with 17 significant digits, which round-trips any `f64`
//! exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::{
    ConceptVocabulary, Embedding, FeatureTable, Pair, SimilarityMatrix, TripletDataset,
    TripletJudgment,
};
use crate::error::{Result, SposeError};

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| SposeError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SposeError::io(path, e))
}

fn finish(path: &Path, w: BufWriter<File>) -> Result<()> {
    w.into_inner()
        .map_err(|e| SposeError::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| SposeError::io(path, e))
}

/// Lines with their 1-based numbers, as owned strings.
fn numbered_lines(reader: impl Read, origin: &str) -> Result<Vec<(usize, String)>> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.map(|l| (i + 1, l.trim_end_matches('\r').to_string()))
                .map_err(|e| parse_err(origin, i + 1, format!("unreadable line: {e}")))
        })
        .collect()
}

fn parse_err(origin: &str, line: usize, message: impl Into<String>) -> SposeError {
    SposeError::Parse {
        path: origin.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_real(s: &str, origin: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(origin, line, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(origin, line, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

fn parse_index(s: &str, origin: &str, line: usize) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(origin, line, format!("not a non-negative integer: {s:?}")))
}

fn is_skippable(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

fn write_io(path: &Path, r: std::io::Result<()>) -> Result<()> {
    r.map_err(|e| SposeError::io(path, e))
}

// ---------------------------------------------------------------------------
// Vocabulary and name lists

pub fn read_vocabulary(reader: impl Read, origin: &str) -> Result<ConceptVocabulary> {
    let lines = numbered_lines(reader, origin)?;
    let mut names = Vec::with_capacity(lines.len());
    for (n, line) in lines {
        if line.is_empty() {
            return Err(parse_err(origin, n, "empty concept name"));
        }
        names.push(line);
    }
    ConceptVocabulary::new(names).map_err(|e| parse_err(origin, 0, e.to_string()))
}

pub fn load_vocabulary(path: &Path) -> Result<ConceptVocabulary> {
    read_vocabulary(open(path)?, &path.display().to_string())
}

pub fn save_vocabulary(vocab: &ConceptVocabulary, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for name in vocab.names() {
        write_io(path, writeln!(w, "{name}"))?;
    }
    finish(path, w)
}

/// Reads a list of concept names (one per line, `#` comments allowed) and
/// resolves them against `vocab`.
pub fn load_subset(path: &Path, vocab: &ConceptVocabulary) -> Result<Vec<usize>> {
    let origin = path.display().to_string();
    numbered_lines(open(path)?, &origin)?
        .into_iter()
        .filter(|(_, l)| !is_skippable(l))
        .map(|(n, l)| {
            vocab
                .index_of(l.trim())
                .ok_or_else(|| parse_err(&origin, n, format!("unknown concept {l:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Triplets

pub fn read_triplets(
    reader: impl Read,
    vocabulary: ConceptVocabulary,
    origin: &str,
) -> Result<TripletDataset> {
    let size = vocabulary.len();
    let mut judgments = Vec::new();
    for (n, line) in numbered_lines(reader, origin)? {
        if is_skippable(&line) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                origin,
                n,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let mut idx = [0usize; 3];
        for (slot, f) in idx.iter_mut().zip(&fields[..3]) {
            *slot = parse_index(f, origin, n)?;
            if *slot >= size {
                return Err(parse_err(
                    origin,
                    n,
                    format!(
                        "concept index {} out of range for vocabulary of size {size}",
                        *slot
                    ),
                ));
            }
        }
        let choice = fields[3]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Pair::from_code)
            .ok_or_else(|| {
                parse_err(
                    origin,
                    n,
                    format!("choice must be 0, 1 or 2, found {:?}", fields[3]),
                )
            })?;
        let j = TripletJudgment::new(idx[0], idx[1], idx[2], choice)
            .map_err(|e| parse_err(origin, n, e.to_string()))?;
        judgments.push(j);
    }
    TripletDataset::new(vocabulary, judgments)
}

/// Loads a triplet file whose indices refer to `vocabulary`.
pub fn load_triplets(path: &Path, vocabulary: ConceptVocabulary) -> Result<TripletDataset> {
    read_triplets(open(path)?, vocabulary, &path.display().to_string())
}

pub fn write_triplets(data: &TripletDataset, mut w: impl Write) -> std::io::Result<()> {
    for j in data.judgments() {
        writeln!(w, "{j}")?;
    }
    Ok(())
}

pub fn save_triplets(data: &TripletDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_io(path, write_triplets(data, &mut w))?;
    finish(path, w)
}

// ---------------------------------------------------------------------------
// Embeddings

pub fn write_embedding(emb: &Embedding, mut w: impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "# spose-embedding m={} p={}",
        emb.n_concepts(),
        emb.n_dims()
    )?;
    for (i, name) in emb.vocabulary().names().iter().enumerate() {
        write!(w, "{name}")?;
        for v in emb.row(i) {
            write!(w, "\t{}", fmt_real(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_embedding(reader: impl Read, origin: &str) -> Result<Embedding> {
    let lines = numbered_lines(reader, origin)?;
    let (hn, header) = lines
        .first()
        .ok_or_else(|| parse_err(origin, 1, "empty embedding file"))?;
    let (m, p) = parse_embedding_header(header).ok_or_else(|| {
        parse_err(
            origin,
            *hn,
            "expected header `# spose-embedding m=<m> p=<p>`",
        )
    })?;
    let rows: Vec<&(usize, String)> = lines[1..].iter().filter(|(_, l)| !l.is_empty()).collect();
    if rows.len() != m {
        return Err(parse_err(
            origin,
            lines.len(),
            format!("header declares {m} rows, found {}", rows.len()),
        ));
    }
    let mut names = Vec::with_capacity(m);
    let mut values = Array2::zeros((m, p));
    for (i, (n, line)) in rows.into_iter().enumerate() {
        let mut fields = line.split('\t');
        names.push(fields.next().unwrap_or_default().to_string());
        let vals: Vec<&str> = fields.collect();
        if vals.len() != p {
            return Err(parse_err(
                origin,
                *n,
                format!("expected {p} values, found {}", vals.len()),
            ));
        }
        for (f, s) in vals.iter().enumerate() {
            values[[i, f]] = parse_real(s, origin, *n)?;
        }
    }
    let vocab = ConceptVocabulary::new(names).map_err(|e| parse_err(origin, 0, e.to_string()))?;
    Embedding::new(vocab, values)
}

fn parse_embedding_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("# spose-embedding")?;
    let mut m = None;
    let mut p = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("m=") {
            m = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("p=") {
            p = v.parse().ok();
        }
    }
    Some((m?, p?))
}

pub fn load_embedding(path: &Path) -> Result<Embedding> {
    read_embedding(open(path)?, &path.display().to_string())
}

pub fn save_embedding(emb: &Embedding, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_io(path, write_embedding(emb, &mut w))?;
    finish(path, w)
}

// ---------------------------------------------------------------------------
// Feature tables

pub fn write_feature_table(table: &FeatureTable, mut w: impl Write) -> std::io::Result<()> {
    write!(w, "name")?;
    for f in table.feature_names() {
        write!(w, "\t{f}")?;
    }
    writeln!(w)?;
    for (i, name) in table.vocabulary().names().iter().enumerate() {
        write!(w, "{name}")?;
        for v in table.values().row(i) {
            write!(w, "\t{}", fmt_real(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_feature_table(reader: impl Read, origin: &str) -> Result<FeatureTable> {
    let lines = numbered_lines(reader, origin)?;
    let mut iter = lines.iter().filter(|(_, l)| !l.is_empty());
    let (hn, header) = iter
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty feature table"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("name") {
        return Err(parse_err(
            origin,
            *hn,
            "header must start with a `name` column",
        ));
    }
    let feature_names: Vec<String> = cols.map(str::to_string).collect();
    let k = feature_names.len();
    let mut names = Vec::new();
    let mut flat = Vec::new();
    for (n, line) in iter {
        let mut fields = line.split('\t');
        names.push(fields.next().unwrap_or_default().to_string());
        let vals: Vec<&str> = fields.collect();
        if vals.len() != k {
            return Err(parse_err(
                origin,
                *n,
                format!("expected {k} values, found {}", vals.len()),
            ));
        }
        for s in vals {
            flat.push(parse_real(s, origin, *n)?);
        }
    }
    let m = names.len();
    let vocab = ConceptVocabulary::new(names).map_err(|e| parse_err(origin, 0, e.to_string()))?;
    let values = Array2::from_shape_vec((m, k), flat).expect("row lengths checked");
    FeatureTable::new(vocab, feature_names, values)
}

pub fn load_feature_table(path: &Path) -> Result<FeatureTable> {
    read_feature_table(open(path)?, &path.display().to_string())
}

pub fn save_feature_table(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_io(path, write_feature_table(table, &mut w))?;
    finish(path, w)
}

// ---------------------------------------------------------------------------
// Similarity matrices: square table with a name header row and column, `NA`
// for undefined entries.

pub fn write_similarity(mat: &SimilarityMatrix, mut w: impl Write) -> std::io::Result<()> {
    write!(w, "name")?;
    for name in mat.vocabulary().names() {
        write!(w, "\t{name}")?;
    }
    writeln!(w)?;
    for (i, name) in mat.vocabulary().names().iter().enumerate() {
        write!(w, "{name}")?;
        for v in mat.values().row(i) {
            match v {
                Some(v) => write!(w, "\t{}", fmt_real(*v))?,
                None => write!(w, "\tNA")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_similarity(reader: impl Read, origin: &str) -> Result<SimilarityMatrix> {
    let lines = numbered_lines(reader, origin)?;
    let mut iter = lines.iter().filter(|(_, l)| !l.is_empty());
    let (hn, header) = iter
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty similarity file"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("name") {
        return Err(parse_err(
            origin,
            *hn,
            "header must start with a `name` column",
        ));
    }
    let names: Vec<String> = cols.map(str::to_string).collect();
    let m = names.len();
    let vocab = ConceptVocabulary::new(names).map_err(|e| parse_err(origin, *hn, e.to_string()))?;
    let mut values = Array2::from_elem((m, m), None);
    let mut count = 0;
    for (n, line) in iter {
        if count == m {
            return Err(parse_err(origin, *n, "more rows than columns"));
        }
        let mut fields = line.split('\t');
        let row_name = fields.next().unwrap_or_default();
        if vocab.name(count) != Some(row_name) {
            return Err(parse_err(
                origin,
                *n,
                format!("row name {row_name:?} does not match header"),
            ));
        }
        let vals: Vec<&str> = fields.collect();
        if vals.len() != m {
            return Err(parse_err(
                origin,
                *n,
                format!("expected {m} values, found {}", vals.len()),
            ));
        }
        for (j, s) in vals.iter().enumerate() {
            values[[count, j]] = if s.trim() == "NA" {
                None
            } else {
                Some(parse_real(s, origin, *n)?)
            };
        }
        count += 1;
    }
    if count != m {
        return Err(parse_err(
            origin,
            lines.len(),
            format!("expected {m} rows, found {count}"),
        ));
    }
    SimilarityMatrix::new(vocab, values).map_err(|e| parse_err(origin, 0, e.to_string()))
}

pub fn load_similarity(path: &Path) -> Result<SimilarityMatrix> {
    read_similarity(open(path)?, &path.display().to_string())
}

pub fn save_similarity(mat: &SimilarityMatrix, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_io(path, write_similarity(mat, &mut w))?;
    finish(path, w)
}

// ---------------------------------------------------------------------------
// Two-column `name<TAB>value` tables (category labels, typicality norms).

pub fn load_name_value_pairs(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (n, line) in numbered_lines(open(path)?, &origin)? {
        if is_skippable(&line) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() {
            return Err(parse_err(&origin, n, "expected `name<TAB>value`"));
        }
        out.push((n, fields[0].to_string(), fields[1].trim().to_string()));
    }
    Ok(out)
}

/// Reads a `name<TAB>score` file.
pub fn load_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    let origin = path.display().to_string();
    load_name_value_pairs(path)?
        .into_iter()
        .map(|(n, name, v)| Ok((name, parse_real(&v, &origin, n)?)))
        .collect()
}

/// Atomically-ish writes a text blob.
pub fn save_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    write_io(path, w.write_all(text.as_bytes()))?;
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab10() -> ConceptVocabulary {
        ConceptVocabulary::numbered(10)
    }

    #[test]
    fn triplet_lines() {
        let text = "# comment\n0\t5\t9\t0\n9\t5\t0\t0\n";
        let d = read_triplets(text.as_bytes(), vocab10(), "t").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.judgments()[0].concepts(), [0, 5, 9]);
        assert_eq!(d.judgments()[0].choice(), Pair::Ab);
        assert_eq!(d.judgments()[1].choice(), Pair::Bc);
    }

    #[test]
    fn triplet_errors_report_line() {
        let err = read_triplets("0\t1\t2\t0\n3\t3\t7\t1\n".as_bytes(), vocab10(), "t").unwrap_err();
        match err {
            SposeError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        let err = read_triplets("0\t1\t12\t0\n".as_bytes(), vocab10(), "t").unwrap_err();
        assert!(matches!(err, SposeError::Parse { line: 1, .. }));
        let err = read_triplets("0\t1\t2\n".as_bytes(), vocab10(), "t").unwrap_err();
        assert!(matches!(err, SposeError::Parse { line: 1, .. }));
        let err = read_triplets("0\t1\t2\t3\n".as_bytes(), vocab10(), "t").unwrap_err();
        assert!(matches!(err, SposeError::Parse { line: 1, .. }));
    }

    #[test]
    fn embedding_header_is_checked() {
        assert!(read_embedding("a\t1.0\n".as_bytes(), "e").is_err());
        let e = read_embedding("# spose-embedding m=1 p=2\na\t1.5\t0\n".as_bytes(), "e").unwrap();
        assert_eq!(e.values()[[0, 0]], 1.5);
        assert!(read_embedding("# spose-embedding m=2 p=2\na\t1.5\t0\n".as_bytes(), "e").is_err());
    }

    #[test]
    fn similarity_na_round_trip() {
        let v = ConceptVocabulary::numbered(3);
        let mut vals = Array2::from_elem((3, 3), None);
        vals[[0, 1]] = Some(0.25);
        vals[[1, 0]] = Some(0.25);
        let m = SimilarityMatrix::new(v, vals).unwrap();
        let mut buf = Vec::new();
        write_similarity(&m, &mut buf).unwrap();
        let back = read_similarity(buf.as_slice(), "s").unwrap();
        assert_eq!(back, m);
    }

    fn embedding_strategy() -> impl Strategy<Value = Embedding> {
        (1usize..6, 1usize..5).prop_flat_map(|(m, p)| {
            proptest::collection::vec(0.0f64..1e6, m * p).prop_map(move |v| {
                Embedding::new(
                    ConceptVocabulary::numbered(m),
                    Array2::from_shape_vec((m, p), v).unwrap(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn embedding_round_trip_is_exact(e in embedding_strategy()) {
            let mut buf = Vec::new();
            write_embedding(&e, &mut buf).unwrap();
            let back = read_embedding(buf.as_slice(), "e").unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn triplet_round_trip(raw in proptest::collection::vec((0usize..10, 0usize..10, 0usize..10, 0u8..3), 0..30)) {
            let js: Vec<_> = raw.into_iter()
                .filter_map(|(a, b, c, k)| TripletJudgment::new(a, b, c, Pair::from_code(k).unwrap()).ok())
                .collect();
            let d = TripletDataset::new(vocab10(), js).unwrap();
            let mut buf = Vec::new();
            write_triplets(&d, &mut buf).unwrap();
            let back = read_triplets(buf.as_slice(), vocab10(), "t").unwrap();
            prop_assert_eq!(back, d);
        }

        #[test]
        fn feature_table_round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 6)) {
            let t = FeatureTable::new(
                ConceptVocabulary::numbered(3),
                vec!["f1".into(), "f2".into()],
                Array2::from_shape_vec((3, 2), vals).unwrap(),
            ).unwrap();
            let mut buf = Vec::new();
            write_feature_table(&t, &mut buf).unwrap();
            prop_assert_eq!(read_feature_table(buf.as_slice(), "f").unwrap(), t);
        }
    }
}
