use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{
    Collection, CollectionKind, CorpusError, Document, GroundTruthSpan, IngestReport, Qrels, Query, Unevaluable,
};
use crate::span::Span;

/// How the QA table identifies the ground-truth paragraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GtMode {
    /// Paragraph text, located in the book by substring search.
    #[default]
    Text,
    /// The paragraph's `chapter_paragraph_index` within its book.
    Index,
}

#[derive(Debug, Clone)]
pub struct GutenQaOptions {
    pub delimiter: u8,
    pub book_col: String,
    pub index_col: String,
    pub paragraph_col: String,
    pub question_col: String,
    pub qa_book_col: String,
    pub gt_col: String,
    /// Optional explicit query id column; otherwise ids are `q{row}`.
    pub question_id_col: Option<String>,
    pub gt_mode: GtMode,
}

impl Default for GutenQaOptions {
    fn default() -> Self {
        GutenQaOptions {
            delimiter: b'\t',
            book_col: "book_name".into(),
            index_col: "chapter_paragraph_index".into(),
            paragraph_col: "paragraph_text".into(),
            question_col: "question".into(),
            qa_book_col: "book_name".into(),
            gt_col: "ground_truth_paragraph".into(),
            question_id_col: None,
            gt_mode: GtMode::Text,
        }
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path, delimiter: u8) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).flexible(false).from_reader(bytes.as_slice());
        let headers = rdr
            .headers()
            .map_err(|e| CorpusError::Malformed { path: path.to_owned(), line: 1, message: e.to_string() })?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.byte_records() {
            let rec = rec.map_err(|e| CorpusError::Malformed {
                path: path.to_owned(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let mut fields = Vec::with_capacity(rec.len());
            for f in rec.iter() {
                fields.push(super::normalize_bytes(f).map_err(|e| CorpusError::Malformed {
                    path: path.to_owned(),
                    line,
                    message: e.to_string(),
                })?);
            }
            rows.push((line, fields));
        }
        Ok(Table { headers, rows })
    }

    fn column(&self, path: &Path, name: &str) -> Result<usize, CorpusError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| CorpusError::Malformed {
            path: path.to_owned(),
            line: 1,
            message: format!("missing column `{name}` (have {:?})", self.headers),
        })
    }
}

struct Book {
    text: String,
    /// paragraph index -> span in `text`
    paragraphs: BTreeMap<i64, Span>,
}

/// Joins paragraphs with a single `\n`, recording each paragraph's span.
fn build_book(mut paras: Vec<(i64, String)>) -> Book {
    paras.sort_by_key(|(idx, _)| *idx);
    let mut text = String::new();
    let mut paragraphs = BTreeMap::new();
    for (i, (idx, p)) in paras.into_iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        let start = text.len();
        text.push_str(&p);
        paragraphs.insert(idx, Span::new(start, text.len()));
    }
    Book { text, paragraphs }
}

/// Collapses whitespace runs to one space (trimming both ends), keeping
/// the original byte span of every retained char.
fn collapse_whitespace(text: &str) -> (String, Vec<Span>) {
    let mut out = String::with_capacity(text.len());
    let mut map = Vec::with_capacity(text.len());
    let mut pending_ws: Option<Span> = None;
    for (i, ch) in text.char_indices() {
        let span = Span::new(i, i + ch.len_utf8());
        if ch.is_whitespace() {
            pending_ws.get_or_insert(span);
            continue;
        }
        if let Some(ws) = pending_ws.take() {
            if !out.is_empty() {
                out.push(' ');
                map.push(ws);
            }
        }
        for _ in 0..ch.len_utf8() {
            map.push(span);
        }
        out.push(ch);
    }
    (out, map)
}

/// Paragraph-location rule: first exact occurrence, then first
/// whitespace-collapsed occurrence.
pub(crate) fn locate_paragraph(book: &str, paragraph: &str) -> Option<Span> {
    if paragraph.trim().is_empty() {
        return None;
    }
    if let Some(start) = book.find(paragraph) {
        return Some(Span::new(start, start + paragraph.len()));
    }
    let (needle, _) = collapse_whitespace(paragraph);
    let (hay, map) = collapse_whitespace(book);
    let at = hay.find(&needle)?;
    let last = at + needle.len() - 1;
    Some(Span::new(map[at].start, map[last].end))
}

/// Loads a GutenQA-style collection: one document per book and one
/// scoped query per question.
pub fn ingest_gutenqa(books_path: &Path, qa_path: &Path, opts: &GutenQaOptions) -> Result<Collection, CorpusError> {
    let books_tbl = Table::read(books_path, opts.delimiter)?;
    let c_book = books_tbl.column(books_path, &opts.book_col)?;
    let c_idx = books_tbl.column(books_path, &opts.index_col)?;
    let c_par = books_tbl.column(books_path, &opts.paragraph_col)?;

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(i64, String)>> = HashMap::new();
    let mut seen_idx: HashMap<(String, i64), usize> = HashMap::new();
    for (line, row) in &books_tbl.rows {
        let book = row[c_book].clone();
        if book.is_empty() {
            return Err(CorpusError::Malformed {
                path: books_path.to_owned(),
                line: *line,
                message: "empty book name".into(),
            });
        }
        let idx: i64 = row[c_idx].trim().parse().map_err(|_| CorpusError::Malformed {
            path: books_path.to_owned(),
            line: *line,
            message: format!("non-integer paragraph index `{}`", row[c_idx]),
        })?;
        if let Some(prev) = seen_idx.insert((book.clone(), idx), *line) {
            return Err(CorpusError::Malformed {
                path: books_path.to_owned(),
                line: *line,
                message: format!("paragraph index {idx} of `{book}` already defined on line {prev}"),
            });
        }
        if !grouped.contains_key(&book) {
            order.push(book.clone());
        }
        grouped.entry(book).or_default().push((idx, row[c_par].clone()));
    }

    let mut books: HashMap<String, Book> = HashMap::new();
    let mut documents = Vec::new();
    let mut report = IngestReport::default();
    for name in order {
        let book = build_book(grouped.remove(&name).unwrap_or_default());
        if book.text.trim().is_empty() {
            report.dropped_empty_documents += 1;
            continue;
        }
        let mut meta = BTreeMap::new();
        meta.insert("book_name".to_owned(), name.clone());
        meta.insert("paragraphs".to_owned(), book.paragraphs.len().to_string());
        documents.push(Document { doc_id: name.clone(), title: name.clone(), text: book.text.clone(), meta });
        books.insert(name, book);
    }

    let qa_tbl = Table::read(qa_path, opts.delimiter)?;
    let c_q = qa_tbl.column(qa_path, &opts.question_col)?;
    let c_qb = qa_tbl.column(qa_path, &opts.qa_book_col)?;
    let c_gt = qa_tbl.column(qa_path, &opts.gt_col)?;
    let c_qid = opts.question_id_col.as_deref().map(|c| qa_tbl.column(qa_path, c)).transpose()?;

    let mut queries = Vec::new();
    let mut gt_spans = Vec::new();
    let mut unevaluable = Vec::new();
    let mut seen_q = std::collections::HashSet::new();
    for (row_no, (line, row)) in qa_tbl.rows.iter().enumerate() {
        let query_id = match c_qid {
            Some(c) => row[c].clone(),
            None => format!("q{row_no}"),
        };
        if !seen_q.insert(query_id.clone()) {
            return Err(CorpusError::Duplicate { kind: "query", id: query_id, path: qa_path.to_owned(), line: *line });
        }
        let book_name = row[c_qb].clone();
        queries.push(Query {
            query_id: query_id.clone(),
            text: row[c_q].clone(),
            scope_doc_id: Some(book_name.clone()),
        });

        let Some(book) = books.get(&book_name) else {
            unevaluable.push(Unevaluable { query_id, reason: format!("unknown book `{book_name}`") });
            continue;
        };
        let gt = &row[c_gt];
        let located = match opts.gt_mode {
            GtMode::Text => locate_paragraph(&book.text, gt).map(|span| {
                let para = book.paragraphs.iter().find(|(_, s)| **s == span).map(|(i, _)| *i as usize);
                (span, para)
            }),
            GtMode::Index => gt
                .trim()
                .parse::<i64>()
                .ok()
                .and_then(|i| book.paragraphs.get(&i).map(|s| (*s, i as usize)))
                .filter(|(s, _)| !s.slice(&book.text).trim().is_empty())
                .map(|(s, i)| (s, Some(i))),
        };
        match located {
            Some((char_span, source_paragraph_index)) => {
                gt_spans.push(GroundTruthSpan { query_id, doc_id: book_name, char_span, source_paragraph_index })
            }
            None => unevaluable.push(Unevaluable { query_id, reason: "ground-truth paragraph not found".into() }),
        }
    }

    let mut collection = Collection {
        kind: CollectionKind::Gutenqa,
        documents,
        queries,
        qrels: Qrels::default(),
        gt_spans,
        unevaluable,
        report,
    };
    collection.refresh_report();
    Ok(collection)
}
