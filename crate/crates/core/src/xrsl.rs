//! The XRSL subset used by stage-in job descriptions, and its translation
//! into transfers.
//!
//! ```text
//! document := '&' relation+
//! relation := '(' key '=' value ')'
//! value    := string | ('(' string+ ')')+
//! string   := '"' ... '"' | "''" ... "''" | bare-word
//! ```
//!
//! Disjunctions and relational operators other than `=` are rejected. A `%`
//! between relations is skipped with a warning.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::dialect::{select_data_path, PftpdDeployment};
use crate::protocols::{Overlap, ProtocolKind, StorageEndpoint, TransferSpec};
use crate::testbed::{DiskRef, PathId, Testbed};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XrslValue {
    Str(String),
    Tuples(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct XrslDocument {
    pub attributes: Vec<(String, XrslValue)>,
}

impl XrslDocument {
    pub fn get(&self, key: &str) -> Option<&XrslValue> {
        self.attributes
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v)
    }

    /// Canonical text that parses back to an equal document.
    pub fn render(&self) -> String {
        let mut out = String::from("&");
        for (i, (k, v)) in self.attributes.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push('(');
            out.push_str(k);
            out.push('=');
            match v {
                XrslValue::Str(s) => push_quoted(&mut out, s),
                XrslValue::Tuples(ts) => {
                    for t in ts {
                        out.push('(');
                        for (j, s) in t.iter().enumerate() {
                            if j > 0 {
                                out.push(' ');
                            }
                            push_quoted(&mut out, s);
                        }
                        out.push(')');
                    }
                }
            }
            out.push(')');
        }
        out
    }
}

fn push_quoted(out: &mut String, s: &str) {
    if s.contains('"') {
        out.push_str("''");
        out.push_str(s);
        out.push_str("''");
    } else {
        out.push('"');
        out.push_str(s);
        out.push('"');
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: expected {expected}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    warnings: Vec<ParseWarning>,
}

fn is_bare(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | '"' | '\'' | '=' | '&' | '|' | '!' | '<' | '>' | '%')
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn location(&self, at: usize) -> (usize, usize) {
        let before = &self.src[..at];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    fn error_at(&self, at: usize, expected: impl Into<String>) -> ParseError {
        let (line, col) = self.location(at);
        ParseError {
            line,
            col,
            expected: expected.into(),
        }
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        self.error_at(self.pos, expected)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(got) if got == c => {
                self.bump();
                Ok(())
            }
            Some(got @ ('|' | '!' | '<' | '>')) => Err(self.error(format!(
                "`{c}` (operator `{got}` is outside the supported subset)"
            ))),
            _ => Err(self.error(format!("`{c}`"))),
        }
    }

    fn document(&mut self) -> Result<XrslDocument, ParseError> {
        self.expect('&')?;
        let mut doc = XrslDocument::default();
        loop {
            self.skip_ws();
            match self.peek() {
                None if !doc.attributes.is_empty() => return Ok(doc),
                Some('%') if !doc.attributes.is_empty() => {
                    let (line, col) = self.location(self.pos);
                    self.warnings.push(ParseWarning {
                        line,
                        col,
                        message: "stray `%` between relations ignored".into(),
                    });
                    self.bump();
                }
                Some('(') => doc.attributes.push(self.relation()?),
                _ => return Err(self.error("`(` starting a relation")),
            }
        }
    }

    fn relation(&mut self) -> Result<(String, XrslValue), ParseError> {
        self.expect('(')?;
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            self.bump();
        }
        if start == self.pos {
            return Err(self.error("attribute name"));
        }
        let key = self.src[start..self.pos].to_string();
        self.expect('=')?;
        self.skip_ws();
        let value = if self.peek() == Some('(') {
            let mut tuples = Vec::new();
            while self.peek() == Some('(') {
                tuples.push(self.tuple()?);
                self.skip_ws();
            }
            XrslValue::Tuples(tuples)
        } else {
            XrslValue::Str(self.string()?)
        };
        self.expect(')')?;
        Ok((key, value))
    }

    fn tuple(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect('(')?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(')') && !items.is_empty() {
                self.bump();
                return Ok(items);
            }
            items.push(self.string()?);
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        if let Some(body) = rest.strip_prefix("''") {
            let end = body
                .find("''")
                .ok_or_else(|| self.error_at(start, "closing `''`"))?;
            self.pos += 2 + end + 2;
            return Ok(body[..end].to_string());
        }
        match self.peek() {
            Some('"') => {
                let body = &rest[1..];
                let end = body
                    .find('"')
                    .ok_or_else(|| self.error_at(start, "closing `\"`"))?;
                self.pos += 1 + end + 1;
                Ok(body[..end].to_string())
            }
            Some(c) if is_bare(c) => {
                while self.peek().is_some_and(is_bare) {
                    self.bump();
                }
                Ok(self.src[start..self.pos].to_string())
            }
            _ => Err(self.error("a value")),
        }
    }
}

pub fn parse_xrsl_with_warnings(text: &str) -> Result<(XrslDocument, Vec<ParseWarning>), ParseError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        warnings: Vec::new(),
    };
    let doc = p.document()?;
    Ok((doc, p.warnings))
}

pub fn parse_xrsl(text: &str) -> Result<XrslDocument, ParseError> {
    parse_xrsl_with_warnings(text).map(|(doc, _)| doc)
}

/// Parses raw bytes; invalid UTF-8 is a [`ParseError`] at the offending byte.
pub fn parse_bytes(bytes: &[u8]) -> Result<XrslDocument, ParseError> {
    match core::str::from_utf8(bytes) {
        Ok(text) => parse_xrsl(text),
        Err(e) => {
            let valid = core::str::from_utf8(&bytes[..e.valid_up_to()]).expect("prefix is valid");
            let p = Parser {
                src: valid,
                pos: valid.len(),
                warnings: Vec::new(),
            };
            Err(p.error("valid UTF-8"))
        }
    }
}

pub const GSIFTP_DEFAULT_PORT: u16 = 2811;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileUrl {
    pub scheme: String,
    pub host: String,
    pub port: u16,
    pub path: String,
}

impl fmt::Display for FileUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}:{}{}", self.scheme, self.host, self.port, self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrlError {
    #[error("`{0}` has no scheme")]
    NoScheme(String),
    #[error("`{0}` has no host")]
    NoHost(String),
    #[error("`{0}` has an invalid port")]
    BadPort(String),
}

impl FileUrl {
    pub fn parse(s: &str) -> Result<Self, UrlError> {
        let (scheme, rest) = s.split_once("://").ok_or_else(|| UrlError::NoScheme(s.into()))?;
        if scheme.is_empty() || !scheme.chars().all(|c| c.is_ascii_alphanumeric() || c == '+' || c == '-') {
            return Err(UrlError::NoScheme(s.into()));
        }
        let (authority, path) = match rest.find('/') {
            Some(i) => rest.split_at(i),
            None => (rest, "/"),
        };
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => (h, Some(p.parse::<u16>().ok().filter(|p| *p > 0).ok_or_else(|| UrlError::BadPort(s.into()))?)),
            None => (authority, None),
        };
        if host.is_empty() {
            return Err(UrlError::NoHost(s.into()));
        }
        let scheme = scheme.to_ascii_lowercase();
        let port = port.unwrap_or(if scheme == "gsiftp" { GSIFTP_DEFAULT_PORT } else { 0 });
        Ok(Self {
            scheme,
            host: host.into(),
            port,
            path: path.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageInRequest {
    pub name: String,
    pub url: FileUrl,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StageIns {
    pub requests: Vec<StageInRequest>,
    /// Inputs skipped because they cannot be routed through the simulator.
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageInError {
    #[error("inputfiles must be a list of tuples")]
    NotTuples,
    #[error("inputfiles tuple {index} has {found} items, expected 2")]
    Arity { index: usize, found: usize },
    #[error(transparent)]
    Url(#[from] UrlError),
    #[error("stage-in host `{0}` is not in the testbed")]
    UnknownHost(String),
    #[error("host `{0}` has no disk to read from")]
    NoDisk(String),
}

pub fn extract_stage_ins(doc: &XrslDocument) -> Result<StageIns, StageInError> {
    let mut out = StageIns::default();
    let tuples = match doc.get("inputfiles") {
        None => return Ok(out),
        Some(XrslValue::Str(_)) => return Err(StageInError::NotTuples),
        Some(XrslValue::Tuples(t)) => t,
    };
    for (index, t) in tuples.iter().enumerate() {
        let [name, url] = t.as_slice() else {
            return Err(StageInError::Arity { index, found: t.len() });
        };
        match FileUrl::parse(url) {
            Ok(u) if u.scheme == "gsiftp" => out.requests.push(StageInRequest {
                name: name.clone(),
                url: u,
            }),
            Ok(u) => out
                .diagnostics
                .push(format!("{name}: unsupported scheme `{}` in {url}", u.scheme)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Where stage-in data lands and how it travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageInContext {
    pub deployment: PftpdDeployment,
    /// Compute-element disk receiving the inputs.
    pub sink: DiskRef,
    pub path: PathId,
    pub streams: u32,
    pub overlap: Overlap,
}

impl StageInContext {
    pub fn new(deployment: PftpdDeployment, sink: DiskRef, path: PathId) -> Self {
        Self {
            deployment,
            sink,
            path,
            streams: 1,
            overlap: Overlap::Serial,
        }
    }
}

/// One pftp read per request. The file comes from wherever the testbed has
/// placed its path, else from the first disk of the URL host.
pub fn stage_in_to_transfers(
    requests: &[StageInRequest],
    testbed: &Testbed,
    ctx: &StageInContext,
) -> Result<Vec<TransferSpec>, StageInError> {
    requests
        .iter()
        .map(|r| {
            let host = testbed
                .find_host(&r.url.host)
                .ok_or_else(|| StageInError::UnknownHost(r.url.host.clone()))?;
            let disk = match testbed.locate_file(&r.url.path) {
                Some(d) => d,
                None => testbed
                    .disk_ref(host, 0)
                    .map_err(|_| StageInError::NoDisk(r.url.host.clone()))?,
            };
            let mut spec = TransferSpec::new(
                StorageEndpoint::Disk(disk),
                StorageEndpoint::Disk(ctx.sink),
                ProtocolKind::Pftp { pwidth: ctx.streams },
                ctx.path,
            )
            .with_overlap(ctx.overlap)
            .with_data_path(select_data_path(ctx.deployment, disk.host));
            spec.streams = ctx.streams;
            Ok(spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::DataPath;
    use crate::testbed::{TestbedParams, CLIENT_HOST, WAN};
    use alloc::vec;
    use proptest::prelude::*;

    const SAMPLE: &str = "&(executable=gsim1)
(arguments=''-d'')
(inputfiles=
(\"Bdata.in\"
\"gsiftp://dt05s.cc:2811/hpss/manabe/data2\"))
(stdout=datafiles.out)
(join=true)
(maxcputime=\"36000\")
(middleware=\"nordugrid\")
(jobname=\"HPSS access test\")
(stdlog=\"grid_debug\")%
(ftpThreads=1)
";

    fn s(v: &str) -> XrslValue {
        XrslValue::Str(v.into())
    }

    #[test]
    fn sample_parses() {
        let (doc, warnings) = parse_xrsl_with_warnings(SAMPLE).unwrap();
        assert_eq!(doc.attributes.len(), 10);
        assert_eq!(doc.attributes[0], ("executable".into(), s("gsim1")));
        assert_eq!(doc.get("arguments"), Some(&s("-d")));
        assert_eq!(doc.get("jobname"), Some(&s("HPSS access test")));
        assert_eq!(doc.get("ftpThreads"), Some(&s("1")));
        assert_eq!(
            doc.get("inputfiles"),
            Some(&XrslValue::Tuples(vec![vec![
                "Bdata.in".into(),
                "gsiftp://dt05s.cc:2811/hpss/manabe/data2".into()
            ]]))
        );
        assert_eq!(warnings.len(), 1);
        assert_eq!((warnings[0].line, warnings[0].col), (11, 22));
    }

    #[test]
    fn small_documents() {
        let doc = parse_xrsl("&(executable=a)").unwrap();
        assert_eq!(doc.attributes, vec![("executable".into(), s("a"))]);
        let e = parse_xrsl("&(x=(").unwrap_err();
        assert_eq!((e.line, e.col), (1, 6));
        assert!(parse_xrsl("").is_err());
        assert!(parse_xrsl("(a=b)").is_err());
        assert!(parse_xrsl("&").is_err());
        assert!(parse_xrsl("&(a=\"open)").is_err());
        assert!(parse_xrsl("&(a=''open)").is_err());
        let e = parse_xrsl("&(cputime<10)").unwrap_err();
        assert!(e.expected.contains("outside the supported subset"), "{e}");
        assert!(parse_xrsl("|(a=b)(c=d)").is_err());
    }

    #[test]
    fn render_round_trips() {
        let doc = parse_xrsl(SAMPLE).unwrap();
        let again = parse_xrsl(&doc.render()).unwrap();
        assert_eq!(doc, again);
        let quoted = XrslDocument {
            attributes: vec![("q".into(), s("say \"hi\""))],
        };
        assert_eq!(parse_xrsl(&quoted.render()).unwrap(), quoted);
    }

    #[test]
    fn invalid_utf8_is_a_parse_error() {
        let e = parse_bytes(b"&(a=\xff)").unwrap_err();
        assert_eq!((e.line, e.col), (1, 5));
    }

    #[test]
    fn sample_stage_in() {
        let doc = parse_xrsl(SAMPLE).unwrap();
        let st = extract_stage_ins(&doc).unwrap();
        assert_eq!(st.requests.len(), 1);
        let r = &st.requests[0];
        assert_eq!(r.name, "Bdata.in");
        assert_eq!(
            r.url,
            FileUrl {
                scheme: "gsiftp".into(),
                host: "dt05s.cc".into(),
                port: 2811,
                path: "/hpss/manabe/data2".into()
            }
        );
        assert!(st.diagnostics.is_empty());
    }

    #[test]
    fn stage_in_edge_cases() {
        let none = parse_xrsl("&(executable=a)").unwrap();
        assert_eq!(extract_stage_ins(&none).unwrap(), StageIns::default());
        let http = parse_xrsl("&(inputfiles=(\"a\" \"http://h/p\"))").unwrap();
        let st = extract_stage_ins(&http).unwrap();
        assert!(st.requests.is_empty());
        assert_eq!(st.diagnostics.len(), 1);
        let three = parse_xrsl("&(inputfiles=(\"a\" \"b\" \"c\"))").unwrap();
        assert_eq!(extract_stage_ins(&three), Err(StageInError::Arity { index: 0, found: 3 }));
        let flat = parse_xrsl("&(inputfiles=\"a\")").unwrap();
        assert_eq!(extract_stage_ins(&flat), Err(StageInError::NotTuples));
        assert_eq!(FileUrl::parse("gsiftp://h/x").unwrap().port, GSIFTP_DEFAULT_PORT);
        assert!(FileUrl::parse("gsiftp://h:0/x").is_err());
        assert!(FileUrl::parse("gsiftp:///x").is_err());
        assert!(FileUrl::parse("nothing").is_err());
    }

    #[test]
    fn requests_become_transfers() {
        let mut tb = TestbedParams::default().build().unwrap();
        tb.add_alias("dt05s.cc", "moverA").unwrap();
        let a = tb.host_id("moverA").unwrap();
        let b = tb.host_id("moverB").unwrap();
        let client = tb.host_id(CLIENT_HOST).unwrap();
        let ctx = StageInContext::new(
            PftpdDeployment::Gsi { host: a },
            tb.disk_ref(client, 0).unwrap(),
            tb.path_id(WAN).unwrap(),
        );
        let reqs = extract_stage_ins(&parse_xrsl(SAMPLE).unwrap()).unwrap().requests;

        let direct = stage_in_to_transfers(&reqs, &tb, &ctx).unwrap();
        assert_eq!(direct[0].data_path, DataPath::Direct);
        assert_eq!(direct[0].source, StorageEndpoint::Disk(DiskRef { host: a, index: 0 }));

        tb.place_file("/hpss/manabe/data2", tb.disk_ref(b, 1).unwrap());
        let relay = stage_in_to_transfers(&reqs, &tb, &ctx).unwrap();
        assert_eq!(relay[0].data_path, DataPath::Relay { via: a });
        assert!(relay[0].validate().is_ok());

        assert_eq!(stage_in_to_transfers(&[], &tb, &ctx).unwrap(), vec![]);
        let mut unknown = reqs.clone();
        unknown[0].url.host = "nowhere".into();
        assert_eq!(
            stage_in_to_transfers(&unknown, &tb, &ctx),
            Err(StageInError::UnknownHost("nowhere".into()))
        );
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = parse_bytes(&bytes);
        }

        #[test]
        fn structured_noise_never_panics(s in "[&()=\"' %a-z|<\n]{0,40}") {
            if let Ok(doc) = parse_xrsl(&s) {
                prop_assert_eq!(parse_xrsl(&doc.render()).unwrap(), doc);
            }
        }
    }
}
