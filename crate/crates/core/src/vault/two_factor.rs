//! Two-factor split of a template: the hidden layer (`w1`, `b1`) travels on
//! a user-held token, the output layer and mapped values stay with the
//! resource. Neither half can run a verification alone.

use std::path::Path;

use super::format::{check_header, verify_checksum, Reader, Writer};
use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::network::{Architecture, WeightSet};
use crate::template::{Template, TrainingMeta, VerifyOutcome};

pub const TOKEN_MAGIC: &str = "neuroauth-token";
pub const SERVER_MAGIC: &str = "neuroauth-server";

#[derive(Clone, Debug, PartialEq)]
pub struct TokenPart {
    pub version: u32,
    pub input_count: usize,
    pub hidden_count: usize,
    /// Row-major, `hidden_count` rows of `input_count`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub checksum: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerPart {
    pub version: u32,
    pub input_count: usize,
    pub hidden_count: usize,
    pub lambda: f64,
    pub meta: TrainingMeta<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub mapped_hidden: Vec<f64>,
    pub mapped_final: f64,
    pub checksum: u64,
}

impl TokenPart {
    fn writer(&self) -> Result<Writer> {
        let mut w = Writer::new(&format!("{TOKEN_MAGIC} v1"));
        w.kv("input_count", self.input_count);
        w.kv("hidden_count", self.hidden_count);
        write_rows(&mut w, "w1", &self.w1, self.input_count)?;
        w.reals("b1", &self.b1)?;
        Ok(w)
    }

    pub fn compute_checksum(&self) -> Result<u64> {
        Ok(super::format::checksum(self.writer()?.payload().as_bytes()))
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(self.writer()?.finish())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        check_header(text, TOKEN_MAGIC)?;
        let (payload, checksum) = verify_checksum(text)?;
        let mut r = Reader::new(payload);
        let input_count = r.parse("input_count")?;
        let hidden_count = r.parse("hidden_count")?;
        let w1 = read_rows(&mut r, "w1", hidden_count, input_count)?;
        let b1 = r.reals("b1", hidden_count)?;
        r.finish()?;
        Ok(Self {
            version: 1,
            input_count,
            hidden_count,
            w1,
            b1,
            checksum,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_file(path)?)
    }
}

impl ServerPart {
    pub(crate) fn write_body(&self, w: &mut Writer) -> Result<()> {
        w.reals("w2", &self.w2)?;
        w.real("b2", self.b2)?;
        w.reals("mapped_hidden", &self.mapped_hidden)?;
        w.real("mapped_final", self.mapped_final)
    }

    fn writer(&self) -> Result<Writer> {
        let mut w = Writer::new(&format!("{SERVER_MAGIC} v1"));
        w.real("lambda", self.lambda)?;
        write_meta_header(&mut w, self.input_count, self.hidden_count, &self.meta)?;
        self.write_body(&mut w)?;
        Ok(w)
    }

    pub fn compute_checksum(&self) -> Result<u64> {
        Ok(super::format::checksum(self.writer()?.payload().as_bytes()))
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(self.writer()?.finish())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        check_header(text, SERVER_MAGIC)?;
        let (payload, _) = verify_checksum(text)?;
        let mut r = Reader::new(payload);
        let lambda = r.real("lambda")?;
        let (input_count, hidden_count, meta) = read_meta_header(&mut r)?;
        let part = Self::read_body(&mut r, input_count, hidden_count, lambda, meta)?;
        r.finish()?;
        Ok(part)
    }

    pub(crate) fn read_body(
        r: &mut Reader<'_>,
        input_count: usize,
        hidden_count: usize,
        lambda: f64,
        meta: TrainingMeta<f64>,
    ) -> Result<Self> {
        let mut part = Self {
            version: 1,
            input_count,
            hidden_count,
            lambda,
            meta,
            w2: r.reals("w2", hidden_count)?,
            b2: r.real("b2")?,
            mapped_hidden: r.reals("mapped_hidden", hidden_count)?,
            mapped_final: r.real("mapped_final")?,
            checksum: 0,
        };
        part.checksum = part.compute_checksum()?;
        Ok(part)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_file(path)?)
    }
}

pub(crate) fn write_rows(w: &mut Writer, key: &str, values: &[f64], row_len: usize) -> Result<()> {
    for row in values.chunks(row_len.max(1)) {
        w.reals(key, row)?;
    }
    Ok(())
}

pub(crate) fn read_rows(r: &mut Reader<'_>, key: &str, rows: usize, row_len: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(rows * row_len);
    for _ in 0..rows {
        values.extend(r.reals(key, row_len)?);
    }
    Ok(values)
}

pub(crate) fn write_meta_header(
    w: &mut Writer,
    input_count: usize,
    hidden_count: usize,
    meta: &TrainingMeta<f64>,
) -> Result<()> {
    w.kv("input_count", input_count);
    w.kv("hidden_count", hidden_count);
    w.real("eta", meta.eta)?;
    w.real("epsilon", meta.epsilon)?;
    w.kv("seed", meta.seed);
    w.kv("epochs", meta.epochs);
    w.real("target", meta.target)
}

pub(crate) fn read_meta_header(r: &mut Reader<'_>) -> Result<(usize, usize, TrainingMeta<f64>)> {
    let input_count = r.parse("input_count")?;
    let hidden_count = r.parse("hidden_count")?;
    let eta = r.real("eta")?;
    let epsilon = r.real("epsilon")?;
    let seed = r.parse("seed")?;
    let epochs = r.parse("epochs")?;
    let target = r.real("target")?;
    Ok((
        input_count,
        hidden_count,
        TrainingMeta {
            eta,
            epsilon,
            target,
            seed,
            epochs,
        },
    ))
}

fn seal_token(mut token: TokenPart) -> TokenPart {
    // only fails on non-finite values, which a valid template cannot hold
    token.checksum = token.compute_checksum().unwrap_or_default();
    token
}

fn seal_server(mut server: ServerPart) -> ServerPart {
    server.checksum = server.compute_checksum().unwrap_or_default();
    server
}

/// Partitions a template into its token and server halves.
pub fn split_two_factor(template: &Template<f64>) -> (TokenPart, ServerPart) {
    let arch = template.architecture();
    let weights = template.weights();
    let token = seal_token(TokenPart {
        version: 1,
        input_count: arch.input_count,
        hidden_count: arch.hidden_count,
        w1: weights.w1.clone(),
        b1: weights.b1.clone(),
        checksum: 0,
    });
    let server = seal_server(ServerPart {
        version: 1,
        input_count: arch.input_count,
        hidden_count: arch.hidden_count,
        lambda: arch.lambda,
        meta: *template.meta(),
        w2: weights.w2.clone(),
        b2: weights.b2,
        mapped_hidden: template.mapped_hidden().to_vec(),
        mapped_final: template.mapped_final(),
        checksum: 0,
    });
    (token, server)
}

fn check_sealed(stored: u64, computed: Result<u64>) -> Result<()> {
    let computed = computed?;
    if stored == computed {
        Ok(())
    } else {
        Err(Error::ChecksumMismatch { stored, computed })
    }
}

/// Reassembles a template from both halves after checking their checksums
/// and that their dimensions agree.
pub fn combine(token: &TokenPart, server: &ServerPart) -> Result<Template<f64>> {
    check_sealed(token.checksum, token.compute_checksum())?;
    check_sealed(server.checksum, server.compute_checksum())?;
    if token.input_count != server.input_count {
        return Err(Error::DimensionMismatch {
            what: "token input_count",
            expected: server.input_count,
            found: token.input_count,
        });
    }
    if token.hidden_count != server.hidden_count {
        return Err(Error::DimensionMismatch {
            what: "token hidden_count",
            expected: server.hidden_count,
            found: token.hidden_count,
        });
    }
    let arch = Architecture::new(server.input_count, server.hidden_count, server.lambda)?;
    let weights = WeightSet::from_parts(
        server.input_count,
        server.hidden_count,
        token.w1.clone(),
        token.b1.clone(),
        server.w2.clone(),
        server.b2,
    )?;
    Template::from_parts(
        arch,
        weights,
        server.mapped_hidden.clone(),
        server.mapped_final,
        server.meta,
    )
}

pub fn verify_two_factor(
    server: &ServerPart,
    token: Option<&TokenPart>,
    candidate: &str,
) -> Result<VerifyOutcome<f64>> {
    let token = token.ok_or(Error::MissingToken)?;
    combine(token, server)?.verify(candidate)
}
