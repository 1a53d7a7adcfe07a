//! Versioned binary container for trained models.
//!
//! Layout: 8-byte magic, format version (`u32` LE), metadata length (`u64`
//! LE) and UTF-8 `key=value` lines, then `blocks` parameter blocks, each a
//! `u64` LE count followed by that many `f64` LE values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{Feature, FeatureLayout, Preprocessor, TabularSchema};
use crate::error::{Error, Result};
use crate::model::autoencoder::{AdversarialClassifier, Decoder, DisentangledAutoencoder};
use crate::model::classifier::FrozenClassifier;
use crate::model::gm::GaussianMixtureHead;
use crate::model::network::{Mlp, NetworkSpec, Parameterized};

pub const MAGIC: &[u8; 8] = b"LATENTCF";
pub const FORMAT_VERSION: u32 = 1;

/// Raw archive contents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<Vec<f64>>,
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(self.path, "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Archive {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.meta.clone();
        meta.insert("blocks".into(), self.blocks.len().to_string());
        let mut text = String::new();
        for (k, v) in &meta {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0, path };
        if c.take(8).ok() != Some(&MAGIC[..]) {
            return Err(corrupt(path, "bad magic bytes"));
        }
        let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let meta_len = usize::try_from(c.u64()?).map_err(|_| corrupt(path, "metadata too large"))?;
        let text = std::str::from_utf8(c.take(meta_len)?).map_err(|_| corrupt(path, "metadata is not UTF-8"))?;
        let mut meta = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| corrupt(path, format!("metadata line without '=': {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let n_blocks: usize = meta
            .remove("blocks")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupt(path, "missing block count"))?;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let n = usize::try_from(c.u64()?).map_err(|_| corrupt(path, "block too large"))?;
            let raw = c.take(n.checked_mul(8).ok_or_else(|| corrupt(path, "block too large"))?)?;
            blocks.push(
                raw.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect(),
            );
        }
        if c.pos != bytes.len() {
            return Err(corrupt(path, "trailing bytes after last block"));
        }
        Ok(Self { meta, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| corrupt(Path::new("<archive>"), format!("missing metadata key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| corrupt(Path::new("<archive>"), format!("bad value for {key:?}")))
    }
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '%' => out.push_str("%25"),
            ',' => out.push_str("%2C"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch == '%' {
            let code: String = chars.by_ref().take(2).collect();
            out.push(match code.as_str() {
                "25" => '%',
                "2C" => ',',
                "0A" => '\n',
                "0D" => '\r',
                _ => {
                    return Err(Error::Parse {
                        what: "archive string".into(),
                        detail: format!("bad escape %{code}"),
                    })
                }
            });
        } else {
            out.push(ch);
        }
    }
    Ok(out)
}

fn put_preprocessor(meta: &mut BTreeMap<String, String>, prep: &Preprocessor) {
    match prep {
        Preprocessor::Image { pixels } => {
            meta.insert("prep.kind".into(), "image".into());
            meta.insert("prep.pixels".into(), pixels.to_string());
        }
        Preprocessor::Tabular(s) => {
            meta.insert("prep.kind".into(), "tabular".into());
            meta.insert("prep.label".into(), escape(s.label()));
            if let Some(p) = s.positive() {
                meta.insert("prep.positive".into(), escape(p));
            }
            meta.insert("prep.features".into(), s.features().len().to_string());
            for (i, f) in s.features().iter().enumerate() {
                let key = |k: &str| format!("prep.feature.{i}.{k}");
                meta.insert(key("name"), escape(f.name()));
                match f {
                    Feature::Continuous { min, max, .. } => {
                        meta.insert(key("kind"), "continuous".into());
                        meta.insert(key("min"), min.to_string());
                        meta.insert(key("max"), max.to_string());
                    }
                    Feature::Categorical { vocabulary, .. } => {
                        meta.insert(key("kind"), "categorical".into());
                        let v: Vec<String> = vocabulary.iter().map(|c| escape(c)).collect();
                        meta.insert(key("vocab"), v.join(","));
                    }
                }
            }
        }
    }
}

fn get_preprocessor(a: &Archive) -> Result<Preprocessor> {
    match a.get("prep.kind")? {
        "image" => Ok(Preprocessor::Image {
            pixels: a.parse("prep.pixels")?,
        }),
        "tabular" => {
            let n: usize = a.parse("prep.features")?;
            let mut features = Vec::with_capacity(n);
            for i in 0..n {
                let key = |k: &str| format!("prep.feature.{i}.{k}");
                let name = unescape(a.get(&key("name"))?)?;
                features.push(match a.get(&key("kind"))? {
                    "continuous" => Feature::Continuous {
                        name,
                        min: a.parse(&key("min"))?,
                        max: a.parse(&key("max"))?,
                    },
                    "categorical" => Feature::Categorical {
                        name,
                        vocabulary: a
                            .get(&key("vocab"))?
                            .split(',')
                            .map(unescape)
                            .collect::<Result<_>>()?,
                    },
                    other => {
                        return Err(corrupt(Path::new("<archive>"), format!("unknown feature kind {other:?}")))
                    }
                });
            }
            let positive = a.meta.get("prep.positive").map(|p| unescape(p)).transpose()?;
            Ok(Preprocessor::Tabular(TabularSchema::new(
                features,
                unescape(a.get("prep.label")?)?,
                positive,
            )?))
        }
        other => Err(corrupt(Path::new("<archive>"), format!("unknown preprocessor {other:?}"))),
    }
}

fn put_net(a: &mut Archive, key: &str, net: &Mlp) {
    a.meta.insert(format!("net.{key}"), net.spec().to_string());
    a.blocks.extend(net.params().into_iter().map(|t| t.data().to_vec()));
}

struct BlockReader {
    blocks: std::vec::IntoIter<Vec<f64>>,
}

impl BlockReader {
    fn next(&mut self) -> Result<Vec<f64>> {
        self.blocks
            .next()
            .ok_or_else(|| corrupt(Path::new("<archive>"), "fewer parameter blocks than declared networks"))
    }

    fn net(&mut self, a: &Archive, key: &str) -> Result<Mlp> {
        let spec: NetworkSpec = a.get(&format!("net.{key}"))?.parse()?;
        let blocks = (0..spec.param_sizes().len())
            .map(|_| self.next())
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_parts(spec, blocks)
    }
}

/// A trained autoencoder with its adversary, preprocessing and a free-form
/// metadata echo (training configuration, seeds).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArchive {
    pub model: DisentangledAutoencoder,
    pub adversary: AdversarialClassifier,
    pub preprocessor: Preprocessor,
    pub info: BTreeMap<String, String>,
}

impl ModelArchive {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::default();
        a.meta.insert("kind".into(), "model".into());
        for (k, v) in &self.info {
            a.meta.insert(format!("info.{k}"), escape(v));
        }
        put_preprocessor(&mut a.meta, &self.preprocessor);
        let layout = self.model.layout();
        a.meta.insert("layout.continuous".into(), layout.continuous.to_string());
        let cats: Vec<String> = layout.categorical.iter().map(|w| w.to_string()).collect();
        a.meta.insert("layout.categorical".into(), cats.join(","));
        put_net(&mut a, "encoder", self.model.encoder());
        put_net(&mut a, "encoder_u", self.model.encoder_u());
        let dec = self.model.decoder();
        put_net(&mut a, "decoder.trunk", dec.trunk());
        if let Some(h) = dec.continuous_head() {
            put_net(&mut a, "decoder.continuous", h);
        }
        if let Some(h) = dec.categorical_head() {
            put_net(&mut a, "decoder.categorical", h);
        }
        a.blocks.extend(self.model.gm().params().into_iter().map(|t| t.data().to_vec()));
        put_net(&mut a, "adversary", self.adversary.network());
        a
    }

    pub fn from_archive(a: Archive) -> Result<Self> {
        if a.get("kind")? != "model" {
            return Err(corrupt(Path::new("<archive>"), "not a model archive"));
        }
        let preprocessor = get_preprocessor(&a)?;
        let categorical = match a.get("layout.categorical")? {
            "" => Vec::new(),
            s => s
                .split(',')
                .map(|w| w.parse().map_err(|_| corrupt(Path::new("<archive>"), "bad layout")))
                .collect::<Result<_>>()?,
        };
        let layout = FeatureLayout {
            continuous: a.parse("layout.continuous")?,
            categorical,
        };
        let info = a
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("info.").map(|k| (k.to_string(), v.clone())))
            .map(|(k, v)| Ok((k, unescape(&v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mut r = BlockReader {
            blocks: a.blocks.clone().into_iter(),
        };
        let encoder = r.net(&a, "encoder")?;
        let encoder_u = r.net(&a, "encoder_u")?;
        let trunk = r.net(&a, "decoder.trunk")?;
        let cont = a
            .meta
            .contains_key("net.decoder.continuous")
            .then(|| r.net(&a, "decoder.continuous"))
            .transpose()?;
        let cat = a
            .meta
            .contains_key("net.decoder.categorical")
            .then(|| r.net(&a, "decoder.categorical"))
            .transpose()?;
        let decoder = Decoder::from_parts(trunk, cont, cat, layout)?;
        let (m0, m1, l0, l1) = (r.next()?, r.next()?, r.next()?, r.next()?);
        let gm = GaussianMixtureHead::from_parts([m0, m1], [l0, l1])?;
        let adversary = AdversarialClassifier::from_network(r.net(&a, "adversary")?)?;
        if r.blocks.next().is_some() {
            return Err(corrupt(Path::new("<archive>"), "unused parameter blocks"));
        }
        let model = DisentangledAutoencoder::from_parts(encoder, encoder_u, decoder, gm)?;
        if preprocessor.layout() != *model.layout() {
            return Err(corrupt(Path::new("<archive>"), "preprocessor does not match model layout"));
        }
        Ok(Self {
            model,
            adversary,
            preprocessor,
            info,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(Archive::read(path)?).map_err(|e| relocate(e, path))
    }
}

/// A pretrained classifier with the preprocessing it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierArchive {
    pub classifier: FrozenClassifier,
    pub preprocessor: Preprocessor,
    pub info: BTreeMap<String, String>,
}

impl ClassifierArchive {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::default();
        a.meta.insert("kind".into(), "classifier".into());
        for (k, v) in &self.info {
            a.meta.insert(format!("info.{k}"), escape(v));
        }
        put_preprocessor(&mut a.meta, &self.preprocessor);
        put_net(&mut a, "classifier", self.classifier.network());
        a
    }

    pub fn from_archive(a: Archive) -> Result<Self> {
        if a.get("kind")? != "classifier" {
            return Err(corrupt(Path::new("<archive>"), "not a classifier archive"));
        }
        let preprocessor = get_preprocessor(&a)?;
        let info = a
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("info.").map(|k| (k.to_string(), v.clone())))
            .map(|(k, v)| Ok((k, unescape(&v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mut r = BlockReader {
            blocks: a.blocks.clone().into_iter(),
        };
        let classifier = FrozenClassifier::from_network(r.net(&a, "classifier")?)?;
        if r.blocks.next().is_some() {
            return Err(corrupt(Path::new("<archive>"), "unused parameter blocks"));
        }
        if classifier.input_width() != preprocessor.layout().width() {
            return Err(corrupt(Path::new("<archive>"), "preprocessor does not match classifier input"));
        }
        Ok(Self {
            classifier,
            preprocessor,
            info,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(Archive::read(path)?).map_err(|e| relocate(e, path))
    }
}

fn relocate(e: Error, path: &Path) -> Error {
    match e {
        Error::Corrupt { detail, .. } => Error::Corrupt {
            path: path.to_path_buf(),
            detail,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_round_trip() {
        for s in ["plain", "a,b", "50%", "x\ny", "%2C"] {
            assert_eq!(unescape(&escape(s)).unwrap(), s);
        }
        assert!(!escape("a,b\n").contains([',', '\n']));
    }

    #[test]
    fn raw_round_trip_and_rejections() {
        let mut a = Archive::default();
        a.meta.insert("k".into(), "v=w".into());
        a.blocks = vec![vec![1.5, f64::MIN_POSITIVE, -0.0], vec![]];
        let p = Path::new("mem");
        let bytes = a.to_bytes();
        assert_eq!(Archive::from_bytes(&bytes, p).unwrap(), a);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Archive::from_bytes(&bad, p), Err(Error::Corrupt { .. })));

        let mut newer = bytes.clone();
        newer[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Archive::from_bytes(&newer, p), Err(Error::Version { found: 2, .. })));

        assert!(Archive::from_bytes(&bytes[..bytes.len() - 3], p).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Archive::from_bytes(&long, p).is_err());
    }
}
