//! Versioned binary container for trained models.
//!
//! Layout: magic `FMDL`, format version (u32 LE), a model-type tag, then the
//! typed payload. Floats are stored as little-endian IEEE-754 doubles, so a
//! round trip reproduces bit-identical predictions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::baselines::{BernoulliNbModel, LinearModel};
use crate::dataset::{Label, SparseVector};
use crate::error::{Error, Result};
use crate::fm::{FmModel, InteractionMask};
use crate::token::FeatureCategory;

const MAGIC: [u8; 4] = *b"FMDL";
const FORMAT_VERSION: u32 = 1;

const TYPE_FM: u8 = 1;
const TYPE_LINEAR: u8 = 2;
const TYPE_BERNOULLI_NB: u8 = 3;

/// Any model the container can hold.
#[derive(Clone, Debug)]
pub enum Model {
    Fm(FmModel),
    Linear(LinearModel),
    BernoulliNb(BernoulliNbModel),
}

impl Model {
    pub fn type_name(&self) -> &'static str {
        match self {
            Model::Fm(_) => "fm",
            Model::Linear(_) => "linear",
            Model::BernoulliNb(_) => "bernoulli-nb",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Fm(m) => m.dim(),
            Model::Linear(m) => m.dim(),
            Model::BernoulliNb(m) => m.dim(),
        }
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        match self {
            Model::Fm(m) => m.predict_proba(x),
            Model::Linear(m) => m.predict_proba(x),
            Model::BernoulliNb(m) => m.predict_proba(x),
        }
    }

    pub fn classify(&self, x: &SparseVector, threshold: f64) -> Result<Label> {
        Ok(if self.predict_proba(x)? > threshold {
            Label::Malware
        } else {
            Label::Clean
        })
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    write_model(model, &mut out).map_err(Error::io(path))?;
    out.flush().map_err(Error::io(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path).map_err(Error::io(path))?);
    let model = read_model(&mut reader)?;
    let mut rest = [0u8; 1];
    match reader.read(&mut rest) {
        Ok(0) => Ok(model),
        Ok(_) => Err(Error::ModelFormat("trailing bytes after model payload".into())),
        Err(e) => Err(Error::io(path)(e)),
    }
}

fn write_model(model: &Model, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    match model {
        Model::Fm(m) => {
            out.write_u8(TYPE_FM)?;
            out.write_u64::<LittleEndian>(m.dim() as u64)?;
            out.write_u64::<LittleEndian>(m.k() as u64)?;
            match m.mask() {
                InteractionMask::Full => out.write_u8(0)?,
                InteractionMask::Partial {
                    allowed_pairs,
                    category_of_index,
                } => {
                    out.write_u8(1)?;
                    out.write_u32::<LittleEndian>(allowed_pairs.len() as u32)?;
                    for (a, b) in allowed_pairs {
                        out.write_u8(a.as_u8())?;
                        out.write_u8(b.as_u8())?;
                    }
                    for cat in category_of_index {
                        out.write_u8(cat.as_u8())?;
                    }
                }
            }
            out.write_f64::<LittleEndian>(m.w0())?;
            for &x in m.w() {
                out.write_f64::<LittleEndian>(x)?;
            }
            for &x in m.v() {
                out.write_f64::<LittleEndian>(x)?;
            }
        }
        Model::Linear(m) => {
            out.write_u8(TYPE_LINEAR)?;
            out.write_u64::<LittleEndian>(m.dim() as u64)?;
            out.write_f64::<LittleEndian>(m.w0())?;
            for &x in m.w() {
                out.write_f64::<LittleEndian>(x)?;
            }
        }
        Model::BernoulliNb(m) => {
            out.write_u8(TYPE_BERNOULLI_NB)?;
            out.write_u64::<LittleEndian>(m.dim() as u64)?;
            out.write_f64::<LittleEndian>(m.alpha())?;
            for p in m.log_prior() {
                out.write_f64::<LittleEndian>(p)?;
            }
            for row in m.theta_rows() {
                for &t in row {
                    out.write_f64::<LittleEndian>(t)?;
                }
            }
        }
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::ModelFormat("truncated model file".into())
    } else {
        Error::ModelFormat(format!("read failed: {e}"))
    }
}

fn read_f64_vec(reader: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0.0f64; len];
    reader
        .read_f64_into::<LittleEndian>(&mut buf)
        .map_err(truncated)?;
    Ok(buf)
}

fn read_dim(reader: &mut impl Read) -> Result<usize> {
    let dim = reader.read_u64::<LittleEndian>().map_err(truncated)?;
    usize::try_from(dim).map_err(|_| Error::ModelFormat(format!("dimension {dim} too large")))
}

fn read_model(reader: &mut impl Read) -> Result<Model> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(truncated)?;
    if magic != MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = reader.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let type_tag = reader.read_u8().map_err(truncated)?;
    match type_tag {
        TYPE_FM => {
            let dim = read_dim(reader)?;
            let k = read_dim(reader)?;
            let mask = match reader.read_u8().map_err(truncated)? {
                0 => InteractionMask::Full,
                1 => {
                    let n_pairs = reader.read_u32::<LittleEndian>().map_err(truncated)?;
                    let mut pairs = Vec::with_capacity(n_pairs as usize);
                    for _ in 0..n_pairs {
                        let a = read_category(reader)?;
                        let b = read_category(reader)?;
                        pairs.push((a, b));
                    }
                    let mut cats = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        cats.push(read_category(reader)?);
                    }
                    InteractionMask::partial(pairs, cats)?
                }
                other => {
                    return Err(Error::ModelFormat(format!("unknown mask tag {other}")));
                }
            };
            let w0 = reader.read_f64::<LittleEndian>().map_err(truncated)?;
            let w = read_f64_vec(reader, dim)?;
            let v = read_f64_vec(reader, dim * k)?;
            Ok(Model::Fm(FmModel::from_parts(w0, w, v, k, mask)?))
        }
        TYPE_LINEAR => {
            let dim = read_dim(reader)?;
            let w0 = reader.read_f64::<LittleEndian>().map_err(truncated)?;
            let w = read_f64_vec(reader, dim)?;
            Ok(Model::Linear(LinearModel::from_parts(w0, w)?))
        }
        TYPE_BERNOULLI_NB => {
            let dim = read_dim(reader)?;
            let alpha = reader.read_f64::<LittleEndian>().map_err(truncated)?;
            let mut log_prior = [0.0f64; 2];
            reader
                .read_f64_into::<LittleEndian>(&mut log_prior)
                .map_err(truncated)?;
            let clean = read_f64_vec(reader, dim)?;
            let malware = read_f64_vec(reader, dim)?;
            Ok(Model::BernoulliNb(BernoulliNbModel::from_parts(
                [clean, malware],
                log_prior,
                alpha,
            )?))
        }
        other => Err(Error::ModelFormat(format!("unknown model type tag {other}"))),
    }
}

fn read_category(reader: &mut impl Read) -> Result<FeatureCategory> {
    let code = reader.read_u8().map_err(truncated)?;
    FeatureCategory::from_u8(code)
        .ok_or_else(|| Error::ModelFormat(format!("unknown category code {code}")))
}

impl FmModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(&Model::Fm(self.clone()), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FmModel> {
        match load_model(path)? {
            Model::Fm(m) => Ok(m),
            other => Err(Error::ModelFormat(format!(
                "expected an fm model, found {}",
                other.type_name()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::train_bernoulli_nb;
    use crate::dataset::{Label, LabeledDataset, SparseVector};
    use crate::optim::seeded_rng;
    use crate::token::FeatureCategory::{Permission, UsedPermission};
    use rand::Rng;
    use tempfile::tempdir;

    #[test]
    fn fm_round_trip_predicts_bit_identically() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.fm");
        let model = FmModel::init(30, 5, 3, 0.05).unwrap();
        model.save(&path).unwrap();
        let back = FmModel::load(&path).unwrap();
        assert_eq!(back, model);

        let mut rng = seeded_rng(5, 17);
        for _ in 0..100 {
            let idx: Vec<usize> = (0..30).filter(|_| rng.gen_bool(0.3)).collect();
            let x = SparseVector::new(idx, 30).unwrap();
            assert_eq!(
                model.predict_raw(&x).unwrap().to_bits(),
                back.predict_raw(&x).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn partial_mask_survives_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("masked.fm");
        let cats: Vec<_> = (0..8)
            .map(|i| if i % 2 == 0 { Permission } else { UsedPermission })
            .collect();
        let mask = InteractionMask::partial([(UsedPermission, Permission)], cats).unwrap();
        let model = FmModel::init(8, 2, 0, 0.1).unwrap().with_mask(mask.clone()).unwrap();
        model.save(&path).unwrap();
        assert_eq!(FmModel::load(&path).unwrap().mask(), &mask);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.fm");
        let model = FmModel::init(4, 2, 0, 0.01).unwrap();
        model.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(FmModel::load(&path), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn version_mismatch_and_truncation_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.fm");
        let model = FmModel::init(4, 2, 0, 0.01).unwrap();
        model.save(&path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let mut bumped = bytes.clone();
        bumped[4] = 99;
        std::fs::write(&path, &bumped).unwrap();
        assert!(matches!(
            FmModel::load(&path),
            Err(Error::ModelVersion { found: 99, .. })
        ));

        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(FmModel::load(&path), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn wrong_type_tag_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let ds = LabeledDataset::new(
            2,
            vec![
                SparseVector::new(vec![0], 2).unwrap(),
                SparseVector::new(vec![1], 2).unwrap(),
            ],
            vec![Label::Malware, Label::Clean],
            None,
        )
        .unwrap();
        let nb = train_bernoulli_nb(&ds, 1.0).unwrap();
        save_model(&Model::BernoulliNb(nb.clone()), &path).unwrap();
        assert!(FmModel::load(&path).is_err());

        match load_model(&path).unwrap() {
            Model::BernoulliNb(back) => assert_eq!(back, nb),
            other => panic!("unexpected type {}", other.type_name()),
        }
    }
}
