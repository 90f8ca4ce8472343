//! Binary model files. The layout is described in `docs/model-format.md`.

use std::io::{Read, Write};
use std::path::Path;

use dp_ntk::dp::{ConditionReport, DpParams, MRule};
use dp_ntk::regression::{NtkModel, PrivateNtkModel};
use dp_ntk::{Dataset, RngStream, SymMatrix, WeightMatrix};
use nalgebra::DMatrix;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"DPNTKMDL";
pub const VERSION: u32 = 1;

const KIND_PLAIN: u8 = 0;
const KIND_PRIVATE: u8 = 1;

/// Longest label accepted in a weight-origin path.
const MAX_LABEL: u64 = 1 << 16;

#[derive(Clone, Debug)]
pub enum SavedModel {
    Plain(NtkModel),
    Private(PrivateNtkModel),
}

impl SavedModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SavedModel::Plain(_) => "non-private",
            SavedModel::Private(_) => "private",
        }
    }
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }

    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.bytes(&[v])
    }

    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    /// Row-major.
    fn matrix(&mut self, m: &DMatrix<f64>) -> std::io::Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)])?;
            }
        }
        Ok(())
    }

    fn dp(&mut self, p: DpParams) -> std::io::Result<()> {
        self.f64(p.epsilon())?;
        self.f64(p.delta())
    }

    fn origin(&mut self, s: &RngStream) -> std::io::Result<()> {
        self.u64(s.seed())?;
        self.u64(s.path().len() as u64)?;
        for label in s.path() {
            self.u64(label.len() as u64)?;
            self.bytes(label.as_bytes())?;
        }
        Ok(())
    }

    fn weights(&mut self, w: &WeightMatrix) -> std::io::Result<()> {
        self.u64(w.m() as u64)?;
        self.f64(w.sigma())?;
        self.origin(w.origin())?;
        self.matrix(w.weights())
    }

    fn dataset(&mut self, d: &Dataset) -> std::io::Result<()> {
        self.u64(d.n() as u64)?;
        self.u64(d.dim() as u64)?;
        self.u64(d.n_outputs() as u64)?;
        self.f64(d.bound_b())?;
        self.matrix(d.features())?;
        self.matrix(d.labels())
    }

    fn report(&mut self, r: &ConditionReport) -> std::io::Result<()> {
        self.f64(r.delta_cap)?;
        self.f64(r.m_bound)?;
        self.f64(r.m_bound_protocol)?;
        self.f64(r.m_bound_composed)?;
        self.u8(match r.m_rule {
            MRule::Protocol => 0,
            MRule::Composed => 1,
        })?;
        self.f64(r.rho)?;
        self.u64(r.k)?;
        self.u8(r.delta_lt_one as u8)?;
        self.u8(r.m_le_delta as u8)?;
        self.u8(r.k_ge_one as u8)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn format_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Format(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format_err(format!("truncated at byte {}", self.buf.len())))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(format_err(format!("bad boolean byte {b}"))),
        }
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        // every dimension indexes f64 data that must fit in the file
        if v > (self.buf.len() / 8) as u64 + 1 {
            return Err(format_err(format!("dimension {v} exceeds the file size")));
        }
        Ok(v as usize)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| format_err("matrix size overflows"))?;
        let bytes = self.take(
            count
                .checked_mul(8)
                .ok_or_else(|| format_err("matrix size overflows"))?,
        )?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }

    fn dp(&mut self) -> Result<DpParams> {
        let eps = self.f64()?;
        let delta = self.f64()?;
        DpParams::new(eps, delta).map_err(|e| format_err(e.to_string()))
    }

    fn origin(&mut self) -> Result<RngStream> {
        let mut s = RngStream::new(self.u64()?);
        let depth = self.dim()?;
        for _ in 0..depth {
            let len = self.u64()?;
            if len > MAX_LABEL {
                return Err(format_err(format!("label length {len} too large")));
            }
            let raw = self.take(len as usize)?;
            let label = std::str::from_utf8(raw).map_err(|_| format_err("label is not UTF-8"))?;
            s = s.substream(label);
        }
        Ok(s)
    }

    fn weights(&mut self, d: usize) -> Result<WeightMatrix> {
        let m = self.dim()?;
        let sigma = self.f64()?;
        let origin = self.origin()?;
        let w = self.matrix(m, d)?;
        WeightMatrix::from_parts(w, sigma, origin).map_err(|e| format_err(e.to_string()))
    }

    fn dataset(&mut self) -> Result<Dataset> {
        let n = self.dim()?;
        let d = self.dim()?;
        let c = self.dim()?;
        let bound = self.f64()?;
        let x = self.matrix(n, d)?;
        let y = self.matrix(n, c)?;
        Dataset::new(x, y, bound).map_err(|e| format_err(e.to_string()))
    }

    fn report(&mut self) -> Result<ConditionReport> {
        Ok(ConditionReport {
            delta_cap: self.f64()?,
            m_bound: self.f64()?,
            m_bound_protocol: self.f64()?,
            m_bound_composed: self.f64()?,
            m_rule: match self.u8()? {
                0 => MRule::Protocol,
                1 => MRule::Composed,
                b => return Err(format_err(format!("bad m-rule tag {b}"))),
            },
            rho: self.f64()?,
            k: self.u64()?,
            delta_lt_one: self.bool()?,
            m_le_delta: self.bool()?,
            k_ge_one: self.bool()?,
        })
    }
}

pub fn write_model<W: Write>(model: &SavedModel, out: W) -> std::io::Result<()> {
    let mut w = Writer { inner: out };
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    match model {
        SavedModel::Plain(m) => {
            w.u8(KIND_PLAIN)?;
            w.f64(m.lambda())?;
            w.dataset(m.data())?;
            w.weights(m.weights())?;
            w.matrix(m.alpha())?;
        }
        SavedModel::Private(m) => {
            w.u8(KIND_PRIVATE)?;
            w.f64(m.lambda())?;
            w.dataset(m.private_features())?;
            w.weights(m.weights())?;
            w.matrix(m.private_kernel().as_matrix())?;
            w.dp(m.dp_x())?;
            w.dp(m.dp_alpha())?;
            w.f64(m.feature_noise_width())?;
            w.report(m.condition_report())?;
        }
    }
    w.inner.flush()
}

pub fn read_model(buf: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(MAGIC.len()).map_err(|_| format_err("not a model file (too short)"))?;
    if magic != MAGIC {
        return Err(format_err("not a model file (bad magic bytes)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}, expected {VERSION}")));
    }
    let kind = r.u8()?;
    let lambda = r.f64()?;
    let model = match kind {
        KIND_PLAIN => {
            let data = r.dataset()?;
            let weights = r.weights(data.dim())?;
            let alpha = r.matrix(data.n(), data.n_outputs())?;
            SavedModel::Plain(NtkModel::from_parts(data, weights, lambda, alpha).map_err(|e| format_err(e.to_string()))?)
        }
        KIND_PRIVATE => {
            let data = r.dataset()?;
            let weights = r.weights(data.dim())?;
            let kernel = r.matrix(data.n(), data.n())?;
            let kernel = SymMatrix::new(kernel).map_err(|e| format_err(e.to_string()))?;
            let dp_x = r.dp()?;
            let dp_alpha = r.dp()?;
            let width = r.f64()?;
            let report = r.report()?;
            SavedModel::Private(
                PrivateNtkModel::from_release(data, kernel, weights, lambda, dp_x, dp_alpha, width, report)
                    .map_err(|e| format_err(e.to_string()))?,
            )
        }
        other => return Err(format_err(format!("unknown model kind {other}"))),
    };
    if r.pos != buf.len() {
        return Err(format_err(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| HarnessError::io(path, e))?;
    read_model(&buf)
}

pub fn load_private(path: &Path) -> Result<PrivateNtkModel> {
    match load_model(path)? {
        SavedModel::Private(m) => Ok(m),
        other => Err(format_err(format!("expected a private model, found a {} one", other.kind_name()))),
    }
}

pub fn load_plain(path: &Path) -> Result<NtkModel> {
    match load_model(path)? {
        SavedModel::Plain(m) => Ok(m),
        other => Err(format_err(format!("expected a non-private model, found a {} one", other.kind_name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dp_ntk::kernel::sample_weights;
    use dp_ntk::regression::{fit, fit_private, PrivateFitConfig, Predictor};

    fn toy() -> (Dataset, WeightMatrix) {
        let x = DMatrix::from_row_slice(3, 2, &[0.6, 0.8, -0.5, 0.1, 0.0, 0.9]);
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let data = Dataset::new(x, y, 1.0).unwrap();
        let w = sample_weights(8, 2, 1.0, &RngStream::new(1).substream("weights")).unwrap();
        (data, w)
    }

    fn private_model() -> PrivateNtkModel {
        let (data, w) = toy();
        let dp = DpParams::new(1.0, 1e-3).unwrap();
        let cfg = PrivateFitConfig::new(1.0, 100, dp, dp, 1e-3);
        fit_private(&data, &w, &cfg, &RngStream::new(2)).unwrap()
    }

    fn bytes(model: &SavedModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(model, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let buf = bytes(&SavedModel::Private(private_model()));
        assert_eq!(&buf[..8], b"DPNTKMDL");
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(buf[12], KIND_PRIVATE);
    }

    #[test]
    fn round_trips_predict_identically() {
        let (data, w) = toy();
        let plain = fit(&data, &w, 0.5).unwrap();
        let private = private_model();
        for model in [SavedModel::Plain(plain), SavedModel::Private(private)] {
            let back = read_model(&bytes(&model)).unwrap();
            let q = [0.3, -0.4];
            let (a, b) = match (&model, &back) {
                (SavedModel::Plain(a), SavedModel::Plain(b)) => (a.predict(&q).unwrap(), b.predict(&q).unwrap()),
                (SavedModel::Private(a), SavedModel::Private(b)) => {
                    assert_eq!(a.k(), b.k());
                    assert_eq!(a.budget(), b.budget());
                    (a.predict(&q).unwrap(), b.predict(&q).unwrap())
                }
                _ => panic!("kind changed"),
            };
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let buf = bytes(&SavedModel::Private(private_model()));
        for cut in [0, 5, 12, 13, 40, buf.len() - 1] {
            assert!(matches!(read_model(&buf[..cut]), Err(HarnessError::Format(_))), "cut {cut}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad), Err(HarnessError::Format(_))));
        let mut bad = buf.clone();
        bad[8] = 2;
        assert!(matches!(read_model(&bad), Err(HarnessError::Format(_))));
        let mut bad = buf.clone();
        bad[12] = 7;
        assert!(matches!(read_model(&bad), Err(HarnessError::Format(_))));
        let mut long = buf;
        long.push(0);
        assert!(matches!(read_model(&long), Err(HarnessError::Format(_))));
    }

    #[test]
    fn kind_tag_is_checked() {
        let (data, w) = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.bin");
        save_model(&SavedModel::Plain(fit(&data, &w, 0.5).unwrap()), &path).unwrap();
        assert!(matches!(load_private(&path), Err(HarnessError::Format(_))));
        assert!(load_plain(&path).is_ok());
    }
}
