//! On-disk formats: binary matrices (trajectories, snapshots), autoencoder
//! model files, provenance sidecars and ROM manifests.
//!
//! # Binary matrix layout
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                          |
//! |-------:|-----:|--------------------------------|
//! | 0      | 8    | magic `DDNMMAT1`               |
//! | 8      | 4    | `u32` format version (1)       |
//! | 12     | 4    | `u32` boundary condition code  |
//! | 16     | 8    | `u64` nx                       |
//! | 24     | 8    | `u64` ny                       |
//! | 32     | 8    | `u64` Nt                       |
//! | 40     | 8    | `f64` nu                       |
//! | 48     | 8    | `f64` tau                      |
//! | 56     | 8    | `u64` rows                     |
//! | 64     | 8    | `u64` cols                     |
//! | 72     | ...  | `rows * cols` `f64`, row-major |
//!
//! A trajectory stores one state `[u; v]` per row, `Nt + 1` rows.
//!
//! # Model layout
//!
//! Magic `DDNMAE01`, `u32` version, `u32` reserved, then `u64` full dim `N`,
//! latent dim `n`, hidden width `w`, band size, band spacing and mask nnz.
//! Then `f64` arrays: shift (`N`), scale (`N`), `w_in` (nnz, in mask entry
//! order), `b_in` (`w`), `w_enc` (`n * w`), `b_enc` (`n`), `w_dec` (`w * n`),
//! `b_dec` (`w`), `w_out` (nnz).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ae::{build_triband_mask, AeWeights, AutoencoderModel, Normalization};
use crate::error::{Error, Result};
use crate::fom::{BoundaryCondition, BurgersParams, Grid2D};
use crate::rom::{compose, ComposeSpec, DdNmRom, RoleModel, RomModels};
use crate::snapshots::{Provenance, SnapshotRole, SnapshotSet};

const MATRIX_MAGIC: &[u8; 8] = b"DDNMMAT1";
const MODEL_MAGIC: &[u8; 8] = b"DDNMAE01";
const FORMAT_VERSION: u32 = 1;
pub const PROVENANCE_HEADER: &str = "# ddnmrom-provenance v1";
pub const MANIFEST_VERSION: u32 = 1;

/// Writes through a sibling temporary file and renames it into place.
pub fn atomic_write<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Header record of a binary matrix file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixHeader {
    pub bc: BoundaryCondition,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub nu: f64,
    pub tau: f64,
    pub rows: usize,
    pub cols: usize,
}

impl MatrixHeader {
    pub fn new(grid: &Grid2D, params: &BurgersParams, rows: usize, cols: usize) -> Self {
        Self {
            bc: grid.bc,
            nx: grid.nx,
            ny: grid.ny,
            nt: params.n_steps,
            nu: params.nu,
            tau: params.tau,
            rows,
            cols,
        }
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get::<4>(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<usize> {
    let v = u64::from_le_bytes(get::<8>(r)?);
    usize::try_from(v).map_err(|_| Error::Format(format!("size {v} does not fit in memory")))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get::<8>(r)?))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn check_magic(r: &mut impl Read, magic: &[u8; 8], what: &str) -> Result<()> {
    let m = get::<8>(r)?;
    if &m != magic {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported {what} version {version}")));
    }
    Ok(())
}

pub fn write_matrix_to(w: &mut impl Write, header: &MatrixHeader, data: ArrayView2<f64>) -> Result<()> {
    if data.dim() != (header.rows, header.cols) {
        return Err(Error::Format(format!(
            "header says {}x{}, data is {:?}",
            header.rows,
            header.cols,
            data.dim()
        )));
    }
    w.write_all(MATRIX_MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, header.bc.code())?;
    put_u64(w, header.nx)?;
    put_u64(w, header.ny)?;
    put_u64(w, header.nt)?;
    put_f64s(w, &[header.nu, header.tau])?;
    put_u64(w, header.rows)?;
    put_u64(w, header.cols)?;
    for row in data.rows() {
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_from(r: &mut impl Read) -> Result<(MatrixHeader, Array2<f64>)> {
    check_magic(r, MATRIX_MAGIC, "matrix")?;
    let bc = BoundaryCondition::from_code(get_u32(r)?)?;
    let (nx, ny, nt) = (get_u64(r)?, get_u64(r)?, get_u64(r)?);
    let (nu, tau) = (get_f64(r)?, get_f64(r)?);
    let (rows, cols) = (get_u64(r)?, get_u64(r)?);
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let data = get_f64s(r, n)?;
    let header = MatrixHeader {
        bc,
        nx,
        ny,
        nt,
        nu,
        tau,
        rows,
        cols,
    };
    let data = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((header, data))
}

pub fn write_matrix(path: &Path, header: &MatrixHeader, data: ArrayView2<f64>) -> Result<()> {
    atomic_write(path, |w| write_matrix_to(w, header, data))
}

pub fn read_matrix(path: &Path) -> Result<(MatrixHeader, Array2<f64>)> {
    read_matrix_from(&mut BufReader::new(File::open(path)?))
}

/// Stores `states[k]` as row `k`.
pub fn write_trajectory(path: &Path, grid: &Grid2D, params: &BurgersParams, states: &[Vec<f64>]) -> Result<()> {
    let cols = grid.n_dofs();
    if let Some(bad) = states.iter().position(|s| s.len() != cols) {
        return Err(Error::Format(format!("state {bad} has the wrong length")));
    }
    let flat: Vec<f64> = states.iter().flatten().copied().collect();
    let data = Array2::from_shape_vec((states.len(), cols), flat).expect("shape checked");
    let header = MatrixHeader::new(grid, params, states.len(), cols);
    write_matrix(path, &header, data.view())
}

pub fn read_trajectory(path: &Path) -> Result<(MatrixHeader, Vec<Vec<f64>>)> {
    let (header, data) = read_matrix(path)?;
    if header.cols != 2 * header.nx * header.ny {
        return Err(Error::Format(format!(
            "trajectory has {} columns, grid needs {}",
            header.cols,
            2 * header.nx * header.ny
        )));
    }
    Ok((header, data.rows().into_iter().map(|r| r.to_vec()).collect()))
}

pub fn write_model_to(w: &mut impl Write, model: &AutoencoderModel) -> Result<()> {
    let mask = &model.mask;
    w.write_all(MODEL_MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, 0)?;
    for v in [
        model.full_dim,
        model.latent_dim,
        mask.cols,
        mask.band_size,
        mask.band_spacing,
        mask.nnz(),
    ] {
        put_u64(w, v)?;
    }
    put_f64s(w, &model.norm.shift)?;
    put_f64s(w, &model.norm.scale)?;
    for t in model.weights.tensors() {
        put_f64s(w, t)?;
    }
    Ok(())
}

pub fn read_model_from(r: &mut impl Read) -> Result<AutoencoderModel> {
    check_magic(r, MODEL_MAGIC, "model")?;
    get_u32(r)?;
    let full = get_u64(r)?;
    let latent = get_u64(r)?;
    let hidden = get_u64(r)?;
    let band = get_u64(r)?;
    let spacing = get_u64(r)?;
    let nnz = get_u64(r)?;
    let mask = build_triband_mask(full, hidden, band, spacing)?;
    if mask.nnz() != nnz {
        return Err(Error::Format(format!(
            "mask rebuilt with {} entries, file says {nnz}",
            mask.nnz()
        )));
    }
    let mut model = AutoencoderModel::zeros(full, latent, mask)?;
    model.norm = Normalization {
        shift: get_f64s(r, full)?,
        scale: get_f64s(r, full)?,
    };
    let sizes: Vec<usize> = model.weights.tensors().iter().map(|t| t.len()).collect();
    let mut weights = AeWeights::zeros(&model.mask, latent);
    for (t, n) in weights.tensors_mut().into_iter().zip(sizes) {
        *t = get_f64s(r, n)?;
    }
    model.weights = weights;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after model payload".into()));
    }
    Ok(model)
}

pub fn write_model(path: &Path, model: &AutoencoderModel) -> Result<()> {
    atomic_write(path, |w| write_model_to(w, model))
}

pub fn read_model(path: &Path) -> Result<AutoencoderModel> {
    read_model_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_provenance_to(w: &mut impl Write, provenance: &[Provenance]) -> Result<()> {
    writeln!(w, "{PROVENANCE_HEADER}")?;
    writeln!(w, "row,config,entity,time")?;
    for (k, p) in provenance.iter().enumerate() {
        writeln!(w, "{k},{},{},{}", p.config, p.entity, p.time)?;
    }
    Ok(())
}

pub fn read_provenance_from(r: impl BufRead) -> Result<Vec<Provenance>> {
    let mut lines = r.lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
    if next()?.as_deref() != Some(PROVENANCE_HEADER) {
        return Err(Error::Format("missing provenance header".into()));
    }
    if next()?.as_deref() != Some("row,config,entity,time") {
        return Err(Error::Format("unexpected provenance columns".into()));
    }
    let mut out = Vec::new();
    while let Some(line) = next()? {
        let f: Vec<usize> = line
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("provenance line {}: {e}", out.len())))?;
        if f.len() != 4 || f[0] != out.len() {
            return Err(Error::Format(format!("bad provenance line {:?}", line)));
        }
        out.push(Provenance {
            config: f[1],
            entity: f[2],
            time: f[3],
        });
    }
    Ok(out)
}

/// File stems `<dir>/<role>.bin` and `<dir>/<role>.provenance.csv`.
pub fn snapshot_paths(dir: &Path, role: SnapshotRole) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}.bin", role.name())),
        dir.join(format!("{}.provenance.csv", role.name())),
    )
}

pub fn write_snapshot_set(dir: &Path, set: &SnapshotSet, header: &MatrixHeader) -> Result<()> {
    let (bin, csv) = snapshot_paths(dir, set.role);
    let header = MatrixHeader {
        rows: set.data.nrows(),
        cols: set.data.ncols(),
        ..*header
    };
    write_matrix(&bin, &header, set.data.view())?;
    atomic_write(&csv, |w| write_provenance_to(w, &set.provenance))
}

pub fn read_snapshot_set(dir: &Path, role: SnapshotRole) -> Result<(MatrixHeader, SnapshotSet)> {
    let (bin, csv) = snapshot_paths(dir, role);
    let (header, data) = read_matrix(&bin)?;
    let provenance = read_provenance_from(BufReader::new(File::open(&csv)?))?;
    if provenance.len() != data.nrows() {
        return Err(Error::Format(format!(
            "{} rows but {} provenance records",
            data.nrows(),
            provenance.len()
        )));
    }
    Ok((header, SnapshotSet { role, data, provenance }))
}

/// How one role is reduced in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoleEntry {
    Identity,
    Autoencoder {
        /// Relative paths resolve against the manifest's directory.
        path: PathBuf,
        full_dim: usize,
        latent_dim: usize,
    },
}

/// Everything needed to rebuild a composed ROM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomManifest {
    pub version: u32,
    pub bc: BoundaryCondition,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_nx: usize,
    pub block_ny: usize,
    pub x_extent: (f64, f64),
    pub y_extent: (f64, f64),
    pub nu: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub interior: RoleEntry,
    pub vertical: RoleEntry,
    pub horizontal: RoleEntry,
}

impl RomManifest {
    pub fn spec(&self) -> ComposeSpec {
        ComposeSpec {
            blocks_x: self.blocks_x,
            blocks_y: self.blocks_y,
            block_nx: self.block_nx,
            block_ny: self.block_ny,
            bc: self.bc,
            x_extent: self.x_extent,
            y_extent: self.y_extent,
        }
    }

    pub fn params(&self) -> Result<BurgersParams> {
        BurgersParams::with_steps(self.nu, self.tau, self.n_steps)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_toml();
        atomic_write(path, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    fn load_role(entry: &RoleEntry, base: &Path) -> Result<RoleModel> {
        match entry {
            RoleEntry::Identity => Ok(RoleModel::Identity),
            RoleEntry::Autoencoder {
                path,
                full_dim,
                latent_dim,
            } => {
                let model = read_model(&base.join(path))?;
                if (model.full_dim, model.latent_dim) != (*full_dim, *latent_dim) {
                    return Err(Error::Format(format!(
                        "{} holds a {}->{} model, manifest says {full_dim}->{latent_dim}",
                        path.display(),
                        model.full_dim,
                        model.latent_dim
                    )));
                }
                Ok(RoleModel::Autoencoder(Arc::new(model)))
            }
        }
    }

    /// Loads the referenced models and composes the ROM.
    pub fn load(&self, base: &Path) -> Result<DdNmRom> {
        let models = RomModels {
            interior: Self::load_role(&self.interior, base)?,
            vertical: Self::load_role(&self.vertical, base)?,
            horizontal: Self::load_role(&self.horizontal, base)?,
        };
        compose(&self.spec(), models, &self.params()?)
    }
}

/// Reads a manifest and resolves model paths next to it.
pub fn load_rom(manifest_path: &Path) -> Result<(RomManifest, DdNmRom)> {
    let manifest = RomManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let rom = manifest.load(base)?;
    Ok((manifest, rom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::MaskParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> AutoencoderModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MaskParams::for_lines(8, 16, 2);
        let mask = build_triband_mask(8, 16, p.band_size, p.band_spacing).unwrap();
        let norm = Normalization {
            shift: (0..8).map(|k| 0.1 * k as f64).collect(),
            scale: (0..8).map(|k| 1.0 + k as f64).collect(),
        };
        let mut m = AutoencoderModel::random(8, 3, mask, norm, &mut rng).unwrap();
        m.weights.b_in[3] = 0.25;
        m.weights.b_dec[1] = -1.5;
        m
    }

    #[test]
    fn matrix_round_trip_and_layout() {
        let g = Grid2D::new(4, 3, (0.0, 1.0), (0.0, 2.0), BoundaryCondition::HomogeneousNeumann).unwrap();
        let p = BurgersParams::with_steps(1e-3, 0.02, 2).unwrap();
        let states: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..24).map(|d| (k * 100 + d) as f64 * 0.5).collect())
            .collect();
        let mut bytes = Vec::new();
        let data = Array2::from_shape_fn((3, 24), |(r, c)| states[r][c]);
        write_matrix_to(&mut bytes, &MatrixHeader::new(&g, &p, 3, 24), data.view()).unwrap();
        assert_eq!(bytes.len(), 72 + 3 * 24 * 8);
        assert_eq!(&bytes[..8], b"DDNMMAT1");
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[32..40].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 0.02);
        assert_eq!(f64::from_le_bytes(bytes[72 + 8..80 + 8].try_into().unwrap()), 0.5);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.bin");
        write_trajectory(&path, &g, &p, &states).unwrap();
        let (h, back) = read_trajectory(&path).unwrap();
        assert_eq!(back, states);
        assert_eq!((h.nx, h.ny, h.nt, h.bc), (4, 3, 2, BoundaryCondition::HomogeneousNeumann));
        assert!(!dir.path().join("traj.bin.tmp").exists());
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let g = Grid2D::new(3, 3, (0.0, 1.0), (0.0, 1.0), BoundaryCondition::Periodic).unwrap();
        let p = BurgersParams::with_steps(1e-3, 0.02, 1).unwrap();
        let data = Array2::<f64>::zeros((2, 18));
        let mut bytes = Vec::new();
        write_matrix_to(&mut bytes, &MatrixHeader::new(&g, &p, 2, 18), data.view()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(read_matrix_from(&mut &cut[..]), Err(Error::Format(_))));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(read_matrix_from(&mut &wrong[..]), Err(Error::Format(_))));
        let mut m = Vec::new();
        write_model_to(&mut m, &model(1)).unwrap();
        assert!(matches!(read_matrix_from(&mut &m[..]), Err(Error::Format(_))));
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = model(4);
        let mut bytes = Vec::new();
        write_model_to(&mut bytes, &m).unwrap();
        let back = read_model_from(&mut &bytes[..]).unwrap();
        assert_eq!(back, m);
        let y = [0.3, -0.2, 0.9];
        assert_eq!(back.decode(&y).unwrap(), m.decode(&y).unwrap());
        bytes.push(0);
        assert!(read_model_from(&mut &bytes[..]).is_err());
    }

    #[test]
    fn provenance_round_trip() {
        let p: Vec<Provenance> = (0..5)
            .map(|k| Provenance {
                config: k / 2,
                entity: k % 2,
                time: k,
            })
            .collect();
        let mut bytes = Vec::new();
        write_provenance_to(&mut bytes, &p).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("# ddnmrom-provenance v1\nrow,config,entity,time\n0,0,0,0\n"));
        assert_eq!(read_provenance_from(&bytes[..]).unwrap(), p);
    }

    #[test]
    fn manifest_rebuilds_the_same_rom() {
        let dir = tempfile::tempdir().unwrap();
        let interior = model(7);
        write_model(&dir.path().join("interior.model"), &interior).unwrap();
        let manifest = RomManifest {
            version: MANIFEST_VERSION,
            bc: BoundaryCondition::Periodic,
            blocks_x: 2,
            blocks_y: 2,
            block_nx: 4,
            block_ny: 4,
            x_extent: (0.0, 1.0),
            y_extent: (0.0, 1.0),
            nu: 1e-3,
            tau: 0.02,
            n_steps: 3,
            interior: RoleEntry::Autoencoder {
                path: "interior.model".into(),
                full_dim: 8,
                latent_dim: 3,
            },
            vertical: RoleEntry::Identity,
            horizontal: RoleEntry::Identity,
        };
        let path = dir.path().join("rom.toml");
        manifest.write(&path).unwrap();
        let (back, rom) = load_rom(&path).unwrap();
        assert_eq!(back, manifest);
        let direct = compose(
            &manifest.spec(),
            RomModels {
                interior: RoleModel::Autoencoder(Arc::new(interior)),
                ..RomModels::identity()
            },
            &manifest.params().unwrap(),
        )
        .unwrap();
        let y: Vec<f64> = (0..rom.blocks[0].n_latent).map(|k| 0.01 * k as f64).collect();
        assert_eq!(rom.decode_block(0, &y).unwrap(), direct.decode_block(0, &y).unwrap());

        let bad = RomManifest {
            interior: RoleEntry::Autoencoder {
                path: "interior.model".into(),
                full_dim: 8,
                latent_dim: 4,
            },
            ..manifest
        };
        assert!(bad.load(dir.path()).is_err());
    }
}
