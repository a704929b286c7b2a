//! Dataset ingestion and synthesis: IDX and PGM containers, grayscale
//! conversion, patch extraction, mixture generation, optimal-code targets,
//! and reconstruction from codes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{sparsity_raw, DEFAULT_ZERO_TOL};
use crate::solvers::{fista, salsa};
use crate::splitting::build_splitting_operator;
use crate::types::{ComponentCode, ConcatDictionary, Signal, SolverConfig};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::FormatError(format!("truncated IDX file while reading {what}: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image file (big-endian magic `0x00000803`, then count, rows,
/// cols, then the u8 payload). Pixels are scaled to `[0, 1]`.
pub fn import_idx_images<P: AsRef<Path>>(path: P) -> Result<Vec<Array2<f64>>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_be_u32(&mut r, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::FormatError(format!(
            "expected IDX image magic {IDX_IMAGES_MAGIC:#010x}, got {magic:#010x}"
        )));
    }
    let count = read_be_u32(&mut r, "image count")? as usize;
    let rows = read_be_u32(&mut r, "rows")? as usize;
    let cols = read_be_u32(&mut r, "cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::FormatError(format!(
            "degenerate IDX image shape {rows}x{cols}"
        )));
    }
    let mut payload = vec![0u8; count * rows * cols];
    r.read_exact(&mut payload)
        .map_err(|e| Error::FormatError(format!("truncated IDX payload: {e}")))?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::FormatError("trailing bytes after IDX payload".into()));
    }
    let mut images = Vec::with_capacity(count);
    for k in 0..count {
        let base = k * rows * cols;
        images.push(Array2::from_shape_fn((rows, cols), |(i, j)| {
            payload[base + i * cols + j] as f64 / 255.0
        }));
    }
    Ok(images)
}

/// Parse an IDX label file (magic `0x00000801`).
pub fn import_idx_labels<P: AsRef<Path>>(path: P) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_be_u32(&mut r, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::FormatError(format!(
            "expected IDX label magic {IDX_LABELS_MAGIC:#010x}, got {magic:#010x}"
        )));
    }
    let count = read_be_u32(&mut r, "label count")? as usize;
    let mut payload = vec![0u8; count];
    r.read_exact(&mut payload)
        .map_err(|e| Error::FormatError(format!("truncated IDX payload: {e}")))?;
    Ok(payload)
}

/// Write images (values in `[0, 1]`) as an IDX u8 file; the inverse of
/// [`import_idx_images`] up to the u8 quantization, so import → export →
/// import round-trips files bitwise.
pub fn export_idx_images<P: AsRef<Path>>(path: P, images: &[Array2<f64>]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::EmptySource("IDX image export"));
    }
    let (rows, cols) = images[0].dim();
    if images.iter().any(|im| im.dim() != (rows, cols)) {
        return Err(Error::ShapeMismatch(
            "all exported images must share a shape".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(images.len() as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    for im in images {
        for v in im.iter() {
            w.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write labels as an IDX u8 file.
pub fn export_idx_labels<P: AsRef<Path>>(path: P, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// ITU-R 601 luma: `0.299 R + 0.587 G + 0.114 B`. Input shape `(h, w, 3)`
/// with channels in `[0, 1]`.
pub fn to_grayscale(rgb: &Array3<f64>) -> Result<Array2<f64>> {
    let (h, w, c) = rgb.dim();
    if c != 3 {
        return Err(Error::ShapeMismatch(format!(
            "grayscale conversion expects 3 channels, got {c}"
        )));
    }
    Ok(Array2::from_shape_fn((h, w), |(i, j)| {
        0.299 * rgb[(i, j, 0)] + 0.587 * rgb[(i, j, 1)] + 0.114 * rgb[(i, j, 2)]
    }))
}

/// Bilinear resize with edge-clamped sampling.
pub fn resize_bilinear(img: &Array2<f64>, out_h: usize, out_w: usize) -> Result<Array2<f64>> {
    let (h, w) = img.dim();
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::ShapeMismatch("resize needs nonempty shapes".into()));
    }
    let scale_y = h as f64 / out_h as f64;
    let scale_x = w as f64 / out_w as f64;
    Ok(Array2::from_shape_fn((out_h, out_w), |(oy, ox)| {
        // sample at pixel centers, clamped to the valid range
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
        let y0 = sy.floor() as usize;
        let x0 = sx.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let fy = sy - y0 as f64;
        let fx = sx - x0 as f64;
        img[(y0, x0)] * (1.0 - fy) * (1.0 - fx)
            + img[(y0, x1)] * (1.0 - fy) * fx
            + img[(y1, x0)] * fy * (1.0 - fx)
            + img[(y1, x1)] * fy * fx
    }))
}

/// Non-overlapping patch extraction settings; the stride equals the patch
/// size by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSpec {
    pub patch_h: usize,
    pub patch_w: usize,
    /// Drop patches whose pixel standard deviation falls below this floor.
    pub min_std: Option<f64>,
}

impl PatchSpec {
    pub fn new(patch_h: usize, patch_w: usize) -> Self {
        Self {
            patch_h,
            patch_w,
            min_std: None,
        }
    }

    pub fn with_min_std(mut self, min_std: f64) -> Self {
        self.min_std = Some(min_std);
        self
    }
}

/// Row-major non-overlapping tiling; extra pixels on the bottom/right edges
/// are ignored. Each patch is flattened row-major. Returns the kept patches
/// (all of them unless `min_std` filters some out).
pub fn extract_patches(img: &Array2<f64>, spec: &PatchSpec) -> Result<Vec<Array1<f64>>> {
    let (h, w) = img.dim();
    if spec.patch_h == 0 || spec.patch_w == 0 || spec.patch_h > h || spec.patch_w > w {
        return Err(Error::PatchTooLarge {
            patch_h: spec.patch_h,
            patch_w: spec.patch_w,
            img_h: h,
            img_w: w,
        });
    }
    let tiles_y = h / spec.patch_h;
    let tiles_x = w / spec.patch_w;
    let mut patches = Vec::with_capacity(tiles_y * tiles_x);
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let mut flat = Array1::<f64>::zeros(spec.patch_h * spec.patch_w);
            for i in 0..spec.patch_h {
                for j in 0..spec.patch_w {
                    flat[i * spec.patch_w + j] = img[(ty * spec.patch_h + i, tx * spec.patch_w + j)];
                }
            }
            if let Some(min_std) = spec.min_std {
                let mean = flat.iter().sum::<f64>() / flat.len() as f64;
                let var =
                    flat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / flat.len() as f64;
                if var.sqrt() < min_std {
                    continue;
                }
            }
            patches.push(flat);
        }
    }
    Ok(patches)
}

/// Inverse of [`extract_patches`] over the covered region (requires that no
/// patch was filtered out). Pixels outside the tiling are zero.
pub fn reassemble_patches(
    patches: &[Array1<f64>],
    img_h: usize,
    img_w: usize,
    spec: &PatchSpec,
) -> Result<Array2<f64>> {
    let tiles_y = img_h / spec.patch_h;
    let tiles_x = img_w / spec.patch_w;
    if patches.len() != tiles_y * tiles_x {
        return Err(Error::ShapeMismatch(format!(
            "{} patches cannot tile a {img_h}x{img_w} image with {}x{} tiles",
            patches.len(),
            spec.patch_h,
            spec.patch_w
        )));
    }
    let mut img = Array2::<f64>::zeros((img_h, img_w));
    for (k, patch) in patches.iter().enumerate() {
        let ty = k / tiles_x;
        let tx = k % tiles_x;
        for i in 0..spec.patch_h {
            for j in 0..spec.patch_w {
                img[(ty * spec.patch_h + i, tx * spec.patch_w + j)] = patch[i * spec.patch_w + j];
            }
        }
    }
    Ok(img)
}

/// A synthetic additive-mixture dataset with exact component ground truth.
#[derive(Debug, Clone)]
pub struct MixtureSet {
    /// Mixed signals; each carries `component_truth = [a, b]` and the label
    /// of its first-source sample when present.
    pub mixed: Vec<Signal>,
    /// `(index into set_a, index into set_b)` per mixture.
    pub provenance: Vec<(usize, usize)>,
    pub seed: u64,
}

/// Mix `count` uniformly-sampled pairs from the two sources: `mixed = a + b`
/// exactly, with the truth stored on each signal. Deterministic per seed.
pub fn make_mixtures(
    set_a: &[Signal],
    set_b: &[Signal],
    count: usize,
    seed: u64,
) -> Result<MixtureSet> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::EmptySource("mixture source set"));
    }
    let dim = set_a[0].dim();
    if set_a.iter().chain(set_b).any(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            context: "mixture sources",
            expected: dim,
            got: set_a
                .iter()
                .chain(set_b)
                .map(|s| s.dim())
                .find(|d| *d != dim)
                .unwrap_or(dim),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mixed = Vec::with_capacity(count);
    let mut provenance = Vec::with_capacity(count);
    for _ in 0..count {
        let ia = rng.gen_range(0..set_a.len());
        let ib = rng.gen_range(0..set_b.len());
        let a = &set_a[ia];
        let b = &set_b[ib];
        let mut signal = Signal::new(&a.data + &b.data)?
            .with_component_truth(vec![a.data.clone(), b.data.clone()])?;
        signal.label = a.label;
        mixed.push(signal);
        provenance.push((ia, ib));
    }
    Ok(MixtureSet {
        mixed,
        provenance,
        seed,
    })
}

/// Which converged solver generates the supervision targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeGenerator {
    Fista,
    Salsa,
}

/// Solve the convex inference problem per sample to produce optimal-code
/// training targets, and report the achieved mean sparsity.
///
/// `config.max_iters` is the full convergence budget (e.g. 200 for FISTA,
/// 100 for SALSA); `stop_tol = 0` in the config forces exactly that many
/// iterations. Samples run in parallel; a SALSA splitting operator is
/// factored once and shared.
pub fn generate_optimal_codes(
    signals: &[Signal],
    dict: &ConcatDictionary,
    config: &SolverConfig,
    method: CodeGenerator,
) -> Result<(Vec<ComponentCode>, f64)> {
    if signals.is_empty() {
        return Err(Error::EmptySource("optimal-code signals"));
    }
    let codes: Vec<ComponentCode> = match method {
        CodeGenerator::Fista => {
            let a = dict.concatenated();
            let config = match config.lipschitz {
                Some(_) => config.clone(),
                None => config
                    .clone()
                    .with_lipschitz(crate::solvers::estimate_lipschitz(&a)),
            };
            signals
                .par_iter()
                .map(|s| Ok(fista(s, dict, &config, None)?.code))
                .collect::<Result<_>>()?
        }
        CodeGenerator::Salsa => {
            let s_op = build_splitting_operator(dict, config.mu)?;
            signals
                .par_iter()
                .map(|s| Ok(salsa(s, dict, config, Some(&s_op), None)?.code))
                .collect::<Result<_>>()?
        }
    };
    let mean_sparsity = codes
        .iter()
        .map(|c| sparsity_raw(c.values(), DEFAULT_ZERO_TOL))
        .sum::<f64>()
        / codes.len() as f64;
    Ok((codes, mean_sparsity))
}

/// Reconstruct per-component signals `A_i x_i` and their sum `A x`.
pub fn reconstruct(
    code: &ComponentCode,
    dict: &ConcatDictionary,
) -> Result<(Vec<Array1<f64>>, Array1<f64>)> {
    if code.len() != dict.atom_count() || code.partition() != dict.partition().as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "code partition {:?} does not match dictionary partition {:?}",
            code.partition(),
            dict.partition()
        )));
    }
    let mut components = Vec::with_capacity(dict.component_count());
    let mut sum = Array1::<f64>::zeros(dict.signal_dim());
    for (i, part) in dict.parts().iter().enumerate() {
        let comp = part.atoms().dot(&code.block(i));
        sum += &comp;
        components.push(comp);
    }
    Ok((components, sum))
}

/// Write a grayscale image (values clamped to `[0, 1]`) as a binary PGM
/// (P5, maxval 255).
pub fn write_pgm<P: AsRef<Path>>(path: P, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    for v in img.iter() {
        out.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a binary PGM (P5, maxval 255) into `[0, 1]` values. Handles `#`
/// comments and arbitrary whitespace in the header.
pub fn read_pgm<P: AsRef<Path>>(path: P) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and # comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::FormatError("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P5" {
        return Err(Error::FormatError("not a binary PGM (P5) file".into()));
    }
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|e| Error::FormatError(format!("PGM width: {e}")))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|e| Error::FormatError(format!("PGM height: {e}")))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|e| Error::FormatError(format!("PGM maxval: {e}")))?;
    if maxval != 255 {
        return Err(Error::FormatError(format!(
            "only maxval 255 PGMs are supported, got {maxval}"
        )));
    }
    let payload_start = pos + 1; // single whitespace byte after maxval
    if bytes.len() < payload_start + w * h {
        return Err(Error::FormatError("truncated PGM payload".into()));
    }
    Ok(Array2::from_shape_fn((h, w), |(i, j)| {
        bytes[payload_start + i * w + j] as f64 / 255.0
    }))
}
