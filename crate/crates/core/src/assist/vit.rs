use crate::tensor::{matmul, project, relu, softmax_rows, Tensor, WeightInit, WeightStore};
use crate::wavelet::AssistSpectrogram;

use super::{select_band_window, AssistError, Result, SpectralAttentionMask, VitConfig};

/// Row-stochastic `T × T` attention matrix (`T = p²`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    matrix: Tensor,
}

impl AttentionMap {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.rank() != 2 || matrix.dims()[0] != matrix.dims()[1] {
            return Err(AssistError::Config(format!(
                "attention map must be square, got {:?}",
                matrix.dims()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(tokens: usize) -> Self {
        let mut data = vec![0f32; tokens * tokens];
        for i in 0..tokens {
            data[i * tokens + i] = 1.0;
        }
        Self {
            matrix: Tensor::new(vec![tokens, tokens], data).expect("square"),
        }
    }

    pub fn tokens(&self) -> usize {
        self.matrix.dims()[0]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let t = self.tokens();
        &self.matrix.data()[i * t..(i + 1) * t]
    }

    /// Column sums `c_j = Σ_i a_ij`.
    pub fn column_sums(&self) -> Vec<f32> {
        let t = self.tokens();
        let mut sums = vec![0f64; t];
        for row in self.matrix.data().chunks_exact(t) {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v as f64;
            }
        }
        sums.into_iter().map(|v| v as f32).collect()
    }
}

/// `p × p` patch importance; rows are frequency patch-rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    matrix: Tensor,
}

impl ImportanceMatrix {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.rank() != 2 || matrix.dims()[0] != matrix.dims()[1] {
            return Err(AssistError::Config(format!(
                "importance matrix must be square, got {:?}",
                matrix.dims()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn patches(&self) -> usize {
        self.matrix.dims()[0]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix
            .data()
            .chunks_exact(self.patches())
            .map(|r| r.iter().map(|&v| v as f64).sum())
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.row_sums().iter().sum()
    }

    /// CSV dump, one patch-row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.matrix.data().chunks_exact(self.patches()) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Cuts `S_a` into `p²` patches, ordered `patch_row · p + patch_col` with
/// patch rows spanning frequency. Output is `[p², patch_size²]`.
pub fn patchify(sa: &AssistSpectrogram, cfg: &VitConfig) -> Result<Tensor> {
    let r_a = sa.dim();
    let ps = cfg.patch_size(r_a)?;
    let p = cfg.patches;
    let grid = sa.grid().data();
    let mut out = Vec::with_capacity(r_a * r_a);
    for pr in 0..p {
        for pc in 0..p {
            for y in 0..ps {
                let row = (pr * ps + y) * r_a + pc * ps;
                out.extend_from_slice(&grid[row..row + ps]);
            }
        }
    }
    Ok(Tensor::new(vec![p * p, ps * ps], out)?)
}

/// Weight names of the patch embedding for a given patch side length.
pub fn patch_embed_names(patch_size: usize) -> (String, String) {
    (
        format!("vit.patch_embed.{patch_size}x{patch_size}.weight"),
        format!("vit.patch_embed.{patch_size}x{patch_size}.bias"),
    )
}

const POS_EMBED: &str = "vit.pos_embed";

fn block_name(block: usize, part: &str) -> String {
    format!("vit.blocks.{block}.{part}")
}

/// Shared linear embedding of every flattened patch, plus the positional
/// table `vit.pos_embed` (`[p², E]`).
pub fn embed_and_position(patches: &Tensor, weights: &WeightStore, cfg: &VitConfig) -> Result<Tensor> {
    let tokens = cfg.tokens();
    if patches.rank() != 2 || patches.dims()[0] != tokens {
        return Err(AssistError::Config(format!(
            "expected {tokens} patches, got {:?}",
            patches.dims()
        )));
    }
    let cells = patches.dims()[1];
    let ps = (cells as f64).sqrt().round() as usize;
    let (wn, bn) = patch_embed_names(ps);
    let w = weights.get(&wn)?;
    let b = weights.get(&bn)?;
    w.expect_dims(&[cfg.embed_dim, cells], &wn)?;
    b.expect_dims(&[cfg.embed_dim], &bn)?;
    let pos = weights.get(POS_EMBED)?;
    pos.expect_dims(&[tokens, cfg.embed_dim], POS_EMBED)?;

    let mut x = project(patches, w, b)?;
    for (v, p) in x.data_mut().iter_mut().zip(pos.data()) {
        *v += p;
    }
    Ok(x)
}

/// One transformer block. Returns the block output and the head-averaged
/// attention map.
pub fn attention_block(
    x: &Tensor,
    weights: &WeightStore,
    block: usize,
    cfg: &VitConfig,
) -> Result<(Tensor, AttentionMap)> {
    x.expect_dims(&[cfg.tokens(), cfg.embed_dim], "block input")?;
    self_attention(x, weights, block, cfg.heads)
}

/// Block body for any token count: multi-head attention with per-head scale
/// `1/√(E/heads)` and a residual connection, then an optional residual
/// two-layer ReLU MLP when `mlp.fc1.*` weights are present.
fn self_attention(x: &Tensor, weights: &WeightStore, block: usize, heads: usize) -> Result<(Tensor, AttentionMap)> {
    let (t, e) = (x.dims()[0], x.dims()[1]);
    if heads == 0 || e % heads != 0 {
        return Err(AssistError::Config(format!("{heads} heads for embed dim {e}")));
    }
    let get = |part: &str, dims: &[usize]| -> Result<&Tensor> {
        let name = block_name(block, part);
        let w = weights.get(&name)?;
        w.expect_dims(dims, &name)?;
        Ok(w)
    };
    let q = project(x, get("q.weight", &[e, e])?, get("q.bias", &[e])?)?;
    let k = project(x, get("k.weight", &[e, e])?, get("k.bias", &[e])?)?;
    let v = project(x, get("v.weight", &[e, e])?, get("v.bias", &[e])?)?;

    let d = e / heads;
    let scale = 1.0 / (d as f32).sqrt();
    let mut mean_map = vec![0f32; t * t];
    let mut mixed = vec![0f32; t * e];
    let mut scores = vec![0f32; t * t];
    for h in 0..heads {
        let cols = h * d..(h + 1) * d;
        for i in 0..t {
            let qi = &q.data()[i * e..(i + 1) * e][cols.clone()];
            for j in 0..t {
                let kj = &k.data()[j * e..(j + 1) * e][cols.clone()];
                scores[i * t + j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
            }
        }
        softmax_rows(&mut scores, t);
        for i in 0..t {
            for j in 0..t {
                let a = scores[i * t + j];
                mean_map[i * t + j] += a / heads as f32;
                let vj = &v.data()[j * e..(j + 1) * e];
                for c in cols.clone() {
                    mixed[i * e + c] += a * vj[c];
                }
            }
        }
    }
    let mixed = Tensor::new(vec![t, e], mixed)?;
    let attended = project(&mixed, get("out.weight", &[e, e])?, get("out.bias", &[e])?)?;
    let mut y = x.clone();
    for (o, a) in y.data_mut().iter_mut().zip(attended.data()) {
        *o += a;
    }

    if let Some(fc1) = weights.get_opt(&block_name(block, "mlp.fc1.weight")) {
        let hidden = fc1.dims()[0];
        let z = project(
            &y,
            get("mlp.fc1.weight", &[hidden, e])?,
            get("mlp.fc1.bias", &[hidden])?,
        )?;
        let z = project(
            &relu(&z),
            get("mlp.fc2.weight", &[e, hidden])?,
            get("mlp.fc2.bias", &[e])?,
        )?;
        for (o, a) in y.data_mut().iter_mut().zip(z.data()) {
            *o += a;
        }
    }

    let map = AttentionMap::new(Tensor::new(vec![t, t], mean_map)?)?;
    Ok((y, map))
}

/// `A_n · A_{n-1} · … · A_1` for maps given in block order `[A_1, …, A_n]`.
pub fn attention_rollout(maps: &[AttentionMap]) -> Result<AttentionMap> {
    let (first, rest) = maps.split_first().ok_or(AssistError::EmptyRollout)?;
    let mut acc = first.matrix().clone();
    for m in rest {
        if m.tokens() != first.tokens() {
            return Err(AssistError::Config(format!(
                "rollout of {}- and {}-token maps",
                first.tokens(),
                m.tokens()
            )));
        }
        acc = matmul(m.matrix(), &acc)?;
    }
    AttentionMap::new(acc)
}

/// Column sums of the rollout reshaped to `p × p`.
pub fn importance(rollout: &AttentionMap, cfg: &VitConfig) -> Result<ImportanceMatrix> {
    let p = cfg.patches;
    if rollout.tokens() != p * p {
        return Err(AssistError::Config(format!(
            "rollout has {} tokens, expected {}",
            rollout.tokens(),
            p * p
        )));
    }
    ImportanceMatrix::new(Tensor::new(vec![p, p], rollout.column_sums())?)
}

/// Every intermediate of one mask generation, for inspection and dumps.
#[derive(Debug, Clone)]
pub struct MaskTrace {
    pub maps: Vec<AttentionMap>,
    pub rollout: AttentionMap,
    pub importance: ImportanceMatrix,
    pub mask: SpectralAttentionMask,
}

pub fn generate_mask_traced(
    sa: &AssistSpectrogram,
    weights: &WeightStore,
    cfg: &VitConfig,
    k: usize,
) -> Result<MaskTrace> {
    cfg.validate()?;
    let patches = patchify(sa, cfg)?;
    let mut x = embed_and_position(&patches, weights, cfg)?;
    let mut maps = Vec::with_capacity(cfg.blocks);
    for block in 0..cfg.blocks {
        let (y, map) = attention_block(&x, weights, block, cfg)?;
        x = y;
        maps.push(map);
    }
    let rollout = attention_rollout(&maps)?;
    let importance = importance(&rollout, cfg)?;
    let mask = select_band_window(&importance, k)?;
    Ok(MaskTrace {
        maps,
        rollout,
        importance,
        mask,
    })
}

/// patchify → embed → blocks → rollout → importance → band window.
pub fn generate_mask(
    sa: &AssistSpectrogram,
    weights: &WeightStore,
    cfg: &VitConfig,
    k: usize,
) -> Result<SpectralAttentionMask> {
    generate_mask_traced(sa, weights, cfg, k).map(|t| t.mask)
}

/// Seeded transformer weights with one patch embedding per `R_a` in
/// `resolutions`.
pub fn init_vit_weights(cfg: &VitConfig, resolutions: &[usize], init: &mut WeightInit) -> Result<WeightStore> {
    cfg.validate()?;
    let e = cfg.embed_dim;
    let mut store = WeightStore::new();
    let mut sizes: Vec<usize> = resolutions
        .iter()
        .filter(|&&r| r > 0)
        .map(|&r| cfg.patch_size(r))
        .collect::<Result<_>>()?;
    sizes.sort_unstable();
    sizes.dedup();
    for ps in sizes {
        let (wn, bn) = patch_embed_names(ps);
        store.insert(wn, init.fan_in(vec![e, ps * ps]))?;
        store.insert(bn, Tensor::zeros(vec![e])?)?;
    }
    store.insert(POS_EMBED, init.uniform(vec![cfg.tokens(), e], 0.02))?;
    for b in 0..cfg.blocks {
        for part in ["q", "k", "v", "out"] {
            store.insert(block_name(b, &format!("{part}.weight")), init.fan_in(vec![e, e]))?;
            store.insert(block_name(b, &format!("{part}.bias")), Tensor::zeros(vec![e])?)?;
        }
        if cfg.mlp_hidden > 0 {
            let h = cfg.mlp_hidden;
            store.insert(block_name(b, "mlp.fc1.weight"), init.fan_in(vec![h, e]))?;
            store.insert(block_name(b, "mlp.fc1.bias"), Tensor::zeros(vec![h])?)?;
            store.insert(block_name(b, "mlp.fc2.weight"), init.fan_in(vec![e, h]))?;
            store.insert(block_name(b, "mlp.fc2.bias"), Tensor::zeros(vec![e])?)?;
        }
    }
    Ok(store)
}
