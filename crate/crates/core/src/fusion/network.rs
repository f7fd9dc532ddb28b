use serde::{Deserialize, Serialize};

use super::{stack_input, ChestImage, FeatureSchema, FusionError, FusionParams, Standardizer};
use crate::autodiff::{NodeId, Tape, Tensor};

const INFERENCE_CHUNK: usize = 64;

/// Rows, images and labels of one mini-batch.
#[derive(Debug, Clone)]
pub struct FusionBatch<'a> {
    pub rows: Vec<&'a [f64]>,
    pub images: Vec<&'a ChestImage>,
    pub y24: Vec<f64>,
    pub y72: Vec<f64>,
}

struct Graph {
    params: Vec<NodeId>,
    image_features: NodeId,
    x0: NodeId,
    #[cfg_attr(not(test), allow(dead_code))]
    cross: NodeId,
    y24: NodeId,
    y72: NodeId,
}

fn check_image(image: &ChestImage, side: usize) -> Result<(), FusionError> {
    if (image.height, image.width) != (side, side) || image.pixels.len() != side * side {
        return Err(FusionError::ImageSize {
            expected: (side, side),
            got: (image.height, image.width),
        });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum ImageInput<'a> {
    Pixels(&'a [&'a ChestImage]),
    /// Precomputed encoder outputs; the conv branch is skipped.
    Features(&'a [&'a [f64]]),
}

impl ImageInput<'_> {
    fn len(&self) -> usize {
        match self {
            ImageInput::Pixels(x) => x.len(),
            ImageInput::Features(x) => x.len(),
        }
    }
}

fn build(
    tape: &mut Tape,
    params: &FusionParams,
    schema: &FeatureSchema,
    standardizer: &Standardizer,
    rows: &[&[f64]],
    images: ImageInput<'_>,
) -> Result<Graph, FusionError> {
    let b = rows.len();
    if images.len() != b {
        return Err(FusionError::Dimension {
            what: "batch images",
            expected: b,
            got: images.len(),
        });
    }
    let side = params.arch.image_size;
    let n_cont = schema.continuous_features.len();
    let mut cont = Vec::with_capacity(b * n_cont);
    let mut cats = vec![Vec::with_capacity(b); schema.categorical_features.len()];
    for row in rows {
        for (k, i) in schema.category_indices(row)?.into_iter().enumerate() {
            cats[k].push(i);
        }
        cont.extend(standardizer.apply(&row[..n_cont]));
    }

    let leaves: Vec<NodeId> = params.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
    let mut at = 0;
    let mut next = || {
        at += 1;
        leaves[at - 1]
    };

    let mut parts = Vec::new();
    if n_cont > 0 {
        parts.push(tape.leaf(Tensor::new(vec![b, n_cont], cont)?));
    }
    for idx in &cats {
        let table = next();
        parts.push(tape.gather(table, idx)?);
    }

    let image_features = match images {
        ImageInput::Pixels(images) => {
            let mut pixels = Vec::with_capacity(b * side * side);
            for image in images {
                check_image(image, side)?;
                pixels.extend_from_slice(&image.pixels);
            }
            let mut h = tape.leaf(Tensor::new(vec![b, 1, side, side], pixels)?);
            for _ in &params.conv {
                let (k, kb) = (next(), next());
                h = tape.conv2d(h, k, 1, 1)?;
                h = tape.channel_bias(h, kb)?;
                h = tape.relu(h);
                h = tape.max_pool(h, 2)?;
            }
            h = tape.flatten(h)?;
            let (pw, pb) = (next(), next());
            let m = tape.matmul(h, pw)?;
            tape.add(m, pb)?
        }
        ImageInput::Features(features) => {
            for _ in 0..2 * params.conv.len() + 2 {
                next();
            }
            let dim = schema.image_feature_dim;
            let mut data = Vec::with_capacity(b * dim);
            for f in features {
                if f.len() != dim {
                    return Err(FusionError::Dimension {
                        what: "image features",
                        expected: dim,
                        got: f.len(),
                    });
                }
                data.extend_from_slice(f);
            }
            tape.leaf(Tensor::new(vec![b, dim], data)?)
        }
    };
    parts.push(image_features);
    let x0 = tape.concat(&parts)?;

    let mut xl = x0;
    for _ in &params.cross {
        let (w, cb) = (next(), next());
        let s = tape.matmul(xl, w)?;
        let t = tape.outer_scale(x0, s)?;
        let t = tape.add(t, cb)?;
        xl = tape.add(t, xl)?;
    }

    let mut deep = x0;
    for _ in &params.deep {
        let (w, db) = (next(), next());
        let m = tape.matmul(deep, w)?;
        let a = tape.add(m, db)?;
        deep = tape.relu(a);
    }
    let joint = tape.concat(&[xl, deep])?;
    let head = |tape: &mut Tape, w: NodeId, hb: NodeId| -> Result<NodeId, FusionError> {
        let m = tape.matmul(joint, w)?;
        let z = tape.add(m, hb)?;
        Ok(tape.sigmoid(z))
    };
    let (w24, b24, w72, b72) = (next(), next(), next(), next());
    let y24 = head(tape, w24, b24)?;
    let y72 = head(tape, w72, b72)?;
    Ok(Graph {
        params: leaves,
        image_features,
        x0,
        cross: xl,
        y24,
        y72,
    })
}

/// Mean over the batch of squared error at 24h plus squared error at 72h.
pub fn batch_loss(
    params: &FusionParams,
    schema: &FeatureSchema,
    standardizer: &Standardizer,
    batch: &FusionBatch<'_>,
    with_grad: bool,
) -> Result<(f64, Option<Vec<Tensor>>), FusionError> {
    let mut tape = Tape::new();
    let g = build(&mut tape, params, schema, standardizer, &batch.rows, ImageInput::Pixels(&batch.images))?;
    let b = batch.rows.len();
    for (what, got) in [("24h targets", batch.y24.len()), ("72h targets", batch.y72.len())] {
        if got != b {
            return Err(FusionError::Dimension { what, expected: b, got });
        }
    }
    let t24 = tape.leaf(Tensor::new(vec![b, 1], batch.y24.clone())?);
    let t72 = tape.leaf(Tensor::new(vec![b, 1], batch.y72.clone())?);
    let l24 = tape.mean_sq_error(g.y24, t24)?;
    let l72 = tape.mean_sq_error(g.y72, t72)?;
    let loss = tape.add(l24, l72)?;
    let value = tape.value(loss).item();
    if !with_grad || !value.is_finite() {
        return Ok((value, None));
    }
    tape.backward(loss)?;
    Ok((value, Some(g.params.iter().map(|&p| tape.grad(p)).collect())))
}

/// A trained network with the preprocessing it was fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub schema: FeatureSchema,
    pub standardizer: Standardizer,
    pub params: FusionParams,
}

impl FusionModel {
    /// `(y24, y72)` for each row/image pair.
    pub fn predict_batch(&self, rows: &[&[f64]], images: &[&ChestImage]) -> Result<Vec<(f64, f64)>, FusionError> {
        if rows.len() != images.len() {
            return Err(FusionError::Dimension {
                what: "batch images",
                expected: rows.len(),
                got: images.len(),
            });
        }
        let mut out = Vec::with_capacity(rows.len());
        for (r, im) in rows.chunks(INFERENCE_CHUNK).zip(images.chunks(INFERENCE_CHUNK)) {
            let mut tape = Tape::new();
            let g = build(&mut tape, &self.params, &self.schema, &self.standardizer, r, ImageInput::Pixels(im))?;
            let (a, b) = (tape.value(g.y24).data(), tape.value(g.y72).data());
            out.extend(a.iter().copied().zip(b.iter().copied()));
        }
        Ok(out)
    }

    /// Like [`FusionModel::predict_batch`] with encoder outputs from
    /// [`FusionModel::image_features`] in place of images.
    pub fn predict_from_features(&self, rows: &[&[f64]], features: &[&[f64]]) -> Result<Vec<(f64, f64)>, FusionError> {
        if rows.len() != features.len() {
            return Err(FusionError::Dimension {
                what: "batch image features",
                expected: rows.len(),
                got: features.len(),
            });
        }
        let mut out = Vec::with_capacity(rows.len());
        for (r, f) in rows.chunks(INFERENCE_CHUNK).zip(features.chunks(INFERENCE_CHUNK)) {
            let mut tape = Tape::new();
            let g = build(&mut tape, &self.params, &self.schema, &self.standardizer, r, ImageInput::Features(f))?;
            let (a, b) = (tape.value(g.y24).data(), tape.value(g.y72).data());
            out.extend(a.iter().copied().zip(b.iter().copied()));
        }
        Ok(out)
    }

    pub fn predict(&self, row: &[f64], image: Option<&ChestImage>) -> Result<(f64, f64), FusionError> {
        forward(row, image, self)
    }

    /// Output of the image encoder.
    pub fn image_features(&self, image: &ChestImage) -> Result<Vec<f64>, FusionError> {
        let probe = self.probe_row();
        let mut tape = Tape::new();
        let g = build(&mut tape, &self.params, &self.schema, &self.standardizer, &[&probe], ImageInput::Pixels(&[image]))?;
        Ok(tape.value(g.image_features).data().to_vec())
    }

    /// `x0` as assembled inside the network.
    pub fn stacked_input(&self, row: &[f64], image: &ChestImage) -> Result<Vec<f64>, FusionError> {
        let mut tape = Tape::new();
        let g = build(&mut tape, &self.params, &self.schema, &self.standardizer, &[row], ImageInput::Pixels(&[image]))?;
        Ok(tape.value(g.x0).data().to_vec())
    }

    /// `x0` via [`stack_input`] with this model's embeddings.
    pub fn stack(&self, row: &[f64], image: &ChestImage) -> Result<Vec<f64>, FusionError> {
        let f = self.image_features(image)?;
        stack_input(row, Some(&f), &self.schema, &self.standardizer, &self.params.embeddings)
    }

    fn probe_row(&self) -> Vec<f64> {
        let mut r = self.standardizer.mean.clone();
        r.resize(self.schema.row_width(), 0.0);
        r
    }
}

/// Single-record inference. The fusion path requires an image.
pub fn forward(row: &[f64], image: Option<&ChestImage>, model: &FusionModel) -> Result<(f64, f64), FusionError> {
    let image = image.ok_or(FusionError::MissingImage)?;
    Ok(model.predict_batch(&[row], &[image])?[0])
}
