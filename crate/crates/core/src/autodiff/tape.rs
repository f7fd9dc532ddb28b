use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Scale(NodeId, f64),
    Inner(NodeId, NodeId),
    OuterScale(NodeId, NodeId),
    Concat(Vec<NodeId>),
    MeanSqError(NodeId, NodeId),
    Sum(NodeId),
    Conv2d {
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
    },
    ChannelBias(NodeId, NodeId),
    MaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Flatten(NodeId),
    Gather {
        table: NodeId,
        indices: Vec<usize>,
    },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Scale(..) => "scale",
            Op::Inner(..) => "inner",
            Op::OuterScale(..) => "outer_scale",
            Op::Concat(_) => "concat",
            Op::MeanSqError(..) => "mean_sq_error",
            Op::Sum(_) => "sum",
            Op::Conv2d { .. } => "conv2d",
            Op::ChannelBias(..) => "channel_bias",
            Op::MaxPool { .. } => "max_pool",
            Op::Flatten(_) => "flatten",
            Op::Gather { .. } => "gather",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Mul(a, b)
            | Op::Inner(a, b)
            | Op::OuterScale(a, b)
            | Op::MeanSqError(a, b)
            | Op::ChannelBias(a, b) => vec![*a, *b],
            Op::Relu(a) | Op::Sigmoid(a) | Op::Scale(a, _) | Op::Sum(a) | Op::Flatten(a) => {
                vec![*a]
            }
            Op::Concat(list) => list.clone(),
            Op::Conv2d { input, kernels, .. } => vec![*input, *kernels],
            Op::MaxPool { input, .. } => vec![*input],
            Op::Gather { table, .. } => vec![*table],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation and replays it backwards.
///
/// A tape is single-threaded; build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// `(outer, last)` view of a shape for last-axis operations.
fn split_last(shape: &[usize]) -> (usize, usize) {
    match shape.split_last() {
        Some((&last, rest)) => (rest.iter().product(), last),
        None => (1, 1),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    /// Gradient of the last `backward` loss with respect to `id`. Nodes the
    /// loss does not depend on (or any node before `backward` ran) report
    /// zeros.
    pub fn grad(&self, id: NodeId) -> Tensor {
        let value = &self.nodes[id.0].value;
        match self.grads.get(id.0) {
            Some(g) if g.len() == value.len() => {
                Tensor::new(value.shape().to_vec(), g.clone()).expect("grad shape")
            }
            _ => Tensor::zeros(value.shape()),
        }
    }

    /// Gradient as a borrowed slice; empty before `backward`.
    pub fn grad_data(&self, id: NodeId) -> &[f64] {
        self.grads.get(id.0).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, &bpj) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bpj;
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Elementwise sum; `b` may omit the leading (batch) dimension of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        let data = if sa == sb {
            av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect()
        } else if sa.len() == sb.len() + 1 && &sa[1..] == sb {
            let inner = bv.len();
            av.data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bv.data()[i % inner])
                .collect()
        } else {
            return Err(shape_err("add", sa, sb));
        };
        let value = Tensor::new(sa.to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("mul", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| x.max(0.0)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| stable_sigmoid(x)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Sigmoid(a))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| x * factor).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale(a, factor))
    }

    /// Full contraction `Σ u·v` of two equally shaped tensors.
    pub fn inner(&mut self, u: NodeId, v: NodeId) -> Result<NodeId, AutodiffError> {
        let (uv, vv) = (self.value(u), self.value(v));
        if uv.shape() != vv.shape() {
            return Err(shape_err("inner", uv.shape(), vv.shape()));
        }
        let s = uv.data().iter().zip(vv.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::Inner(u, v)))
    }

    /// `x` times a scalar node, or each row of a `[m, d]` matrix times the
    /// matching entry of an `[m]`/`[m, 1]` column.
    pub fn outer_scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId, AutodiffError> {
        let (xv, sv) = (self.value(x), self.value(s));
        let (rows, width) = match xv.shape().len() {
            1 => (1, xv.len()),
            2 => (xv.shape()[0], xv.shape()[1]),
            _ => return Err(shape_err("outer_scale", xv.shape(), sv.shape())),
        };
        if sv.len() != rows || (xv.shape().len() == 2 && sv.shape()[0] != rows) {
            return Err(shape_err("outer_scale", xv.shape(), sv.shape()));
        }
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * sv.data()[i / width])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::OuterScale(x, s)))
    }

    /// Concatenation along the last axis. All inputs share every other
    /// dimension.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let lead = self.value(*first).shape().to_vec();
        let (outer, _) = split_last(&lead);
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != lead.len() || s[..s.len() - 1] != lead[..lead.len() - 1] {
                return Err(shape_err("concat", &lead, s));
            }
            total += s[s.len() - 1];
        }
        let mut data = Vec::with_capacity(outer * total);
        for r in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let (_, w) = split_last(v.shape());
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        *shape.last_mut().expect("rank >= 1") = total;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    /// Mean over all elements of `(pred - target)²`.
    pub fn mean_sq_error(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, AutodiffError> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.shape() != tv.shape() {
            return Err(shape_err("mean_sq_error", pv.shape(), tv.shape()));
        }
        let n = pv.len().max(1) as f64;
        let s: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Tensor::scalar(s / n), Op::MeanSqError(pred, target)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// 2-D cross-correlation. `input` is `[B, C, H, W]`, `kernels` is
    /// `[O, C, KH, KW]`; zero padding on every side.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (iv, kv) = (self.value(input), self.value(kernels));
        let (si, sk) = (iv.shape(), kv.shape());
        if si.len() != 4
            || sk.len() != 4
            || si[1] != sk[1]
            || stride == 0
            || si[2] + 2 * padding < sk[2]
            || si[3] + 2 * padding < sk[3]
        {
            return Err(shape_err("conv2d", si, sk));
        }
        let g = ConvGeom::new(si, sk, stride, padding);
        let mut out = vec![0.0; g.b * g.o * g.oh * g.ow];
        let (id, kd) = (iv.data(), kv.data());
        for b in 0..g.b {
            for o in 0..g.o {
                let out_plane = &mut out[(b * g.o + o) * g.oh * g.ow..][..g.oh * g.ow];
                for c in 0..g.c {
                    let in_plane = &id[(b * g.c + c) * g.h * g.w..][..g.h * g.w];
                    for ky in 0..g.kh {
                        for kx in 0..g.kw {
                            let wgt = kd[((o * g.c + c) * g.kh + ky) * g.kw + kx];
                            let (x_lo, x_hi) = g.valid_out_range(kx, g.w, g.ow);
                            for oy in 0..g.oh {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                if iy < 0 || iy >= g.h as isize {
                                    continue;
                                }
                                let in_row = &in_plane[iy as usize * g.w..][..g.w];
                                let out_row = &mut out_plane[oy * g.ow..][..g.ow];
                                for ox in x_lo..x_hi {
                                    let ix = ox * g.stride + kx - g.pad;
                                    out_row[ox] += wgt * in_row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![g.b, g.o, g.oh, g.ow], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernels,
                stride,
                padding,
            },
        ))
    }

    /// Adds `bias[c]` to every element of channel `c` of a `[B, C, H, W]`
    /// tensor.
    pub fn channel_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, AutodiffError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let sx = xv.shape();
        if sx.len() != 4 || bv.shape() != [sx[1]] {
            return Err(shape_err("channel_bias", sx, bv.shape()));
        }
        let plane = sx[2] * sx[3];
        let c = sx[1];
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[(i / plane) % c])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        Ok(self.push(value, Op::ChannelBias(x, bias)))
    }

    /// Non-overlapping `window × window` max pooling over `[B, C, H, W]`;
    /// trailing rows/columns that do not fill a window are dropped.
    pub fn max_pool(&mut self, input: NodeId, window: usize) -> Result<NodeId, AutodiffError> {
        let iv = self.value(input);
        let s = iv.shape();
        if s.len() != 4 || window == 0 || s[2] < window || s[3] < window {
            return Err(shape_err("max_pool", s, &[window, window]));
        }
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (oh, ow) = (h / window, w / window);
        let mut out = Vec::with_capacity(bc * oh * ow);
        let mut argmax = Vec::with_capacity(bc * oh * ow);
        let d = iv.data();
        for p in 0..bc {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = base + oy * window * w + ox * window;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = base + (oy * window + dy) * w + ox * window + dx;
                            if d[idx] > best {
                                best = d[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        let value = Tensor::new(vec![s[0], s[1], oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool { input, argmax }))
    }

    /// `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId, AutodiffError> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() < 2 {
            return Err(shape_err("flatten", s, &[]));
        }
        let value = Tensor::new(vec![s[0], s[1..].iter().product()], xv.data().to_vec())?;
        Ok(self.push(value, Op::Flatten(x)))
    }

    /// Row lookup into a `[V, D]` table; returns `[indices.len(), D]`.
    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId, AutodiffError> {
        let tv = self.value(table);
        let s = tv.shape();
        if s.len() != 2 {
            return Err(shape_err("gather", s, &[indices.len()]));
        }
        let (rows, dim) = (s[0], s[1]);
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            if i >= rows {
                return Err(AutodiffError::IndexOutOfRange { index: i, rows });
            }
            data.extend_from_slice(&tv.data()[i * dim..(i + 1) * dim]);
        }
        let value = Tensor::new(vec![indices.len(), dim], data)?;
        Ok(self.push(
            value,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Reverse accumulation from a scalar `loss`. Populates gradients for
    /// every node; anything the loss does not depend on keeps a zero grad.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AutodiffError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[i]);
            if g.iter().any(|&v| v != 0.0) {
                propagate(&self.nodes, i, &g, &mut grads);
            }
            grads[i] = g;
        }
        self.grads = grads;
        Ok(())
    }
}

struct ConvGeom {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(si: &[usize], sk: &[usize], stride: usize, pad: usize) -> Self {
        let (h, w, kh, kw) = (si[2], si[3], sk[2], sk[3]);
        ConvGeom {
            b: si[0],
            c: si[1],
            h,
            w,
            o: sk[0],
            kh,
            kw,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
            stride,
            pad,
        }
    }

    /// Output columns `[lo, hi)` whose input column `ox*stride + k - pad`
    /// lands inside `[0, extent)`.
    fn valid_out_range(&self, k: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let lo = if self.pad > k {
            (self.pad - k).div_ceil(self.stride)
        } else {
            0
        };
        // ox*stride + k - pad <= extent - 1
        let hi = if extent + self.pad > k {
            ((extent - 1 + self.pad - k) / self.stride + 1).min(out_extent)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn propagate(nodes: &[Node], i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            let (ad, bd) = (av.data(), bv.data());
            // dA = G · Bᵀ
            {
                let ga = &mut grads[a.0];
                for r in 0..m {
                    let grow = &g[r * n..(r + 1) * n];
                    for p in 0..k {
                        let brow = &bd[p * n..(p + 1) * n];
                        ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            // dB = Aᵀ · G
            let gb = &mut grads[b.0];
            for r in 0..m {
                let grow = &g[r * n..(r + 1) * n];
                for p in 0..k {
                    let arp = ad[r * k + p];
                    if arp == 0.0 {
                        continue;
                    }
                    for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                        *o += arp * gv;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                *o += gv;
            }
            let inner = nodes[b.0].value.len();
            let gb = &mut grads[b.0];
            for (j, &gv) in g.iter().enumerate() {
                gb[j % inner] += gv;
            }
        }
        Op::Mul(a, b) => {
            let (ad, bd) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            for (j, &gv) in g.iter().enumerate() {
                grads[a.0][j] += gv * bd[j];
            }
            for (j, &gv) in g.iter().enumerate() {
                grads[b.0][j] += gv * ad[j];
            }
        }
        Op::Relu(a) => {
            let ad = nodes[a.0].value.data();
            for ((o, &gv), &x) in grads[a.0].iter_mut().zip(g).zip(ad) {
                if x > 0.0 {
                    *o += gv;
                }
            }
        }
        Op::Sigmoid(a) => {
            let yd = node.value.data();
            for ((o, &gv), &y) in grads[a.0].iter_mut().zip(g).zip(yd) {
                *o += gv * y * (1.0 - y);
            }
        }
        Op::Scale(a, f) => {
            for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                *o += gv * f;
            }
        }
        Op::Inner(u, v) => {
            let (ud, vd) = (nodes[u.0].value.data(), nodes[v.0].value.data());
            let s = g[0];
            for (j, &x) in vd.iter().enumerate() {
                grads[u.0][j] += s * x;
            }
            for (j, &x) in ud.iter().enumerate() {
                grads[v.0][j] += s * x;
            }
        }
        Op::OuterScale(x, s) => {
            let (xd, sd) = (nodes[x.0].value.data(), nodes[s.0].value.data());
            let width = xd.len() / sd.len();
            for (j, &gv) in g.iter().enumerate() {
                grads[x.0][j] += gv * sd[j / width];
            }
            for (j, &gv) in g.iter().enumerate() {
                grads[s.0][j / width] += gv * xd[j];
            }
        }
        Op::Concat(parts) => {
            let (outer, total) = split_last(node.value.shape());
            let mut offset = 0;
            for p in parts {
                let (_, w) = split_last(nodes[p.0].value.shape());
                let gp = &mut grads[p.0];
                for r in 0..outer {
                    for c in 0..w {
                        gp[r * w + c] += g[r * total + offset + c];
                    }
                }
                offset += w;
            }
        }
        Op::MeanSqError(p, t) => {
            let (pd, td) = (nodes[p.0].value.data(), nodes[t.0].value.data());
            let scale = 2.0 * g[0] / pd.len().max(1) as f64;
            for j in 0..pd.len() {
                let d = scale * (pd[j] - td[j]);
                grads[p.0][j] += d;
                grads[t.0][j] -= d;
            }
        }
        Op::Sum(a) => {
            for o in grads[a.0].iter_mut() {
                *o += g[0];
            }
        }
        Op::Conv2d {
            input,
            kernels,
            stride,
            padding,
        } => {
            let (iv, kv) = (&nodes[input.0].value, &nodes[kernels.0].value);
            let geo = ConvGeom::new(iv.shape(), kv.shape(), *stride, *padding);
            let (id, kd) = (iv.data(), kv.data());
            let mut gi = std::mem::take(&mut grads[input.0]);
            let mut gk = std::mem::take(&mut grads[kernels.0]);
            for b in 0..geo.b {
                for o in 0..geo.o {
                    let g_plane = &g[(b * geo.o + o) * geo.oh * geo.ow..][..geo.oh * geo.ow];
                    for c in 0..geo.c {
                        let in_off = (b * geo.c + c) * geo.h * geo.w;
                        for ky in 0..geo.kh {
                            for kx in 0..geo.kw {
                                let kidx = ((o * geo.c + c) * geo.kh + ky) * geo.kw + kx;
                                let wgt = kd[kidx];
                                let (x_lo, x_hi) = geo.valid_out_range(kx, geo.w, geo.ow);
                                let mut acc = 0.0;
                                for oy in 0..geo.oh {
                                    let iy = (oy * geo.stride + ky) as isize - geo.pad as isize;
                                    if iy < 0 || iy >= geo.h as isize {
                                        continue;
                                    }
                                    let row_off = in_off + iy as usize * geo.w;
                                    let g_row = &g_plane[oy * geo.ow..][..geo.ow];
                                    for ox in x_lo..x_hi {
                                        let ix = ox * geo.stride + kx - geo.pad;
                                        let gv = g_row[ox];
                                        acc += gv * id[row_off + ix];
                                        gi[row_off + ix] += gv * wgt;
                                    }
                                }
                                gk[kidx] += acc;
                            }
                        }
                    }
                }
            }
            grads[input.0] = gi;
            grads[kernels.0] = gk;
        }
        Op::ChannelBias(x, bias) => {
            let s = node.value.shape();
            let (plane, c) = (s[2] * s[3], s[1]);
            for (o, &gv) in grads[x.0].iter_mut().zip(g) {
                *o += gv;
            }
            let gb = &mut grads[bias.0];
            for (j, &gv) in g.iter().enumerate() {
                gb[(j / plane) % c] += gv;
            }
        }
        Op::MaxPool { input, argmax } => {
            let gi = &mut grads[input.0];
            for (&src, &gv) in argmax.iter().zip(g) {
                gi[src] += gv;
            }
        }
        Op::Flatten(x) => {
            for (o, &gv) in grads[x.0].iter_mut().zip(g) {
                *o += gv;
            }
        }
        Op::Gather { table, indices } => {
            let dim = nodes[table.0].value.shape()[1];
            let gt = &mut grads[table.0];
            for (r, &row) in indices.iter().enumerate() {
                for c in 0..dim {
                    gt[row * dim + c] += g[r * dim + c];
                }
            }
        }
    }
}
