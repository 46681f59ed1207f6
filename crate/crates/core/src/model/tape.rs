//! Reverse-mode differentiation over a closed set of network operators.
//!
//! A [`Tape`] records every node's forward value in evaluation order;
//! [`Tape::backward`] walks it in reverse and accumulates the gradient of a
//! scalar node with respect to the parameter vector the tape was built over.
//! Activations are stored batch-major.

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Dense {
        x: NodeId,
        w: usize,
        b: usize,
        fan_in: usize,
        fan_out: usize,
    },
    Conv {
        x: NodeId,
        w: usize,
        b: usize,
        cin: usize,
        cout: usize,
        height: usize,
        width: usize,
    },
    Relu(NodeId),
    Add(NodeId, NodeId),
    AvgPool {
        x: NodeId,
        spatial: usize,
    },
    SoftmaxXent {
        logits: NodeId,
        labels: Vec<usize>,
        classes: usize,
    },
    SquaredError {
        out: NodeId,
        targets: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

#[derive(Debug)]
pub struct Tape<'a> {
    theta: &'a [f64],
    batch: usize,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(theta: &'a [f64], batch: usize) -> Self {
        Tape {
            theta,
            batch,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        debug_assert_eq!(values.len() % self.batch, 0);
        self.push(Op::Input, values)
    }

    /// `y = x Wᵀ + b` with `W` stored row-major as `[fan_out, fan_in]` at offset `w`.
    pub fn dense(
        &mut self,
        x: NodeId,
        w: usize,
        b: usize,
        fan_in: usize,
        fan_out: usize,
    ) -> NodeId {
        let xv = &self.nodes[x].value;
        debug_assert_eq!(xv.len(), self.batch * fan_in);
        let wm = &self.theta[w..w + fan_in * fan_out];
        let bias = &self.theta[b..b + fan_out];
        let mut y = vec![0.0; self.batch * fan_out];
        for (xr, yr) in xv.chunks_exact(fan_in).zip(y.chunks_exact_mut(fan_out)) {
            for (o, yo) in yr.iter_mut().enumerate() {
                let row = &wm[o * fan_in..(o + 1) * fan_in];
                let mut acc = bias[o];
                for (wi, xi) in row.iter().zip(xr) {
                    acc += wi * xi;
                }
                *yo = acc;
            }
        }
        self.push(
            Op::Dense {
                x,
                w,
                b,
                fan_in,
                fan_out,
            },
            y,
        )
    }

    /// 3×3 convolution, stride 1, zero padding 1; weights `[cout, cin, 3, 3]`.
    pub fn conv3x3(
        &mut self,
        x: NodeId,
        w: usize,
        b: usize,
        cin: usize,
        cout: usize,
        height: usize,
        width: usize,
    ) -> NodeId {
        let xv = &self.nodes[x].value;
        let in_len = cin * height * width;
        let out_len = cout * height * width;
        debug_assert_eq!(xv.len(), self.batch * in_len);
        let wt = &self.theta[w..w + cout * cin * 9];
        let bias = &self.theta[b..b + cout];
        let mut y = vec![0.0; self.batch * out_len];
        for (xs, ys) in xv.chunks_exact(in_len).zip(y.chunks_exact_mut(out_len)) {
            for co in 0..cout {
                let yplane = &mut ys[co * height * width..(co + 1) * height * width];
                yplane.iter_mut().for_each(|v| *v = bias[co]);
                for ci in 0..cin {
                    let xplane = &xs[ci * height * width..(ci + 1) * height * width];
                    let k = &wt[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
                    for oy in 0..height {
                        for ox in 0..width {
                            let mut acc = 0.0;
                            for ky in 0..3 {
                                let iy = oy + ky;
                                if iy == 0 || iy > height {
                                    continue;
                                }
                                for kx in 0..3 {
                                    let ix = ox + kx;
                                    if ix == 0 || ix > width {
                                        continue;
                                    }
                                    acc += k[ky * 3 + kx] * xplane[(iy - 1) * width + ix - 1];
                                }
                            }
                            yplane[oy * width + ox] += acc;
                        }
                    }
                }
            }
        }
        self.push(
            Op::Conv {
                x,
                w,
                b,
                cin,
                cout,
                height,
                width,
            },
            y,
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x].value.iter().map(|&v| v.max(0.0)).collect();
        self.push(Op::Relu(x), y)
    }

    /// Sign of every ReLU input recorded so far (`true` where positive).
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                out.extend(self.nodes[x].value.iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add(a, b), y)
    }

    /// Mean over the spatial positions of each channel.
    pub fn avg_pool(&mut self, x: NodeId, channels: usize, spatial: usize) -> NodeId {
        debug_assert_eq!(self.nodes[x].value.len() % (channels * spatial), 0);
        let inv = 1.0 / spatial as f64;
        let y = self.nodes[x]
            .value
            .chunks_exact(spatial)
            .map(|c| c.iter().sum::<f64>() * inv)
            .collect();
        self.push(Op::AvgPool { x, spatial }, y)
    }

    /// Summed negative log-softmax probability of the labels.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: &[usize], classes: usize) -> NodeId {
        let total: f64 = self.nodes[logits]
            .value
            .chunks_exact(classes)
            .zip(labels)
            .map(|(row, &y)| log_sum_exp(row) - row[y])
            .sum();
        self.push(
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                classes,
            },
            vec![total],
        )
    }

    /// `½ Σ (f − y)²` over a single-output node.
    pub fn squared_error(&mut self, out: NodeId, targets: &[f64]) -> NodeId {
        let total = 0.5
            * self.nodes[out]
                .value
                .iter()
                .zip(targets)
                .map(|(f, y)| (f - y) * (f - y))
                .sum::<f64>();
        self.push(
            Op::SquaredError {
                out,
                targets: targets.to_vec(),
            },
            vec![total],
        )
    }

    /// Gradient of the scalar node `root` with respect to `theta`.
    pub fn backward(&self, root: NodeId) -> Vec<f64> {
        assert_eq!(
            self.nodes[root].value.len(),
            1,
            "backward needs a scalar root"
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[root] = Some(vec![1.0]);
        let mut dtheta = vec![0.0; self.theta.len()];

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Dense {
                    x,
                    w,
                    b,
                    fan_in,
                    fan_out,
                } => {
                    let (fan_in, fan_out) = (*fan_in, *fan_out);
                    let xv = &self.nodes[*x].value;
                    let wm = &self.theta[*w..*w + fan_in * fan_out];
                    let mut dx = vec![0.0; xv.len()];
                    for ((gr, xr), dxr) in g
                        .chunks_exact(fan_out)
                        .zip(xv.chunks_exact(fan_in))
                        .zip(dx.chunks_exact_mut(fan_in))
                    {
                        for (o, &go) in gr.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            dtheta[*b + o] += go;
                            let dw = &mut dtheta[*w + o * fan_in..*w + (o + 1) * fan_in];
                            for (dwi, xi) in dw.iter_mut().zip(xr) {
                                *dwi += go * xi;
                            }
                            let row = &wm[o * fan_in..(o + 1) * fan_in];
                            for (dxi, wi) in dxr.iter_mut().zip(row) {
                                *dxi += go * wi;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Conv {
                    x,
                    w,
                    b,
                    cin,
                    cout,
                    height,
                    width,
                } => {
                    let (cin, cout, height, width) = (*cin, *cout, *height, *width);
                    let plane = height * width;
                    let xv = &self.nodes[*x].value;
                    let wt = &self.theta[*w..*w + cout * cin * 9];
                    let mut dx = vec![0.0; xv.len()];
                    for ((gs, xs), dxs) in g
                        .chunks_exact(cout * plane)
                        .zip(xv.chunks_exact(cin * plane))
                        .zip(dx.chunks_exact_mut(cin * plane))
                    {
                        for co in 0..cout {
                            let gplane = &gs[co * plane..(co + 1) * plane];
                            dtheta[*b + co] += gplane.iter().sum::<f64>();
                            for ci in 0..cin {
                                let xplane = &xs[ci * plane..(ci + 1) * plane];
                                let kidx = *w + (co * cin + ci) * 9;
                                let k = &wt[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
                                for oy in 0..height {
                                    for ox in 0..width {
                                        let go = gplane[oy * width + ox];
                                        if go == 0.0 {
                                            continue;
                                        }
                                        for ky in 0..3 {
                                            let iy = oy + ky;
                                            if iy == 0 || iy > height {
                                                continue;
                                            }
                                            for kx in 0..3 {
                                                let ix = ox + kx;
                                                if ix == 0 || ix > width {
                                                    continue;
                                                }
                                                let p = (iy - 1) * width + ix - 1;
                                                dtheta[kidx + ky * 3 + kx] += go * xplane[p];
                                                dxs[ci * plane + p] += go * k[ky * 3 + kx];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Relu(x) => {
                    let dx = g
                        .iter()
                        .zip(&self.nodes[*x].value)
                        .map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AvgPool { x, spatial } => {
                    let inv = 1.0 / *spatial as f64;
                    let dx = g
                        .iter()
                        .flat_map(|&gi| std::iter::repeat_n(gi * inv, *spatial))
                        .collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxXent {
                    logits,
                    labels,
                    classes,
                } => {
                    let scale = g[0];
                    let mut dl = vec![0.0; self.nodes[*logits].value.len()];
                    for ((row, drow), &y) in self.nodes[*logits]
                        .value
                        .chunks_exact(*classes)
                        .zip(dl.chunks_exact_mut(*classes))
                        .zip(labels)
                    {
                        let lse = log_sum_exp(row);
                        for (d, &l) in drow.iter_mut().zip(row) {
                            *d = scale * (l - lse).exp();
                        }
                        drow[y] -= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::SquaredError { out, targets } => {
                    let scale = g[0];
                    let d = self.nodes[*out]
                        .value
                        .iter()
                        .zip(targets)
                        .map(|(f, y)| scale * (f - y))
                        .collect();
                    accumulate(&mut grads, *out, d);
                }
            }
        }
        dtheta
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of a `[rows, classes]` matrix.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|&l| (l - lse).exp()));
    }
    out
}
