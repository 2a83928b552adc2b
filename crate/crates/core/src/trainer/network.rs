//! Executable networks built from genomes.
//!
//! A network runs stem layers, then each module's parallel streams with
//! channel concatenation and (for the residual metas) a residual add with a
//! 1x1x1 projection on channel mismatch, repeated per the module's repeat
//! count, then global average pooling over T, Y, X and a linear classifier.
//! ReLU follows every convolution except a stream-final 1x1x1.

use rand::Rng;

use crate::genome::{
    count_genome_parameters, effective_mixtures, validate, Genome, LayerKind,
};
use crate::kernels::{
    feature_dims, Conv1x1x1, Conv2Plus1d, Conv3d, ItgmLayer, Layer, LayerAux, PoolKind, PoolLayer,
    Tensor,
};
use crate::rng::derive_rng;

use super::TrainerError;

#[derive(Debug, Clone)]
pub struct LayerNode {
    pub layer: Layer,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct RepeatBlock {
    pub streams: Vec<Vec<LayerNode>>,
    /// Concat width of each stream (its channel share).
    pub stream_channels: Vec<usize>,
    /// Residual projection when the repeat input width differs from the
    /// module output width.
    pub projection: Option<Conv1x1x1>,
    pub residual: bool,
}

#[derive(Debug, Clone)]
pub struct ModuleBlock {
    pub repeats: Vec<RepeatBlock>,
    pub out_channels: usize,
}

#[derive(Debug, Clone)]
pub struct LinearHead {
    /// C x num_classes.
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub stem: Vec<LayerNode>,
    pub modules: Vec<ModuleBlock>,
    pub head: LinearHead,
    pub num_classes: usize,
    pub input_channels: usize,
    pub feature_channels: usize,
}

fn build_layer(
    kind: LayerKind,
    temporal_len: usize,
    cin: usize,
    cout: usize,
    spatial_stride: usize,
    rng: &mut impl Rng,
) -> Layer {
    let stride = (1, spatial_stride, spatial_stride);
    match kind {
        LayerKind::Conv3D => Layer::Conv3d(Conv3d::init(temporal_len, 3, cin, cout, stride, rng)),
        LayerKind::Conv2Plus1D => {
            Layer::Conv2Plus1d(Conv2Plus1d::init(temporal_len, 3, cin, cout, stride, rng))
        }
        LayerKind::ConvITGM => Layer::Itgm(ItgmLayer::init(
            temporal_len,
            3,
            cin,
            cout,
            effective_mixtures(temporal_len),
            stride,
            rng,
        )),
        LayerKind::Conv1x1x1 => Layer::Conv1x1x1(Conv1x1x1::init(cin, cout, rng)),
        LayerKind::MaxPool | LayerKind::AvgPool => Layer::Pool(PoolLayer {
            kind: if kind == LayerKind::MaxPool { PoolKind::Max } else { PoolKind::Avg },
            temporal_len,
            spatial_len: 3,
            stride,
        }),
    }
}

/// Materialize a genome into a network with freshly initialized weights.
/// Deterministic given `init_seed`.
pub fn build_network(
    genome: &Genome,
    num_classes: usize,
    input_channels: usize,
    init_seed: u64,
) -> Result<Network, TrainerError> {
    let report = validate(genome);
    if !report.ok() {
        return Err(TrainerError::Config(format!(
            "genome failed validation: {}",
            report.violations.join("; ")
        )));
    }
    if num_classes == 0 || input_channels == 0 {
        return Err(TrainerError::Config("num_classes and input_channels must be positive".into()));
    }
    let mut rng = derive_rng(init_seed, "network-init", 0);
    let template = genome.meta.template();

    let mut stem = Vec::new();
    let mut cin = input_channels;
    for (spec, slot) in genome.stem.iter().zip(&template.stem) {
        let layer = build_layer(
            spec.kind,
            spec.temporal_len,
            cin,
            spec.out_channels.max(1),
            slot.spatial_stride,
            &mut rng,
        );
        cin = layer.out_channels(cin);
        let relu = !spec.kind.is_pool();
        stem.push(LayerNode { layer, relu });
    }

    let residual = genome.meta.residual();
    let mut modules = Vec::new();
    for module in &genome.modules {
        let out = module.total_out_channels;
        let shares = module.stream_shares();
        let mut repeats = Vec::new();
        for rep in 0..module.repeats {
            let rep_in = if rep == 0 { cin } else { out };
            let mut streams = Vec::new();
            for stream in &module.streams {
                let mut nodes = Vec::new();
                let mut stream_in = rep_in;
                let last = stream.layers.len() - 1;
                for (i, layer_spec) in stream.layers.iter().enumerate() {
                    let layer = build_layer(
                        layer_spec.kind,
                        layer_spec.temporal_len,
                        stream_in,
                        layer_spec.out_channels,
                        1,
                        &mut rng,
                    );
                    stream_in = layer.out_channels(stream_in);
                    let is_final_pointwise = layer_spec.kind == LayerKind::Conv1x1x1 && i == last;
                    let relu = !layer_spec.kind.is_pool() && !is_final_pointwise;
                    nodes.push(LayerNode { layer, relu });
                }
                streams.push(nodes);
            }
            let projection = if residual && rep_in != out {
                Some(Conv1x1x1::init(rep_in, out, &mut rng))
            } else {
                None
            };
            repeats.push(RepeatBlock {
                streams,
                stream_channels: shares.clone(),
                projection,
                residual,
            });
        }
        modules.push(ModuleBlock { repeats, out_channels: out });
        cin = out;
    }

    let feature_channels = cin;
    let limit = (6.0 / (feature_channels + num_classes) as f64).sqrt();
    let head = LinearHead {
        weight: Tensor::from_fn(&[feature_channels, num_classes], |_| rng.gen_range(-limit..=limit)),
        bias: vec![0.0; num_classes],
    };

    Ok(Network { stem, modules, head, num_classes, input_channels, feature_channels })
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct NodeTrace {
    input: Tensor,
    aux: LayerAux,
    raw: Tensor,
}

#[derive(Debug, Clone)]
struct RepeatTrace {
    input: Tensor,
    streams: Vec<Vec<NodeTrace>>,
    projection: Option<NodeTrace>,
}

/// Saved activations of one sample's forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    stem: Vec<NodeTrace>,
    modules: Vec<Vec<RepeatTrace>>,
    features: Vec<f64>,
    feature_shape: [usize; 4],
}

fn relu_forward(raw: &Tensor) -> Tensor {
    let mut out = raw.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn relu_backward_inplace(grad: &mut Tensor, raw: &Tensor) {
    for (g, &r) in grad.data_mut().iter_mut().zip(raw.data()) {
        if r <= 0.0 {
            *g = 0.0;
        }
    }
}

fn run_node(node: &LayerNode, input: Tensor) -> Result<(Tensor, NodeTrace), TrainerError> {
    let (raw, aux) = node.layer.forward_aux(&input)?;
    let out = if node.relu { relu_forward(&raw) } else { raw.clone() };
    Ok((out, NodeTrace { input, aux, raw }))
}

fn concat_channels(parts: &[Tensor], widths: &[usize]) -> Tensor {
    let (t, y, x, _) = feature_dims(&parts[0]).expect("stream outputs are feature maps");
    let total: usize = widths.iter().sum();
    let mut out = Tensor::zeros(&[t, y, x, total]);
    let positions = t * y * x;
    let mut offset = 0;
    for (part, &w) in parts.iter().zip(widths) {
        for p in 0..positions {
            let src = &part.data()[p * w..(p + 1) * w];
            out.data_mut()[p * total + offset..p * total + offset + w].copy_from_slice(src);
        }
        offset += w;
    }
    out
}

fn slice_channels(grad: &Tensor, offset: usize, width: usize) -> Tensor {
    let (t, y, x, total) = feature_dims(grad).expect("gradient is a feature map");
    let positions = t * y * x;
    let mut out = Tensor::zeros(&[t, y, x, width]);
    for p in 0..positions {
        let src = &grad.data()[p * total + offset..p * total + offset + width];
        out.data_mut()[p * width..(p + 1) * width].copy_from_slice(src);
    }
    out
}

fn add_into(acc: &mut Tensor, rhs: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(rhs.data()) {
        *a += b;
    }
}

impl Network {
    /// Logits for one example of shape T*Y*X*C.
    pub fn forward(&self, input: &Tensor) -> Result<Vec<f64>, TrainerError> {
        Ok(self.forward_traced(input)?.0)
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<(Vec<f64>, Trace), TrainerError> {
        let (_, _, _, c) = feature_dims(input)?;
        if c != self.input_channels {
            return Err(TrainerError::Config(format!(
                "input has {c} channels, network expects {}",
                self.input_channels
            )));
        }
        let mut cur = input.clone();
        let mut stem_trace = Vec::with_capacity(self.stem.len());
        for node in &self.stem {
            let (out, trace) = run_node(node, cur)?;
            cur = out;
            stem_trace.push(trace);
        }

        let mut module_traces = Vec::with_capacity(self.modules.len());
        for module in &self.modules {
            let mut repeat_traces = Vec::with_capacity(module.repeats.len());
            for repeat in &module.repeats {
                let rep_in = cur;
                let mut stream_outs = Vec::with_capacity(repeat.streams.len());
                let mut stream_traces = Vec::with_capacity(repeat.streams.len());
                for stream in &repeat.streams {
                    let mut s_cur = rep_in.clone();
                    let mut nodes = Vec::with_capacity(stream.len());
                    for node in stream {
                        let (out, trace) = run_node(node, s_cur)?;
                        s_cur = out;
                        nodes.push(trace);
                    }
                    stream_outs.push(s_cur);
                    stream_traces.push(nodes);
                }
                let mut out = concat_channels(&stream_outs, &repeat.stream_channels);
                let mut projection_trace = None;
                if repeat.residual {
                    match &repeat.projection {
                        Some(proj) => {
                            let layer = Layer::Conv1x1x1(proj.clone());
                            let (raw, aux) = layer.forward_aux(&rep_in)?;
                            add_into(&mut out, &raw);
                            projection_trace =
                                Some(NodeTrace { input: rep_in.clone(), aux, raw });
                        }
                        None => add_into(&mut out, &rep_in),
                    }
                }
                repeat_traces.push(RepeatTrace {
                    input: rep_in,
                    streams: stream_traces,
                    projection: projection_trace,
                });
                cur = out;
            }
            module_traces.push(repeat_traces);
        }

        let (t, y, x, c) = feature_dims(&cur)?;
        let positions = (t * y * x) as f64;
        let mut features = vec![0.0; c];
        for p in 0..t * y * x {
            for ci in 0..c {
                features[ci] += cur.data()[p * c + ci];
            }
        }
        for f in &mut features {
            *f /= positions;
        }

        let k = self.num_classes;
        let mut logits = self.head.bias.clone();
        for (ci, &f) in features.iter().enumerate() {
            let row = &self.head.weight.data()[ci * k..(ci + 1) * k];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += f * w;
            }
        }
        let trace = Trace { stem: stem_trace, modules: module_traces, features, feature_shape: [t, y, x, c] };
        Ok((logits, trace))
    }

    /// Gradients of every parameter slot given the logit gradient, in
    /// [`Network::slot_params`] order.
    pub fn backward(&self, trace: &Trace, grad_logits: &[f64]) -> Result<Vec<Vec<f64>>, TrainerError> {
        let k = self.num_classes;
        assert_eq!(grad_logits.len(), k, "logit gradient length");
        let c = self.feature_channels;

        let mut grad_head = vec![0.0; c * k + k];
        let mut grad_features = vec![0.0; c];
        for ci in 0..c {
            let f = trace.features[ci];
            let row = &self.head.weight.data()[ci * k..(ci + 1) * k];
            let mut back = 0.0;
            for ki in 0..k {
                grad_head[ci * k + ki] = f * grad_logits[ki];
                back += row[ki] * grad_logits[ki];
            }
            grad_features[ci] = back;
        }
        grad_head[c * k..].copy_from_slice(grad_logits);

        // Global average pool backward: spread evenly over positions.
        let [t, y, x, _] = trace.feature_shape;
        let positions = (t * y * x) as f64;
        let mut grad_cur = Tensor::zeros(&[t, y, x, c]);
        for p in 0..t * y * x {
            for ci in 0..c {
                grad_cur.data_mut()[p * c + ci] = grad_features[ci] / positions;
            }
        }

        // Walk modules in reverse, collecting grads in forward slot order.
        let mut module_grads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.modules.len());
        for (module, repeat_traces) in self.modules.iter().zip(&trace.modules).rev() {
            let mut repeats_rev = Vec::with_capacity(module.repeats.len());
            for (repeat, rtrace) in module.repeats.iter().zip(repeat_traces).rev() {
                let mut slot_grads: Vec<Vec<f64>> = Vec::new();
                let mut grad_input = Tensor::zeros(rtrace.input.shape());

                let mut offset = 0;
                for (s_idx, (stream, straces)) in
                    repeat.streams.iter().zip(&rtrace.streams).enumerate()
                {
                    let share = repeat.stream_channels[s_idx];
                    let mut g = slice_channels(&grad_cur, offset, share);
                    offset += share;
                    let mut stream_grads = Vec::with_capacity(stream.len());
                    for (node, ntrace) in stream.iter().zip(straces).rev() {
                        if node.relu {
                            relu_backward_inplace(&mut g, &ntrace.raw);
                        }
                        let (g_in, grads) = node.layer.backward_aux(&ntrace.input, &ntrace.aux, &g)?;
                        stream_grads.push(grads.to_flat());
                        g = g_in;
                    }
                    stream_grads.reverse();
                    slot_grads.extend(stream_grads);
                    add_into(&mut grad_input, &g);
                }

                if repeat.residual {
                    match (&repeat.projection, &rtrace.projection) {
                        (Some(proj), Some(ptrace)) => {
                            let layer = Layer::Conv1x1x1(proj.clone());
                            let (g_in, grads) =
                                layer.backward_aux(&ptrace.input, &ptrace.aux, &grad_cur)?;
                            slot_grads.push(grads.to_flat());
                            add_into(&mut grad_input, &g_in);
                        }
                        (None, None) => add_into(&mut grad_input, &grad_cur),
                        _ => unreachable!("projection trace mismatch"),
                    }
                }

                grad_cur = grad_input;
                repeats_rev.push(slot_grads);
            }
            repeats_rev.reverse();
            module_grads.push(repeats_rev.into_iter().flatten().collect());
        }
        module_grads.reverse();

        let mut stem_grads: Vec<Vec<f64>> = Vec::with_capacity(self.stem.len());
        for (node, ntrace) in self.stem.iter().zip(&trace.stem).rev() {
            if node.relu {
                relu_backward_inplace(&mut grad_cur, &ntrace.raw);
            }
            let (g_in, grads) = node.layer.backward_aux(&ntrace.input, &ntrace.aux, &grad_cur)?;
            stem_grads.push(grads.to_flat());
            grad_cur = g_in;
        }
        stem_grads.reverse();

        let mut all = stem_grads;
        for m in module_grads {
            all.extend(m);
        }
        all.push(grad_head);
        Ok(all)
    }

    /// Visit every parameterized slot in canonical order: stem layers, then
    /// per module / repeat / stream each layer followed by the repeat's
    /// projection, then the classifier head.
    pub fn visit_layers(&self, mut f: impl FnMut(String, &Layer)) {
        for (i, node) in self.stem.iter().enumerate() {
            f(format!("stem.{i}"), &node.layer);
        }
        for (m, module) in self.modules.iter().enumerate() {
            for (r, repeat) in module.repeats.iter().enumerate() {
                for (s, stream) in repeat.streams.iter().enumerate() {
                    for (l, node) in stream.iter().enumerate() {
                        f(format!("modules.{m}.repeat.{r}.stream.{s}.layer.{l}"), &node.layer);
                    }
                }
                if let Some(proj) = &repeat.projection {
                    let layer = Layer::Conv1x1x1(proj.clone());
                    f(format!("modules.{m}.repeat.{r}.project"), &layer);
                }
            }
        }
        let head_layer = Layer::Conv1x1x1(Conv1x1x1 {
            weight: self.head.weight.clone(),
            bias: self.head.bias.clone(),
        });
        f("head".to_string(), &head_layer);
    }

    /// Flat parameters per slot, aligned with [`Network::backward`] output.
    pub fn slot_params(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit_layers(|_, layer| out.push(layer.params_flat()));
        out
    }

    pub fn load_slot_params(&mut self, params: &[Vec<f64>]) -> Result<(), TrainerError> {
        let mut idx = 0;
        let take = |idx: &mut usize| {
            let i = *idx;
            *idx += 1;
            i
        };
        for node in &mut self.stem {
            node.layer
                .load_params_flat(&params[take(&mut idx)])
                .map_err(TrainerError::Kernel)?;
        }
        for module in &mut self.modules {
            for repeat in &mut module.repeats {
                for stream in &mut repeat.streams {
                    for node in stream {
                        node.layer
                            .load_params_flat(&params[take(&mut idx)])
                            .map_err(TrainerError::Kernel)?;
                    }
                }
                if let Some(proj) = &mut repeat.projection {
                    let mut layer = Layer::Conv1x1x1(proj.clone());
                    layer.load_params_flat(&params[take(&mut idx)]).map_err(TrainerError::Kernel)?;
                    if let Layer::Conv1x1x1(p) = layer {
                        *proj = p;
                    }
                }
            }
        }
        let head_slot = &params[take(&mut idx)];
        let expected = self.head.weight.len() + self.head.bias.len();
        if head_slot.len() != expected {
            return Err(TrainerError::Config(format!(
                "head slot expects {expected} values, got {}",
                head_slot.len()
            )));
        }
        let (w, b) = head_slot.split_at(self.head.weight.len());
        self.head.weight.data_mut().copy_from_slice(w);
        self.head.bias.copy_from_slice(b);
        if idx != params.len() {
            return Err(TrainerError::Config(format!(
                "parameter slot count mismatch: loaded {idx}, given {}",
                params.len()
            )));
        }
        Ok(())
    }

    /// Total learnable scalars, biases and head included.
    pub fn param_count(&self) -> u64 {
        let mut total = 0u64;
        self.visit_layers(|_, layer| total += layer.num_params() as u64);
        total
    }

    /// Weight-only count of genome-described layers plus projections; this
    /// must equal [`count_genome_parameters`] for the source genome.
    pub fn genome_weight_count(&self) -> u64 {
        let mut total = 0u64;
        self.visit_layers(|path, layer| {
            if path != "head" {
                let bias = match layer {
                    Layer::Pool(_) => 0,
                    Layer::Conv3d(l) => l.bias.len(),
                    Layer::Conv2Plus1d(l) => l.bias.len(),
                    Layer::Itgm(l) => l.bias.len(),
                    Layer::Conv1x1x1(l) => l.bias.len(),
                };
                total += layer.num_params() as u64 - bias as u64;
            }
        });
        total
    }
}

/// Sanity check used by tests: the built network's weight tensors must agree
/// with the genome-level closed-form count.
pub fn network_matches_genome_count(network: &Network, genome: &Genome) -> bool {
    let input_channels = network.input_channels;
    match count_genome_parameters(genome, input_channels) {
        Ok(expected) => network.genome_weight_count() == expected,
        Err(_) => false,
    }
}
