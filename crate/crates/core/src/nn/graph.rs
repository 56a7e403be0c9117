use super::layers::{Cache, Layer, LayerKind, Mode};
use super::{NnError, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub name: String,
    pub layer: Layer<T>,
    /// Indices of earlier nodes feeding this one.
    pub inputs: Vec<usize>,
}

/// Directed acyclic layer graph. Node 0 is the input; the last node is the output.
/// Nodes may only consume earlier nodes, so insertion order is a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    nodes: Vec<Node<T>>,
    frozen: Vec<bool>,
}

/// Every node output plus the values the backward pass needs.
pub struct Trace<T> {
    pub outputs: Vec<Tensor<T>>,
    pub caches: Vec<Cache<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("trace of an empty network")
    }
}

/// Parameter gradients per node (empty for parameterless or frozen nodes) and,
/// when requested, the gradient with respect to the network input.
pub struct Gradients<T> {
    pub params: Vec<Vec<Tensor<T>>>,
    pub input: Option<Tensor<T>>,
}

/// Per-node shapes from static inference, or the first node that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub shapes: Vec<(String, Vec<usize>)>,
    pub error: Option<(String, String)>,
}

impl ShapeTrace {
    pub fn final_shape(&self) -> Option<&[usize]> {
        if self.error.is_some() {
            return None;
        }
        self.shapes.last().map(|(_, s)| s.as_slice())
    }
}

impl<T: Scalar> Network<T> {
    /// `input_shape` excludes the batch axis.
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            nodes: vec![Node { name: "input".into(), layer: Layer::Input(input_shape), inputs: Vec::new() }],
            frozen: vec![false],
        }
    }

    pub fn add(&mut self, name: impl Into<String>, layer: Layer<T>, inputs: &[usize]) -> Result<usize, NnError> {
        let name = name.into();
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(NnError::Graph(format!("duplicate node name {name:?}")));
        }
        if matches!(layer, Layer::Input(_)) {
            return Err(NnError::Graph("only node 0 may be an input".into()));
        }
        if inputs.is_empty() || inputs.iter().any(|&i| i >= self.nodes.len()) {
            return Err(NnError::Graph(format!("node {name:?} has invalid inputs {inputs:?}")));
        }
        self.nodes.push(Node { name, layer, inputs: inputs.to_vec() });
        self.frozen.push(false);
        Ok(self.nodes.len() - 1)
    }

    /// Appends a node fed by the current last node.
    pub fn push(&mut self, name: impl Into<String>, layer: Layer<T>) -> Result<usize, NnError> {
        let last = self.nodes.len() - 1;
        self.add(name, layer, &[last])
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn node_mut(&mut self, index: usize) -> &mut Node<T> {
        &mut self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn input_shape(&self) -> &[usize] {
        match &self.nodes[0].layer {
            Layer::Input(s) => s,
            _ => unreachable!("node 0 is always the input"),
        }
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen[index]
    }

    pub fn set_frozen(&mut self, index: usize, frozen: bool) {
        self.frozen[index] = frozen;
    }

    /// `(node, slot, tensor)` for every parameter of a non-frozen node.
    pub fn trainable_params_mut(&mut self) -> Vec<(usize, usize, &mut Tensor<T>)> {
        let frozen = &self.frozen;
        self.nodes
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| !frozen[*i])
            .flat_map(|(i, n)| n.layer.params_mut().into_iter().enumerate().map(move |(s, p)| (i, s, p)))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.layer.param_count()).sum()
    }

    /// Static shape inference for a batch of `batch` samples.
    pub fn shape_trace(&self, batch: usize) -> ShapeTrace {
        let full: Vec<usize> = [batch].iter().chain(self.input_shape()).copied().collect();
        self.shape_trace_for(&full)
    }

    /// Static shape inference for an arbitrary full input shape (batch axis included).
    pub fn shape_trace_for(&self, input: &[usize]) -> ShapeTrace {
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let result = match &node.layer {
                Layer::Input(_) => Ok(input.to_vec()),
                layer => {
                    let ins: Vec<&[usize]> = node.inputs.iter().map(|&i| shapes[i].1.as_slice()).collect();
                    layer.output_shape(&ins)
                }
            };
            match result {
                Ok(s) if s.iter().all(|&d| d > 0) => shapes.push((node.name.clone(), s)),
                Ok(s) => {
                    return ShapeTrace {
                        shapes,
                        error: Some((node.name.clone(), format!("non-positive dimension in {s:?}"))),
                    }
                }
                Err(e) => return ShapeTrace { shapes, error: Some((node.name.clone(), e.to_string())) },
            }
        }
        ShapeTrace { shapes, error: None }
    }

    /// Runs every node. Frozen batchnorm layers use their running statistics even in training.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, step: u64) -> Result<Trace<T>, NnError> {
        let expected = self.input_shape();
        if x.shape().len() != expected.len() + 1 || &x.shape()[1..] != expected {
            return Err(NnError::Shape(format!("network expects [N,{expected:?}], got {:?}", x.shape())));
        }
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        outputs.push(x.clone());
        caches.push(Cache::None);
        for i in 1..self.nodes.len() {
            let node_mode = if self.frozen[i] && self.nodes[i].layer.kind() == LayerKind::BatchNorm {
                Mode::Eval
            } else {
                mode
            };
            let node = &mut self.nodes[i];
            let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&j| &outputs[j]).collect();
            let (out, cache) = node
                .layer
                .forward(&ins, node_mode, step, i)
                .map_err(|e| NnError::Graph(format!("node {:?}: {e}", node.name)))?;
            outputs.push(out);
            caches.push(cache);
        }
        Ok(Trace { outputs, caches })
    }

    /// Convenience forward that returns only the final output.
    pub fn predict(&mut self, x: &Tensor<T>, mode: Mode, step: u64) -> Result<Tensor<T>, NnError> {
        let mut trace = self.forward(x, mode, step)?;
        Ok(trace.outputs.pop().expect("network has at least one node"))
    }

    /// Backpropagates `grad_out` (gradient of the loss w.r.t. the final output).
    ///
    /// Frozen nodes get no parameter gradients. Unless `want_input_grad` is set, propagation
    /// stops below the first trainable node.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &Tensor<T>, want_input_grad: bool) -> Result<Gradients<T>, NnError> {
        let n = self.nodes.len();
        let stop = if want_input_grad { 0 } else { self.frozen.iter().position(|&f| !f).unwrap_or(n) };
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[n - 1] = Some(grad_out.clone());
        let mut params: Vec<Vec<Tensor<T>>> = vec![Vec::new(); n];
        let mut input_grad = None;
        for i in (stop.max(1)..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&j| &trace.outputs[j]).collect();
            let need_input = node.inputs.iter().any(|&j| j >= stop);
            let need_params = !self.frozen[i];
            let lg = node
                .layer
                .backward(&ins, &trace.outputs[i], &trace.caches[i], &g, need_input, need_params)
                .map_err(|e| NnError::Graph(format!("node {:?}: {e}", node.name)))?;
            if need_params {
                params[i] = lg.params;
            }
            for (&j, dx) in node.inputs.iter().zip(lg.inputs) {
                let Some(dx) = dx else { continue };
                if j < stop {
                    continue;
                }
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&dx)?,
                    slot => *slot = Some(dx),
                }
            }
        }
        if want_input_grad {
            input_grad = grads[0].take();
        }
        Ok(Gradients { params, input: input_grad })
    }

    /// Casts every parameter and buffer to another element type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { name: n.name.clone(), layer: cast_layer(&n.layer), inputs: n.inputs.clone() })
            .collect();
        Network { nodes, frozen: self.frozen.clone() }
    }
}

fn cast_layer<T: Scalar, U: Scalar>(layer: &Layer<T>) -> Layer<U> {
    use super::conv::Conv2d;
    use super::layers::{BatchNorm, Dense};
    match layer {
        Layer::Input(s) => Layer::Input(s.clone()),
        Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            stride: c.stride,
            padding: c.padding,
            weight: c.weight.cast(),
            bias: c.bias.as_ref().map(Tensor::cast),
        }),
        Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
            channels: b.channels,
            gamma: b.gamma.cast(),
            beta: b.beta.cast(),
            running_mean: b.running_mean.cast(),
            running_var: b.running_var.cast(),
            epsilon: b.epsilon,
            momentum: b.momentum,
        }),
        Layer::Dense(d) => Layer::Dense(Dense {
            in_features: d.in_features,
            out_features: d.out_features,
            weight: d.weight.cast(),
            bias: d.bias.cast(),
        }),
        Layer::MaxPool(p) => Layer::MaxPool(*p),
        Layer::AvgPool(p) => Layer::AvgPool(*p),
        Layer::GlobalAvgPool => Layer::GlobalAvgPool,
        Layer::Relu => Layer::Relu,
        Layer::Dropout(d) => Layer::Dropout(*d),
        Layer::Softmax => Layer::Softmax,
        Layer::Concat => Layer::Concat,
        Layer::ResidualScaleAdd { scale } => Layer::ResidualScaleAdd { scale: *scale },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Dense;

    #[test]
    fn rejects_bad_edges_and_duplicates() {
        let mut net = Network::<f64>::new(vec![3]);
        assert!(net.add("a", Layer::Relu, &[1]).is_err());
        net.push("a", Layer::Relu).unwrap();
        assert!(net.push("a", Layer::Relu).is_err());
        assert!(net.push("in2", Layer::Input(vec![3])).is_err());
    }

    #[test]
    fn shared_input_gradients_accumulate() {
        // y = x + 1.0 * x  =>  dy/dx = 2
        let mut net = Network::<f64>::new(vec![2]);
        net.add("sum", Layer::ResidualScaleAdd { scale: 1.0 }, &[0, 0]).unwrap();
        let x = Tensor::from_f64(vec![1, 2], &[0.5, -1.0]).unwrap();
        let trace = net.forward(&x, Mode::Train, 0).unwrap();
        let g = net.backward(&trace, &Tensor::filled(&[1, 2], 1.0), true).unwrap();
        assert_eq!(g.input.unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn shape_trace_reports_first_failure() {
        let mut net = Network::<f64>::new(vec![4]);
        net.push("fc", Layer::Dense(Dense::new(4, 2))).unwrap();
        net.push("fc2", Layer::Dense(Dense::new(3, 2))).unwrap();
        let trace = net.shape_trace(5);
        assert_eq!(trace.shapes.len(), 2);
        assert_eq!(trace.shapes[1].1, vec![5, 2]);
        assert_eq!(trace.error.as_ref().unwrap().0, "fc2");
        assert!(trace.final_shape().is_none());
    }
}
