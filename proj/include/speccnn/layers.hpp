#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "speccnn/tensor.hpp"

namespace speccnn {

enum class LayerKind {
  conv2d,
  maxpool2d,
  dense,
  relu,
  sigmoid,
  softmax,
  flatten,
  lstm,
  convlstm,
  l2norm,
  residual,  // two same-padded convs + identity skip + relu
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int filters = 0;                // conv2d, convlstm, residual
  int kernel_h = 1, kernel_w = 1; // conv2d, maxpool2d, residual; convlstm: (freq, time-width)
  int stride_h = 1, stride_w = 1; // conv2d; maxpool2d stride == kernel
  int pad_h = 0, pad_w = 0;       // conv2d
  int units = 0;                  // dense, lstm
  bool last_step_only = false;    // flatten: keep only the final sequence step
};

LayerSpec conv2d_spec(int filters, int kh, int kw, int sh = 1, int sw = 1, int ph = 0,
                      int pw = 0);
LayerSpec maxpool2d_spec(int kh, int kw);
LayerSpec dense_spec(int units);
LayerSpec relu_spec();
LayerSpec sigmoid_spec();
LayerSpec softmax_spec();
LayerSpec flatten_spec(bool last_step_only = false);
LayerSpec lstm_spec(int units);
LayerSpec convlstm_spec(int filters, int kh, int kw = 1);
LayerSpec l2norm_spec();
LayerSpec residual_spec(int filters, int kh = 3, int kw = 3);

// A layered network with per-layer weight tensors. Weight gradients live in
// Tensor::grad. Sequence tensors are {C, H, T}: recurrent layers step along
// the last axis.
struct ModelGraph {
  std::vector<LayerSpec> layers;
  std::vector<std::vector<Tensor>> weights;  // parallel to layers
  std::vector<int> input_shape;              // {C, H, W}, batch excluded
  uint64_t rng_seed = 0;
  int embed_layer = -1;  // output of this layer is the embedding; -1 = final output

  int64_t parameter_count() const;
};

// Output shape (batch excluded) of one layer; throws on incompatible input.
std::vector<int> layer_output_shape(const LayerSpec& l, const std::vector<int>& in);

// Validates end-to-end shape composition and initializes weights
// (fan-in-scaled uniform; forget-gate biases start at 1).
ModelGraph build_graph(std::vector<LayerSpec> layers, std::vector<int> input_shape,
                       uint64_t seed);

struct LayerTrace {
  Tensor out;
  std::vector<int> argmax;        // maxpool2d
  std::vector<double> row_norms;  // l2norm
  std::vector<Tensor> aux;        // residual: post-relu inner activation
  // lstm: packed {T, B, *}
  Tensor xseq, gates, cells, tanhc, hseq;
  // convlstm: per-step maps in {B, C, 1, H} orientation
  std::vector<Tensor> xs, gate_seq, cell_seq, tanhc_seq, h_seq;
};

struct ForwardTrace {
  Tensor input;
  std::vector<LayerTrace> layers;
};

// Training-mode forward; keeps everything backward needs.
const Tensor& forward(const ModelGraph& g, const Tensor& batch, ForwardTrace& trace);

// Inference-mode forward; recurrent layers keep only rolling state.
Tensor forward(const ModelGraph& g, const Tensor& batch);

// Inference up to and including layer `last_layer` (-1 = all layers).
Tensor forward_until(const ModelGraph& g, const Tensor& batch, int last_layer);

// Backpropagates dout and accumulates weight gradients into Tensor::grad
// (call zero_grads first unless accumulation over branches is intended).
// Returns the gradient with respect to the batch input.
Tensor backward(ModelGraph& g, const ForwardTrace& trace, const Tensor& dout);

void ensure_grads(ModelGraph& g);
void zero_grads(ModelGraph& g);

// One LSTM step. x {B, D}, h/c {B, U}, wx {4U, D}, wh {4U, U}, b {4U}.
// Gate order along the 4U axis: input, forget, candidate, output.
void lstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& wx,
               const Tensor& wh, const Tensor& b, Tensor& h_out, Tensor& c_out,
               Tensor* gates_out = nullptr);

// One ConvLSTM step with same-padded convolutions (odd kernels).
// x {B, Cin, H, W}, h/c {B, C, H, W}, wx {4C, Cin, kh, kw}, wh {4C, C, kh, kw}.
// Gate maps combine with states elementwise.
void convlstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& wx,
                   const Tensor& wh, const Tensor& b, Tensor& h_out, Tensor& c_out,
                   Tensor* gates_out = nullptr);

}  // namespace speccnn
