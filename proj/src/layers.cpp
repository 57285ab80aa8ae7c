#include "speccnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "speccnn/kernels.hpp"
#include "speccnn/rng.hpp"

namespace speccnn {

namespace {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<int> with_batch(int b, const std::vector<int>& s) {
  std::vector<int> out{b};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::vector<int> drop_batch(const std::vector<int>& s) {
  return std::vector<int>(s.begin() + 1, s.end());
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::softmax: return "softmax";
    case LayerKind::flatten: return "flatten";
    case LayerKind::lstm: return "lstm";
    case LayerKind::convlstm: return "convlstm";
    case LayerKind::l2norm: return "l2norm";
    case LayerKind::residual: return "residual";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(LayerKind::residual); ++k) {
    if (s == layer_kind_name(static_cast<LayerKind>(k))) return static_cast<LayerKind>(k);
  }
  throw std::invalid_argument("unknown layer kind: " + s);
}

LayerSpec conv2d_spec(int filters, int kh, int kw, int sh, int sw, int ph, int pw) {
  LayerSpec l;
  l.kind = LayerKind::conv2d;
  l.filters = filters;
  l.kernel_h = kh;
  l.kernel_w = kw;
  l.stride_h = sh;
  l.stride_w = sw;
  l.pad_h = ph;
  l.pad_w = pw;
  return l;
}

LayerSpec maxpool2d_spec(int kh, int kw) {
  LayerSpec l;
  l.kind = LayerKind::maxpool2d;
  l.kernel_h = kh;
  l.kernel_w = kw;
  l.stride_h = kh;
  l.stride_w = kw;
  return l;
}

LayerSpec dense_spec(int units) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.units = units;
  return l;
}

LayerSpec relu_spec() { return LayerSpec{LayerKind::relu}; }
LayerSpec sigmoid_spec() { return LayerSpec{LayerKind::sigmoid}; }
LayerSpec softmax_spec() { return LayerSpec{LayerKind::softmax}; }

LayerSpec flatten_spec(bool last_step_only) {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  l.last_step_only = last_step_only;
  return l;
}

LayerSpec lstm_spec(int units) {
  LayerSpec l;
  l.kind = LayerKind::lstm;
  l.units = units;
  return l;
}

LayerSpec convlstm_spec(int filters, int kh, int kw) {
  LayerSpec l;
  l.kind = LayerKind::convlstm;
  l.filters = filters;
  l.kernel_h = kh;
  l.kernel_w = kw;
  return l;
}

LayerSpec l2norm_spec() { return LayerSpec{LayerKind::l2norm}; }

LayerSpec residual_spec(int filters, int kh, int kw) {
  LayerSpec l;
  l.kind = LayerKind::residual;
  l.filters = filters;
  l.kernel_h = kh;
  l.kernel_w = kw;
  return l;
}

int64_t ModelGraph::parameter_count() const {
  int64_t n = 0;
  for (const auto& lw : weights)
    for (const Tensor& t : lw) n += t.size();
  return n;
}

std::vector<int> layer_output_shape(const LayerSpec& l, const std::vector<int>& in) {
  auto need4 = [&](const char* what) {
    if (in.size() != 3)
      throw std::invalid_argument(std::string(what) + ": expected a {C, H, W} input");
  };
  switch (l.kind) {
    case LayerKind::conv2d: {
      need4("conv2d");
      const int oh = (in[1] + 2 * l.pad_h - l.kernel_h) / l.stride_h + 1;
      const int ow = (in[2] + 2 * l.pad_w - l.kernel_w) / l.stride_w + 1;
      if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: kernel exceeds input");
      return {l.filters, oh, ow};
    }
    case LayerKind::maxpool2d: {
      need4("maxpool2d");
      const int oh = (in[1] - l.kernel_h) / l.kernel_h + 1;
      const int ow = (in[2] - l.kernel_w) / l.kernel_w + 1;
      if (oh <= 0 || ow <= 0) throw std::invalid_argument("maxpool2d: kernel exceeds input");
      return {in[0], oh, ow};
    }
    case LayerKind::dense:
      if (in.size() != 1) throw std::invalid_argument("dense: expected a flat input");
      return {l.units};
    case LayerKind::relu:
    case LayerKind::sigmoid:
      return in;
    case LayerKind::softmax:
      if (in.size() != 1) throw std::invalid_argument("softmax: expected a flat input");
      return in;
    case LayerKind::l2norm:
      if (in.size() != 1) throw std::invalid_argument("l2norm: expected a flat input");
      return in;
    case LayerKind::flatten: {
      if (l.last_step_only) {
        need4("flatten(last step)");
        return {in[0] * in[1]};
      }
      int n = 1;
      for (int d : in) n *= d;
      return {n};
    }
    case LayerKind::lstm:
      need4("lstm");
      return {l.units};
    case LayerKind::convlstm:
      need4("convlstm");
      if (l.kernel_w != 1)
        throw std::invalid_argument("convlstm layer: kernel width along time must be 1");
      if (l.kernel_h % 2 == 0)
        throw std::invalid_argument("convlstm: kernel height must be odd (same padding)");
      return {l.filters, in[1], in[2]};
    case LayerKind::residual:
      need4("residual");
      if (l.filters != in[0])
        throw std::invalid_argument("residual: filter count must match input channels");
      if (l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0)
        throw std::invalid_argument("residual: kernels must be odd (same padding)");
      return in;
  }
  throw std::invalid_argument("unknown layer kind");
}

namespace {

void init_uniform(Tensor& t, Rng& rng, double bound) {
  for (double& v : t.values) v = rng.uniform(-bound, bound);
}

std::vector<Tensor> make_layer_weights(const LayerSpec& l, const std::vector<int>& in,
                                       Rng& rng) {
  switch (l.kind) {
    case LayerKind::conv2d: {
      Tensor w({l.filters, in[0], l.kernel_h, l.kernel_w});
      Tensor b({l.filters});
      init_uniform(w, rng, std::sqrt(1.0 / (in[0] * l.kernel_h * l.kernel_w)));
      return {std::move(w), std::move(b)};
    }
    case LayerKind::dense: {
      Tensor w({l.units, in[0]});
      Tensor b({l.units});
      init_uniform(w, rng, std::sqrt(1.0 / in[0]));
      return {std::move(w), std::move(b)};
    }
    case LayerKind::lstm: {
      const int d = in[0] * in[1];
      const int u = l.units;
      Tensor wx({4 * u, d}), wh({4 * u, u}), b({4 * u});
      init_uniform(wx, rng, std::sqrt(1.0 / d));
      init_uniform(wh, rng, std::sqrt(1.0 / u));
      for (int i = u; i < 2 * u; ++i) b.values[i] = 1.0;  // forget gate open at start
      return {std::move(wx), std::move(wh), std::move(b)};
    }
    case LayerKind::convlstm: {
      // Maps run width-major internally: kernel extent kernel_h lies along
      // the last axis of {4F, C, 1, kh} weights.
      const int f = l.filters, cin = in[0], kh = l.kernel_h;
      Tensor wx({4 * f, cin, 1, kh}), wh({4 * f, f, 1, kh}), b({4 * f});
      init_uniform(wx, rng, std::sqrt(1.0 / (cin * kh)));
      init_uniform(wh, rng, std::sqrt(1.0 / (f * kh)));
      for (int i = f; i < 2 * f; ++i) b.values[i] = 1.0;
      return {std::move(wx), std::move(wh), std::move(b)};
    }
    case LayerKind::residual: {
      const int f = l.filters;
      Tensor w1({f, in[0], l.kernel_h, l.kernel_w}), b1({f});
      Tensor w2({f, f, l.kernel_h, l.kernel_w}), b2({f});
      const double bound = std::sqrt(1.0 / (f * l.kernel_h * l.kernel_w));
      init_uniform(w1, rng, bound);
      init_uniform(w2, rng, bound);
      return {std::move(w1), std::move(b1), std::move(w2), std::move(b2)};
    }
    default:
      return {};
  }
}

}  // namespace

ModelGraph build_graph(std::vector<LayerSpec> layers, std::vector<int> input_shape,
                       uint64_t seed) {
  ModelGraph g;
  g.layers = std::move(layers);
  g.input_shape = std::move(input_shape);
  g.rng_seed = seed;
  Rng rng(seed);
  std::vector<int> shape = g.input_shape;
  for (const LayerSpec& l : g.layers) {
    g.weights.push_back(make_layer_weights(l, shape, rng));
    shape = layer_output_shape(l, shape);
  }
  return g;
}

void ensure_grads(ModelGraph& g) {
  for (auto& lw : g.weights)
    for (Tensor& t : lw) t.ensure_grad();
}

void zero_grads(ModelGraph& g) {
  for (auto& lw : g.weights)
    for (Tensor& t : lw) t.zero_grad();
}

// ---------------------------------------------------------------------------
// Recurrent steps
// ---------------------------------------------------------------------------

void lstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& wx,
               const Tensor& wh, const Tensor& b, Tensor& h_out, Tensor& c_out,
               Tensor* gates_out) {
  const int B = x.shape[0], D = x.shape[1];
  const int U = h.shape[1];
  if (wx.shape[0] != 4 * U || wx.shape[1] != D || wh.shape[0] != 4 * U || wh.shape[1] != U ||
      c.shape != h.shape)
    throw std::invalid_argument("lstm_step: dimension mismatch");
  h_out.shape = {B, U};
  h_out.values.assign(static_cast<size_t>(B) * U, 0.0);
  c_out.shape = {B, U};
  c_out.values.assign(static_cast<size_t>(B) * U, 0.0);
  Tensor local_gates;
  Tensor& gates = gates_out ? *gates_out : local_gates;
  gates.shape = {B, 4 * U};
  gates.values.assign(static_cast<size_t>(B) * 4 * U, 0.0);

#pragma omp parallel for schedule(static) if (B > 1 && static_cast<int64_t>(B) * U * (D + U) > 65536)
  for (int bi = 0; bi < B; ++bi) {
    const double* xb = &x.values[static_cast<size_t>(bi) * D];
    const double* hb = &h.values[static_cast<size_t>(bi) * U];
    const double* cb = &c.values[static_cast<size_t>(bi) * U];
    double* z = &gates.values[static_cast<size_t>(bi) * 4 * U];
    for (int r = 0; r < 4 * U; ++r) {
      const double* wxr = &wx.values[static_cast<size_t>(r) * D];
      const double* whr = &wh.values[static_cast<size_t>(r) * U];
      double acc = b.values[r];
      for (int d = 0; d < D; ++d) acc += wxr[d] * xb[d];
      for (int u = 0; u < U; ++u) acc += whr[u] * hb[u];
      z[r] = acc;
    }
    double* ho = &h_out.values[static_cast<size_t>(bi) * U];
    double* co = &c_out.values[static_cast<size_t>(bi) * U];
    for (int u = 0; u < U; ++u) {
      const double ig = sigmoid(z[u]);
      const double fg = sigmoid(z[U + u]);
      const double gg = std::tanh(z[2 * U + u]);
      const double og = sigmoid(z[3 * U + u]);
      z[u] = ig;
      z[U + u] = fg;
      z[2 * U + u] = gg;
      z[3 * U + u] = og;
      co[u] = fg * cb[u] + ig * gg;
      ho[u] = og * std::tanh(co[u]);
    }
  }
}

void convlstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& wx,
                   const Tensor& wh, const Tensor& b, Tensor& h_out, Tensor& c_out,
                   Tensor* gates_out) {
  const int B = x.shape[0];
  const int C = h.shape[1], H = h.shape[2], W = h.shape[3];
  const int kh = wx.shape[2], kw = wx.shape[3];
  if (wx.shape[0] != 4 * C || wh.shape[0] != 4 * C || wh.shape[1] != C ||
      x.shape[2] != H || x.shape[3] != W || c.shape != h.shape)
    throw std::invalid_argument("convlstm_step: dimension mismatch");
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("convlstm_step: kernels must be odd for same padding");
  const int ph = kh / 2, pw = kw / 2;

  Tensor local_gates;
  Tensor& gates = gates_out ? *gates_out : local_gates;
  gates.shape = {B, 4 * C, H, W};
  gates.values.assign(static_cast<size_t>(B) * 4 * C * H * W, 0.0);
  kernels::conv2d_forward(x, wx, b, 1, 1, ph, pw, gates);
  Tensor zero_bias({4 * C});
  Tensor hg;
  hg.shape = gates.shape;
  hg.values.assign(gates.values.size(), 0.0);
  kernels::conv2d_forward(h, wh, zero_bias, 1, 1, ph, pw, hg);
  for (size_t i = 0; i < gates.values.size(); ++i) gates.values[i] += hg.values[i];

  h_out.shape = {B, C, H, W};
  h_out.values.assign(static_cast<size_t>(B) * C * H * W, 0.0);
  c_out.shape = h_out.shape;
  c_out.values.assign(h_out.values.size(), 0.0);

  const size_t plane = static_cast<size_t>(H) * W;
#pragma omp parallel for schedule(static) if (B > 1 && h_out.size() > 16384)
  for (int bi = 0; bi < B; ++bi) {
    for (int ch = 0; ch < C; ++ch) {
      double* zi = &gates.values[(static_cast<size_t>(bi) * 4 * C + ch) * plane];
      double* zf = &gates.values[(static_cast<size_t>(bi) * 4 * C + C + ch) * plane];
      double* zg = &gates.values[(static_cast<size_t>(bi) * 4 * C + 2 * C + ch) * plane];
      double* zo = &gates.values[(static_cast<size_t>(bi) * 4 * C + 3 * C + ch) * plane];
      const double* cp = &c.values[(static_cast<size_t>(bi) * C + ch) * plane];
      double* co = &c_out.values[(static_cast<size_t>(bi) * C + ch) * plane];
      double* ho = &h_out.values[(static_cast<size_t>(bi) * C + ch) * plane];
      for (size_t i = 0; i < plane; ++i) {
        const double ig = sigmoid(zi[i]);
        const double fg = sigmoid(zf[i]);
        const double gg = std::tanh(zg[i]);
        const double og = sigmoid(zo[i]);
        zi[i] = ig;
        zf[i] = fg;
        zg[i] = gg;
        zo[i] = og;
        co[i] = fg * cp[i] + ig * gg;
        ho[i] = og * std::tanh(co[i]);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Per-layer forward
// ---------------------------------------------------------------------------

namespace {

void maxpool_forward(const LayerSpec& l, const Tensor& in, Tensor& out,
                     std::vector<int>* argmax) {
  const int B = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OH = out.shape[2], OW = out.shape[3];
  if (argmax) argmax->assign(out.values.size(), 0);
#pragma omp parallel for schedule(static) if (B > 1 && out.size() > 16384)
  for (int b = 0; b < B; ++b)
    for (int ch = 0; ch < C; ++ch)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double best = -1e300;
          int best_idx = 0;
          for (int ky = 0; ky < l.kernel_h; ++ky)
            for (int kx = 0; kx < l.kernel_w; ++kx) {
              const int y = oy * l.kernel_h + ky;
              const int x = ox * l.kernel_w + kx;
              const int idx =
                  ((b * C + ch) * H + y) * W + x;
              if (in.values[idx] > best) {
                best = in.values[idx];
                best_idx = idx;
              }
            }
          const int oidx = ((b * C + ch) * OH + oy) * OW + ox;
          out.values[oidx] = best;
          if (argmax) (*argmax)[oidx] = best_idx;
        }
}

// Gathers step t of a {B, C, H, T} sequence into a width-major {B, C, 1, H} map.
void gather_step(const Tensor& in, int t, Tensor& xt) {
  const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
  for (int b = 0; b < B; ++b)
    for (int ch = 0; ch < C; ++ch) {
      const double* src = &in.values[((static_cast<size_t>(b) * C + ch) * H) * T + t];
      double* dst = &xt.values[(static_cast<size_t>(b) * C + ch) * H];
      for (int hh = 0; hh < H; ++hh) dst[hh] = src[static_cast<size_t>(hh) * T];
    }
}

void scatter_step(const Tensor& ht, int t, Tensor& out) {
  const int B = out.shape[0], C = out.shape[1], H = out.shape[2], T = out.shape[3];
  for (int b = 0; b < B; ++b)
    for (int ch = 0; ch < C; ++ch) {
      const double* src = &ht.values[(static_cast<size_t>(b) * C + ch) * H];
      double* dst = &out.values[((static_cast<size_t>(b) * C + ch) * H) * T + t];
      for (int hh = 0; hh < H; ++hh) dst[static_cast<size_t>(hh) * T] = src[hh];
    }
}

void lstm_forward_layer(const LayerSpec& l, const std::vector<Tensor>& w, const Tensor& in,
                        Tensor& out, LayerTrace* tr) {
  const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
  const int D = C * H, U = l.units;
  Tensor xt({B, D}), h({B, U}), c({B, U}), h_next, c_next, gates;
  if (tr) {
    tr->xseq = Tensor({T, B, D});
    tr->gates = Tensor({T, B, 4 * U});
    tr->cells = Tensor({T, B, U});
    tr->tanhc = Tensor({T, B, U});
    tr->hseq = Tensor({T, B, U});
  }
  for (int t = 0; t < T; ++t) {
    for (int b = 0; b < B; ++b)
      for (int ch = 0; ch < C; ++ch)
        for (int hh = 0; hh < H; ++hh)
          xt.values[static_cast<size_t>(b) * D + ch * H + hh] =
              in.values[((static_cast<size_t>(b) * C + ch) * H + hh) * T + t];
    lstm_step(xt, h, c, w[0], w[1], w[2], h_next, c_next, &gates);
    if (tr) {
      std::memcpy(&tr->xseq.values[static_cast<size_t>(t) * B * D], xt.values.data(),
                  sizeof(double) * B * D);
      std::memcpy(&tr->gates.values[static_cast<size_t>(t) * B * 4 * U], gates.values.data(),
                  sizeof(double) * B * 4 * U);
      std::memcpy(&tr->cells.values[static_cast<size_t>(t) * B * U], c_next.values.data(),
                  sizeof(double) * B * U);
      std::memcpy(&tr->hseq.values[static_cast<size_t>(t) * B * U], h_next.values.data(),
                  sizeof(double) * B * U);
      for (int i = 0; i < B * U; ++i)
        tr->tanhc.values[static_cast<size_t>(t) * B * U + i] = std::tanh(c_next.values[i]);
    }
    std::swap(h, h_next);
    std::swap(c, c_next);
  }
  out = std::move(h);
}

void convlstm_forward_layer(const LayerSpec& l, const std::vector<Tensor>& w, const Tensor& in,
                            Tensor& out, LayerTrace* tr) {
  const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
  const int F = l.filters;
  out = Tensor({B, F, H, T});
  Tensor xt({B, C, 1, H});
  Tensor h({B, F, 1, H}), c({B, F, 1, H}), h_next, c_next, gates;
  if (tr) {
    tr->xs.resize(T);
    tr->gate_seq.resize(T);
    tr->cell_seq.resize(T);
    tr->tanhc_seq.resize(T);
    tr->h_seq.resize(T);
  }
  for (int t = 0; t < T; ++t) {
    gather_step(in, t, xt);
    convlstm_step(xt, h, c, w[0], w[1], w[2], h_next, c_next, tr ? &gates : nullptr);
    scatter_step(h_next, t, out);
    if (tr) {
      tr->xs[t] = xt;
      tr->gate_seq[t] = std::move(gates);
      gates = Tensor();
      tr->cell_seq[t] = c_next;
      Tensor tc = tensor_like(c_next);
      tc.shape = c_next.shape;
      for (size_t i = 0; i < c_next.values.size(); ++i)
        tc.values[i] = std::tanh(c_next.values[i]);
      tr->tanhc_seq[t] = std::move(tc);
      tr->h_seq[t] = h_next;
    }
    std::swap(h, h_next);
    std::swap(c, c_next);
  }
}

void run_layer(const ModelGraph& g, size_t i, const Tensor& in, Tensor& out, LayerTrace* tr) {
  const LayerSpec& l = g.layers[i];
  const std::vector<Tensor>& w = g.weights[i];
  const std::vector<int> out_shape =
      with_batch(in.shape[0], layer_output_shape(l, drop_batch(in.shape)));

  switch (l.kind) {
    case LayerKind::conv2d: {
      out = Tensor(out_shape);
      kernels::conv2d_forward(in, w[0], w[1], l.stride_h, l.stride_w, l.pad_h, l.pad_w, out);
      break;
    }
    case LayerKind::maxpool2d: {
      out = Tensor(out_shape);
      maxpool_forward(l, in, out, tr ? &tr->argmax : nullptr);
      break;
    }
    case LayerKind::dense: {
      out = Tensor(out_shape);
      kernels::dense_forward(in, w[0], w[1], out);
      break;
    }
    case LayerKind::relu: {
      out = in;
      for (double& v : out.values) v = v > 0.0 ? v : 0.0;
      break;
    }
    case LayerKind::sigmoid: {
      out = in;
      for (double& v : out.values) v = sigmoid(v);
      break;
    }
    case LayerKind::softmax: {
      out = in;
      const int B = in.shape[0], K = in.shape[1];
      for (int b = 0; b < B; ++b) {
        double* row = &out.values[static_cast<size_t>(b) * K];
        double mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
          row[k] = std::exp(row[k] - mx);
          sum += row[k];
        }
        const double inv = 1.0 / sum;
        for (int k = 0; k < K; ++k) row[k] *= inv;
      }
      break;
    }
    case LayerKind::flatten: {
      out = Tensor(out_shape);
      if (l.last_step_only) {
        const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
        for (int b = 0; b < B; ++b)
          for (int ch = 0; ch < C; ++ch)
            for (int hh = 0; hh < H; ++hh)
              out.values[static_cast<size_t>(b) * C * H + ch * H + hh] =
                  in.values[((static_cast<size_t>(b) * C + ch) * H + hh) * T + (T - 1)];
      } else {
        out.values = in.values;
      }
      break;
    }
    case LayerKind::lstm:
      lstm_forward_layer(l, w, in, out, tr);
      break;
    case LayerKind::convlstm:
      convlstm_forward_layer(l, w, in, out, tr);
      break;
    case LayerKind::l2norm: {
      out = in;
      const int B = in.shape[0], D = in.shape[1];
      if (tr) tr->row_norms.assign(B, 0.0);
      for (int b = 0; b < B; ++b) {
        double* row = &out.values[static_cast<size_t>(b) * D];
        double r2 = 0.0;
        for (int d = 0; d < D; ++d) r2 += row[d] * row[d];
        const double r = std::max(std::sqrt(r2), 1e-12);
        if (tr) tr->row_norms[b] = r;
        const double inv = 1.0 / r;
        for (int d = 0; d < D; ++d) row[d] *= inv;
      }
      break;
    }
    case LayerKind::residual: {
      const int ph = l.kernel_h / 2, pw = l.kernel_w / 2;
      Tensor a1(in.shape);
      kernels::conv2d_forward(in, w[0], w[1], 1, 1, ph, pw, a1);
      for (double& v : a1.values) v = v > 0.0 ? v : 0.0;
      out = Tensor(in.shape);
      kernels::conv2d_forward(a1, w[2], w[3], 1, 1, ph, pw, out);
      for (size_t j = 0; j < out.values.size(); ++j) {
        const double z = out.values[j] + in.values[j];
        out.values[j] = z > 0.0 ? z : 0.0;
      }
      if (tr) tr->aux = {std::move(a1)};
      break;
    }
  }
}

}  // namespace

const Tensor& forward(const ModelGraph& g, const Tensor& batch, ForwardTrace& trace) {
  if (drop_batch(batch.shape) != g.input_shape)
    throw std::invalid_argument("forward: batch shape does not match model input shape");
  trace.input = batch;
  trace.layers.assign(g.layers.size(), {});
  const Tensor* cur = &trace.input;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    run_layer(g, i, *cur, trace.layers[i].out, &trace.layers[i]);
    cur = &trace.layers[i].out;
  }
  return *cur;
}

Tensor forward_until(const ModelGraph& g, const Tensor& batch, int last_layer) {
  if (drop_batch(batch.shape) != g.input_shape)
    throw std::invalid_argument("forward: batch shape does not match model input shape");
  if (last_layer < 0) last_layer = static_cast<int>(g.layers.size()) - 1;
  Tensor cur = batch, next;
  for (int i = 0; i <= last_layer; ++i) {
    run_layer(g, static_cast<size_t>(i), cur, next, nullptr);
    cur = std::move(next);
    next = Tensor();
  }
  return cur;
}

Tensor forward(const ModelGraph& g, const Tensor& batch) { return forward_until(g, batch, -1); }

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

void lstm_backward_layer(const LayerSpec& l, std::vector<Tensor>& w, const Tensor& in,
                         const LayerTrace& tr, const Tensor& dout, Tensor& din) {
  const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
  const int D = C * H, U = l.units;
  const Tensor& wx = w[0];
  const Tensor& wh = w[1];

  Tensor dz({T, B, 4 * U});
  std::vector<double> dh(dout.values.begin(), dout.values.end());
  std::vector<double> dc(static_cast<size_t>(B) * U, 0.0);

  for (int t = T - 1; t >= 0; --t) {
    const double* gates = &tr.gates.values[static_cast<size_t>(t) * B * 4 * U];
    const double* tanhc = &tr.tanhc.values[static_cast<size_t>(t) * B * U];
    const double* cprev =
        t > 0 ? &tr.cells.values[static_cast<size_t>(t - 1) * B * U] : nullptr;
    double* dzt = &dz.values[static_cast<size_t>(t) * B * 4 * U];
#pragma omp parallel for schedule(static) if (B > 1 && B * U > 8192)
    for (int b = 0; b < B; ++b) {
      const double* gb = gates + static_cast<size_t>(b) * 4 * U;
      double* dzb = dzt + static_cast<size_t>(b) * 4 * U;
      for (int u = 0; u < U; ++u) {
        const double ig = gb[u], fg = gb[U + u], gg = gb[2 * U + u], og = gb[3 * U + u];
        const double tc = tanhc[static_cast<size_t>(b) * U + u];
        const double cp = cprev ? cprev[static_cast<size_t>(b) * U + u] : 0.0;
        const double dhv = dh[static_cast<size_t>(b) * U + u];
        const double dov = dhv * tc;
        const double dcv = dc[static_cast<size_t>(b) * U + u] + dhv * og * (1.0 - tc * tc);
        const double div = dcv * gg;
        const double dgv = dcv * ig;
        const double dfv = dcv * cp;
        dzb[u] = div * ig * (1.0 - ig);
        dzb[U + u] = dfv * fg * (1.0 - fg);
        dzb[2 * U + u] = dgv * (1.0 - gg * gg);
        dzb[3 * U + u] = dov * og * (1.0 - og);
        dc[static_cast<size_t>(b) * U + u] = dcv * fg;
      }
    }
    // dh_{t-1} = dz_t * Wh
#pragma omp parallel for schedule(static) if (B > 1 && B * U * 4 * U > 65536)
    for (int b = 0; b < B; ++b) {
      double* dhb = &dh[static_cast<size_t>(b) * U];
      std::fill(dhb, dhb + U, 0.0);
      const double* dzb = dzt + static_cast<size_t>(b) * 4 * U;
      for (int r = 0; r < 4 * U; ++r) {
        const double gv = dzb[r];
        if (gv == 0.0) continue;
        const double* whr = &wh.values[static_cast<size_t>(r) * U];
        for (int u = 0; u < U; ++u) dhb[u] += gv * whr[u];
      }
    }
  }

  // Weight gradients: serial (t, b) sums per row keep results independent of
  // the thread count.
#pragma omp parallel for schedule(static) if (U > 1)
  for (int r = 0; r < 4 * U; ++r) {
    double* dwx = &w[0].grad[static_cast<size_t>(r) * D];
    double* dwh = &w[1].grad[static_cast<size_t>(r) * U];
    double dbr = 0.0;
    for (int t = 0; t < T; ++t) {
      for (int b = 0; b < B; ++b) {
        const double gv = dz.values[(static_cast<size_t>(t) * B + b) * 4 * U + r];
        dbr += gv;
        if (gv == 0.0) continue;
        const double* xb = &tr.xseq.values[(static_cast<size_t>(t) * B + b) * D];
        for (int d = 0; d < D; ++d) dwx[d] += gv * xb[d];
        if (t > 0) {
          const double* hb = &tr.hseq.values[(static_cast<size_t>(t - 1) * B + b) * U];
          for (int u = 0; u < U; ++u) dwh[u] += gv * hb[u];
        }
      }
    }
    w[2].grad[r] += dbr;
  }

  din = tensor_like(in);
  din.shape = in.shape;
#pragma omp parallel for schedule(static) if (B > 1 && static_cast<int64_t>(B) * T * D > 65536)
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const double* dzb = &dz.values[(static_cast<size_t>(t) * B + b) * 4 * U];
      for (int r = 0; r < 4 * U; ++r) {
        const double gv = dzb[r];
        if (gv == 0.0) continue;
        const double* wxr = &wx.values[static_cast<size_t>(r) * D];
        for (int d = 0; d < D; ++d) {
          const int ch = d / H, hh = d % H;
          din.values[((static_cast<size_t>(b) * C + ch) * H + hh) * T + t] += gv * wxr[d];
        }
      }
    }
  }
}

void convlstm_backward_layer(const LayerSpec& l, std::vector<Tensor>& w, const Tensor& in,
                             const LayerTrace& tr, const Tensor& dout, Tensor& din) {
  const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
  const int F = l.filters;
  const int kh = 1, kw = l.kernel_h;  // width-major internal maps
  const int ph = 0, pw = l.kernel_h / 2;
  const size_t plane = static_cast<size_t>(H);

  Tensor dh({B, F, 1, H}), dc({B, F, 1, H}), dz({B, 4 * F, 1, H});
  Tensor dxt({B, C, 1, H}), dh_rec({B, F, 1, H});
  Tensor zeros_h({B, F, 1, H});
  std::vector<double> db_dummy(static_cast<size_t>(4) * F, 0.0);

  din = tensor_like(in);
  din.shape = in.shape;

  for (int t = T - 1; t >= 0; --t) {
    // Upstream slice plus the recurrent term.
    gather_step(dout, t, dh);
    for (size_t i = 0; i < dh.values.size(); ++i) dh.values[i] += dh_rec.values[i];

    const Tensor& gates = tr.gate_seq[t];
    const Tensor& tanhc = tr.tanhc_seq[t];
    const Tensor* cprev = t > 0 ? &tr.cell_seq[t - 1] : nullptr;
#pragma omp parallel for schedule(static) if (B > 1 && dh.size() > 16384)
    for (int b = 0; b < B; ++b) {
      for (int f = 0; f < F; ++f) {
        const double* gi = &gates.values[(static_cast<size_t>(b) * 4 * F + f) * plane];
        const double* gf = &gates.values[(static_cast<size_t>(b) * 4 * F + F + f) * plane];
        const double* gg = &gates.values[(static_cast<size_t>(b) * 4 * F + 2 * F + f) * plane];
        const double* go = &gates.values[(static_cast<size_t>(b) * 4 * F + 3 * F + f) * plane];
        const double* tc = &tanhc.values[(static_cast<size_t>(b) * F + f) * plane];
        const double* cp = cprev ? &cprev->values[(static_cast<size_t>(b) * F + f) * plane] : nullptr;
        double* dhv = &dh.values[(static_cast<size_t>(b) * F + f) * plane];
        double* dcv = &dc.values[(static_cast<size_t>(b) * F + f) * plane];
        double* dzi = &dz.values[(static_cast<size_t>(b) * 4 * F + f) * plane];
        double* dzf = &dz.values[(static_cast<size_t>(b) * 4 * F + F + f) * plane];
        double* dzg = &dz.values[(static_cast<size_t>(b) * 4 * F + 2 * F + f) * plane];
        double* dzo = &dz.values[(static_cast<size_t>(b) * 4 * F + 3 * F + f) * plane];
        for (size_t i = 0; i < plane; ++i) {
          const double dov = dhv[i] * tc[i];
          const double dct = dcv[i] + dhv[i] * go[i] * (1.0 - tc[i] * tc[i]);
          const double div = dct * gg[i];
          const double dgv = dct * gi[i];
          const double dfv = dct * (cp ? cp[i] : 0.0);
          dzi[i] = div * gi[i] * (1.0 - gi[i]);
          dzf[i] = dfv * gf[i] * (1.0 - gf[i]);
          dzg[i] = dgv * (1.0 - gg[i] * gg[i]);
          dzo[i] = dov * go[i] * (1.0 - go[i]);
          dcv[i] = dct * gf[i];
        }
      }
    }

    kernels::conv2d_backward_weights(dz, tr.xs[t], kh, kw, 1, 1, ph, pw, w[0].grad, w[2].grad);
    const Tensor& hprev = t > 0 ? tr.h_seq[t - 1] : zeros_h;
    kernels::conv2d_backward_weights(dz, hprev, kh, kw, 1, 1, ph, pw, w[1].grad, db_dummy);
    kernels::conv2d_backward_input(dz, w[0], 1, 1, ph, pw, dxt);
    kernels::conv2d_backward_input(dz, w[1], 1, 1, ph, pw, dh_rec);
    scatter_step(dxt, t, din);
  }
}

void backward_layer(ModelGraph& g, size_t i, const Tensor& in, const LayerTrace& tr,
                    const Tensor& dout, Tensor& din) {
  const LayerSpec& l = g.layers[i];
  std::vector<Tensor>& w = g.weights[i];

  switch (l.kind) {
    case LayerKind::conv2d: {
      din = tensor_like(in);
      kernels::conv2d_backward_weights(dout, in, l.kernel_h, l.kernel_w, l.stride_h,
                                       l.stride_w, l.pad_h, l.pad_w, w[0].grad, w[1].grad);
      kernels::conv2d_backward_input(dout, w[0], l.stride_h, l.stride_w, l.pad_h, l.pad_w,
                                     din);
      break;
    }
    case LayerKind::maxpool2d: {
      din = tensor_like(in);
      for (size_t j = 0; j < dout.values.size(); ++j)
        din.values[tr.argmax[j]] += dout.values[j];
      break;
    }
    case LayerKind::dense: {
      din = tensor_like(in);
      kernels::dense_backward_weights(dout, in, w[0].grad, w[1].grad);
      kernels::dense_backward_input(dout, w[0], din);
      break;
    }
    case LayerKind::relu: {
      din = dout;
      for (size_t j = 0; j < din.values.size(); ++j)
        if (tr.out.values[j] <= 0.0) din.values[j] = 0.0;
      break;
    }
    case LayerKind::sigmoid: {
      din = dout;
      for (size_t j = 0; j < din.values.size(); ++j) {
        const double y = tr.out.values[j];
        din.values[j] *= y * (1.0 - y);
      }
      break;
    }
    case LayerKind::softmax: {
      din = dout;
      const int B = dout.shape[0], K = dout.shape[1];
      for (int b = 0; b < B; ++b) {
        const double* y = &tr.out.values[static_cast<size_t>(b) * K];
        double* d = &din.values[static_cast<size_t>(b) * K];
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += d[k] * y[k];
        for (int k = 0; k < K; ++k) d[k] = y[k] * (d[k] - dot);
      }
      break;
    }
    case LayerKind::flatten: {
      din = tensor_like(in);
      if (l.last_step_only) {
        const int B = in.shape[0], C = in.shape[1], H = in.shape[2], T = in.shape[3];
        for (int b = 0; b < B; ++b)
          for (int ch = 0; ch < C; ++ch)
            for (int hh = 0; hh < H; ++hh)
              din.values[((static_cast<size_t>(b) * C + ch) * H + hh) * T + (T - 1)] =
                  dout.values[static_cast<size_t>(b) * C * H + ch * H + hh];
      } else {
        din.values = dout.values;
      }
      break;
    }
    case LayerKind::lstm:
      lstm_backward_layer(l, w, in, tr, dout, din);
      break;
    case LayerKind::convlstm:
      convlstm_backward_layer(l, w, in, tr, dout, din);
      break;
    case LayerKind::l2norm: {
      din = dout;
      const int B = dout.shape[0], D = dout.shape[1];
      for (int b = 0; b < B; ++b) {
        const double* y = &tr.out.values[static_cast<size_t>(b) * D];
        double* d = &din.values[static_cast<size_t>(b) * D];
        double dot = 0.0;
        for (int k = 0; k < D; ++k) dot += d[k] * y[k];
        const double inv = 1.0 / tr.row_norms[b];
        for (int k = 0; k < D; ++k) d[k] = (d[k] - dot * y[k]) * inv;
      }
      break;
    }
    case LayerKind::residual: {
      const int ph = l.kernel_h / 2, pw = l.kernel_w / 2;
      const Tensor& a1 = tr.aux[0];
      Tensor dz = dout;
      for (size_t j = 0; j < dz.values.size(); ++j)
        if (tr.out.values[j] <= 0.0) dz.values[j] = 0.0;
      Tensor da1 = tensor_like(a1);
      kernels::conv2d_backward_weights(dz, a1, l.kernel_h, l.kernel_w, 1, 1, ph, pw,
                                       w[2].grad, w[3].grad);
      kernels::conv2d_backward_input(dz, w[2], 1, 1, ph, pw, da1);
      for (size_t j = 0; j < da1.values.size(); ++j)
        if (a1.values[j] <= 0.0) da1.values[j] = 0.0;
      din = tensor_like(in);
      kernels::conv2d_backward_weights(da1, in, l.kernel_h, l.kernel_w, 1, 1, ph, pw,
                                       w[0].grad, w[1].grad);
      kernels::conv2d_backward_input(da1, w[0], 1, 1, ph, pw, din);
      for (size_t j = 0; j < din.values.size(); ++j) din.values[j] += dz.values[j];
      break;
    }
  }
}

}  // namespace

Tensor backward(ModelGraph& g, const ForwardTrace& trace, const Tensor& dout) {
  if (trace.layers.size() != g.layers.size())
    throw std::invalid_argument("backward: trace does not match model");
  if (dout.shape != trace.layers.back().out.shape)
    throw std::invalid_argument("backward: dout shape mismatch");
  ensure_grads(g);
  Tensor cur = dout, din;
  for (int i = static_cast<int>(g.layers.size()) - 1; i >= 0; --i) {
    const Tensor& in = i == 0 ? trace.input : trace.layers[i - 1].out;
    backward_layer(g, static_cast<size_t>(i), in, trace.layers[i], cur, din);
    cur = std::move(din);
    din = Tensor();
  }
  return cur;
}

}  // namespace speccnn
