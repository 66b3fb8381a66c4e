#include "siamret/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "siamret/error.hpp"
#include "siamret/rng.hpp"

namespace siamret {

struct TapeAccess {
  static Tape make(const Net& net, NetInput input) {
    Tape t;
    t.net_ = &net;
    t.input_ = std::move(input);
    return t;
  }
  static const Net& net(const Tape& t) { return *t.net_; }
  static const NetInput& input(const Tape& t) { return t.input_; }
  static std::vector<double>& pre1(Tape& t) { return t.pre1_; }
  static std::vector<double>& post1(Tape& t) { return t.post1_; }
  static std::size_t& positions(Tape& t) { return t.positions_; }
  static bool& consumed(Tape& t) { return t.consumed_; }
};

std::string_view to_string(NetKind kind) { return kind == NetKind::bag ? "bag" : "sequence"; }

NetKind parse_net_kind(std::string_view text) {
  if (text == "bag") return NetKind::bag;
  if (text == "sequence") return NetKind::sequence;
  fail(ErrorCode::invalid_argument, "unknown net kind '" + std::string(text) + "'");
}

void NetSpec::validate() const {
  if (input_dim == 0) fail(ErrorCode::config, "net input_dim must be positive");
  if (n_emb == 0) fail(ErrorCode::config, "net n_emb must be positive");
  if (kind == NetKind::sequence) {
    if (window == 0 || word_dim == 0 || kernel_count == 0)
      fail(ErrorCode::config, "sequence nets need window, word_dim and kernel_count >= 1");
    if (n_hu != 0) fail(ErrorCode::config, "sequence nets have no hidden layer (n_hu must be 0)");
  }
}

std::size_t NetSpec::first_layer_width() const {
  if (kind == NetKind::sequence) return word_dim;
  return n_hu > 0 ? n_hu : n_emb;
}

Net::Net(NetSpec spec) : spec_(spec) {
  spec_.validate();
  if (spec_.kind == NetKind::bag) {
    const std::size_t h1 = spec_.first_layer_width();
    params_.emplace_back("W1", spec_.input_dim, h1);
    params_.emplace_back("b1", 1, h1);
    if (spec_.n_hu > 0) {
      params_.emplace_back("W2", spec_.n_hu, spec_.n_emb);
      params_.emplace_back("b2", 1, spec_.n_emb);
    }
  } else {
    params_.emplace_back("lookup", spec_.input_dim, spec_.word_dim);
    params_.emplace_back("conv_W", spec_.window * spec_.word_dim, spec_.kernel_count);
    params_.emplace_back("conv_b", 1, spec_.kernel_count);
    params_.emplace_back("out_W", spec_.kernel_count, spec_.n_emb);
    params_.emplace_back("out_b", 1, spec_.n_emb);
  }
}

Tensor& Net::param(std::string_view name) {
  for (auto& t : params_)
    if (t.name == name) return t;
  fail(ErrorCode::not_found, "no parameter named '" + std::string(name) + "'");
}

const Tensor& Net::param(std::string_view name) const { return const_cast<Net&>(*this).param(name); }

Net init_net(const NetSpec& spec, std::uint64_t seed, const PretrainedEmbeddings* pretrained,
             const Vocabulary* vocab) {
  Net net(spec);
  if (pretrained) {
    if (!vocab) fail(ErrorCode::invalid_argument, "pretrained initialization needs a vocabulary");
    if (pretrained->dim != spec.first_layer_width())
      fail(ErrorCode::mismatch, "pretrained embedding dim " + std::to_string(pretrained->dim) +
                                    " does not match first layer width " +
                                    std::to_string(spec.first_layer_width()));
  }
  Rng rng(seed);
  for (auto& t : net.params()) {
    if (t.rows == 1) continue;  // biases start at zero
    const double a = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    for (auto& w : t.data) w = rng.uniform(-a, a);
  }
  if (pretrained) {
    Tensor& first = net.params().front();
    const std::size_t n = std::min(first.rows, vocab->size());
    for (std::size_t i = 0; i < n; ++i) {
      auto it = pretrained->vectors.find(vocab->term(i));
      if (it == pretrained->vectors.end()) continue;
      std::copy(it->second.begin(), it->second.end(), first.row(i).begin());
    }
  }
  return net;
}

void Gradients::accumulate(const Gradients& other) {
  if (params.empty()) {
    params = other.params;
    return;
  }
  if (other.params.size() != params.size()) fail(ErrorCode::mismatch, "gradient sets differ in size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamGrad& dst = params[i];
    const ParamGrad& src = other.params[i];
    if (dst.sparse && src.sparse) {
      dst.rows.insert(dst.rows.end(), src.rows.begin(), src.rows.end());
      dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
    } else if (!dst.sparse && !src.sparse) {
      for (std::size_t k = 0; k < dst.values.size(); ++k) dst.values[k] += src.values[k];
    } else {
      const ParamGrad& sp = dst.sparse ? dst : src;
      ParamGrad merged = dst.sparse ? src : dst;
      for (std::size_t r = 0; r < sp.rows.size(); ++r)
        for (std::size_t c = 0; c < sp.cols; ++c) merged.values[sp.rows[r] * sp.cols + c] += sp.values[r * sp.cols + c];
      dst = std::move(merged);
    }
  }
}

std::vector<double> Gradients::dense(std::size_t i, const Net& net) const {
  const Tensor& t = net.params().at(i);
  const ParamGrad& g = params.at(i);
  if (!g.sparse) return g.values;
  std::vector<double> out(t.data.size(), 0.0);
  for (std::size_t r = 0; r < g.rows.size(); ++r)
    for (std::size_t c = 0; c < g.cols; ++c) out[g.rows[r] * g.cols + c] += g.values[r * g.cols + c];
  return out;
}

namespace {

void relu_inplace(std::vector<double>& v) {
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

// out = bias + in * W  (in: 1 x rows, W: rows x cols)
std::vector<double> affine(std::span<const double> in, const Tensor& w, const Tensor& b) {
  std::vector<double> out(b.data);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double x = in[r];
    if (x == 0.0) continue;
    auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += x * row[c];
  }
  return out;
}

// Hidden layer (if any) and output for the bag kind, given the first-layer
// pre-activation.
std::vector<double> bag_head(const Net& net, Tape& tape) {
  auto& pre1 = TapeAccess::pre1(tape);
  if (net.spec().n_hu == 0) return pre1;
  auto& post1 = TapeAccess::post1(tape);
  post1 = pre1;
  relu_inplace(post1);
  return affine(post1, net.params()[2], net.params()[3]);
}

void check_bag(const Net& net) {
  if (net.spec().kind != NetKind::bag) fail(ErrorCode::invalid_argument, "vector input given to a sequence net");
}

ParamGrad dense_grad(std::size_t rows, std::size_t cols) {
  return ParamGrad{false, cols, {}, std::vector<double>(rows * cols, 0.0)};
}

// Sum over positions of the word vector seen at each window offset.
std::vector<double> offset_sums(const Net& net, const std::vector<std::uint32_t>& ids, std::size_t positions) {
  const auto& spec = net.spec();
  const Tensor& lookup = net.params()[0];
  std::vector<double> sums(spec.window * spec.word_dim, 0.0);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t o = 0; o < spec.window; ++o) {
      const std::size_t q = p + o;
      if (q >= ids.size()) break;  // zero padding
      auto row = lookup.row(ids[q]);
      for (std::size_t m = 0; m < spec.word_dim; ++m) sums[o * spec.word_dim + m] += row[m];
    }
  return sums;
}

}  // namespace

ForwardResult forward(const Net& net, const SparseVector& input) {
  check_bag(net);
  const Tensor& w1 = net.params()[0];
  if (input.indices.size() != input.values.size()) fail(ErrorCode::invalid_argument, "sparse vector size mismatch");
  for (auto idx : input.indices)
    if (idx >= w1.rows) fail(ErrorCode::invalid_argument, "sparse index out of range for net input");
  ForwardResult res{{}, TapeAccess::make(net, input)};
  auto& pre1 = TapeAccess::pre1(res.tape);
  pre1 = net.params()[1].data;
  for (std::size_t k = 0; k < input.indices.size(); ++k) {
    const double x = input.values[k];
    auto row = w1.row(input.indices[k]);
    for (std::size_t c = 0; c < w1.cols; ++c) pre1[c] += x * row[c];
  }
  res.embedding = bag_head(net, res.tape);
  return res;
}

ForwardResult forward(const Net& net, std::span<const double> input) {
  check_bag(net);
  if (input.size() != net.spec().input_dim)
    fail(ErrorCode::invalid_argument, "dense input has length " + std::to_string(input.size()) +
                                          ", net expects " + std::to_string(net.spec().input_dim));
  ForwardResult res{{}, TapeAccess::make(net, std::vector<double>(input.begin(), input.end()))};
  TapeAccess::pre1(res.tape) = affine(input, net.params()[0], net.params()[1]);
  res.embedding = bag_head(net, res.tape);
  return res;
}

ForwardResult forward(const Net& net, const std::vector<double>& input) {
  return forward(net, std::span<const double>(input));
}

ForwardResult forward(const Net& net, const TokenSequence& input) {
  const auto& spec = net.spec();
  if (spec.kind != NetKind::sequence) fail(ErrorCode::invalid_argument, "token sequence given to a bag net");
  if (input.ids.empty()) fail(ErrorCode::empty_input, "empty token sequence");
  for (auto id : input.ids)
    if (id >= spec.input_dim) fail(ErrorCode::invalid_argument, "token id out of range for lookup table");
  ForwardResult res{{}, TapeAccess::make(net, input)};
  const std::size_t positions = input.ids.size() >= spec.window ? input.ids.size() - spec.window + 1 : 1;
  TapeAccess::positions(res.tape) = positions;

  const auto sums = offset_sums(net, input.ids, positions);
  const Tensor& conv_w = net.params()[1];
  auto& mean = TapeAccess::pre1(res.tape);
  mean.assign(spec.kernel_count, 0.0);
  for (std::size_t r = 0; r < conv_w.rows; ++r) {
    const double s = sums[r];
    if (s == 0.0) continue;
    auto row = conv_w.row(r);
    for (std::size_t k = 0; k < spec.kernel_count; ++k) mean[k] += s * row[k];
  }
  const auto& conv_b = net.params()[2].data;
  const double inv_p = 1.0 / static_cast<double>(positions);
  for (std::size_t k = 0; k < spec.kernel_count; ++k) mean[k] = mean[k] * inv_p + conv_b[k];

  auto& post = TapeAccess::post1(res.tape);
  post = mean;
  relu_inplace(post);
  res.embedding = affine(post, net.params()[3], net.params()[4]);
  return res;
}

ForwardResult forward(const Net& net, const NetInput& input) {
  return std::visit(
      [&](const auto& in) -> ForwardResult {
        return forward(net, in);
      },
      input);
}

std::vector<double> embed(const Net& net, const NetInput& input) { return forward(net, input).embedding; }

BackwardResult backward(Tape& tape, std::span<const double> grad_out) {
  if (TapeAccess::consumed(tape)) fail(ErrorCode::tape_reuse, "tape already consumed by backward()");
  TapeAccess::consumed(tape) = true;
  const Net& net = TapeAccess::net(tape);
  const auto& spec = net.spec();
  const auto& params = net.params();
  if (grad_out.size() != spec.n_emb) fail(ErrorCode::invalid_argument, "grad_out length differs from n_emb");
  for (double g : grad_out)
    if (!std::isfinite(g)) fail(ErrorCode::numeric, "non-finite grad_out");

  BackwardResult res;
  auto& grads = res.grads.params;
  grads.resize(params.size());

  // Gradient arriving at a hidden vector h feeding out = h * W + b.
  auto through_output = [&](const std::vector<double>& h, std::size_t w_idx) {
    const Tensor& w = params[w_idx];
    grads[w_idx] = dense_grad(w.rows, w.cols);
    grads[w_idx + 1] = ParamGrad{false, w.cols, {}, std::vector<double>(grad_out.begin(), grad_out.end())};
    std::vector<double> g_h(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      auto row = w.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < w.cols; ++c) {
        grads[w_idx].values[r * w.cols + c] = h[r] * grad_out[c];
        acc += row[c] * grad_out[c];
      }
      g_h[r] = acc;
    }
    return g_h;
  };

  if (spec.kind == NetKind::bag) {
    std::vector<double> g_pre(grad_out.begin(), grad_out.end());
    if (spec.n_hu > 0) {
      g_pre = through_output(TapeAccess::post1(tape), 2);
      const auto& pre1 = TapeAccess::pre1(tape);
      for (std::size_t i = 0; i < g_pre.size(); ++i)
        if (!(pre1[i] > 0.0)) g_pre[i] = 0.0;
    }
    const Tensor& w1 = params[0];
    const std::size_t h1 = w1.cols;
    grads[1] = ParamGrad{false, h1, {}, g_pre};
    const auto& input = TapeAccess::input(tape);
    if (const auto* sv = std::get_if<SparseVector>(&input)) {
      ParamGrad g{true, h1, sv->indices.size() ? std::vector<std::size_t>(sv->indices.begin(), sv->indices.end())
                                                : std::vector<std::size_t>{},
                  std::vector<double>(sv->indices.size() * h1)};
      res.grad_in.resize(sv->indices.size());
      for (std::size_t k = 0; k < sv->indices.size(); ++k) {
        auto row = w1.row(sv->indices[k]);
        double acc = 0.0;
        for (std::size_t c = 0; c < h1; ++c) {
          g.values[k * h1 + c] = sv->values[k] * g_pre[c];
          acc += row[c] * g_pre[c];
        }
        res.grad_in[k] = acc;
      }
      grads[0] = std::move(g);
    } else {
      const auto& x = std::get<std::vector<double>>(input);
      grads[0] = dense_grad(w1.rows, h1);
      res.grad_in.resize(w1.rows);
      for (std::size_t r = 0; r < w1.rows; ++r) {
        auto row = w1.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < h1; ++c) {
          grads[0].values[r * h1 + c] = x[r] * g_pre[c];
          acc += row[c] * g_pre[c];
        }
        res.grad_in[r] = acc;
      }
    }
    return res;
  }

  // sequence
  std::vector<double> g_mean = through_output(TapeAccess::post1(tape), 3);
  const auto& mean = TapeAccess::pre1(tape);
  for (std::size_t k = 0; k < g_mean.size(); ++k)
    if (!(mean[k] > 0.0)) g_mean[k] = 0.0;
  grads[2] = ParamGrad{false, spec.kernel_count, {}, g_mean};

  const auto& ids = std::get<TokenSequence>(TapeAccess::input(tape)).ids;
  const std::size_t positions = TapeAccess::positions(tape);
  const double inv_p = 1.0 / static_cast<double>(positions);
  const Tensor& conv_w = params[1];
  const auto sums = offset_sums(net, ids, positions);
  grads[1] = dense_grad(conv_w.rows, conv_w.cols);
  // Gradient reaching the word vector at each window offset, already scaled
  // by 1/positions.
  std::vector<double> g_offset(conv_w.rows, 0.0);
  for (std::size_t r = 0; r < conv_w.rows; ++r) {
    auto row = conv_w.row(r);
    double acc = 0.0;
    for (std::size_t k = 0; k < conv_w.cols; ++k) {
      grads[1].values[r * conv_w.cols + k] = sums[r] * g_mean[k] * inv_p;
      acc += row[k] * g_mean[k];
    }
    g_offset[r] = acc * inv_p;
  }

  const std::size_t m_dim = spec.word_dim;
  std::map<std::size_t, std::vector<double>> token_grads;
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t o = 0; o < spec.window; ++o) {
      const std::size_t q = p + o;
      if (q >= ids.size()) break;
      auto& g = token_grads[ids[q]];
      g.resize(m_dim, 0.0);
      for (std::size_t m = 0; m < m_dim; ++m) g[m] += g_offset[o * m_dim + m];
    }
  ParamGrad lookup_grad{true, m_dim, {}, {}};
  for (auto& [row, g] : token_grads) {
    lookup_grad.rows.push_back(row);
    lookup_grad.values.insert(lookup_grad.values.end(), g.begin(), g.end());
  }
  grads[0] = std::move(lookup_grad);
  return res;
}

void sgd_step(Net& net, const Gradients& grads, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorCode::invalid_argument, "learning rate must be positive");
  auto& params = net.params();
  if (grads.params.size() != params.size()) fail(ErrorCode::mismatch, "gradient count differs from parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads.params[i];
    const auto& t = params[i];
    const bool shape_ok = g.sparse ? (g.cols == t.cols && g.values.size() == g.rows.size() * t.cols)
                                   : g.values.size() == t.data.size();
    if (!shape_ok) fail(ErrorCode::mismatch, "gradient shape differs for parameter '" + t.name + "'");
    for (auto r : g.rows)
      if (r >= t.rows) fail(ErrorCode::mismatch, "gradient row out of range for parameter '" + t.name + "'");
    for (double v : g.values)
      if (!std::isfinite(v)) fail(ErrorCode::numeric, "non-finite gradient for parameter '" + t.name + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i];
    const auto& g = grads.params[i];
    if (!g.sparse) {
      for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] -= lr * g.values[k];
      continue;
    }
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      auto row = t.row(g.rows[r]);
      for (std::size_t c = 0; c < t.cols; ++c) row[c] -= lr * g.values[r * t.cols + c];
    }
  }
}

double lr_schedule(double lr0, std::size_t epoch) {
  const double progress = static_cast<double>(std::min(epoch, kLrDecayEpochs)) / static_cast<double>(kLrDecayEpochs);
  return lr0 * (1.0 - (1.0 - kLrFloorFactor) * progress);
}

}  // namespace siamret
