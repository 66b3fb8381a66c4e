#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "siamret/corpus_io.hpp"
#include "siamret/text_pipeline.hpp"

namespace siamret {

enum class NetKind { bag, sequence };

std::string_view to_string(NetKind kind);
NetKind parse_net_kind(std::string_view text);

// bag: x -> linear(input_dim -> n_hu or n_emb) [-> relu -> linear(n_hu -> n_emb)]
//      where x is a sparse or dense input vector.
// sequence: ids -> lookup(input_dim x word_dim) -> window convolution with
//      kernel_count outputs per position -> mean over positions -> relu ->
//      linear(kernel_count -> n_emb).
struct NetSpec {
  NetKind kind = NetKind::bag;
  std::size_t input_dim = 0;
  std::size_t n_hu = 0;
  std::size_t n_emb = 0;
  std::size_t word_dim = 0;
  std::size_t kernel_count = 0;
  std::size_t window = 0;

  void validate() const;
  // Width of the layer whose rows are indexed by input terms.
  std::size_t first_layer_width() const;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(std::string n, std::size_t r, std::size_t c) : name(std::move(n)), rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class Net {
 public:
  Net() = default;
  explicit Net(NetSpec spec);  // zero-filled parameters

  const NetSpec& spec() const { return spec_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  Tensor& param(std::string_view name);
  const Tensor& param(std::string_view name) const;

  friend bool operator==(const Net&, const Net&) = default;

 private:
  NetSpec spec_;
  std::vector<Tensor> params_;
};

// Glorot-uniform weights, zero biases. Pretrained vectors, when given,
// overwrite the first-layer (bag) or lookup (sequence) row of every vocabulary
// term found in the table.
Net init_net(const NetSpec& spec, std::uint64_t seed, const PretrainedEmbeddings* pretrained = nullptr,
             const Vocabulary* vocab = nullptr);

// Gradient of one parameter tensor. Row-sparse gradients list the touched
// rows (possibly repeated) and hold rows.size() * cols values.
struct ParamGrad {
  bool sparse = false;
  std::size_t cols = 0;
  std::vector<std::size_t> rows;
  std::vector<double> values;
};

struct Gradients {
  std::vector<ParamGrad> params;  // parallel to Net::params()

  // Adds other into this; both must come from the same net.
  void accumulate(const Gradients& other);
  // Dense copy of parameter i, summing repeated rows.
  std::vector<double> dense(std::size_t i, const Net& net) const;
};

using NetInput = std::variant<SparseVector, std::vector<double>, TokenSequence>;

// Activations recorded by forward(). Consumed by exactly one backward().
class Tape {
 public:
  bool consumed() const { return consumed_; }

 private:
  friend struct TapeAccess;
  const Net* net_ = nullptr;
  NetInput input_;
  std::vector<double> pre1_;   // first layer pre-activation (bag) / position mean (sequence)
  std::vector<double> post1_;  // after relu, when a hidden layer exists
  std::size_t positions_ = 0;
  bool consumed_ = false;
};

struct ForwardResult {
  std::vector<double> embedding;
  Tape tape;
};

struct BackwardResult {
  Gradients grads;
  // Gradient w.r.t. the input values: full vector for dense input, one entry
  // per stored index for sparse input, empty for token sequences.
  std::vector<double> grad_in;
};

ForwardResult forward(const Net& net, const SparseVector& input);
ForwardResult forward(const Net& net, std::span<const double> input);
ForwardResult forward(const Net& net, const std::vector<double>& input);
ForwardResult forward(const Net& net, const TokenSequence& input);
ForwardResult forward(const Net& net, const NetInput& input);

// Embedding only, without keeping a tape.
std::vector<double> embed(const Net& net, const NetInput& input);

BackwardResult backward(Tape& tape, std::span<const double> grad_out);

// p <- p - lr * g for every parameter. Validates the whole gradient before
// touching the net, so a non-finite gradient leaves it unchanged.
void sgd_step(Net& net, const Gradients& grads, double lr);

inline constexpr double kLrFloorFactor = 0.01;
inline constexpr std::size_t kLrDecayEpochs = 100;

// lr0 * (1 - 0.99 * min(epoch, 100) / 100)
double lr_schedule(double lr0, std::size_t epoch);

}  // namespace siamret
