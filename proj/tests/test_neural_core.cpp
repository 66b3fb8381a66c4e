#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "siamret/neural_core.hpp"
#include "test_util.hpp"

using namespace siamret;
using namespace siamret::testing;

namespace {

NetSpec bag(std::size_t in, std::size_t hu, std::size_t emb) { return {NetKind::bag, in, hu, emb}; }

NetSpec seq(std::size_t vocab, std::size_t m, std::size_t k, std::size_t window, std::size_t emb) {
  return {NetKind::sequence, vocab, 0, emb, m, k, window};
}

// Straightforward loops over the sequence architecture.
std::vector<double> sequence_oracle(const Net& net, const std::vector<std::uint32_t>& ids) {
  const auto& s = net.spec();
  const auto& lookup = net.param("lookup");
  const auto& cw = net.param("conv_W");
  const auto& cb = net.param("conv_b");
  const auto& ow = net.param("out_W");
  const auto& ob = net.param("out_b");
  const std::size_t positions = ids.size() >= s.window ? ids.size() - s.window + 1 : 1;
  std::vector<double> avg(s.kernel_count, 0.0);
  for (std::size_t p = 0; p < positions; ++p) {
    std::vector<double> window(s.window * s.word_dim, 0.0);
    for (std::size_t o = 0; o < s.window; ++o)
      if (p + o < ids.size())
        for (std::size_t m = 0; m < s.word_dim; ++m) window[o * s.word_dim + m] = lookup.at(ids[p + o], m);
    for (std::size_t k = 0; k < s.kernel_count; ++k) {
      double z = cb.at(0, k);
      for (std::size_t r = 0; r < window.size(); ++r) z += window[r] * cw.at(r, k);
      avg[k] += z / static_cast<double>(positions);
    }
  }
  std::vector<double> out(s.n_emb);
  for (std::size_t e = 0; e < s.n_emb; ++e) {
    double z = ob.at(0, e);
    for (std::size_t k = 0; k < s.kernel_count; ++k) z += std::max(0.0, avg[k]) * ow.at(k, e);
    out[e] = z;
  }
  return out;
}

}  // namespace

TEST_CASE("init: Glorot bound, zero bias, shapes") {
  const Net net = init_net(bag(100, 0, 8), 3);
  REQUIRE(net.params().size() == 2);
  CHECK(net.params()[0].rows == 100);
  CHECK(net.params()[0].cols == 8);
  CHECK(net.params()[1].data.size() == 8);
  const double a = std::sqrt(6.0 / 108.0);
  for (double w : net.params()[0].data) CHECK(std::abs(w) <= a);
  for (double b : net.params()[1].data) CHECK(b == 0.0);
  CHECK(*std::max_element(net.params()[0].data.begin(), net.params()[0].data.end()) > 0.8 * a);
}

TEST_CASE("init: deterministic per seed") {
  CHECK(init_net(bag(30, 5, 4), 11) == init_net(bag(30, 5, 4), 11));
  CHECK_FALSE(init_net(bag(30, 5, 4), 11) == init_net(bag(30, 5, 4), 12));
  CHECK(init_net(seq(10, 3, 4, 2, 5), 1) == init_net(seq(10, 3, 4, 2, 5), 1));
}

TEST_CASE("init: pretrained rows overwrite matching terms") {
  const std::vector<std::vector<std::string>> docs{{"dog", "dog", "cat"}, {"bird"}};
  const auto vocab = build_vocabulary(docs, TermMode::unigram, 10);
  PretrainedEmbeddings emb;
  emb.dim = 3;
  emb.vectors["cat"] = {0.5, 0.25, -1.0};
  const Net net = init_net(bag(vocab.size(), 0, 3), 2, &emb, &vocab);
  const auto row = net.param("W1").row(*vocab.index_of("cat"));
  CHECK(std::vector<double>(row.begin(), row.end()) == emb.vectors["cat"]);

  const Net sn = init_net(seq(vocab.size(), 3, 2, 2, 4), 2, &emb, &vocab);
  const auto srow = sn.param("lookup").row(*vocab.index_of("cat"));
  CHECK(std::vector<double>(srow.begin(), srow.end()) == emb.vectors["cat"]);

  PretrainedEmbeddings wide;
  wide.dim = 300;
  CHECK(error_of([&] { init_net(bag(vocab.size(), 0, 8), 1, &wide, &vocab); }) == ErrorCode::mismatch);
  CHECK(error_of([&] { init_net(bag(vocab.size(), 300, 8), 1, &wide, &vocab); }) == std::nullopt);
}

TEST_CASE("spec validation") {
  CHECK(error_of([] { Net(bag(0, 0, 4)); }).has_value());
  CHECK(error_of([] { Net(bag(4, 0, 0)); }).has_value());
  CHECK(error_of([] { Net(seq(4, 0, 2, 2, 3)); }).has_value());
  NetSpec bad = seq(4, 2, 2, 2, 3);
  bad.n_hu = 5;
  CHECK(error_of([&] { Net{bad}; }).has_value());
}

TEST_CASE("forward: one-hot bag input selects a row plus bias") {
  Net net = init_net(bag(6, 0, 4), 5);
  net.param("b1").data = {0.1, 0.2, 0.3, 0.4};
  const SparseVector x{{3}, {1.0}};
  const auto e = embed(net, x);
  for (std::size_t c = 0; c < 4; ++c) CHECK(e[c] == net.param("W1").at(3, c) + net.param("b1").data[c]);
}

TEST_CASE("forward: zero parameters give a zero embedding") {
  const Net net(bag(5, 3, 4));
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    for (double v : embed(net, random_sparse(rng, 5))) CHECK(v == 0.0);
    for (double v : embed(net, random_vector(rng, 5))) CHECK(v == 0.0);
  }
}

TEST_CASE("forward: dense and sparse agree") {
  const Net net = init_net(bag(7, 4, 3), 8);
  Rng rng(2);
  const auto sv = random_sparse(rng, 7);
  std::vector<double> dense(7, 0.0);
  for (std::size_t k = 0; k < sv.size(); ++k) dense[sv.indices[k]] = sv.values[k];
  const auto a = embed(net, sv);
  const auto b = embed(net, dense);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("forward: sequence matches a loop oracle, including short inputs") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t window = 1 + rng.uniform_index(5);
    const Net net = init_net(seq(9, 1 + rng.uniform_index(4), 1 + rng.uniform_index(4), window, 3), 100 + trial);
    const auto ts = random_tokens(rng, 9, 8);
    const auto e = embed(net, ts);
    const auto o = sequence_oracle(net, ts.ids);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == doctest::Approx(o[i]).epsilon(1e-12));
  }
  const Net net = init_net(seq(9, 3, 4, 5, 2), 7);
  const TokenSequence one{{4}};
  const auto e = embed(net, one);
  const auto o = sequence_oracle(net, one.ids);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == doctest::Approx(o[i]).epsilon(1e-12));
}

TEST_CASE("forward: window 1 averaging is order invariant") {
  const Net net = init_net(seq(12, 4, 5, 1, 3), 9);
  const TokenSequence a{{1, 5, 7, 7, 2}};
  const TokenSequence b{{7, 2, 1, 7, 5}};
  const auto ea = embed(net, a), eb = embed(net, b);
  for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i] == doctest::Approx(eb[i]).epsilon(1e-12));
}

TEST_CASE("forward: errors and determinism") {
  const Net s = init_net(seq(5, 2, 2, 3, 2), 1);
  CHECK(error_of([&] { embed(s, TokenSequence{}); }) == ErrorCode::empty_input);
  CHECK(error_of([&] { embed(s, TokenSequence{{9}}); }) == ErrorCode::invalid_argument);
  CHECK(error_of([&] { embed(s, SparseVector{{0}, {1.0}}); }) == ErrorCode::invalid_argument);
  const Net b = init_net(bag(4, 0, 2), 1);
  CHECK(error_of([&] { embed(b, std::vector<double>(3, 1.0)); }) == ErrorCode::invalid_argument);
  CHECK(error_of([&] { embed(b, SparseVector{{4}, {1.0}}); }) == ErrorCode::invalid_argument);
  CHECK(embed(b, std::vector<double>{1, 2, 3, 4}) == embed(b, std::vector<double>{1, 2, 3, 4}));
}

TEST_CASE("relu hidden layer output is nonnegative") {
  Net net = init_net(bag(6, 4, 4), 3);
  auto& w2 = net.param("W2");
  std::fill(w2.data.begin(), w2.data.end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) w2.at(i, i) = 1.0;
  Rng rng(6);
  for (int t = 0; t < 100; ++t)
    for (double v : embed(net, random_vector(rng, 6, 3.0))) CHECK(v >= 0.0);
}

TEST_CASE("backward: linear bag row gradient is x_i * grad_out") {
  Net net = init_net(bag(5, 0, 3), 2);
  const SparseVector x{{1, 4}, {0.5, 2.0}};
  auto fwd = forward(net, x);
  const std::vector<double> g{1.0, -2.0, 0.25};
  const auto back = backward(fwd.tape, g);
  const auto dense = back.grads.dense(0, net);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(dense[1 * 3 + c] == 0.5 * g[c]);
    CHECK(dense[4 * 3 + c] == 2.0 * g[c]);
    CHECK(dense[0 * 3 + c] == 0.0);
  }
  CHECK(back.grads.dense(1, net) == g);
}

TEST_CASE("backward: zero grad_out gives zero gradients") {
  Net net = init_net(seq(6, 3, 4, 2, 3), 2);
  auto fwd = forward(net, TokenSequence{{1, 2, 3}});
  const auto back = backward(fwd.tape, std::vector<double>(3, 0.0));
  for (std::size_t p = 0; p < net.params().size(); ++p)
    for (double v : back.grads.dense(p, net)) CHECK(v == 0.0);
}

TEST_CASE("backward: tape reuse is an error") {
  Net net = init_net(bag(3, 0, 2), 1);
  auto fwd = forward(net, std::vector<double>{1, 2, 3});
  backward(fwd.tape, std::vector<double>{1, 1});
  CHECK(fwd.tape.consumed());
  CHECK(error_of([&] { backward(fwd.tape, std::vector<double>{1, 1}); }) == ErrorCode::tape_reuse);
}

TEST_CASE("backward: finite differences for every layer kind") {
  Rng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t in = 2 + rng.uniform_index(7), emb = 1 + rng.uniform_index(8);
    const std::size_t hu = trial % 2 ? 1 + rng.uniform_index(8) : 0;
    Net net = init_net(bag(in, hu, emb), 500 + trial);
    const auto g = random_vector(rng, emb);
    worst = std::max(worst, check_net(net, random_sparse(rng, in), g));
    worst = std::max(worst, check_net(net, random_vector(rng, in), g));

    Net sn = init_net(seq(2 + rng.uniform_index(7), 1 + rng.uniform_index(4), 1 + rng.uniform_index(5),
                          1 + rng.uniform_index(4), emb),
                      900 + trial);
    // Nonzero biases keep pre-activations away from the relu kink.
    for (auto& b : sn.param("conv_b").data) b = rng.uniform(-0.5, 0.5);
    worst = std::max(worst, check_net(sn, random_tokens(rng, sn.spec().input_dim, 8), g));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("gradients: accumulate merges sparse rows and dense values") {
  Net net = init_net(bag(4, 0, 2), 3);
  auto a = forward(net, SparseVector{{0}, {1.0}});
  auto b = forward(net, std::vector<double>{0, 1, 0, 2});
  Gradients ga = backward(a.tape, std::vector<double>{1, 1}).grads;
  const Gradients gb = backward(b.tape, std::vector<double>{1, -1}).grads;
  const auto da = ga.dense(0, net), db = gb.dense(0, net);
  ga.accumulate(gb);
  const auto sum = ga.dense(0, net);
  for (std::size_t k = 0; k < sum.size(); ++k) CHECK(sum[k] == da[k] + db[k]);
}

TEST_CASE("sgd: arithmetic, identity, and non-finite abort") {
  Net net(bag(1, 0, 1));
  net.param("W1").data = {1.0};
  Gradients g;
  g.params = {ParamGrad{false, 1, {}, {2.0}}, ParamGrad{false, 1, {}, {0.0}}};
  sgd_step(net, g, 0.1);
  CHECK(net.param("W1").data[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(net.param("b1").data[0] == 0.0);

  g.params[0].values = {0.0};
  sgd_step(net, g, 0.1);
  CHECK(net.param("W1").data[0] == doctest::Approx(0.8).epsilon(1e-15));

  g.params[0].values = {std::numeric_limits<double>::quiet_NaN()};
  g.params[1].values = {1.0};
  CHECK(error_of([&] { sgd_step(net, g, 0.1); }) == ErrorCode::numeric);
  CHECK(net.param("b1").data[0] == 0.0);
  CHECK(error_of([&] { sgd_step(net, g, 0.0); }).has_value());
}

TEST_CASE("sgd: sparse rows update only touched rows") {
  Net net = init_net(bag(4, 0, 2), 3);
  const Net before = net;
  auto fwd = forward(net, SparseVector{{2}, {1.0}});
  sgd_step(net, backward(fwd.tape, std::vector<double>{1, 1}).grads, 0.5);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      if (r == 2) CHECK(net.param("W1").at(r, c) == before.param("W1").at(r, c) - 0.5);
      else CHECK(net.param("W1").at(r, c) == before.param("W1").at(r, c));
}

TEST_CASE("lr schedule") {
  CHECK(lr_schedule(0.001, 0) == 0.001);
  CHECK(lr_schedule(0.001, 100) == doctest::Approx(0.00001).epsilon(1e-12));
  CHECK(lr_schedule(0.001, 50) == doctest::Approx(0.000505).epsilon(1e-12));
  CHECK(lr_schedule(0.001, 250) == lr_schedule(0.001, 100));
  for (std::size_t e = 1; e <= 100; ++e) CHECK(lr_schedule(1.0, e) < lr_schedule(1.0, e - 1));
}
