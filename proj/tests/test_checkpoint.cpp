#include <doctest.h>

#include <cstring>
#include <sstream>

#include "siamret/checkpoint.hpp"
#include "siamret/error.hpp"
#include "siamret/retrieval_eval.hpp"
#include "siamret/settings.hpp"
#include "test_util.hpp"

using namespace siamret;
using siamret::testing::error_of;
using siamret::testing::TempDir;

namespace {

Vocabulary small_vocab() {
  const std::vector<std::vector<std::string>> docs{{"dog", "runs"}, {"cat", "sits", "dog"}, {"red", "ball"}};
  return build_vocabulary(docs, TermMode::unigram, 100);
}

Checkpoint sample_checkpoint(NetKind text_kind) {
  Checkpoint c;
  c.settings.text_kind = text_kind;
  c.settings.n_emb = 6;
  c.settings.n_hu = text_kind == NetKind::bag ? 4 : 0;
  c.settings.visual_n_hu = 3;
  c.settings.word_dim = 5;
  c.settings.kernels = 4;
  c.settings.window = 2;
  c.settings.train.margin = 0.2;
  c.settings.train.seed = 77;
  c.vocabulary = small_vocab();
  c.model = init_score_model(c.settings.text_spec(c.vocabulary.size()), c.settings.visual_spec(7), 77);
  c.history.epochs = {{1, 0.001, 40.0, 35.5}, {2, 0.00099, 30.0, 36.0}};
  c.history.best_epoch = 1;
  return c;
}

bool bit_identical(const Net& a, const Net& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i];
    const auto& y = b.params()[i];
    if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.data.size() != y.data.size()) return false;
    if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  for (auto kind : {NetKind::bag, NetKind::sequence}) {
    TempDir dir;
    const auto ckpt = sample_checkpoint(kind);
    const auto path = dir.file("model.ckpt");
    save_checkpoint(ckpt, path);
    const auto back = load_checkpoint(path);
    CHECK(back.format_version == kCheckpointVersion);
    CHECK(back.settings == ckpt.settings);
    CHECK(back.vocabulary == ckpt.vocabulary);
    CHECK(back.history == ckpt.history);
    CHECK(bit_identical(back.model.text, ckpt.model.text));
    CHECK(bit_identical(back.model.visual, ckpt.model.visual));
    CHECK(back.model.text.spec() == ckpt.model.text.spec());
    CHECK(encode_checkpoint(back) == encode_checkpoint(ckpt));
  }
}

TEST_CASE("loaded model scores like the saved one") {
  const auto ckpt = sample_checkpoint(NetKind::bag);
  const auto back = decode_checkpoint(encode_checkpoint(ckpt));
  const std::vector<double> image{0.1, -0.3, 0.5, 0.0, 1.0, -2.0, 0.7};
  const std::vector<std::string> tokens{"dog", "runs"};
  const auto caption = featurize_text(tokens, ckpt.vocabulary, NetKind::bag, Weighting::binary);
  const auto e1 = embed(ckpt.model.text, caption), e2 = embed(back.model.text, caption);
  const auto v1 = embed(ckpt.model.visual, NetInput{image}), v2 = embed(back.model.visual, NetInput{image});
  CHECK(e1 == e2);
  CHECK(v1 == v2);
}

TEST_CASE("checkpoint load errors") {
  const auto bytes = encode_checkpoint(sample_checkpoint(NetKind::bag));

  SUBCASE("unknown version") {
    auto bad = bytes;
    bad[4] = 9;
    CHECK(error_of([&] { decode_checkpoint(bad); }) == ErrorCode::version);
  }
  SUBCASE("truncated file") {
    for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{20}})
      CHECK(error_of([&] { decode_checkpoint(std::string_view(bytes).substr(0, cut)); }) == ErrorCode::checksum);
  }
  SUBCASE("flipped payload byte") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x40;
    CHECK(error_of([&] { decode_checkpoint(bad); }) == ErrorCode::checksum);
  }
  SUBCASE("not a checkpoint") {
    CHECK(error_of([] { decode_checkpoint("hello world, not a model"); }) == ErrorCode::parse);
  }
  SUBCASE("missing file") {
    CHECK(error_of([] { load_checkpoint("/nonexistent/model.ckpt"); }) == ErrorCode::io);
  }
}

TEST_CASE("settings defaults follow the hyperparameter table") {
  const RunSettings s;
  CHECK(s.train.margin == 0.15);
  CHECK(s.train.lr0 == 0.001);
  CHECK(s.train.max_epochs == 50);
  CHECK(s.get("margin") == "0.15");
  CHECK(s.get("lr") == "0.001");
  CHECK(s.get("lr_decay") == "linear");
  CHECK(s.get("lr_floor_factor") == "0.01");
  CHECK(s.get("lr_decay_epochs") == "100");
  CHECK(s.get("nonlinearity") == "relu");
  CHECK(s.get("methodology") == "i2t");
  CHECK(error_of([&] { s.get("bogus"); }) == ErrorCode::not_found);
}

TEST_CASE("settings set, parse and validate") {
  RunSettings s;
  s.set("margin", "0.3");
  s.set("methodology", "t2i");
  s.set("text_model", "sse");
  CHECK(s.train.margin == 0.3);
  CHECK(s.train.methodology == Methodology::t2i);
  CHECK(s.text_kind == NetKind::sequence);

  CHECK(error_of([&] { s.set("colour", "red"); }) == ErrorCode::config);
  CHECK(error_of([&] { s.set("epochs", "-3"); }) == ErrorCode::config);
  CHECK(error_of([&] { s.set("margin", "abc"); }) == ErrorCode::config);
  CHECK(error_of([&] { s.set("nonlinearity", "tanh"); }) == ErrorCode::config);
  CHECK(error_of([&] { s.set("lr_floor_factor", "0.1"); }) == ErrorCode::config);
  CHECK(error_of([&] { s.set("methodology", "both"); }) == ErrorCode::config);

  RunSettings bad;
  bad.train.margin = 0.0;
  CHECK(error_of([&] { bad.validate(); }) == ErrorCode::config);
  bad.train.margin = -1.0;
  CHECK(error_of([&] { bad.validate(); }) == ErrorCode::config);

  // A written key=value block parses back to the same settings.
  std::istringstream in("# comment\n\n" + s.to_key_values());
  CHECK(RunSettings::parse(in) == s);

  std::istringstream broken("margin = 0.2\nthis line has no equals\n");
  const auto msg = siamret::testing::message_of([&] { RunSettings::parse(broken, "cfg.txt"); });
  CHECK(msg.find("cfg.txt:2") != std::string::npos);
}
