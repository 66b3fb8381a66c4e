#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "siamret/corpus_io.hpp"
#include "siamret/log.hpp"
#include "test_util.hpp"

using namespace siamret;
using siamret::testing::error_of;
using siamret::testing::five_captions;
using siamret::testing::message_of;

namespace {

std::vector<Caption> captions_from(const std::string& text, bool strict = true) {
  std::istringstream in(text);
  return parse_captions(in, strict);
}

FeatureStore features_from(const std::string& text) {
  std::istringstream in(text);
  return parse_image_features(in);
}

}  // namespace

TEST_CASE("captions: two images give ten captions in two groups") {
  const auto caps = captions_from(five_captions("imgA") + five_captions("imgB"));
  CHECK(caps.size() == 10);
  CHECK(caption_image_ids(caps) == std::vector<std::string>{"imgA", "imgB"});
  CHECK(caps[0].image_id == "imgA");
  CHECK(caps[9].caption_index == 4);
  CHECK(caps[2].text == "caption 2 of imgA");
}

TEST_CASE("captions: grouped by image and ordered by index") {
  const auto caps = captions_from("b\t1\tx\na\t0\ty\nb\t0\tz\n", false);
  REQUIRE(caps.size() == 3);
  CHECK(caps[0].image_id == "b");
  CHECK(caps[0].caption_index == 0);
  CHECK(caps[1].caption_index == 1);
  CHECK(caps[2].image_id == "a");
}

TEST_CASE("captions: four captions under strict mode names the image") {
  const std::string text = five_captions("good") + five_captions("short4", 4);
  CHECK(error_of([&] { captions_from(text); }) == ErrorCode::parse);
  CHECK(message_of([&] { captions_from(text); }).find("short4") != std::string::npos);
  CHECK(captions_from(text, false).size() == 9);
}

TEST_CASE("captions: empty input is an empty list") {
  CHECK(captions_from("").empty());
}

TEST_CASE("captions: malformed lines report the line number") {
  const std::string msg = message_of([] { captions_from("a\t0\tok\nno tabs here\n", false); });
  CHECK(msg.find(":2:") != std::string::npos);
  CHECK(error_of([] { captions_from("a\t7\tbad index\n", false); }) == ErrorCode::parse);
  CHECK(error_of([] { captions_from("a\tx\tbad index\n", false); }) == ErrorCode::parse);
  CHECK(error_of([] { captions_from("\t0\tno id\n", false); }) == ErrorCode::parse);
}

TEST_CASE("captions: duplicate (image, index) is rejected") {
  CHECK(error_of([] { captions_from("a\t0\tx\na\t0\ty\n", false); }) == ErrorCode::parse);
}

TEST_CASE("captions: write then parse round-trips") {
  const auto caps = captions_from(five_captions("one") + five_captions("two"));
  std::ostringstream out;
  write_captions(out, caps);
  const auto again = captions_from(out.str());
  REQUIRE(again.size() == caps.size());
  for (std::size_t i = 0; i < caps.size(); ++i) {
    CHECK(again[i].image_id == caps[i].image_id);
    CHECK(again[i].caption_index == caps[i].caption_index);
    CHECK(again[i].text == caps[i].text);
  }
}

TEST_CASE("captions: missing file is an io error naming the path") {
  CHECK(error_of([] { load_captions("/nonexistent/caps.tsv"); }) == ErrorCode::io);
  CHECK(message_of([] { load_captions("/nonexistent/caps.tsv"); }).find("/nonexistent/caps.tsv") != std::string::npos);
}

TEST_CASE("features: header 2 4 with two rows") {
  const auto store = features_from("2 4\nx 1 2 3 4\ny 0.5 -1 1e-3 7\n");
  CHECK(store.size() == 2);
  CHECK(store.dim() == 4);
  CHECK(store.at("y").features[2] == doctest::Approx(1e-3));
  CHECK(store.find("z") == nullptr);
  CHECK(error_of([&] { store.at("z"); }) == ErrorCode::not_found);
}

TEST_CASE("features: short row names the image") {
  const std::string text = "2 4\nx 1 2 3 4\nshorty 1 2 3\n";
  CHECK(error_of([&] { features_from(text); }) == ErrorCode::parse);
  CHECK(message_of([&] { features_from(text); }).find("shorty") != std::string::npos);
}

TEST_CASE("features: non-finite and duplicate values are rejected") {
  CHECK(message_of([] { features_from("1 2\nx NaN 1\n"); }).find("non-finite") != std::string::npos);
  CHECK(error_of([] { features_from("1 2\nx inf 1\n"); }) == ErrorCode::parse);
  CHECK(error_of([] { features_from("2 1\nx 1\nx 2\n"); }) == ErrorCode::parse);
  CHECK(error_of([] { features_from("3 1\nx 1\ny 2\n"); }) == ErrorCode::parse);
  CHECK(error_of([] { features_from(""); }) == ErrorCode::parse);
  CHECK(error_of([] { features_from("1 0\n"); }) == ErrorCode::parse);
}

TEST_CASE("features: write then parse is bit-exact") {
  const FeatureStore store(3, {{"a", {0.1, -1.0 / 3.0, 1e-300}}, {"b", {5e10, 2.0, -0.0}}});
  std::ostringstream out;
  write_image_features(out, store);
  const auto again = features_from(out.str());
  for (const auto& rec : store.records())
    for (std::size_t k = 0; k < 3; ++k) CHECK(again.at(rec.image_id).features[k] == rec.features[k]);
}

TEST_CASE("join: strict needs every image, lenient drops with a count") {
  const auto caps = captions_from(five_captions("have") + five_captions("missing"));
  const FeatureStore store(1, {{"have", {1.0}}});
  CHECK(error_of([&] { join_captions(caps, store, true); }) == ErrorCode::not_found);
  log::set_level(log::Level::quiet);
  const auto joined = join_captions(caps, store, false);
  log::set_level(log::Level::warn);
  CHECK(joined.captions.size() == 5);
  CHECK(joined.dropped == 5);
}

TEST_CASE("split: 100 images, n_test 10, val 0.05") {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("img" + std::to_string(i));
  const auto a = split_dataset(ids, 10, 0.05, 7);
  CHECK(a.test.size() == 10);
  CHECK(a.val.size() == 5);
  CHECK(a.train.size() == 85);
  const auto b = split_dataset(ids, 10, 0.05, 7);
  CHECK(a.test == b.test);
  CHECK(a.val == b.val);
  CHECK(a.train == b.train);
  CHECK(a.seed == 7);
}

TEST_CASE("split: round-half-up on the remainder") {
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back(std::to_string(i));
  CHECK(split_dataset(ids, 10, 0.25, 1).val.size() == 3);  // 2.5 -> 3
  CHECK(split_dataset(ids, 10, 0.24, 1).val.size() == 2);
}

TEST_CASE("split: preconditions") {
  const std::vector<std::string> ids{"a", "b", "c"};
  CHECK(error_of([&] { split_dataset(ids, 3, 0.5, 1); }) == ErrorCode::invalid_argument);
  CHECK(error_of([&] { split_dataset(ids, 1, 0.0, 1); }) == ErrorCode::invalid_argument);
  CHECK(error_of([&] { split_dataset(ids, 1, 1.0, 1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("split: partition property over 100 seeds") {
  std::vector<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.push_back("i" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = split_dataset(ids, 8, 0.1, seed);
    std::set<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const auto& id : *part) CHECK(all.insert(id).second);
    CHECK(all == std::set<std::string>(ids.begin(), ids.end()));
    const auto again = split_dataset(ids, 8, 0.1, seed);
    CHECK(again.test == s.test);
    CHECK(again.train == s.train);
  }
}

TEST_CASE("split: stratified split spreads small parts across groups") {
  std::vector<std::string> ids;
  std::vector<std::size_t> group;
  for (std::size_t g = 0; g < 4; ++g)
    for (int i = 0; i < 10; ++i) {
      ids.push_back(std::to_string(g) + "_" + std::to_string(i));
      group.push_back(g);
    }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_dataset_stratified(ids, group, 4, 0.1, seed);
    CHECK(s.val.size() == 4);
    std::set<char> test_groups, val_groups;
    for (const auto& id : s.test) test_groups.insert(id[0]);
    for (const auto& id : s.val) val_groups.insert(id[0]);
    CHECK(test_groups.size() == 4);
    CHECK(val_groups.size() == 4);
  }
}

TEST_CASE("split: file round-trip") {
  std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  const auto s = split_dataset(ids, 1, 0.3, 11);
  std::ostringstream out;
  write_split(out, s);
  std::istringstream in(out.str());
  const auto again = parse_split(in);
  CHECK(again.seed == 11);
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);
  std::istringstream dup("a\ttrain\na\ttest\n");
  CHECK(error_of([&] { parse_split(dup); }) == ErrorCode::parse);
}

TEST_CASE("embeddings: three words of dimension 300") {
  std::ostringstream text;
  for (const char* w : {"dog", "cat", "bird"}) {
    text << w;
    for (int k = 0; k < 300; ++k) text << ' ' << k * 0.001;
    text << '\n';
  }
  std::istringstream in(text.str());
  const auto emb = parse_word_embeddings(in);
  CHECK(emb.dim == 300);
  CHECK(emb.vectors.size() == 3);
  CHECK(emb.vectors.at("cat")[2] == doctest::Approx(0.002));
}

TEST_CASE("embeddings: short vector names the word") {
  std::ostringstream text;
  text << "good";
  for (int k = 0; k < 300; ++k) text << " 1";
  text << "\nbad";
  for (int k = 0; k < 299; ++k) text << " 1";
  text << '\n';
  std::istringstream in(text.str());
  const std::string msg = message_of([&] { parse_word_embeddings(in); });
  CHECK(msg.find("bad") != std::string::npos);
}

TEST_CASE("embeddings: duplicate keeps the first, header line skipped") {
  log::set_level(log::Level::quiet);
  std::istringstream in("2 2\nw 1 2\nw 3 4\n");
  const auto emb = parse_word_embeddings(in);
  log::set_level(log::Level::warn);
  CHECK(emb.duplicate_count == 1);
  CHECK(emb.vectors.at("w") == std::vector<double>{1, 2});
}

TEST_CASE("synthetic: zero noise, 4 clusters x 5 images") {
  SyntheticParams p;
  p.n_clusters = 4;
  p.images_per_cluster = 5;
  const auto c = generate_synthetic_corpus(p);
  CHECK(c.images.size() == 20);
  CHECK(c.captions.size() == 100);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 20; ++k)
      if (c.cluster_of_image[i] == c.cluster_of_image[k]) {
        const auto& a = c.images.records()[i].features;
        const auto& b = c.images.records()[k].features;
        double dot = 0, na = 0, nb = 0;
        for (std::size_t d = 0; d < a.size(); ++d) {
          dot += a[d] * b[d];
          na += a[d] * a[d];
          nb += b[d] * b[d];
        }
        CHECK(a == b);
        CHECK(dot / std::sqrt(na * nb) == doctest::Approx(1.0).epsilon(1e-15));
      }
}

TEST_CASE("synthetic: determinism, token disjointness, caption lengths") {
  SyntheticParams p;
  p.noise_sigma = 0.3;
  p.seed = 42;
  const auto a = generate_synthetic_corpus(p);
  const auto b = generate_synthetic_corpus(p);
  std::ostringstream fa, fb, ca, cb;
  write_image_features(fa, a.images);
  write_image_features(fb, b.images);
  write_captions(ca, a.captions);
  write_captions(cb, b.captions);
  CHECK(fa.str() == fb.str());
  CHECK(ca.str() == cb.str());

  std::vector<std::set<std::string>> tokens(p.n_clusters);
  std::unordered_map<std::string, std::size_t> cluster;
  for (std::size_t i = 0; i < a.images.size(); ++i) cluster[a.images.records()[i].image_id] = a.cluster_of_image[i];
  for (const auto& cap : a.captions) {
    std::istringstream words(cap.text);
    std::string w;
    std::size_t n = 0;
    while (words >> w) {
      tokens[cluster.at(cap.image_id)].insert(w);
      ++n;
    }
    CHECK(n >= 4);
    CHECK(n <= 8);
  }
  for (std::size_t x = 0; x < tokens.size(); ++x)
    for (std::size_t y = x + 1; y < tokens.size(); ++y)
      for (const auto& w : tokens[x]) CHECK(tokens[y].count(w) == 0);
  for (const auto& proto : a.prototypes) {
    double n2 = 0;
    for (double v : proto) n2 += v * v;
    CHECK(n2 == doctest::Approx(1.0));
  }
}

TEST_CASE("synthetic: preconditions") {
  SyntheticParams p;
  p.n_clusters = 0;
  CHECK(error_of([&] { generate_synthetic_corpus(p); }) == ErrorCode::invalid_argument);
  p.n_clusters = 1;
  p.noise_sigma = -1;
  CHECK(error_of([&] { generate_synthetic_corpus(p); }) == ErrorCode::invalid_argument);
}

TEST_CASE("crc32 matches the standard check value") {
  CHECK(crc32_of("123456789") == 0xCBF43926u);
  CHECK(crc32_hex("123456789") == "cbf43926");
}
