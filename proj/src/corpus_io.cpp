#include "siamret/corpus_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <cctype>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "siamret/error.hpp"
#include "siamret/log.hpp"
#include "siamret/rng.hpp"

namespace siamret {

namespace {

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "' for reading");
  return in;
}

bool parse_double(std::string_view text, double& out) {
  // strtod accepts nan/inf spellings, which the callers then reject as
  // non-finite with a dedicated message.
  std::string buf(text);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size() && !buf.empty();
}

bool parse_size(std::string_view text, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FeatureStore::FeatureStore(std::size_t dim, std::vector<ImageRecord> records)
    : dim_(dim), records_(std::move(records)) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    if (rec.features.size() != dim_)
      fail(ErrorCode::parse, "image '" + rec.image_id + "' has " +
                                 std::to_string(rec.features.size()) + " values, expected " +
                                 std::to_string(dim_));
    for (double v : rec.features)
      if (!std::isfinite(v))
        fail(ErrorCode::parse, "image '" + rec.image_id + "' has a non-finite feature value");
    if (!index_.emplace(rec.image_id, i).second)
      fail(ErrorCode::parse, "duplicate image id '" + rec.image_id + "'");
  }
}

const ImageRecord* FeatureStore::find(std::string_view image_id) const {
  auto it = index_.find(std::string(image_id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const ImageRecord& FeatureStore::at(std::string_view image_id) const {
  if (const auto* rec = find(image_id)) return *rec;
  fail(ErrorCode::not_found, "unknown image id '" + std::string(image_id) + "'");
}

std::vector<Caption> parse_captions(std::istream& in, bool strict, std::string_view source) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Caption>> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      fail(ErrorCode::parse, where(source, line_no) + ": expected image_id<TAB>caption_index<TAB>text");
    std::string image_id = line.substr(0, tab1);
    std::string_view index_text(line.data() + tab1 + 1, tab2 - tab1 - 1);
    std::size_t index = 0;
    if (image_id.empty())
      fail(ErrorCode::parse, where(source, line_no) + ": empty image id");
    if (!parse_size(index_text, index) || index >= kCaptionsPerImage)
      fail(ErrorCode::parse, where(source, line_no) + ": caption index must be an integer in [0,4]");
    auto [it, fresh] = groups.try_emplace(image_id);
    if (fresh) order.push_back(image_id);
    for (const auto& c : it->second)
      if (c.caption_index == static_cast<int>(index))
        fail(ErrorCode::parse, where(source, line_no) + ": duplicate caption " +
                                   std::to_string(index) + " for image '" + image_id + "'");
    it->second.push_back(Caption{image_id, static_cast<int>(index), line.substr(tab2 + 1), {}});
  }

  std::vector<Caption> out;
  for (const auto& id : order) {
    auto& group = groups[id];
    if (strict && group.size() != kCaptionsPerImage)
      fail(ErrorCode::parse, std::string(source) + ": image '" + id + "' has " +
                                 std::to_string(group.size()) + " captions, expected 5");
    std::sort(group.begin(), group.end(),
              [](const Caption& a, const Caption& b) { return a.caption_index < b.caption_index; });
    for (auto& c : group) out.push_back(std::move(c));
  }
  return out;
}

std::vector<Caption> load_captions(const std::string& path, bool strict) {
  auto in = open_input(path);
  return parse_captions(in, strict, path);
}

void write_captions(std::ostream& out, const std::vector<Caption>& captions) {
  for (const auto& c : captions) out << c.image_id << '\t' << c.caption_index << '\t' << c.text << '\n';
}

FeatureStore parse_image_features(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t count = 0, dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 2 || !parse_size(fields[0], count) || !parse_size(fields[1], dim))
      fail(ErrorCode::parse, where(source, line_no) + ": expected header 'count dim'");
    break;
  }
  if (line_no == 0 || dim == 0) {
    if (line_no == 0) fail(ErrorCode::parse, std::string(source) + ": missing header");
    fail(ErrorCode::parse, std::string(source) + ": feature dimension must be positive");
  }

  std::vector<ImageRecord> records;
  records.reserve(count);
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    std::string id(fields[0]);
    if (fields.size() - 1 != dim)
      fail(ErrorCode::parse, where(source, line_no) + ": image '" + id + "' has " +
                                 std::to_string(fields.size() - 1) + " values, expected " +
                                 std::to_string(dim));
    if (!seen.insert(id).second)
      fail(ErrorCode::parse, where(source, line_no) + ": duplicate image id '" + id + "'");
    ImageRecord rec{id, std::vector<double>(dim)};
    for (std::size_t k = 0; k < dim; ++k) {
      if (!parse_double(fields[k + 1], rec.features[k]))
        fail(ErrorCode::parse, where(source, line_no) + ": bad number '" +
                                   std::string(fields[k + 1]) + "' for image '" + id + "'");
      if (!std::isfinite(rec.features[k]))
        fail(ErrorCode::parse, where(source, line_no) + ": non-finite value for image '" + id + "'");
    }
    records.push_back(std::move(rec));
  }
  if (records.size() != count)
    fail(ErrorCode::parse, std::string(source) + ": header declares " + std::to_string(count) +
                               " records, found " + std::to_string(records.size()));
  return FeatureStore(dim, std::move(records));
}

FeatureStore load_image_features(const std::string& path) {
  auto in = open_input(path);
  return parse_image_features(in, path);
}

void write_image_features(std::ostream& out, const FeatureStore& store) {
  out << store.size() << ' ' << store.dim() << '\n';
  for (const auto& rec : store.records()) {
    out << rec.image_id;
    for (double v : rec.features) out << ' ' << format_double(v);
    out << '\n';
  }
}

std::vector<std::string> caption_image_ids(const std::vector<Caption>& captions) {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& c : captions)
    if (seen.insert(c.image_id).second) ids.push_back(c.image_id);
  return ids;
}

JoinResult join_captions(std::vector<Caption> captions, const FeatureStore& store, bool strict) {
  JoinResult result;
  std::set<std::string> missing;
  for (auto& c : captions) {
    if (store.find(c.image_id)) {
      result.captions.push_back(std::move(c));
      continue;
    }
    if (strict) fail(ErrorCode::not_found, "caption image '" + c.image_id + "' has no feature vector");
    missing.insert(c.image_id);
    ++result.dropped;
  }
  if (!missing.empty())
    log::warn("dropped " + std::to_string(result.dropped) + " captions of " +
              std::to_string(missing.size()) + " images without features");
  return result;
}

namespace {

SplitDataset cut_split(std::vector<std::string> order, std::size_t n_test, double val_frac,
                       std::uint64_t seed) {
  SplitDataset split;
  split.seed = seed;
  const std::size_t remaining = order.size() - n_test;
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(remaining) + 0.5));
  split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                   order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
  return split;
}

void check_split_args(std::size_t n_images, std::size_t n_test, double val_frac) {
  if (n_test >= n_images)
    fail(ErrorCode::invalid_argument, "n_test (" + std::to_string(n_test) +
                                          ") must be smaller than the image count (" +
                                          std::to_string(n_images) + ")");
  if (!(val_frac > 0.0 && val_frac < 1.0))
    fail(ErrorCode::invalid_argument, "val_frac must lie in (0, 1)");
}

}  // namespace

SplitDataset split_dataset(const std::vector<std::string>& image_ids, std::size_t n_test,
                           double val_frac, std::uint64_t seed) {
  check_split_args(image_ids.size(), n_test, val_frac);
  std::vector<std::string> order = image_ids;
  Rng rng(seed);
  rng.shuffle(order);
  return cut_split(std::move(order), n_test, val_frac, seed);
}

SplitDataset split_dataset_stratified(const std::vector<std::string>& image_ids,
                                      const std::vector<std::size_t>& group_of,
                                      std::size_t n_test, double val_frac, std::uint64_t seed) {
  check_split_args(image_ids.size(), n_test, val_frac);
  if (group_of.size() != image_ids.size())
    fail(ErrorCode::invalid_argument, "group labels must parallel the image ids");
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < image_ids.size(); ++i) groups[group_of[i]].push_back(image_ids[i]);
  Rng rng(seed);
  std::vector<std::vector<std::string>> buckets;
  for (auto& [g, ids] : groups) {
    rng.shuffle(ids);
    buckets.push_back(std::move(ids));
  }
  rng.shuffle(buckets);
  std::vector<std::string> order;
  for (std::size_t round = 0; order.size() < image_ids.size(); ++round)
    for (const auto& b : buckets)
      if (round < b.size()) order.push_back(b[round]);
  return cut_split(std::move(order), n_test, val_frac, seed);
}

std::vector<Caption> captions_for(const std::vector<Caption>& captions,
                                  const std::vector<std::string>& image_ids) {
  std::unordered_map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < image_ids.size(); ++i) rank.emplace(image_ids[i], i);
  std::vector<Caption> out;
  for (const auto& c : captions)
    if (rank.count(c.image_id)) out.push_back(c);
  std::stable_sort(out.begin(), out.end(), [&](const Caption& a, const Caption& b) {
    return rank.at(a.image_id) < rank.at(b.image_id);
  });
  return out;
}

void write_split(std::ostream& out, const SplitDataset& split) {
  out << "# seed " << split.seed << '\n';
  for (const auto& id : split.train) out << id << "\ttrain\n";
  for (const auto& id : split.val) out << id << "\tval\n";
  for (const auto& id : split.test) out << id << "\ttest\n";
}

SplitDataset parse_split(std::istream& in, std::string_view source) {
  SplitDataset split;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("# seed ", 0) == 0) {
      split.seed = std::stoull(line.substr(7));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorCode::parse, where(source, line_no) + ": expected image_id<TAB>split");
    std::string id = line.substr(0, tab), which = line.substr(tab + 1);
    if (!seen.insert(id).second) fail(ErrorCode::parse, where(source, line_no) + ": image '" + id + "' listed twice");
    if (which == "train") split.train.push_back(id);
    else if (which == "val") split.val.push_back(id);
    else if (which == "test") split.test.push_back(id);
    else fail(ErrorCode::parse, where(source, line_no) + ": unknown split '" + which + "'");
  }
  return split;
}

SplitDataset load_split(const std::string& path) {
  auto in = open_input(path);
  return parse_split(in, path);
}

PretrainedEmbeddings parse_word_embeddings(std::istream& in, std::string_view source) {
  PretrainedEmbeddings emb;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      std::size_t a = 0, b = 0;
      if (fields.size() == 2 && parse_size(fields[0], a) && parse_size(fields[1], b)) continue;
    }
    std::string word(fields[0]);
    const std::size_t d = fields.size() - 1;
    if (d == 0) fail(ErrorCode::parse, where(source, line_no) + ": word '" + word + "' has no vector");
    if (emb.dim == 0) emb.dim = d;
    if (d != emb.dim)
      fail(ErrorCode::parse, where(source, line_no) + ": word '" + word + "' has " + std::to_string(d) +
                                 " values, expected " + std::to_string(emb.dim));
    std::vector<double> vec(d);
    for (std::size_t k = 0; k < d; ++k)
      if (!parse_double(fields[k + 1], vec[k]) || !std::isfinite(vec[k]))
        fail(ErrorCode::parse, where(source, line_no) + ": bad value in vector of '" + word + "'");
    if (!emb.vectors.emplace(word, std::move(vec)).second) {
      ++emb.duplicate_count;
      log::warn(where(source, line_no) + ": duplicate word '" + word + "', keeping first");
    }
  }
  return emb;
}

PretrainedEmbeddings load_word_embeddings(const std::string& path) {
  auto in = open_input(path);
  return parse_word_embeddings(in, path);
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticParams& p) {
  if (p.n_clusters == 0 || p.images_per_cluster == 0 || p.feature_dim == 0 || p.vocab_per_cluster == 0)
    fail(ErrorCode::invalid_argument, "synthetic corpus counts must be positive");
  if (!(p.noise_sigma >= 0.0)) fail(ErrorCode::invalid_argument, "noise_sigma must be non-negative");

  Rng rng(p.seed);
  SyntheticCorpus corpus;
  std::vector<ImageRecord> records;
  for (std::size_t c = 0; c < p.n_clusters; ++c) {
    std::vector<double> proto(p.feature_dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& v : proto) {
        v = rng.normal();
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : proto) v *= inv;
    corpus.prototypes.push_back(proto);
  }

  char id[64];
  for (std::size_t c = 0; c < p.n_clusters; ++c) {
    for (std::size_t i = 0; i < p.images_per_cluster; ++i) {
      std::snprintf(id, sizeof id, "c%03zui%04zu", c, i);
      ImageRecord rec{id, corpus.prototypes[c]};
      if (p.noise_sigma > 0.0)
        for (auto& v : rec.features) v += p.noise_sigma * rng.normal();
      for (std::size_t j = 0; j < kCaptionsPerImage; ++j) {
        const std::size_t len = 4 + rng.uniform_index(5);
        std::string text;
        for (std::size_t t = 0; t < len; ++t) {
          char tok[48];
          std::snprintf(tok, sizeof tok, "k%zuw%zu", c, rng.uniform_index(p.vocab_per_cluster));
          if (!text.empty()) text += ' ';
          text += tok;
        }
        corpus.captions.push_back(Caption{rec.image_id, static_cast<int>(j), std::move(text), {}});
      }
      records.push_back(std::move(rec));
      corpus.cluster_of_image.push_back(c);
    }
  }
  corpus.images = FeatureStore(p.feature_dim, std::move(records));
  return corpus;
}

std::string read_file(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorCode::io, "write to '" + path + "' failed");
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string crc32_hex(std::string_view bytes) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of(bytes));
  return buf;
}

}  // namespace siamret
