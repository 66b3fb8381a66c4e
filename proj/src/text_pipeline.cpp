#include "siamret/text_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "siamret/error.hpp"

namespace siamret {

std::string_view to_string(TermMode mode) {
  switch (mode) {
    case TermMode::unigram: return "unigram";
    case TermMode::bigram: return "2g";
    case TermMode::trigram: return "3g";
    case TermMode::trigram_skip: return "tk3";
  }
  return "unigram";
}

TermMode parse_term_mode(std::string_view text) {
  if (text == "unigram" || text == "1g") return TermMode::unigram;
  if (text == "2g" || text == "bigram") return TermMode::bigram;
  if (text == "3g" || text == "trigram") return TermMode::trigram;
  if (text == "tk3" || text == "trigram_skip") return TermMode::trigram_skip;
  fail(ErrorCode::invalid_argument, "unknown term mode '" + std::string(text) + "'");
}

std::string_view to_string(Weighting weighting) {
  return weighting == Weighting::binary ? "binary" : "tfidf";
}

Weighting parse_weighting(std::string_view text) {
  if (text == "binary") return Weighting::binary;
  if (text == "tfidf") return Weighting::tfidf;
  fail(ErrorCode::invalid_argument, "unknown weighting '" + std::string(text) + "'");
}

std::vector<std::string> normalize_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && current != "a" && current != "an" && current != "the")
      tokens.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    // Bytes >= 0x80 (UTF-8 sequences) are not ASCII alphanumerics and split.
    if (uc < 0x80 && std::isalnum(uc)) current += static_cast<char>(std::tolower(uc));
    else flush();
  }
  flush();
  return tokens;
}

void tokenize_captions(std::vector<Caption>& captions) {
  for (auto& c : captions) c.tokens = normalize_tokenize(c.text);
}

namespace {

std::string join(std::span<const std::string> tokens, std::initializer_list<std::size_t> at) {
  std::string out;
  for (std::size_t i : at) {
    if (!out.empty()) out += '_';
    out += tokens[i];
  }
  return out;
}

std::string join_all(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += '_';
    out += t;
  }
  return out;
}

}  // namespace

std::vector<std::string> extract_terms(std::span<const std::string> tokens, TermMode mode) {
  const std::size_t n = tokens.size();
  std::vector<std::string> terms;
  if (mode == TermMode::unigram) return {tokens.begin(), tokens.end()};
  const std::size_t order = mode == TermMode::bigram ? 2 : 3;
  if (n == 0) return terms;
  if (n < order) {
    terms.push_back(join_all(tokens));
    return terms;
  }
  for (std::size_t i = 0; i + order <= n; ++i) {
    if (order == 2) {
      terms.push_back(join(tokens, {i, i + 1}));
      continue;
    }
    terms.push_back(join(tokens, {i, i + 1, i + 2}));
    if (mode == TermMode::trigram_skip && i + 3 < n) {
      terms.push_back(join(tokens, {i, i + 2, i + 3}) + kSkipTag);
      terms.push_back(join(tokens, {i, i + 1, i + 3}) + kSkipTag);
    }
  }
  return terms;
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::reindex() {
  index_.clear();
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
}

void Vocabulary::write(std::ostream& out) const {
  out << to_string(mode_) << ' ' << terms_.size() << ' ' << n_docs_ << '\n';
  for (std::size_t i = 0; i < terms_.size(); ++i) out << terms_[i] << '\t' << i << '\t' << doc_freq_[i] << '\n';
}

std::string Vocabulary::serialize() const {
  std::ostringstream ss;
  write(ss);
  return ss.str();
}

Vocabulary Vocabulary::parse(std::istream& in, std::string_view source) {
  Vocabulary v;
  std::string line;
  const std::string src(source);
  if (!std::getline(in, line)) fail(ErrorCode::parse, src + ": empty vocabulary file");
  {
    std::istringstream header(line);
    std::string mode;
    std::size_t size = 0;
    if (!(header >> mode >> size >> v.n_docs_)) fail(ErrorCode::parse, src + ":1: expected 'mode size n_docs'");
    v.mode_ = parse_term_mode(mode);
    v.terms_.resize(size);
    v.doc_freq_.resize(size);
    v.max_size_ = size;
  }
  std::vector<bool> filled(v.terms_.size(), false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) fail(ErrorCode::parse, src + ":" + std::to_string(line_no) + ": expected term<TAB>index<TAB>doc_freq");
    std::size_t index = 0, df = 0;
    try {
      index = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
      df = std::stoull(line.substr(t2 + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::parse, src + ":" + std::to_string(line_no) + ": bad index or doc_freq");
    }
    if (index >= v.terms_.size() || filled[index] || df == 0)
      fail(ErrorCode::parse, src + ":" + std::to_string(line_no) + ": invalid or repeated term index");
    filled[index] = true;
    v.terms_[index] = line.substr(0, t1);
    v.doc_freq_[index] = df;
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end())
    fail(ErrorCode::parse, src + ": vocabulary has missing indices");
  v.reindex();
  if (v.index_.size() != v.terms_.size()) fail(ErrorCode::parse, src + ": duplicate terms");
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "' for reading");
  return parse(in, path);
}

std::string Vocabulary::digest() const { return crc32_hex(serialize()); }

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> token_lists, TermMode mode,
                            std::size_t max_size) {
  if (token_lists.empty()) fail(ErrorCode::invalid_argument, "cannot build a vocabulary from zero captions");
  std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // term -> (count, doc_freq)
  for (const auto& tokens : token_lists) {
    std::unordered_set<std::string> seen;
    for (auto& term : extract_terms(tokens, mode)) {
      auto& s = stats[term];
      ++s.first;
      if (seen.insert(term).second) ++s.second;
    }
  }
  if (stats.empty()) fail(ErrorCode::empty_input, "captions contain zero distinct terms");

  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(stats.begin(), stats.end());
  // stats is already lexicographic, so a stable sort on count keeps the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second.first > b.second.first; });
  if (ranked.size() > max_size) ranked.resize(max_size);

  Vocabulary v;
  v.mode_ = mode;
  v.max_size_ = max_size;
  v.n_docs_ = token_lists.size();
  for (auto& [term, s] : ranked) {
    v.terms_.push_back(term);
    v.doc_freq_.push_back(s.second);
  }
  v.reindex();
  return v;
}

Vocabulary build_vocabulary(const std::vector<Caption>& captions, TermMode mode, std::size_t max_size) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(captions.size());
  for (const auto& c : captions) lists.push_back(c.tokens);
  return build_vocabulary(lists, mode, max_size);
}

SparseVector featurize(std::span<const std::string> tokens, const Vocabulary& vocab, Weighting weighting) {
  std::map<std::uint32_t, std::size_t> counts;
  std::size_t in_vocab = 0;
  for (const auto& term : extract_terms(tokens, vocab.mode())) {
    if (auto idx = vocab.index_of(term)) {
      ++counts[*idx];
      ++in_vocab;
    }
  }
  SparseVector out;
  out.indices.reserve(counts.size());
  out.values.reserve(counts.size());
  const auto n_docs = static_cast<double>(vocab.n_docs());
  for (const auto& [idx, count] : counts) {
    out.indices.push_back(idx);
    if (weighting == Weighting::binary) {
      out.values.push_back(1.0);
    } else {
      const double tf = static_cast<double>(count) / static_cast<double>(in_vocab);
      const double idf = std::log(n_docs / static_cast<double>(vocab.doc_freq(idx)));
      out.values.push_back(tf * idf);
    }
  }
  return out;
}

TokenSequence encode_sequence(std::span<const std::string> tokens, const Vocabulary& vocab) {
  if (vocab.mode() != TermMode::unigram)
    fail(ErrorCode::invalid_argument, "sequence encoding needs a unigram vocabulary");
  TokenSequence seq;
  for (const auto& t : tokens)
    if (auto idx = vocab.index_of(t)) seq.ids.push_back(*idx);
  if (seq.ids.empty()) fail(ErrorCode::empty_input, "no in-vocabulary tokens in sequence");
  return seq;
}

}  // namespace siamret
