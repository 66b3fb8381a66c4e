#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "siamret/corpus_io.hpp"

namespace siamret {

enum class TermMode { unigram, bigram, trigram, trigram_skip };
enum class Weighting { binary, tfidf };

// Canonical names are the CLI spellings: unigram, 2g, 3g, tk3.
std::string_view to_string(TermMode mode);
TermMode parse_term_mode(std::string_view text);
std::string_view to_string(Weighting weighting);
Weighting parse_weighting(std::string_view text);

// Lowercases, splits on every non-alphanumeric byte and drops the articles
// "a", "an" and "the".
std::vector<std::string> normalize_tokenize(std::string_view text);

void tokenize_captions(std::vector<Caption>& captions);

// Skip triples carry a trailing '*' so they never collide with contiguous ones.
inline constexpr char kSkipTag = '*';

// Token sequences shorter than the n-gram order produce the whole sequence as
// a single term.
std::vector<std::string> extract_terms(std::span<const std::string> tokens, TermMode mode);

struct SparseVector {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

struct TokenSequence {
  std::vector<std::uint32_t> ids;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  TermMode mode() const { return mode_; }
  std::size_t size() const { return terms_.size(); }
  std::size_t max_size() const { return max_size_; }
  std::size_t n_docs() const { return n_docs_; }

  const std::string& term(std::size_t index) const { return terms_.at(index); }
  std::size_t doc_freq(std::size_t index) const { return doc_freq_.at(index); }
  std::optional<std::uint32_t> index_of(std::string_view term) const;

  // "mode size n_docs" header, then term<TAB>index<TAB>doc_freq per line.
  void write(std::ostream& out) const;
  std::string serialize() const;
  static Vocabulary parse(std::istream& in, std::string_view source = "<stream>");
  static Vocabulary load(const std::string& path);

  std::string digest() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.mode_ == b.mode_ && a.terms_ == b.terms_ && a.doc_freq_ == b.doc_freq_ &&
           a.n_docs_ == b.n_docs_;
  }

 private:
  friend Vocabulary build_vocabulary(std::span<const std::vector<std::string>>, TermMode, std::size_t);

  void reindex();

  TermMode mode_ = TermMode::unigram;
  std::vector<std::string> terms_;
  std::vector<std::size_t> doc_freq_;
  std::size_t n_docs_ = 0;
  std::size_t max_size_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Keeps the max_size most frequent terms (total occurrences, ties broken
// lexicographically). Document frequencies come from the same token lists.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> token_lists, TermMode mode,
                            std::size_t max_size);
Vocabulary build_vocabulary(const std::vector<Caption>& captions, TermMode mode, std::size_t max_size);

// binary: 1.0 per present term. tfidf: count(w,d)/len_d * ln(n_docs/doc_freq(w)),
// where len_d counts in-vocabulary term occurrences of the caption.
SparseVector featurize(std::span<const std::string> tokens, const Vocabulary& vocab, Weighting weighting);

// Unigram vocabularies only. Throws empty_input when nothing survives.
TokenSequence encode_sequence(std::span<const std::string> tokens, const Vocabulary& vocab);

}  // namespace siamret
