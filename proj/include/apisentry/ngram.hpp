#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "apisentry/corpus.hpp"

namespace apisentry {

/// Ordered tuple of 2 or 3 consecutive call ids.
class NGram {
 public:
  NGram() = default;
  NGram(std::initializer_list<ApiCallId> ids);
  explicit NGram(std::span<const ApiCallId> ids);

  std::size_t size() const { return size_; }
  ApiCallId operator[](std::size_t i) const { return ids_[i]; }
  std::span<const ApiCallId> ids() const { return {ids_.data(), size_}; }
  std::vector<ApiCallId> to_vector() const { return {ids_.begin(), ids_.begin() + size_}; }

  /// "a,b[,c]"
  std::string to_string() const;
  static NGram parse(std::string_view text);

  bool operator==(const NGram& other) const = default;
  auto operator<=>(const NGram& other) const = default;

 private:
  std::array<ApiCallId, 3> ids_{0, 0, 0};
  std::uint8_t size_ = 0;
};

struct NGramHash {
  std::size_t operator()(const NGram& g) const noexcept;
};

/// Sparse non-negative count vector of fixed dimension. Entries are sorted
/// by column and every stored count is at least 1.
struct FeatureVector {
  std::uint32_t dimension = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;

  std::uint32_t count(std::uint32_t column) const;
  double value(std::uint32_t column) const { return count(column); }
  bool operator==(const FeatureVector&) const = default;
};

/// Row-major sparse count matrix.
struct FeatureMatrix {
  std::uint32_t cols = 0;
  std::vector<FeatureVector> rows;

  std::size_t size() const { return rows.size(); }
  bool operator==(const FeatureMatrix&) const = default;
};

class NGramVocabulary {
 public:
  NGramVocabulary() = default;

  std::size_t size() const { return entries_.size(); }
  const NGram& entry(std::size_t column) const { return entries_[column]; }
  std::uint64_t train_count(std::size_t column) const { return counts_[column]; }
  std::optional<std::uint32_t> column_of(const NGram& gram) const;

  const std::string& built_from() const { return built_from_; }
  std::uint64_t min_count() const { return min_count_; }

  /// Appends `gram` as the next column.
  void add(const NGram& gram, std::uint64_t train_count);

  /// "<index>\t<id>[,<id>[,<id>]]\t<train_count>" per line.
  std::string serialize() const;
  static NGramVocabulary parse(std::string_view content);

  void set_origin(std::string built_from, std::uint64_t min_count) {
    built_from_ = std::move(built_from);
    min_count_ = min_count;
  }

 private:
  std::vector<NGram> entries_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<NGram, std::uint32_t, NGramHash> index_;
  std::string built_from_;
  std::uint64_t min_count_ = 0;
};

/// Sliding windows of length n (2 or 3), in order.
std::vector<NGram> extract_ngrams(std::span<const ApiCallId> calls, std::size_t n);

/// All 2-grams and 3-grams seen at least `min_count` times. Columns follow
/// first occurrence: trace by trace, a trace's 2-grams before its 3-grams.
/// `top_k` keeps the k most frequent (ties by first occurrence).
NGramVocabulary build_vocabulary(const Corpus& corpus, std::uint64_t min_count = 1,
                                 std::optional<std::size_t> top_k = std::nullopt);

FeatureVector vectorize(std::span<const ApiCallId> calls, const NGramVocabulary& vocab);
FeatureMatrix vectorize_corpus(const Corpus& corpus, const NGramVocabulary& vocab);

/// Occurrence counts of `gram` in {goodware, malware} traces.
std::pair<std::uint64_t, std::uint64_t> class_frequency(const Corpus& corpus, const NGram& gram);

struct PrefixSample {
  std::vector<ApiCallId> prefix;
  ApiCallId next = 0;
  bool operator==(const PrefixSample&) const = default;
};

/// For n = 2 .. len-1: (first n calls, call n+1). Empty below length 3.
std::vector<PrefixSample> prefix_samples(std::span<const ApiCallId> calls);
std::vector<PrefixSample> prefix_samples(const Corpus& corpus);

/// Left-pads with `pad_id` up to `max_len`.
std::vector<ApiCallId> pad_prefix(std::span<const ApiCallId> prefix, std::size_t max_len,
                                  ApiCallId pad_id);

/// Matrix text format: "rows,cols" header then "row,col,count" triplets.
std::string serialize_matrix(const FeatureMatrix& matrix);
FeatureMatrix parse_matrix(std::string_view content);

/// Labels file: one 0/1 per line.
std::string serialize_labels(std::span<const int> labels);
std::vector<int> parse_labels(std::string_view content);
std::vector<int> labels_of(const Corpus& corpus);

}  // namespace apisentry
