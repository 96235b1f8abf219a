#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace apisentry {

using ApiCallId = std::uint32_t;

enum class Label : std::uint8_t { goodware = 0, malware = 1 };

inline int to_int(Label label) { return static_cast<int>(label); }

/// One process's API-call sequence. `label` is empty for prediction-only
/// corpora.
struct LabeledTrace {
  std::string id;
  std::vector<ApiCallId> calls;
  std::optional<Label> label;

  bool operator==(const LabeledTrace&) const = default;
};

struct Corpus {
  std::vector<LabeledTrace> traces;
  std::uint32_t vocabulary_size = 0;
  std::string provenance;

  bool operator==(const Corpus&) const = default;

  std::size_t size() const { return traces.size(); }
  /// {goodware, malware} counts; unlabeled traces are not counted.
  std::array<std::size_t, 2> class_counts() const;
  /// Total number of API calls over all traces.
  std::size_t total_calls() const;
};

enum class CorpusFormat { canonical_csv, jsonl };

/// Parses a corpus. `declared_vocab` overrides the "#vocab=" header (CSV)
/// and the inferred 1 + max id. Errors name the offending line.
Corpus parse_corpus(std::istream& in, CorpusFormat format, std::string provenance = {},
                    std::optional<std::uint32_t> declared_vocab = std::nullopt);
Corpus parse_corpus(std::string_view content, CorpusFormat format, std::string provenance = {},
                    std::optional<std::uint32_t> declared_vocab = std::nullopt);

void write_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format);
std::string serialize_corpus(const Corpus& corpus, CorpusFormat format);

/// Picks the format from the file extension (.jsonl / .json → jsonl).
CorpusFormat format_for_path(const std::string& path);

LabeledTrace collapse_consecutive_repeats(LabeledTrace trace);
LabeledTrace truncate_prefix(LabeledTrace trace, std::size_t max_len);

/// Applies collapse (optional) then prefix truncation to every trace.
Corpus canonicalize(Corpus corpus, bool collapse, std::size_t max_len);

struct SplitSpec {
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
  bool stratified = true;
};

/// Returns {train, test}. Each side keeps the input trace order.
std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus, const SplitSpec& spec);

/// Duplicates randomly drawn minority traces (with replacement) until both
/// classes match the majority count. Originals come first, in input order.
Corpus random_oversample(const Corpus& corpus, std::uint64_t seed);

/// Dataset adapters. Dataset 1: CSV with a header row, a hash column, the
/// call columns and a trailing 0/1 "malware" column. Dataset 2: one trace
/// per line of comma- or whitespace-separated integer ids, all malware.
Corpus adapt_dataset1(std::string_view content);
Corpus adapt_dataset2(std::string_view content);

}  // namespace apisentry
