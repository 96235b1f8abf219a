#include "apisentry/ngram.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "apisentry/error.hpp"
#include "apisentry/textio.hpp"

namespace apisentry {

NGram::NGram(std::initializer_list<ApiCallId> ids)
    : NGram(std::span<const ApiCallId>(ids.begin(), ids.size())) {}

NGram::NGram(std::span<const ApiCallId> ids) {
  if (ids.size() < 2 || ids.size() > 3) throw ValidationError("n-gram length must be 2 or 3");
  std::copy(ids.begin(), ids.end(), ids_.begin());
  size_ = static_cast<std::uint8_t>(ids.size());
}

std::string NGram::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < size_; ++i) {
    if (i) out += ',';
    out += std::to_string(ids_[i]);
  }
  return out;
}

NGram NGram::parse(std::string_view text) {
  std::vector<ApiCallId> ids;
  for (auto part : textio::split(text, ',')) {
    ids.push_back(static_cast<ApiCallId>(textio::parse_uint(part, "n-gram id")));
  }
  return NGram(ids);
}

std::size_t NGramHash::operator()(const NGram& g) const noexcept {
  std::size_t h = g.size();
  for (auto id : g.ids()) h = h * 1000003u ^ id;
  return h;
}

std::uint32_t FeatureVector::count(std::uint32_t column) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), column,
                             [](const auto& e, std::uint32_t c) { return e.first < c; });
  return it != entries.end() && it->first == column ? it->second : 0;
}

std::optional<std::uint32_t> NGramVocabulary::column_of(const NGram& gram) const {
  auto it = index_.find(gram);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void NGramVocabulary::add(const NGram& gram, std::uint64_t train_count) {
  if (index_.contains(gram)) throw ValidationError("duplicate vocabulary entry " + gram.to_string());
  index_.emplace(gram, static_cast<std::uint32_t>(entries_.size()));
  entries_.push_back(gram);
  counts_.push_back(train_count);
}

std::string NGramVocabulary::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    out << i << '\t' << entries_[i].to_string() << '\t' << counts_[i] << '\n';
  }
  return out.str();
}

NGramVocabulary NGramVocabulary::parse(std::string_view content) {
  NGramVocabulary vocab;
  std::size_t line_no = 0;
  for (auto line : textio::lines(content)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto fields = textio::split(line, '\t');
    const auto where = "vocabulary line " + std::to_string(line_no);
    if (fields.size() != 3) throw ValidationError(where + ": expected 3 tab-separated fields");
    if (textio::parse_uint(fields[0], where) != vocab.size()) {
      throw ValidationError(where + ": indices must be dense and ascending");
    }
    vocab.add(NGram::parse(fields[1]), textio::parse_uint(fields[2], where));
  }
  return vocab;
}

std::vector<NGram> extract_ngrams(std::span<const ApiCallId> calls, std::size_t n) {
  if (n != 2 && n != 3) throw ValidationError("n must be 2 or 3");
  std::vector<NGram> out;
  if (calls.size() < n) return out;
  out.reserve(calls.size() - n + 1);
  for (std::size_t i = 0; i + n <= calls.size(); ++i) out.emplace_back(calls.subspan(i, n));
  return out;
}

NGramVocabulary build_vocabulary(const Corpus& corpus, std::uint64_t min_count,
                                 std::optional<std::size_t> top_k) {
  if (corpus.traces.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::vector<NGram> order;
  std::unordered_map<NGram, std::uint64_t, NGramHash> counts;
  for (const auto& trace : corpus.traces) {
    for (std::size_t n : {2u, 3u}) {
      for (const auto& gram : extract_ngrams(trace.calls, n)) {
        auto [it, inserted] = counts.try_emplace(gram, 0);
        if (inserted) order.push_back(gram);
        ++it->second;
      }
    }
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (counts[order[i]] >= min_count) kept.push_back(i);
  }
  if (top_k && kept.size() > *top_k) {
    std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
      return counts[order[a]] > counts[order[b]];
    });
    kept.resize(*top_k);
    std::sort(kept.begin(), kept.end());
  }

  NGramVocabulary vocab;
  vocab.set_origin(corpus.provenance, min_count);
  for (auto i : kept) vocab.add(order[i], counts[order[i]]);
  return vocab;
}

FeatureVector vectorize(std::span<const ApiCallId> calls, const NGramVocabulary& vocab) {
  FeatureVector out;
  out.dimension = static_cast<std::uint32_t>(vocab.size());
  std::vector<std::uint32_t> hits;
  for (std::size_t n : {2u, 3u}) {
    for (std::size_t i = 0; i + n <= calls.size(); ++i) {
      if (auto col = vocab.column_of(NGram(calls.subspan(i, n)))) hits.push_back(*col);
    }
  }
  std::sort(hits.begin(), hits.end());
  for (auto col : hits) {
    if (!out.entries.empty() && out.entries.back().first == col) {
      ++out.entries.back().second;
    } else {
      out.entries.emplace_back(col, 1);
    }
  }
  return out;
}

FeatureMatrix vectorize_corpus(const Corpus& corpus, const NGramVocabulary& vocab) {
  FeatureMatrix matrix;
  matrix.cols = static_cast<std::uint32_t>(vocab.size());
  matrix.rows.reserve(corpus.traces.size());
  for (const auto& trace : corpus.traces) matrix.rows.push_back(vectorize(trace.calls, vocab));
  return matrix;
}

std::pair<std::uint64_t, std::uint64_t> class_frequency(const Corpus& corpus, const NGram& gram) {
  std::pair<std::uint64_t, std::uint64_t> out{0, 0};
  const auto n = gram.size();
  for (const auto& trace : corpus.traces) {
    if (!trace.label) throw ValidationError("class_frequency needs a labeled corpus");
    std::uint64_t hits = 0;
    const auto& calls = trace.calls;
    for (std::size_t i = 0; i + n <= calls.size(); ++i) {
      if (std::equal(gram.ids().begin(), gram.ids().end(), calls.begin() + static_cast<std::ptrdiff_t>(i))) ++hits;
    }
    (*trace.label == Label::goodware ? out.first : out.second) += hits;
  }
  return out;
}

std::vector<PrefixSample> prefix_samples(std::span<const ApiCallId> calls) {
  std::vector<PrefixSample> out;
  if (calls.size() < 3) return out;
  out.reserve(calls.size() - 2);
  for (std::size_t n = 2; n < calls.size(); ++n) {
    out.push_back({{calls.begin(), calls.begin() + static_cast<std::ptrdiff_t>(n)}, calls[n]});
  }
  return out;
}

std::vector<PrefixSample> prefix_samples(const Corpus& corpus) {
  std::vector<PrefixSample> out;
  for (const auto& trace : corpus.traces) {
    auto samples = prefix_samples(trace.calls);
    std::move(samples.begin(), samples.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<ApiCallId> pad_prefix(std::span<const ApiCallId> prefix, std::size_t max_len,
                                  ApiCallId pad_id) {
  if (prefix.size() > max_len) {
    throw ValidationError("prefix of length " + std::to_string(prefix.size()) +
                          " exceeds max_len " + std::to_string(max_len));
  }
  std::vector<ApiCallId> out(max_len - prefix.size(), pad_id);
  out.insert(out.end(), prefix.begin(), prefix.end());
  return out;
}

std::string serialize_matrix(const FeatureMatrix& matrix) {
  std::ostringstream out;
  out << matrix.rows.size() << ',' << matrix.cols << '\n';
  for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
    for (const auto& [col, count] : matrix.rows[r].entries) out << r << ',' << col << ',' << count << '\n';
  }
  return out.str();
}

FeatureMatrix parse_matrix(std::string_view content) {
  const auto all = textio::lines(content);
  if (all.empty()) throw ValidationError("matrix: missing 'rows,cols' header");
  const auto header = textio::split(all[0], ',');
  if (header.size() != 2) throw ValidationError("matrix: header must be 'rows,cols'");
  const auto n_rows = textio::parse_uint(header[0], "matrix rows");
  FeatureMatrix matrix;
  matrix.cols = static_cast<std::uint32_t>(textio::parse_uint(header[1], "matrix cols"));
  matrix.rows.assign(n_rows, FeatureVector{matrix.cols, {}});
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (textio::trim(all[i]).empty()) continue;
    const auto where = "matrix line " + std::to_string(i + 1);
    const auto fields = textio::split(all[i], ',');
    if (fields.size() != 3) throw ValidationError(where + ": expected row,col,count");
    const auto r = textio::parse_uint(fields[0], where);
    const auto c = textio::parse_uint(fields[1], where);
    const auto v = textio::parse_uint(fields[2], where);
    if (r >= n_rows || c >= matrix.cols || v == 0) throw ValidationError(where + ": entry out of range");
    auto& entries = matrix.rows[r].entries;
    if (!entries.empty() && entries.back().first >= c) {
      throw ValidationError(where + ": columns must ascend within a row");
    }
    entries.emplace_back(static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(v));
  }
  return matrix;
}

std::string serialize_labels(std::span<const int> labels) {
  std::string out;
  for (int y : labels) {
    out += std::to_string(y);
    out += '\n';
  }
  return out;
}

std::vector<int> parse_labels(std::string_view content) {
  std::vector<int> out;
  std::size_t line_no = 0;
  for (auto line : textio::lines(content)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    out.push_back(static_cast<int>(textio::parse_int(line, "labels line " + std::to_string(line_no))));
  }
  return out;
}

std::vector<int> labels_of(const Corpus& corpus) {
  std::vector<int> out;
  out.reserve(corpus.traces.size());
  for (const auto& trace : corpus.traces) {
    if (!trace.label) throw ValidationError("trace " + trace.id + " is unlabeled");
    out.push_back(to_int(*trace.label));
  }
  return out;
}

}  // namespace apisentry
