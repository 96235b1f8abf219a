#include "apisentry/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "apisentry/error.hpp"
#include "apisentry/rng.hpp"
#include "apisentry/textio.hpp"

namespace apisentry {

std::array<std::size_t, 2> Corpus::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& trace : traces) {
    if (trace.label) ++counts[to_int(*trace.label)];
  }
  return counts;
}

std::size_t Corpus::total_calls() const {
  std::size_t total = 0;
  for (const auto& trace : traces) total += trace.calls.size();
  return total;
}

namespace {

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

std::optional<Label> parse_label(std::string_view field, std::size_t line_no) {
  field = textio::trim(field);
  if (field == "0") return Label::goodware;
  if (field == "1") return Label::malware;
  if (field == "-") return std::nullopt;
  throw ValidationError(at_line(line_no) + "label must be 0, 1 or '-', got '" + std::string(field) +
                        "'");
}

// Fills in / checks vocabulary_size once all traces are known.
void finish_vocabulary(Corpus& corpus, std::optional<std::uint32_t> declared,
                       const std::vector<std::size_t>& line_of) {
  if (corpus.traces.empty()) throw ValidationError("no traces");
  ApiCallId max_id = 0;
  for (const auto& trace : corpus.traces) {
    max_id = std::max(max_id, *std::max_element(trace.calls.begin(), trace.calls.end()));
  }
  if (!declared) {
    corpus.vocabulary_size = max_id + 1;
    return;
  }
  corpus.vocabulary_size = *declared;
  for (std::size_t i = 0; i < corpus.traces.size(); ++i) {
    for (ApiCallId id : corpus.traces[i].calls) {
      if (id >= *declared) {
        throw ValidationError(at_line(line_of[i]) + "call id " + std::to_string(id) +
                              " >= vocabulary size " + std::to_string(*declared));
      }
    }
  }
}

Corpus parse_csv(std::string_view content, std::string provenance,
                 std::optional<std::uint32_t> declared_vocab) {
  Corpus corpus;
  corpus.provenance = std::move(provenance);
  std::optional<std::uint32_t> header_vocab;
  std::vector<std::size_t> line_of;
  std::size_t line_no = 0;
  for (auto line : textio::lines(content)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    if (line.starts_with("#")) {
      constexpr std::string_view kVocab = "#vocab=";
      if (line_no == 1 && line.starts_with(kVocab)) {
        const auto value = textio::parse_uint(line.substr(kVocab.size()), at_line(line_no) + "vocab");
        if (value == 0 || value > UINT32_MAX) {
          throw ValidationError(at_line(line_no) + "vocab must be positive");
        }
        header_vocab = static_cast<std::uint32_t>(value);
        continue;
      }
      throw ValidationError(at_line(line_no) + "unexpected comment line");
    }
    const auto fields = textio::split(line, ',');
    LabeledTrace trace;
    trace.id = std::to_string(corpus.traces.size());
    trace.label = parse_label(fields[0], line_no);
    if (fields.size() < 2) throw ValidationError(at_line(line_no) + "empty sequence");
    trace.calls.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto value = textio::parse_uint(fields[i], at_line(line_no) + "call id");
      if (value > UINT32_MAX) throw ValidationError(at_line(line_no) + "call id out of range");
      trace.calls.push_back(static_cast<ApiCallId>(value));
    }
    corpus.traces.push_back(std::move(trace));
    line_of.push_back(line_no);
  }
  finish_vocabulary(corpus, declared_vocab ? declared_vocab : header_vocab, line_of);
  return corpus;
}

Corpus parse_jsonl(std::string_view content, std::string provenance,
                   std::optional<std::uint32_t> declared_vocab) {
  Corpus corpus;
  corpus.provenance = std::move(provenance);
  std::vector<std::size_t> line_of;
  std::size_t line_no = 0;
  for (auto line : textio::lines(content)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(at_line(line_no) + "malformed JSON (" + e.what() + ")");
    }
    if (!row.is_object()) throw ValidationError(at_line(line_no) + "expected an object");
    LabeledTrace trace;
    if (auto it = row.find("id"); it != row.end() && !it->is_null()) {
      trace.id = it->is_string() ? it->get<std::string>() : it->dump();
    } else {
      trace.id = std::to_string(corpus.traces.size());
    }
    if (auto it = row.find("label"); it != row.end() && !it->is_null()) {
      if (!it->is_number_integer() || (it->get<int>() != 0 && it->get<int>() != 1)) {
        throw ValidationError(at_line(line_no) + "label must be 0, 1 or null");
      }
      trace.label = static_cast<Label>(it->get<int>());
    }
    auto calls = row.find("calls");
    if (calls == row.end() || !calls->is_array()) {
      throw ValidationError(at_line(line_no) + "missing 'calls' array");
    }
    if (calls->empty()) throw ValidationError(at_line(line_no) + "empty sequence");
    for (const auto& value : *calls) {
      if (!value.is_number_unsigned() || value.get<std::uint64_t>() > UINT32_MAX) {
        throw ValidationError(at_line(line_no) + "call ids must be non-negative integers");
      }
      trace.calls.push_back(value.get<ApiCallId>());
    }
    corpus.traces.push_back(std::move(trace));
    line_of.push_back(line_no);
  }
  finish_vocabulary(corpus, declared_vocab, line_of);
  return corpus;
}

}  // namespace

Corpus parse_corpus(std::string_view content, CorpusFormat format, std::string provenance,
                    std::optional<std::uint32_t> declared_vocab) {
  return format == CorpusFormat::canonical_csv
             ? parse_csv(content, std::move(provenance), declared_vocab)
             : parse_jsonl(content, std::move(provenance), declared_vocab);
}

Corpus parse_corpus(std::istream& in, CorpusFormat format, std::string provenance,
                    std::optional<std::uint32_t> declared_vocab) {
  const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_corpus(std::string_view(content), format, std::move(provenance), declared_vocab);
}

void write_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format) {
  if (format == CorpusFormat::canonical_csv) {
    out << "#vocab=" << corpus.vocabulary_size << '\n';
    for (const auto& trace : corpus.traces) {
      out << (trace.label ? std::to_string(to_int(*trace.label)) : std::string("-"));
      for (ApiCallId id : trace.calls) out << ',' << id;
      out << '\n';
    }
    return;
  }
  for (const auto& trace : corpus.traces) {
    nlohmann::json row;
    row["id"] = trace.id;
    row["label"] = trace.label ? nlohmann::json(to_int(*trace.label)) : nlohmann::json(nullptr);
    row["calls"] = trace.calls;
    out << row.dump() << '\n';
  }
}

std::string serialize_corpus(const Corpus& corpus, CorpusFormat format) {
  std::ostringstream out;
  write_corpus(out, corpus, format);
  return out.str();
}

CorpusFormat format_for_path(const std::string& path) {
  if (path.ends_with(".jsonl") || path.ends_with(".json")) return CorpusFormat::jsonl;
  return CorpusFormat::canonical_csv;
}

LabeledTrace collapse_consecutive_repeats(LabeledTrace trace) {
  auto& calls = trace.calls;
  calls.erase(std::unique(calls.begin(), calls.end()), calls.end());
  return trace;
}

LabeledTrace truncate_prefix(LabeledTrace trace, std::size_t max_len) {
  if (max_len < 2) throw ValidationError("max_len must be at least 2");
  if (trace.calls.size() > max_len) trace.calls.resize(max_len);
  return trace;
}

Corpus canonicalize(Corpus corpus, bool collapse, std::size_t max_len) {
  for (auto& trace : corpus.traces) {
    if (collapse) trace = collapse_consecutive_repeats(std::move(trace));
    trace = truncate_prefix(std::move(trace), max_len);
  }
  return corpus;
}

namespace {

Corpus with_traces(const Corpus& like, const std::vector<std::size_t>& indices) {
  Corpus out;
  out.vocabulary_size = like.vocabulary_size;
  out.provenance = like.provenance;
  out.traces.reserve(indices.size());
  for (auto i : indices) out.traces.push_back(like.traces[i]);
  return out;
}

}  // namespace

std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    groups.resize(2);
    for (std::size_t i = 0; i < corpus.traces.size(); ++i) {
      const auto& label = corpus.traces[i].label;
      if (!label) throw ValidationError("stratified split needs labels (trace " + corpus.traces[i].id + ")");
      groups[to_int(*label)].push_back(i);
    }
  } else {
    groups.emplace_back(corpus.traces.size());
    for (std::size_t i = 0; i < corpus.traces.size(); ++i) groups[0][i] = i;
  }

  Rng rng(spec.seed, "split");
  std::vector<char> in_test(corpus.traces.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& members = groups[g];
    const auto n_test = static_cast<std::size_t>(std::llround(members.size() * spec.test_fraction));
    if (spec.stratified && (members.size() < 2 || n_test == 0 || n_test == members.size())) {
      throw ValidationError("class " + std::to_string(g) + " has " + std::to_string(members.size()) +
                            " traces; too small to stratify at test_fraction " +
                            textio::format_double(spec.test_fraction));
    }
    if (!spec.stratified && (n_test == 0 || n_test == members.size())) {
      throw ValidationError("split leaves one side empty");
    }
    rng.shuffle(members);
    for (std::size_t k = 0; k < n_test; ++k) in_test[members[k]] = 1;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < corpus.traces.size(); ++i) {
    (in_test[i] ? test_idx : train_idx).push_back(i);
  }
  return {with_traces(corpus, train_idx), with_traces(corpus, test_idx)};
}

Corpus random_oversample(const Corpus& corpus, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < corpus.traces.size(); ++i) {
    const auto& label = corpus.traces[i].label;
    if (!label) throw ValidationError("oversampling needs labels (trace " + corpus.traces[i].id + ")");
    by_class[to_int(*label)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw ValidationError("oversampling needs both classes present");
  }
  Corpus out = corpus;
  const auto& minority = by_class[0].size() < by_class[1].size() ? by_class[0] : by_class[1];
  const auto target = std::max(by_class[0].size(), by_class[1].size());
  Rng rng(seed, "oversample");
  for (std::size_t k = minority.size(); k < target; ++k) {
    out.traces.push_back(corpus.traces[minority[rng.below(minority.size())]]);
  }
  return out;
}

namespace {

constexpr std::uint32_t kDataset1Vocab = 307;
constexpr std::uint32_t kDataset2Vocab = 342;

}  // namespace

Corpus adapt_dataset1(std::string_view content) {
  Corpus corpus;
  corpus.provenance = "dataset1";
  corpus.vocabulary_size = kDataset1Vocab;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (auto line : textio::lines(content)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = textio::split(line, ',');
    if (fields.size() < 3) throw ValidationError(at_line(line_no) + "expected hash, calls, label");
    LabeledTrace trace;
    trace.id = std::string(textio::trim(fields.front()));
    trace.label = parse_label(fields.back(), line_no);
    if (!trace.label) throw ValidationError(at_line(line_no) + "dataset rows must be labeled");
    for (std::size_t i = 1; i + 1 < fields.size(); ++i) {
      const auto id = textio::parse_uint(fields[i], at_line(line_no) + "call id");
      if (id >= kDataset1Vocab) {
        throw ValidationError(at_line(line_no) + "call id " + std::to_string(id) + " out of range");
      }
      trace.calls.push_back(static_cast<ApiCallId>(id));
    }
    corpus.traces.push_back(std::move(trace));
  }
  if (corpus.traces.empty()) throw ValidationError("no traces");
  return corpus;
}

Corpus adapt_dataset2(std::string_view content) {
  Corpus corpus;
  corpus.provenance = "dataset2";
  corpus.vocabulary_size = kDataset2Vocab;
  std::size_t line_no = 0;
  for (auto line : textio::lines(content)) {
    ++line_no;
    std::string normalized(line);
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream tokens(normalized);
    LabeledTrace trace;
    trace.id = std::to_string(corpus.traces.size());
    trace.label = Label::malware;
    std::string token;
    while (tokens >> token) {
      const auto id = textio::parse_uint(token, at_line(line_no) + "call id");
      if (id >= kDataset2Vocab) {
        throw ValidationError(at_line(line_no) + "call id " + std::to_string(id) + " out of range");
      }
      trace.calls.push_back(static_cast<ApiCallId>(id));
    }
    if (!trace.calls.empty()) corpus.traces.push_back(std::move(trace));
  }
  if (corpus.traces.empty()) throw ValidationError("no traces");
  return corpus;
}

}  // namespace apisentry
