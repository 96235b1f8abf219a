#include "apisentry/synthetic.hpp"

#include <algorithm>

#include "apisentry/error.hpp"
#include "apisentry/rng.hpp"

namespace apisentry::synthetic {

namespace {

bool contains(const std::vector<ApiCallId>& calls, const NGram& gram) {
  const auto ids = gram.ids();
  return std::search(calls.begin(), calls.end(), ids.begin(), ids.end()) != calls.end();
}

ApiCallId draw_other(Rng& rng, std::uint32_t vocab, ApiCallId avoid) {
  ApiCallId id = static_cast<ApiCallId>(rng.below(vocab - 1));
  return id >= avoid ? id + 1 : id;
}

}  // namespace

Corpus detection_corpus(const DetectionCorpusSpec& spec) {
  if (spec.planted.size() != 3) throw ValidationError("planted n-gram must be a 3-gram");
  if (spec.vocabulary_size < 4 || spec.min_len < 6 || spec.max_len < spec.min_len) {
    throw ValidationError("detection corpus spec too small");
  }
  for (auto id : spec.planted.ids()) {
    if (id >= spec.vocabulary_size) throw ValidationError("planted id outside vocabulary");
  }
  Rng rng(spec.seed, "synthetic-detection");
  Corpus corpus;
  corpus.vocabulary_size = spec.vocabulary_size;
  corpus.provenance = "synthetic-detection";
  const auto a = spec.planted[0], b = spec.planted[1], c = spec.planted[2];
  const std::size_t total = spec.goodware + spec.malware;
  for (std::size_t k = 0; k < total; ++k) {
    // Interleave the classes so neither sits in one contiguous block.
    const bool malware = (k % 2 == 1 && k / 2 < spec.malware) || k / 2 >= spec.goodware;
    LabeledTrace trace;
    trace.id = "s" + std::to_string(k);
    trace.label = malware ? Label::malware : Label::goodware;
    const auto len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    do {
      trace.calls.clear();
      for (std::size_t i = 0; i < len; ++i) trace.calls.push_back(static_cast<ApiCallId>(rng.below(spec.vocabulary_size)));
      const auto at = rng.below(len - 2);
      if (malware) {
        trace.calls[at] = a;
        trace.calls[at + 1] = b;
        trace.calls[at + 2] = c;
      } else if (rng.below(2) == 0) {
        trace.calls[at] = a;
        trace.calls[at + 1] = b;
        trace.calls[at + 2] = draw_other(rng, spec.vocabulary_size, c);
      } else {
        trace.calls[at] = draw_other(rng, spec.vocabulary_size, a);
        trace.calls[at + 1] = b;
        trace.calls[at + 2] = c;
      }
    } while (!malware && contains(trace.calls, spec.planted));
    corpus.traces.push_back(std::move(trace));
  }
  return corpus;
}

Corpus cyclic_corpus(const CyclicCorpusSpec& spec) {
  if (spec.pattern.size() < 2 || spec.min_len < 3 || spec.max_len < spec.min_len) {
    throw ValidationError("cyclic corpus spec too small");
  }
  for (auto id : spec.pattern) {
    if (id >= spec.vocabulary_size) throw ValidationError("pattern id outside vocabulary");
  }
  Rng rng(spec.seed, "synthetic-cyclic");
  Corpus corpus;
  corpus.vocabulary_size = spec.vocabulary_size;
  corpus.provenance = "synthetic-cyclic";
  for (std::size_t k = 0; k < spec.traces; ++k) {
    LabeledTrace trace;
    trace.id = "c" + std::to_string(k);
    trace.label = Label::malware;
    const auto len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    const auto phase = rng.below(spec.pattern.size());
    for (std::size_t i = 0; i < len; ++i) trace.calls.push_back(spec.pattern[(phase + i) % spec.pattern.size()]);
    corpus.traces.push_back(std::move(trace));
  }
  return corpus;
}

}  // namespace apisentry::synthetic
