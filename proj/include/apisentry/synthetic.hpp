#pragma once

#include <cstdint>
#include <vector>

#include "apisentry/corpus.hpp"
#include "apisentry/ngram.hpp"

namespace apisentry::synthetic {

struct DetectionCorpusSpec {
  std::size_t goodware = 60;
  std::size_t malware = 60;
  std::size_t min_len = 20;
  std::size_t max_len = 40;
  std::uint32_t vocabulary_size = 40;
  NGram planted{7, 11, 13};
  std::uint64_t seed = 42;
};

/// Random traces where the planted 3-gram occurs in every malware trace and
/// in no goodware trace. Goodware still carries partial matches (the planted
/// 2-grams followed or preceded by other calls) so that only the full 3-gram
/// separates the classes.
Corpus detection_corpus(const DetectionCorpusSpec& spec);

struct CyclicCorpusSpec {
  std::size_t traces = 200;
  std::vector<ApiCallId> pattern{3, 1, 4, 0, 2};
  std::size_t min_len = 8;
  std::size_t max_len = 16;
  std::uint32_t vocabulary_size = 5;
  std::uint64_t seed = 42;
};

/// Traces that repeat `pattern` from a random phase; every trace is malware.
Corpus cyclic_corpus(const CyclicCorpusSpec& spec);

}  // namespace apisentry::synthetic
