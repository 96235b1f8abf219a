#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "apisentry/cli.hpp"
#include "apisentry/corpus.hpp"
#include "apisentry/error.hpp"
#include "apisentry/eval.hpp"
#include "apisentry/gbdt.hpp"
#include "apisentry/ngram.hpp"
#include "apisentry/pipeline.hpp"
#include "apisentry/seqmodel.hpp"
#include "apisentry/synthetic.hpp"
#include "apisentry/textio.hpp"

namespace py = pybind11;
using namespace apisentry;

namespace {

std::vector<ApiCallId> gram_ids(const NGram& g) { return g.to_vector(); }

py::dict metrics_dict(const MetricsReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["averaging"] = r.averaging == Averaging::weighted ? "weighted" : "binary_positive_class";
  d["support"] = r.support;
  d["degenerate"] = r.degenerate;
  return d;
}

CorpusFormat format_of(const std::string& name) {
  if (name == "csv") return CorpusFormat::canonical_csv;
  if (name == "jsonl") return CorpusFormat::jsonl;
  throw ValidationError("unknown corpus format '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(apisentry, m) {
  m.doc() = "API-call corpus tooling, n-gram boosted detector and Bi-LSTM next-call model";
  m.attr("__version__") = APISENTRY_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Corpus>(m, "Corpus")
      .def_property_readonly("vocabulary_size", [](const Corpus& c) { return c.vocabulary_size; })
      .def_property_readonly("ids", [](const Corpus& c) {
        std::vector<std::string> out;
        for (const auto& t : c.traces) out.push_back(t.id);
        return out;
      })
      .def_property_readonly("calls", [](const Corpus& c) {
        std::vector<std::vector<ApiCallId>> out;
        for (const auto& t : c.traces) out.push_back(t.calls);
        return out;
      })
      .def_property_readonly("labels", [](const Corpus& c) {
        std::vector<std::optional<int>> out;
        for (const auto& t : c.traces) out.push_back(t.label ? std::optional<int>(to_int(*t.label)) : std::nullopt);
        return out;
      })
      .def("class_counts", &Corpus::class_counts)
      .def("total_calls", &Corpus::total_calls)
      .def("__len__", &Corpus::size)
      .def("to_text", [](const Corpus& c, const std::string& format) { return serialize_corpus(c, format_of(format)); },
           py::arg("format") = "csv");

  m.def(
      "make_corpus",
      [](const std::vector<std::vector<ApiCallId>>& calls, const std::vector<int>& labels, std::uint32_t vocab) {
        if (!labels.empty() && labels.size() != calls.size()) throw ValidationError("labels and traces differ in length");
        Corpus c;
        std::uint32_t inferred = 0;
        for (std::size_t i = 0; i < calls.size(); ++i) {
          LabeledTrace t{std::to_string(i), calls[i], std::nullopt};
          if (!labels.empty()) {
            if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
            t.label = labels[i] ? Label::malware : Label::goodware;
          }
          for (auto id : t.calls) inferred = std::max(inferred, id + 1);
          c.traces.push_back(std::move(t));
        }
        c.vocabulary_size = vocab ? vocab : inferred;
        return c;
      },
      py::arg("calls"), py::arg("labels") = std::vector<int>{}, py::arg("vocabulary_size") = 0u);
  m.def(
      "parse_corpus",
      [](const std::string& text, const std::string& format, std::optional<std::uint32_t> vocab) {
        return parse_corpus(std::string_view(text), format_of(format), "python", vocab);
      },
      py::arg("text"), py::arg("format") = "csv", py::arg("vocabulary_size") = py::none());
  m.def(
      "read_corpus",
      [](const std::string& path, std::optional<std::uint32_t> vocab) {
        return parse_corpus(std::string_view(textio::read_file(path)), format_for_path(path), path, vocab);
      },
      py::arg("path"), py::arg("vocabulary_size") = py::none());
  m.def(
      "canonicalize",
      [](Corpus c, bool collapse, std::size_t max_len) { return canonicalize(std::move(c), collapse, max_len); },
      py::arg("corpus"), py::arg("collapse") = false, py::arg("max_len") = 100);
  m.def(
      "split",
      [](const Corpus& c, double test_fraction, std::uint64_t seed, bool stratified) {
        return stratified_split(c, SplitSpec{test_fraction, seed, stratified});
      },
      py::arg("corpus"), py::arg("test_fraction") = 0.2, py::arg("seed") = 42, py::arg("stratified") = true);
  m.def(
      "oversample", [](const Corpus& c, std::uint64_t seed) { return random_oversample(c, seed); },
      py::arg("corpus"), py::arg("seed") = 42);

  m.def(
      "extract_ngrams",
      [](const std::vector<ApiCallId>& calls, std::size_t n) {
        std::vector<std::vector<ApiCallId>> out;
        for (const auto& g : extract_ngrams(calls, n)) out.push_back(gram_ids(g));
        return out;
      },
      py::arg("calls"), py::arg("n"));
  m.def(
      "prefix_samples",
      [](const std::vector<ApiCallId>& calls) {
        std::vector<std::pair<std::vector<ApiCallId>, ApiCallId>> out;
        for (auto& s : prefix_samples(calls)) out.emplace_back(std::move(s.prefix), s.next);
        return out;
      },
      py::arg("calls"));

  py::class_<NGramVocabulary>(m, "Vocabulary")
      .def("__len__", &NGramVocabulary::size)
      .def("entry", [](const NGramVocabulary& v, std::size_t col) { return gram_ids(v.entry(col)); })
      .def("column_of", [](const NGramVocabulary& v, const std::vector<ApiCallId>& ids) {
        return v.column_of(NGram(std::span<const ApiCallId>(ids)));
      })
      .def("to_text", &NGramVocabulary::serialize);
  m.def(
      "build_vocabulary",
      [](const Corpus& c, std::uint64_t min_count, std::optional<std::size_t> top_k) {
        return build_vocabulary(c, min_count, top_k);
      },
      py::arg("corpus"), py::arg("min_count") = 1, py::arg("top_k") = py::none());
  m.def(
      "vectorize",
      [](const std::vector<ApiCallId>& calls, const NGramVocabulary& vocab) {
        std::map<std::uint32_t, std::uint32_t> out;
        for (const auto& [col, count] : vectorize(calls, vocab).entries) out[col] = count;
        return out;
      },
      py::arg("calls"), py::arg("vocab"));

  py::class_<BaggedDetector>(m, "Detector")
      .def(
          "score",
          [](const BaggedDetector& d, const NGramVocabulary& vocab, const std::vector<ApiCallId>& calls) {
            const auto r = ensemble_predict(d, vectorize(calls, vocab));
            return std::make_pair(r.label, r.score);
          },
          py::arg("vocab"), py::arg("calls"))
      .def(
          "rank_features",
          [](const BaggedDetector& d, const NGramVocabulary& vocab, std::size_t k) {
            std::vector<std::pair<std::vector<ApiCallId>, double>> out;
            for (const auto& r : rank_features(d, vocab, k)) out.emplace_back(gram_ids(r.ngram), r.importance);
            return out;
          },
          py::arg("vocab"), py::arg("k") = 10)
      .def("to_text", &serialize_detector);
  m.def(
      "train_detector",
      [](const Corpus& train, const NGramVocabulary& vocab, std::optional<std::vector<std::tuple<double, int, int>>> members,
         std::uint64_t seed) {
        auto configs = default_member_configs();
        if (members) {
          if (members->size() != 3) throw ValidationError("exactly three members are required");
          for (std::size_t i = 0; i < 3; ++i) {
            std::tie(configs[i].learning_rate, configs[i].max_depth, configs[i].n_estimators) = (*members)[i];
          }
        }
        BaggingOptions options;
        options.seed = seed;
        const auto x = vectorize_corpus(train, vocab);
        py::gil_scoped_release release;
        return train_bagged(x, labels_of(train), configs, options);
      },
      py::arg("train"), py::arg("vocab"), py::arg("members") = py::none(), py::arg("seed") = 42);
  m.def("load_detector", [](const std::string& text) { return parse_detector(text); }, py::arg("text"));

  py::class_<BiLstmConfig>(m, "PredictorConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &BiLstmConfig::vocab_size)
      .def_readwrite("embed_dim", &BiLstmConfig::embed_dim)
      .def_readwrite("hidden", &BiLstmConfig::hidden)
      .def_readwrite("dropout_rate", &BiLstmConfig::dropout_rate)
      .def_readwrite("learning_rate", &BiLstmConfig::learning_rate)
      .def_readwrite("batch_size", &BiLstmConfig::batch_size)
      .def_readwrite("max_epochs", &BiLstmConfig::max_epochs)
      .def_readwrite("patience", &BiLstmConfig::patience)
      .def_readwrite("val_fraction", &BiLstmConfig::val_fraction)
      .def_readwrite("max_prefix_len", &BiLstmConfig::max_prefix_len)
      .def_readwrite("seed", &BiLstmConfig::seed);

  py::class_<BiLstmModel>(m, "Predictor")
      .def_property_readonly("config", [](const BiLstmModel& model) { return model.config; })
      .def(
          "predict_next",
          [](const BiLstmModel& model, const std::vector<ApiCallId>& seq, std::size_t k) {
            return predict_next_k(model, seq, k);
          },
          py::arg("sequence"), py::arg("k") = 1)
      .def(
          "distribution",
          [](const BiLstmModel& model, const std::vector<ApiCallId>& seq) {
            const auto d = predict_next(model, seq).distribution;
            return std::vector<double>(d.data(), d.data() + d.size());
          },
          py::arg("sequence"))
      .def("to_text", &serialize_model);
  m.def(
      "train_predictor",
      [](const Corpus& corpus, const BiLstmConfig& config) {
        BiLstmConfig c = config;
        if (c.vocab_size == 0) c.vocab_size = corpus.vocabulary_size;
        const auto samples = prefix_samples(corpus);
        py::gil_scoped_release release;
        auto result = train(samples, c);
        py::gil_scoped_acquire acquire;
        py::dict report;
        report["train_loss"] = result.report.train_loss;
        report["val_loss"] = result.report.val_loss;
        report["val_accuracy"] = result.report.val_accuracy;
        report["best_epoch"] = result.report.best_epoch;
        report["stopped_epoch"] = result.report.stopped_epoch;
        return py::make_tuple(std::move(result.model), report);
      },
      py::arg("corpus"), py::arg("config"));
  m.def("load_predictor", [](const std::string& text) { return parse_model(text); }, py::arg("text"));

  m.def(
      "binary_metrics",
      [](const std::vector<int>& preds, const std::vector<int>& truths) {
        return metrics_dict(binary_metrics(confusion(preds, truths, 2)));
      },
      py::arg("preds"), py::arg("truths"));
  m.def(
      "weighted_metrics",
      [](const std::vector<int>& preds, const std::vector<int>& truths, std::size_t labels) {
        return metrics_dict(weighted_metrics(preds, truths, labels));
      },
      py::arg("preds"), py::arg("truths"), py::arg("labels"));
  m.def(
      "roc_auc_per_label",
      [](const std::vector<std::vector<double>>& scores, const std::vector<int>& truths) {
        if (scores.empty()) throw ValidationError("empty score matrix");
        const auto labels = scores.front().size();
        std::vector<double> flat;
        for (const auto& row : scores) {
          if (row.size() != labels) throw ValidationError("ragged score matrix");
          flat.insert(flat.end(), row.begin(), row.end());
        }
        return roc_auc_per_label(flat, truths, labels).per_label_auc;
      },
      py::arg("scores"), py::arg("truths"));

  m.def(
      "detection_corpus",
      [](std::size_t goodware, std::size_t malware, std::uint64_t seed) {
        synthetic::DetectionCorpusSpec spec;
        spec.goodware = goodware;
        spec.malware = malware;
        spec.seed = seed;
        return synthetic::detection_corpus(spec);
      },
      py::arg("goodware") = 60, py::arg("malware") = 60, py::arg("seed") = 42);
  m.def(
      "cyclic_corpus",
      [](std::size_t traces, std::vector<ApiCallId> pattern, std::uint64_t seed) {
        synthetic::CyclicCorpusSpec spec;
        spec.traces = traces;
        spec.seed = seed;
        if (!pattern.empty()) {
          spec.vocabulary_size = *std::max_element(pattern.begin(), pattern.end()) + 1;
          spec.pattern = std::move(pattern);
        }
        return synthetic::cyclic_corpus(spec);
      },
      py::arg("traces") = 200, py::arg("pattern") = std::vector<ApiCallId>{}, py::arg("seed") = 42);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI task in-process; returns (exit_code, stdout, stderr).");
}
