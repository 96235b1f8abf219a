#include "apisentry/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "apisentry/corpus.hpp"
#include "apisentry/error.hpp"
#include "apisentry/eval.hpp"
#include "apisentry/gbdt.hpp"
#include "apisentry/manifest.hpp"
#include "apisentry/ngram.hpp"
#include "apisentry/pipeline.hpp"
#include "apisentry/rng.hpp"
#include "apisentry/seqmodel.hpp"
#include "apisentry/synthetic.hpp"
#include "apisentry/textio.hpp"

namespace apisentry::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reference targets for the two public datasets.
struct DetectionReference {
  double accuracy = 0.9585;
  double precision = 0.9270;
  double recall = 0.9956;
  double f1 = 0.9600;
};
struct NextCallReference {
  double accuracy;
  double precision;
  double recall;
  double f1;
};
constexpr NextCallReference kNextCallDataset1{0.9362, 0.9358, 0.9362, 0.9352};
constexpr NextCallReference kNextCallDataset2{0.8880, 0.8850, 0.8880, 0.8848};

struct Options {
  std::uint64_t seed = 42;

  // shared paths
  std::string in, out, train, test, train_out, test_out, model, vocab, labels, labels_out, curves;

  std::string kind = "detect";
  std::size_t goodware = 60, malware = 60, traces = 200;
  int dataset = 1;

  std::string format;
  bool collapse = false;
  std::size_t max_len = 100;
  std::uint32_t vocab_size = 0;

  double test_frac = 0.2;
  bool no_stratify = false;
  bool skip_test = false;

  bool build_vocab = false;
  std::uint64_t min_count = 1;
  std::size_t top_k = 0;

  std::string vote = "mean";
  double threshold = 0.5;
  bool no_bootstrap = false;
  std::string members;
  std::string vocab_ref;

  std::size_t k = 10;
  std::string corpus, names;

  std::uint32_t embed = 64, hidden = 150, batch = 128, epochs = 50, patience = 3, max_prefix = 99;
  double dropout = 0.3, lr = 0.01, val_frac = 0.1;
  std::size_t keep_last = 0, max_samples = 0;

  std::string seq;
  std::string pred_out, truth_out, scores_out;

  std::string task = "detect";
  std::string pred, truth, scores;
  double rare_threshold = -1.0;
  std::uint32_t n_labels = 0;

  std::string dataset1, dataset2, outdir;
  std::size_t max_test_samples = 0;
};

struct TaskIo {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

Corpus load_corpus(const std::string& path, const std::string& format = {},
                   std::optional<std::uint32_t> vocab = std::nullopt) {
  CorpusFormat fmt = format_for_path(path);
  if (format == "csv") fmt = CorpusFormat::canonical_csv;
  if (format == "jsonl") fmt = CorpusFormat::jsonl;
  return parse_corpus(std::string_view(textio::read_file(path)), fmt, fs::path(path).filename().string(), vocab);
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  textio::write_file(path, serialize_corpus(corpus, format_for_path(path)));
}

std::vector<ApiCallId> parse_ids(std::string_view text) {
  std::vector<ApiCallId> ids;
  for (auto part : textio::split(text, ',')) {
    if (textio::trim(part).empty()) continue;
    ids.push_back(static_cast<ApiCallId>(textio::parse_uint(part, "--seq")));
  }
  return ids;
}

std::array<GbdtConfig, 3> parse_members(const std::string& spec, std::uint64_t seed) {
  auto configs = default_member_configs();
  if (!spec.empty()) {
    const auto parts = textio::split(spec, ',');
    if (parts.size() != 3) throw ValidationError("--members needs three 'lr:depth:trees' entries");
    for (std::size_t m = 0; m < 3; ++m) {
      const auto fields = textio::split(parts[m], ':');
      if (fields.size() != 3) throw ValidationError("--members entry '" + std::string(parts[m]) + "' is not lr:depth:trees");
      configs[m].learning_rate = textio::parse_double(fields[0], "member learning rate");
      configs[m].max_depth = static_cast<int>(textio::parse_int(fields[1], "member depth"));
      configs[m].n_estimators = static_cast<int>(textio::parse_int(fields[2], "member trees"));
      configs[m].validate();
    }
  }
  for (std::size_t m = 0; m < 3; ++m) configs[m].seed = seed + m;
  return configs;
}

json metrics_json(const MetricsReport& report) {
  json out;
  out["accuracy"] = report.accuracy;
  out["precision"] = report.precision;
  out["recall"] = report.recall;
  out["f1"] = report.f1;
  out["averaging"] = report.averaging == Averaging::weighted ? "weighted" : "binary_positive_class";
  out["degenerate"] = report.degenerate;
  json support = json::object();
  for (const auto& [label, count] : report.support) support[std::to_string(label)] = count;
  out["support"] = support;
  return out;
}

// Predictions file: either one label per line or "row,label,score" rows.
std::vector<int> read_predicted_labels(const std::string& path) {
  std::vector<int> out;
  const auto text = textio::read_file(path);
  for (auto line : textio::lines(text)) {
    if (textio::trim(line).empty() || line.starts_with("row")) continue;
    const auto fields = textio::split(line, ',');
    const auto field = fields.size() >= 2 ? fields[1] : fields[0];
    out.push_back(static_cast<int>(textio::parse_int(field, "prediction")));
  }
  return out;
}

std::vector<double> read_score_rows(const std::string& path, std::size_t& width) {
  std::vector<double> out;
  width = 0;
  const auto text = textio::read_file(path);
  for (auto line : textio::lines(text)) {
    if (textio::trim(line).empty()) continue;
    const auto fields = textio::split(line, ',');
    if (width == 0) width = fields.size();
    if (fields.size() != width) throw ValidationError("scores: rows differ in width");
    for (auto f : fields) out.push_back(textio::parse_double(f, "score"));
  }
  return out;
}

std::string ranked_csv(const std::vector<pipeline::RankedWithFrequency>& rows,
                       const std::map<std::uint32_t, std::string>& names) {
  std::string out = "rank,ngram,importance,class0_count,class1_count,names\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string rendered;
    for (auto id : r.feature.ngram.ids()) {
      if (!rendered.empty()) rendered += ' ';
      auto it = names.find(id);
      rendered += it != names.end() ? it->second : std::to_string(id);
    }
    out += std::to_string(i + 1) + ",\"" + r.feature.ngram.to_string() + "\"," +
           textio::format_double(r.feature.importance) + ',' + std::to_string(r.goodware_count) + ',' +
           std::to_string(r.malware_count) + ",\"" + rendered + "\"\n";
  }
  return out;
}

std::string rare_csv(const std::vector<RareLabel>& rows) {
  std::string out = "label,frequency,auc,name\n";
  for (const auto& r : rows) {
    out += std::to_string(r.label) + ',' + std::to_string(r.frequency) + ',' +
           (r.auc ? textio::format_double(*r.auc) : std::string("undefined")) + ',' + r.name + '\n';
  }
  return out;
}

BiLstmConfig predictor_config(const Options& o, std::uint32_t vocab_size) {
  BiLstmConfig config;
  config.vocab_size = vocab_size;
  config.embed_dim = o.embed;
  config.hidden = o.hidden;
  config.dropout_rate = o.dropout;
  config.learning_rate = o.lr;
  config.batch_size = o.batch;
  config.max_epochs = o.epochs;
  config.patience = o.patience;
  config.val_fraction = o.val_frac;
  config.max_prefix_len = o.max_prefix;
  config.seed = o.seed;
  config.validate();
  return config;
}

// ---- tasks ----

void task_synth(const Options& o, TaskIo& io, std::ostream& out) {
  Corpus corpus;
  if (o.kind == "detect") {
    synthetic::DetectionCorpusSpec spec;
    spec.goodware = o.goodware;
    spec.malware = o.malware;
    spec.seed = o.seed;
    corpus = synthetic::detection_corpus(spec);
  } else if (o.kind == "cycle") {
    synthetic::CyclicCorpusSpec spec;
    spec.traces = o.traces;
    spec.seed = o.seed;
    corpus = synthetic::cyclic_corpus(spec);
  } else {
    throw ValidationError("--kind must be 'detect' or 'cycle'");
  }
  save_corpus(o.out, corpus);
  io.outputs = {o.out};
  out << "wrote " << corpus.size() << " traces to " << o.out << '\n';
}

void task_adapt(const Options& o, TaskIo& io, std::ostream& out) {
  const auto raw = textio::read_file(o.in);
  const auto corpus = o.dataset == 1 ? adapt_dataset1(raw) : adapt_dataset2(raw);
  save_corpus(o.out, corpus);
  io.inputs = {o.in};
  io.outputs = {o.out};
  const auto counts = corpus.class_counts();
  out << "adapted " << corpus.size() << " traces (goodware " << counts[0] << ", malware " << counts[1] << ")\n";
}

void task_ingest(const Options& o, TaskIo& io, std::ostream& out) {
  auto corpus = load_corpus(o.in, o.format, o.vocab_size ? std::optional(o.vocab_size) : std::nullopt);
  corpus = canonicalize(std::move(corpus), o.collapse, o.max_len);
  save_corpus(o.out, corpus);
  io.inputs = {o.in};
  io.outputs = {o.out};
  const auto counts = corpus.class_counts();
  out << "ingested " << corpus.size() << " traces (goodware " << counts[0] << ", malware " << counts[1]
      << "), vocabulary " << corpus.vocabulary_size << '\n';
}

void task_split(const Options& o, TaskIo& io, std::ostream& out) {
  const auto corpus = load_corpus(o.in);
  const auto [train, test] = stratified_split(corpus, {o.test_frac, o.seed, !o.no_stratify});
  save_corpus(o.train_out, train);
  save_corpus(o.test_out, test);
  io.inputs = {o.in};
  io.outputs = {o.train_out, o.test_out};
  out << "train " << train.size() << ", test " << test.size() << '\n';
}

void task_balance(const Options& o, TaskIo& io, std::ostream& out) {
  const auto train = random_oversample(load_corpus(o.train), derive_seed(o.seed, "balance-train"));
  save_corpus(o.train_out, train);
  io.inputs = {o.train};
  io.outputs = {o.train_out};
  out << "train balanced to " << train.class_counts()[0] << " + " << train.class_counts()[1] << '\n';
  if (o.test.empty()) return;
  if (o.test_out.empty()) throw ValidationError("--test needs --test-out");
  auto test = load_corpus(o.test);
  if (!o.skip_test) test = random_oversample(test, derive_seed(o.seed, "balance-test"));
  save_corpus(o.test_out, test);
  io.inputs.push_back(o.test);
  io.outputs.push_back(o.test_out);
  out << "test " << (o.skip_test ? "kept at " : "balanced to ") << test.class_counts()[0] << " + "
      << test.class_counts()[1] << '\n';
}

void task_featurize(const Options& o, TaskIo& io, std::ostream& out) {
  const auto corpus = load_corpus(o.in);
  io.inputs = {o.in};
  NGramVocabulary vocab;
  if (o.build_vocab) {
    vocab = build_vocabulary(corpus, o.min_count, o.top_k ? std::optional(o.top_k) : std::nullopt);
    textio::write_file(o.vocab, vocab.serialize());
    io.outputs.push_back(o.vocab);
  } else {
    vocab = NGramVocabulary::parse(textio::read_file(o.vocab));
    io.inputs.push_back(o.vocab);
  }
  const auto matrix = vectorize_corpus(corpus, vocab);
  textio::write_file(o.out, serialize_matrix(matrix));
  io.outputs.push_back(o.out);
  if (!o.labels_out.empty()) {
    textio::write_file(o.labels_out, serialize_labels(labels_of(corpus)));
    io.outputs.push_back(o.labels_out);
  }
  out << "matrix " << matrix.size() << " x " << matrix.cols << '\n';
}

void task_train_detector(const Options& o, TaskIo& io, std::ostream& out) {
  const auto x = parse_matrix(textio::read_file(o.train));
  const auto y = parse_labels(textio::read_file(o.labels));
  BaggingOptions options;
  options.seed = o.seed;
  options.bootstrap = !o.no_bootstrap;
  options.threshold = o.threshold;
  if (o.vote == "mean") {
    options.vote = VoteRule::mean;
  } else if (o.vote == "majority") {
    options.vote = VoteRule::majority;
  } else {
    throw ValidationError("--vote must be 'mean' or 'majority'");
  }
  auto detector = train_bagged(x, y, parse_members(o.members, o.seed), options);
  detector.vocab_ref = o.vocab_ref;
  textio::write_file(o.out, serialize_detector(detector));
  io.inputs = {o.train, o.labels};
  io.outputs = {o.out};
  const auto train_metrics = binary_metrics(confusion(pipeline::detect_labels(detector, x), y, 2));
  out << "trained 3 members on " << x.size() << " rows; train accuracy " << percent(train_metrics.accuracy) << '\n';
}

void task_detect(const Options& o, TaskIo& io, std::ostream& out) {
  const auto detector = parse_detector(textio::read_file(o.model));
  const auto x = parse_matrix(textio::read_file(o.in));
  std::string csv = "row,label,score\n";
  std::size_t flagged = 0;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const auto d = ensemble_predict(detector, x.rows[r]);
    flagged += static_cast<std::size_t>(d.label);
    csv += std::to_string(r) + ',' + std::to_string(d.label) + ',' + textio::format_double(d.score) + '\n';
  }
  textio::write_file(o.out, csv);
  io.inputs = {o.model, o.in};
  io.outputs = {o.out};
  out << flagged << " of " << x.size() << " rows flagged as malware\n";
}

void task_rank_features(const Options& o, TaskIo& io, std::ostream& out) {
  const auto detector = parse_detector(textio::read_file(o.model));
  const auto vocab = NGramVocabulary::parse(textio::read_file(o.vocab));
  io.inputs = {o.model, o.vocab};
  std::optional<Corpus> corpus;
  if (!o.corpus.empty()) {
    corpus = load_corpus(o.corpus);
    io.inputs.push_back(o.corpus);
  }
  std::map<std::uint32_t, std::string> names;
  if (!o.names.empty()) {
    names = parse_name_map(textio::read_file(o.names));
    io.inputs.push_back(o.names);
  }
  std::vector<pipeline::RankedWithFrequency> rows;
  for (auto& f : rank_features(detector, vocab, o.k)) {
    pipeline::RankedWithFrequency row{std::move(f), 0, 0};
    if (corpus) std::tie(row.goodware_count, row.malware_count) = class_frequency(*corpus, row.feature.ngram);
    rows.push_back(std::move(row));
  }
  const auto csv = ranked_csv(rows, names);
  if (!o.out.empty()) {
    textio::write_file(o.out, csv);
    io.outputs = {o.out};
  }
  out << csv;
}

void task_train_predictor(const Options& o, TaskIo& io, std::ostream& out) {
  auto corpus = load_corpus(o.in, {}, o.vocab_size ? std::optional(o.vocab_size) : std::nullopt);
  corpus = pipeline::keep_last_calls(std::move(corpus), o.keep_last);
  const auto config = predictor_config(o, corpus.vocabulary_size);
  const auto samples =
      pipeline::subsample(prefix_samples(corpus), o.max_samples, derive_seed(o.seed, "train-samples"));
  const auto result = train(samples, config);
  textio::write_file(o.out, serialize_model(result.model));
  io.inputs = {o.in};
  io.outputs = {o.out};
  if (!o.curves.empty()) {
    textio::write_file(o.curves, result.report.curves_csv());
    io.outputs.push_back(o.curves);
  }
  const auto& r = result.report;
  out << "trained on " << samples.size() << " samples; stopped at epoch " << r.stopped_epoch << ", best epoch "
      << r.best_epoch << " (val loss " << textio::format_double(r.val_loss[r.best_epoch - 1]) << ", val accuracy "
      << percent(r.val_accuracy[r.best_epoch - 1]) << ")\n";
}

void task_predict_next(const Options& o, TaskIo& io, std::ostream& out) {
  const auto model = parse_model(textio::read_file(o.model));
  io.inputs = {o.model};
  if (!o.seq.empty()) {
    const auto ids = parse_ids(o.seq);
    const auto next = predict_next_k(model, ids, o.k);
    for (std::size_t i = 0; i < next.size(); ++i) out << (i ? "," : "") << next[i];
    out << '\n';
    return;
  }
  if (o.in.empty() || o.pred_out.empty() || o.truth_out.empty()) {
    throw ValidationError("predict-next needs --seq, or --in with --pred-out and --truth-out");
  }
  const auto corpus = load_corpus(o.in, {}, model.config.vocab_size);
  io.inputs.push_back(o.in);
  const auto samples = prefix_samples(corpus);
  if (samples.empty()) throw ValidationError("corpus yields no prefix samples (traces shorter than 3)");
  std::string preds, truths, scores;
  for (std::size_t start = 0; start < samples.size(); start += model.config.batch_size) {
    const auto end = std::min<std::size_t>(samples.size(), start + model.config.batch_size);
    std::vector<std::vector<ApiCallId>> prefixes;
    for (std::size_t i = start; i < end; ++i) prefixes.push_back(samples[i].prefix);
    const auto probs = forward_batch(model, prefixes);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < probs.cols(); ++c) {
        if (probs(r, c) > probs(r, best)) best = c;
      }
      preds += std::to_string(best) + '\n';
      truths += std::to_string(samples[start + static_cast<std::size_t>(r)].next) + '\n';
      if (!o.scores_out.empty()) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
          if (c) scores += ',';
          scores += textio::format_double(probs(r, c));
        }
        scores += '\n';
      }
    }
  }
  textio::write_file(o.pred_out, preds);
  textio::write_file(o.truth_out, truths);
  io.outputs = {o.pred_out, o.truth_out};
  if (!o.scores_out.empty()) {
    textio::write_file(o.scores_out, scores);
    io.outputs.push_back(o.scores_out);
  }
  out << "predicted " << samples.size() << " next calls\n";
}

void task_evaluate(const Options& o, TaskIo& io, std::ostream& out) {
  const auto preds = read_predicted_labels(o.pred);
  const auto truths = parse_labels(textio::read_file(o.truth));
  io.inputs = {o.pred, o.truth};
  json report;
  report["task"] = o.task;
  report["samples"] = truths.size();
  if (o.task == "detect") {
    const auto metrics = binary_metrics(confusion(preds, truths, 2));
    report.update(metrics_json(metrics));
  } else if (o.task == "next-call") {
    std::size_t labels = o.n_labels;
    std::vector<double> scores;
    std::size_t width = 0;
    if (!o.scores.empty()) {
      scores = read_score_rows(o.scores, width);
      io.inputs.push_back(o.scores);
      if (labels == 0) labels = width;
    }
    if (labels == 0) {
      int peak = 0;
      for (int v : preds) peak = std::max(peak, v);
      for (int v : truths) peak = std::max(peak, v);
      labels = static_cast<std::size_t>(peak) + 1;
    }
    report.update(metrics_json(weighted_metrics(preds, truths, labels)));
    if (!o.scores.empty()) {
      if (width != labels) throw ValidationError("scores width does not match the label count");
      const auto auc = roc_auc_per_label(scores, truths, labels);
      json per_label = json::object();
      double sum = 0.0;
      std::size_t defined = 0;
      for (std::size_t l = 0; l < labels; ++l) {
        if (!auc.per_label_auc[l]) continue;
        per_label[std::to_string(l)] = *auc.per_label_auc[l];
        sum += *auc.per_label_auc[l];
        ++defined;
      }
      report["auc_per_label"] = per_label;
      report["auc_mean"] = defined ? sum / static_cast<double>(defined) : 0.0;
      if (!o.corpus.empty()) {
        const auto corpus = load_corpus(o.corpus);
        io.inputs.push_back(o.corpus);
        std::map<std::uint32_t, std::string> names;
        if (!o.names.empty()) {
          names = parse_name_map(textio::read_file(o.names));
          io.inputs.push_back(o.names);
        }
        const double threshold = o.rare_threshold >= 0.0 ? o.rare_threshold : default_rare_threshold(corpus);
        json rare = json::array();
        for (const auto& r : rare_label_report(corpus, auc, threshold, names)) {
          json row;
          row["label"] = r.label;
          row["frequency"] = r.frequency;
          row["auc"] = r.auc ? json(*r.auc) : json(nullptr);
          row["name"] = r.name;
          rare.push_back(row);
        }
        report["rare_labels"] = rare;
      }
    }
  } else {
    throw ValidationError("--task must be 'detect' or 'next-call'");
  }
  textio::write_file(o.out, report.dump(2) + "\n");
  io.outputs = {o.out};
  out << "accuracy " << percent(report["accuracy"].get<double>()) << ", precision "
      << percent(report["precision"].get<double>()) << ", recall " << percent(report["recall"].get<double>())
      << ", f1 " << percent(report["f1"].get<double>()) << '\n';
}

void print_comparison(std::ostream& out, const std::string& title, const MetricsReport& ours, double accuracy,
                      double precision, double recall, double f1) {
  out << title << '\n';
  char line[128];
  std::snprintf(line, sizeof line, "  %-10s %10s %10s\n", "metric", "measured", "reference");
  out << line;
  const std::array<std::tuple<const char*, double, double>, 4> rows{
      {{"accuracy", ours.accuracy, accuracy}, {"precision", ours.precision, precision}, {"recall", ours.recall, recall},
       {"f1", ours.f1, f1}}};
  for (const auto& [name, measured, reference] : rows) {
    std::snprintf(line, sizeof line, "  %-10s %10s %10s\n", name, percent(measured).c_str(), percent(reference).c_str());
    out << line;
  }
}

json prediction_json(const pipeline::PredictionOutcome& outcome, const NextCallReference& reference) {
  json doc = metrics_json(outcome.test_metrics);
  doc["reference"] = {{"accuracy", reference.accuracy},
                      {"precision", reference.precision},
                      {"recall", reference.recall},
                      {"f1", reference.f1}};
  doc["stopped_epoch"] = outcome.trained.report.stopped_epoch;
  doc["best_epoch"] = outcome.trained.report.best_epoch;
  return doc;
}

void task_reproduce(const Options& o, TaskIo& io, std::ostream& out) {
  const bool have1 = !o.dataset1.empty() && fs::is_regular_file(o.dataset1);
  const bool have2 = !o.dataset2.empty() && fs::is_regular_file(o.dataset2);
  if (!have1 && !have2) {
    throw ValidationError(
        "no dataset available. Convert the public files first, e.g.\n"
        "  apisentry adapt --dataset 1 --in <api-call-sequences.csv> --out dataset1.csv\n"
        "  apisentry adapt --dataset 2 --in <sequences.txt> --out dataset2.csv\n"
        "then pass --dataset1 dataset1.csv and/or --dataset2 dataset2.csv");
  }
  fs::create_directories(o.outdir);
  const fs::path dir(o.outdir);
  auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = (dir / name).string();
    textio::write_file(path, content);
    io.outputs.push_back(path);
  };
  json summary;
  summary["seed"] = o.seed;

  if (have1) {
    io.inputs.push_back(o.dataset1);
    const auto corpus = load_corpus(o.dataset1, {}, 307u);
    pipeline::DetectionSetup setup;
    setup.split.seed = o.seed;
    setup.bagging.seed = o.seed;
    const auto detection = pipeline::run_detection(corpus, setup);
    DetectionReference ref;
    print_comparison(out, "Early detection (dataset 1, held-out split)", detection.test_metrics, ref.accuracy,
                     ref.precision, ref.recall, ref.f1);
    json det = metrics_json(detection.test_metrics);
    det["reference"] = {{"accuracy", ref.accuracy}, {"precision", ref.precision}, {"recall", ref.recall}, {"f1", ref.f1}};
    det["features"] = detection.vocab.size();
    summary["detection"] = det;
    emit("detection_metrics.json", det.dump(2) + "\n");
    emit("top_features.csv", ranked_csv(detection.top_features, {}));
    emit("vocab.tsv", detection.vocab.serialize());
    emit("model.det", serialize_detector(detection.detector));
  } else {
    out << "dataset 1 not supplied; skipping the detection pipeline\n";
  }

  auto run_seq = [&](const std::string& path, std::uint32_t vocab, std::size_t keep_last, std::uint32_t max_prefix,
                     const std::string& tag, const NextCallReference& reference) {
    io.inputs.push_back(path);
    const auto corpus = load_corpus(path, {}, vocab);
    pipeline::PredictionSetup setup;
    Options tuned = o;
    tuned.max_prefix = max_prefix;
    setup.model = predictor_config(tuned, vocab);
    setup.seed = o.seed;
    setup.keep_last = keep_last;
    setup.max_train_samples = o.max_samples;
    setup.max_test_samples = o.max_test_samples;
    const auto outcome = pipeline::run_prediction(corpus, setup);
    print_comparison(out, "Next-call prediction (" + tag + ", weighted)", outcome.test_metrics, reference.accuracy,
                     reference.precision, reference.recall, reference.f1);
    summary["next_call_" + tag] = prediction_json(outcome, reference);
    emit("curves_" + tag + ".csv", outcome.trained.report.curves_csv());
    emit("rare_apis_" + tag + ".csv", rare_csv(outcome.rare));
    emit("model_" + tag + ".seq", serialize_model(outcome.trained.model));
    if (outcome.example) {
      std::string csv = "step,predicted,truth,correct\n";
      for (std::size_t i = 0; i < outcome.example->predicted.size(); ++i) {
        csv += std::to_string(i + 1) + ',' + std::to_string(outcome.example->predicted[i]) + ',' +
               std::to_string(outcome.example->truth[i]) + ',' +
               (outcome.example->predicted[i] == outcome.example->truth[i] ? "1" : "0") + '\n';
      }
      emit("decode_" + tag + ".csv", csv);
    }
    return outcome.test_metrics.accuracy;
  };

  std::optional<double> acc1, acc2;
  if (have1) acc1 = run_seq(o.dataset1, 307, 0, 99, "dataset1", kNextCallDataset1);
  if (have2) {
    acc2 = run_seq(o.dataset2, 342, 200, 199, "dataset2", kNextCallDataset2);
  } else {
    out << "dataset 2 not supplied; skipping its sequence model\n";
  }
  if (acc1 && acc2) {
    summary["dataset1_beats_dataset2"] = *acc1 > *acc2;
  }
  emit("summary.json", summary.dump(2) + "\n");
}

std::string resolved_value(const CLI::Option* opt) {
  if (opt->get_expected_min() == 0) return opt->count() > 0 ? "true" : "false";
  if (opt->count() > 0) {
    const auto& results = opt->results();
    return results.empty() ? std::string() : results.back();
  }
  return opt->get_default_str();
}

// Turns a flat key=value file into "--key value" arguments.
std::vector<std::string> config_arguments(const std::string& path) {
  std::vector<std::string> out;
  std::size_t line_no = 0;
  const auto text = textio::read_file(path);
  for (auto line : textio::lines(text)) {
    ++line_no;
    line = textio::trim(line);
    if (line.empty() || line.starts_with('#')) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(path + " line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = std::string(textio::trim(line.substr(0, eq)));
    const auto value = std::string(textio::trim(line.substr(eq + 1)));
    if (value == "false") continue;
    out.push_back((key.size() == 1 ? "-" : "--") + key);
    if (value != "true") out.push_back(value);
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  Options o;
  CLI::App app{"apisentry: early malware detection and next-API-call prediction", "apisentry"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", std::string(APISENTRY_VERSION));

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed")->envname("APISENTRY_SEED");
  };
  auto existing = CLI::ExistingFile;

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  synth->add_option("--kind", o.kind, "detect | cycle");
  synth->add_option("--goodware", o.goodware);
  synth->add_option("--malware", o.malware);
  synth->add_option("--traces", o.traces);
  synth->add_option("--out", o.out)->required();
  add_seed(synth);

  auto* adapt = app.add_subcommand("adapt", "Convert a published dataset file to canonical CSV");
  adapt->add_option("--dataset", o.dataset, "1 or 2")->check(CLI::IsMember({1, 2}));
  adapt->add_option("--in", o.in)->required()->check(existing);
  adapt->add_option("--out", o.out)->required();

  auto* ingest = app.add_subcommand("ingest", "Validate and canonicalize a corpus");
  ingest->add_option("--in", o.in)->required()->check(existing);
  ingest->add_option("--format", o.format, "csv | jsonl (default: by extension)")
      ->check(CLI::IsMember({"", "csv", "jsonl"}));
  ingest->add_flag("--collapse", o.collapse, "Collapse consecutive repeated calls");
  ingest->add_option("--max-len", o.max_len, "Keep the first N calls");
  ingest->add_option("--vocab-size", o.vocab_size, "Declared vocabulary size (0 = infer)");
  ingest->add_option("--out", o.out)->required();

  auto* split = app.add_subcommand("split", "Stratified train/test split");
  split->add_option("--in", o.in)->required()->check(existing);
  split->add_option("--train-out", o.train_out)->required();
  split->add_option("--test-out", o.test_out)->required();
  split->add_option("--test-frac", o.test_frac);
  split->add_flag("--no-stratify", o.no_stratify);
  add_seed(split);

  auto* balance = app.add_subcommand("balance", "Random oversampling of the minority class");
  balance->add_option("--train", o.train)->required()->check(existing);
  balance->add_option("--train-out", o.train_out)->required();
  balance->add_option("--test", o.test)->check(existing);
  balance->add_option("--test-out", o.test_out);
  balance->add_flag("--skip-test", o.skip_test, "Copy the test split unchanged");
  add_seed(balance);

  auto* featurize = app.add_subcommand("featurize", "2-gram/3-gram count features");
  featurize->add_option("--in", o.in)->required()->check(existing);
  featurize->add_option("--vocab", o.vocab, "Vocabulary file (read, or written with --build-vocab)")->required();
  featurize->add_flag("--build-vocab", o.build_vocab, "Build the vocabulary from --in");
  featurize->add_option("--min-count", o.min_count);
  featurize->add_option("--top-k", o.top_k, "Keep the K most frequent n-grams (0 = all)");
  featurize->add_option("--out", o.out)->required();
  featurize->add_option("--labels-out", o.labels_out);

  auto* train_det = app.add_subcommand("train-detector", "Train the bagged gradient-boosted detector");
  train_det->add_option("--train", o.train)->required()->check(existing);
  train_det->add_option("--labels", o.labels)->required()->check(existing);
  train_det->add_option("--out", o.out)->required();
  train_det->add_option("--vote", o.vote, "mean | majority");
  train_det->add_option("--threshold", o.threshold);
  train_det->add_flag("--no-bootstrap", o.no_bootstrap, "Train every member on the full set");
  train_det->add_option("--members", o.members, "lr:depth:trees,lr:depth:trees,lr:depth:trees");
  train_det->add_option("--vocab-ref", o.vocab_ref);
  add_seed(train_det);

  auto* detect = app.add_subcommand("detect", "Score a feature matrix");
  detect->add_option("--model", o.model)->required()->check(existing);
  detect->add_option("--in", o.in)->required()->check(existing);
  detect->add_option("--out", o.out)->required();

  auto* rank = app.add_subcommand("rank-features", "Most important n-grams by gain");
  rank->add_option("--model", o.model)->required()->check(existing);
  rank->add_option("--vocab", o.vocab)->required()->check(existing);
  rank->add_option("-k", o.k);
  rank->add_option("--corpus", o.corpus, "Labeled corpus for class counts")->check(existing);
  rank->add_option("--names", o.names, "id,name map")->check(existing);
  rank->add_option("--out", o.out);

  auto* train_pred = app.add_subcommand("train-predictor", "Train the Bi-LSTM next-call model");
  train_pred->add_option("--in", o.in)->required()->check(existing);
  train_pred->add_option("--vocab-size", o.vocab_size, "0 = corpus vocabulary");
  train_pred->add_option("--out", o.out)->required();
  train_pred->add_option("--embed", o.embed);
  train_pred->add_option("--hidden", o.hidden);
  train_pred->add_option("--dropout", o.dropout);
  train_pred->add_option("--lr", o.lr);
  train_pred->add_option("--batch", o.batch);
  train_pred->add_option("--epochs", o.epochs);
  train_pred->add_option("--patience", o.patience);
  train_pred->add_option("--val-frac", o.val_frac);
  train_pred->add_option("--max-prefix", o.max_prefix);
  train_pred->add_option("--keep-last", o.keep_last, "Keep the last N calls per trace (0 = all)");
  train_pred->add_option("--max-samples", o.max_samples, "Subsample training pairs (0 = all)");
  train_pred->add_option("--curves", o.curves);
  add_seed(train_pred);

  auto* predict = app.add_subcommand("predict-next", "Predict the next k calls");
  predict->add_option("--model", o.model)->required()->check(existing);
  predict->add_option("--seq", o.seq, "Comma-separated call ids");
  predict->add_option("-k", o.k);
  predict->add_option("--in", o.in, "Corpus to expand into prefix samples")->check(existing);
  predict->add_option("--pred-out", o.pred_out);
  predict->add_option("--truth-out", o.truth_out);
  predict->add_option("--scores-out", o.scores_out);

  auto* evaluate = app.add_subcommand("evaluate", "Metrics report");
  evaluate->add_option("--task", o.task, "detect | next-call");
  evaluate->add_option("--pred", o.pred)->required()->check(existing);
  evaluate->add_option("--truth", o.truth)->required()->check(existing);
  evaluate->add_option("--scores", o.scores)->check(existing);
  evaluate->add_option("--labels", o.n_labels, "Label count (0 = infer)");
  evaluate->add_option("--corpus", o.corpus, "Corpus for the rare-call report")->check(existing);
  evaluate->add_option("--names", o.names)->check(existing);
  evaluate->add_option("--rare-threshold", o.rare_threshold, "Call count; negative = 0.1% of all calls");
  evaluate->add_option("--out", o.out)->required();

  auto* reproduce = app.add_subcommand("reproduce", "Run both pipelines on the public datasets");
  reproduce->add_option("--dataset1", o.dataset1);
  reproduce->add_option("--dataset2", o.dataset2);
  reproduce->add_option("--outdir", o.outdir)->required();
  reproduce->add_option("--max-samples", o.max_samples, "Cap on training pairs per sequence model (0 = all)");
  reproduce->add_option("--max-test-samples", o.max_test_samples);
  reproduce->add_option("--epochs", o.epochs);
  reproduce->add_option("--embed", o.embed);
  reproduce->add_option("--batch", o.batch);
  add_seed(reproduce);

  // --config key=value files expand in place ahead of the explicit flags.
  std::vector<std::string> args;
  std::vector<std::string> injected;
  try {
    for (std::size_t i = 0; i < raw_args.size(); ++i) {
      const auto& a = raw_args[i];
      if (a == "--config" && i + 1 < raw_args.size()) {
        injected = config_arguments(raw_args[++i]);
      } else if (a.starts_with("--config=")) {
        injected = config_arguments(a.substr(9));
      } else {
        args.push_back(a);
      }
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  if (!injected.empty() && !args.empty()) args.insert(args.begin() + 1, injected.begin(), injected.end());

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << APISENTRY_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  TaskIo io;
  try {
    if (name == "synth") task_synth(o, io, out);
    else if (name == "adapt") task_adapt(o, io, out);
    else if (name == "ingest") task_ingest(o, io, out);
    else if (name == "split") task_split(o, io, out);
    else if (name == "balance") task_balance(o, io, out);
    else if (name == "featurize") task_featurize(o, io, out);
    else if (name == "train-detector") task_train_detector(o, io, out);
    else if (name == "detect") task_detect(o, io, out);
    else if (name == "rank-features") task_rank_features(o, io, out);
    else if (name == "train-predictor") task_train_predictor(o, io, out);
    else if (name == "predict-next") task_predict_next(o, io, out);
    else if (name == "evaluate") task_evaluate(o, io, out);
    else if (name == "reproduce") task_reproduce(o, io, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }

  Manifest manifest;
  manifest.task = name;
  for (const auto* opt : sub->get_options()) {
    if (opt->get_lnames().empty() && opt->get_snames().empty()) continue;
    const auto key = opt->get_lnames().empty() ? opt->get_snames().front() : opt->get_lnames().front();
    if (key == "help") continue;
    manifest.config[key] = resolved_value(opt);
  }
  manifest.inputs = io.inputs;
  manifest.outputs = io.outputs;
  manifest.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  try {
    manifest.write_beside_outputs();
  } catch (const std::exception& e) {
    err << "error: could not write manifest: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace apisentry::cli
