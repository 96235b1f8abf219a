#include <cmath>
#include <sstream>

#include "apisentry/error.hpp"
#include "apisentry/seqmodel.hpp"
#include "apisentry/textio.hpp"

namespace apisentry {

namespace {

constexpr std::string_view kModelMagic = "apisentry-seqmodel";
constexpr int kModelVersion = 1;

}  // namespace

std::string serialize_model(const BiLstmModel& model) {
  using textio::format_double;
  const auto& c = model.config;
  std::ostringstream out;
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "vocab_size " << c.vocab_size << '\n'
      << "embed_dim " << c.embed_dim << '\n'
      << "hidden " << c.hidden << '\n'
      << "dropout_rate " << format_double(c.dropout_rate) << '\n'
      << "learning_rate " << format_double(c.learning_rate) << '\n'
      << "adam_beta1 " << format_double(c.adam_beta1) << '\n'
      << "adam_beta2 " << format_double(c.adam_beta2) << '\n'
      << "adam_eps " << format_double(c.adam_eps) << '\n'
      << "batch_size " << c.batch_size << '\n'
      << "max_epochs " << c.max_epochs << '\n'
      << "patience " << c.patience << '\n'
      << "val_fraction " << format_double(c.val_fraction) << '\n'
      << "max_prefix_len " << c.max_prefix_len << '\n'
      << "seed " << c.seed << '\n';
  for (const auto& [name, tensor] : model.tensors()) {
    out << "tensor " << name << ' ' << tensor->rows() << ' ' << tensor->cols() << '\n';
    for (Eigen::Index r = 0; r < tensor->rows(); ++r) {
      for (Eigen::Index col = 0; col < tensor->cols(); ++col) {
        if (col) out << ' ';
        out << format_double((*tensor)(r, col));
      }
      out << '\n';
    }
  }
  return out.str();
}

BiLstmModel parse_model(std::string_view content) {
  const auto all = textio::lines(content);
  std::size_t pos = 0;
  auto next_fields = [&](std::string_view key, std::size_t n) {
    if (pos >= all.size()) throw ValidationError("model: unexpected end of file, wanted '" + std::string(key) + "'");
    auto fields = textio::split(all[pos++], ' ');
    if (fields.size() != n + 1 || fields[0] != key) {
      throw ValidationError("model line " + std::to_string(pos) + ": expected '" + std::string(key) + "'");
    }
    fields.erase(fields.begin());
    return fields;
  };
  auto u32 = [&](std::string_view key) {
    return static_cast<std::uint32_t>(textio::parse_uint(next_fields(key, 1)[0], key));
  };
  auto real = [&](std::string_view key) { return textio::parse_double(next_fields(key, 1)[0], key); };

  if (textio::parse_int(next_fields(kModelMagic, 1)[0], "model version") != kModelVersion) {
    throw ValidationError("model: unsupported version");
  }
  BiLstmConfig c;
  c.vocab_size = u32("vocab_size");
  c.embed_dim = u32("embed_dim");
  c.hidden = u32("hidden");
  c.dropout_rate = real("dropout_rate");
  c.learning_rate = real("learning_rate");
  c.adam_beta1 = real("adam_beta1");
  c.adam_beta2 = real("adam_beta2");
  c.adam_eps = real("adam_eps");
  c.batch_size = u32("batch_size");
  c.max_epochs = u32("max_epochs");
  c.patience = u32("patience");
  c.val_fraction = real("val_fraction");
  c.max_prefix_len = u32("max_prefix_len");
  c.seed = textio::parse_uint(next_fields("seed", 1)[0], "seed");
  c.validate();

  // Shapes come from the config; the file must agree.
  BiLstmModel model = init_model(c, 0);
  for (auto& [name, tensor] : model.tensors()) {
    const auto header = next_fields("tensor", 3);
    if (header[0] != name || textio::parse_uint(header[1], "rows") != static_cast<std::uint64_t>(tensor->rows()) ||
        textio::parse_uint(header[2], "cols") != static_cast<std::uint64_t>(tensor->cols())) {
      throw ValidationError("model: tensor '" + name + "' missing or misshapen");
    }
    for (Eigen::Index r = 0; r < tensor->rows(); ++r) {
      if (pos >= all.size()) throw ValidationError("model: truncated tensor '" + name + "'");
      const auto values = textio::split(all[pos++], ' ');
      if (static_cast<Eigen::Index>(values.size()) != tensor->cols()) {
        throw ValidationError("model line " + std::to_string(pos) + ": wrong number of values");
      }
      for (Eigen::Index col = 0; col < tensor->cols(); ++col) {
        const double v = textio::parse_double(values[static_cast<std::size_t>(col)], name);
        if (!std::isfinite(v)) throw ValidationError("model: non-finite value in '" + name + "'");
        (*tensor)(r, col) = v;
      }
    }
  }
  return model;
}

}  // namespace apisentry
