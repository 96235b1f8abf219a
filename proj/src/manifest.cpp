#include "apisentry/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "apisentry/textio.hpp"

namespace apisentry {

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx.get(), data.data(), data.size());
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string Manifest::render() const {
  auto digests = [](const std::vector<std::string>& paths) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& path : paths) {
      out[path] = std::filesystem::is_regular_file(path) ? sha256_hex(textio::read_file(path)) : "missing";
    }
    return out;
  };
  nlohmann::json doc;
  doc["tool"] = "apisentry";
  doc["version"] = APISENTRY_VERSION;
  doc["task"] = task;
  doc["config"] = config;
  doc["inputs"] = digests(inputs);
  doc["outputs"] = digests(outputs);
  doc["wall_time_seconds"] = wall_time_seconds;
  return doc.dump(2) + "\n";
}

void Manifest::write_beside_outputs() const {
  const auto text = render();
  for (const auto& path : outputs) textio::write_file(path + ".manifest.json", text);
}

}  // namespace apisentry
