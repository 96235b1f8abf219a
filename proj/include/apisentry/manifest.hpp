#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace apisentry {

std::string sha256_hex(std::string_view data);

/// Run record written beside each output as "<output>.manifest.json".
struct Manifest {
  std::string task;
  std::map<std::string, std::string> config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_time_seconds = 0.0;

  /// JSON document with input/output content digests.
  std::string render() const;
  void write_beside_outputs() const;
};

}  // namespace apisentry
