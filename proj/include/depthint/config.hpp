#pragma once

// Flat "key=value" configuration files. Lines starting with '#' and blank lines are ignored;
// keys are snake_case and unique.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "depthint/completion.hpp"

namespace depthint {

class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::filesystem::path& path);
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  /// Keys in sorted order, values verbatim.
  void save(const std::filesystem::path& path) const;
  std::string str() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Comma-separated positive integers, e.g. "8,16,32,64".
std::vector<int> parse_int_list(const std::string& text);
std::string format_int_list(const std::vector<int>& values);

/// Network keys: resolution, channels, fc1, fc2, keypoints, fold_u, fold_hidden, kernel.
/// Missing keys keep the desk defaults.
CompletionConfig completion_config_from(const KeyValueConfig& config);
void store_completion_config(const CompletionConfig& model, KeyValueConfig& config);

}  // namespace depthint
