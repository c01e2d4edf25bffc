#include "depthint/config.hpp"

#include <fstream>
#include <sstream>

#include "depthint/error.hpp"

namespace depthint {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

int to_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw DataError("config key '" + key + "': expected an integer, got '" + value + "'");
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw DataError(where + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw DataError(where + ": empty key");
    if (cfg.has(key)) throw DataError(where + ": duplicate key '" + key + "'");
    cfg.set(key, trim(t.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string KeyValueConfig::str() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << str();
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw DataError("config key '" + key + "' is missing");
  return it->second;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int("list", trim(item)));
  if (out.empty()) throw DataError("empty integer list '" + text + "'");
  return out;
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

CompletionConfig completion_config_from(const KeyValueConfig& config) {
  CompletionConfig c;
  auto read = [&](const char* key, int& field) {
    if (config.has(key)) field = to_int(key, config.get(key));
  };
  read("resolution", c.resolution);
  if (config.has("channels")) c.channels = parse_int_list(config.get("channels"));
  read("fc1", c.fc1);
  read("fc2", c.fc2);
  read("keypoints", c.keypoints);
  read("fold_u", c.fold_u);
  read("fold_hidden", c.fold_hidden);
  read("kernel", c.kernel);
  c.validate();
  return c;
}

void store_completion_config(const CompletionConfig& model, KeyValueConfig& config) {
  config.set("resolution", std::to_string(model.resolution));
  config.set("channels", format_int_list(model.channels));
  config.set("fc1", std::to_string(model.fc1));
  config.set("fc2", std::to_string(model.fc2));
  config.set("keypoints", std::to_string(model.keypoints));
  config.set("fold_u", std::to_string(model.fold_u));
  config.set("fold_hidden", std::to_string(model.fold_hidden));
  config.set("kernel", std::to_string(model.kernel));
}

}  // namespace depthint
