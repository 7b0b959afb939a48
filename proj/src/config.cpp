#include "reidforge/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace reidforge {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// shortest decimal form that parses back to the same double
std::string render_double(double v) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
  (void)ec;
  return std::string(buffer, end);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_string(body.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text,
                                            const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config " + origin + ":" + std::to_string(lineno) +
                       ": expected key=value, got \"" + line + "\"");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw UsageError("config " + origin + ":" + std::to_string(lineno) +
                       ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw UsageError("config " + origin + ":" + std::to_string(lineno) +
                       ": duplicate key \"" + key + "\"");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  consumed_.erase(key);
  effective_.erase(key);
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  std::string v = it == values_.end() ? fallback : it->second;
  effective_[key] = v;
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  double v = fallback;
  if (it != values_.end()) {
    try {
      std::size_t pos = 0;
      v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw UsageError("config " + origin_ + ": key \"" + key +
                       "\" is not a number: \"" + it->second + "\"");
    }
  }
  effective_[key] = render_double(v);
  return v;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  int v = fallback;
  if (it != values_.end()) {
    try {
      std::size_t pos = 0;
      v = std::stoi(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw UsageError("config " + origin_ + ": key \"" + key +
                       "\" is not an integer: \"" + it->second + "\"");
    }
  }
  effective_[key] = std::to_string(v);
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  std::uint64_t v = fallback;
  if (it != values_.end()) {
    try {
      std::size_t pos = 0;
      v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw UsageError("config " + origin_ + ": key \"" + key +
                       "\" is not an unsigned integer: \"" + it->second +
                       "\"");
    }
  }
  effective_[key] = std::to_string(v);
  return v;
}

std::vector<Index> KeyValueConfig::get_index_list(
    const std::string& key, const std::vector<Index>& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  std::vector<Index> v;
  if (it == values_.end()) {
    v = fallback;
  } else if (!trim(it->second).empty()) {
    std::istringstream in(it->second);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      tok = trim(tok);
      try {
        std::size_t pos = 0;
        v.push_back(static_cast<Index>(std::stoll(tok, &pos)));
        if (pos != tok.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw UsageError("config " + origin_ + ": key \"" + key +
                         "\" has a bad list element: \"" + tok + "\"");
      }
    }
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  effective_[key] = os.str();
  return v;
}

void KeyValueConfig::ensure_all_consumed() const {
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) {
      throw UsageError("config " + origin_ + ": unknown key \"" + key + "\"");
    }
  }
}

std::string KeyValueConfig::render() const {
  std::ostringstream os;
  for (const auto& [key, value] : effective_) os << key << "=" << value << "\n";
  return os.str();
}

}  // namespace reidforge
