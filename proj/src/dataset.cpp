#include "reidforge/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace reidforge {

static_assert(std::endian::native == std::endian::little,
              "feature blobs are little-endian");

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

[[noreturn]] void malformed(const std::string& file, int lineno,
                            const std::string& why) {
  throw DataError(file + ":" + std::to_string(lineno) +
                  ": malformed record: " + why);
}

int parse_int_field(const std::string& file, int lineno, const std::string& s,
                    const char* what) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    malformed(file, lineno, std::string(what) + " is not an integer: \"" + s +
                                "\"");
  }
}

std::size_t parse_size_field(const std::string& file, int lineno,
                             const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    malformed(file, lineno, std::string(what) +
                                " is not a non-negative integer: \"" + s +
                                "\"");
  }
}

void check_id_writable(const std::string& id, const char* what) {
  if (id.empty() || id.find('\t') != std::string::npos ||
      id.find('\n') != std::string::npos) {
    throw DataError(std::string(what) +
                    " must be non-empty and tab/newline free: \"" + id + "\"");
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string to_string(Role role) {
  switch (role) {
    case Role::Train:
      return "train";
    case Role::Query:
      return "query";
    default:
      return "gallery";
  }
}

std::string to_string(Split split) {
  return split == Split::Train ? "train" : "test";
}

Role parse_role(const std::string& s) {
  if (s == "train") return Role::Train;
  if (s == "query") return Role::Query;
  if (s == "gallery") return Role::Gallery;
  throw DataError("unknown role: \"" + s + "\"");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw DataError("unknown split: \"" + s + "\"");
}

std::string normalize_team(const std::string& name) {
  auto b = name.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = name.find_last_not_of(" \t\r\n");
  std::string out = name.substr(b, e - b + 1);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool MatchMeta::same_pair(const MatchMeta& other) const {
  return (team_a_norm == other.team_a_norm &&
          team_b_norm == other.team_b_norm) ||
         (team_a_norm == other.team_b_norm && team_b_norm == other.team_a_norm);
}

bool MatchMeta::teams_intersect(const MatchMeta& other) const {
  return team_a_norm == other.team_a_norm ||
         team_a_norm == other.team_b_norm ||
         team_b_norm == other.team_a_norm || team_b_norm == other.team_b_norm;
}

Dataset::Dataset(std::vector<MatchMeta> matches, std::vector<ActionRef> actions,
                 std::vector<Sample> samples, Matrixd features)
    : matches_(std::move(matches)),
      actions_(std::move(actions)),
      samples_(std::move(samples)),
      features_(std::move(features)) {
  for (std::size_t i = 0; i < matches_.size(); ++i) {
    auto& m = matches_[i];
    m.team_a_norm = normalize_team(m.team_a);
    m.team_b_norm = normalize_team(m.team_b);
    if (!match_lookup_.emplace(m.match_id, i).second) {
      throw DataError("duplicate match_id \"" + m.match_id + "\"");
    }
  }
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    auto& a = actions_[i];
    auto it = match_lookup_.find(a.match_id);
    if (it == match_lookup_.end()) {
      throw DataError("action \"" + a.action_id +
                      "\" references unknown match \"" + a.match_id + "\"");
    }
    a.match_index = it->second;
    if (!action_lookup_.emplace(a.action_id, i).second) {
      throw DataError("duplicate action_id \"" + a.action_id + "\"");
    }
  }
  std::set<std::string> sample_ids;
  for (auto& s : samples_) {
    auto it = action_lookup_.find(s.action_id);
    if (it == action_lookup_.end()) {
      throw DataError("sample \"" + s.sample_id +
                      "\" references unknown action \"" + s.action_id + "\"");
    }
    s.action_index = it->second;
    if (!sample_ids.insert(s.sample_id).second) {
      throw DataError("duplicate sample_id \"" + s.sample_id + "\"");
    }
  }
  validate();
}

void Dataset::validate() const {
  for (const auto& m : matches_) {
    check_id_writable(m.match_id, "match_id");
    if (m.year <= 0) {
      throw DataError("match \"" + m.match_id + "\": year must be positive");
    }
    if (m.team_a_norm == m.team_b_norm) {
      throw DataError("match \"" + m.match_id +
                      "\": team_a and team_b must differ");
    }
  }
  for (const auto& a : actions_) check_id_writable(a.action_id, "action_id");
  if (static_cast<Index>(samples_.size()) != features_.rows()) {
    throw DataError("feature row count " + std::to_string(features_.rows()) +
                    " does not match sample count " +
                    std::to_string(samples_.size()));
  }
  for (const auto& s : samples_) {
    check_id_writable(s.sample_id, "sample_id");
    if (s.player_id < 0) {
      throw DataError("sample \"" + s.sample_id +
                      "\": player_id must be non-negative");
    }
    if (s.feature_index >= static_cast<std::size_t>(features_.rows())) {
      throw DataError("sample \"" + s.sample_id + "\": feature_index " +
                      std::to_string(s.feature_index) +
                      " out of range for feature store of " +
                      std::to_string(features_.rows()) + " rows");
    }
  }
}

std::size_t Dataset::action_index(const std::string& action_id) const {
  auto it = action_lookup_.find(action_id);
  if (it == action_lookup_.end()) {
    throw DataError("unknown action \"" + action_id + "\"");
  }
  return it->second;
}

std::size_t Dataset::match_index(const std::string& match_id) const {
  auto it = match_lookup_.find(match_id);
  if (it == match_lookup_.end()) {
    throw DataError("unknown match \"" + match_id + "\"");
  }
  return it->second;
}

std::vector<std::size_t> Dataset::split_sample_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<int> Dataset::split_player_ids(Split split) const {
  std::set<int> ids;
  for (const auto& s : samples_) {
    if (s.split == split) ids.insert(s.player_id);
  }
  return std::vector<int>(ids.begin(), ids.end());
}

bool Dataset::operator==(const Dataset& other) const {
  if (matches_.size() != other.matches_.size() ||
      actions_.size() != other.actions_.size() ||
      samples_.size() != other.samples_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < matches_.size(); ++i) {
    const auto& a = matches_[i];
    const auto& b = other.matches_[i];
    if (a.match_id != b.match_id || a.year != b.year || a.team_a != b.team_a ||
        a.team_b != b.team_b) {
      return false;
    }
  }
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (actions_[i].action_id != other.actions_[i].action_id ||
        actions_[i].match_id != other.actions_[i].match_id) {
      return false;
    }
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& a = samples_[i];
    const auto& b = other.samples_[i];
    if (a.sample_id != b.sample_id || a.player_id != b.player_id ||
        a.action_id != b.action_id || a.role != b.role ||
        a.feature_index != b.feature_index || a.split != b.split) {
      return false;
    }
  }
  if (features_.rows() != other.features_.rows() ||
      features_.cols() != other.features_.cols()) {
    return false;
  }
  // bit-exact feature comparison
  return std::memcmp(features_.data(), other.features_.data(),
                     sizeof(double) * features_.size()) == 0;
}

Matrixd load_feature_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path);
  std::string header;
  if (!std::getline(in, header)) {
    throw DataError(path + ": missing RF1 header");
  }
  std::istringstream hs(header);
  std::string magic;
  long long rows = -1, dim = -1;
  hs >> magic >> rows >> dim;
  if (magic != "RF1" || rows < 0 || dim < 0 || hs.fail()) {
    throw DataError(path + ": bad RF1 header: \"" + header + "\"");
  }
  std::vector<float> raw(static_cast<std::size_t>(rows) *
                         static_cast<std::size_t>(dim));
  if (!raw.empty()) {
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (in.gcount() !=
        static_cast<std::streamsize>(raw.size() * sizeof(float))) {
      throw DataError(path + ": truncated feature blob");
    }
  }
  Matrixd m(rows, dim);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(raw[static_cast<std::size_t>(i)]);
  }
  return m;
}

void save_feature_matrix(const Matrixd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("unwritable path: " + path);
  out << "RF1 " << m.rows() << " " << m.cols() << "\n";
  std::vector<float> raw(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) {
    raw[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  }
  if (!raw.empty()) {
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
  }
  if (!out) throw DataError("unwritable path: " + path);
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string matches_path = (fs::path(dir) / "matches.tsv").string();
  const std::string actions_path = (fs::path(dir) / "actions.tsv").string();
  const std::string samples_path = (fs::path(dir) / "samples.tsv").string();
  const std::string features_path = (fs::path(dir) / "features.bin").string();

  std::vector<MatchMeta> matches;
  {
    int lineno = 0;
    for (const auto& line : read_lines(matches_path)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_fields(line);
      if (f.size() != 4) malformed(matches_path, lineno, "expected 4 fields");
      MatchMeta m;
      m.match_id = f[0];
      m.year = parse_int_field(matches_path, lineno, f[1], "year");
      m.team_a = f[2];
      m.team_b = f[3];
      matches.push_back(std::move(m));
    }
  }
  std::vector<ActionRef> actions;
  {
    int lineno = 0;
    for (const auto& line : read_lines(actions_path)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_fields(line);
      if (f.size() != 2) malformed(actions_path, lineno, "expected 2 fields");
      actions.push_back(ActionRef{f[0], f[1], 0});
    }
  }
  std::vector<Sample> samples;
  {
    int lineno = 0;
    for (const auto& line : read_lines(samples_path)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_fields(line);
      if (f.size() != 6) malformed(samples_path, lineno, "expected 6 fields");
      Sample s;
      s.sample_id = f[0];
      s.player_id = parse_int_field(samples_path, lineno, f[1], "player_id");
      s.action_id = f[2];
      try {
        s.role = parse_role(f[3]);
        s.split = parse_split(f[5]);
      } catch (const DataError& e) {
        malformed(samples_path, lineno, e.what());
      }
      s.feature_index =
          parse_size_field(samples_path, lineno, f[4], "feature_index");
      samples.push_back(std::move(s));
    }
  }
  Matrixd features = load_feature_matrix(features_path);
  return Dataset(std::move(matches), std::move(actions), std::move(samples),
                 std::move(features));
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("unwritable path: " + dir);
  }

  {
    std::ofstream out(fs::path(dir) / "matches.tsv");
    if (!out) throw DataError("unwritable path: " + dir);
    for (const auto& m : dataset.matches()) {
      out << m.match_id << "\t" << m.year << "\t" << m.team_a << "\t"
          << m.team_b << "\n";
    }
    if (!out) throw DataError("unwritable path: " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "actions.tsv");
    if (!out) throw DataError("unwritable path: " + dir);
    for (const auto& a : dataset.actions()) {
      out << a.action_id << "\t" << a.match_id << "\n";
    }
    if (!out) throw DataError("unwritable path: " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "samples.tsv");
    if (!out) throw DataError("unwritable path: " + dir);
    for (const auto& s : dataset.samples()) {
      out << s.sample_id << "\t" << s.player_id << "\t" << s.action_id << "\t"
          << to_string(s.role) << "\t" << s.feature_index << "\t"
          << to_string(s.split) << "\n";
    }
    if (!out) throw DataError("unwritable path: " + dir);
  }
  save_feature_matrix(dataset.features(),
                      (fs::path(dir) / "features.bin").string());
}

std::unordered_map<std::string, QueryGallery> index_by_action(
    const Dataset& dataset) {
  std::unordered_map<std::string, QueryGallery> out;
  const auto& samples = dataset.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.role == Role::Train) continue;
    auto& entry = out[s.action_id];
    if (s.role == Role::Query) {
      entry.query.push_back(i);
    } else {
      entry.gallery.push_back(i);
    }
  }
  return out;
}

}  // namespace reidforge
