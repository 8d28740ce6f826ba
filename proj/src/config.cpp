#include "hrg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hrg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    }
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::merge(const Config& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::optional<std::string> Config::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long r = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' must be an integer, got '" + *v + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double r = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' must be a number, got '" + *v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw std::invalid_argument("config: '" + key + "' must be a boolean, got '" + *v + "'");
}

std::vector<long long> Config::get_ints(const std::string& key, const std::vector<long long>& fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<long long> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoll(trim(item)));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: '" + key + "' must be a comma-separated integer list, got '" + *v + "'");
    }
  }
  return out;
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file " + path.string());
  out << to_text();
}

}  // namespace hrg
