#include "tactile/grid.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace tactile {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("invalid integer '" + v + "' for " + key);
  }
  if (used != v.size() || n < 0) throw ConfigError("invalid integer '" + v + "' for " + key);
  return static_cast<std::size_t>(n);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("invalid number '" + v + "' for " + key);
  }
  if (used != v.size()) throw ConfigError("invalid number '" + v + "' for " + key);
  return x;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string format_params(const HyperParams& p) {
  std::string s;
  for (const auto& [k, v] : p) s += (s.empty() ? "" : " ") + k + "=" + v;
  return s;
}

const std::string& param_value(const HyperParams& p, const std::string& key) {
  for (const auto& kv : p)
    if (kv.first == key) return kv.second;
  throw ConfigError("missing hyperparameter '" + key + "'");
}

HyperGrid::HyperGrid(std::vector<std::pair<std::string, std::vector<std::string>>> axes) : axes_(std::move(axes)) {
  for (const auto& [k, vs] : axes_) {
    if (k.empty()) throw ConfigError("grid axis with an empty name");
    if (vs.empty()) throw ConfigError("grid axis '" + k + "' has no values");
    for (const auto& [k2, unused] : axes_)
      if (&k2 != &k && k2 == k) throw ConfigError("duplicate grid axis '" + k + "'");
  }
}

HyperGrid HyperGrid::parse(const std::string& text) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("grid line " + std::to_string(lineno) + ": expected key = values");
    const std::string key = trim(line.substr(0, eq));
    std::vector<std::string> values;
    std::istringstream vs(line.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) {
      v = trim(v);
      if (v.empty()) throw ConfigError("grid line " + std::to_string(lineno) + ": empty value");
      values.push_back(v);
    }
    axes.emplace_back(key, std::move(values));
  }
  if (axes.empty()) throw ConfigError("grid definition has no axes");
  return HyperGrid(std::move(axes));
}

HyperGrid HyperGrid::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open grid file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string HyperGrid::str() const {
  std::string s;
  for (const auto& [k, vs] : axes_) {
    s += k + " =";
    for (std::size_t i = 0; i < vs.size(); ++i) s += (i ? ", " : " ") + vs[i];
    s += "\n";
  }
  return s;
}

std::size_t HyperGrid::size() const {
  if (axes_.empty()) return 0;
  std::size_t n = 1;
  for (const auto& a : axes_) n *= a.second.size();
  return n;
}

std::vector<HyperParams> HyperGrid::candidates() const {
  std::vector<HyperParams> out;
  const std::size_t total = size();
  for (std::size_t i = 0; i < total; ++i) {
    HyperParams p(axes_.size());
    std::size_t rem = i;
    for (std::size_t a = axes_.size(); a-- > 0;) {
      const auto& vs = axes_[a].second;
      p[a] = {axes_[a].first, vs[rem % vs.size()]};
      rem /= vs.size();
    }
    out.push_back(std::move(p));
  }
  return out;
}

HyperGrid default_tree_grid() {
  return HyperGrid({{"max_depth", {"3", "5", "8", "12", "none"}},
                    {"min_samples_leaf", {"1", "2", "5", "10"}},
                    {"min_samples_split", {"2", "5", "10"}},
                    {"random_state", {"0"}}});
}

HyperGrid default_svm_grid() {
  return HyperGrid({{"C", {"0.1", "1", "10", "100"}},
                    {"kernel", {"linear", "rbf", "poly", "sigmoid"}},
                    {"gamma", {"scale", "0.01", "0.1", "1"}},
                    {"decision_function_shape", {"ovr", "ovo"}}});
}

TreeParams tree_params_from(const HyperParams& p) {
  TreeParams t;
  for (const auto& [k, v] : p) {
    if (k == "max_depth") {
      if (v == "none") t.max_depth.reset();
      else t.max_depth = parse_count(k, v);
    } else if (k == "min_samples_leaf") {
      t.min_samples_leaf = parse_count(k, v);
    } else if (k == "min_samples_split") {
      t.min_samples_split = parse_count(k, v);
    } else if (k == "random_state") {
      t.random_state = parse_count(k, v);
    } else {
      throw ConfigError("unknown tree hyperparameter '" + k + "'");
    }
  }
  t.validate();
  return t;
}

SvmParams svm_params_from(const HyperParams& p, const SvmParams& base) {
  SvmParams s = base;
  for (const auto& [k, v] : p) {
    if (k == "C") s.C = parse_real(k, v);
    else if (k == "kernel") s.kernel = parse_kernel(v);
    else if (k == "gamma") s.gamma = Gamma::parse(v);
    else if (k == "decision_function_shape") s.shape = parse_decision_shape(v);
    else if (k == "degree") s.degree = static_cast<int>(parse_count(k, v));
    else if (k == "coef0") s.coef0 = parse_real(k, v);
    else throw ConfigError("unknown SVM hyperparameter '" + k + "'");
  }
  s.validate();
  return s;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& actual) {
  if (predicted.size() != actual.size()) throw InputError("accuracy: length mismatch");
  if (actual.empty()) throw InputError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) hit += predicted[i] == actual[i];
  return static_cast<double>(hit) / static_cast<double>(actual.size());
}

std::uint64_t candidate_seed(std::uint64_t master, std::size_t index) {
  // splitmix64 step over (master, index)
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void write_grid_report_csv(const std::string& path, const HyperGrid& grid, const std::vector<CandidateResult>& report) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << "index";
  for (const auto& a : grid.axes()) f << ',' << a.first;
  f << ",seed,status,cached,train_accuracy,val_accuracy,error\n";
  char buf[64];
  for (const CandidateResult& r : report) {
    f << r.index;
    for (const auto& kv : r.params) f << ',' << csv_field(kv.second);
    f << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << (r.cached ? 1 : 0);
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,", r.train_accuracy, r.val_accuracy);
    f << buf << csv_field(r.error) << '\n';
  }
}

}  // namespace tactile
