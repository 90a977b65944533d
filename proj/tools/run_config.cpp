#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "homoglab/error.hpp"

namespace homoglab::cli {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"grid", {"d", "n", "L"}},
      {"field",
       {"kind", "matrix", "axis", "value1", "value2", "period", "alpha_mean", "alpha_amp", "beta_mean", "beta_amp"}},
      {"ensemble",
       {"covariance", "variance", "lambda", "symmetric", "skew_amplitude", "skew_correlation", "skew_shift"}},
      {"experiment",
       {"ells", "ells_over_L", "seeds", "first_seed", "master_seed", "psi_mode", "scale_guard", "rstar_delta"}},
      {"macro", {"f_radius", "ball_radius", "center"}},
      {"solver", {"rel_tol", "max_iter", "method"}},
      {"run", {"out", "threads", "dump_fields"}},
  };
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(Errc::Validation, fmt::format("config key {}: {}", key, what));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

double to_double(const std::string& key, const std::string& token) {
  double v = 0.0;
  const char* end = token.data() + token.size();
  const auto r = std::from_chars(token.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) bad(key, "'" + token + "' is not a number");
  return v;
}

template <class Int>
Int to_int(const std::string& key, const std::string& token) {
  Int v{};
  const char* end = token.data() + token.size();
  const auto r = std::from_chars(token.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) bad(key, "'" + token + "' is not an integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& token) {
  if (token == "true" || token == "1" || token == "yes" || token == "on") return true;
  if (token == "false" || token == "0" || token == "no" || token == "off") return false;
  bad(key, "'" + token + "' is not a boolean");
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::string s = value;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream is(s);
  std::vector<double> out;
  for (std::string tok; is >> tok;) out.push_back(to_double(key, tok));
  if (out.empty()) bad(key, "empty list");
  return out;
}

/// Typed access to one section; records nothing, the schema check runs first.
class Section {
 public:
  Section(const pt::ptree& root, std::string name) : name_(std::move(name)) {
    if (auto child = root.get_child_optional(name_)) node_ = &*child;
  }

  std::optional<std::string> raw(const std::string& key) const {
    if (!node_) return std::nullopt;
    auto v = node_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    const std::string t = trim(*v);
    if (t.empty()) bad(full(key), "empty value");
    return t;
  }
  std::string full(const std::string& key) const { return "[" + name_ + "] " + key; }

  void get(const std::string& key, double& out) const {
    if (auto v = raw(key)) out = to_double(full(key), *v);
  }
  void get(const std::string& key, int& out) const {
    if (auto v = raw(key)) out = to_int<int>(full(key), *v);
  }
  void get(const std::string& key, std::uint64_t& out) const {
    if (auto v = raw(key)) out = to_int<std::uint64_t>(full(key), *v);
  }
  void get(const std::string& key, bool& out) const {
    if (auto v = raw(key)) out = to_bool(full(key), *v);
  }
  std::optional<std::vector<double>> list(const std::string& key) const {
    if (auto v = raw(key)) return to_list(full(key), *v);
    return std::nullopt;
  }

 private:
  std::string name_;
  const pt::ptree* node_ = nullptr;
};

void check_schema(const pt::ptree& root) {
  for (const auto& [section, node] : root) {
    if (!node.data().empty() && node.empty())
      throw Error(Errc::Validation, fmt::format("config key {} appears outside any section", section));
    const auto it = schema().find(section);
    if (it == schema().end()) throw Error(Errc::Validation, fmt::format("unknown config section [{}]", section));
    for (const auto& [key, value] : node) {
      (void)value;
      if (!it->second.count(key)) throw Error(Errc::Validation, fmt::format("unknown config key [{}] {}", section, key));
    }
  }
}

DeterministicKind deterministic_kind(const std::string& key, const std::string& s) {
  if (s == "constant") return DeterministicKind::Constant;
  if (s == "laminate") return DeterministicKind::Laminate;
  if (s == "checkerboard") return DeterministicKind::Checkerboard;
  if (s == "skew_profile") return DeterministicKind::SkewProfile;
  if (s == "trig_polynomial") return DeterministicKind::TrigPolynomial;
  bad(key, "unknown field kind '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  pt::ptree root;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::Validation, fmt::format("config parse error at line {}: {}", e.line(), e.message()));
  }
  check_schema(root);

  RunConfig rc;
  rc.text = text;
  ExperimentConfig& cfg = rc.experiment;

  const Section grid(root, "grid");
  grid.get("d", cfg.d);
  grid.get("n", cfg.n);
  grid.get("L", cfg.L);

  const Section ens(root, "ensemble");
  if (auto c = ens.raw("covariance")) {
    if (*c == "gaussian_bump")
      cfg.covariance = CovarianceKind::GaussianBump;
    else if (*c == "exponential")
      cfg.covariance = CovarianceKind::Exponential;
    else
      bad(ens.full("covariance"), "unknown covariance '" + *c + "'");
  }
  ens.get("variance", cfg.variance);
  ens.get("lambda", cfg.map.lambda);
  ens.get("symmetric", cfg.map.symmetric);
  ens.get("skew_amplitude", cfg.map.skew_amplitude);
  ens.get("skew_correlation", cfg.map.skew_correlation);
  ens.get("skew_shift", cfg.map.skew_shift);

  const Section field(root, "field");
  const std::string kind = field.raw("kind").value_or("random");
  if (kind != "random") {
    DeterministicSpec spec;
    spec.kind = deterministic_kind(field.full("kind"), kind);
    spec.matrix = SmallMatrix::identity(cfg.d);
    if (auto m = field.list("matrix")) {
      if (m->size() != static_cast<std::size_t>(cfg.d * cfg.d))
        bad(field.full("matrix"), fmt::format("expected {} entries, got {}", cfg.d * cfg.d, m->size()));
      for (int i = 0; i < cfg.d; ++i)
        for (int j = 0; j < cfg.d; ++j) spec.matrix(i, j) = (*m)[static_cast<std::size_t>(i * cfg.d + j)];
    }
    field.get("axis", spec.axis);
    field.get("value1", spec.value1);
    field.get("value2", spec.value2);
    field.get("period", spec.period);
    field.get("alpha_mean", spec.alpha_mean);
    field.get("alpha_amp", spec.alpha_amp);
    field.get("beta_mean", spec.beta_mean);
    field.get("beta_amp", spec.beta_amp);
    cfg.deterministic = spec;
  } else {
    for (const char* key : {"matrix", "axis", "value1", "value2", "period", "alpha_mean", "alpha_amp", "beta_mean",
                            "beta_amp"})
      if (field.raw(key)) bad(field.full(key), "only meaningful for deterministic fields");
  }

  const Section ex(root, "experiment");
  const auto ells = ex.list("ells");
  const auto rel = ex.list("ells_over_L");
  if (ells && rel) bad(ex.full("ells"), "give either ells or ells_over_L, not both");
  if (ells) cfg.ells = *ells;
  if (rel)
    for (double r : *rel) cfg.ells.push_back(r * cfg.L);
  if (!ells && !rel) cfg.ells = {cfg.L / 16.0};
  ex.get("seeds", cfg.seeds);
  ex.get("first_seed", cfg.first_seed);
  ex.get("master_seed", cfg.master_seed);
  if (auto m = ex.raw("psi_mode")) {
    if (*m == "symmetrized")
      cfg.psi_mode = PsiMode::Symmetrized;
    else if (*m == "full")
      cfg.psi_mode = PsiMode::Full;
    else
      bad(ex.full("psi_mode"), "expected symmetrized or full");
  }
  ex.get("scale_guard", cfg.scale_guard);
  ex.get("rstar_delta", cfg.rstar_delta);

  const Section macro(root, "macro");
  macro.get("f_radius", cfg.macro.f_radius);
  macro.get("ball_radius", cfg.macro.ball_radius);
  if (auto c = macro.list("center")) {
    if (c->size() != static_cast<std::size_t>(cfg.d))
      bad(macro.full("center"), fmt::format("expected {} coordinates", cfg.d));
    std::array<double, 3> p{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < c->size(); ++a) p[a] = (*c)[a];
    cfg.macro.center = p;
  }

  const Section solver(root, "solver");
  solver.get("rel_tol", cfg.solver.rel_tol);
  solver.get("max_iter", cfg.solver.max_iter);
  if (auto m = solver.raw("method")) {
    if (*m == "auto")
      cfg.solver.method = KrylovMethod::Auto;
    else if (*m == "cg")
      cfg.solver.method = KrylovMethod::Cg;
    else if (*m == "bicgstab")
      cfg.solver.method = KrylovMethod::BiCgStab;
    else
      bad(solver.full("method"), "expected auto, cg or bicgstab");
  }

  const Section run(root, "run");
  if (auto o = run.raw("out")) rc.out = *o;
  if (run.raw("threads")) {
    int t = 0;
    run.get("threads", t);
    rc.threads = t;
  }
  run.get("dump_fields", rc.dump_fields);
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Validation, "cannot open config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

int resolve_threads(std::optional<int> flag, const RunConfig& cfg) {
  int t = 1;
  if (flag) {
    t = *flag;
  } else if (cfg.threads) {
    t = *cfg.threads;
  } else if (const char* env = std::getenv("HOMOGLAB_THREADS"); env && *env) {
    t = to_int<int>("HOMOGLAB_THREADS", trim(env));
  }
  if (t < 1) throw Error(Errc::Validation, fmt::format("thread count must be positive, got {}", t));
  return t;
}

}  // namespace homoglab::cli
