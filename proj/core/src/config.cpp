#include "coag/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

extern char** environ;

namespace coag {

using json = nlohmann::json;

ConfigError::ConfigError(const std::string& source, int line, int column,
                         const std::string& field, const std::string& message)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << source;
        if (line > 0) os << ":" << line << ":" << column;
        os << ": " << (field.empty() ? "config" : field) << ": " << message;
        return os.str();
      }()),
      line_(line),
      column_(column),
      field_(field) {}

namespace {

const std::vector<std::string> kSections = {"params", "kernel", "alpha", "diffusion", "initial",
                                            "cell",   "sim",    "pde",   "validate",  "run"};

class Context {
 public:
  explicit Context(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field,
                         const std::string& message) const {
    int line = 0, col = 0;
    if (node.IsDefined() && !node.IsNull() && node.Mark().line >= 0) {
      line = node.Mark().line + 1;
      col = node.Mark().column + 1;
    }
    throw ConfigError(source_, line, col, field, message);
  }
  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& field,
                         const std::string& message) const {
    const int line = mark.line >= 0 ? mark.line + 1 : 0;
    const int col = mark.column >= 0 ? mark.column + 1 : 0;
    throw ConfigError(source_, line, col, field, message);
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

std::string scalar_of(const Context& ctx, const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) ctx.fail(node, field, "expected a scalar");
  return node.Scalar();
}

double to_double(const Context& ctx, const YAML::Node& node, const std::string& field) {
  const std::string s = scalar_of(ctx, node, field);
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (!s.empty() && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) ctx.fail(node, field, "expected a number, got '" + s + "'");
  if (!std::isfinite(v)) ctx.fail(node, field, "must be finite");
  return v;
}

std::int64_t to_int(const Context& ctx, const YAML::Node& node, const std::string& field) {
  const std::string s = scalar_of(ctx, node, field);
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    ctx.fail(node, field, "expected an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_uint(const Context& ctx, const YAML::Node& node, const std::string& field) {
  const std::string s = scalar_of(ctx, node, field);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    ctx.fail(node, field, "expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const Context& ctx, const YAML::Node& node, const std::string& field) {
  const std::string s = scalar_of(ctx, node, field);
  if (s == "true") return true;
  if (s == "false") return false;
  ctx.fail(node, field, "expected true or false, got '" + s + "'");
}

void read(const Context& c, const YAML::Node& n, const std::string& f, double& out) {
  out = to_double(c, n, f);
}
void read(const Context& c, const YAML::Node& n, const std::string& f, int& out) {
  const auto v = to_int(c, n, f);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    c.fail(n, f, "integer out of range");
  }
  out = static_cast<int>(v);
}
void read(const Context& c, const YAML::Node& n, const std::string& f, std::int64_t& out) {
  out = to_int(c, n, f);
}
void read(const Context& c, const YAML::Node& n, const std::string& f, std::uint64_t& out) {
  out = to_uint(c, n, f);
}
void read(const Context& c, const YAML::Node& n, const std::string& f, bool& out) {
  out = to_bool(c, n, f);
}
void read(const Context& c, const YAML::Node& n, const std::string& f, std::string& out) {
  out = scalar_of(c, n, f);
}
template <class T>
void read(const Context& c, const YAML::Node& n, const std::string& f, std::vector<T>& out) {
  if (!n.IsSequence()) c.fail(n, f, "expected a list");
  out.clear();
  for (std::size_t k = 0; k < n.size(); ++k) {
    T v{};
    read(c, n[k], f + "[" + std::to_string(k) + "]", v);
    out.push_back(std::move(v));
  }
}

/// One mapping section; remembers which keys were consumed.
class Section {
 public:
  Section(const Context& ctx, YAML::Node node, std::string name)
      : ctx_(ctx), node_(std::move(node)), name_(std::move(name)) {
    if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap()) {
      ctx_.fail(node_, name_, "expected a mapping");
    }
  }

  bool present() const { return node_.IsDefined() && node_.IsMap(); }
  bool has(const std::string& key) const { return present() && node_[key].IsDefined(); }

  template <class T>
  bool get(const std::string& key, T& out) {
    used_.insert(key);
    if (!present()) return false;
    const YAML::Node n = node_[key];
    if (!n.IsDefined() || n.IsNull()) return false;
    read(ctx_, n, field(key), out);
    return true;
  }

  template <class T, class Pred>
  bool get(const std::string& key, T& out, Pred&& ok, const char* what) {
    const bool found = get(key, out);
    if (!ok(out)) fail(key, what);
    return found;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    if (present() && node_[key].IsDefined()) ctx_.fail(node_[key], field(key), message);
    ctx_.fail(node_, field(key), message);
  }

  void finish() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!used_.count(key)) ctx_.fail(kv.first, field(key), "unknown key");
    }
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }
  const YAML::Node& node() const { return node_; }

 private:
  const Context& ctx_;
  YAML::Node node_;
  std::string name_;
  std::set<std::string> used_;
};

bool positive(double v) { return v > 0.0; }
bool nonneg(double v) { return v >= 0.0; }
template <class T>
auto one_of(std::initializer_list<const char*> names) {
  std::vector<std::string> v(names.begin(), names.end());
  return [v](const T& s) {
    for (const auto& n : v) {
      if (s == n) return true;
    }
    return false;
  };
}

void apply_override(YAML::Node& root, const std::string& section, const std::string& key,
                    const std::string& value) {
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception&) {
    parsed = YAML::Node(value);
  }
  root[section][key] = parsed;
}

void apply_env(YAML::Node& root) {
  static const std::string prefix = "COAGLAB_";
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    for (char& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const auto us = name.find('_');
    if (us == std::string::npos) continue;
    const std::string section = name.substr(0, us);
    const std::string key = name.substr(us + 1);
    if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) continue;
    if (section == "initial") continue;
    apply_override(root, section, key, entry.substr(eq + 1));
  }
}

RunConfig build(const Context& ctx, const YAML::Node& root) {
  if (root.IsDefined() && !root.IsNull() && !root.IsMap()) {
    ctx.fail(root, "", "top level must be a mapping");
  }
  if (root.IsMap()) {
    for (const auto& kv : root) {
      const std::string key = kv.first.as<std::string>();
      if (std::find(kSections.begin(), kSections.end(), key) == kSections.end()) {
        ctx.fail(kv.first, key, "unknown section");
      }
    }
  }
  auto section = [&](const char* name) { return Section(ctx, root[name], name); };
  RunConfig cfg;

  // params
  {
    Section s = section("params");
    auto& p = cfg.params;
    s.get("dim", p.dim, [](int d) { return d >= 3 && d <= kMaxDim; }, "must lie in [3, 8]");
    s.get("big_z", p.big_z, positive, "must be > 0");
    const bool has_n = s.get("n_particles", p.n_particles,
                             [](std::int64_t n) { return n >= 1; }, "must be >= 1");
    double eps = 0.0;
    const bool has_eps = s.get("epsilon", eps, nonneg, "must be >= 0");
    s.get("tau_factor", p.tau_factor, positive, "must be > 0");
    s.get("horizon", p.horizon, nonneg, "must be >= 0");
    s.get("seed", p.seed);
    s.get("torus_side", p.torus_side, nonneg, "must be >= 0");
    const double power = p.dim - 2.0;
    if (has_eps && eps > 0.0) {
      if (has_n) {
        const double z = static_cast<double>(p.n_particles) * std::pow(eps, power);
        if (std::abs(z - p.big_z) > 1e-9 * p.big_z) {
          s.fail("epsilon", "N epsilon^(d-2) = " + std::to_string(z) +
                                " is inconsistent with big_z = " + std::to_string(p.big_z));
        }
      } else {
        p.n_particles = std::llround(p.big_z / std::pow(eps, power));
        if (p.n_particles < 1) s.fail("epsilon", "implies fewer than one particle");
      }
    }
    p.epsilon = std::pow(p.big_z / static_cast<double>(p.n_particles), 1.0 / power);
    if (p.torus_side > 0.0 && !(p.torus_side > 2.0 * p.epsilon)) {
      s.fail("torus_side", "must exceed twice the interaction range");
    }
    s.finish();
  }

  // kernel
  {
    Section s = section("kernel");
    auto& k = cfg.kernel;
    s.get("shape", k.shape, one_of<std::string>({"bump", "plateau", "quadratic", "cone", "ellipsoid"}),
          "must be bump | plateau | quadratic | cone | ellipsoid");
    s.get("support_radius", k.support_radius, positive, "must be > 0");
    s.get("edge_width", k.edge_width, [](double w) { return w > 0.0 && w <= 1.0; },
          "must lie in (0, 1]");
    s.get("axes", k.axes);
    if (k.shape == "ellipsoid") {
      k.axes.resize(cfg.params.dim, k.support_radius);
      for (double a : k.axes) {
        if (!(a > 0.0 && a <= k.support_radius)) s.fail("axes", "must lie in (0, support_radius]");
      }
    } else if (!k.axes.empty()) {
      s.fail("axes", "only used by the ellipsoid shape");
    }
    s.finish();
  }

  // alpha
  {
    Section s = section("alpha");
    auto& a = cfg.alpha;
    s.get("kind", a.kind, one_of<std::string>({"constant", "product", "table"}),
          "must be constant | product | table");
    s.get("value", a.value, nonneg, "must be >= 0");
    s.get("table", a.table);
    if (a.kind == "table") {
      if (a.table.empty()) s.fail("table", "required for kind = table");
      const std::size_t n = a.table.size();
      for (std::size_t i = 0; i < n; ++i) {
        if (a.table[i].size() != n) s.fail("table", "must be square");
        for (std::size_t j = 0; j < n; ++j) {
          if (!(a.table[i][j] >= 0.0)) s.fail("table", "entries must be >= 0");
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          if (a.table[i][j] != a.table[j][i]) {
            s.fail("table", "asymmetric: entry (" + std::to_string(i + 1) + "," +
                                std::to_string(j + 1) + ") differs from (" +
                                std::to_string(j + 1) + "," + std::to_string(i + 1) + ")");
          }
        }
      }
    } else if (!a.table.empty()) {
      s.fail("table", "only used by kind = table");
    }
    s.finish();
  }

  // diffusion
  {
    Section s = section("diffusion");
    auto& d = cfg.diffusion;
    s.get("kind", d.kind, one_of<std::string>({"constant", "power", "exponential", "table"}),
          "must be constant | power | exponential | table");
    s.get("value", d.value, positive, "must be > 0");
    s.get("exponent", d.exponent);
    s.get("base", d.base, positive, "must be > 0");
    s.get("table", d.table);
    if (d.kind == "table") {
      if (d.table.empty()) s.fail("table", "required for kind = table");
      for (double v : d.table) {
        if (!(v > 0.0)) s.fail("table", "entries must be > 0");
      }
    } else if (!d.table.empty()) {
      s.fail("table", "only used by kind = table");
    }
    s.finish();
  }

  // initial
  {
    const YAML::Node node = root["initial"];
    const int dim = cfg.params.dim;
    const double side = cfg.params.torus_side;
    if (node.IsDefined() && !node.IsNull()) {
      if (!node.IsSequence()) ctx.fail(node, "initial", "expected a list of components");
      for (std::size_t k = 0; k < node.size(); ++k) {
        Section s(ctx, node[k], "initial[" + std::to_string(k) + "]");
        InitialConfig c;
        s.get("mass", c.mass, [](std::int64_t m) { return m >= 1; }, "must be >= 1");
        s.get("shape", c.shape, one_of<std::string>({"uniform", "gaussian"}),
              "must be uniform | gaussian");
        s.get("intensity", c.intensity, nonneg, "must be >= 0");
        s.get("lo", c.lo);
        s.get("hi", c.hi);
        s.get("center", c.center);
        s.get("sigma", c.sigma, positive, "must be > 0");
        if (c.shape == "uniform") {
          if (c.lo.empty() && c.hi.empty()) {
            if (!(side > 0.0)) s.fail("lo", "required in free space");
            c.lo.assign(dim, 0.0);
            c.hi.assign(dim, side);
          }
          if (static_cast<int>(c.lo.size()) != dim || static_cast<int>(c.hi.size()) != dim) {
            s.fail("lo", "lo and hi need one entry per dimension");
          }
          for (int a = 0; a < dim; ++a) {
            if (!(c.hi[a] > c.lo[a])) s.fail("hi", "must exceed lo on every axis");
          }
          if (!c.center.empty()) s.fail("center", "only used by the gaussian shape");
          c.sigma = 1.0;
        } else {
          if (c.center.empty()) c.center.assign(dim, side > 0.0 ? 0.5 * side : 0.0);
          if (static_cast<int>(c.center.size()) != dim) {
            s.fail("center", "needs one entry per dimension");
          }
          if (!c.lo.empty() || !c.hi.empty()) s.fail("lo", "only used by the uniform shape");
        }
        s.finish();
        cfg.initial.push_back(std::move(c));
      }
    }
    if (cfg.initial.empty()) {
      if (!(side > 0.0)) ctx.fail(node, "initial", "required in free space");
      InitialConfig c;
      c.lo.assign(dim, 0.0);
      c.hi.assign(dim, side);
      cfg.initial.push_back(c);
    }
    double total = 0.0;
    for (const auto& c : cfg.initial) total += c.intensity;
    if (total == 0.0 && cfg.initial.size() == 1) {
      cfg.initial.front().intensity = cfg.params.big_z;
      total = cfg.params.big_z;
    }
    if (std::abs(total - cfg.params.big_z) > 1e-9 * cfg.params.big_z) {
      ctx.fail(node, "initial", "intensities sum to " + std::to_string(total) +
                                    " but big_z = " + std::to_string(cfg.params.big_z));
    }
  }

  // cell
  {
    Section s = section("cell");
    auto& c = cfg.cell;
    s.get("grid", c.grid, one_of<std::string>({"auto", "radial", "cartesian"}),
          "must be auto | radial | cartesian");
    s.get("shells", c.shells, [](int n) { return n >= 8; }, "must be >= 8");
    s.get("cells_per_axis", c.cells_per_axis, [](int n) { return n == 0 || n >= 4; },
          "must be 0 or >= 4");
    s.get("tol", c.tol, positive, "must be > 0");
    s.get("table_size", c.table_size, [](int n) { return n >= 1; }, "must be >= 1");
    s.get("capacity_alphas", c.capacity_alphas);
    for (double a : c.capacity_alphas) {
      if (!(a > 0.0)) s.fail("capacity_alphas", "entries must be > 0");
    }
    if (c.grid == "radial" && cfg.kernel.shape == "ellipsoid") {
      s.fail("grid", "radial grid needs a radial kernel");
    }
    s.finish();
  }

  // sim
  {
    Section s = section("sim");
    auto& m = cfg.sim;
    s.get("replicas", m.replicas, [](int n) { return n >= 0; }, "must be >= 0");
    s.get("m_max", m.m_max, [](int n) { return n >= 1; }, "must be >= 1");
    s.get("count_every", m.count_every, [](std::int64_t n) { return n >= 0; }, "must be >= 0");
    s.get("record_events", m.record_events);
    s.get("cells_per_particle", m.cells_per_particle, positive, "must be > 0");
    s.get("q_m1", m.q_m1, [](std::int64_t n) { return n >= 1; }, "must be >= 1");
    s.get("q_m2", m.q_m2, [](std::int64_t n) { return n >= 1; }, "must be >= 1");
    s.get("q_sample_every", m.q_sample_every, [](std::int64_t n) { return n >= 1; },
          "must be >= 1");
    s.get("density_nodes", m.density_nodes, [](int n) { return n == 0 || n >= 4; },
          "must be 0 or >= 4");
    s.get("density_samples", m.density_samples, [](int n) { return n >= 0 && n != 1; },
          "must be 0 or >= 2");
    s.get("delta", m.delta, nonneg, "must be >= 0");
    s.get("max_overflow", m.max_overflow);
    if (m.density_samples > 0 && !(cfg.params.torus_side > 0.0)) {
      s.fail("density_samples", "density sampling needs a torus (set 0 in free space)");
    }
    if (m.density_samples > 0) {
      const double delta =
          m.delta > 0.0 ? m.delta : default_delta(cfg.params.epsilon, cfg.params.torus_side);
      if (!(delta < 0.5 * cfg.params.torus_side)) s.fail("delta", "must be below L/2");
    }
    s.finish();
  }

  // pde
  {
    Section s = section("pde");
    auto& p = cfg.pde;
    s.get("mode", p.mode, one_of<std::string>({"homogeneous", "spatial"}),
          "must be homogeneous | spatial");
    s.get("m_max", p.m_max, [](int n) { return n >= 1; }, "must be >= 1");
    s.get("dt", p.dt, positive, "must be > 0");
    s.get("convention", p.convention, one_of<std::string>({"pair", "printed"}),
          "must be pair | printed");
    s.get("nodes", p.nodes, [](int n) { return n >= 3; }, "must be >= 3");
    s.get("boundary", p.boundary, one_of<std::string>({"torus", "zero_flux"}),
          "must be torus | zero_flux");
    s.get("observe_times", p.observe_times);
    for (double t : p.observe_times) {
      if (!(t >= 0.0 && t <= cfg.params.horizon)) {
        s.fail("observe_times", "entries must lie in [0, horizon]");
      }
    }
    if (p.mode == "spatial") {
      if (!(cfg.params.torus_side > 0.0)) s.fail("mode", "spatial mode needs params.torus_side");
      const double h = cfg.params.torus_side / p.nodes;
      double dmax = 0.0;
      const DiffusionPolicy dd = diffusion_policy(cfg);
      for (int n = 1; n <= p.m_max; ++n) dmax = std::max(dmax, dd(n));
      const double limit = h * h / (2.0 * cfg.params.dim * dmax);
      if (p.dt > limit) {
        s.fail("dt", "exceeds the explicit diffusion limit " + std::to_string(limit));
      }
    }
    s.finish();
  }

  // validate
  {
    Section s = section("validate");
    auto& v = cfg.validate;
    s.get("functional", v.functional, one_of<std::string>({"constant", "gaussian", "box", "cosine"}),
          "must be constant | gaussian | box | cosine");
    s.get("amplitude", v.amplitude);
    s.get("offset", v.offset);
    s.get("width", v.width, positive, "must be > 0");
    s.get("edge", v.edge, positive, "must be > 0");
    s.get("axis", v.axis, [&](int a) { return a >= 0 && a < cfg.params.dim; },
          "must be a valid axis");
    s.get("center", v.center);
    s.get("masses", v.masses);
    for (int m : v.masses) {
      if (m < 1) s.fail("masses", "entries must be >= 1");
    }
    s.get("count_tolerance", v.count_tolerance, positive, "must be > 0");
    s.get("stosszahl_tolerance", v.stosszahl_tolerance, positive, "must be > 0");
    s.get("conservation_tolerance", v.conservation_tolerance, positive, "must be > 0");
    s.get("rate_fit", v.rate_fit);
    s.get("fit_window", v.fit_window, [](double w) { return w > 0.0 && w <= 1.0; },
          "must lie in (0, 1]");
    s.get("bootstrap", v.bootstrap, [](int n) { return n >= 0; }, "must be >= 0");
    s.get("rate_tolerance", v.rate_tolerance, positive, "must be > 0");
    if (v.center.empty() && (v.functional == "gaussian" || v.functional == "box")) {
      v.center.assign(cfg.params.dim, cfg.params.torus_side > 0.0 ? 0.5 * cfg.params.torus_side : 0.0);
    }
    if (!v.center.empty() && static_cast<int>(v.center.size()) != cfg.params.dim) {
      s.fail("center", "needs one entry per dimension");
    }
    s.finish();
  }

  // run
  {
    Section s = section("run");
    s.get("command", cfg.command,
          one_of<std::string>({"cell-problem", "simulate", "pde", "validate", "capacity-curve", "full"}),
          "must be cell-problem | simulate | pde | validate | capacity-curve | full");
    s.get("out", cfg.out, [](const std::string& o) { return !o.empty(); }, "must not be empty");
    s.get("workers", cfg.workers, [](int n) { return n >= 1; }, "must be >= 1");
    s.finish();
  }
  return cfg;
}

json to_json(const ParamsConfig& p) {
  return {{"dim", p.dim},         {"big_z", p.big_z},           {"n_particles", p.n_particles},
          {"epsilon", p.epsilon}, {"tau_factor", p.tau_factor}, {"horizon", p.horizon},
          {"seed", p.seed},       {"torus_side", p.torus_side}};
}

json to_json(const KernelSpec& k) {
  return {{"shape", k.shape},
          {"support_radius", k.support_radius},
          {"edge_width", k.edge_width},
          {"axes", k.axes}};
}

json model_json(const RunConfig& c) {
  json j;
  j["params"] = to_json(c.params);
  j["kernel"] = to_json(c.kernel);
  j["alpha"] = {{"kind", c.alpha.kind}, {"value", c.alpha.value}, {"table", c.alpha.table}};
  j["diffusion"] = {{"kind", c.diffusion.kind},
                    {"value", c.diffusion.value},
                    {"exponent", c.diffusion.exponent},
                    {"base", c.diffusion.base},
                    {"table", c.diffusion.table}};
  json init = json::array();
  for (const auto& i : c.initial) {
    init.push_back({{"mass", i.mass},
                    {"shape", i.shape},
                    {"intensity", i.intensity},
                    {"lo", i.lo},
                    {"hi", i.hi},
                    {"center", i.center},
                    {"sigma", i.sigma}});
  }
  j["initial"] = init;
  return j;
}

json full_json(const RunConfig& c) {
  json j = model_json(c);
  const auto& s = c.sim;
  j["cell"] = {{"grid", c.cell.grid},
               {"shells", c.cell.shells},
               {"cells_per_axis", c.cell.cells_per_axis},
               {"tol", c.cell.tol},
               {"table_size", c.cell.table_size},
               {"capacity_alphas", c.cell.capacity_alphas}};
  j["sim"] = {{"replicas", s.replicas},
              {"m_max", s.m_max},
              {"count_every", s.count_every},
              {"record_events", s.record_events},
              {"cells_per_particle", s.cells_per_particle},
              {"q_m1", s.q_m1},
              {"q_m2", s.q_m2},
              {"q_sample_every", s.q_sample_every},
              {"density_nodes", s.density_nodes},
              {"density_samples", s.density_samples},
              {"delta", s.delta},
              {"max_overflow", s.max_overflow}};
  const auto& p = c.pde;
  j["pde"] = {{"mode", p.mode},         {"m_max", p.m_max}, {"dt", p.dt},
              {"convention", p.convention}, {"nodes", p.nodes}, {"boundary", p.boundary},
              {"observe_times", p.observe_times}};
  const auto& v = c.validate;
  j["validate"] = {{"functional", v.functional},
                   {"amplitude", v.amplitude},
                   {"offset", v.offset},
                   {"width", v.width},
                   {"edge", v.edge},
                   {"axis", v.axis},
                   {"center", v.center},
                   {"masses", v.masses},
                   {"count_tolerance", v.count_tolerance},
                   {"stosszahl_tolerance", v.stosszahl_tolerance},
                   {"conservation_tolerance", v.conservation_tolerance},
                   {"rate_fit", v.rate_fit},
                   {"fit_window", v.fit_window},
                   {"bootstrap", v.bootstrap},
                   {"rate_tolerance", v.rate_tolerance}};
  j["run"] = {{"command", c.command}, {"out", c.out}, {"workers", c.workers}};
  return j;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& source,
                            const ParseOptions& options) {
  Context ctx(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    ctx.fail(e.mark, "", e.msg);
  }
  if (!root.IsDefined() || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (root.IsMap()) {
    if (options.env_overrides) apply_env(root);
    for (const auto& [key, value] : options.overrides) {
      const auto dot = key.find('.');
      if (dot == std::string::npos) {
        throw ConfigError(source, 0, 0, key, "override keys must read section.key");
      }
      apply_override(root, key.substr(0, dot), key.substr(dot + 1), value);
    }
  }
  try {
    return build(ctx, root);
  } catch (const ModelError& e) {
    throw ConfigError(source, 0, 0, "", e.what());
  } catch (const YAML::Exception& e) {
    ctx.fail(e.mark, "", e.msg);
  }
}

RunConfig parse_config(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, 0, 0, "", "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path, options);
}

std::string serialize(const RunConfig& cfg) { return dump(full_json(cfg)); }

bool operator==(const RunConfig& a, const RunConfig& b) { return serialize(a) == serialize(b); }

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(serialize(cfg)); }

std::uint64_t model_hash(const RunConfig& cfg) {
  json j = model_json(cfg);
  j["params"].erase("n_particles");
  j["params"].erase("epsilon");
  j["params"].erase("seed");
  j["params"].erase("tau_factor");
  return fnv1a(dump(j));
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SimParams sim_params(const RunConfig& cfg) {
  SimParams p = build_params(cfg.params.dim, cfg.params.big_z, cfg.params.n_particles,
                             cfg.params.tau_factor);
  p.horizon = cfg.params.horizon;
  p.seed = cfg.params.seed;
  return p;
}

Domain domain(const RunConfig& cfg) {
  return cfg.params.torus_side > 0.0 ? Domain::torus(cfg.params.torus_side) : Domain::free();
}

KernelV kernel(const RunConfig& cfg) { return make_kernel(cfg.params.dim, cfg.kernel); }

RatePolicy alpha_policy(const RunConfig& cfg) {
  const auto& a = cfg.alpha;
  if (a.kind == "product") return RatePolicy::product(a.value);
  if (a.kind == "table") return RatePolicy::table(a.table);
  return RatePolicy::constant(a.value);
}

DiffusionPolicy diffusion_policy(const RunConfig& cfg) {
  const auto& d = cfg.diffusion;
  if (d.kind == "power") return DiffusionPolicy::power(d.value, d.exponent);
  if (d.kind == "exponential") return DiffusionPolicy::exponential(d.value, d.base);
  if (d.kind == "table") return DiffusionPolicy::table(d.table);
  return DiffusionPolicy::constant(d.value);
}

InitialDensities initial_densities(const RunConfig& cfg) {
  std::vector<DensityComponent> comps;
  for (const auto& c : cfg.initial) {
    DensityComponent dc;
    dc.mass = c.mass;
    dc.intensity = c.intensity;
    if (c.shape == "uniform") dc.shape = UniformBox{c.lo, c.hi};
    else dc.shape = IsotropicGaussian{c.center, c.sigma};
    comps.push_back(std::move(dc));
  }
  return InitialDensities(std::move(comps));
}

MicroModel micro_model(const RunConfig& cfg) {
  return MicroModel{sim_params(cfg),        kernel(cfg), alpha_policy(cfg),
                    diffusion_policy(cfg),  domain(cfg), cfg.sim.m_max,
                    cfg.sim.max_overflow};
}

std::shared_ptr<const CellGrid> cell_grid(const RunConfig& cfg, const KernelV& v) {
  const auto& c = cfg.cell;
  if (c.grid == "radial" || (c.grid == "auto" && v.is_radial())) {
    return std::make_shared<const CellGrid>(make_radial_grid(v, c.shells));
  }
  return std::make_shared<const CellGrid>(make_cartesian_grid(v, c.cells_per_axis));
}

TestFunctional test_functional(const RunConfig& cfg) {
  const auto& v = cfg.validate;
  TestFunctional j;
  switch (parse_functional_kind(v.functional)) {
    case TestFunctional::Kind::constant:
      j = TestFunctional::constant(v.amplitude);
      break;
    case TestFunctional::Kind::gaussian:
      j = TestFunctional::gaussian(v.center, v.width, v.amplitude);
      break;
    case TestFunctional::Kind::box:
      j = TestFunctional::box(v.center, v.width, v.edge, v.amplitude);
      break;
    case TestFunctional::Kind::cosine:
      j = TestFunctional::cosine(v.axis, cfg.params.torus_side > 0.0 ? cfg.params.torus_side : v.width,
                                 v.offset, v.amplitude);
      break;
  }
  j.torus_side = cfg.params.torus_side;
  return j;
}

ReactionConvention convention(const RunConfig& cfg) { return parse_convention(cfg.pde.convention); }

}  // namespace coag
