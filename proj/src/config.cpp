#include "ped/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ped/errors.hpp"

namespace ped {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

// Typed access with the JSON path kept for error messages.
class Node {
 public:
  Node(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  Node at(const char* key) const {
    if (!j_.is_object()) fail(path_, "expected an object");
    if (!j_.contains(key)) fail(path_, std::string("missing field '") + key + "'");
    return Node(j_.at(key), path_ + "." + key);
  }
  Node item(std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }

  std::size_t size() const {
    if (!j_.is_array()) fail(path_, "expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail(path_, "expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail(path_, "must be finite");
    return v;
  }
  int integer() const {
    if (!j_.is_number_integer()) fail(path_, "expected an integer");
    return j_.get<int>();
  }
  std::uint64_t u64() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<long long>() >= 0))
      fail(path_, "expected a non-negative integer");
    return j_.get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail(path_, "expected true or false");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) fail(path_, "expected a string");
    return j_.get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back(item(i).number());
    return v;
  }
  std::vector<int> integers() const {
    std::vector<int> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back(item(i).integer());
    return v;
  }

 private:
  const ordered_json& j_;
  std::string path_;
};

void read_if(const Node& node, const char* key, double& out) {
  if (node.has(key)) out = node.at(key).number();
}
void read_if(const Node& node, const char* key, int& out) {
  if (node.has(key)) out = node.at(key).integer();
}
void read_if(const Node& node, const char* key, bool& out) {
  if (node.has(key)) out = node.at(key).boolean();
}
void read_if(const Node& node, const char* key, std::string& out) {
  if (node.has(key)) out = node.at(key).string();
}
void read_if(const Node& node, const char* key, std::vector<double>& out) {
  if (node.has(key)) out = node.at(key).numbers();
}

// Re-throws a module-level ValidationError with the config path prefixed.
template <class F>
void check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

ElicitationEntry read_elicitation(const Node& node) {
  ElicitationEntry e;
  e.x = node.at("x").number();
  if (node.has("mean")) e.mean = node.at("mean").number();
  if (node.has("relative_mean")) e.relative_mean = node.at("relative_mean").number();
  if (node.has("sd")) e.sd = node.at("sd").number();
  if (node.has("quantiles")) {
    Node q = node.at("quantiles");
    if (q.size() != 3) fail(q.path(), "expected [q25, q50, q75]");
    e.quantiles = QuantileElicitation{e.x, q.item(0).number(), q.item(1).number(), q.item(2).number()};
  }
  const int forms = (e.mean ? 1 : 0) + (e.relative_mean ? 1 : 0) + (e.quantiles ? 1 : 0);
  if (forms != 1) fail(node.path(), "give exactly one of mean, relative_mean or quantiles");
  if (!e.quantiles && !e.sd) fail(node.path(), "missing field 'sd'");
  if (e.quantiles && e.sd) fail(node.path(), "'sd' is derived from quantiles; remove it");
  return e;
}

ordered_json numbers_json(const std::vector<double>& v) { return ordered_json(v); }

}  // namespace

ElicitedPoint ElicitationEntry::resolve(const LogisticCoefficients& adult) const {
  if (quantiles) return fit_normal_from_quantiles(*quantiles);
  const double m =
      mean ? *mean : *relative_mean * std::abs(adult.intercept + adult.slope * x);
  return {x, m, sd.value_or(0.0)};
}

std::vector<ElicitedPoint> RunConfig::elicited_points() const {
  std::vector<ElicitedPoint> pts;
  for (const auto& e : elicitation) pts.push_back(e.resolve(sim.adult));
  return pts;
}

std::vector<double> RunConfig::slopes() const {
  return default_slope_grid(sim.adult.slope, static_cast<std::size_t>(slope_grid.count),
                            slope_grid.lo_factor, slope_grid.hi_factor);
}

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    fail("schema_version", "unsupported version " + std::to_string(schema_version));
  check("simulation", [&] { sim.validate(); });
  if (sim.adult.slope <= 0.0) fail("adult.slope", "must be positive");
  if (std::abs(sim.scheme.delta_grid.back() - sim.epsilon_h * 0.9) > 1e-12)
    fail("weights", "delta grid does not match epsilon_h");
  if (elicitation.size() != 3) fail("elicitation.points", "exactly three points are required");
  for (std::size_t i = 0; i < elicitation.size(); ++i) {
    const std::string p = "elicitation.points[" + std::to_string(i) + "]";
    const auto& e = elicitation[i];
    if (e.x < sim.range.full_lo || e.x > sim.range.full_hi)
      fail(p + ".x", "must lie inside the full exposure range");
    if (e.sd && !(*e.sd > 0.0)) fail(p + ".sd", "must be positive");
    check(p, [&] { (void)e.resolve(sim.adult); });
  }
  if (synthetic_per_point < 1) fail("elicitation.per_point_count", "must be >= 1");
  if (informative.retained < 1000)
    fail("elicitation.retained_draws", "must be >= 1000 for the mixture fit");
  if (informative.burn_in < 0) fail("elicitation.burn_in", "must be >= 0");
  if (slope_grid.count < 2) fail("slope_grid.count", "must be >= 2");
  if (!(slope_grid.lo_factor > 0.0 && slope_grid.lo_factor < slope_grid.hi_factor))
    fail("slope_grid", "need 0 < lo_factor < hi_factor");
  check("design_grid", [&] { grid.validate(); });
  if (!(stability.threshold >= 0.0 && stability.threshold <= 1.0))
    fail("stability.threshold", "must lie in [0, 1]");
  if (!(stability.delta_fraction > 0.0 && stability.delta_fraction < 1.0))
    fail("stability.delta_fraction", "must lie in (0, 1)");
  if (eta_trend) {
    const auto& t = *eta_trend;
    if (t.n.empty() || t.w.empty() || t.eta.empty())
      fail("eta_trend", "n, w and eta must be non-empty");
    for (int n : t.n)
      if (n < 1) fail("eta_trend.n", "values must be >= 1");
    for (double w : t.w)
      if (!(w >= 0.0 && w <= 1.0)) fail("eta_trend.w", "values must lie in [0, 1]");
    for (double e : t.eta)
      if (!(e >= 0.0 && e <= 1.0)) fail("eta_trend.eta", "values must lie in [0, 1]");
    if (!(t.delta >= 0.0 && t.delta <= sim.epsilon_h))
      fail("eta_trend.delta", "must lie in [0, epsilon_h]");
    if (t.replicates < 0) fail("eta_trend.replicates", "must be >= 0");
  }
  if (output_dir.empty()) fail("output_dir", "must be non-empty");
}

RunConfig parse_config(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ValidationError("config: line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": malformed JSON");
  }
  Node top(root, "$");
  if (!root.is_object()) fail("$", "expected an object at top level");

  RunConfig cfg;
  cfg.schema_version = top.at("schema_version").integer();
  if (cfg.schema_version != kConfigSchemaVersion)
    fail("schema_version", "unsupported version " + std::to_string(cfg.schema_version));
  read_if(top, "exposure_units", cfg.exposure_units);

  SimConfig& sim = cfg.sim;
  if (top.has("adult")) {
    Node a = top.at("adult");
    sim.adult = {a.at("intercept").number(), a.at("slope").number()};
  }
  if (top.has("exposure_range")) {
    Node r = top.at("exposure_range");
    Node full = r.at("full"), interest = r.at("interest");
    if (full.size() != 2) fail(full.path(), "expected [lo, hi]");
    if (interest.size() != 2) fail(interest.path(), "expected [lo, hi]");
    sim.range = {full.item(0).number(), full.item(1).number(), interest.item(0).number(),
                 interest.item(1).number()};
  }
  read_if(top, "epsilon_h", sim.epsilon_h);
  read_if(top, "alpha", sim.alpha);
  read_if(top, "beta", sim.beta_target);
  if (!(sim.epsilon_h > 0.0 && sim.epsilon_h < 1.0)) fail("epsilon_h", "must lie in (0, 1)");

  if (top.has("simulation")) {
    Node s = top.at("simulation");
    read_if(s, "replicates", sim.T);
    read_if(s, "posterior_draws", sim.sampler.draws);
    read_if(s, "burn_in", sim.sampler.burn_in);
    if (s.has("seed")) sim.seed = s.at("seed").u64();
    read_if(s, "interest_probability", sim.interest_probability);
    read_if(s, "threads", sim.threads);
  }

  sim.scheme = WeightScheme::standard(sim.epsilon_h);
  if (top.has("weights")) {
    Node wt = top.at("weights");
    read_if(wt, "h0_eta_grid", sim.scheme.h0_eta_grid);
    read_if(wt, "h0_eta_weights", sim.scheme.h0_weights);
    read_if(wt, "h1_eta_grid", sim.scheme.h1_eta_grid);
    read_if(wt, "h1_eta_weights", sim.scheme.h1_weights);
    read_if(wt, "delta_weights", sim.scheme.delta_weights);
  }
  check("weights", [&] { sim.scheme.validate(); });

  {
    Node e = top.at("elicitation");
    Node pts = e.at("points");
    for (std::size_t i = 0; i < pts.size(); ++i) cfg.elicitation.push_back(read_elicitation(pts.item(i)));
    read_if(e, "per_point_count", cfg.synthetic_per_point);
    read_if(e, "retained_draws", cfg.informative.retained);
    read_if(e, "burn_in", cfg.informative.burn_in);
  }

  if (top.has("slope_grid")) {
    Node g = top.at("slope_grid");
    read_if(g, "count", cfg.slope_grid.count);
    read_if(g, "lo_factor", cfg.slope_grid.lo_factor);
    read_if(g, "hi_factor", cfg.slope_grid.hi_factor);
  }

  {
    Node g = top.at("design_grid");
    cfg.grid.n = g.at("n").integers();
    cfg.grid.w = g.at("w").numbers();
    cfg.grid.epsilon_bayes = g.at("epsilon_bayes").numbers();
  }

  if (top.has("stability")) {
    Node s = top.at("stability");
    read_if(s, "threshold", cfg.stability.threshold);
    read_if(s, "delta_fraction", cfg.stability.delta_fraction);
  }

  if (top.has("eta_trend")) {
    Node t = top.at("eta_trend");
    EtaTrendSettings et;
    et.n = t.at("n").integers();
    et.w = t.at("w").numbers();
    et.eta = t.at("eta").numbers();
    read_if(t, "delta", et.delta);
    read_if(t, "replicates", et.replicates);
    cfg.eta_trend = et;
  }

  read_if(top, "output_dir", cfg.output_dir);
  if (top.has("cache")) {
    Node c = top.at("cache");
    read_if(c, "reuse", cfg.reuse_caches);
  }
  read_if(top, "replicate_logs", cfg.replicate_logs);

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

RunConfig darunavir_config() {
  RunConfig cfg;
  cfg.exposure_units = "log10 exposure";
  cfg.elicitation = {
      {2.5, std::nullopt, -0.05, 0.01, std::nullopt},
      {3.125, std::nullopt, 0.05, 0.01, std::nullopt},
      {4.375, std::nullopt, 0.05, 0.01, std::nullopt},
  };
  cfg.grid = {{40, 45, 50, 55, 60, 64}, {0.1, 0.2, 0.3, 0.4, 0.5}, {0.8, 0.85, 0.9, 0.95, 0.99}};
  cfg.eta_trend = EtaTrendSettings{{45, 55}, {0.1, 0.3}, {0.1, 0.35, 0.55, 0.85, 0.95}, 0.0, 300};
  cfg.output_dir = "ped_out";
  cfg.validate();
  return cfg;
}

std::string config_to_json(const RunConfig& c) {
  ordered_json j;
  j["schema_version"] = c.schema_version;
  j["exposure_units"] = c.exposure_units;
  j["adult"] = {{"intercept", c.sim.adult.intercept}, {"slope", c.sim.adult.slope}};
  j["exposure_range"] = {
      {"full", {c.sim.range.full_lo, c.sim.range.full_hi}},
      {"interest", {c.sim.range.interest_lo, c.sim.range.interest_hi}}};
  j["epsilon_h"] = c.sim.epsilon_h;
  j["alpha"] = c.sim.alpha;
  j["beta"] = c.sim.beta_target;
  j["simulation"] = {{"replicates", c.sim.T},
                     {"posterior_draws", c.sim.sampler.draws},
                     {"burn_in", c.sim.sampler.burn_in},
                     {"seed", c.sim.seed},
                     {"interest_probability", c.sim.interest_probability},
                     {"threads", c.sim.threads}};
  j["weights"] = {{"h0_eta_grid", numbers_json(c.sim.scheme.h0_eta_grid)},
                  {"h0_eta_weights", numbers_json(c.sim.scheme.h0_weights)},
                  {"h1_eta_grid", numbers_json(c.sim.scheme.h1_eta_grid)},
                  {"h1_eta_weights", numbers_json(c.sim.scheme.h1_weights)},
                  {"delta_weights", numbers_json(c.sim.scheme.delta_weights)}};
  ordered_json pts = ordered_json::array();
  for (const auto& e : c.elicitation) {
    ordered_json p;
    p["x"] = e.x;
    if (e.mean) p["mean"] = *e.mean;
    if (e.relative_mean) p["relative_mean"] = *e.relative_mean;
    if (e.sd) p["sd"] = *e.sd;
    if (e.quantiles) p["quantiles"] = {e.quantiles->q25, e.quantiles->q50, e.quantiles->q75};
    pts.push_back(p);
  }
  j["elicitation"] = {{"points", pts},
                      {"per_point_count", c.synthetic_per_point},
                      {"retained_draws", c.informative.retained},
                      {"burn_in", c.informative.burn_in}};
  j["slope_grid"] = {{"count", c.slope_grid.count},
                     {"lo_factor", c.slope_grid.lo_factor},
                     {"hi_factor", c.slope_grid.hi_factor}};
  j["design_grid"] = {{"n", c.grid.n}, {"w", c.grid.w}, {"epsilon_bayes", c.grid.epsilon_bayes}};
  j["stability"] = {{"threshold", c.stability.threshold},
                    {"delta_fraction", c.stability.delta_fraction}};
  if (c.eta_trend)
    j["eta_trend"] = {{"n", c.eta_trend->n},
                      {"w", c.eta_trend->w},
                      {"eta", c.eta_trend->eta},
                      {"delta", c.eta_trend->delta},
                      {"replicates", c.eta_trend->replicates}};
  j["output_dir"] = c.output_dir;
  j["cache"] = {{"reuse", c.reuse_caches}};
  j["replicate_logs"] = c.replicate_logs;
  return j.dump(2) + "\n";
}

}  // namespace ped
