#include "ped/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ped/design_search.hpp"
#include "ped/errors.hpp"
#include "ped/posterior.hpp"
#include "ped/reports.hpp"
#include "ped/simengine.hpp"

namespace ped {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kElicitTag = 0xe11c;
constexpr std::uint64_t kAnalyzeTag = 0xa7a1;

const char* kInformativeCache = "prior_informative.json";
const char* kTableCache = "coeff_tables.csv";

fs::path out_dir(const RunConfig& c) { return fs::path(c.output_dir); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  return in;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Everything an elicitation cache depends on.
std::string elicitation_key(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["adult"] = {c.sim.adult.intercept, c.sim.adult.slope};
  auto pts = nlohmann::ordered_json::array();
  for (const auto& p : c.elicited_points()) pts.push_back({p.x, p.mean, p.sd});
  j["points"] = pts;
  j["per_point_count"] = c.synthetic_per_point;
  j["retained"] = c.informative.retained;
  j["burn_in"] = c.informative.burn_in;
  j["seed"] = c.sim.seed;
  return j.dump() + "\n";
}

std::string family_key(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["adult"] = {c.sim.adult.intercept, c.sim.adult.slope};
  j["range"] = {c.sim.range.full_lo, c.sim.range.full_hi, c.sim.range.interest_lo,
                c.sim.range.interest_hi};
  j["epsilon_h"] = c.sim.epsilon_h;
  j["h0_eta_grid"] = c.sim.scheme.h0_eta_grid;
  j["h1_eta_grid"] = c.sim.scheme.h1_eta_grid;
  j["slope_grid"] = {c.slope_grid.count, c.slope_grid.lo_factor, c.slope_grid.hi_factor};
  return j.dump() + "\n";
}

bool cache_valid(const RunConfig& c, const fs::path& file, const std::string& key) {
  if (!c.reuse_caches || !fs::exists(file)) return false;
  return slurp(fs::path(file.string() + ".key")) == key;
}

void write_key(const fs::path& file, const std::string& key) {
  auto out = open_out(fs::path(file.string() + ".key"));
  out << key;
}

ReppPrior fit_informative_prior(const RunConfig& c, std::ostream& log) {
  const auto points = c.elicited_points();
  Rng rng = make_rng(c.sim.seed, {kElicitTag});
  const auto data = gen_synthetic(points, c.sim.adult, rng, c.synthetic_per_point);
  const auto fit = fit_informative(data, rng, c.informative);
  std::vector<double> intercepts, slopes;
  intercepts.reserve(fit.draws.size());
  slopes.reserve(fit.draws.size());
  for (const auto& d : fit.draws) {
    intercepts.push_back(d.intercept);
    slopes.push_back(d.slope);
  }
  const auto int_mix = fit_mixture2(intercepts);
  const auto slope_mix = fit_mixture2(slopes);
  log << "informative fit: " << fit.draws.size() << " draws, acceptance "
      << format_number(fit.acceptance_rate) << "\n"
      << "  intercept mixture p=" << format_number(int_mix.p) << " ("
      << format_number(int_mix.mu1) << ", " << format_number(int_mix.sigma1) << ") ("
      << format_number(int_mix.mu2) << ", " << format_number(int_mix.sigma2) << ")\n"
      << "  slope mixture     p=" << format_number(slope_mix.p) << " ("
      << format_number(slope_mix.mu1) << ", " << format_number(slope_mix.sigma1) << ") ("
      << format_number(slope_mix.mu2) << ", " << format_number(slope_mix.sigma2) << ")\n";
  return build_repp(int_mix, slope_mix, 1.0);
}

ReppPrior ensure_informative(const RunConfig& c, std::ostream& log) {
  const fs::path file = out_dir(c) / kInformativeCache;
  const std::string key = elicitation_key(c);
  if (cache_valid(c, file, key)) {
    auto in = open_in(file);
    return read_prior_cache(in);
  }
  ensure_dir(out_dir(c));
  ReppPrior informative = fit_informative_prior(c, log);
  {
    auto out = open_out(file);
    write_prior_cache(out, informative);
  }
  write_key(file, key);
  return informative;
}

std::vector<FamilyDiagnostics> family_diagnostics(const RunConfig& c, const CoeffTables& tables) {
  const auto slopes = c.slopes();
  std::vector<const CoeffTable*> list{&tables.h0};
  for (const auto& t : tables.h1)
    if (t.delta > 0.0) list.push_back(&t);
  std::vector<FamilyDiagnostics> out;
  for (const CoeffTable* t : list) {
    const auto family = build_family(t->delta, c.sim.adult, c.sim.range, slopes);
    FamilyDiagnostics d;
    d.delta = t->delta;
    d.family_size = family.size();
    d.slope_min = family.front().coeff.slope;
    d.slope_max = family.front().coeff.slope;
    for (const auto& m : family) {
      d.slope_min = std::min(d.slope_min, m.coeff.slope);
      d.slope_max = std::max(d.slope_max, m.coeff.slope);
    }
    for (std::size_t i = 0; i < t->members.size(); ++i)
      d.max_eta_gap = std::max(d.max_eta_gap, std::abs(t->members[i].eta - t->eta_grid[i]));
    out.push_back(d);
  }
  return out;
}

struct Quantiles {
  double mean = 0.0;
  double sd = 0.0;
  std::map<std::string, double> q;
};

Quantiles summarize(std::vector<double> v) {
  Quantiles s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(v.begin(), v.end());
  const auto quantile = [&](double p) {
    const double h = (n - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  s.q = {{"q025", quantile(0.025)}, {"q25", quantile(0.25)}, {"q50", quantile(0.5)},
         {"q75", quantile(0.75)}, {"q975", quantile(0.975)}};
  return s;
}

nlohmann::ordered_json to_json(const Quantiles& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["sd"] = s.sd;
  for (const char* k : {"q025", "q25", "q50", "q75", "q975"}) j[k] = s.q.at(k);
  return j;
}

std::vector<EtaTrendPoint> run_eta_trend(const RunConfig& c, std::ostream& log) {
  const auto& et = *c.eta_trend;
  const double delta = et.delta > 0.0 ? et.delta : c.sim.epsilon_h;
  const CoeffTable table = build_table(delta, et.eta, c.sim.adult, c.sim.range, c.slopes());
  SimConfig sim = c.sim;
  if (et.replicates > 0) sim.T = et.replicates;

  std::vector<EtaTrendPoint> points;
  for (int n : et.n) {
    for (double w : et.w) {
      const ReppPrior prior = ensure_prior(c, w, log);
      std::vector<std::vector<double>> probs;
      for (const auto& m : table.members) probs.push_back(fixed_beta_probs(n, m, prior, sim));
      for (double eps : c.grid.epsilon_bayes)
        for (std::size_t i = 0; i < table.members.size(); ++i)
          points.push_back({n, w, eps, table.members[i],
                            rejection_rate(std::span<const double>(probs[i]), eps)});
      log << "eta trend n=" << n << " w=" << format_number(w) << " done\n";
    }
  }
  return points;
}

ReppPrior store_prior(const RunConfig& c, const ReppPrior& informative, double w) {
  const fs::path file = out_dir(c) / prior_cache_name(w);
  ReppPrior p = build_repp(informative.intercept, informative.slope, w);
  {
    auto out = open_out(file);
    write_prior_cache(out, p);
  }
  write_key(file, elicitation_key(c));
  return p;
}

}  // namespace

RunConfig resolve_config(const CommandOptions& opts) {
  RunConfig c = load_config(opts.config_path);
  if (opts.out_dir) c.output_dir = opts.out_dir->string();
  if (opts.seed) c.sim.seed = *opts.seed;
  if (opts.threads) c.sim.threads = *opts.threads;
  c.validate();
  return c;
}

std::string prior_cache_name(double w) { return "prior_w" + format_number(w) + ".json"; }

ReppPrior ensure_prior(const RunConfig& c, double w, std::ostream& log) {
  const fs::path file = out_dir(c) / prior_cache_name(w);
  const std::string key = elicitation_key(c);
  if (cache_valid(c, file, key)) {
    auto in = open_in(file);
    ReppPrior p = read_prior_cache(in);
    if (std::abs(p.w - w) > 1e-12) throw ValidationError(file.string() + ": weight mismatch");
    return p;
  }
  return store_prior(c, ensure_informative(c, log), w);
}

CoeffTables ensure_tables(const RunConfig& c, std::ostream& log) {
  const fs::path file = out_dir(c) / kTableCache;
  const std::string key = family_key(c);
  if (cache_valid(c, file, key)) {
    auto in = open_in(file);
    return read_table_cache(in, c.sim.scheme, c.sim.adult, c.sim.range);
  }
  ensure_dir(out_dir(c));
  log << "building coefficient tables\n";
  CoeffTables tables =
      build_tables(c.sim.epsilon_h, c.sim.scheme, c.sim.adult, c.sim.range, c.slopes());
  {
    auto out = open_out(file);
    write_table_cache(out, tables);
  }
  write_key(file, key);
  return tables;
}

void cmd_elicit(const RunConfig& c, std::ostream& log) {
  ensure_dir(out_dir(c));
  // Always refit: elicit is the command that refreshes the prior caches.
  RunConfig fresh = c;
  fresh.reuse_caches = false;
  const ReppPrior informative = ensure_informative(fresh, log);
  for (double w : c.grid.w) {
    store_prior(c, informative, w);
    log << "wrote " << (out_dir(c) / prior_cache_name(w)).string() << "\n";
  }
}

void cmd_family(const RunConfig& c, std::ostream& log) {
  RunConfig fresh = c;
  fresh.reuse_caches = false;
  const CoeffTables tables = ensure_tables(fresh, log);
  const auto diags = family_diagnostics(c, tables);
  {
    auto out = open_out(out_dir(c) / "family_diagnostics.csv");
    write_family_diagnostics(out, diags);
  }
  log << "wrote " << (out_dir(c) / kTableCache).string() << " (1 H0 table, " << tables.h1.size()
      << " H1 tables)\n";
  for (const auto& d : diags)
    log << "  delta=" << format_number(d.delta) << " family=" << d.family_size << " slopes ["
        << format_number(d.slope_min) << ", " << format_number(d.slope_max)
        << "] max eta gap " << format_number(d.max_eta_gap) << "\n";
}

void cmd_search(const RunConfig& c, std::ostream& log) {
  ensure_dir(out_dir(c));
  const CoeffTables tables = ensure_tables(c, log);
  std::map<double, ReppPrior> priors;
  for (double w : c.grid.w) priors.emplace(w, ensure_prior(c, w, log));
  const CoeffTable h1_stab = stability_h1_table(c.sim, tables, c.stability, c.slopes());

  ReplicateSink sink;
  if (c.replicate_logs) {
    sink = [&](int n, double w, std::span<const ReplicateRecord> h0,
               std::span<const ReplicateRecord> h1) {
      for (double eps : c.grid.epsilon_bayes) {
        const auto name = "replicates_n" + std::to_string(n) + "_w" + format_number(w) +
                          "_eps" + format_number(eps) + ".csv";
        auto out = open_out(out_dir(c) / name);
        std::vector<ReplicateRecord> all(h0.begin(), h0.end());
        all.insert(all.end(), h1.begin(), h1.end());
        write_replicate_log(out, all, eps);
      }
    };
  }

  const SearchReport report = search(
      c.grid, c.sim, [&](double w) { return priors.at(w); }, tables, h1_stab, c.stability, sink);

  const auto write = [&](const char* name, auto&& fn) {
    auto out = open_out(out_dir(c) / name);
    fn(out);
  };
  write("oc_table.csv", [&](std::ostream& o) { write_oc_table(o, report); });
  write("oc_detail.csv", [&](std::ostream& o) { write_oc_detail(o, report); });
  write("stability.csv", [&](std::ostream& o) { write_stability(o, report); });
  write("stability_rates.csv", [&](std::ostream& o) {
    write_stability_rates(o, report, c.sim.scheme.h0_eta_grid, h1_stab.eta_grid);
  });
  write("ranking.json", [&](std::ostream& o) { write_ranking_json(o, report); });
  write("oc_vs_w.csv", [&](std::ostream& o) { write_oc_vs_w(o, report); });

  if (c.eta_trend) {
    const auto points = run_eta_trend(c, log);
    write("eta_trend.csv", [&](std::ostream& o) { write_eta_trend(o, points); });
  }

  log << "evaluated " << report.results.size() << " tuples, " << report.ranking.size()
      << " ranked\n";
  for (const auto& f : report.findings) log << "finding: " << f << "\n";
  if (!report.ranking.empty()) {
    const auto& top = report.results[report.ranking.front().index];
    log << "top: (" << top.oc.tuple.n << ", " << format_number(top.oc.tuple.w) << ", "
        << format_number(top.oc.tuple.epsilon_bayes) << ") " << report.ranking.front().reason
        << "\n";
  }
}

void cmd_analyze(const RunConfig& c, const fs::path& data_path, double w, double epsilon_bayes,
                 std::ostream& log) {
  TrialDataset data;
  {
    auto in = open_in(data_path);
    data = read_trial_csv(in);
  }
  data.validate(c.sim.range);
  const DesignTuple tuple{static_cast<int>(data.n()), w, epsilon_bayes};
  tuple.validate();

  const ReppPrior prior = ensure_prior(c, w, log);
  Rng rng = make_rng(c.sim.seed, {kAnalyzeTag});
  const PosteriorDraws draws = sample_posterior(data, prior, c.sim.sampler, rng);
  const DeviationScanner scanner(c.sim.adult, c.sim.range.interest_lo, c.sim.range.interest_hi);
  const double prob = prob_similarity(draws, scanner, c.sim.epsilon_h);

  std::vector<double> intercepts, slopes, maxdev;
  for (const auto& d : draws.draws) {
    intercepts.push_back(d.intercept);
    slopes.push_back(d.slope);
    maxdev.push_back(scanner.max_value(d));
  }

  nlohmann::ordered_json j;
  j["n"] = tuple.n;
  j["w"] = w;
  j["eps_bayes"] = epsilon_bayes;
  j["epsilon_h"] = c.sim.epsilon_h;
  j["prob_similarity"] = prob;
  j["decision"] = decide(prob, epsilon_bayes);
  j["acceptance_rate"] = draws.acceptance_rate;
  j["intercept"] = to_json(summarize(intercepts));
  j["slope"] = to_json(summarize(slopes));
  j["max_deviation"] = to_json(summarize(maxdev));

  ensure_dir(out_dir(c));
  {
    auto out = open_out(out_dir(c) / "analysis.json");
    out << j.dump(2) << "\n";
  }
  log << "prob_similarity " << format_number(prob) << " -> "
      << (decide(prob, epsilon_bayes) ? "similar (accept H1)" : "not shown similar") << "\n";
}

}  // namespace ped
