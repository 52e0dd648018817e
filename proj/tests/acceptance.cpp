// Acceptance run for the darunavir design case. Prints one PASS/FAIL line per
// criterion; detail lines are indented. Exit status is nonzero if any fails.
//
//   acceptance            full run (T = 1000 where required, about 15 minutes)
//   acceptance --quick    table cells at T = 200 with the wider tolerance
//   acceptance --only 1,6 selected criteria (the smoke grid is criterion 7)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ped/commands.hpp"
#include "ped/config.hpp"
#include "ped/design_search.hpp"
#include "ped/errors.hpp"
#include "ped/posterior.hpp"
#include "ped/reports.hpp"
#include "ped/simengine.hpp"

using namespace ped;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void note(const std::string& s) { details.push_back(s); }
  void require(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "ok   " : "MISS ") + what);
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class... A>
std::string fmtn(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

struct Context {
  RunConfig config;
  std::ostringstream log;
  CoeffTables tables;
  bool quick = false;

  ReppPrior prior(double w) { return ensure_prior(config, w, log); }
};

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol + 1e-12; }

// 1 ------------------------------------------------------------------------
Outcome max_distance(Context&) {
  Outcome o;
  const LogisticCoefficients adult{-2.83, 1.41}, ped{-4.293, 1.886};
  const ExposureRange range{0.0, 5.0, 2.5, 5.0};
  const auto t0 = Clock::now();
  DeviationSummary s;
  const int reps = 1000;
  for (int i = 0; i < reps; ++i) s = max_deviation(adult, ped, range);
  const double ms = seconds_since(t0) * 1000.0 / reps;
  o.note(fmtn("max deviation %.7f at x = %.4f (target 0.0643 +- 0.0005)", s.max_value, s.argmax_x));
  o.require(within(s.max_value, 0.0643, 0.0005), "value within tolerance");
  o.require(ms < 1.0, fmt("runtime %.4f ms < 1 ms", ms));
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome table_cells(Context& ctx) {
  Outcome o;
  SimConfig sim = ctx.config.sim;
  sim.T = ctx.quick ? 200 : 1000;
  const double tol = ctx.quick ? 0.10 : 0.06;
  struct Cell {
    int n;
    double type1, power;
  };
  const Cell cells[] = {{45, 0.165, 0.705}, {40, 0.135, 0.650}, {64, 0.20, 0.740}};
  const ReppPrior prior = ctx.prior(0.1);
  for (const auto& c : cells) {
    const auto t0 = Clock::now();
    const auto est = average_oc({c.n, 0.1, 0.95}, sim, prior, ctx.tables);
    const double secs = seconds_since(t0);
    o.note(fmtn("(%d, 0.1, 0.95) T=%d: type1 %.3f (se %.3f) power %.3f (se %.3f), %.0f s", c.n,
                sim.T, est.type1, est.type1_se(), est.power, est.power_se(), secs));
    o.require(within(est.type1, c.type1, tol), fmtn("n=%d type1 %.3f within %.3f +- %.2f", c.n,
                                                    est.type1, c.type1, tol));
    o.require(within(est.power, c.power, tol), fmtn("n=%d power %.3f within %.3f +- %.2f", c.n,
                                                    est.power, c.power, tol));
    if (ctx.quick) o.require(secs < 60.0, fmt("tuple runtime %.1f s < 60 s", secs));
  }
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome weight_trend(Context& ctx) {
  Outcome o;
  SimConfig sim = ctx.config.sim;
  sim.T = 500;
  const auto lo = average_oc({40, 0.1, 0.8}, sim, ctx.prior(0.1), ctx.tables);
  const auto hi = average_oc({40, 0.5, 0.8}, sim, ctx.prior(0.5), ctx.tables);
  o.note(fmtn("w=0.1: type1 %.3f power %.3f", lo.type1, lo.power));
  o.note(fmtn("w=0.5: type1 %.3f power %.3f", hi.type1, hi.power));
  o.require(hi.type1 > lo.type1, "type1 rises with w");
  o.require(hi.power > lo.power, "power rises with w");
  return o;
}

// 4 ------------------------------------------------------------------------
Outcome eta_trend(Context& ctx) {
  Outcome o;
  SimConfig sim = ctx.config.sim;
  sim.T = 300;
  const std::vector<double> etas{0.1, 0.35, 0.55, 0.85, 0.95};
  const CoeffTable table =
      build_table(0.2, etas, sim.adult, sim.range, ctx.config.slopes());
  for (int n : {45, 55}) {
    for (double w : {0.1, 0.3}) {
      const ReppPrior prior = ctx.prior(w);
      std::vector<double> rates;
      for (const auto& m : table.members) {
        const auto probs = fixed_beta_probs(n, m, prior, sim);
        rates.push_back(rejection_rate(std::span<const double>(probs), 0.95));
      }
      int inversions = 0;
      double worst = 0.0;
      for (std::size_t i = 1; i < rates.size(); ++i)
        if (rates[i] > rates[i - 1] + 1e-12) {
          ++inversions;
          worst = std::max(worst, rates[i] - rates[i - 1]);
        }
      std::string series;
      for (double r : rates) series += " " + format_number(r);
      o.note(fmtn("n=%d w=%.1f rates over eta:%s", n, w, series.c_str()));
      o.require(inversions == 0 || (inversions == 1 && worst <= 0.05 + 1e-12),
                fmtn("n=%d w=%.1f: %d inversions, largest %.3f", n, w, inversions, worst));
    }
  }
  return o;
}

// 5 ------------------------------------------------------------------------
std::string rate_range(const std::vector<double>& r) {
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  return fmtn("[%.3f, %.3f]", *lo, *hi);
}

Outcome stability_cells(Context& ctx) {
  Outcome o;
  const SimConfig& sim = ctx.config.sim;
  const CoeffTable h1 =
      stability_h1_table(sim, ctx.tables, ctx.config.stability, ctx.config.slopes());
  const ReppPrior prior = ctx.prior(0.1);
  const auto s50 = stability({50, 0.1, 0.95}, sim, prior, ctx.tables, h1, ctx.config.stability);
  o.note(fmtn("(50, 0.1, 0.95): prop_type1_ok %.2f prop_power_ok %.2f", s50.prop_type1_ok,
              s50.prop_power_ok));
  o.note("  per-scenario type1 " + rate_range(s50.h0_rates) + ", power " +
         rate_range(s50.h1_rates));
  o.require(s50.prop_type1_ok >= 0.8, "n=50 prop_type1_ok >= 0.8");
  o.require(s50.prop_power_ok >= 0.8, "n=50 prop_power_ok >= 0.8");
  const auto s40 = stability({40, 0.1, 0.95}, sim, prior, ctx.tables, h1, ctx.config.stability);
  o.note(fmtn("(40, 0.1, 0.95): prop_type1_ok %.2f prop_power_ok %.2f", s40.prop_type1_ok,
              s40.prop_power_ok));
  o.note("  per-scenario type1 " + rate_range(s40.h0_rates) + ", power " +
         rate_range(s40.h1_rates));
  o.require(s40.prop_power_ok < 0.5, "n=40 prop_power_ok < 0.5");
  return o;
}

// 6 ------------------------------------------------------------------------
double loglik(const TrialDataset& d, double c, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d.n(); ++i) {
    const double u = c + s * d.exposures[i];
    acc += d.outcomes[i] ? log_expit(u) : log_expit(-u);
  }
  return acc;
}

TrialDataset trial(int n, const LogisticCoefficients& truth, std::uint64_t seed) {
  Rng rng(seed);
  TrialDataset d;
  d.exposures = gen_exposures(n, {0.0, 5.0, 2.5, 5.0}, rng);
  d.outcomes = gen_outcomes(d.exposures, truth, rng);
  return d;
}

bool prior_normalization() {
  const MixtureComponentPair m{0.3, -3.3, 0.001, -3.0, 0.2};
  const ReppPrior p = build_repp(m, m, 0.4);
  // Piecewise Simpson with fine panels around each narrow component.
  std::vector<double> cuts{-1000.0, -3.32, -3.28, -4.5, -1.5, 1000.0};
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t k = 1; k < cuts.size(); ++k) {
    const int panels = 200000;
    const double h = (cuts[k] - cuts[k - 1]) / panels;
    double acc = 0.0;
    for (int i = 0; i <= panels; ++i) {
      const double wgt = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += wgt * p.coefficient_density(cuts[k - 1] + h * i, m);
    }
    total += acc * h / 3.0;
  }
  return std::abs(total - 1.0) <= 1e-6;
}

bool deviation_brute_force() {
  std::mt19937_64 g(12345);
  std::uniform_real_distribution<double> ai(-5.0, 0.0), as(0.3, 3.0), pi(-8.0, 2.0), ps(0.1, 4.0);
  for (int t = 0; t < 100; ++t) {
    const LogisticCoefficients a{ai(g), as(g)}, p{pi(g), ps(g)};
    long double best = -2.0L;
    for (int k = 0; k < 200001; ++k) {
      const long double x = 2.5L + 2.5L * k / 200000.0L;
      best = std::max(best, 1.0L / (1.0L + std::exp(-(a.intercept + a.slope * x))) -
                                1.0L / (1.0L + std::exp(-(p.intercept + p.slope * x))));
    }
    if (std::abs(max_deviation(a, p, {0.0, 5.0, 2.5, 5.0}).max_value - static_cast<double>(best)) >
        1e-6)
      return false;
  }
  return true;
}

bool sampler_vs_quadrature() {
  const TrialDataset d = trial(30, {-2.83, 1.41}, 51);
  const MixtureComponentPair ic{0.5, -3.5, 0.4, -2.5, 0.4}, sl{0.5, 1.2, 0.2, 1.7, 0.2};
  const ReppPrior prior = build_repp(ic, sl, 0.5);
  Rng rng(52);
  const auto draws = sample_posterior(d, prior, {40000, 4000}, rng);
  const int n = 400, bins = 12;
  const double c_lo = -9.0, c_hi = 3.0, s_lo = -0.5, s_hi = 4.0;
  std::vector<double> qc(bins, 0.0), qs(bins, 0.0), mc(bins, 0.0), ms(bins, 0.0);
  const auto bin = [&](double v, double lo, double hi) {
    return static_cast<std::size_t>(
        std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * bins)), 0, bins - 1));
  };
  std::vector<double> lw;
  double mx = -1e300;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double c = c_lo + (c_hi - c_lo) * (i + 0.5) / n;
      const double s = s_lo + (s_hi - s_lo) * (j + 0.5) / n;
      lw.push_back(loglik(d, c, s) + prior.coefficient_log_density(c, ic) +
                   prior.coefficient_log_density(s, sl));
      mx = std::max(mx, lw.back());
    }
  double tot = 0.0;
  for (double& v : lw) tot += (v = std::exp(v - mx));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double m = lw[static_cast<std::size_t>(i * n + j)] / tot;
      qc[bin(c_lo + (c_hi - c_lo) * (i + 0.5) / n, c_lo, c_hi)] += m;
      qs[bin(s_lo + (s_hi - s_lo) * (j + 0.5) / n, s_lo, s_hi)] += m;
    }
  for (const auto& b : draws.draws) {
    mc[bin(b.intercept, c_lo, c_hi)] += 1.0 / draws.size();
    ms[bin(b.slope, s_lo, s_hi)] += 1.0 / draws.size();
  }
  double tv_c = 0.0, tv_s = 0.0;
  for (int k = 0; k < bins; ++k) {
    tv_c += 0.5 * std::abs(qc[k] - mc[k]);
    tv_s += 0.5 * std::abs(qs[k] - ms[k]);
  }
  return tv_c <= 0.05 && tv_s <= 0.05;
}

bool sampler_vs_mle() {
  const TrialDataset d = trial(2000, {-2.83, 1.41}, 21);
  const auto mode = penalized_mode(d);
  Rng rng(22);
  const auto draws = sample_posterior(d, build_repp({}, {}, 0.0), {4000, 2000}, rng);
  double mc = 0, ms = 0, vc = 0, vs = 0;
  for (const auto& b : draws.draws) {
    mc += b.intercept / draws.size();
    ms += b.slope / draws.size();
  }
  for (const auto& b : draws.draws) {
    vc += (b.intercept - mc) * (b.intercept - mc) / (draws.size() - 1);
    vs += (b.slope - ms) * (b.slope - ms) / (draws.size() - 1);
  }
  return std::abs(mc - mode.intercept) < 3 * std::sqrt(vc) &&
         std::abs(ms - mode.slope) < 3 * std::sqrt(vs);
}

bool exposure_split() {
  Rng rng(1);
  const auto x = gen_exposures(100000, {0.0, 5.0, 2.5, 5.0}, rng);
  const auto inside = std::count_if(x.begin(), x.end(), [](double v) { return v >= 2.5; });
  return std::abs(static_cast<double>(inside) / 100000.0 - 0.5) <= 0.005;
}

bool classify_table() {
  return classify(0.165, 0.705, 0.2, 0.3).status == DesignStatus::Qualified &&
         classify(0.135, 0.650, 0.2, 0.3).status == DesignStatus::Admissible &&
         classify(0.305, 0.775, 0.2, 0.3).status == DesignStatus::Rejected;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool pipeline_determinism(Context& ctx) {
  RunConfig c = ctx.config;
  c.sim.T = 8;
  c.grid = {{40}, {0.1}, {0.8, 0.95}};
  c.eta_trend = EtaTrendSettings{{40}, {0.1}, {0.1, 0.95}, 0.0, 8};
  const char* files[] = {"oc_table.csv", "oc_detail.csv", "stability.csv", "ranking.json",
                         "eta_trend.csv"};
  std::vector<std::string> first;
  std::ostringstream log;
  for (int run = 0; run < 2; ++run) {
    cmd_search(c, log);
    for (std::size_t i = 0; i < std::size(files); ++i) {
      const std::string text = slurp(fs::path(c.output_dir) / files[i]);
      if (run == 0)
        first.push_back(text);
      else if (text != first[i])
        return false;
    }
  }
  return !first[0].empty();
}

Outcome properties(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  const std::pair<const char*, std::function<bool()>> suites[] = {
      {"mixture prior integrates to 1 within 1e-6", prior_normalization},
      {"max deviation vs 200001-node scan on 100 pairs within 1e-6", deviation_brute_force},
      {"sampler vs grid quadrature, marginal TV <= 0.05", sampler_vs_quadrature},
      {"sampler mean vs Newton mode at n = 2000 within 3 sd", sampler_vs_mle},
      {"exposure split 0.5 +- 0.005 at n = 100000", exposure_split},
      {"classification of the three reference pairs", classify_table},
      {"byte-identical reports on rerun", [&] { return pipeline_determinism(ctx); }},
  };
  for (const auto& [name, fn] : suites) {
    const auto t1 = Clock::now();
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      o.note(std::string("exception: ") + e.what());
    }
    o.require(ok, fmtn("%s (%.1f s)", name, seconds_since(t1)));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, fmt("total %.1f s < 30 s", secs));
  return o;
}

// 7 ------------------------------------------------------------------------
Outcome smoke_grid(Context& ctx) {
  Outcome o;
  const fs::path out = fs::absolute("acceptance_smoke");
  const std::string cmd = std::string(PED_BINARY) + " search --config " + PED_SOURCE_DIR +
                          "/configs/smoke.json --out " + out.string() + " > " +
                          (fs::absolute("acceptance_smoke.log")).string() + " 2>&1";
  const auto t0 = Clock::now();
  const int rc = std::system(cmd.c_str());
  o.note(fmt("ped search on the smoke config: %.0f s", seconds_since(t0)));
  o.require(rc == 0, "exit status 0");
  std::ifstream in(out / "oc_table.csv");
  int rows = -1;
  for (std::string line; std::getline(in, line);) ++rows;
  o.require(rows == 8, fmtn("oc_table.csv has %d tuple rows (2 x 2 x 2)", rows));
  o.require(fs::exists(out / "ranking.json") && fs::exists(out / "stability.csv"),
            "ranking and stability reports written");
  (void)ctx;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") {
      ctx.quick = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--quick] [--only 1,2,...]\n";
      return 2;
    }
  }

  ctx.config = darunavir_config();
  ctx.config.output_dir = fs::absolute("acceptance_cache").string();
  fs::create_directories(ctx.config.output_dir);

  const std::pair<const char*, std::function<Outcome(Context&)>> criteria[] = {
      {"max-distance reproduction", max_distance},
      {ctx.quick ? "table cells at T=200 (+-0.10)" : "table cells at T=1000 (+-0.06)",
       table_cells},
      {"type1 and power rise with w at n=40, eps_bayes=0.8", weight_trend},
      {"rejection rate non-increasing in eta", eta_trend},
      {"stability proportions", stability_cells},
      {"property suites", properties},
      {"2x2x2 smoke grid completes", smoke_grid},
  };

  bool tables_ready = false;
  int failures = 0;
  for (std::size_t k = 0; k < std::size(criteria); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      if (!tables_ready && id >= 2 && id <= 5) {
        ctx.tables = ensure_tables(ctx.config, ctx.log);
        tables_ready = true;
      }
      o = criteria[k].second(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[k].first
              << " (" << fmt("%.0f", seconds_since(t0)) << " s)\n";
    for (const auto& d : o.details) std::cout << "    " << d << "\n";
    std::cout.flush();
    failures += o.pass ? 0 : 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << "\n";
  return failures == 0 ? 0 : 1;
}
