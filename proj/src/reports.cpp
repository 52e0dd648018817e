#include "ped/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ostream>

#include <json.hpp>

namespace ped {

std::string format_number(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) != v) continue;
    // %g drops to exponent form for short integers such as 40; keep plain digits there.
    const double mag = std::abs(v);
    if (std::strchr(buf, 'e') && mag >= 1e-4 && mag < 1e15 && prec < 17) continue;
    break;
  }
  return buf;
}

namespace {

std::string tuple_prefix(const DesignTuple& t) {
  return std::to_string(t.n) + ',' + format_number(t.w) + ',' + format_number(t.epsilon_bayes);
}

}  // namespace

void write_oc_table(std::ostream& out, const SearchReport& report) {
  out << "n,w,eps_bayes,type1,power,status\n";
  for (const auto& r : report.results)
    out << tuple_prefix(r.oc.tuple) << ',' << format_number(r.oc.type1) << ','
        << format_number(r.oc.power) << ',' << to_string(r.classification.status) << '\n';
}

void write_oc_detail(std::ostream& out, const SearchReport& report) {
  out << "n,w,eps_bayes,type1,type1_se,power,power_se,status,violated,margin,retries\n";
  for (const auto& r : report.results)
    out << tuple_prefix(r.oc.tuple) << ',' << format_number(r.oc.type1) << ','
        << format_number(r.oc.type1_se()) << ',' << format_number(r.oc.power) << ','
        << format_number(r.oc.power_se()) << ',' << to_string(r.classification.status) << ','
        << to_string(r.classification.violated) << ','
        << format_number(r.classification.margin) << ',' << r.oc.retries << '\n';
}

void write_stability(std::ostream& out, const SearchReport& report) {
  out << "n,w,eps_bayes,prop_type1_ok,prop_power_ok,stable\n";
  for (const auto& r : report.results) {
    if (!r.stability) continue;
    out << tuple_prefix(r.oc.tuple) << ',' << format_number(r.stability->prop_type1_ok) << ','
        << format_number(r.stability->prop_power_ok) << ','
        << (r.stability->stable ? "true" : "false") << '\n';
  }
}

void write_stability_rates(std::ostream& out, const SearchReport& report,
                           std::span<const double> h0_eta, std::span<const double> h1_eta) {
  out << "n,w,eps_bayes,hypothesis,slot,eta,rate\n";
  for (const auto& r : report.results) {
    if (!r.stability) continue;
    const auto emit = [&](const char* h, const std::vector<double>& rates,
                          std::span<const double> eta) {
      for (std::size_t i = 0; i < rates.size(); ++i)
        out << tuple_prefix(r.oc.tuple) << ',' << h << ',' << i << ','
            << (i < eta.size() ? format_number(eta[i]) : std::string("nan")) << ','
            << format_number(rates[i]) << '\n';
    };
    emit("H0", r.stability->h0_rates, h0_eta);
    emit("H1", r.stability->h1_rates, h1_eta);
  }
}

void write_ranking_json(std::ostream& out, const SearchReport& report) {
  nlohmann::ordered_json j;
  j["findings"] = report.findings;
  auto list = nlohmann::ordered_json::array();
  int rank = 1;
  for (const auto& entry : report.ranking) {
    const auto& r = report.results[entry.index];
    nlohmann::ordered_json e;
    e["rank"] = rank++;
    e["n"] = r.oc.tuple.n;
    e["w"] = r.oc.tuple.w;
    e["eps_bayes"] = r.oc.tuple.epsilon_bayes;
    e["type1"] = r.oc.type1;
    e["type1_se"] = r.oc.type1_se();
    e["power"] = r.oc.power;
    e["power_se"] = r.oc.power_se();
    e["status"] = to_string(r.classification.status);
    e["violated"] = to_string(r.classification.violated);
    e["margin"] = r.classification.margin;
    if (r.stability) {
      e["prop_type1_ok"] = r.stability->prop_type1_ok;
      e["prop_power_ok"] = r.stability->prop_power_ok;
      e["stable"] = r.stability->stable;
    }
    e["reason"] = entry.reason;
    list.push_back(std::move(e));
  }
  j["ranking"] = std::move(list);
  out << j.dump(2) << '\n';
}

void write_oc_vs_w(std::ostream& out, const SearchReport& report) {
  out << "n,eps_bayes,w,type1,power\n";
  // results are n-major then w then eps; regroup to (n, eps) series over w.
  std::vector<const TupleResult*> rows;
  for (const auto& r : report.results) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const TupleResult* a, const TupleResult* b) {
    if (a->oc.tuple.n != b->oc.tuple.n) return a->oc.tuple.n < b->oc.tuple.n;
    if (a->oc.tuple.epsilon_bayes != b->oc.tuple.epsilon_bayes)
      return a->oc.tuple.epsilon_bayes < b->oc.tuple.epsilon_bayes;
    return a->oc.tuple.w < b->oc.tuple.w;
  });
  for (const auto* r : rows)
    out << r->oc.tuple.n << ',' << format_number(r->oc.tuple.epsilon_bayes) << ','
        << format_number(r->oc.tuple.w) << ',' << format_number(r->oc.type1) << ','
        << format_number(r->oc.power) << '\n';
}

void write_eta_trend(std::ostream& out, std::span<const EtaTrendPoint> points) {
  out << "n,w,eps_bayes,delta,eta,intercept,slope,rate\n";
  for (const auto& p : points)
    out << p.n << ',' << format_number(p.w) << ',' << format_number(p.epsilon_bayes) << ','
        << format_number(p.truth.delta) << ',' << format_number(p.truth.eta) << ','
        << format_number(p.truth.coeff.intercept) << ',' << format_number(p.truth.coeff.slope)
        << ',' << format_number(p.rate) << '\n';
}

void write_family_diagnostics(std::ostream& out, std::span<const FamilyDiagnostics> diags) {
  out << "delta,family_size,slope_min,slope_max,max_eta_gap\n";
  for (const auto& d : diags)
    out << format_number(d.delta) << ',' << d.family_size << ',' << format_number(d.slope_min)
        << ',' << format_number(d.slope_max) << ',' << format_number(d.max_eta_gap) << '\n';
}

}  // namespace ped
