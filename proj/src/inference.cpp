#include "scm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace scm {

std::vector<double> bh_adjust(const std::vector<double>& p) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("p-value outside [0,1]: " + std::to_string(v));
  }
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    // m/(r+1) >= 1 is formed first so the product never rounds below p.
    const double scaled = p[order[r]] * (static_cast<double>(m) / static_cast<double>(r + 1));
    running = std::min(running, scaled);
    out[order[r]] = std::min(1.0, running);
  }
  return out;
}

std::string to_string(FdrFamily family) { return family == FdrFamily::pooled ? "pooled" : "per_response"; }

FdrFamily fdr_family_from_string(const std::string& name) {
  if (name == "pooled") return FdrFamily::pooled;
  if (name == "per_response") return FdrFamily::per_response;
  throw std::invalid_argument("unknown FDR family '" + name + "'");
}

std::vector<AssociationRecord> build_association_table(const std::vector<AssociationTest>& tests, double alpha,
                                                       FdrFamily family) {
  auto key = [](const AssociationTest& t) { return std::make_tuple(t.risk_factor, t.response, t.m, t.cadre); };

  std::vector<AssociationRecord> out;
  out.reserve(tests.size());
  for (const auto& t : tests) {
    AssociationRecord r;
    static_cast<AssociationTest&>(r) = t;
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (key(out[i]) == key(out[i - 1]))
      throw std::invalid_argument("duplicate association key (" + out[i].risk_factor + ", " + out[i].response +
                                  ", M=" + std::to_string(out[i].m) + ", cadre " + std::to_string(out[i].cadre) + ")");
  }

  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < out.size(); ++i)
    families[family == FdrFamily::pooled ? std::string() : out[i].response].push_back(i);
  for (const auto& [name, members] : families) {
    std::vector<double> raw;
    for (std::size_t i : members) raw.push_back(out[i].p_raw);
    const auto adj = bh_adjust(raw);
    for (std::size_t k = 0; k < members.size(); ++k) out[members[k]].p_adjusted = adj[k];
  }

  std::set<std::pair<std::string, std::string>> significant_at_one;
  for (auto& r : out) {
    r.positive = r.coefficient > 0.0;
    r.significant = r.p_adjusted <= alpha && r.positive;
    if (r.significant && r.m == 1) significant_at_one.emplace(r.risk_factor, r.response);
  }
  for (auto& r : out) {
    r.subpopulation_only = r.significant && r.m >= 2 && !significant_at_one.contains({r.risk_factor, r.response});
  }
  return out;
}

}  // namespace scm
