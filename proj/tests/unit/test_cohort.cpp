#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/errors.hpp"
#include "doctest.h"

using namespace aurora;

namespace {

double corr(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> column(const Cohort& c, Factor f) {
  std::vector<double> out;
  for (const auto& r : c.records) out.push_back(r.factors.continuous(f));
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

CohortConfig sized(std::size_t n) {
  CohortConfig c;
  c.n = n;
  return c;
}

}  // namespace

TEST_CASE("phys-int correlation follows rho") {
  auto c = sized(10000);
  c.rho = 0.0;
  auto g = generate(c);
  CHECK(std::abs(corr(column(g, Factor::phys), column(g, Factor::intervention))) <= 0.05);
  c.rho = 0.8;
  g = generate(c);
  const double r = corr(column(g, Factor::phys), column(g, Factor::intervention));
  CHECK(r >= 0.75);
  CHECK(r <= 0.85);
}

TEST_CASE("noise-free features are a deterministic function of the factors") {
  auto c = sized(2000);
  c.noise = 0.0;
  const auto g = generate(c);
  const Loadings& L = *g.loadings;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& r = g.records[i];
    for (std::size_t j = 0; j < c.p; ++j) {
      const double expect = L.phys[j] * r.factors.phys + L.intervention[j] * r.factors.intervention +
                            L.obs[j] * r.factors.obs + L.sites(r.factors.ctx, j);
      REQUIRE(r.features[j] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("noise-free feature covariance has rank at most 3 + S") {
  auto c = sized(3000);
  c.noise = 0.0;
  const auto g = generate(c);
  Eigen::MatrixXd x(c.n, c.p);
  for (std::size_t i = 0; i < c.n; ++i)
    for (std::size_t j = 0; j < c.p; ++j) x(i, j) = g.records[i].features[j];
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(centred.transpose() * centred);
  lu.setThreshold(1e-9);
  CHECK(lu.rank() <= static_cast<Eigen::Index>(3 + c.sites));
}

TEST_CASE("identical config gives a byte-identical cohort regardless of threads") {
  const auto c = sized(500);
  std::ostringstream a, b;
  write_cohort(a, generate(c, 1));
  write_cohort(b, generate(c, 3));
  CHECK(a.str() == b.str());
}

TEST_CASE("apply_shift examples") {
  const auto base = sized(10000);
  const auto g0 = generate(base);

  SUBCASE("identity spec reproduces the cohort") {
    std::ostringstream a, b;
    write_cohort(a, g0);
    write_cohort(b, generate(apply_shift(base, ShiftSpec::identity())));
    CHECK(a.str() == b.str());
  }
  SUBCASE("obs scale 2 quadruples obs variance") {
    ShiftSpec s;
    s.obs_scale = 2.0;
    const auto g1 = generate(apply_shift(base, s));
    const double ratio = var(column(g1, Factor::obs)) / var(column(g0, Factor::obs));
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.15));
  }
  SUBCASE("phys marginal untouched by the standard shift") {
    const auto g1 = generate(apply_shift(base, ShiftSpec::standard(base.sites)));
    const auto p0 = column(g0, Factor::phys), p1 = column(g1, Factor::phys);
    CHECK(std::abs(mean(p0) - mean(p1)) <= 0.05);
    CHECK(std::abs(var(p0) - var(p1)) <= 0.05);
    CHECK(ks_statistic(p0, p1) < 0.02);
  }
}

TEST_CASE("shift spec validation") {
  ShiftSpec s;
  s.site_remap = {0, 0, 1, 2};
  CHECK_THROWS_AS(s.validate(4), ConfigError);
  s.site_remap = {1, 2, 3, 0};
  CHECK_NOTHROW(s.validate(4));
  s.obs_scale = 0.0;
  CHECK_THROWS_AS(s.validate(4), ConfigError);
}

TEST_CASE("invalid configs are rejected") {
  auto c = sized(100);
  c.rho = 0.99;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = sized(100);
  c.noise = -1.0;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = sized(100);
  c.p = 2;
  CHECK_THROWS_AS(generate(c), ConfigError);
}

TEST_CASE("context_features picks the factor's block") {
  auto c = sized(10);
  c.p = 16;
  const auto g = generate(c);
  const auto& r = g.records[3];
  const Tensor phys = context_features(r, Factor::phys);
  REQUIRE(phys.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) CHECK(phys[j] == r.features[j]);
  const Tensor ctx = context_features(r, Factor::ctx);
  for (std::size_t j = 0; j < 4; ++j) CHECK(ctx[j] == r.features[12 + j]);
}

TEST_CASE("equal phys gives equal phys proxy up to leakage when noise and rho are zero") {
  auto c = sized(400);
  c.noise = 0.0;
  c.rho = 0.0;
  const auto g = generate(c);
  const Loadings& L = *g.loadings;
  // Replace phys of record 1 with that of record 0 and rebuild the block by the generative map.
  const auto& a = g.records[0];
  const auto& b = g.records[1];
  const auto [lo, hi] = factor_block(Factor::phys, c.p);
  for (std::size_t j = lo; j < hi; ++j) {
    const double leak_a = L.intervention[j] * a.factors.intervention + L.obs[j] * a.factors.obs + L.sites(a.factors.ctx, j);
    const double leak_b = L.intervention[j] * b.factors.intervention + L.obs[j] * b.factors.obs + L.sites(b.factors.ctx, j);
    const double phys_part_b = L.phys[j] * a.factors.phys;
    CHECK(a.features[j] - leak_a == doctest::Approx(phys_part_b).epsilon(1e-12));
    CHECK(std::abs(leak_a) < 1.0);
    CHECK(std::abs(leak_b) < 1.0);
  }
}

TEST_CASE("mortality prevalence sanity band") {
  const auto g = generate(sized(10000));
  double s = 0;
  for (const auto& r : g.records) s += r.mortality;
  const double prev = s / 10000.0;
  CHECK(prev >= 0.10);
  CHECK(prev <= 0.35);
}

TEST_CASE("label probabilities match the stated formulas") {
  FactorVector f{0.3, -0.2, 1.1, 2};
  CHECK(mortality_probability(f) == doctest::Approx(1.0 / (1.0 + std::exp(-(2 * 0.3 - 1.5)))));
  CHECK(sepsis_probability(f) == doctest::Approx(1.0 / (1.0 + std::exp(-(1.5 * 0.3 + 0.5 * 1.1 - 1.5)))));
  CHECK(readmission_probability(f) == doctest::Approx(1.0 / (1.0 + std::exp(-(0.8 * 0.3 + 0.8 * -0.2 - 1.0)))));
}

TEST_CASE("cohort csv round trip and header") {
  const auto g = generate(sized(40));
  std::stringstream s;
  write_cohort(s, g);
  const std::string text = s.str();
  CHECK(text.rfind("AURC v1 n=40 p=32 S=4\n", 0) == 0);
  const auto back = read_cohort(s);
  REQUIRE(back.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(back.records[i].id == g.records[i].id);
    CHECK(back.records[i].factors.ctx == g.records[i].factors.ctx);
    CHECK(back.records[i].mortality == g.records[i].mortality);
    CHECK(back.records[i].factors.phys == doctest::Approx(g.records[i].factors.phys).epsilon(1e-8));
    CHECK(max_abs_diff(back.records[i].features, g.records[i].features) < 1e-7);
  }
  std::stringstream again;
  write_cohort(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("malformed cohort files are rejected") {
  std::stringstream bad("AURC v2 n=1 p=4 S=1\n");
  CHECK_THROWS_AS(read_cohort(bad), ConfigError);
  std::stringstream short_row("AURC v1 n=1 p=4 S=1\n0,1,2\n");
  CHECK_THROWS_AS(read_cohort(short_row), ConfigError);
}
