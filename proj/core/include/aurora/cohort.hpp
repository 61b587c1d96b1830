#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aurora/rng.hpp"
#include "aurora/tensor.hpp"

namespace aurora {

/// Ground-truth generative factors, in subspace order.
enum class Factor : std::size_t { phys = 0, intervention = 1, obs = 2, ctx = 3 };
inline constexpr std::size_t kFactorCount = 4;
inline constexpr std::array<Factor, kFactorCount> kAllFactors = {Factor::phys, Factor::intervention, Factor::obs,
                                                                 Factor::ctx};

std::string_view factor_name(Factor f);
Factor parse_factor(std::string_view name);
inline std::size_t index(Factor f) { return static_cast<std::size_t>(f); }

struct FactorVector {
  double phys = 0.0;
  double intervention = 0.0;
  double obs = 0.0;
  std::uint32_t ctx = 0;

  double continuous(Factor f) const;
  friend bool operator==(const FactorVector&, const FactorVector&) = default;
};

struct ShiftSpec {
  /// Added to the coefficient of phys in the intervention factor.
  double int_policy_delta = 0.0;
  /// Multiplier on observation density.
  double obs_scale = 1.0;
  /// Site s uses loading vector site_remap[s]; empty means identity.
  std::vector<std::size_t> site_remap;

  static ShiftSpec identity() { return {}; }
  /// Policy reversal, doubled observation density, cyclic site relabelling.
  static ShiftSpec standard(std::size_t sites);
  void validate(std::size_t sites) const;
  bool is_identity() const;
};

struct CohortConfig {
  std::size_t n = 5000;
  std::size_t p = 32;
  std::size_t sites = 4;
  double rho = 0.5;
  double noise = 0.5;
  std::uint64_t seed = 1;
  std::optional<ShiftSpec> shift;

  /// Throws ConfigError.
  void validate() const;
  /// Width of each factor's dominant loading block (p / 4).
  std::size_t block_size() const { return p / kFactorCount; }
};

struct CohortRecord {
  std::uint64_t id = 0;
  Tensor features;  // [p]
  FactorVector factors;
  bool mortality = false;
  bool sepsis = false;
  bool readmission = false;
  /// Noise-free features. Only present for in-memory cohorts; never serialised.
  Tensor signal;
};

/// Loading vectors drawn once per seed. Each continuous factor owns a
/// dominant block of p/4 coordinates with magnitudes in [0.5, 1.5] and random
/// signs; every other coordinate carries N(0, 0.1^2) leakage. Site loadings
/// are N(0, 1) on the ctx block plus the same leakage elsewhere.
struct Loadings {
  Tensor phys;          // [p]
  Tensor intervention;  // [p]
  Tensor obs;           // [p]
  Tensor sites;         // [S x p]

  static Loadings draw(std::size_t p, std::size_t sites, std::uint64_t seed);
};

struct Cohort {
  CohortConfig config;
  std::optional<Loadings> loadings;  // absent for cohorts read from disk
  std::vector<CohortRecord> records;

  std::size_t size() const { return records.size(); }
  /// Feature rows for the given record positions.
  Tensor features(std::span<const std::size_t> rows) const;
  Tensor features() const;
};

/// Per-record streams are keyed by (cfg.seed, id), so the result does not
/// depend on `threads`. The shifted generator reuses the same streams, giving
/// paired records across shift.
Cohort generate(const CohortConfig& cfg, std::size_t threads = 1);

/// Copy of `cfg` carrying `spec`.
CohortConfig apply_shift(const CohortConfig& cfg, const ShiftSpec& spec);

/// [begin, end) of factor f's dominant block.
std::pair<std::size_t, std::size_t> factor_block(Factor f, std::size_t p);

/// Observable proxy for factor f: the record's features over f's block.
Tensor context_features(const CohortRecord& record, Factor f);
/// Proxy rows for the given record positions ([rows x p/4]).
Tensor context_matrix(const Cohort& cohort, std::span<const std::size_t> rows, Factor f);

/// A second view of the same record: noise-free signal plus a fresh noise draw.
Tensor resample_view(const CohortRecord& record, double noise, Rng& rng);

double sigmoid(double x);
double mortality_probability(const FactorVector& f);
double sepsis_probability(const FactorVector& f);
double readmission_probability(const FactorVector& f);

// Cohort file: `AURC v1 n=<n> p=<p> S=<S>` then one CSV row per record.
void write_cohort(std::ostream& out, const Cohort& cohort);
void write_cohort(const std::string& path, const Cohort& cohort);
Cohort read_cohort(std::istream& in);
Cohort read_cohort(const std::string& path);

}  // namespace aurora
