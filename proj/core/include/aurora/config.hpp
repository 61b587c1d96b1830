#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/encoder.hpp"
#include "aurora/objectives.hpp"
#include "aurora/optimizer.hpp"

namespace aurora {

/// Flat `key = value` file with `#` comments and dotted keys.
/// Duplicate or malformed lines are ConfigErrors.
std::map<std::string, std::string> parse_key_values(std::istream& in);

struct ObjectiveParams {
  AuroraLossConfig aurora;
  double temperature = 0.2;     // InfoNCE
  double mask_fraction = 0.5;   // MAE
  double ema_rate = 0.99;       // teacher EMA
  double center_rate = 0.9;     // teacher-logit centre EMA
  double student_temp = 0.1;
  double teacher_temp = 0.04;
};

enum class Schedule { constant, cosine };

struct TrainingParams {
  OptimizerConfig optimizer;
  Schedule schedule = Schedule::constant;
  std::size_t epochs = 40;
  std::size_t batch_size = 256;
  std::size_t neighbors = 10;  // m in the relation graphs
};

struct EvalParams {
  std::size_t k = 10;
  double test_fraction = 0.2;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  CohortConfig cohort;
  ShiftSpec shift = ShiftSpec::standard(4);
  EncoderConfig encoder;
  Method method = Method::aurora;
  std::vector<Method> grid_methods = {Method::mae, Method::contrastive, Method::distill, Method::aurora};
  ObjectiveParams objective;
  TrainingParams training;
  EvalParams eval;

  static ExperimentConfig defaults();
  /// Starts from defaults and applies every key; `seed` is mandatory.
  static ExperimentConfig parse(std::istream& in);
  static ExperimentConfig parse_string(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  /// Same experiment with a different seed (cohort, init and shuffling all follow it).
  ExperimentConfig with_seed(std::uint64_t s) const;
  void validate() const;
  /// Canonical `key = value` dump; parse(to_text()) round-trips.
  std::string to_text() const;
};

/// Thread cap from AURORA_THREADS (default 1).
std::size_t configured_threads();

}  // namespace aurora
