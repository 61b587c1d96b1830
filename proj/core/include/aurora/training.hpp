#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/config.hpp"
#include "aurora/encoder.hpp"

namespace aurora {

/// Deterministic id split: the highest `test_fraction` of ids form the test set.
struct DataSplit {
  std::vector<std::size_t> train;  // cohort row positions, ascending id
  std::vector<std::size_t> test;

  static DataSplit by_id(const Cohort& cohort, double test_fraction);
};

/// Mean loss components over one pass. Epoch 0 is the untrained model.
struct EpochLog {
  std::size_t epoch = 0;
  double total = 0.0;
  std::vector<double> align;  // aurora only
  double orth = 0.0;
  double guard = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  ModelBundle model;  // last finite state
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string error;
};

/// Trains cfg.method on the split's training rows. Bitwise deterministic for
/// a given config and cohort. On a non-finite loss or gradient the run stops
/// and returns the last finite parameters with `diverged` set.
TrainResult train(const ExperimentConfig& cfg, const Cohort& cohort, const DataSplit& split);
/// Generates the configured cohort and trains on its training split.
TrainResult train(const ExperimentConfig& cfg);

/// CSV: epoch,total,align_0..align_{K-1},orth,guard,wall_ms
void write_training_log(std::ostream& out, const std::vector<EpochLog>& log, std::size_t subspaces);

}  // namespace aurora
