#include "aurora/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "aurora/errors.hpp"
#include "aurora/objectives.hpp"
#include "aurora/relational.hpp"

namespace aurora {

namespace {

constexpr std::uint64_t kShuffleKey = 0x5348554646ULL;  // "SHUFF"
constexpr std::uint64_t kAugmentKey = 0x4155474dULL;    // "AUGM"
constexpr std::uint64_t kProbeKey = 0x50524f4245ULL;    // "PROBE"

struct StepLoss {
  double total = 0.0;
  std::vector<double> align;
  double orth = 0.0;
  double guard = 0.0;
};

class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, const Cohort& cohort, const DataSplit& split)
      : cfg_(cfg),
        cohort_(cohort),
        rows_(split.train),
        model_(ModelBundle::init(cfg.method, cfg.encoder, cfg.seed)),
        optimizer_(cfg.training.optimizer) {
    if (cohort.config.p != cfg.encoder.input_dim)
      throw ConfigError("cohort feature dim " + std::to_string(cohort.config.p) + " differs from encoder input dim " +
                        std::to_string(cfg.encoder.input_dim));
    if (rows_.size() < 2) throw ConfigError("training split needs at least two records");
    if (cfg.method == Method::aurora) {
      for (std::size_t k = 0; k < cfg.encoder.subspaces; ++k)
        graphs_.push_back(build_graph(cohort, rows_, kAllFactors[k], cfg.training.neighbors));
    }
  }

  ModelBundle& model() { return model_; }

  /// Loss on one batch of training positions; updates parameters when asked.
  StepLoss step(std::span<const std::size_t> batch, Rng& rng, bool update) {
    std::vector<std::size_t> rows;
    rows.reserve(batch.size());
    for (auto pos : batch) rows.push_back(rows_[pos]);
    const Tensor x = cohort_.features(rows);

    ad::Tape tape;
    BoundParams params(tape, model_.params, true);
    StepLoss out;
    ad::Var loss;
    Tensor teacher_logits;

    switch (cfg_.method) {
      case Method::aurora: {
        auto enc = encode_graph(params, cfg_.encoder, tape.constant(x));
        const PairBatch pairs = sample_pairs(graphs_, batch);
        const auto report = aurora_loss(cfg_.objective.aurora, enc.components, pairs);
        out.align = report.align;
        out.orth = report.orth;
        out.guard = report.guard;
        loss = report.loss;
        break;
      }
      case Method::mae:
        loss = mae_loss(params, cfg_.encoder, x, cfg_.objective.mask_fraction, rng);
        break;
      case Method::contrastive: {
        const Tensor view = fresh_views(rows, rng);
        auto a = encode_graph(params, cfg_.encoder, tape.constant(x));
        auto p = encode_graph(params, cfg_.encoder, tape.constant(view));
        loss = infonce_loss(linear(params, "projector", a.z), linear(params, "projector", p.z), cfg_.objective.temperature);
        break;
      }
      case Method::distill: {
        const Tensor view = fresh_views(rows, rng);
        BoundParams teacher(tape, model_.teacher, false);
        auto student_logits = [&](const Tensor& in) {
          return linear(params, "prototypes", encode_graph(params, cfg_.encoder, tape.constant(in)).z);
        };
        auto teacher_out = [&](const Tensor& in) {
          return linear(teacher, "prototypes", encode_graph(teacher, cfg_.encoder, tape.constant(in)).z);
        };
        const auto& o = cfg_.objective;
        ad::Var t1 = teacher_out(view), t2 = teacher_out(x);
        loss = 0.5 * (distill_loss(student_logits(x), t1, o.student_temp, o.teacher_temp, model_.center) +
                      distill_loss(student_logits(view), t2, o.student_temp, o.teacher_temp, model_.center));
        const Tensor parts[] = {t1.value(), t2.value()};
        teacher_logits = stack_rows(parts);
        break;
      }
    }
    out.total = loss.item();
    if (!std::isfinite(out.total)) throw NumericError("loss became non-finite");
    if (!update) return out;

    tape.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(params.vars().size());
    for (const auto& v : params.vars()) grads.push_back(v.grad());
    optimizer_.apply(model_.params, grads);
    if (cfg_.method == Method::distill) {
      ema_update(model_.teacher, model_.params, cfg_.objective.ema_rate);
      model_.center = update_center(model_.center, teacher_logits, cfg_.objective.center_rate);
    }
    return out;
  }

  void set_lr(double lr) { optimizer_.set_lr(lr); }

 private:
  Tensor fresh_views(const std::vector<std::size_t>& rows, Rng& rng) const {
    Tensor out({rows.size(), cohort_.config.p});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Tensor v = resample_view(cohort_.records[rows[i]], cohort_.config.noise, rng);
      std::copy(v.data().begin(), v.data().end(), out.row(i).begin());
    }
    return out;
  }

  static Tensor stack_rows(std::span<const Tensor> parts) {
    std::size_t rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Tensor out({rows, parts[0].cols()});
    std::size_t r = 0;
    for (const auto& p : parts)
      for (std::size_t i = 0; i < p.rows(); ++i, ++r) std::copy(p.row(i).begin(), p.row(i).end(), out.row(r).begin());
    return out;
  }

  const ExperimentConfig& cfg_;
  const Cohort& cohort_;
  std::vector<std::size_t> rows_;
  std::vector<RelationGraph> graphs_;
  ModelBundle model_;
  OptimizerState optimizer_;
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    if (e - b >= 2) out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b), perm.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

void accumulate(EpochLog& log, const StepLoss& s, double w) {
  log.total += w * s.total;
  if (log.align.size() < s.align.size()) log.align.resize(s.align.size(), 0.0);
  for (std::size_t k = 0; k < s.align.size(); ++k) log.align[k] += w * s.align[k];
  log.orth += w * s.orth;
  log.guard += w * s.guard;
}

}  // namespace

DataSplit DataSplit::by_id(const Cohort& cohort, double test_fraction) {
  const std::size_t n = cohort.records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cohort.records[a].id < cohort.records[b].id; });
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  DataSplit s;
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

TrainResult train(const ExperimentConfig& cfg, const Cohort& cohort, const DataSplit& split) {
  cfg.validate();
  Trainer trainer(cfg, cohort, split);
  TrainResult result;
  const std::size_t n = split.train.size();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  auto run_epoch = [&](std::size_t epoch, Rng& shuffle, Rng& augment, bool update) {
    EpochLog log;
    log.epoch = epoch;
    const auto batches = make_batches(n, cfg.training.batch_size, shuffle);
    const double w = 1.0 / static_cast<double>(batches.size());
    for (const auto& batch : batches) accumulate(log, trainer.step(batch, augment, update), w);
    log.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    return log;
  };

  {
    Rng shuffle = Rng::stream(cfg.seed, kProbeKey);
    Rng augment = Rng::stream(cfg.seed, kProbeKey + 1);
    result.log.push_back(run_epoch(0, shuffle, augment, false));
  }

  Rng shuffle = Rng::stream(cfg.seed, kShuffleKey);
  Rng augment = Rng::stream(cfg.seed, kAugmentKey);
  const std::size_t epochs = cfg.training.epochs;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    if (cfg.training.schedule == Schedule::cosine) {
      const double t = static_cast<double>(epoch - 1) / static_cast<double>(epochs);
      trainer.set_lr(cfg.training.optimizer.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
    }
    const ModelBundle snapshot = trainer.model();
    try {
      result.log.push_back(run_epoch(epoch, shuffle, augment, true));
    } catch (const NumericError& e) {
      trainer.model() = snapshot;
      result.diverged = true;
      result.error = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
  }
  result.model = trainer.model();
  return result;
}

TrainResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  const Cohort cohort = generate(cfg.cohort, configured_threads());
  return train(cfg, cohort, DataSplit::by_id(cohort, cfg.eval.test_fraction));
}

void write_training_log(std::ostream& out, const std::vector<EpochLog>& log, std::size_t subspaces) {
  out << "epoch,total";
  for (std::size_t k = 0; k < subspaces; ++k) out << ",align_" << k;
  out << ",orth,guard,wall_ms\n";
  char buf[48];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out << buf;
  };
  for (const auto& row : log) {
    out << row.epoch;
    put(row.total);
    for (std::size_t k = 0; k < subspaces; ++k) put(k < row.align.size() ? row.align[k] : 0.0);
    put(row.orth);
    put(row.guard);
    std::snprintf(buf, sizeof buf, ",%.1f", row.wall_ms);
    out << buf << '\n';
  }
}

}  // namespace aurora
