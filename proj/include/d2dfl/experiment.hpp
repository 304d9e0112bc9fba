#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dfl/baselines.hpp"
#include "d2dfl/channel.hpp"
#include "d2dfl/config.hpp"
#include "d2dfl/data.hpp"
#include "d2dfl/engine.hpp"
#include "d2dfl/mixing.hpp"
#include "d2dfl/model.hpp"
#include "d2dfl/objective.hpp"
#include "d2dfl/solver.hpp"

namespace d2dfl {

struct RoundRecord {
  std::size_t round = 0;
  double train_loss = 0.0;
  /// Accuracy of the averaged model after this round's update.
  double test_acc = 0.0;
  double latency_s = 0.0;
  std::optional<double> h_bar_mc;
  std::optional<double> g_value;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

/// Everything a run needs that is fixed before round 0.
struct Scenario {
  std::vector<Dataset> client_data;
  Dataset test;
  Placement placement;
  SuccessMatrix success;
  ModelLayout layout;
};

inline SplitDataset load_dataset(const ExperimentConfig& cfg) {
  Engine rng = make_stream(cfg.seed, Purpose::dataset);
  switch (cfg.dataset) {
    case DatasetKind::digits8: return digit_images(cfg.train_examples, cfg.test_examples, cfg.digit_noise, rng);
    case DatasetKind::gaussian:
      return synthetic_dataset(cfg.gaussian_dim, cfg.gaussian_classes, cfg.train_examples, cfg.test_examples,
                               cfg.gaussian_separation, rng);
    case DatasetKind::idx: {
      SplitDataset s;
      s.train = load_idx_dataset(cfg.idx_train_images, cfg.idx_train_labels);
      s.test = load_idx_dataset(cfg.idx_test_images, cfg.idx_test_labels, s.train.classes);
      return s;
    }
  }
  throw std::logic_error("unknown dataset kind");
}

inline Scenario build_scenario(const ExperimentConfig& cfg) {
  Scenario sc;
  SplitDataset data = load_dataset(cfg);
  Engine part_rng = make_stream(cfg.seed, Purpose::partition);
  switch (cfg.partitioner) {
    case Partitioner::dirichlet:
      sc.client_data = split_by_partition(data.train, dirichlet_partition(data.train, cfg.clients, cfg.dirichlet_alpha, part_rng));
      sc.test = std::move(data.test);
      break;
    case Partitioner::iid:
      sc.client_data = split_by_partition(data.train, iid_partition(data.train, cfg.clients, part_rng));
      sc.test = std::move(data.test);
      break;
    case Partitioner::rotation:
      sc.client_data = rotation_partition(data.train, cfg.clients);
      sc.test = rotation_union(data.test, cfg.clients);
      break;
  }
  Engine place_rng = make_stream(cfg.seed, Purpose::placement);
  sc.placement = random_placement(cfg.clients, cfg.channel.region_side_m, place_rng, cfg.min_separation_m);
  sc.success = build_success_matrix(sc.placement, cfg.channel);
  sc.layout = ModelLayout{data.train.dim(), cfg.hidden_dim, cfg.rep_dim, data.train.classes};
  return sc;
}

/// Minibatch drawn without replacement from one client's shard.
inline Batch sample_batch(const Dataset& ds, std::size_t batch_size, Engine& rng) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(batch_size, idx.size());
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  Batch b;
  for (std::size_t k = 0; k < take; ++k) {
    b.x.push_back(ds.example(idx[k]));
    b.y.push_back(ds.labels[idx[k]]);
  }
  return b;
}

inline double accuracy(const ModelLayout& layout, std::span<const double> w, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t e = 0; e < ds.size(); ++e)
    if (predict(layout, w, ds.example(e)) == ds.labels[e]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

inline std::vector<double> average_model(const std::vector<std::vector<double>>& w) {
  std::vector<double> avg(w.front().size(), 0.0);
  for (const auto& wi : w)
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += wi[k];
  for (double& v : avg) v /= static_cast<double>(w.size());
  return avg;
}

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::vector<RoundRecord> partial)
      : std::runtime_error(what), records(std::move(partial)) {}
  std::vector<RoundRecord> records;
};

struct TrainingResult {
  std::vector<RoundRecord> records;
  MixingMatrix final_theta = MixingMatrix::identity(1);
  /// Average of the client models after the last round.
  std::vector<double> final_average;
  ModelLayout layout;
  std::size_t topology_updates = 0;
};

inline bool relearn_round(const ExperimentConfig& cfg, std::size_t t) {
  if (t % cfg.exchange_period != 0) return false;
  return t > 0 || cfg.relearn_at_round_zero;
}

inline FwConfig fw_config_for(const ExperimentConfig& cfg) {
  FwConfig fw;
  fw.max_iters = cfg.degree;
  fw.step_rule = cfg.fw_step_rule;
  fw.grid_points = cfg.fw_grid_points;
  fw.tol = cfg.fw_tol;
  return fw;
}

/// Synchronous decentralized training with masked gradient gossip. The
/// topology starts at the identity; ToLRDUL relearns it every K rounds from
/// the clients' representation statistics and the link success matrix.
inline TrainingResult run_training(const ExperimentConfig& cfg, const Scenario& sc) {
  cfg.validate();
  const std::size_t n = cfg.clients;
  const ModelLayout& layout = sc.layout;
  const std::size_t d = layout.param_count();
  const ObjectiveParams obj{cfg.lambda, d, layout.rep_dim};

  Engine init_rng = make_stream(cfg.seed, Purpose::init);
  const ClientModel init = ClientModel::initialize(layout, init_rng);
  std::vector<std::vector<double>> w(n, init.w);

  TrainingResult res;
  res.layout = layout;
  MixingMatrix theta = MixingMatrix::identity(n);
  switch (cfg.method) {
    case Method::tolrdul: break;
    case Method::fully_connected: theta = fully_connected(n); break;
    case Method::random_regular: {
      Engine rng = make_stream(cfg.seed, Purpose::topology);
      theta = random_regular(n, cfg.degree, rng);
      break;
    }
    case Method::stl_fw_like: {
      FwConfig fw = fw_config_for(cfg);
      theta = stl_fw_baseline(label_histograms(sc.client_data, layout.classes), cfg.degree, fw);
      ++res.topology_updates;
      break;
    }
  }

  const double eta = cfg.lr_schedule == LrSchedule::constant
                         ? cfg.learning_rate
                         : cfg.learning_rate / std::sqrt(static_cast<double>(cfg.rounds));

  GradientBundle bundle;
  bundle.grads.resize(n);
  RepStats stats{Matrix(n, layout.rep_dim), Matrix(n, layout.rep_dim)};

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    try {
      double loss_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        Engine batch_rng = make_stream(cfg.seed, Purpose::batch, t, i);
        const Batch batch = sample_batch(sc.client_data[i], cfg.batch_size, batch_rng);
        LocalResult lr = local_gradient(ClientModel{layout, w[i]}, batch, cfg.seed, t, i);
        loss_sum += lr.loss;
        for (std::size_t k = 0; k < layout.rep_dim; ++k) {
          stats.mu(i, k) = lr.mu[k];
          stats.sigma(i, k) = lr.sigma[k];
        }
        bundle.grads[i] = std::move(lr.gradient);
      }
      rec.train_loss = loss_sum / static_cast<double>(n);

      if (cfg.method == Method::tolrdul && relearn_round(cfg, t)) {
        theta = frank_wolfe(MixingMatrix::identity(n), sc.success, stats, obj, fw_config_for(cfg)).theta;
        ++res.topology_updates;
      }

      const FadingDraw fading = sample_fading(n, cfg.seed, t);
      rec.latency_s = round_latency(theta, sc.placement, fading, cfg.channel);

      if (cfg.diag_h_bar_mc) {
        Engine diag = make_stream(cfg.seed, Purpose::diagnostic, t);
        rec.h_bar_mc = h_bar_monte_carlo(theta, sc.success, bundle, cfg.h_bar_samples, diag).estimate;
      }
      if (cfg.diag_g_value) {
        try {
          rec.g_value = g_objective(theta, sc.success, stats, obj);
        } catch (const ZeroDenominatorError&) {
        }
      }

      const MaskSet masks = sample_link_masks(theta, sc.success, d, cfg.seed, t);
      masked_aggregate(w, bundle, theta, masks, eta);

      for (const auto& wi : w)
        for (double v : wi)
          if (!std::isfinite(v)) throw DivergenceError("non-finite model parameters");
      rec.test_acc = accuracy(layout, average_model(w), sc.test);
    } catch (const DivergenceError& e) {
      throw TrainingAborted(std::string("diverged at round ") + std::to_string(t) + ": " + e.what(),
                            std::move(res.records));
    }
    res.records.push_back(rec);
  }
  res.final_theta = theta;
  res.final_average = average_model(w);
  return res;
}

inline TrainingResult run_training(const ExperimentConfig& cfg) { return run_training(cfg, build_scenario(cfg)); }

}  // namespace d2dfl
