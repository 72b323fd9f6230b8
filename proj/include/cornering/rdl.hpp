#pragma once

// Regression baseline: a BiLSTM sequence regressor trained on simulated
// trajectories labelled with the stiffness pair that generated them.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cornering/dynamics.hpp"
#include "cornering/error.hpp"
#include "cornering/estimate.hpp"
#include "cornering/nn/adam.hpp"
#include "cornering/nn/networks.hpp"
#include "cornering/pidl.hpp"

namespace cornering {

struct Maneuver {
  double amplitude = 0.1;     // rad
  double frequency_hz = 0.5;  // Hz
  double v_x = 1.2;           // m/s
  double dt = 0.01;           // s
  double duration = 10.0;     // s

  SteeringSchedule schedule() const {
    return sine_steer(amplitude, frequency_hz);
  }
};

struct DatasetConfig {
  int grid_min = 1;
  int grid_max = 19;
  Maneuver maneuver;
  std::optional<NoiseModel> noise;  // none: noiseless training data
  std::size_t smoothing_window = 5;
};

struct LabeledItem {
  Trajectory trajectory;  // with derived signals
  double caf = 0.0;
  double car = 0.0;
};

struct LabeledDataset {
  DatasetConfig config;
  std::vector<LabeledItem> items;
};

/// Error raised while generating one grid cell.
class GridItemError : public Error {
 public:
  GridItemError(const std::string& what, int caf, int car)
      : Error(what), caf_(caf), car_(car) {}
  int caf() const { return caf_; }
  int car() const { return car_; }

 private:
  int caf_;
  int car_;
};

/// Simulates the maneuver for every integer stiffness pair of the grid,
/// passes it through the sensor model and re-derives the signals. Items are
/// ordered with C_af as the outer index.
inline LabeledDataset generate_grid_dataset(const VehicleParams& p,
                                            const DatasetConfig& cfg) {
  if (cfg.grid_min < 1 || cfg.grid_max < cfg.grid_min) {
    throw InvalidParameter("invalid stiffness grid bounds");
  }
  LabeledDataset ds;
  ds.config = cfg;
  const SteeringSchedule steer = cfg.maneuver.schedule();
  std::uint64_t item_index = 0;
  for (int f = cfg.grid_min; f <= cfg.grid_max; ++f) {
    for (int r = cfg.grid_min; r <= cfg.grid_max; ++r, ++item_index) {
      try {
        const Trajectory clean =
            simulate(p, f, r, steer, cfg.maneuver.v_x, cfg.maneuver.dt,
                     cfg.maneuver.duration);
        NoiseModel nm = NoiseModel::none();
        if (cfg.noise) {
          nm = *cfg.noise;
          nm.seed = cfg.noise->seed + item_index;
        }
        ds.items.push_back(
            {derive_signals(synthesize_sensors(clean, nm), cfg.smoothing_window),
             static_cast<double>(f), static_cast<double>(r)});
      } catch (const Error& e) {
        throw GridItemError("grid item (" + std::to_string(f) + ", " +
                                std::to_string(r) + "): " + e.what(),
                            f, r);
      }
    }
  }
  return ds;
}

struct RdlConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double lr = 0.001;
  double decay = 0.0005;
  std::size_t stride = 10;  // time subsampling of the input sequence
  Eigen::Index lstm_hidden = 20;
  Eigen::Index head_hidden = 20;
  std::array<double, 2> z_mean{10.0, 10.0};
  double z_range = 0.9;
  std::uint64_t seed = 0;
};

struct RdlModel {
  nn::SequenceRegressor network;
  Standardization standardization;
  std::size_t stride = 10;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

namespace detail {

inline constexpr double kFeatureClip = 5.0;

/// Standardized, clipped and subsampled features as a (7 x T) matrix.
inline nn::Matrix sequence_features(const Trajectory& traj,
                                    const Standardization& s,
                                    std::size_t stride) {
  const nn::Matrix z =
      s.apply(raw_features(traj)).cwiseMax(-kFeatureClip).cwiseMin(kFeatureClip);
  const Eigen::Index steps = (z.rows() - 1) / static_cast<Eigen::Index>(stride) + 1;
  nn::Matrix out(7, steps);
  for (Eigen::Index k = 0; k < steps; ++k) {
    out.col(k) = z.row(k * static_cast<Eigen::Index>(stride)).transpose();
  }
  return out;
}

inline nn::Sequence batch_sequence(const std::vector<const nn::Matrix*>& items) {
  const Eigen::Index steps = items.front()->cols();
  nn::Sequence xs(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    nn::Matrix& m = xs[static_cast<std::size_t>(t)];
    m.resize(7, static_cast<Eigen::Index>(items.size()));
    for (std::size_t b = 0; b < items.size(); ++b) {
      if (items[b]->cols() != steps) {
        throw ShapeMismatch("batched sequences must share a length");
      }
      m.col(static_cast<Eigen::Index>(b)) = items[b]->col(t);
    }
  }
  return xs;
}

}  // namespace detail

/// Minimizes the mean squared label error with Adam over shuffled
/// mini-batches. The loss curve holds the mean batch loss of each epoch.
inline RdlModel train_rdl(const LabeledDataset& ds, const RdlConfig& cfg) {
  if (ds.items.empty()) throw InsufficientData("dataset is empty");
  if (cfg.batch_size == 0 || cfg.stride == 0) {
    throw InvalidParameter("batch size and stride must be positive");
  }
  nn::Matrix all;
  {
    std::vector<nn::Matrix> raws;
    Eigen::Index rows = 0;
    for (const auto& it : ds.items) {
      raws.push_back(raw_features(it.trajectory));
      rows += raws.back().rows();
    }
    all.resize(rows, 7);
    Eigen::Index at = 0;
    for (const auto& r : raws) {
      all.middleRows(at, r.rows()) = r;
      at += r.rows();
    }
  }
  nn::SequenceRegressorConfig nc;
  nc.inputs = 7;
  nc.lstm_hidden = cfg.lstm_hidden;
  nc.head_hidden = cfg.head_hidden;
  nc.outputs = 2;
  nc.bounded.z_mean = Eigen::Vector2d(cfg.z_mean[0], cfg.z_mean[1]);
  nc.bounded.z_range = cfg.z_range;
  nc.seed = cfg.seed;
  RdlModel model{nn::SequenceRegressor(nc), Standardization::fit_robust(all),
                 cfg.stride, {}};

  std::vector<nn::Matrix> inputs;
  inputs.reserve(ds.items.size());
  for (const auto& it : ds.items) {
    inputs.push_back(detail::sequence_features(
        it.trajectory, model.standardization, cfg.stride));
  }

  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.decay = cfg.decay;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(ds.items.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<const nn::Matrix*> batch;
      nn::Matrix target(2, static_cast<Eigen::Index>(end - start));
      for (std::size_t k = start; k < end; ++k) {
        const auto& item = ds.items[order[k]];
        batch.push_back(&inputs[order[k]]);
        target(0, static_cast<Eigen::Index>(k - start)) = item.caf;
        target(1, static_cast<Eigen::Index>(k - start)) = item.car;
      }
      const nn::Matrix pred =
          model.network.forward(detail::batch_sequence(batch));
      const nn::Matrix diff = pred - target;
      const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
      if (!std::isfinite(loss)) {
        throw TrainingFailure(
            "regression training diverged in epoch " + std::to_string(epoch),
            epoch);
      }
      model.network.backward(2.0 / static_cast<double>(diff.size()) * diff);
      nn::adam_step(model.network.params(), adam);
      epoch_loss += loss;
      ++batches;
    }
    model.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  return model;
}

/// Single deterministic forward pass on a trajectory with derived signals.
inline StiffnessEstimate predict_rdl(RdlModel& model, const Trajectory& traj) {
  const nn::Matrix x = detail::sequence_features(traj, model.standardization,
                                                 model.stride);
  const nn::Matrix z = model.network.forward(detail::batch_sequence({&x}));
  StiffnessEstimate est;
  est.caf = z(0, 0);
  est.car = z(1, 0);
  est.method = Method::kRdl;
  est.loss_curve = model.loss_curve;
  return est;
}

}  // namespace cornering
