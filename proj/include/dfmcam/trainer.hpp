#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dfmcam/network.hpp"
#include "dfmcam/optimizer.hpp"
#include "dfmcam/voxelizer.hpp"

namespace dfmcam {

/// Lossless in-memory form of a voxel tensor: binary channels as bytes,
/// other channels as sparse (index, value) lists.
class CompactVoxels {
 public:
  CompactVoxels() = default;
  explicit CompactVoxels(const VoxelTensor& t);

  int channels() const { return static_cast<int>(channels_.size()); }
  int side() const { return side_; }
  /// Writes channel c into dst (side^3 values).
  template <typename Real>
  void expand_channel(int c, Real* dst) const;
  VoxelTensor expand() const;

 private:
  struct Channel {
    bool binary = true;
    std::vector<std::uint8_t> bits;
    std::vector<std::uint32_t> index;
    std::vector<float> value;
  };
  std::vector<Channel> channels_;
  int side_ = 0;
  double voxel_size_ = 1.0;
};

struct Sample {
  std::string id;
  int label = 0;  // 1 manufacturable, 0 not
  CompactVoxels voxels;
};

struct SampleSet {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  void add(const VoxelTensor& t);
};

/// Builds the network input batch for the listed samples and their labels.
template <typename Real>
void fill_batch(const SampleSet& set, const std::vector<std::size_t>& indices, const NetworkSpec& spec,
                Tensor<Real>& batch, std::vector<int>& labels);

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 1;
  // Full-rate ADADELTA kills the wide dense layer's ReLUs within a few steps.
  AdadeltaConfig optimizer{.learning_rate = 0.05};
  std::filesystem::path metrics_path;  // JSON line per epoch when set
  double max_seconds = 0.0;            // wall-clock guard, 0 = none
};

void validate(const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

std::string metrics_to_json(const EpochMetrics& m);

struct TrainResult {
  Network<float> best;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochMetrics> history;
  bool early_stopped = false;
  bool hit_time_limit = false;
};

/// Mini-batch ADADELTA on the mean binary cross-entropy. Deterministic in
/// (spec, data, config). Validation after each epoch; stops once the best
/// validation loss has not improved by more than min_delta for `patience`
/// consecutive epochs and returns the best-validation network. An empty
/// validation set monitors the training loss instead.
TrainResult train(const NetworkSpec& spec, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// One optimisation step on a batch; returns the mean clamped BCE.
double train_step(Network<float>& net, const Tensor<float>& batch, const std::vector<int>& labels,
                  const AdadeltaConfig& opt);

/// Sigmoid outputs in inference mode, in sample order.
std::vector<double> predict(const Network<float>& net, const SampleSet& set, int batch_size = 64);

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const { return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0; }
};

/// Positive class = manufacturable (label 1).
Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth);

struct Evaluation {
  Confusion counts;
  double mean_loss = 0.0;
  std::vector<double> probabilities;
};

Evaluation evaluate(const Network<float>& net, const SampleSet& set, int batch_size = 64);

inline int predicted_label(double probability) { return probability >= 0.5 ? 1 : 0; }

}  // namespace dfmcam
