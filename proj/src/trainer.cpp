#include "dfmcam/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "dfmcam/error.hpp"

namespace dfmcam {

CompactVoxels::CompactVoxels(const VoxelTensor& t) : side_(t.depth()), voxel_size_(t.voxel_size) {
  if (t.depth() != t.height() || t.depth() != t.width()) throw ShapeError("samples must be cubic grids");
  const std::size_t S = t.channel_stride();
  for (int c = 0; c < t.channels(); ++c) {
    Channel ch;
    const float* src = t.data.data() + c * S;
    ch.binary = std::all_of(src, src + S, [](float v) { return v == 0.0f || v == 1.0f; });
    if (ch.binary) {
      ch.bits.resize(S);
      for (std::size_t i = 0; i < S; ++i) ch.bits[i] = src[i] != 0.0f;
    } else {
      for (std::size_t i = 0; i < S; ++i)
        if (src[i] != 0.0f || std::signbit(src[i])) {
          ch.index.push_back(static_cast<std::uint32_t>(i));
          ch.value.push_back(src[i]);
        }
    }
    channels_.push_back(std::move(ch));
  }
}

template <typename Real>
void CompactVoxels::expand_channel(int c, Real* dst) const {
  const Channel& ch = channels_.at(static_cast<std::size_t>(c));
  const std::size_t S = static_cast<std::size_t>(side_) * side_ * side_;
  if (ch.binary) {
    for (std::size_t i = 0; i < S; ++i) dst[i] = ch.bits[i] ? Real(1) : Real(0);
  } else {
    std::fill(dst, dst + S, Real(0));
    for (std::size_t j = 0; j < ch.index.size(); ++j) dst[ch.index[j]] = static_cast<Real>(ch.value[j]);
  }
}

VoxelTensor CompactVoxels::expand() const {
  VoxelTensor t(channels(), side_, side_, side_);
  t.voxel_size = voxel_size_;
  for (int c = 0; c < channels(); ++c) expand_channel(c, t.data.data() + c * t.channel_stride());
  return t;
}

void SampleSet::add(const VoxelTensor& t) {
  if (t.label > 1) throw ValidationError("sample '" + t.part_id + "' has no label");
  samples.push_back({t.part_id, t.label, CompactVoxels(t)});
}

template <typename Real>
void fill_batch(const SampleSet& set, const std::vector<std::size_t>& indices, const NetworkSpec& spec,
                Tensor<Real>& batch, std::vector<int>& labels) {
  const int n = static_cast<int>(indices.size());
  const int C = static_cast<int>(spec.input_channels.size());
  const int s = spec.input_size;
  batch.reset({n, C, s, s, s});
  labels.resize(indices.size());
  const std::size_t S = batch.spatial();
  for (int i = 0; i < n; ++i) {
    const Sample& smp = set.samples.at(indices[i]);
    if (smp.voxels.side() != s)
      throw ShapeError("sample '" + smp.id + "' has side " + std::to_string(smp.voxels.side()) +
                       ", network expects " + std::to_string(s));
    for (int j = 0; j < C; ++j) {
      const int src = spec.input_channels[j];
      if (src >= smp.voxels.channels())
        throw ShapeError("sample '" + smp.id + "' lacks input channel " + std::to_string(src));
      smp.voxels.expand_channel(src, batch.sample(i) + j * S);
    }
    labels[i] = smp.label;
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ValidationError("batch size must be positive");
  if (cfg.max_epochs < 1) throw ValidationError("max epochs must be positive");
  if (cfg.patience < 1) throw ValidationError("patience must be positive");
  if (!(cfg.min_delta >= 0.0)) throw ValidationError("min_delta must be nonnegative");
  if (!(cfg.max_seconds >= 0.0)) throw ValidationError("max_seconds must be nonnegative");
  validate(cfg.optimizer);
}

std::string metrics_to_json(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["val_loss"] = m.val_loss;
  j["val_accuracy"] = m.val_accuracy;
  return j.dump();
}

double train_step(Network<float>& net, const Tensor<float>& batch, const std::vector<int>& labels,
                  const AdadeltaConfig& opt) {
  const ForwardTrace<float> trace = net.forward(batch, Mode::Training);
  const Tensor<float>& y = trace.acts.back();
  const int n = batch.n();
  const std::size_t lb = net.logit_boundary();
  Tensor<float> grad(trace.acts[lb].shape);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    loss += bce_loss(y.data[i], labels[i]).loss;
    // Sigmoid and cross-entropy combined: d loss / d logit = y - t.
    grad.data[i] = static_cast<float>((static_cast<double>(y.data[i]) - labels[i]) / n);
  }
  loss /= n;
  if (!std::isfinite(loss)) throw NumericError("training diverged: non-finite loss");
  net.backward(trace, grad, lb);
  net.update_running(trace);
  adadelta_step(net, opt);
  return loss;
}

std::vector<double> predict(const Network<float>& net, const SampleSet& set, int batch_size) {
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  std::vector<double> out;
  out.reserve(set.size());
  Tensor<float> batch;
  std::vector<int> labels;
  for (std::size_t b = 0; b < set.size(); b += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx(std::min<std::size_t>(batch_size, set.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    fill_batch(set, idx, net.spec(), batch, labels);
    const Tensor<float> y = net.forward_range(batch, 0, net.num_layers(), Mode::Inference);
    for (float v : y.data) out.push_back(v);
  }
  return out;
}

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw ValidationError("confusion: prediction and label counts differ");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

Evaluation evaluate(const Network<float>& net, const SampleSet& set, int batch_size) {
  if (set.empty()) throw ValidationError("evaluate: empty split");
  Evaluation e;
  e.probabilities = predict(net, set, batch_size);
  std::vector<int> pred, truth;
  for (std::size_t i = 0; i < set.size(); ++i) {
    pred.push_back(predicted_label(e.probabilities[i]));
    truth.push_back(set.samples[i].label);
    e.mean_loss += bce_loss(e.probabilities[i], set.samples[i].label).loss;
  }
  e.mean_loss /= static_cast<double>(set.size());
  e.counts = confusion(pred, truth);
  return e;
}

TrainResult train(const NetworkSpec& spec, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
  validate(cfg);
  validate(spec);
  if (train_set.empty()) throw ValidationError("train: empty training set");
  bool has[2] = {false, false};
  for (const Sample& s : train_set.samples) has[s.label == 1] = true;
  if (!has[0] || !has[1]) throw ValidationError("train: training set needs both labels");

  Network<float> net(spec);
  net.initialize(cfg.seed);
  TrainResult result{net, 0, std::numeric_limits<double>::infinity(), {}, false, false};

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    if (cfg.metrics_path.has_parent_path()) std::filesystem::create_directories(cfg.metrics_path.parent_path());
    metrics.open(cfg.metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics file " + cfg.metrics_path.string());
  }

  const auto start = std::chrono::steady_clock::now();
  double reference = std::numeric_limits<double>::infinity();
  int stale = 0;
  std::vector<std::size_t> order(train_set.size());
  Tensor<float> batch;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derive({cfg.seed, 0x5u, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + b, order.begin() + e);
      fill_batch(train_set, idx, spec, batch, labels);
      try {
        loss_sum += train_step(net, batch, labels, cfg.optimizer) * static_cast<double>(idx.size());
      } catch (const NumericError& err) {
        throw NumericError("epoch " + std::to_string(epoch) + ": " + err.what());
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    const Evaluation ev = evaluate(net, val_set.empty() ? train_set : val_set, cfg.batch_size);
    m.val_loss = ev.mean_loss;
    m.val_accuracy = ev.counts.accuracy();
    if (!std::isfinite(m.val_loss)) throw NumericError("epoch " + std::to_string(epoch) + ": non-finite validation loss");
    const auto now = std::chrono::steady_clock::now();
    m.seconds = std::chrono::duration<double>(now - epoch_start).count();
    result.history.push_back(m);
    if (metrics) metrics << metrics_to_json(m) << '\n' << std::flush;
    if (on_epoch) on_epoch(m);

    if (m.val_loss < result.best_val_loss) {
      result.best_val_loss = m.val_loss;
      result.best_epoch = epoch;
      result.best = net;
    }
    if (m.val_loss < reference - cfg.min_delta) {
      reference = m.val_loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
    if (cfg.max_seconds > 0.0) {
      const double elapsed = std::chrono::duration<double>(now - start).count();
      if (elapsed + m.seconds > cfg.max_seconds) {
        result.hit_time_limit = true;
        break;
      }
    }
  }
  return result;
}

template void CompactVoxels::expand_channel<float>(int, float*) const;
template void CompactVoxels::expand_channel<double>(int, double*) const;
template void fill_batch<float>(const SampleSet&, const std::vector<std::size_t>&, const NetworkSpec&,
                                Tensor<float>&, std::vector<int>&);
template void fill_batch<double>(const SampleSet&, const std::vector<std::size_t>&, const NetworkSpec&,
                                 Tensor<double>&, std::vector<int>&);

}  // namespace dfmcam
