#include "test_support.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/checkpoint.hpp"
#include "dfmcam/error.hpp"
#include "dfmcam/trainer.hpp"

using namespace dfmcam;
using namespace testing;

namespace {

NetworkSpec toy_spec() {
  NetworkSpec s;
  s.name = "toy";
  s.input_channels = {0};
  s.input_size = 4;
  s.layers = {LayerSpec::conv3d(1, 4, 2, 0),         LayerSpec::simple(LayerKind::Relu),
              LayerSpec::batchnorm(4),                LayerSpec::simple(LayerKind::MaxPool3d),
              LayerSpec::simple(LayerKind::Flatten), LayerSpec::dense(4, 8),
              LayerSpec::simple(LayerKind::Relu),    LayerSpec::dense(8, 1),
              LayerSpec::simple(LayerKind::Sigmoid)};
  return s;
}

VoxelTensor cube_sample(const std::string& id, int label, int lo, int hi) {
  VoxelTensor t(1, 4, 4, 4);
  t.part_id = id;
  t.label = static_cast<std::uint8_t>(label);
  for (int z = lo; z < hi; ++z)
    for (int y = lo; y < hi; ++y)
      for (int x = lo; x < hi; ++x) t.at(0, z, y, x) = 1.0f;
  return t;
}

SampleSet separable_pair() {
  SampleSet s;
  s.add(cube_sample("full", 1, 0, 4));
  s.add(cube_sample("corner", 0, 0, 2));
  return s;
}

}  // namespace

TEST_CASE("a separable pair is learned") {
  const SampleSet data = separable_pair();
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.seed = seed;
    cfg.optimizer.learning_rate = 1.0;  // narrow net, full ADADELTA steps are safe
    const TrainResult r = train(toy_spec(), data, {}, cfg);
    REQUIRE(r.history.size() == 200);
    CHECK(r.history.back().train_loss < 0.05);
    const Evaluation ev = evaluate(r.best, data);
    CHECK(ev.counts.tp == 1);
    CHECK(ev.counts.tn == 1);
  }
}

TEST_CASE("training is deterministic in the seed") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.max_epochs = 5;
  SampleSet data = separable_pair();
  data.add(cube_sample("inner", 1, 1, 3));
  data.add(cube_sample("speck", 0, 0, 1));
  const TrainResult a = train(toy_spec(), data, data, cfg), b = train(toy_spec(), data, data, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].train_loss == b.history[i].train_loss);
  CHECK(encode_checkpoint(a.best, {}) == encode_checkpoint(b.best, {}));
  cfg.seed = 2;
  CHECK(encode_checkpoint(train(toy_spec(), data, data, cfg).best, {}) != encode_checkpoint(a.best, {}));
}

TEST_CASE("early stopping keeps the best validation network") {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.max_epochs = 50;
  cfg.patience = 3;
  cfg.min_delta = 1e9;  // nothing counts as an improvement
  const auto dir = scratch_dir("trainer");
  cfg.metrics_path = dir / "m.jsonl";
  const SampleSet data = separable_pair();
  const TrainResult r = train(toy_spec(), data, data, cfg);
  CHECK(r.early_stopped);
  // The first epoch always improves on an infinite reference.
  CHECK(r.history.size() == 4);
  double best = 1e9;
  int best_epoch = 0;
  for (const EpochMetrics& m : r.history)
    if (m.val_loss < best) best = m.val_loss, best_epoch = m.epoch;
  CHECK(r.best_epoch == best_epoch);
  CHECK(evaluate(r.best, data).mean_loss == doctest::Approx(best).epsilon(1e-12));

  std::ifstream f(cfg.metrics_path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == ++lines);
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_loss"));
    CHECK(j.contains("val_accuracy"));
  }
  CHECK(lines == 4);
}

TEST_CASE("invalid training input") {
  TrainConfig cfg;
  SampleSet one;
  one.add(cube_sample("a", 1, 0, 2));
  CHECK_THROWS_AS(train(toy_spec(), one, {}, cfg), ValidationError);
  CHECK_THROWS_AS(train(toy_spec(), {}, {}, cfg), ValidationError);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(toy_spec(), separable_pair(), {}, cfg), ValidationError);
  VoxelTensor big(1, 5, 5, 5);
  big.label = 1;
  SampleSet wrong = separable_pair();
  wrong.add(big);
  CHECK_THROWS_AS(train(toy_spec(), wrong, {}, TrainConfig{}), ShapeError);
  VoxelTensor unlabeled(1, 4, 4, 4);
  unlabeled.label = 255;
  CHECK_THROWS_AS(wrong.add(unlabeled), ValidationError);
}

TEST_CASE("confusion counts") {
  const Confusion c = confusion({1, 1, 0, 0, 1}, {1, 0, 0, 1, 1});
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.tn == 1);
  CHECK(c.fn == 1);
  CHECK(c.accuracy() == doctest::Approx(0.6));
  CHECK(predicted_label(0.5) == 1);
  CHECK(predicted_label(0.4999) == 0);
  CHECK_THROWS_AS(confusion({1}, {1, 0}), ValidationError);
}

TEST_CASE("compact voxels expand to the original tensor") {
  Rng rng(4);
  VoxelTensor t(4, 5, 5, 5);
  for (std::size_t i = 0; i < t.channel_stride(); ++i) t.data[i] = rng.bernoulli(0.3) ? 1.0f : 0.0f;
  for (std::size_t i = t.channel_stride(); i < t.data.size(); ++i)
    t.data[i] = rng.bernoulli(0.1) ? static_cast<float>(rng.uniform(-1, 1)) : 0.0f;
  t.data[t.channel_stride() + 3] = -0.0f;
  const VoxelTensor back = CompactVoxels(t).expand();
  CHECK(back.shape == t.shape);
  CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  Network<float> net(toy_spec());
  net.initialize(9);
  Rng rng(9);
  // Move accumulators and running statistics off their initial values.
  Tensor<float> batch = random_tensor<float>({3, 1, 4, 4, 4}, rng, 0, 1);
  train_step(net, batch, {1, 0, 1}, AdadeltaConfig{});
  CheckpointMeta meta;
  meta.seed = 77;
  meta.epoch = 4;
  meta.val_loss = 0.1234567890123;
  GridSpec g;
  g.resolution = 6;
  g.padding = 1;
  meta.grid = g;
  const std::string bytes = encode_checkpoint(net, meta);
  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(ck.network, ck.meta) == bytes);
  CHECK(ck.meta.seed == 77);
  CHECK(ck.meta.val_loss == meta.val_loss);
  REQUIRE(ck.meta.grid);
  CHECK(ck.meta.grid->resolution == 6);
  CHECK(ck.network.spec() == net.spec());
  const Tensor<float> y0 = net.forward(batch, Mode::Inference).acts.back();
  const Tensor<float> y1 = ck.network.forward(batch, Mode::Inference).acts.back();
  CHECK(y0.data == y1.data);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 1;
  CHECK_THROWS_AS(decode_checkpoint(flipped), IoError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 10)), IoError);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", net, meta);
  CHECK(binio::read_file(dir / "a.ckpt") == bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
}
