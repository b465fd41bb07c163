#include "dfmcam/selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "dfmcam/checkpoint.hpp"
#include "dfmcam/error.hpp"
#include "dfmcam/gradcam.hpp"
#include "dfmcam/kernels.hpp"
#include "dfmcam/network.hpp"
#include "dfmcam/optimizer.hpp"
#include "dfmcam/renderer.hpp"
#include "dfmcam/voxelizer.hpp"

namespace dfmcam {

namespace {

template <typename Real>
Tensor<Real> random_tensor(const Shape5& s, Rng& rng) {
  Tensor<Real> t(s);
  for (Real& v : t.data) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
  return t;
}

std::string check_conv_oracle() {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Conv3dGeometry g{1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(10)),
                     1 + static_cast<int>(rng.below(4)), 0};
    g.padding = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.kernel)));
    const int side = g.kernel + static_cast<int>(rng.below(5));
    const auto in = random_tensor<float>({1 + static_cast<int>(rng.below(2)), g.in_channels, side, side + 1, side + 2}, rng);
    std::vector<float> w(static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel * g.kernel);
    std::vector<float> b(static_cast<std::size_t>(g.out_channels));
    for (float& v : w) v = static_cast<float>(rng.uniform(-1, 1));
    for (float& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> fast, ref;
    conv3d_forward<float>(in, w, b, g, fast);
    conv3d_forward_reference<float>(in, w, b, g, ref);
    if (fast.data != ref.data) return "mismatch on trial " + std::to_string(trial);
  }
  return {};
}

std::string check_gradients() {
  NetworkSpec spec;
  spec.name = "selftest";
  spec.input_channels = {0, 1};
  spec.input_size = 6;
  spec.layers = {LayerSpec::conv3d(2, 3, 3, 1), LayerSpec::simple(LayerKind::Relu), LayerSpec::batchnorm(3),
                 LayerSpec::simple(LayerKind::MaxPool3d), LayerSpec::simple(LayerKind::Flatten),
                 LayerSpec::dense(81, 4), LayerSpec::simple(LayerKind::Relu), LayerSpec::dense(4, 1),
                 LayerSpec::simple(LayerKind::Sigmoid)};
  Network<double> net(spec);
  net.initialize(5);
  Rng rng(17);
  const Tensor<double> x = random_tensor<double>({3, 2, 6, 6, 6}, rng);
  const Tensor<double> seed = random_tensor<double>({3, 1, 1, 1, 1}, rng);
  auto objective = [&]() {
    const auto t = net.forward(x, Mode::Training);
    double s = 0.0;
    for (std::size_t i = 0; i < seed.size(); ++i) s += seed.data[i] * t.acts.back().data[i];
    return s;
  };
  net.backward(net.forward(x, Mode::Training), seed);
  double worst = 0.0;
  for (auto& ref : net.parameters()) {
    Parameter<double>& p = *ref.param;
    for (std::size_t k = 0; k < std::min<std::size_t>(p.size(), 6); ++k) {
      const std::size_t i = (k * 7919) % p.size();
      const double h = 1e-5, keep = p.value[i];
      p.value[i] = keep + h;
      const double up = objective();
      p.value[i] = keep - h;
      const double down = objective();
      p.value[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double err = std::abs(fd - p.grad[i]) / std::max(1e-6, std::abs(fd) + std::abs(p.grad[i]));
      worst = std::max(worst, err);
    }
  }
  if (worst > 1e-4) return "max relative error " + std::to_string(worst);
  return {};
}

std::string check_upsample() {
  ScalarGrid raw({2, 2, 2});
  double sum = 0.0;
  for (std::size_t i = 0; i < 8; ++i) sum += raw.values[i] = static_cast<double>((i * 5) % 3);
  const ScalarGrid up = upsample_trilinear(raw, {3, 3, 3});
  if (std::abs(up.at(1, 1, 1) - sum / 8.0) > 1e-15) return "trilinear midpoint is not the corner mean";
  ScalarGrid ramp({3, 4, 5});
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) ramp.at(z, y, x) = 2.0 * z - y + 0.5 * x;
  const ScalarGrid big = upsample_trilinear(ramp, {5, 7, 9});
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) {
        const double expect = 2.0 * (z * 2.0 / 4.0) - y * 3.0 / 6.0 + 0.5 * (x * 4.0 / 8.0);
        if (std::abs(big.at(z, y, x) - expect) > 1e-12) return "linear ramp not reproduced";
      }
  return {};
}

std::string check_renderer() {
  RenderJob job;
  job.occupancy = ScalarGrid({8, 8, 8});
  job.width = job.height = 16;
  job.camera = camera_preset("+z", job.occupancy.dims);
  const Image black = render(job);
  for (auto v : black.rgb)
    if (v != 0) return "empty volume did not render black";
  for (int z = 2; z < 6; ++z)
    for (int y = 2; y < 6; ++y)
      for (int x = 2; x < 6; ++x) job.occupancy.at(z, y, x) = 1.0;
  const Image img = render(job);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const auto at = [&](int yy, int xx) { return img.rgb[(static_cast<std::size_t>(yy) * img.width + xx) * 3 + c]; };
        if (at(y, x) != at(y, img.width - 1 - x) || at(y, x) != at(img.height - 1 - y, x))
          return "centred cube image is not mirror symmetric";
      }
  if (render(job) != img) return "render is not deterministic";
  return {};
}

std::string check_adadelta() {
  NetworkSpec spec;
  spec.name = "selftest";
  spec.input_channels = {0};
  spec.input_size = 1;
  spec.layers = {LayerSpec::simple(LayerKind::Flatten), LayerSpec::dense(1, 1), LayerSpec::simple(LayerKind::Sigmoid)};
  Network<double> net(spec);
  auto params = net.parameters();
  Parameter<double>& w = *params[0].param;
  w.value[0] = 0.25;
  w.grad[0] = 1.0;
  params[1].param->grad[0] = 0.0;
  adadelta_step(net, AdadeltaConfig{});
  const double expect = 0.25 - std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
  if (std::abs(w.value[0] - expect) > 1e-15) return "first step does not match the update rule";
  return {};
}

std::string check_tensor_roundtrip() {
  VoxelTensor t(2, 3, 4, 5);
  Rng rng(3);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-10, 10));
  t.voxel_size = 0.123;
  t.part_id = "roundtrip";
  t.label = 1;
  if (!(decode_tensor(encode_tensor(t)) == t)) return "tensor container does not round-trip";
  return {};
}

std::string check_checkpoint_file(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  for (const Parameter<float>* p : ck.network.parameters())
    for (float v : p->value)
      if (!std::isfinite(v)) return "non-finite parameter in " + p->name;
  Tensor<float> probe({1, static_cast<int>(ck.network.spec().input_channels.size()), ck.network.spec().input_size,
                       ck.network.spec().input_size, ck.network.spec().input_size});
  const auto y = ck.network.forward_range(probe, 0, ck.network.num_layers(), Mode::Inference);
  if (!(y.data[0] > 0.0f && y.data[0] < 1.0f)) return "output outside (0, 1)";
  return {};
}

}  // namespace

std::vector<CheckResult> run_selftest(const std::optional<std::filesystem::path>& checkpoint) {
  std::vector<std::pair<std::string, std::function<std::string()>>> checks{
      {"conv_oracle", check_conv_oracle},       {"gradient_check", check_gradients},
      {"trilinear_fixtures", check_upsample},   {"renderer_fixtures", check_renderer},
      {"adadelta_rule", check_adadelta},        {"tensor_roundtrip", check_tensor_roundtrip},
  };
  if (checkpoint) checks.emplace_back("checkpoint_integrity", [p = *checkpoint] { return check_checkpoint_file(p); });

  std::vector<CheckResult> out;
  for (auto& [name, fn] : checks) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = fn();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dfmcam
