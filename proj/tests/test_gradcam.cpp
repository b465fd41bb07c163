#include "test_support.hpp"

#include <json.hpp>

#include "dfmcam/error.hpp"
#include "dfmcam/gradcam.hpp"

using namespace dfmcam;
using namespace testing;

namespace {

NetworkSpec two_conv_spec() {
  NetworkSpec s;
  s.name = "two-conv";
  s.input_channels = {0};
  s.input_size = 5;
  s.layers = {LayerSpec::conv3d(1, 3, 3, 1),          LayerSpec::simple(LayerKind::Relu),
              LayerSpec::conv3d(3, 4, 2, 0),          LayerSpec::simple(LayerKind::Relu),
              LayerSpec::simple(LayerKind::Flatten),  LayerSpec::dense(4 * 64, 6),
              LayerSpec::simple(LayerKind::Relu),     LayerSpec::dense(6, 1),
              LayerSpec::simple(LayerKind::Sigmoid)};
  return s;
}

double logit_from(const Network<double>& net, const Tensor<double>& a, std::size_t boundary) {
  return net.forward_range(a, boundary, net.logit_boundary(), Mode::Inference).data[0];
}

}  // namespace

TEST_CASE("alpha equals the voxel-averaged finite-difference gradient") {
  Network<double> net(two_conv_spec());
  net.initialize(12);
  Rng rng(1);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_tensor<double>({1, 1, 5, 5, 5}, rng, 0, 1);
    const auto trace = net.forward(x, Mode::Inference);
    const std::size_t b = net.last_conv_boundary();
    REQUIRE(b == 4);
    for (Manufacturability c : {Manufacturability::NonManufacturable, Manufacturability::Manufacturable}) {
      const auto alpha = compute_alpha(net, trace, c, b);
      REQUIRE(alpha.size() == 4);
      Tensor<double> a = trace.acts[b];
      const double sign = c == Manufacturability::Manufacturable ? 1.0 : -1.0;
      const std::size_t Z = a.spatial();
      for (int l = 0; l < 4; ++l) {
        double sum = 0.0;
        for (std::size_t i = 0; i < Z; ++i)
          sum += sign * central_difference(a.data, l * Z + i, [&] { return logit_from(net, a, b); }, 1e-6);
        const double fd = sum / double(Z);
        CHECK(std::abs(fd - alpha[l]) <= 1e-4 * std::max(1e-3, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("class scores are opposite logits and alphas flip sign") {
  Network<double> net(two_conv_spec());
  net.initialize(2);
  Rng rng(2);
  const auto x = random_tensor<double>({1, 1, 5, 5, 5}, rng, 0, 1);
  const auto t = net.forward(x, Mode::Inference);
  const double pos = class_score(net, t, Manufacturability::Manufacturable);
  CHECK(class_score(net, t, Manufacturability::NonManufacturable) == -pos);
  CHECK(1.0 / (1.0 + std::exp(-pos)) == doctest::Approx(t.acts.back().data[0]));
  const auto a1 = compute_alpha(net, t, Manufacturability::Manufacturable, 4);
  const auto a0 = compute_alpha(net, t, Manufacturability::NonManufacturable, 4);
  for (std::size_t l = 0; l < a1.size(); ++l) CHECK(a0[l] == -a1[l]);
  CHECK_THROWS_AS(compute_alpha(net, t, Manufacturability::Manufacturable, net.logit_boundary()), ValidationError);
}

TEST_CASE("a head that ignores the features gives zero alpha and a zero map") {
  Network<double> net(two_conv_spec());
  net.initialize(3);
  for (double& w : net.layer(5).parameters()[0]->value) w = 0.0;
  Rng rng(3);
  const SaliencyMap m = explain(net, random_tensor<double>({1, 1, 5, 5, 5}, rng), Manufacturability::NonManufacturable);
  for (double a : m.alpha) CHECK(a == 0.0);
  for (double v : m.raw.values) CHECK(v == 0.0);
  CHECK(std::isfinite(m.class_score));
}

TEST_CASE("global-average-pooled head has closed-form alpha") {
  // conv -> relu -> mean over voxels (dense with weights 1/Z per map) -> sigmoid
  NetworkSpec s;
  s.name = "gap";
  s.input_channels = {0};
  s.input_size = 3;
  s.layers = {LayerSpec::conv3d(1, 2, 1, 0), LayerSpec::simple(LayerKind::Relu), LayerSpec::simple(LayerKind::Flatten),
              LayerSpec::dense(54, 1), LayerSpec::simple(LayerKind::Sigmoid)};
  Network<double> net(s);
  net.initialize(1);
  auto w = net.layer(3).parameters()[0];
  for (int i = 0; i < 54; ++i) w->value[i] = (i < 27 ? 0.7 : -1.3) / 27.0;
  const auto x = Tensor<double>({1, 1, 3, 3, 3}, 0.5);
  const auto alpha = compute_alpha(net, net.forward(x, Mode::Inference), Manufacturability::Manufacturable, 2);
  CHECK(alpha[0] == doctest::Approx(0.7 / 27.0).epsilon(1e-12));
  CHECK(alpha[1] == doctest::Approx(-1.3 / 27.0).epsilon(1e-12));
}

TEST_CASE("map fixtures") {
  Tensor<double> A({1, 2, 2, 2, 2});
  Rng rng(4);
  for (double& v : A.data) v = rng.uniform(0, 2);
  for (double v : compute_map(A, {0.0, 0.0}).values) CHECK(v == 0.0);
  Tensor<double> one({1, 1, 2, 2, 2});
  std::copy(A.data.begin(), A.data.begin() + 8, one.data.begin());
  CHECK(compute_map(one, {1.0}).values == std::vector<double>(one.data.begin(), one.data.end()));
  Tensor<double> same = A;
  std::copy(A.data.begin(), A.data.begin() + 8, same.data.begin() + 8);
  for (double v : compute_map(same, {1.0, -1.0}).values) CHECK(v == 0.0);

  // Dyadic values keep every product and sum exact, whatever the
  // evaluation order or fma contraction.
  Tensor<double> D({1, 2, 2, 2, 2});
  D.data = {0.5, 1.25, 0, 2, 0.75, 1.5, 0.25, 1, 1, 0.5, 0.25, 4, 0, 2.5, 1.75, 0.125};
  const ScalarGrid m = compute_map(D, {0.5, -0.25});
  CHECK(m.values == std::vector<double>{0.0, 0.5, 0.0, 0.0, 0.375, 0.125, 0.0, 0.46875});
  const std::vector<double> alpha{0.8, -0.35};
  const ScalarGrid r = compute_map(A, alpha);
  for (int i = 0; i < 8; ++i)
    CHECK(r.values[i] == doctest::Approx(std::max(0.0, alpha[0] * A.data[i] + alpha[1] * A.data[8 + i])).epsilon(1e-14));
  CHECK_THROWS_AS(compute_map(A, {1.0}), ShapeError);
}

TEST_CASE("scaling the class score scales alpha and keeps the argmax") {
  Network<double> net(two_conv_spec());
  net.initialize(5);
  Rng rng(5);
  const auto x = random_tensor<double>({1, 1, 5, 5, 5}, rng, 0, 1);
  const SaliencyMap base = explain(net, x, Manufacturability::Manufacturable);
  Network<double> scaled = net;
  for (Parameter<double>* p : scaled.layer(7).parameters())
    for (double& v : p->value) v *= 3.0;
  const SaliencyMap big = explain(scaled, x, Manufacturability::Manufacturable);
  for (std::size_t l = 0; l < base.alpha.size(); ++l) CHECK(big.alpha[l] == doctest::Approx(3.0 * base.alpha[l]));
  if (*std::max_element(base.raw.values.begin(), base.raw.values.end()) > 0) CHECK(big.raw.argmax() == base.raw.argmax());
}

TEST_CASE("trilinear upsampling") {
  const ScalarGrid c = upsample_trilinear(ScalarGrid({2, 3, 2}, 1.75), {5, 7, 4});
  for (double v : c.values) CHECK(v == 1.75);

  ScalarGrid corners({2, 2, 2});
  double mean = 0.0;
  for (std::size_t i = 0; i < 8; ++i) mean += corners.values[i] = double(i % 3 == 0);
  CHECK(upsample_trilinear(corners, {3, 3, 3}).at(1, 1, 1) == doctest::Approx(mean / 8.0).epsilon(1e-15));

  ScalarGrid ramp({3, 4, 2});
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 2; ++x) ramp.at(z, y, x) = 1.5 * z - 0.25 * y + 3.0 * x + 0.125;
  const ScalarGrid up = upsample_trilinear(ramp, {9, 10, 11});
  for (int z = 0; z < 9; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 11; ++x) {
        const double sz = z * 2.0 / 8.0, sy = y * 3.0 / 9.0, sx = x * 1.0 / 10.0;
        CHECK(up.at(z, y, x) == doctest::Approx(1.5 * sz - 0.25 * sy + 3.0 * sx + 0.125).epsilon(1e-12));
      }

  // Source centres that land on target voxels are reproduced exactly; the
  // range never leaves [min, max].
  Rng rng(6);
  ScalarGrid r({4, 4, 4});
  for (double& v : r.values) v = rng.uniform(-1, 1);
  const ScalarGrid u = upsample_trilinear(r, {10, 10, 10});
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(u.at(3 * z, 3 * y, 3 * x) == r.at(z, y, x));
  const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
  for (double v : u.values) {
    CHECK(v >= *lo);
    CHECK(v <= *hi);
  }
  // The maximum stays within one coarse voxel of the source maximum.
  const std::size_t am = u.argmax(), rm = r.argmax();
  const int uz = int(am / 100), uy = int(am / 10 % 10), ux = int(am % 10);
  const int rz = int(rm / 16), ry = int(rm / 4 % 4), rx = int(rm % 4);
  CHECK(std::abs(uz / 3.0 - rz) <= 1.0);
  CHECK(std::abs(uy / 3.0 - ry) <= 1.0);
  CHECK(std::abs(ux / 3.0 - rx) <= 1.0);

  const ScalarGrid single = upsample_trilinear(ScalarGrid({1, 2, 2}, 4.0), {3, 2, 2});
  for (double v : single.values) CHECK(v == 4.0);
  CHECK_THROWS_AS(upsample_trilinear(ScalarGrid({3, 3, 3}), {2, 3, 3}), ShapeError);
}

TEST_CASE("explain is deterministic and shaped like the input") {
  Network<float> net(two_conv_spec());
  net.initialize(7);
  Rng rng(7);
  const auto x = random_tensor<float>({1, 1, 5, 5, 5}, rng, 0, 1);
  const SaliencyMap a = explain(net, x, Manufacturability::NonManufacturable);
  const SaliencyMap b = explain(net, x, Manufacturability::NonManufacturable);
  CHECK(a.upsampled.values == b.upsampled.values);
  CHECK(a.upsampled.dims == std::array<int, 3>{5, 5, 5});
  CHECK(a.raw.dims == std::array<int, 3>{4, 4, 4});
  for (double v : a.raw.values) CHECK(v >= 0.0);
  CHECK_THROWS_AS(explain(net, random_tensor<float>({2, 1, 5, 5, 5}, rng), Manufacturability::Manufacturable),
                  ShapeError);

  const VoxelTensor t = saliency_tensor(a, 0.5, "p");
  CHECK(t.shape == std::array<int, 4>{1, 5, 5, 5});
  const auto j = nlohmann::json::parse(saliency_sidecar(a));
  CHECK(j["class"] == "non_manufacturable");
  CHECK(j["alpha"].size() == 4);
  CHECK(j["class_score"].get<double>() == a.class_score);
}
