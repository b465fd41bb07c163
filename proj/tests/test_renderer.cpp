#include <doctest.h>

#include <cmath>

#include "dfmcam/error.hpp"
#include "dfmcam/parallel.hpp"
#include "dfmcam/random.hpp"
#include "dfmcam/renderer.hpp"

using namespace dfmcam;

namespace {

ScalarGrid cube_volume(int n, int lo, int hi) {
  ScalarGrid g({n, n, n});
  for (int z = lo; z < hi; ++z)
    for (int y = lo; y < hi; ++y)
      for (int x = lo; x < hi; ++x) g.at(z, y, x) = 1.0;
  return g;
}

RenderJob job_for(const ScalarGrid& occ, const std::string& view, int px = 32) {
  RenderJob j;
  j.occupancy = occ;
  j.width = j.height = px;
  j.camera = camera_preset(view, occ.dims);
  return j;
}

}  // namespace

TEST_CASE("ray-box intersection") {
  const Box unit{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const auto hit = ray_box_intersect({-2, 0, 0}, {1, 0, 0}, unit);
  REQUIRE(hit);
  CHECK(hit->first == 1.5);
  CHECK(hit->second == 2.5);
  CHECK_FALSE(ray_box_intersect({-2, 0, 0}, {0, 1, 0}, unit));
  CHECK_FALSE(ray_box_intersect({-2, 0, 0}, {-1, 0, 0}, unit));
  const auto inside = ray_box_intersect({0.1, 0, 0}, {0, 0, 1}, unit);
  REQUIRE(inside);
  CHECK(inside->first == 0.0);
  CHECK(inside->second == 0.5);
}

TEST_CASE("march sums constant fields by sample count") {
  RenderJob j;
  j.occupancy = ScalarGrid({6, 6, 6}, 2.0);
  j.occupancy_weight = 0.5;
  for (double step : {0.5, 0.7, 1.0, 2.5}) {
    j.step = step;
    const double s = march(j, {0, 0, -20}, {0, 0, 1});
    CHECK(s == doctest::Approx(1.0 * (std::floor(6.0 / step) + 1)));
  }
  CHECK(march(j, {0, 20, -20}, {0, 0, 1}) == 0.0);
  RenderJob empty;
  empty.occupancy = ScalarGrid({4, 4, 4});
  CHECK(march(empty, {0.3, 0.2, -9}, {0, 0, 1}) == 0.0);
}

TEST_CASE("march on a linear ramp matches fine quadrature") {
  RenderJob j;
  j.occupancy = ScalarGrid({8, 8, 8});
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) j.occupancy.at(z, y, x) = 0.1 * x + 0.05 * y - 0.02 * z + 1.0;
  j.occupancy_weight = 1.0;
  j.step = 0.5;
  const Vec3 o{-12, -3, -7};
  const Vec3 d = normalized({1, 0.2, 0.5});
  const auto hit = ray_box_intersect(o, d, volume_box(j.occupancy.dims));
  REQUIRE(hit);
  const double coarse = march(j, o, d) * j.step;
  double fine = 0.0;
  const double h = 1e-4;
  for (double t = hit->first; t <= hit->second; t += h) fine += sample_trilinear(j.occupancy, o + t * d) * h;
  const double grad = std::sqrt(0.1 * 0.1 + 0.05 * 0.05 + 0.02 * 0.02);
  const double maxf = 0.1 * 7 + 0.05 * 7 + 1.0;
  CHECK(std::abs(coarse - fine) <= 2 * j.step * grad * (hit->second - hit->first) + j.step * maxf);
}

TEST_CASE("march is additive in the field") {
  Rng rng(1);
  RenderJob a, b, ab;
  a.occupancy = ScalarGrid({5, 6, 7});
  b.occupancy = a.occupancy;
  for (double& v : a.occupancy.values) v = rng.uniform(0, 1);
  for (double& v : b.occupancy.values) v = rng.uniform(0, 1);
  ab.occupancy = a.occupancy;
  for (std::size_t i = 0; i < ab.occupancy.size(); ++i) ab.occupancy.values[i] += b.occupancy.values[i];
  for (RenderJob* j : {&a, &b, &ab}) j->occupancy_weight = 1.0;
  for (int i = 0; i < 50; ++i) {
    const Vec3 o{rng.uniform(-20, 20), rng.uniform(-20, 20), -25};
    const Vec3 d = normalized(Vec3{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1} - 0.0 * o);
    CHECK(march(ab, o, d) == doctest::Approx(march(a, o, d) + march(b, o, d)).epsilon(1e-12));
  }
}

TEST_CASE("empty volume renders black") {
  const Image img = render(job_for(ScalarGrid({8, 8, 8}), "iso"));
  for (auto v : img.rgb) CHECK(v == 0);
}

TEST_CASE("centred cube renders mirror-symmetric on every axis view") {
  const ScalarGrid occ = cube_volume(12, 3, 9);
  for (const std::string view : {"+x", "-x", "+y", "-y", "+z", "-z"}) {
    const Image img = render(job_for(occ, view, 33));
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const auto at = [&](int yy, int xx) { return img.rgb[(std::size_t(yy) * img.width + xx) * 3 + c]; };
          CHECK(at(y, x) == at(y, img.width - 1 - x));
          CHECK(at(y, x) == at(img.height - 1 - y, x));
        }
  }
}

TEST_CASE("rendering is byte-identical across runs and thread counts") {
  Rng rng(2);
  RenderJob j = job_for(cube_volume(10, 2, 8), "iso", 40);
  j.saliency = ScalarGrid({10, 10, 10});
  for (double& v : j.saliency.values) v = rng.uniform(0, 1);
  set_thread_count(1);
  const std::string one = encode_ppm(render(j));
  set_thread_count(4);
  const std::string four = encode_ppm(render(j));
  set_thread_count(0);
  CHECK(one == four);
  CHECK(encode_ppm(render(j)) == one);
}

TEST_CASE("hottest pixel looks at the saliency peak") {
  RenderJob j = job_for(cube_volume(16, 2, 14), "+z", 48);
  j.saliency = ScalarGrid({16, 16, 16});
  const int pz = 8, py = 4, px = 11;
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const double r2 = (z - pz) * (z - pz) + (y - py) * (y - py) + (x - px) * (x - px);
        j.saliency.at(z, y, x) = std::exp(-r2 / 2.0);
      }
  j.occupancy_weight = 0.05;
  const std::vector<double> sums = render_sums(j);
  const std::size_t best = std::size_t(std::max_element(sums.begin(), sums.end()) - sums.begin());
  const int bx = int(best % j.width), by = int(best / j.width);
  const Vec3 dir = pixel_direction(j.camera, j.width, j.height, bx, by);
  // Peak centre in model space (volume centred on the origin).
  const Vec3 peak{px + 0.5 - 8, py + 0.5 - 8, pz + 0.5 - 8};
  const Vec3 rel = peak - j.camera.position;
  const double dist = norm(rel - dot(rel, dir) * dir);
  CHECK(dist <= 2.0);
}

TEST_CASE("halving the step barely changes a smooth render") {
  RenderJob j = job_for(ScalarGrid({10, 10, 10}), "iso", 24);
  for (int z = 0; z < 10; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) j.occupancy.at(z, y, x) = 1.0 + 0.05 * (x + y + z);
  const auto a = render_sums(j);
  j.step *= 0.5;
  const auto b = render_sums(j);
  const double ma = *std::max_element(a.begin(), a.end()), mb = *std::max_element(b.begin(), b.end());
  CHECK(mb / ma == doctest::Approx(2.0).epsilon(0.05));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] / ma - b[i] / mb) < 0.02);
}

TEST_CASE("colormaps") {
  CHECK(apply_colormap(Colormap::Heat, 0.0) == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK(apply_colormap(Colormap::Heat, 1.0) == std::array<std::uint8_t, 3>{255, 255, 0});
  CHECK(apply_colormap(Colormap::Grey, 1.0) == std::array<std::uint8_t, 3>{255, 255, 255});
  CHECK(apply_colormap(Colormap::Grey, 0.5)[0] == apply_colormap(Colormap::Grey, 0.5)[2]);
  const auto mid = apply_colormap(Colormap::Heat, 0.5);
  CHECK(mid[0] > mid[1]);
  CHECK(colormap_from_string("grey") == Colormap::Grey);
  CHECK_THROWS_AS(colormap_from_string("jet"), ValidationError);
}

TEST_CASE("invalid jobs and ppm layout") {
  RenderJob j = job_for(ScalarGrid({4, 4, 4}), "+z");
  j.step = 0;
  CHECK_THROWS_AS(validate(j), ValidationError);
  j = job_for(ScalarGrid({4, 4, 4}), "+z");
  j.camera.position = {0, 0, 1};
  CHECK_THROWS_AS(validate(j), ValidationError);
  j = job_for(ScalarGrid({4, 4, 4}), "+z");
  j.saliency = ScalarGrid({4, 4, 5});
  CHECK_THROWS_AS(validate(j), ShapeError);
  CHECK_THROWS_AS(camera_preset("top", {4, 4, 4}), ValidationError);
  CHECK(camera_preset_names().size() == 7);

  Image img;
  img.width = 2;
  img.height = 1;
  img.rgb = {1, 2, 3, 4, 5, 6};
  CHECK(encode_ppm(img) == std::string("P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06", 17));
}
