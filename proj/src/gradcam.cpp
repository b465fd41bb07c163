#include "dfmcam/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "dfmcam/error.hpp"

namespace dfmcam {

namespace {

double score_sign(Manufacturability target) {
  return target == Manufacturability::Manufacturable ? 1.0 : -1.0;
}

}  // namespace

template <typename Real>
double class_score(const Network<Real>& net, const ForwardTrace<Real>& trace, Manufacturability target) {
  return score_sign(target) * static_cast<double>(trace.acts.at(net.logit_boundary()).data.at(0));
}

template <typename Real>
std::vector<double> compute_alpha(const Network<Real>& net, const ForwardTrace<Real>& trace,
                                  Manufacturability target, std::size_t boundary) {
  const std::size_t lb = net.logit_boundary();
  if (boundary >= lb) throw ValidationError("grad-cam: feature boundary must lie below the logit");
  const Tensor<Real>& A = trace.acts.at(boundary);
  if (A.n() != 1) throw ShapeError("grad-cam: expects a single-sample trace");
  Tensor<Real> seed(trace.acts[lb].shape);
  seed.data[0] = static_cast<Real>(score_sign(target));
  const Tensor<Real> g = net.backprop(trace, seed, lb, boundary);
  const std::size_t Z = A.spatial();
  std::vector<double> alpha(static_cast<std::size_t>(A.c()), 0.0);
  for (int l = 0; l < A.c(); ++l) {
    const Real* gl = g.data.data() + l * Z;
    double s = 0.0;
    for (std::size_t i = 0; i < Z; ++i) s += gl[i];
    alpha[l] = s / static_cast<double>(Z);
  }
  return alpha;
}

template <typename Real>
ScalarGrid compute_map(const Tensor<Real>& features, const std::vector<double>& alpha) {
  if (features.n() < 1) throw ShapeError("grad-cam: empty feature tensor");
  if (alpha.size() != static_cast<std::size_t>(features.c()))
    throw ShapeError("grad-cam: alpha length " + std::to_string(alpha.size()) + " != feature maps " +
                     std::to_string(features.c()));
  ScalarGrid m({features.d(), features.h(), features.w()});
  const std::size_t Z = features.spatial();
  for (std::size_t i = 0; i < Z; ++i) {
    double s = 0.0;
    for (int l = 0; l < features.c(); ++l) s += alpha[l] * static_cast<double>(features.data[l * Z + i]);
    m.values[i] = s > 0.0 ? s : 0.0;
  }
  return m;
}

ScalarGrid upsample_trilinear(const ScalarGrid& raw, std::array<int, 3> target) {
  for (int a = 0; a < 3; ++a) {
    if (raw.dims[a] < 1) throw ShapeError("upsample: empty source grid");
    if (target[a] < raw.dims[a]) throw ShapeError("upsample: target smaller than source");
  }
  // Per axis: lower source index and fractional weight, from exact integer
  // ratios so mapped source centres reproduce their values.
  std::array<std::vector<int>, 3> lo;
  std::array<std::vector<double>, 3> fr;
  for (int a = 0; a < 3; ++a) {
    const long S = raw.dims[a], T = target[a];
    lo[a].resize(T);
    fr[a].resize(T);
    for (long i = 0; i < T; ++i) {
      if (S == 1 || T == 1) {
        lo[a][i] = 0;
        fr[a][i] = 0.0;
        continue;
      }
      const long num = i * (S - 1), den = T - 1;
      long i0 = num / den;
      double f = static_cast<double>(num % den) / static_cast<double>(den);
      if (i0 >= S - 1) {
        i0 = S - 1;
        f = 0.0;
      }
      lo[a][i] = static_cast<int>(i0);
      fr[a][i] = f;
    }
  }
  ScalarGrid out(target);
  auto hi = [&](int a, int i0) { return std::min(i0 + 1, raw.dims[a] - 1); };
  for (int z = 0; z < target[0]; ++z)
    for (int y = 0; y < target[1]; ++y)
      for (int x = 0; x < target[2]; ++x) {
        const int z0 = lo[0][z], y0 = lo[1][y], x0 = lo[2][x];
        const int z1 = hi(0, z0), y1 = hi(1, y0), x1 = hi(2, x0);
        const double fz = fr[0][z], fy = fr[1][y], fx = fr[2][x];
        auto lerp = [](double a, double b, double t) {
          if (t == 0.0) return a;
          return std::clamp(a + (b - a) * t, std::min(a, b), std::max(a, b));
        };
        const double c00 = lerp(raw.at(z0, y0, x0), raw.at(z0, y0, x1), fx);
        const double c01 = lerp(raw.at(z0, y1, x0), raw.at(z0, y1, x1), fx);
        const double c10 = lerp(raw.at(z1, y0, x0), raw.at(z1, y0, x1), fx);
        const double c11 = lerp(raw.at(z1, y1, x0), raw.at(z1, y1, x1), fx);
        out.at(z, y, x) = lerp(lerp(c00, c01, fy), lerp(c10, c11, fy), fz);
      }
  return out;
}

template <typename Real>
SaliencyMap explain(const Network<Real>& net, const Tensor<Real>& input, Manufacturability target,
                    std::optional<std::size_t> boundary) {
  if (input.n() != 1) throw ShapeError("explain: expects a single input, got batch " + to_string(input.shape));
  const ForwardTrace<Real> trace = net.forward(input, Mode::Inference);
  SaliencyMap m;
  m.target = target;
  m.boundary = boundary ? *boundary : net.last_conv_boundary();
  m.class_score = class_score(net, trace, target);
  m.probability = static_cast<double>(trace.acts.back().data[0]);
  m.alpha = compute_alpha(net, trace, target, m.boundary);
  m.raw = compute_map(trace.acts[m.boundary], m.alpha);
  m.upsampled = upsample_trilinear(m.raw, {input.d(), input.h(), input.w()});
  return m;
}

VoxelTensor saliency_tensor(const SaliencyMap& map, double voxel_size, const std::string& part_id) {
  const auto& d = map.upsampled.dims;
  VoxelTensor t(1, d[0], d[1], d[2]);
  for (std::size_t i = 0; i < map.upsampled.size(); ++i) t.data[i] = static_cast<float>(map.upsampled.values[i]);
  t.voxel_size = voxel_size;
  t.part_id = part_id;
  t.label = static_cast<std::uint8_t>(map.probability >= 0.5 ? 1 : 0);
  return t;
}

std::string saliency_sidecar(const SaliencyMap& map) {
  nlohmann::json j;
  j["class"] = std::string(to_string(map.target));
  j["class_score"] = map.class_score;
  j["probability_manufacturable"] = map.probability;
  j["predicted_label"] = std::string(to_string(map.probability >= 0.5 ? Manufacturability::Manufacturable
                                                                      : Manufacturability::NonManufacturable));
  j["feature_boundary"] = map.boundary;
  j["alpha"] = map.alpha;
  j["raw_dims"] = map.raw.dims;
  j["upsampled_dims"] = map.upsampled.dims;
  const std::size_t am = map.upsampled.argmax();
  const int W = map.upsampled.dims[2], H = map.upsampled.dims[1];
  j["argmax_zyx"] = {static_cast<int>(am / (static_cast<std::size_t>(W) * H)), static_cast<int>((am / W) % H),
                     static_cast<int>(am % W)};
  return j.dump(2);
}

#define DFMCAM_INSTANTIATE(R)                                                                             \
  template double class_score<R>(const Network<R>&, const ForwardTrace<R>&, Manufacturability);          \
  template std::vector<double> compute_alpha<R>(const Network<R>&, const ForwardTrace<R>&, Manufacturability, \
                                                std::size_t);                                            \
  template ScalarGrid compute_map<R>(const Tensor<R>&, const std::vector<double>&);                      \
  template SaliencyMap explain<R>(const Network<R>&, const Tensor<R>&, Manufacturability,               \
                                  std::optional<std::size_t>);

DFMCAM_INSTANTIATE(float)
DFMCAM_INSTANTIATE(double)

#undef DFMCAM_INSTANTIATE

}  // namespace dfmcam
