#include "dfmcam/network.hpp"

#include <array>

#include <json.hpp>

#include "dfmcam/error.hpp"

namespace dfmcam {

using nlohmann::json;

NetworkSpec make_preset(std::string_view name, const PresetOptions& opt) {
  NetworkSpec s;
  s.name = std::string(name);
  std::array<int, 3> kernels;
  if (name == "inouts-842") {
    s.input_channels = {0};
    kernels = {8, 4, 2};
  } else if (name == "normals-632") {
    s.input_channels = {0, 1, 2, 3};
    kernels = {6, 3, 2};
  } else {
    throw ValidationError("unknown network preset '" + std::string(name) + "'");
  }
  if (opt.channels.size() != 3) throw ValidationError("preset needs exactly three conv channel counts");
  if (opt.dense_width < 1) throw ValidationError("dense width must be positive");
  s.input_size = opt.input_size;

  int in = static_cast<int>(s.input_channels.size());
  for (int i = 0; i < 3; ++i) {
    const int out = opt.channels[i];
    s.layers.push_back(LayerSpec::conv3d(in, out, kernels[i], kernels[i] / 2));
    s.layers.push_back(LayerSpec::simple(LayerKind::Relu));
    s.layers.push_back(LayerSpec::batchnorm(out));
    if (i != 1) s.layers.push_back(LayerSpec::simple(LayerKind::MaxPool3d));
    in = out;
  }
  s.layers.push_back(LayerSpec::simple(LayerKind::Flatten));

  // Dense input width follows from the conv chain.
  Shape5 cur{1, static_cast<int>(s.input_channels.size()), s.input_size, s.input_size, s.input_size};
  for (const LayerSpec& l : s.layers) cur = make_layer<float>(l)->output_shape(cur);
  const int flat = cur[1];
  s.layers.push_back(LayerSpec::dense(flat, opt.dense_width));
  s.layers.push_back(LayerSpec::simple(LayerKind::Relu));
  s.layers.push_back(LayerSpec::dense(opt.dense_width, 1));
  s.layers.push_back(LayerSpec::simple(LayerKind::Sigmoid));
  validate(s);
  return s;
}

std::vector<std::string> preset_names() { return {"inouts-842", "normals-632"}; }

std::vector<Shape5> activation_shapes(const NetworkSpec& spec, int n) {
  if (spec.input_channels.empty()) throw ShapeError("network: no input channels selected");
  for (int c : spec.input_channels)
    if (c < 0 || c > 3) throw ShapeError("network: input channel " + std::to_string(c) + " out of range");
  if (spec.input_size < 1) throw ShapeError("network: input size must be positive");
  if (spec.layers.empty()) throw ShapeError("network: no layers");
  std::vector<Shape5> shapes;
  shapes.push_back({n, static_cast<int>(spec.input_channels.size()), spec.input_size, spec.input_size,
                    spec.input_size});
  for (const LayerSpec& l : spec.layers) shapes.push_back(make_layer<float>(l)->output_shape(shapes.back()));
  const Shape5& last = shapes.back();
  if (spec.layers.back().kind != LayerKind::Sigmoid || last[1] != 1 || last[2] != 1 || last[3] != 1 || last[4] != 1)
    throw ShapeError("network: chain must end in a single sigmoid output, got " + to_string(last));
  return shapes;
}

void validate(const NetworkSpec& spec) { activation_shapes(spec, 1); }

namespace {

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = std::string(to_string(l.kind));
  switch (l.kind) {
    case LayerKind::Conv3d:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["padding"] = l.padding;
      break;
    case LayerKind::BatchNorm:
      j["channels"] = l.channels;
      j["eps"] = l.eps;
      j["momentum"] = l.momentum;
      break;
    case LayerKind::Dense:
      j["in_dim"] = l.in_dim;
      j["out_dim"] = l.out_dim;
      break;
    default: break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const LayerKind kind = layer_kind_from_string(j.at("kind").get<std::string>());
  switch (kind) {
    case LayerKind::Conv3d:
      return LayerSpec::conv3d(j.at("in_channels"), j.at("out_channels"), j.at("kernel"), j.at("padding"));
    case LayerKind::BatchNorm: return LayerSpec::batchnorm(j.at("channels"), j.at("eps"), j.at("momentum"));
    case LayerKind::Dense: return LayerSpec::dense(j.at("in_dim"), j.at("out_dim"));
    default: return LayerSpec::simple(kind);
  }
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["input_channels"] = spec.input_channels;
  j["input_size"] = spec.input_size;
  j["layers"] = json::array();
  for (const LayerSpec& l : spec.layers) j["layers"].push_back(layer_to_json(l));
  return j.dump();
}

NetworkSpec spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    NetworkSpec s;
    s.name = j.at("name").get<std::string>();
    s.input_channels = j.at("input_channels").get<std::vector<int>>();
    s.input_size = j.at("input_size").get<int>();
    for (const json& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("network spec: ") + e.what());
  }
}

template <typename Real>
Network<Real>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  for (const LayerSpec& l : spec_.layers) layers_.push_back(make_layer<Real>(l));
}

template <typename Real>
Network<Real>::Network(const Network& other) : Network(other.spec_) {
  *this = other;
}

template <typename Real>
Network<Real>& Network<Real>::operator=(const Network& other) {
  if (this == &other) return *this;
  if (!(spec_ == other.spec_)) *this = Network(other.spec_);
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].param = *src[i];
  auto db = buffers();
  auto sb = other.buffers();
  for (std::size_t i = 0; i < db.size(); ++i) *db[i] = *sb[i];
  return *this;
}

template <typename Real>
void Network<Real>::initialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Rng rng = Rng::derive({seed, 0x1A7E5ull, i});
    layers_[i]->initialize(rng);
    for (Parameter<Real>* p : layers_[i]->parameters()) {
      std::fill(p->grad.begin(), p->grad.end(), Real(0));
      std::fill(p->acc_grad_sq.begin(), p->acc_grad_sq.end(), Real(0));
      std::fill(p->acc_delta_sq.begin(), p->acc_delta_sq.end(), Real(0));
    }
  }
}

template <typename Real>
ForwardTrace<Real> Network<Real>::forward(const Tensor<Real>& input, Mode mode) const {
  const Shape5 expect{input.n(), static_cast<int>(spec_.input_channels.size()), spec_.input_size, spec_.input_size,
                      spec_.input_size};
  if (input.shape != expect)
    throw ShapeError("network: input " + to_string(input.shape) + " does not match expected " + to_string(expect));
  if (input.n() < 1) throw ShapeError("network: empty batch");
  ForwardTrace<Real> t;
  t.mode = mode;
  t.acts.resize(layers_.size() + 1);
  t.caches.resize(layers_.size());
  t.acts[0] = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->forward(t.acts[i], t.acts[i + 1], t.caches[i], mode);
  return t;
}

template <typename Real>
Tensor<Real> Network<Real>::forward_range(const Tensor<Real>& act, std::size_t from, std::size_t to, Mode mode) const {
  if (from > to || to > layers_.size()) throw ValidationError("network: invalid layer range");
  Tensor<Real> cur = act, next;
  LayerCache cache;
  for (std::size_t i = from; i < to; ++i) {
    layers_[i]->forward(cur, next, cache, mode);
    std::swap(cur, next);
  }
  return cur;
}

template <typename Real>
void Network<Real>::update_running(const ForwardTrace<Real>& trace) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->update_running(trace.caches[i]);
}

template <typename Real>
void Network<Real>::backward(const ForwardTrace<Real>& trace, const Tensor<Real>& grad, std::size_t from) {
  if (trace.acts.size() != layers_.size() + 1) throw ValidationError("network: trace does not match network");
  if (from > layers_.size()) throw ValidationError("network: invalid backward boundary");
  if (grad.shape != trace.acts[from].shape) throw ShapeError("network: gradient shape mismatch at boundary");
  for (std::size_t i = from; i < layers_.size(); ++i)
    for (Parameter<Real>* p : layers_[i]->parameters()) std::fill(p->grad.begin(), p->grad.end(), Real(0));
  Tensor<Real> g = grad, gin;
  for (std::size_t i = from; i-- > 0;) {
    const bool need_input = i > 0;
    layers_[i]->backward(trace.acts[i], trace.acts[i + 1], trace.caches[i], g, need_input ? &gin : nullptr);
    if (need_input) std::swap(g, gin);
  }
}

template <typename Real>
Tensor<Real> Network<Real>::backprop(const ForwardTrace<Real>& trace, const Tensor<Real>& grad, std::size_t from,
                                     std::size_t to) const {
  if (trace.acts.size() != layers_.size() + 1) throw ValidationError("network: trace does not match network");
  if (to > from || from > layers_.size()) throw ValidationError("network: invalid backprop range");
  if (grad.shape != trace.acts[from].shape) throw ShapeError("network: gradient shape mismatch at boundary");
  Tensor<Real> g = grad, gin;
  for (std::size_t i = from; i-- > to;) {
    layers_[i]->backward_input(trace.acts[i], trace.acts[i + 1], trace.caches[i], g, gin);
    std::swap(g, gin);
  }
  return g;
}

template <typename Real>
std::size_t Network<Real>::last_conv_boundary() const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (spec_.layers[i].kind != LayerKind::Conv3d) continue;
    std::size_t b = i + 1;
    if (b < layers_.size() && spec_.layers[b].kind == LayerKind::Relu) ++b;
    return b;
  }
  throw ValidationError("network has no convolution layer");
}

template <typename Real>
std::size_t Network<Real>::logit_boundary() const {
  return layers_.size() - 1;
}

template <typename Real>
std::vector<typename Network<Real>::ParamRef> Network<Real>::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Parameter<Real>* p : layers_[i]->parameters()) out.push_back({i, p});
  return out;
}

template <typename Real>
std::vector<const Parameter<Real>*> Network<Real>::parameters() const {
  std::vector<const Parameter<Real>*> out;
  for (const auto& l : layers_)
    for (Parameter<Real>* p : const_cast<Layer<Real>&>(*l).parameters()) out.push_back(p);
  return out;
}

template <typename Real>
std::vector<std::vector<Real>*> Network<Real>::buffers() {
  std::vector<std::vector<Real>*> out;
  for (auto& l : layers_)
    for (std::vector<Real>* b : l->buffers()) out.push_back(b);
  return out;
}

template <typename Real>
std::vector<const std::vector<Real>*> Network<Real>::buffers() const {
  std::vector<const std::vector<Real>*> out;
  for (const auto& l : layers_)
    for (std::vector<Real>* b : const_cast<Layer<Real>&>(*l).buffers()) out.push_back(b);
  return out;
}

template <typename Real>
std::size_t Network<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter<Real>* p : parameters()) n += p->size();
  return n;
}

template <typename Real>
template <typename To>
Network<To> Network<Real>::cast() const {
  Network<To> out(spec_);
  auto dst = out.parameters();
  auto src = parameters();
  auto conv = [](const std::vector<Real>& v) { return std::vector<To>(v.begin(), v.end()); };
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].param->value = conv(src[i]->value);
    dst[i].param->grad = conv(src[i]->grad);
    dst[i].param->acc_grad_sq = conv(src[i]->acc_grad_sq);
    dst[i].param->acc_delta_sq = conv(src[i]->acc_delta_sq);
  }
  auto db = out.buffers();
  auto sb = buffers();
  for (std::size_t i = 0; i < sb.size(); ++i) *db[i] = conv(*sb[i]);
  return out;
}

template <typename Real>
void gather_channels(const float* voxels, int channels, int spatial_side, const std::vector<int>& select,
                     Tensor<Real>& batch, int n) {
  const std::size_t S = static_cast<std::size_t>(spatial_side) * spatial_side * spatial_side;
  if (batch.spatial() != S || batch.c() != static_cast<int>(select.size()) || n < 0 || n >= batch.n())
    throw ShapeError("gather: batch tensor " + to_string(batch.shape) + " does not fit sample");
  Real* dst = batch.sample(n);
  for (std::size_t j = 0; j < select.size(); ++j) {
    if (select[j] < 0 || select[j] >= channels) throw ShapeError("gather: channel out of range");
    const float* src = voxels + static_cast<std::size_t>(select[j]) * S;
    for (std::size_t i = 0; i < S; ++i) dst[j * S + i] = static_cast<Real>(src[i]);
  }
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;
template void gather_channels<float>(const float*, int, int, const std::vector<int>&, Tensor<float>&, int);
template void gather_channels<double>(const float*, int, int, const std::vector<int>&, Tensor<double>&, int);

}  // namespace dfmcam
