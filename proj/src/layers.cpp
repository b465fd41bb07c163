#include "dfmcam/layers.hpp"

#include <array>
#include <cmath>

#include "dfmcam/error.hpp"

namespace dfmcam {

namespace {

constexpr std::array<std::string_view, 7> kKindNames{"conv3d",  "relu",  "batchnorm", "maxpool3d",
                                                     "flatten", "dense", "sigmoid"};

template <typename Real>
void fill_uniform(std::vector<Real>& v, Rng& rng, double limit) {
  for (Real& x : v) x = static_cast<Real>(rng.uniform(-limit, limit));
}

template <typename Real>
class Conv3dLayer final : public Layer<Real> {
 public:
  explicit Conv3dLayer(const LayerSpec& s)
      : spec_(s),
        geom_{s.in_channels, s.out_channels, s.kernel, s.padding},
        weight_("weight", static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel * s.kernel),
        bias_("bias", static_cast<std::size_t>(s.out_channels)) {
    conv3d_output_shape({1, s.in_channels, s.kernel, s.kernel, s.kernel}, geom_);
  }

  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override { return conv3d_output_shape(in, geom_); }

  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache&, Mode) const override {
    conv3d_forward<Real>(in, weight_.value, bias_.value, geom_, out);
  }

  void backward(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache&, const Tensor<Real>& grad_out,
                Tensor<Real>* grad_in) override {
    conv3d_backward<Real>(in, weight_.value, grad_out, geom_, grad_in, weight_.grad, bias_.grad);
  }
  void backward_input(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache&, const Tensor<Real>& grad_out,
                      Tensor<Real>& grad_in) const override {
    conv3d_backward<Real>(in, weight_.value, grad_out, geom_, &grad_in, {}, {});
  }

  std::vector<Parameter<Real>*> parameters() override { return {&weight_, &bias_}; }

  void initialize(Rng& rng) override {
    const double fan_in = static_cast<double>(geom_.in_channels) * geom_.kernel * geom_.kernel * geom_.kernel;
    fill_uniform(weight_.value, rng, std::sqrt(6.0 / fan_in));
    std::fill(bias_.value.begin(), bias_.value.end(), Real(0));
  }

 private:
  LayerSpec spec_;
  Conv3dGeometry geom_;
  Parameter<Real> weight_, bias_;
};

template <typename Real>
class ReluLayer final : public Layer<Real> {
 public:
  explicit ReluLayer(const LayerSpec& s) : spec_(s) {}
  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override { return in; }
  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache&, Mode) const override { relu_forward(in, out); }
  void backward_input(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache&, const Tensor<Real>& grad_out,
                      Tensor<Real>& grad_in) const override {
    relu_backward(in, grad_out, grad_in);
  }

 private:
  LayerSpec spec_;
};

template <typename Real>
class BatchNormLayer final : public Layer<Real> {
 public:
  explicit BatchNormLayer(const LayerSpec& s)
      : spec_(s),
        gamma_("gamma", static_cast<std::size_t>(s.channels)),
        beta_("beta", static_cast<std::size_t>(s.channels)),
        running_mean_(static_cast<std::size_t>(s.channels), Real(0)),
        running_var_(static_cast<std::size_t>(s.channels), Real(1)) {
    if (s.channels < 1) throw ShapeError("batchnorm: channel count must be positive");
    if (!(s.eps > 0.0)) throw ValidationError("batchnorm: eps must be positive");
    std::fill(gamma_.value.begin(), gamma_.value.end(), Real(1));
  }

  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override {
    if (in[1] != spec_.channels)
      throw ShapeError("batchnorm: expects " + std::to_string(spec_.channels) + " channels, got " + to_string(in));
    return in;
  }

  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache& cache, Mode mode) const override {
    output_shape(in.shape);
    cache.used_batch_stats = mode == Mode::Training;
    batchnorm_forward<Real>(in, gamma_.value, beta_.value, running_mean_, running_var_, spec_.eps,
                            cache.used_batch_stats, out, cache.bn);
  }

  void update_running(const LayerCache& cache) override {
    if (cache.used_batch_stats) batchnorm_update_running<Real>(cache.bn, spec_.momentum, running_mean_, running_var_);
  }

  void backward(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache& cache, const Tensor<Real>& grad_out,
                Tensor<Real>* grad_in) override {
    batchnorm_backward<Real>(in, gamma_.value, cache.bn, cache.used_batch_stats, grad_out, grad_in, gamma_.grad,
                             beta_.grad);
  }
  void backward_input(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache& cache,
                      const Tensor<Real>& grad_out, Tensor<Real>& grad_in) const override {
    batchnorm_backward<Real>(in, gamma_.value, cache.bn, cache.used_batch_stats, grad_out, &grad_in, {}, {});
  }

  std::vector<Parameter<Real>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::vector<Real>*> buffers() override { return {&running_mean_, &running_var_}; }

  void initialize(Rng&) override {
    std::fill(gamma_.value.begin(), gamma_.value.end(), Real(1));
    std::fill(beta_.value.begin(), beta_.value.end(), Real(0));
    std::fill(running_mean_.begin(), running_mean_.end(), Real(0));
    std::fill(running_var_.begin(), running_var_.end(), Real(1));
  }

 private:
  LayerSpec spec_;
  Parameter<Real> gamma_, beta_;
  std::vector<Real> running_mean_, running_var_;
};

template <typename Real>
class MaxPoolLayer final : public Layer<Real> {
 public:
  explicit MaxPoolLayer(const LayerSpec& s) : spec_(s) {}
  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override {
    const Shape5 out{in[0], in[1], in[2] / 2, in[3] / 2, in[4] / 2};
    if (out[2] < 1 || out[3] < 1 || out[4] < 1) throw ShapeError("maxpool3d: input too small " + to_string(in));
    return out;
  }
  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache& cache, Mode) const override {
    maxpool3d_forward(in, out, cache.argmax);
  }
  void backward_input(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache& cache,
                      const Tensor<Real>& grad_out, Tensor<Real>& grad_in) const override {
    maxpool3d_backward(grad_out, cache.argmax, in.shape, grad_in);
  }

 private:
  LayerSpec spec_;
};

template <typename Real>
class FlattenLayer final : public Layer<Real> {
 public:
  explicit FlattenLayer(const LayerSpec& s) : spec_(s) {}
  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override {
    return {in[0], static_cast<int>(static_cast<std::size_t>(in[1]) * in[2] * in[3] * in[4]), 1, 1, 1};
  }
  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache&, Mode) const override {
    out.shape = output_shape(in.shape);
    out.data = in.data;
  }
  void backward_input(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache&, const Tensor<Real>& grad_out,
                      Tensor<Real>& grad_in) const override {
    grad_in.shape = in.shape;
    grad_in.data = grad_out.data;
  }

 private:
  LayerSpec spec_;
};

template <typename Real>
class DenseLayer final : public Layer<Real> {
 public:
  explicit DenseLayer(const LayerSpec& s)
      : spec_(s),
        weight_("weight", static_cast<std::size_t>(s.in_dim) * s.out_dim),
        bias_("bias", static_cast<std::size_t>(s.out_dim)) {
    if (s.in_dim < 1 || s.out_dim < 1) throw ShapeError("dense: dimensions must be positive");
  }

  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override {
    const std::size_t f = static_cast<std::size_t>(in[1]) * in[2] * in[3] * in[4];
    if (f != static_cast<std::size_t>(spec_.in_dim))
      throw ShapeError("dense: expects " + std::to_string(spec_.in_dim) + " inputs, got " + to_string(in));
    return {in[0], spec_.out_dim, 1, 1, 1};
  }
  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache&, Mode) const override {
    output_shape(in.shape);
    dense_forward<Real>(in, weight_.value, bias_.value, spec_.out_dim, out);
  }
  void backward(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache&, const Tensor<Real>& grad_out,
                Tensor<Real>* grad_in) override {
    dense_backward<Real>(in, weight_.value, grad_out, grad_in, weight_.grad, bias_.grad);
  }
  void backward_input(const Tensor<Real>& in, const Tensor<Real>&, const LayerCache&, const Tensor<Real>& grad_out,
                      Tensor<Real>& grad_in) const override {
    dense_backward<Real>(in, weight_.value, grad_out, &grad_in, {}, {});
  }
  std::vector<Parameter<Real>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override {
    fill_uniform(weight_.value, rng, std::sqrt(6.0 / spec_.in_dim));
    std::fill(bias_.value.begin(), bias_.value.end(), Real(0));
  }

 private:
  LayerSpec spec_;
  Parameter<Real> weight_, bias_;
};

template <typename Real>
class SigmoidLayer final : public Layer<Real> {
 public:
  explicit SigmoidLayer(const LayerSpec& s) : spec_(s) {}
  const LayerSpec& spec() const override { return spec_; }
  Shape5 output_shape(const Shape5& in) const override { return in; }
  void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache&, Mode) const override {
    sigmoid_forward(in, out);
  }
  void backward_input(const Tensor<Real>&, const Tensor<Real>& out, const LayerCache&, const Tensor<Real>& grad_out,
                      Tensor<Real>& grad_in) const override {
    sigmoid_backward(out, grad_out, grad_in);
  }

 private:
  LayerSpec spec_;
};

}  // namespace

std::string_view to_string(LayerKind k) { return kKindNames[static_cast<int>(k)]; }

LayerKind layer_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<LayerKind>(i);
  throw ValidationError("unknown layer kind '" + std::string(s) + "'");
}

template <typename Real>
std::unique_ptr<Layer<Real>> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv3d: return std::make_unique<Conv3dLayer<Real>>(spec);
    case LayerKind::Relu: return std::make_unique<ReluLayer<Real>>(spec);
    case LayerKind::BatchNorm: return std::make_unique<BatchNormLayer<Real>>(spec);
    case LayerKind::MaxPool3d: return std::make_unique<MaxPoolLayer<Real>>(spec);
    case LayerKind::Flatten: return std::make_unique<FlattenLayer<Real>>(spec);
    case LayerKind::Dense: return std::make_unique<DenseLayer<Real>>(spec);
    case LayerKind::Sigmoid: return std::make_unique<SigmoidLayer<Real>>(spec);
  }
  throw ValidationError("unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

}  // namespace dfmcam
