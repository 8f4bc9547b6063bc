#pragma once

#include "image.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace synomaly {

/// U-shaped denoiser layout. `channels[l]` is the width at resolution level l
/// (level l works at 1/2^l of the input size). An empty channel list gives a
/// single linear convolution, handy for checking gradients in closed form.
struct Architecture
{
  std::vector<int> channels{16, 32, 64};
  int kernel = 3;
  int embed_dim = 32;
  int bottleneck_convs = 2;

  int levels() const { return static_cast<int>(channels.size()); }
  void validate() const;

  static Architecture desk() { return {}; }
  static Architecture tiny() { return {{2, 2}, 3, 8, 1}; }
  static Architecture linear() { return {{}, 3, 0, 0}; }

  std::map<std::string, std::string> describe() const;
  static Architecture parse(std::map<std::string, std::string> const &kv);
  bool operator==(Architecture const &) const = default;
};

namespace detail {
struct NetGraph;
}

template <typename Scalar> using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar> struct Parameter
{
  std::string name;
  std::vector<int> shape;
  Vector<Scalar> value;
};

template <typename Scalar> using ParameterSet = std::vector<Parameter<Scalar>>;

template <typename Scalar> ParameterSet<Scalar> zeros_like(ParameterSet<Scalar> const &params)
{
  ParameterSet<Scalar> out = params;
  for (auto &p : out) {
    p.value.setZero();
  }
  return out;
}

std::size_t parameter_count(ParameterSet<float> const &params);
std::size_t parameter_count(ParameterSet<double> const &params);

/// Sinusoidal timestep features: sin(t w_k) then cos(t w_k), w_k = 10000^(-k/half).
template <typename Scalar> Vector<Scalar> timestep_embedding(int t, int dim)
{
  Vector<Scalar> e(dim);
  int const half = dim / 2;
  for (int k = 0; k < half; ++k) {
    double const freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
    e(k) = static_cast<Scalar>(std::sin(t * freq));
    e(k + half) = static_cast<Scalar>(std::cos(t * freq));
  }
  if (dim % 2 == 1) {
    e(dim - 1) = Scalar(0);
  }
  return e;
}

/// One training example: the corrupted input, its step and the regression target.
template <typename Scalar> struct Example
{
  Image<Scalar> x_t;
  int t = 0;
  Image<Scalar> eps_target;
};

template <typename Scalar> struct LossAndGrad
{
  double loss = 0.0;
  ParameterSet<Scalar> grads;
};

/// The noise predictor eps_theta(x_t, t).
template <typename Scalar> class Denoiser
{
public:
  Denoiser() = default;
  Denoiser(Architecture arch, ParameterSet<Scalar> params);

  Architecture const &arch() const { return arch_; }
  ParameterSet<Scalar> const &params() const { return params_; }
  ParameterSet<Scalar> &params() { return params_; }

  Image<Scalar> forward(Image<Scalar> const &x_t, int t) const;
  std::vector<Image<Scalar>> forward(std::span<Image<Scalar> const> x_t, std::span<int const> t) const;

  /// Mean squared error over batch and pixels, with its exact gradient.
  LossAndGrad<Scalar> loss_and_grad(std::span<Example<Scalar> const> batch) const;

  Image<Scalar> operator()(Image<Scalar> const &x_t, int t) const { return forward(x_t, t); }

  template <typename Other> Denoiser<Other> cast() const
  {
    ParameterSet<Other> out;
    for (auto const &p : params_) {
      out.push_back({p.name, p.shape, p.value.template cast<Other>()});
    }
    return Denoiser<Other>(arch_, std::move(out));
  }

  detail::NetGraph const &graph() const { return *graph_; }

private:
  Architecture arch_;
  ParameterSet<Scalar> params_;
  std::shared_ptr<detail::NetGraph const> graph_;
};

/// Fan-in scaled uniform weights, zero biases.
template <typename Scalar> Denoiser<Scalar> init_model(Architecture const &arch, std::uint64_t seed);

template <typename Scalar> struct AdamState
{
  ParameterSet<Scalar> m;
  ParameterSet<Scalar> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(ParameterSet<Scalar> const &params, double lr)
  {
    AdamState s;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    s.lr = lr;
    return s;
  }
};

template <typename Scalar>
void adam_update(ParameterSet<Scalar> &params, ParameterSet<Scalar> const &grads, AdamState<Scalar> &state);

struct GradientCheckReport
{
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradientCheckOptions
{
  std::uint64_t seed = 0;
  int image_size = 8;
  int batch = 2;
  std::size_t max_entries = 400;
  double step = 1e-5;
  // Combine steps h and h/2 to cancel the O(h^2) truncation term. Lets larger
  // steps be used on deep nets where some gradient entries are tiny.
  bool richardson = false;
};

/// Compares analytic gradients against central differences on a random
/// subsample of parameter entries. Analytic gradients are in double, the
/// differences are evaluated in long double. The error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradientCheckReport gradient_check(Denoiser<double> const &model, double tolerance,
                                   GradientCheckOptions const &options = {});

} // namespace synomaly
