#include "synomaly/denoiser.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace synomaly {

void Architecture::validate() const
{
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("architecture: kernel must be odd");
  }
  for (int c : channels) {
    if (c < 1) {
      throw std::invalid_argument("architecture: channel counts must be positive");
    }
  }
  if (!channels.empty() && (embed_dim < 1 || bottleneck_convs < 1)) {
    throw std::invalid_argument("architecture: embed_dim and bottleneck_convs must be positive");
  }
}

std::map<std::string, std::string> Architecture::describe() const
{
  std::string ch;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    ch += (i ? "," : "") + std::to_string(channels[i]);
  }
  return {{"model.channels", ch},
          {"model.kernel", std::to_string(kernel)},
          {"model.embed_dim", std::to_string(embed_dim)},
          {"model.bottleneck_convs", std::to_string(bottleneck_convs)}};
}

Architecture Architecture::parse(std::map<std::string, std::string> const &kv)
{
  Architecture a;
  a.channels.clear();
  std::string const ch = kv.at("model.channels");
  std::size_t pos = 0;
  while (pos < ch.size()) {
    auto const next = ch.find(',', pos);
    a.channels.push_back(std::stoi(ch.substr(pos, next - pos)));
    pos = next == std::string::npos ? ch.size() : next + 1;
  }
  a.kernel = std::stoi(kv.at("model.kernel"));
  a.embed_dim = std::stoi(kv.at("model.embed_dim"));
  a.bottleneck_convs = std::stoi(kv.at("model.bottleneck_convs"));
  a.validate();
  return a;
}

template <typename Scalar> static std::size_t count_params(ParameterSet<Scalar> const &params)
{
  std::size_t n = 0;
  for (auto const &p : params) {
    n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

std::size_t parameter_count(ParameterSet<float> const &params)
{
  return count_params(params);
}

std::size_t parameter_count(ParameterSet<double> const &params)
{
  return count_params(params);
}

namespace detail {

struct ConvSpec
{
  int cin, cout, stride, weight, bias;
};

struct EmbedSpec
{
  int channels, weight, bias;
};

enum class OpKind
{
  conv,
  embed,
  silu,
  upsample,
  add
};

struct Op
{
  OpKind kind;
  int in, in2, out, layer;
};

struct BufferInfo
{
  int channels, level;
};

struct ParamLayout
{
  std::string name;
  std::vector<int> shape;
  int fan_in; // zero marks a bias
};

struct NetGraph
{
  int kernel = 3;
  int embed_dim = 0;
  int levels = 0;
  std::vector<ConvSpec> convs;
  std::vector<EmbedSpec> embeds;
  std::vector<Op> ops;
  std::vector<BufferInfo> buffers;
  std::vector<ParamLayout> layout;
  int input = 0;
  int output = 0;
};

namespace {

NetGraph build_graph(Architecture const &arch)
{
  arch.validate();
  NetGraph g;
  g.kernel = arch.kernel;
  g.embed_dim = arch.embed_dim;
  g.levels = arch.levels();
  int const k = arch.kernel;

  auto buffer = [&](int channels, int level) {
    g.buffers.push_back({channels, level});
    return static_cast<int>(g.buffers.size()) - 1;
  };
  auto param = [&](std::string name, std::vector<int> shape, int fan_in) {
    g.layout.push_back({std::move(name), std::move(shape), fan_in});
    return static_cast<int>(g.layout.size()) - 1;
  };
  auto conv = [&](std::string const &name, int in, int cout, int stride) {
    int const cin = g.buffers[in].channels;
    int const w = param(name + ".weight", {k, k, cin, cout}, k * k * cin);
    int const b = param(name + ".bias", {cout}, 0);
    g.convs.push_back({cin, cout, stride, w, b});
    int const out = buffer(cout, g.buffers[in].level + (stride == 2 ? 1 : 0));
    g.ops.push_back({OpKind::conv, in, -1, out, static_cast<int>(g.convs.size()) - 1});
    return out;
  };
  auto embed = [&](std::string const &name, int in) {
    int const c = g.buffers[in].channels;
    int const w = param(name + ".weight", {arch.embed_dim, c}, arch.embed_dim);
    int const b = param(name + ".bias", {c}, 0);
    g.embeds.push_back({c, w, b});
    int const out = buffer(c, g.buffers[in].level);
    g.ops.push_back({OpKind::embed, in, -1, out, static_cast<int>(g.embeds.size()) - 1});
    return out;
  };
  auto unary = [&](OpKind kind, int in) {
    int const out = buffer(g.buffers[in].channels, g.buffers[in].level - (kind == OpKind::upsample ? 1 : 0));
    g.ops.push_back({kind, in, -1, out, -1});
    return out;
  };
  auto add = [&](int a, int b) {
    int const out = buffer(g.buffers[a].channels, g.buffers[a].level);
    g.ops.push_back({OpKind::add, a, b, out, -1});
    return out;
  };

  g.input = buffer(1, 0);
  auto const &ch = arch.channels;
  int const levels = arch.levels();
  if (levels == 0) {
    g.output = conv("out", g.input, 1, 1);
    return g;
  }

  std::vector<int> skips(static_cast<std::size_t>(levels));
  int h = unary(OpKind::silu, embed("emb.stem", conv("stem", g.input, ch[0], 1)));
  int const reps0 = levels == 1 ? arch.bottleneck_convs : 1;
  for (int r = 0; r < reps0; ++r) {
    h = unary(OpKind::silu, conv(reps0 > 1 ? "enc0_" + std::to_string(r) : "enc0", h, ch[0], 1));
  }
  skips[0] = h;
  for (int l = 1; l < levels; ++l) {
    std::string const tag = std::to_string(l);
    h = unary(OpKind::silu, embed("emb.down" + tag, conv("down" + tag, h, ch[l], 2)));
    int const reps = l == levels - 1 ? arch.bottleneck_convs : 1;
    for (int r = 0; r < reps; ++r) {
      h = unary(OpKind::silu, conv(reps > 1 ? "enc" + tag + "_" + std::to_string(r) : "enc" + tag, h, ch[l], 1));
    }
    skips[l] = h;
  }
  for (int l = levels - 1; l >= 1; --l) {
    std::string const tag = std::to_string(l);
    h = unary(OpKind::upsample, conv("up" + tag, h, ch[l - 1], 1));
    h = unary(OpKind::silu, embed("emb.up" + tag, add(h, skips[l - 1])));
    h = unary(OpKind::silu, conv("dec" + std::to_string(l - 1), h, ch[l - 1], 1));
  }
  g.output = conv("out", h, 1, 1);
  return g;
}

} // namespace
} // namespace detail

namespace {

using detail::NetGraph;
using detail::OpKind;

template <typename Scalar> struct Tape
{
  int batch = 0;
  int height = 0;
  int width = 0;
  Matrix<Scalar> emb;
  std::vector<Matrix<Scalar>> val;
  std::vector<Matrix<Scalar>> grad;
  std::vector<Matrix<Scalar>> col;
};

inline constexpr Eigen::Index chunk_pixels = 4096;

struct Dims
{
  int h, w;
};

Dims dims_at(int height, int width, int level)
{
  return {height >> level, width >> level};
}

template <typename Scalar>
void im2col(Matrix<Scalar> const &x, int batch, Dims in, Dims out, int cin, int k, int stride, Matrix<Scalar> &col)
{
  int const pad = k / 2;
  col.resize(static_cast<Eigen::Index>(k) * k * cin, static_cast<Eigen::Index>(batch) * out.h * out.w);
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        Eigen::Index const n = (static_cast<Eigen::Index>(b) * out.h + oy) * out.w + ox;
        Scalar *dst = col.col(n).data();
        for (int ky = 0; ky < k; ++ky) {
          int const iy = oy * stride + ky - pad;
          for (int kx = 0; kx < k; ++kx, dst += cin) {
            int const ix = ox * stride + kx - pad;
            if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) {
              std::fill(dst, dst + cin, Scalar(0));
            } else {
              Scalar const *src = x.col((static_cast<Eigen::Index>(b) * in.h + iy) * in.w + ix).data();
              std::copy(src, src + cin, dst);
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(Matrix<Scalar> const &dcol, int batch, Dims in, Dims out, int cin, int k, int stride, Matrix<Scalar> &dx)
{
  int const pad = k / 2;
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        Eigen::Index const n = (static_cast<Eigen::Index>(b) * out.h + oy) * out.w + ox;
        Scalar const *src = dcol.col(n).data();
        for (int ky = 0; ky < k; ++ky) {
          int const iy = oy * stride + ky - pad;
          for (int kx = 0; kx < k; ++kx, src += cin) {
            int const ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) {
              Scalar *dst = dx.col((static_cast<Eigen::Index>(b) * in.h + iy) * in.w + ix).data();
              for (int c = 0; c < cin; ++c) {
                dst[c] += src[c];
              }
            }
          }
        }
      }
    }
  }
}

template <typename Scalar> auto weight_map(ParameterSet<Scalar> const &params, int idx, int rows, int cols)
{
  return Eigen::Map<Matrix<Scalar> const>(params[idx].value.data(), rows, cols);
}

template <typename Scalar> auto weight_map(ParameterSet<Scalar> &params, int idx, int rows, int cols)
{
  return Eigen::Map<Matrix<Scalar>>(params[idx].value.data(), rows, cols);
}

template <typename Scalar>
void run_forward(NetGraph const &g, ParameterSet<Scalar> const &params, Tape<Scalar> &tape)
{
  int const k = g.kernel;
  Eigen::Index const hw0 = static_cast<Eigen::Index>(tape.height) * tape.width;
  tape.col.resize(g.ops.size());
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    auto const &op = g.ops[i];
    auto const &in = tape.val[op.in];
    auto &out = tape.val[op.out];
    switch (op.kind) {
    case OpKind::conv: {
      auto const &spec = g.convs[op.layer];
      Dims const din = dims_at(tape.height, tape.width, g.buffers[op.in].level);
      Dims const dout = dims_at(tape.height, tape.width, g.buffers[op.out].level);
      im2col(in, tape.batch, din, dout, spec.cin, k, spec.stride, tape.col[i]);
      auto const w = weight_map(params, spec.weight, spec.cout, k * k * spec.cin);
      out.noalias() = w * tape.col[i];
      out.colwise() += params[spec.bias].value;
      break;
    }
    case OpKind::embed: {
      auto const &spec = g.embeds[op.layer];
      auto const w = weight_map(params, spec.weight, spec.channels, g.embed_dim);
      Matrix<Scalar> proj = w * tape.emb;
      proj.colwise() += params[spec.bias].value;
      Eigen::Index const hw = hw0 >> (2 * g.buffers[op.in].level);
      out = in;
      for (int b = 0; b < tape.batch; ++b) {
        out.middleCols(b * hw, hw).colwise() += proj.col(b);
      }
      break;
    }
    case OpKind::silu:
      out = in.array() / (Scalar(1) + (-in.array()).exp());
      break;
    case OpKind::upsample: {
      Dims const din = dims_at(tape.height, tape.width, g.buffers[op.in].level);
      Dims const dout = dims_at(tape.height, tape.width, g.buffers[op.out].level);
      out.resize(in.rows(), static_cast<Eigen::Index>(tape.batch) * dout.h * dout.w);
      for (int b = 0; b < tape.batch; ++b) {
        for (int y = 0; y < dout.h; ++y) {
          for (int x = 0; x < dout.w; ++x) {
            out.col((static_cast<Eigen::Index>(b) * dout.h + y) * dout.w + x) =
              in.col((static_cast<Eigen::Index>(b) * din.h + y / 2) * din.w + x / 2);
          }
        }
      }
      break;
    }
    case OpKind::add:
      out = in + tape.val[op.in2];
      break;
    }
  }
}

template <typename Scalar>
void run_backward(NetGraph const &g, ParameterSet<Scalar> const &params, Tape<Scalar> &tape, ParameterSet<Scalar> &grads)
{
  int const k = g.kernel;
  Eigen::Index const hw0 = static_cast<Eigen::Index>(tape.height) * tape.width;
  tape.grad.resize(tape.val.size());
  for (std::size_t b = 0; b < tape.val.size(); ++b) {
    if (static_cast<int>(b) != g.output) {
      tape.grad[b].setZero(tape.val[b].rows(), tape.val[b].cols());
    }
  }
  for (auto i = static_cast<std::ptrdiff_t>(g.ops.size()) - 1; i >= 0; --i) {
    auto const &op = g.ops[static_cast<std::size_t>(i)];
    auto const &gout = tape.grad[op.out];
    auto &gin = tape.grad[op.in];
    switch (op.kind) {
    case OpKind::conv: {
      auto const &spec = g.convs[op.layer];
      int const kk = k * k * spec.cin;
      auto const &col = tape.col[static_cast<std::size_t>(i)];
      weight_map(grads, spec.weight, spec.cout, kk).noalias() += gout * col.transpose();
      grads[spec.bias].value += gout.rowwise().sum();
      if (op.in == g.input) {
        break;
      }
      Matrix<Scalar> dcol = weight_map(params, spec.weight, spec.cout, kk).transpose() * gout;
      Dims const din = dims_at(tape.height, tape.width, g.buffers[op.in].level);
      Dims const dout = dims_at(tape.height, tape.width, g.buffers[op.out].level);
      col2im_add(dcol, tape.batch, din, dout, spec.cin, k, spec.stride, gin);
      break;
    }
    case OpKind::embed: {
      auto const &spec = g.embeds[op.layer];
      Eigen::Index const hw = hw0 >> (2 * g.buffers[op.in].level);
      gin += gout;
      Matrix<Scalar> gproj(spec.channels, tape.batch);
      for (int b = 0; b < tape.batch; ++b) {
        gproj.col(b) = gout.middleCols(b * hw, hw).rowwise().sum();
      }
      weight_map(grads, spec.weight, spec.channels, g.embed_dim).noalias() += gproj * tape.emb.transpose();
      grads[spec.bias].value += gproj.rowwise().sum();
      break;
    }
    case OpKind::silu: {
      auto const x = tape.val[op.in].array();
      auto const s = (Scalar(1) / (Scalar(1) + (-x).exp())).eval();
      gin.array() += gout.array() * s * (Scalar(1) + x * (Scalar(1) - s));
      break;
    }
    case OpKind::upsample: {
      Dims const din = dims_at(tape.height, tape.width, g.buffers[op.in].level);
      Dims const dout = dims_at(tape.height, tape.width, g.buffers[op.out].level);
      for (int b = 0; b < tape.batch; ++b) {
        for (int y = 0; y < dout.h; ++y) {
          for (int x = 0; x < dout.w; ++x) {
            gin.col((static_cast<Eigen::Index>(b) * din.h + y / 2) * din.w + x / 2) +=
              gout.col((static_cast<Eigen::Index>(b) * dout.h + y) * dout.w + x);
          }
        }
      }
      break;
    }
    case OpKind::add:
      gin += gout;
      tape.grad[op.in2] += gout;
      break;
    }
  }
}

template <typename Scalar>
void load_inputs(NetGraph const &g, std::span<Image<Scalar> const> x, std::span<int const> t, Tape<Scalar> &tape)
{
  if (x.empty() || x.size() != t.size()) {
    throw std::invalid_argument("denoiser: batch must be nonempty with one step per image");
  }
  int const h = static_cast<int>(x[0].rows());
  int const w = static_cast<int>(x[0].cols());
  int const div = 1 << std::max(0, g.levels - 1);
  if (h % div != 0 || w % div != 0) {
    throw std::invalid_argument("denoiser: image size must be divisible by 2^(levels-1)");
  }
  tape.batch = static_cast<int>(x.size());
  tape.height = h;
  tape.width = w;
  tape.val.resize(g.buffers.size());
  Eigen::Index const hw = static_cast<Eigen::Index>(h) * w;
  auto &in = tape.val[g.input];
  in.resize(1, tape.batch * hw);
  tape.emb.resize(g.embed_dim, tape.batch);
  for (int b = 0; b < tape.batch; ++b) {
    if (x[b].rows() != h || x[b].cols() != w) {
      throw std::invalid_argument("denoiser: dimension mismatch inside batch");
    }
    in.middleCols(b * hw, hw) = Eigen::Map<Matrix<Scalar> const>(x[b].data(), 1, hw);
    if (g.embed_dim > 0) {
      tape.emb.col(b) = timestep_embedding<Scalar>(t[b], g.embed_dim);
    }
  }
}

template <typename Scalar> Tape<Scalar> &scratch_tape()
{
  thread_local Tape<Scalar> tape;
  return tape;
}

} // namespace

template <typename Scalar>
Denoiser<Scalar>::Denoiser(Architecture arch, ParameterSet<Scalar> params)
  : arch_(std::move(arch))
  , params_(std::move(params))
  , graph_(std::make_shared<NetGraph const>(detail::build_graph(arch_)))
{
  auto const &layout = graph_->layout;
  if (layout.size() != params_.size()) {
    throw std::invalid_argument("denoiser: parameter list does not match architecture");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    auto const expected = std::accumulate(layout[i].shape.begin(), layout[i].shape.end(), Eigen::Index{1},
                                          std::multiplies<>{});
    if (params_[i].name != layout[i].name || params_[i].shape != layout[i].shape ||
        params_[i].value.size() != expected) {
      throw std::invalid_argument("denoiser: parameter '" + params_[i].name + "' does not match '" +
                                  layout[i].name + "'");
    }
  }
}

template <typename Scalar>
std::vector<Image<Scalar>> Denoiser<Scalar>::forward(std::span<Image<Scalar> const> x, std::span<int const> t) const
{
  auto &tape = scratch_tape<Scalar>();
  load_inputs(*graph_, x, t, tape);
  run_forward(*graph_, params_, tape);
  auto const &out = tape.val[graph_->output];
  Eigen::Index const hw = static_cast<Eigen::Index>(tape.height) * tape.width;
  std::vector<Image<Scalar>> result;
  result.reserve(x.size());
  for (int b = 0; b < tape.batch; ++b) {
    Image<Scalar> img(tape.height, tape.width);
    Eigen::Map<Matrix<Scalar>>(img.data(), 1, hw) = out.middleCols(b * hw, hw);
    result.push_back(std::move(img));
  }
  return result;
}

template <typename Scalar> Image<Scalar> Denoiser<Scalar>::forward(Image<Scalar> const &x_t, int t) const
{
  return forward(std::span<Image<Scalar> const>(&x_t, 1), std::span<int const>(&t, 1)).front();
}

template <typename Scalar>
LossAndGrad<Scalar> Denoiser<Scalar>::loss_and_grad(std::span<Example<Scalar> const> batch) const
{
  if (batch.empty()) {
    throw std::invalid_argument("loss_and_grad: empty batch");
  }
  double n = 0.0;
  for (auto const &ex : batch) {
    require_same_shape(ex.eps_target, ex.x_t, "loss_and_grad");
    n += static_cast<double>(ex.x_t.size());
  }
  LossAndGrad<Scalar> result;
  result.grads = zeros_like(params_);
  double loss = 0.0;
  // Small chunks keep the im2col buffers cache-resident; gradients of the
  // chunks are summed in a fixed order.
  Eigen::Index const pixels = batch.front().x_t.size();
  std::size_t const chunk = std::max<std::size_t>(1, static_cast<std::size_t>(chunk_pixels / std::max<Eigen::Index>(pixels, 1)));
  auto &tape = scratch_tape<Scalar>();
  for (std::size_t first = 0; first < batch.size(); first += chunk) {
    std::size_t const last = std::min(batch.size(), first + chunk);
    std::vector<Image<Scalar>> xs;
    std::vector<int> ts;
    for (std::size_t b = first; b < last; ++b) {
      xs.push_back(batch[b].x_t);
      ts.push_back(batch[b].t);
    }
    load_inputs<Scalar>(*graph_, xs, ts, tape);
    run_forward(*graph_, params_, tape);

    Eigen::Index const hw = static_cast<Eigen::Index>(tape.height) * tape.width;
    tape.grad.resize(tape.val.size());
    Matrix<Scalar> &dpred = tape.grad[graph_->output];
    auto const &pred = tape.val[graph_->output];
    dpred.resize(1, pred.cols());
    for (int b = 0; b < tape.batch; ++b) {
      auto const target = Eigen::Map<Matrix<Scalar> const>(batch[first + b].eps_target.data(), 1, hw);
      auto const diff = (pred.middleCols(b * hw, hw) - target).eval();
      loss += diff.template cast<double>().squaredNorm();
      dpred.middleCols(b * hw, hw) = diff * static_cast<Scalar>(2.0 / n);
    }
    run_backward(*graph_, params_, tape, result.grads);
  }
  result.loss = loss / n;
  return result;
}

template <typename Scalar> Denoiser<Scalar> init_model(Architecture const &arch, std::uint64_t seed)
{
  auto const graph = detail::build_graph(arch);
  Rng rng(seed, 0x1417);
  ParameterSet<Scalar> params;
  for (auto const &entry : graph.layout) {
    auto const size = std::accumulate(entry.shape.begin(), entry.shape.end(), Eigen::Index{1}, std::multiplies<>{});
    Parameter<Scalar> p{entry.name, entry.shape, Vector<Scalar>::Zero(size)};
    if (entry.fan_in > 0) {
      double const bound = 1.0 / std::sqrt(static_cast<double>(entry.fan_in));
      for (Eigen::Index i = 0; i < size; ++i) {
        p.value(i) = static_cast<Scalar>(rng.uniform(-bound, bound));
      }
    }
    params.push_back(std::move(p));
  }
  return Denoiser<Scalar>(arch, std::move(params));
}

template <typename Scalar>
void adam_update(ParameterSet<Scalar> &params, ParameterSet<Scalar> const &grads, AdamState<Scalar> &state)
{
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw std::invalid_argument("adam_update: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.size() != grads[i].value.size() || params[i].value.size() != state.m[i].value.size() ||
        params[i].value.size() != state.v[i].value.size()) {
      throw std::invalid_argument("adam_update: shape mismatch for '" + params[i].name + "'");
    }
  }
  state.step += 1;
  double const c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double const c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto const b1 = static_cast<Scalar>(state.beta1);
  auto const b2 = static_cast<Scalar>(state.beta2);
  auto const step_size = static_cast<Scalar>(state.lr / c1);
  auto const inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  auto const eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto const g = grads[i].value.array();
    auto m = state.m[i].value.array();
    auto v = state.v[i].value.array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i].value.array() -= step_size * m / (v.sqrt() * inv_sqrt_c2 + eps);
  }
}

GradientCheckReport gradient_check(Denoiser<double> const &model, double tolerance, GradientCheckOptions const &options)
{
  auto const [seed, image_size, batch, max_entries, step, richardson] = options;
  Rng rng(seed, 0x6c);
  std::vector<Example<double>> examples;
  for (int b = 0; b < batch; ++b) {
    Example<double> ex;
    ex.x_t = Image<double>(image_size, image_size);
    ex.eps_target = Image<double>(image_size, image_size);
    for (Eigen::Index i = 0; i < ex.x_t.size(); ++i) {
      ex.x_t.data()[i] = rng.normal();
      ex.eps_target.data()[i] = rng.normal();
    }
    ex.t = static_cast<int>(rng.uniform_int(1, 1000));
    examples.push_back(std::move(ex));
  }
  auto const analytic = model.loss_and_grad(examples).grads;

  std::vector<std::pair<std::size_t, Eigen::Index>> entries;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    for (Eigen::Index i = 0; i < analytic[p].value.size(); ++i) {
      entries.emplace_back(p, i);
    }
  }
  // Partial Fisher-Yates picks a uniform subsample.
  std::size_t const take = std::min(max_entries, entries.size());
  for (std::size_t i = 0; i < take; ++i) {
    auto const j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(entries.size() - 1)));
    std::swap(entries[i], entries[j]);
  }

  // Differences are taken in extended precision so that entries with tiny
  // gradients are not swamped by rounding in the loss.
  using Wide = long double;
  Denoiser<Wide> probe = model.cast<Wide>();
  std::vector<Image<Wide>> xs;
  std::vector<int> ts;
  for (auto const &ex : examples) {
    xs.push_back(ex.x_t.cast<Wide>());
    ts.push_back(ex.t);
  }
  auto loss_at = [&](std::size_t p, Eigen::Index i, Wide value) {
    Wide const saved = probe.params()[p].value(i);
    probe.params()[p].value(i) = value;
    auto const preds = probe.forward(xs, ts);
    probe.params()[p].value(i) = saved;
    Wide sum = 0.0L;
    Wide count = 0.0L;
    for (std::size_t b = 0; b < examples.size(); ++b) {
      sum += (preds[b] - examples[b].eps_target.cast<Wide>()).square().sum();
      count += static_cast<Wide>(preds[b].size());
    }
    return sum / count;
  };

  GradientCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t e = 0; e < take; ++e) {
    auto const [p, i] = entries[e];
    Wide const w = probe.params()[p].value(i);
    auto central = [&](Wide h) { return (loss_at(p, i, w + h) - loss_at(p, i, w - h)) / (2.0L * h); };
    Wide const h = step;
    auto const numeric =
      static_cast<double>(richardson ? (4.0L * central(h / 2.0L) - central(h)) / 3.0L : central(h));
    double const a = analytic[p].value(i);
    double const denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
  }
  report.checked = take;
  report.passed = report.max_rel_error < tolerance;
  return report;
}

template class Denoiser<float>;
template class Denoiser<double>;
template class Denoiser<long double>;
template Denoiser<float> init_model<float>(Architecture const &, std::uint64_t);
template Denoiser<double> init_model<double>(Architecture const &, std::uint64_t);
template void adam_update<float>(ParameterSet<float> &, ParameterSet<float> const &, AdamState<float> &);
template void adam_update<double>(ParameterSet<double> &, ParameterSet<double> const &, AdamState<double> &);

} // namespace synomaly
