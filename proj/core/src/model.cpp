#include "mmda/model.hpp"

#include <cmath>
#include <string>

#include "mmda/error.hpp"
#include "mmda/mixmatch.hpp"
#include "mmda/rng.hpp"

namespace mmda {

void BackboneSpec::validate() const {
  if (input_side < 1) throw ConfigError("model.input_side must be >= 1 (got " + std::to_string(input_side) + ")");
  if (channels.empty()) throw ConfigError("model.channels must list at least one conv stage");
  for (int c : channels)
    if (c < 1) throw ConfigError("model.channels entries must be >= 1 (got " + std::to_string(c) + ")");
  if (class_count < 2) throw ConfigError("model.class_count must be >= 2 (got " + std::to_string(class_count) + ")");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
    throw ConfigError("model.bn_momentum must lie in [0, 1) (got " + std::to_string(bn_momentum) + ")");
  if (!(bn_epsilon > 0.0)) throw ConfigError("model.bn_epsilon must be > 0");
}

ParamLayout ParamLayout::build(const BackboneSpec& spec) {
  spec.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  auto take = [&offset](std::size_t n) {
    ParamSlice s{offset, n};
    offset += n;
    return s;
  };
  int in_channels = Image::kChannels;
  int side = spec.input_side;
  for (int out_channels : spec.channels) {
    Stage st;
    st.in_channels = in_channels;
    st.out_channels = out_channels;
    st.in_side = side;
    st.out_side = downsampled_side(side);
    st.kernel = take(static_cast<std::size_t>(out_channels) * in_channels * 9);
    st.gamma = take(static_cast<std::size_t>(out_channels));
    st.beta = take(static_cast<std::size_t>(out_channels));
    layout.stages.push_back(st);
    in_channels = out_channels;
    side = st.out_side;
  }
  layout.head_weight = take(static_cast<std::size_t>(spec.class_count) * in_channels);
  layout.head_bias = take(static_cast<std::size_t>(spec.class_count));
  layout.total = offset;
  return layout;
}

template <class S>
ModelState<S> init_model(const BackboneSpec& spec, std::uint64_t seed) {
  const ParamLayout layout = ParamLayout::build(spec);
  ModelState<S> state;
  state.spec = spec;
  state.params = Vector<S>::Zero(static_cast<Eigen::Index>(layout.total));
  Rng rng(seed);
  for (const auto& st : layout.stages) {
    const double std_dev = std::sqrt(2.0 / (9.0 * st.in_channels));
    for (std::size_t i = 0; i < st.kernel.size; ++i)
      state.params[static_cast<Eigen::Index>(st.kernel.offset + i)] = static_cast<S>(rng.normal(0.0, std_dev));
    for (std::size_t i = 0; i < st.gamma.size; ++i) state.params[static_cast<Eigen::Index>(st.gamma.offset + i)] = S(1);
    state.running_mean.push_back(Vector<S>::Zero(st.out_channels));
    state.running_var.push_back(Vector<S>::Ones(st.out_channels));
  }
  const double head_std = std::sqrt(1.0 / spec.channels.back());
  for (std::size_t i = 0; i < layout.head_weight.size; ++i)
    state.params[static_cast<Eigen::Index>(layout.head_weight.offset + i)] = static_cast<S>(rng.normal(0.0, head_std));
  return state;
}

namespace {

template <class S>
using ConstMap = Eigen::Map<const Matrix<S>>;

template <class S>
ConstMap<S> view(const Vector<S>& params, const ParamSlice& slice, Eigen::Index rows, Eigen::Index cols) {
  return ConstMap<S>(params.data() + slice.offset, rows, cols);
}

template <class S>
Eigen::Map<Matrix<S>> view(Vector<S>& params, const ParamSlice& slice, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<Matrix<S>>(params.data() + slice.offset, rows, cols);
}

// Patch matrix with rows ordered (ky, kx, channel) so both sides of the copy
// walk channels contiguously.
template <class S>
Matrix<S> im2col(const Matrix<S>& input, int channels, int side, int out_side, int batch) {
  const Eigen::Index rows = static_cast<Eigen::Index>(channels) * 9;
  Matrix<S> cols(rows, static_cast<Eigen::Index>(batch) * out_side * out_side);
  const S* in = input.data();
  S* out = cols.data();
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < out_side; ++oy) {
      for (int ox = 0; ox < out_side; ++ox) {
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            if (iy < 0 || iy >= side || ix < 0 || ix >= side) {
              for (int c = 0; c < channels; ++c) *out++ = S(0);
            } else {
              const S* src = in + ((static_cast<std::size_t>(n) * side + iy) * side + ix) * channels;
              for (int c = 0; c < channels; ++c) *out++ = src[c];
            }
          }
        }
      }
    }
  }
  return cols;
}

template <class S>
Matrix<S> col2im(const Matrix<S>& cols, int channels, int side, int out_side, int batch) {
  Matrix<S> grad = Matrix<S>::Zero(channels, static_cast<Eigen::Index>(batch) * side * side);
  S* out = grad.data();
  const S* in = cols.data();
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < out_side; ++oy) {
      for (int ox = 0; ox < out_side; ++ox) {
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            if (iy < 0 || iy >= side || ix < 0 || ix >= side) {
              in += channels;
            } else {
              S* dst = out + ((static_cast<std::size_t>(n) * side + iy) * side + ix) * channels;
              for (int c = 0; c < channels; ++c) dst[c] += *in++;
            }
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace

template <class S>
Model<S>::Model(ModelState<S> state) : state_(std::move(state)), layout_(ParamLayout::build(state_.spec)) {
  if (static_cast<std::size_t>(state_.params.size()) != layout_.total)
    throw Error("Model: parameter vector does not match the backbone spec");
  if (state_.running_mean.size() != layout_.stages.size() || state_.running_var.size() != layout_.stages.size())
    throw Error("Model: running statistics do not match the backbone spec");
  for (std::size_t i = 0; i < layout_.stages.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(layout_.stages[i].out_channels);
    if (state_.running_mean[i].size() != c || state_.running_var[i].size() != c)
      throw Error("Model: running statistics have the wrong width");
    if ((state_.running_var[i].array() <= S(0)).any()) throw Error("Model: running variance must be positive");
  }
}

template <class S>
Model<S>::Model(const Model& other)
    : state_(other.state_),
      layout_(other.layout_),
      forward_calls_(other.forward_calls_.load()),
      backward_calls_(other.backward_calls_.load()) {}

template <class S>
Model<S>& Model<S>::operator=(const Model& other) {
  if (this != &other) {
    state_ = other.state_;
    layout_ = other.layout_;
    forward_calls_ = other.forward_calls_.load();
    backward_calls_ = other.backward_calls_.load();
  }
  return *this;
}

template <class S>
Matrix<S> Model<S>::pack(const std::vector<Image>& images) const {
  if (images.empty()) throw Error("Model: empty batch");
  const int side = state_.spec.input_side;
  const auto pixels = static_cast<Eigen::Index>(side) * side;
  Matrix<S> x(Image::kChannels, static_cast<Eigen::Index>(images.size()) * pixels);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.height != side || img.width != side || img.pixels.size() != static_cast<std::size_t>(3 * pixels))
      throw Error("Model: expected " + std::to_string(side) + "x" + std::to_string(side) + " input, got " +
                  std::to_string(img.height) + "x" + std::to_string(img.width));
    for (int c = 0; c < Image::kChannels; ++c)
      for (Eigen::Index p = 0; p < pixels; ++p)
        x(c, static_cast<Eigen::Index>(n) * pixels + p) = static_cast<S>(img.pixels[static_cast<std::size_t>(c * pixels + p)]);
  }
  return x;
}

template <class S>
Matrix<S> Model<S>::run(const Matrix<S>& input, int batch, const ForwardOptions& options, ForwardCache<S>* cache,
                        std::vector<Vector<S>>* batch_means, std::vector<Vector<S>>* batch_vars) const {
  const bool train = options.mode == ForwardMode::train;
  const S eps = static_cast<S>(state_.spec.bn_epsilon);
  if (cache) {
    cache->mode = options.mode;
    cache->batch = batch;
    cache->stages.assign(layout_.stages.size(), {});
  }
  Matrix<S> act = input;
  for (std::size_t i = 0; i < layout_.stages.size(); ++i) {
    const auto& st = layout_.stages[i];
    Matrix<S> cols = im2col<S>(act, st.in_channels, st.in_side, st.out_side, batch);
    const auto kernel = view<S>(state_.params, st.kernel, st.out_channels, static_cast<Eigen::Index>(st.in_channels) * 9);
    Matrix<S> z = kernel * cols;

    Vector<S> mean, var;
    if (train) {
      mean = z.rowwise().mean();
      var = (z.colwise() - mean).array().square().rowwise().mean().matrix();
      if (batch_means) batch_means->push_back(mean);
      if (batch_vars) batch_vars->push_back(var);
    } else {
      mean = state_.running_mean[i];
      var = state_.running_var[i];
    }
    Vector<S> inv_std = (var.array() + eps).rsqrt().matrix();
    Matrix<S> xhat = (z.colwise() - mean);
    xhat = inv_std.asDiagonal() * xhat;
    const auto gamma = view<S>(state_.params, st.gamma, st.out_channels, 1);
    const auto beta = view<S>(state_.params, st.beta, st.out_channels, 1);
    Matrix<S> out = (gamma.col(0).asDiagonal() * xhat).colwise() + beta.col(0);
    out = out.cwiseMax(S(0));

    if (cache) {
      auto& cs = cache->stages[i];
      cs.columns = std::move(cols);
      cs.normalized = std::move(xhat);
      cs.inv_std = std::move(inv_std);
      cs.activated = out;
    }
    act = std::move(out);
  }

  const auto& last = layout_.stages.back();
  const int spatial = last.out_side * last.out_side;
  Matrix<S> pooled(last.out_channels, batch);
  for (int n = 0; n < batch; ++n) {
    pooled.col(n) = act.middleCols(static_cast<Eigen::Index>(n) * spatial, spatial).rowwise().mean();
  }
  const auto head_w = view<S>(state_.params, layout_.head_weight, state_.spec.class_count, last.out_channels);
  const auto head_b = view<S>(state_.params, layout_.head_bias, state_.spec.class_count, 1);
  Matrix<S> logits = (head_w * pooled).colwise() + head_b.col(0);
  if (cache) cache->pooled = std::move(pooled);
  if (!logits.allFinite()) throw Error("Model: non-finite logits");
  return logits;
}

template <class S>
Matrix<S> Model<S>::forward(const std::vector<Image>& images, const ForwardOptions& options, ForwardCache<S>* cache) {
  ++forward_calls_;
  const Matrix<S> x = pack(images);
  const int batch = static_cast<int>(images.size());
  if (options.mode == ForwardMode::train && options.update_running_stats) {
    std::vector<Vector<S>> means, vars;
    Matrix<S> logits = run(x, batch, options, cache, &means, &vars);
    const S m = static_cast<S>(state_.spec.bn_momentum);
    for (std::size_t i = 0; i < means.size(); ++i) {
      state_.running_mean[i] = m * state_.running_mean[i] + (S(1) - m) * means[i];
      state_.running_var[i] = m * state_.running_var[i] + (S(1) - m) * vars[i];
    }
    return logits;
  }
  return run(x, batch, options, cache, nullptr, nullptr);
}

template <class S>
Matrix<S> Model<S>::forward_eval(const std::vector<Image>& images) const {
  ++forward_calls_;
  return run(pack(images), static_cast<int>(images.size()), ForwardOptions{ForwardMode::eval, false}, nullptr,
             nullptr, nullptr);
}

template <class S>
Vector<S> Model<S>::backward(std::span<const ForwardCache<S>* const> caches,
                             std::span<const Matrix<S>* const> grad_logits) const {
  if (caches.size() != grad_logits.size()) throw Error("Model::backward: caches and gradients differ in count");
  ++backward_calls_;
  Vector<S> grad = Vector<S>::Zero(static_cast<Eigen::Index>(layout_.total));
  const auto& last = layout_.stages.back();
  const int classes = state_.spec.class_count;
  const auto head_w = view<S>(state_.params, layout_.head_weight, classes, last.out_channels);
  auto g_head_w = view<S>(grad, layout_.head_weight, classes, last.out_channels);
  auto g_head_b = view<S>(grad, layout_.head_bias, classes, 1);

  for (std::size_t k = 0; k < caches.size(); ++k) {
    const ForwardCache<S>& cache = *caches[k];
    const Matrix<S>& g = *grad_logits[k];
    if (cache.stages.size() != layout_.stages.size()) throw Error("Model::backward: cache was not recorded");
    if (g.rows() != classes || g.cols() != cache.batch) throw Error("Model::backward: gradient shape mismatch");
    const int batch = cache.batch;

    g_head_w.noalias() += g * cache.pooled.transpose();
    g_head_b.col(0) += g.rowwise().sum();
    const Matrix<S> g_pooled = head_w.transpose() * g;

    const int spatial = last.out_side * last.out_side;
    Matrix<S> g_act(last.out_channels, static_cast<Eigen::Index>(batch) * spatial);
    for (int n = 0; n < batch; ++n) {
      g_act.middleCols(static_cast<Eigen::Index>(n) * spatial, spatial) =
          (g_pooled.col(n) / static_cast<S>(spatial)).replicate(1, spatial);
    }

    for (std::size_t ii = layout_.stages.size(); ii-- > 0;) {
      const auto& st = layout_.stages[ii];
      const auto& cs = cache.stages[ii];
      // ReLU
      Matrix<S> g_out = (cs.activated.array() > S(0)).select(g_act, S(0));
      // Batch norm
      const auto gamma = view<S>(state_.params, st.gamma, st.out_channels, 1);
      auto g_gamma = view<S>(grad, st.gamma, st.out_channels, 1);
      auto g_beta = view<S>(grad, st.beta, st.out_channels, 1);
      const Vector<S> sum_g = g_out.rowwise().sum();
      const Vector<S> sum_gx = g_out.cwiseProduct(cs.normalized).rowwise().sum();
      g_gamma.col(0) += sum_gx;
      g_beta.col(0) += sum_g;
      Matrix<S> g_z;
      const Vector<S> scale = gamma.col(0).cwiseProduct(cs.inv_std);
      if (cache.mode == ForwardMode::train) {
        const S m = static_cast<S>(g_out.cols());
        g_z = (g_out * m).colwise() - sum_g;
        g_z -= cs.normalized.cwiseProduct((sum_gx.replicate(1, g_out.cols())));
        g_z = (scale / m).asDiagonal() * g_z;
      } else {
        g_z = scale.asDiagonal() * g_out;
      }
      // Convolution
      auto g_kernel = view<S>(grad, st.kernel, st.out_channels, static_cast<Eigen::Index>(st.in_channels) * 9);
      g_kernel.noalias() += g_z * cs.columns.transpose();
      if (ii > 0) {
        const auto kernel =
            view<S>(state_.params, st.kernel, st.out_channels, static_cast<Eigen::Index>(st.in_channels) * 9);
        const Matrix<S> g_cols = kernel.transpose() * g_z;
        g_act = col2im<S>(g_cols, st.in_channels, st.in_side, st.out_side, batch);
      }
    }
  }
  return grad;
}

template <class S>
Vector<S> Model<S>::backward(const ForwardCache<S>& cache, const Matrix<S>& grad_logits) const {
  const ForwardCache<S>* c[] = {&cache};
  const Matrix<S>* g[] = {&grad_logits};
  return backward(std::span<const ForwardCache<S>* const>(c), std::span<const Matrix<S>* const>(g));
}

template <class S>
std::vector<ProbDist> Model<S>::predict_proba(const std::vector<Image>& images) const {
  return softmax_columns<S>(forward_eval(images));
}

template ModelState<float> init_model<float>(const BackboneSpec&, std::uint64_t);
template ModelState<double> init_model<double>(const BackboneSpec&, std::uint64_t);
template class Model<float>;
template class Model<double>;

}  // namespace mmda
