#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "mmda/image.hpp"
#include "mmda/linalg.hpp"
#include "mmda/prob_dist.hpp"

namespace mmda {

/// Conv(3x3, stride 2) -> BN -> ReLU stages, global average pooling, linear head.
struct BackboneSpec {
  int input_side = 224;
  std::vector<int> channels{16, 32, 64};
  int class_count = 2;
  double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double bn_epsilon = 1e-5;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

struct ParamSlice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Where each tensor lives inside the flat parameter vector.
struct ParamLayout {
  struct Stage {
    int in_channels = 0;
    int out_channels = 0;
    int in_side = 0;
    int out_side = 0;
    ParamSlice kernel;  // out_channels x (in_channels * 9), column-major
    ParamSlice gamma;
    ParamSlice beta;
  };
  std::vector<Stage> stages;
  ParamSlice head_weight;  // class_count x last channels, column-major
  ParamSlice head_bias;
  std::size_t total = 0;

  static ParamLayout build(const BackboneSpec& spec);
};

/// Output side of a 3x3, stride-2, pad-1 convolution.
inline int downsampled_side(int side) { return (side - 1) / 2 + 1; }

template <class S>
struct ModelState {
  BackboneSpec spec;
  Vector<S> params;
  std::vector<Vector<S>> running_mean;  // one per BN stage
  std::vector<Vector<S>> running_var;
  std::int64_t step = 0;

  template <class T>
  ModelState<T> cast() const {
    ModelState<T> out;
    out.spec = spec;
    out.params = params.template cast<T>();
    for (const auto& m : running_mean) out.running_mean.push_back(m.template cast<T>());
    for (const auto& v : running_var) out.running_var.push_back(v.template cast<T>());
    out.step = step;
    return out;
  }
};

/// He-normal conv kernels, unit BN scale, zero shifts, running stats at (0, 1).
template <class S>
ModelState<S> init_model(const BackboneSpec& spec, std::uint64_t seed);

enum class ForwardMode { train, eval };

struct ForwardOptions {
  ForwardMode mode = ForwardMode::eval;
  /// Train mode only: fold this batch's statistics into the running averages.
  bool update_running_stats = true;
};

/// Activations kept by forward() for a later backward().
template <class S>
struct ForwardCache {
  struct Stage {
    Matrix<S> columns;     // im2col of the stage input
    Matrix<S> normalized;  // BN x-hat
    Vector<S> inv_std;
    Matrix<S> activated;   // post-ReLU output
  };
  ForwardMode mode = ForwardMode::eval;
  int batch = 0;
  std::vector<Stage> stages;
  Matrix<S> pooled;  // channels x batch
};

struct CallCounters {
  std::int64_t forward = 0;
  std::int64_t backward = 0;
};

/// Backbone plus its state. Activations are channel-major matrices
/// (channels x batch*height*width), so batch norm reduces along rows.
template <class S>
class Model {
 public:
  explicit Model(ModelState<S> state);
  Model(const Model& other);
  Model& operator=(const Model& other);

  const ModelState<S>& state() const { return state_; }
  ModelState<S>& mutable_state() { return state_; }
  const BackboneSpec& spec() const { return state_.spec; }
  const ParamLayout& layout() const { return layout_; }

  /// Logits (classes x batch). Train mode normalizes with batch statistics.
  Matrix<S> forward(const std::vector<Image>& images, const ForwardOptions& options,
                    ForwardCache<S>* cache = nullptr);

  /// Eval-mode forward; never mutates the state.
  Matrix<S> forward_eval(const std::vector<Image>& images) const;

  /// Parameter gradient of a loss whose logit gradients are given per cached
  /// forward pass. Contributions of all passes are summed; counts as one backward call.
  Vector<S> backward(std::span<const ForwardCache<S>* const> caches,
                     std::span<const Matrix<S>* const> grad_logits) const;
  Vector<S> backward(const ForwardCache<S>& cache, const Matrix<S>& grad_logits) const;

  /// Softmax of eval-mode logits.
  std::vector<ProbDist> predict_proba(const std::vector<Image>& images) const;

  CallCounters counters() const { return {forward_calls_.load(), backward_calls_.load()}; }
  void reset_counters() {
    forward_calls_ = 0;
    backward_calls_ = 0;
  }

 private:
  Matrix<S> pack(const std::vector<Image>& images) const;
  Matrix<S> run(const Matrix<S>& input, int batch, const ForwardOptions& options, ForwardCache<S>* cache,
                std::vector<Vector<S>>* batch_means, std::vector<Vector<S>>* batch_vars) const;

  ModelState<S> state_;
  ParamLayout layout_;
  mutable std::atomic<std::int64_t> forward_calls_{0};
  mutable std::atomic<std::int64_t> backward_calls_{0};
};

}  // namespace mmda
