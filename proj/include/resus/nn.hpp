// Copyright 2026 The Resus Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RESUS_NN_HPP_
#define RESUS_NN_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resus/error.hpp"
#include "resus/tensor.hpp"

namespace resus {

enum class LayerKind {
  kConv2d,
  kBatchNorm,
  kRelu,
  kAvgPool,
  kGlobalAvgPool,
  kLinear,
  kResidualAdd,
};

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv2d;
  // conv
  int c_in = 0, c_out = 0, k = 0, stride = 1, padding = 0;
  bool has_bias = false;
  // batchnorm
  int channels = 0;
  float eps_bn = 1e-5f;
  bool affine = true;  // learnable scale/shift
  // pool
  int window = 0, pool_stride = 0;
  // linear
  int d_in = 0, d_out = 0;
  // graph wiring: layer consuming something other than the previous output
  int input_source = -1;  // -1: previous layer (or network input for layer 0)
  int skip_source = -1;   // residual_add only: second addend

  static LayerSpec conv(int c_in, int c_out, int k, int stride = 1,
                        int padding = 0, bool bias = false) {
    LayerSpec s;
    s.kind = LayerKind::kConv2d;
    s.c_in = c_in; s.c_out = c_out; s.k = k;
    s.stride = stride; s.padding = padding; s.has_bias = bias;
    return s;
  }
  static LayerSpec batchnorm(int channels, float eps = 1e-5f, bool affine = true) {
    LayerSpec s;
    s.kind = LayerKind::kBatchNorm;
    s.channels = channels; s.eps_bn = eps; s.affine = affine;
    return s;
  }
  static LayerSpec relu() {
    LayerSpec s; s.kind = LayerKind::kRelu; return s;
  }
  static LayerSpec avgpool(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::kAvgPool; s.window = window; s.pool_stride = stride;
    return s;
  }
  static LayerSpec global_avgpool() {
    LayerSpec s; s.kind = LayerKind::kGlobalAvgPool; return s;
  }
  static LayerSpec linear(int d_in, int d_out, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::kLinear; s.d_in = d_in; s.d_out = d_out; s.has_bias = bias;
    return s;
  }
  static LayerSpec residual_add(int skip_source) {
    LayerSpec s; s.kind = LayerKind::kResidualAdd; s.skip_source = skip_source;
    return s;
  }
};

struct Shape {
  int c = 0, h = 0, w = 0;
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

// Layer graph plus derived shape/repair metadata. finalize() checks shape
// compatibility and derives repairable_layer_ids: convs immediately followed
// by a batchnorm, excluding the network's first conv (its input is raw
// pixels, so its statistics do not shift under pruning).
struct NetworkSpec {
  std::string arch = "custom";
  int in_channels = 0, in_h = 0, in_w = 0;
  int num_classes = 0;
  std::vector<LayerSpec> layers;

  // derived
  std::vector<Shape> out_shapes;
  std::vector<int> repairable_layer_ids;
  int first_conv_id = -1;

  void finalize();
  bool finalized() const { return !out_shapes.empty(); }

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);

  bool same_topology(const NetworkSpec& o) const;
};

// Architecture presets preserving the plain-vs-residual contrast at desk
// scale: structured 16x16 inputs, a handful of conv/BN blocks.
NetworkSpec make_tiny_plain(int in_channels, int num_classes,
                            int in_h = 16, int in_w = 16);
NetworkSpec make_tiny_res(int in_channels, int num_classes,
                          int in_h = 16, int in_w = 16);
NetworkSpec make_preset(const std::string& name, int in_channels,
                        int num_classes, int in_h = 16, int in_w = 16);

template <typename T>
struct LayerParamsT {
  Tensor4T<T> weight;      // conv: (c_out,c_in,k,k); linear: (d_out,d_in,1,1)
  std::vector<T> bias;     // conv/linear; may be materialized later by repair
  std::vector<T> bn_scale, bn_shift;
  std::vector<T> bn_running_mean, bn_running_var;
  std::int64_t bn_batches = 0;  // cumulative-average batch counter
};

template <typename T>
struct ParametersT {
  std::vector<LayerParamsT<T>> layers;

  template <typename U>
  ParametersT<U> cast() const {
    ParametersT<U> out;
    out.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      auto& b = out.layers[i];
      if (a.weight.size() > 0) b.weight = a.weight.template cast<U>();
      auto cv = [](const std::vector<T>& v) {
        std::vector<U> r(v.size());
        for (std::size_t j = 0; j < v.size(); ++j) r[j] = static_cast<U>(v[j]);
        return r;
      };
      b.bias = cv(a.bias);
      b.bn_scale = cv(a.bn_scale);
      b.bn_shift = cv(a.bn_shift);
      b.bn_running_mean = cv(a.bn_running_mean);
      b.bn_running_var = cv(a.bn_running_var);
      b.bn_batches = a.bn_batches;
    }
    return out;
  }
};

using LayerParams = LayerParamsT<float>;
using Parameters = ParametersT<float>;

// He-normal conv/linear weights, zero biases, identity BN state.
Parameters init_parameters(const NetworkSpec& net, std::uint64_t seed);

// Requested pre-BN taps: captured[i] is the output of conv layer i BEFORE
// the batchnorm that follows it.
template <typename T>
struct ForwardTapsT {
  std::vector<int> requested;
  std::map<int, Tensor4T<T>> captured;
};
using ForwardTaps = ForwardTapsT<float>;

// Inference-mode batchnorm state view for the standalone op.
template <typename T>
struct BnStateT {
  const std::vector<T>* running_mean;
  const std::vector<T>* running_var;
  const std::vector<T>* scale;
  const std::vector<T>* shift;
  T eps;
};

// ---------------------------------------------------------------------------
// layer kernels (shared by inference and training paths)
// ---------------------------------------------------------------------------

// Cross-correlation with zero padding. kernel (c_out,c_in,k,k).
template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& input, const Tensor4T<T>& kernel,
                   const std::vector<T>* bias, int stride, int padding) {
  check(kernel.c() == input.c(), ErrorCode::kInvariant,
        "conv2d: kernel expects " + std::to_string(kernel.c()) +
            " input channels, got " + std::to_string(input.c()));
  check(kernel.h() == kernel.w(), ErrorCode::kInvariant, "conv2d: kernel must be square");
  check(bias == nullptr || static_cast<int>(bias->size()) == kernel.n(),
        ErrorCode::kInvariant, "conv2d: bias length != c_out");
  const int k = kernel.h();
  const int oh = (input.h() + 2 * padding - k) / stride + 1;
  const int ow = (input.w() + 2 * padding - k) / stride + 1;
  check(oh >= 1 && ow >= 1, ErrorCode::kInvariant, "conv2d: empty output");
  Tensor4T<T> out(input.n(), kernel.n(), oh, ow);
  for (int n = 0; n < input.n(); ++n) {
    for (int co = 0; co < kernel.n(); ++co) {
      const T b = bias ? (*bias)[co] : T(0);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T acc = 0;
          for (int ci = 0; ci < input.c(); ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int y = oy * stride + ky - padding;
              if (y < 0 || y >= input.h()) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int x = ox * stride + kx - padding;
                if (x < 0 || x >= input.w()) continue;
                acc += kernel.at(co, ci, ky, kx) * input.at(n, ci, y, x);
              }
            }
          }
          out.at(n, co, oy, ox) = acc + b;
        }
      }
    }
  }
  return out;
}

// (x - running_mean)/sqrt(running_var + eps) * scale + shift, per channel.
template <typename T>
Tensor4T<T> batchnorm_eval(const Tensor4T<T>& input, const BnStateT<T>& bn) {
  const int C = input.c();
  check(static_cast<int>(bn.running_mean->size()) == C &&
            static_cast<int>(bn.running_var->size()) == C &&
            static_cast<int>(bn.scale->size()) == C &&
            static_cast<int>(bn.shift->size()) == C,
        ErrorCode::kInvariant, "batchnorm_eval: channel count mismatch");
  std::vector<T> a(C), b(C);
  for (int ic = 0; ic < C; ++ic) {
    const T var = (*bn.running_var)[ic];
    check(var >= T(0), ErrorCode::kNumeric,
          "batchnorm_eval: negative running variance in channel " + std::to_string(ic));
    const T inv = T(1) / std::sqrt(var + bn.eps);
    a[ic] = (*bn.scale)[ic] * inv;
    b[ic] = (*bn.shift)[ic] - (*bn.running_mean)[ic] * a[ic];
  }
  Tensor4T<T> out(input.n(), C, input.h(), input.w());
  const int hw = input.h() * input.w();
  const T* src = input.data();
  T* dst = out.data();
  std::int64_t i = 0;
  for (int n = 0; n < input.n(); ++n)
    for (int ic = 0; ic < C; ++ic)
      for (int s = 0; s < hw; ++s, ++i) dst[i] = src[i] * a[ic] + b[ic];
  return out;
}

namespace detail {

template <typename T>
Tensor4T<T> relu_forward(const Tensor4T<T>& x) {
  Tensor4T<T> out = x;
  for (auto& v : out.storage())
    if (v < T(0)) v = T(0);
  return out;
}

template <typename T>
Tensor4T<T> avgpool_forward(const Tensor4T<T>& x, int window, int stride) {
  const int oh = (x.h() - window) / stride + 1;
  const int ow = (x.w() - window) / stride + 1;
  check(oh >= 1 && ow >= 1, ErrorCode::kInvariant, "avgpool: empty output");
  Tensor4T<T> out(x.n(), x.c(), oh, ow);
  const T inv = T(1) / static_cast<T>(window * window);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < window; ++ky)
            for (int kx = 0; kx < window; ++kx)
              acc += x.at(n, c, oy * stride + ky, ox * stride + kx);
          out.at(n, c, oy, ox) = acc * inv;
        }
  return out;
}

template <typename T>
Tensor4T<T> global_avgpool_forward(const Tensor4T<T>& x) {
  Tensor4T<T> out(x.n(), x.c(), 1, 1);
  const int hw = x.h() * x.w();
  const T inv = T(1) / static_cast<T>(hw);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      T acc = 0;
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) acc += x.at(n, c, y, xx);
      out.at(n, c, 0, 0) = acc * inv;
    }
  return out;
}

// weight (d_out, d_in, 1, 1); input flattened over (c,h,w).
template <typename T>
Tensor4T<T> linear_forward(const Tensor4T<T>& x, const Tensor4T<T>& weight,
                           const std::vector<T>* bias) {
  const int d_in = x.c() * x.h() * x.w();
  check(weight.c() == d_in, ErrorCode::kInvariant,
        "linear: weight expects d_in " + std::to_string(weight.c()) + ", got " +
            std::to_string(d_in));
  const int d_out = weight.n();
  Tensor4T<T> out(x.n(), d_out, 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    const T* row = x.data() + static_cast<std::int64_t>(n) * d_in;
    for (int o = 0; o < d_out; ++o) {
      T acc = bias ? (*bias)[o] : T(0);
      const T* wrow = weight.data() + static_cast<std::int64_t>(o) * d_in;
      for (int i = 0; i < d_in; ++i) acc += wrow[i] * row[i];
      out.at(n, o, 0, 0) = acc;
    }
  }
  return out;
}

template <typename T>
Tensor4T<T> add_forward(const Tensor4T<T>& a, const Tensor4T<T>& b) {
  check(a.same_shape(b), ErrorCode::kInvariant,
        "residual_add: shape " + a.shape_str() + " vs " + b.shape_str());
  Tensor4T<T> out = a;
  T* p = out.data();
  const T* q = b.data();
  for (std::int64_t i = 0; i < out.size(); ++i) p[i] += q[i];
  return out;
}

}  // namespace detail

// Per-BN-layer batch statistics and normalized activations, kept for the
// backward pass and for running-stat updates.
template <typename T>
struct BnBatchCacheT {
  std::vector<T> mean, var;  // population variance over (n,h,w)
  Tensor4T<T> xhat;
};

template <typename T>
struct ForwardCacheT {
  std::vector<Tensor4T<T>> outputs;          // per layer
  std::map<int, BnBatchCacheT<T>> bn;        // per BN layer id
};

enum class BnMode { kRunning, kBatch };

namespace detail {

template <typename T>
Tensor4T<T> batchnorm_batch(const Tensor4T<T>& x, const LayerSpec& spec,
                            const LayerParamsT<T>& p, BnBatchCacheT<T>* cache) {
  const int C = x.c();
  const int hw = x.h() * x.w();
  const std::int64_t cnt = static_cast<std::int64_t>(x.n()) * hw;
  std::vector<T> mean(C), var(C);
  for (int c = 0; c < C; ++c) {
    double acc = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const T* base = x.data() + x.index(n, c, 0, 0);
      for (int s = 0; s < hw; ++s) acc += static_cast<double>(base[s]);
    }
    const double m = acc / static_cast<double>(cnt);
    double acc2 = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const T* base = x.data() + x.index(n, c, 0, 0);
      for (int s = 0; s < hw; ++s) {
        const double d = static_cast<double>(base[s]) - m;
        acc2 += d * d;
      }
    }
    mean[c] = static_cast<T>(m);
    var[c] = static_cast<T>(acc2 / static_cast<double>(cnt));
  }
  Tensor4T<T> xhat(x.n(), C, x.h(), x.w());
  Tensor4T<T> out(x.n(), C, x.h(), x.w());
  for (int c = 0; c < C; ++c) {
    const T inv = T(1) / std::sqrt(var[c] + static_cast<T>(spec.eps_bn));
    const T g = p.bn_scale[c], b = p.bn_shift[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* src = x.data() + x.index(n, c, 0, 0);
      T* xh = xhat.data() + xhat.index(n, c, 0, 0);
      T* dst = out.data() + out.index(n, c, 0, 0);
      for (int s = 0; s < hw; ++s) {
        xh[s] = (src[s] - mean[c]) * inv;
        dst[s] = xh[s] * g + b;
      }
    }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->xhat = std::move(xhat);
  }
  return out;
}

}  // namespace detail

// Single forward walker. Pure unless `cache` collects BN batch stats for a
// later running-stat update. stop_after_layer truncates the pass (every
// layer only references earlier indices, so a prefix is self-contained).
template <typename T>
Tensor4T<T> forward_impl(const NetworkSpec& net, const ParametersT<T>& params,
                         const Tensor4T<T>& batch, BnMode bn_mode,
                         ForwardTapsT<T>* taps, ForwardCacheT<T>* cache,
                         int stop_after_layer = -1) {
  check(net.finalized(), ErrorCode::kInvariant, "forward: network not finalized");
  check(params.layers.size() == net.layers.size(), ErrorCode::kInvariant,
        "forward: parameter/layer count mismatch");
  check(batch.c() == net.in_channels && batch.h() == net.in_h && batch.w() == net.in_w,
        ErrorCode::kInvariant,
        "forward: batch shape " + batch.shape_str() + " does not match network input");
  const int last = stop_after_layer >= 0
                       ? stop_after_layer
                       : static_cast<int>(net.layers.size()) - 1;
  check(last < static_cast<int>(net.layers.size()), ErrorCode::kInvariant,
        "forward: stop layer out of range");

  std::vector<Tensor4T<T>> outputs(static_cast<std::size_t>(last) + 1);
  auto source = [&](int id, int which) -> const Tensor4T<T>& {
    if (which < 0) return batch;
    check(which < id, ErrorCode::kInvariant,
          "forward: layer " + std::to_string(id) + " references later layer");
    return outputs[which];
  };

  for (int id = 0; id <= last; ++id) {
    const LayerSpec& spec = net.layers[id];
    const LayerParamsT<T>& p = params.layers[id];
    const int src_id = spec.input_source >= 0 ? spec.input_source : id - 1;
    const Tensor4T<T>& in = source(id, src_id);
    switch (spec.kind) {
      case LayerKind::kConv2d: {
        outputs[id] = conv2d(in, p.weight, p.bias.empty() ? nullptr : &p.bias,
                             spec.stride, spec.padding);
        if (taps) {
          for (int want : taps->requested)
            if (want == id) taps->captured[id] = outputs[id];
        }
        break;
      }
      case LayerKind::kBatchNorm: {
        if (bn_mode == BnMode::kRunning) {
          BnStateT<T> st{&p.bn_running_mean, &p.bn_running_var, &p.bn_scale,
                         &p.bn_shift, static_cast<T>(spec.eps_bn)};
          outputs[id] = batchnorm_eval(in, st);
        } else {
          BnBatchCacheT<T>* bc = nullptr;
          if (cache) bc = &cache->bn[id];
          outputs[id] = detail::batchnorm_batch(in, spec, p, bc);
        }
        break;
      }
      case LayerKind::kRelu:
        outputs[id] = detail::relu_forward(in);
        break;
      case LayerKind::kAvgPool:
        outputs[id] = detail::avgpool_forward(in, spec.window, spec.pool_stride);
        break;
      case LayerKind::kGlobalAvgPool:
        outputs[id] = detail::global_avgpool_forward(in);
        break;
      case LayerKind::kLinear:
        outputs[id] = detail::linear_forward(in, p.weight,
                                             p.bias.empty() ? nullptr : &p.bias);
        break;
      case LayerKind::kResidualAdd: {
        const Tensor4T<T>& skip = source(id, spec.skip_source);
        outputs[id] = detail::add_forward(in, skip);
        break;
      }
    }
  }
  Tensor4T<T> result = outputs[last];
  if (cache) cache->outputs = std::move(outputs);
  return result;
}

// Inference-mode forward; pure. Fills requested pre-BN taps.
template <typename T>
Tensor4T<T> forward_eval(const NetworkSpec& net, const ParametersT<T>& params,
                         const Tensor4T<T>& batch, ForwardTapsT<T>* taps = nullptr,
                         int stop_after_layer = -1) {
  return forward_impl(net, params, batch, BnMode::kRunning, taps, nullptr,
                      stop_after_layer);
}

// Batch-statistics forward (training / recalibration normalization).
// When update_running is set, BN running stats take the cumulative average
// of per-batch moments: running += (batch_stat - running) / batches_seen.
template <typename T>
Tensor4T<T> forward_batchstats(const NetworkSpec& net, ParametersT<T>& params,
                               const Tensor4T<T>& batch, bool update_running,
                               ForwardCacheT<T>* cache = nullptr) {
  ForwardCacheT<T> local;
  ForwardCacheT<T>* use = cache ? cache : &local;
  Tensor4T<T> out = forward_impl(net, params, batch, BnMode::kBatch, nullptr, use);
  if (update_running) {
    for (auto& [id, bc] : use->bn) {
      LayerParamsT<T>& p = params.layers[id];
      p.bn_batches += 1;
      const T w = T(1) / static_cast<T>(p.bn_batches);
      for (std::size_t c = 0; c < bc.mean.size(); ++c) {
        p.bn_running_mean[c] += (bc.mean[c] - p.bn_running_mean[c]) * w;
        p.bn_running_var[c] += (bc.var[c] - p.bn_running_var[c]) * w;
      }
    }
  }
  return out;
}

void reset_bn_running_stats(const NetworkSpec& net, Parameters& params);

}  // namespace resus

#endif  // RESUS_NN_HPP_
