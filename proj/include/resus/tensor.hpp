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

#ifndef RESUS_TENSOR_HPP_
#define RESUS_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "resus/error.hpp"

namespace resus {

// Dense NCHW tensor, flat storage in n-major (n, c, h, w) order.
// All reductions accumulate in 64-bit and run in flat index order so
// repeated runs on identical input are bit-identical.
template <typename T>
class Tensor4T {
 public:
  Tensor4T() = default;
  Tensor4T(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
    check(n >= 1 && c >= 1 && h >= 1 && w >= 1, ErrorCode::kInvariant,
          "Tensor4: all dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
  }

  static Tensor4T full(int n, int c, int h, int w, T value) {
    Tensor4T t(n, c, h, w);
    for (auto& x : t.data_) x = value;
    return t;
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::int64_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<std::int64_t>(in) * c_ + ic) * h_ + iy) * w_ + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return data_[index(in, ic, iy, ix)]; }
  T at(int in, int ic, int iy, int ix) const { return data_[index(in, ic, iy, ix)]; }

  bool same_shape(const Tensor4T& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_str() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" +
           std::to_string(h_) + "x" + std::to_string(w_);
  }

  template <typename U>
  Tensor4T<U> cast() const {
    Tensor4T<U> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

using Tensor4 = Tensor4T<float>;

// Per-channel vector; length always equals the channel count of the tensor
// it summarizes.
using ChannelVector = std::vector<float>;

namespace detail {

// Per-channel Welford state; stable for near-collapsed channels where a
// sum-of-squares pass would cancel.
struct Welford {
  std::int64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  // population variance (divide by count)
  double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
};

template <typename T>
void accumulate_channel_moments(const Tensor4T<T>& t, std::vector<Welford>& acc,
                                const std::string& what) {
  check(static_cast<int>(acc.size()) == t.c(), ErrorCode::kInvariant,
        "channel moment accumulator length mismatch");
  const T* p = t.data();
  std::int64_t i = 0;
  for (int in = 0; in < t.n(); ++in) {
    for (int ic = 0; ic < t.c(); ++ic) {
      Welford& w = acc[ic];
      for (int s = 0; s < t.h() * t.w(); ++s, ++i) {
        const double x = static_cast<double>(p[i]);
        if (!std::isfinite(x))
          fail(ErrorCode::kNumeric, what + ": non-finite value in channel " +
                                        std::to_string(ic));
        w.add(x);
      }
    }
  }
}

}  // namespace detail

// Population variance (divisor n*h*w) of each channel over batch and
// spatial dimensions.
template <typename T>
ChannelVector channel_variance(const Tensor4T<T>& t) {
  std::vector<detail::Welford> acc(t.c());
  detail::accumulate_channel_moments(t, acc, "channel_variance");
  ChannelVector out(t.c());
  for (int ic = 0; ic < t.c(); ++ic) {
    const double v = acc[ic].variance();
    out[ic] = static_cast<float>(v < 0.0 ? 0.0 : v);
  }
  return out;
}

// Arithmetic mean of each channel over batch and spatial dimensions.
template <typename T>
ChannelVector channel_mean(const Tensor4T<T>& t) {
  std::vector<detail::Welford> acc(t.c());
  detail::accumulate_channel_moments(t, acc, "channel_mean");
  ChannelVector out(t.c());
  for (int ic = 0; ic < t.c(); ++ic) out[ic] = static_cast<float>(acc[ic].mean);
  return out;
}

// Every element of channel i multiplied by g[i]; shape unchanged.
template <typename T>
Tensor4T<T> scale_channels(const Tensor4T<T>& t, const std::vector<T>& g) {
  check(static_cast<int>(g.size()) == t.c(), ErrorCode::kInvariant,
        "scale_channels: gain length " + std::to_string(g.size()) +
            " != channel count " + std::to_string(t.c()));
  Tensor4T<T> out = t;
  T* p = out.data();
  std::int64_t i = 0;
  const int hw = t.h() * t.w();
  for (int in = 0; in < t.n(); ++in)
    for (int ic = 0; ic < t.c(); ++ic)
      for (int s = 0; s < hw; ++s, ++i) p[i] *= g[ic];
  return out;
}

}  // namespace resus

#endif  // RESUS_TENSOR_HPP_
