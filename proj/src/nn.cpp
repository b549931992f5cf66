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

#include "resus/nn.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "resus/rng.hpp"

namespace resus {

using ordered_json = nlohmann::ordered_json;

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kGlobalAvgPool: return "global_avgpool";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kResidualAdd: return "residual_add";
  }
  fail(ErrorCode::kInvariant, "unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "conv2d") return LayerKind::kConv2d;
  if (name == "batchnorm") return LayerKind::kBatchNorm;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "avgpool") return LayerKind::kAvgPool;
  if (name == "global_avgpool") return LayerKind::kGlobalAvgPool;
  if (name == "linear") return LayerKind::kLinear;
  if (name == "residual_add") return LayerKind::kResidualAdd;
  fail(ErrorCode::kInvariant, "unknown layer kind '" + name + "'");
}

void NetworkSpec::finalize() {
  check(in_channels >= 1 && in_h >= 1 && in_w >= 1 && num_classes >= 2,
        ErrorCode::kInvariant, "network: bad input spec");
  check(!layers.empty(), ErrorCode::kInvariant, "network: no layers");
  out_shapes.assign(layers.size(), Shape{});
  repairable_layer_ids.clear();
  first_conv_id = -1;

  auto shape_of = [&](int id, int src) -> Shape {
    if (src < 0) return Shape{in_channels, in_h, in_w};
    check(src < id, ErrorCode::kInvariant,
          "layer " + std::to_string(id) + " references layer " +
              std::to_string(src) + " at or after itself");
    return out_shapes[src];
  };

  for (int id = 0; id < static_cast<int>(layers.size()); ++id) {
    const LayerSpec& s = layers[id];
    const int src = s.input_source >= 0 ? s.input_source : id - 1;
    const Shape in = shape_of(id, src);
    Shape out = in;
    const std::string where = "layer " + std::to_string(id) + " (" +
                              layer_kind_name(s.kind) + ")";
    switch (s.kind) {
      case LayerKind::kConv2d: {
        check(s.c_in == in.c, ErrorCode::kInvariant,
              where + ": expects c_in " + std::to_string(s.c_in) + ", input has " +
                  std::to_string(in.c));
        check(s.k >= 1 && s.stride >= 1 && s.padding >= 0, ErrorCode::kInvariant,
              where + ": bad conv geometry");
        out.c = s.c_out;
        out.h = (in.h + 2 * s.padding - s.k) / s.stride + 1;
        out.w = (in.w + 2 * s.padding - s.k) / s.stride + 1;
        check(out.h >= 1 && out.w >= 1, ErrorCode::kInvariant, where + ": empty output");
        if (first_conv_id < 0) first_conv_id = id;
        break;
      }
      case LayerKind::kBatchNorm:
        check(s.channels == in.c, ErrorCode::kInvariant,
              where + ": expects " + std::to_string(s.channels) + " channels, input has " +
                  std::to_string(in.c));
        break;
      case LayerKind::kRelu:
        break;
      case LayerKind::kAvgPool:
        check(s.window >= 1 && s.pool_stride >= 1, ErrorCode::kInvariant,
              where + ": bad pool geometry");
        out.h = (in.h - s.window) / s.pool_stride + 1;
        out.w = (in.w - s.window) / s.pool_stride + 1;
        check(out.h >= 1 && out.w >= 1, ErrorCode::kInvariant, where + ": empty output");
        break;
      case LayerKind::kGlobalAvgPool:
        out.h = 1;
        out.w = 1;
        break;
      case LayerKind::kLinear:
        check(s.d_in == in.c * in.h * in.w, ErrorCode::kInvariant,
              where + ": expects d_in " + std::to_string(s.d_in) + ", input flattens to " +
                  std::to_string(in.c * in.h * in.w));
        out = Shape{s.d_out, 1, 1};
        break;
      case LayerKind::kResidualAdd: {
        check(s.skip_source >= 0, ErrorCode::kInvariant, where + ": missing skip_source");
        const Shape skip = shape_of(id, s.skip_source);
        check(skip == in, ErrorCode::kInvariant,
              where + ": branch shape " + in.str() + " vs skip " + skip.str());
        break;
      }
    }
    out_shapes[id] = out;
  }
  const Shape last = out_shapes.back();
  check(last.c == num_classes && last.h == 1 && last.w == 1, ErrorCode::kInvariant,
        "network: final shape " + last.str() + " is not (num_classes,1,1)");

  // Repairable: conv immediately followed by batchnorm, first conv excluded.
  for (int id = 0; id + 1 < static_cast<int>(layers.size()); ++id) {
    if (layers[id].kind == LayerKind::kConv2d &&
        layers[id + 1].kind == LayerKind::kBatchNorm && id != first_conv_id) {
      // the BN must actually consume this conv's output
      const LayerSpec& bn = layers[id + 1];
      const int bn_src = bn.input_source >= 0 ? bn.input_source : id;
      if (bn_src == id) repairable_layer_ids.push_back(id);
    }
  }
}

bool NetworkSpec::same_topology(const NetworkSpec& o) const {
  if (layers.size() != o.layers.size()) return false;
  if (in_channels != o.in_channels || in_h != o.in_h || in_w != o.in_w ||
      num_classes != o.num_classes)
    return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& a = layers[i];
    const LayerSpec& b = o.layers[i];
    if (a.kind != b.kind || a.c_in != b.c_in || a.c_out != b.c_out || a.k != b.k ||
        a.stride != b.stride || a.padding != b.padding || a.has_bias != b.has_bias ||
        a.channels != b.channels || a.window != b.window ||
        a.pool_stride != b.pool_stride || a.d_in != b.d_in || a.d_out != b.d_out ||
        a.input_source != b.input_source || a.skip_source != b.skip_source)
      return false;
  }
  return true;
}

std::string NetworkSpec::to_json() const {
  ordered_json j;
  j["arch"] = arch;
  j["in_channels"] = in_channels;
  j["in_h"] = in_h;
  j["in_w"] = in_w;
  j["num_classes"] = num_classes;
  j["layers"] = ordered_json::array();
  for (const LayerSpec& s : layers) {
    ordered_json l;
    l["kind"] = layer_kind_name(s.kind);
    switch (s.kind) {
      case LayerKind::kConv2d:
        l["c_in"] = s.c_in;
        l["c_out"] = s.c_out;
        l["k"] = s.k;
        l["stride"] = s.stride;
        l["padding"] = s.padding;
        l["has_bias"] = s.has_bias;
        break;
      case LayerKind::kBatchNorm:
        l["channels"] = s.channels;
        l["eps"] = s.eps_bn;
        l["affine"] = s.affine;
        break;
      case LayerKind::kAvgPool:
        l["window"] = s.window;
        l["stride"] = s.pool_stride;
        break;
      case LayerKind::kLinear:
        l["d_in"] = s.d_in;
        l["d_out"] = s.d_out;
        l["has_bias"] = s.has_bias;
        break;
      case LayerKind::kResidualAdd:
        l["skip_source"] = s.skip_source;
        break;
      default:
        break;
    }
    if (s.input_source >= 0) l["input_source"] = s.input_source;
    j["layers"].push_back(l);
  }
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  NetworkSpec net;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorCode::kInvariant, std::string("network json: ") + e.what());
  }
  net.arch = j.value("arch", "custom");
  net.in_channels = j.at("in_channels").get<int>();
  net.in_h = j.at("in_h").get<int>();
  net.in_w = j.at("in_w").get<int>();
  net.num_classes = j.at("num_classes").get<int>();
  for (const auto& l : j.at("layers")) {
    LayerSpec s;
    s.kind = layer_kind_from_name(l.at("kind").get<std::string>());
    switch (s.kind) {
      case LayerKind::kConv2d:
        s.c_in = l.at("c_in").get<int>();
        s.c_out = l.at("c_out").get<int>();
        s.k = l.at("k").get<int>();
        s.stride = l.at("stride").get<int>();
        s.padding = l.at("padding").get<int>();
        s.has_bias = l.at("has_bias").get<bool>();
        break;
      case LayerKind::kBatchNorm:
        s.channels = l.at("channels").get<int>();
        s.eps_bn = l.at("eps").get<float>();
        s.affine = l.at("affine").get<bool>();
        break;
      case LayerKind::kAvgPool:
        s.window = l.at("window").get<int>();
        s.pool_stride = l.at("stride").get<int>();
        break;
      case LayerKind::kLinear:
        s.d_in = l.at("d_in").get<int>();
        s.d_out = l.at("d_out").get<int>();
        s.has_bias = l.at("has_bias").get<bool>();
        break;
      case LayerKind::kResidualAdd:
        s.skip_source = l.at("skip_source").get<int>();
        break;
      default:
        break;
    }
    if (l.contains("input_source")) s.input_source = l.at("input_source").get<int>();
    net.layers.push_back(s);
  }
  net.finalize();
  return net;
}

namespace {

void push_conv_bn_relu(NetworkSpec& net, int c_in, int c_out, int stride = 1) {
  net.layers.push_back(LayerSpec::conv(c_in, c_out, 3, stride, 1, /*bias=*/false));
  net.layers.push_back(LayerSpec::batchnorm(c_out));
  net.layers.push_back(LayerSpec::relu());
}

}  // namespace

NetworkSpec make_tiny_plain(int in_channels, int num_classes, int in_h, int in_w) {
  NetworkSpec net;
  net.arch = "tiny-plain";
  net.in_channels = in_channels;
  net.in_h = in_h;
  net.in_w = in_w;
  net.num_classes = num_classes;
  push_conv_bn_relu(net, in_channels, 16);
  net.layers.push_back(LayerSpec::avgpool(2, 2));
  push_conv_bn_relu(net, 16, 24);
  net.layers.push_back(LayerSpec::avgpool(2, 2));
  push_conv_bn_relu(net, 24, 32);
  push_conv_bn_relu(net, 32, 32);
  net.layers.push_back(LayerSpec::global_avgpool());
  net.layers.push_back(LayerSpec::linear(32, num_classes));
  net.finalize();
  return net;
}

NetworkSpec make_tiny_res(int in_channels, int num_classes, int in_h, int in_w) {
  NetworkSpec net;
  net.arch = "tiny-res";
  net.in_channels = in_channels;
  net.in_h = in_h;
  net.in_w = in_w;
  net.num_classes = num_classes;

  // stem: 0..2
  push_conv_bn_relu(net, in_channels, 16);

  // block 1, identity skip: 3..9
  push_conv_bn_relu(net, 16, 16);
  net.layers.push_back(LayerSpec::conv(16, 16, 3, 1, 1));
  net.layers.push_back(LayerSpec::batchnorm(16));
  net.layers.push_back(LayerSpec::residual_add(/*skip_source=*/2));
  net.layers.push_back(LayerSpec::relu());

  // block 2, stride-2 with 1x1 projection skip: 10..18
  push_conv_bn_relu(net, 16, 32, /*stride=*/2);
  net.layers.push_back(LayerSpec::conv(32, 32, 3, 1, 1));
  net.layers.push_back(LayerSpec::batchnorm(32));
  {
    LayerSpec proj = LayerSpec::conv(16, 32, 1, 2, 0);
    proj.input_source = 9;  // block input
    net.layers.push_back(proj);
  }
  net.layers.push_back(LayerSpec::batchnorm(32));
  net.layers.push_back(LayerSpec::residual_add(/*skip_source=*/14));
  net.layers.push_back(LayerSpec::relu());

  // block 3, identity skip: 19..25
  push_conv_bn_relu(net, 32, 32);
  net.layers.push_back(LayerSpec::conv(32, 32, 3, 1, 1));
  net.layers.push_back(LayerSpec::batchnorm(32));
  net.layers.push_back(LayerSpec::residual_add(/*skip_source=*/18));
  net.layers.push_back(LayerSpec::relu());

  net.layers.push_back(LayerSpec::global_avgpool());
  net.layers.push_back(LayerSpec::linear(32, num_classes));
  net.finalize();
  return net;
}

NetworkSpec make_preset(const std::string& name, int in_channels, int num_classes,
                        int in_h, int in_w) {
  if (name == "tiny-plain") return make_tiny_plain(in_channels, num_classes, in_h, in_w);
  if (name == "tiny-res") return make_tiny_res(in_channels, num_classes, in_h, in_w);
  fail(ErrorCode::kInvariant, "unknown architecture preset '" + name + "'");
}

Parameters init_parameters(const NetworkSpec& net, std::uint64_t seed) {
  check(net.finalized(), ErrorCode::kInvariant, "init_parameters: network not finalized");
  Parameters params;
  params.layers.resize(net.layers.size());
  for (std::size_t id = 0; id < net.layers.size(); ++id) {
    const LayerSpec& s = net.layers[id];
    LayerParams& p = params.layers[id];
    Rng rng(mix_seed(seed, id));
    switch (s.kind) {
      case LayerKind::kConv2d: {
        p.weight = Tensor4(s.c_out, s.c_in, s.k, s.k);
        const double std = std::sqrt(2.0 / (s.c_in * s.k * s.k));
        for (auto& w : p.weight.storage()) w = static_cast<float>(rng.normal() * std);
        if (s.has_bias) p.bias.assign(s.c_out, 0.0f);
        break;
      }
      case LayerKind::kLinear: {
        p.weight = Tensor4(s.d_out, s.d_in, 1, 1);
        const double std = std::sqrt(2.0 / s.d_in);
        for (auto& w : p.weight.storage()) w = static_cast<float>(rng.normal() * std);
        if (s.has_bias) p.bias.assign(s.d_out, 0.0f);
        break;
      }
      case LayerKind::kBatchNorm: {
        p.bn_scale.assign(s.channels, 1.0f);
        p.bn_shift.assign(s.channels, 0.0f);
        p.bn_running_mean.assign(s.channels, 0.0f);
        p.bn_running_var.assign(s.channels, 1.0f);
        p.bn_batches = 0;
        break;
      }
      default:
        break;
    }
  }
  return params;
}

void reset_bn_running_stats(const NetworkSpec& net, Parameters& params) {
  for (std::size_t id = 0; id < net.layers.size(); ++id) {
    if (net.layers[id].kind != LayerKind::kBatchNorm) continue;
    LayerParams& p = params.layers[id];
    std::fill(p.bn_running_mean.begin(), p.bn_running_mean.end(), 0.0f);
    std::fill(p.bn_running_var.begin(), p.bn_running_var.end(), 1.0f);
    p.bn_batches = 0;
  }
}

}  // namespace resus
