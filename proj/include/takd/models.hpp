// SPDX-License-Identifier: Apache-2.0
//
// Spatiotemporal encoders, 1D decoders, the GRF-1D encoder and the WAE
// discriminator. Every network is a list of LayerSpec records; the same list
// drives parameter/FLOP accounting and the built model.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "takd/checkpoint.hpp"
#include "takd/ops.hpp"

namespace takd {

enum class EncoderKind { C3D, I3D, R2P1D, C3D_small, GRF1D };

inline std::string kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::C3D: return "c3d";
    case EncoderKind::I3D: return "i3d";
    case EncoderKind::R2P1D: return "r2p1d";
    case EncoderKind::C3D_small: return "c3d-small";
    case EncoderKind::GRF1D: return "grf1d";
  }
  return "?";
}

inline EncoderKind parse_kind(const std::string& s) {
  for (auto k : {EncoderKind::C3D, EncoderKind::I3D, EncoderKind::R2P1D, EncoderKind::C3D_small, EncoderKind::GRF1D})
    if (kind_name(k) == s) return k;
  throw ConfigError("unknown encoder kind '" + s + "' (expected c3d, i3d, r2p1d, c3d-small or grf1d)");
}

enum class LayerOp { conv3d, conv1d, linear };

struct LayerSpec {
  std::string name;
  LayerOp op = LayerOp::conv3d;
  std::size_t c_in = 0, c_out = 0;
  Triple kernel{1, 1, 1}, stride{1, 1, 1}, pad{0, 0, 0};
  bool relu = true;
  std::string tap;  // registered tap name produced by this layer, if any
  int block = -1;   // factorized block index for (2+1)D

  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t fan_in() const { return c_in * kernel_volume(); }
  std::size_t param_count() const { return c_out * fan_in() + c_out; }
  Shape weight_shape() const {
    switch (op) {
      case LayerOp::conv3d: return {c_out, c_in, kernel[0], kernel[1], kernel[2]};
      case LayerOp::conv1d: return {c_out, c_in, kernel[0]};
      case LayerOp::linear: return {c_out, c_in};
    }
    return {};
  }
};

inline const std::vector<std::string>& registered_taps() {
  static const std::vector<std::string> names{"E1", "E2", "Mid", "D1", "D2"};
  return names;
}

// ---------------------------------------------------------------------------
// Architecture specs

struct ModelConfig {
  EncoderKind kind = EncoderKind::C3D;
  std::vector<std::size_t> enc_widths;  // per conv layer, or per block output for (2+1)D
  std::vector<std::size_t> mid_widths;  // (2+1)D spatial-conv widths inside blocks 1, 2, 3, 5
  std::vector<std::size_t> dec_widths;  // 4 decoder conv layers
  std::size_t dec_kernel = 3;
  std::size_t window = 100;
  std::size_t in_channels = 2;
  std::size_t grf_mid_channels = 0;  // GRF-1D only: output channels (decoder input)

  nlohmann::json to_json() const {
    return {{"kind", kind_name(kind)},     {"enc", enc_widths}, {"mid", mid_widths}, {"dec", dec_widths},
            {"dec_kernel", dec_kernel},    {"window", window},  {"in", in_channels}, {"grf_mid", grf_mid_channels}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.kind = parse_kind(j.at("kind").get<std::string>());
      c.enc_widths = j.at("enc").get<std::vector<std::size_t>>();
      c.mid_widths = j.at("mid").get<std::vector<std::size_t>>();
      c.dec_widths = j.at("dec").get<std::vector<std::size_t>>();
      c.dec_kernel = j.at("dec_kernel").get<std::size_t>();
      c.window = j.at("window").get<std::size_t>();
      c.in_channels = j.at("in").get<std::size_t>();
      c.grf_mid_channels = j.at("grf_mid").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad model descriptor: ") + e.what());
    }
    return c;
  }
};

/// Tuned widths; see the accounting tests for the resulting totals.
inline ModelConfig teacher_config(EncoderKind kind, std::size_t window = 100) {
  ModelConfig c;
  c.kind = kind;
  c.window = window;
  switch (kind) {
    case EncoderKind::C3D:
      c.enc_widths = {32, 64, 128, 160};
      c.dec_widths = {96, 128, 64, 64};
      c.dec_kernel = 3;
      break;
    case EncoderKind::I3D:
      c.enc_widths = {32, 32, 48, 48, 88, 88, 88, 20};
      c.dec_widths = {128, 64, 64, 64};
      c.dec_kernel = 5;
      break;
    case EncoderKind::R2P1D:
      c.enc_widths = {64, 96, 128, 128, 256};
      c.mid_widths = {64, 96, 128, 320};
      c.dec_widths = {128, 128, 128, 64};
      c.dec_kernel = 5;
      break;
    case EncoderKind::C3D_small:
    case EncoderKind::GRF1D:
      throw ConfigError("not a teacher kind: " + kind_name(kind));
  }
  return c;
}

inline ModelConfig student_config(std::size_t window = 100) {
  ModelConfig c;
  c.kind = EncoderKind::C3D_small;
  c.window = window;
  c.enc_widths = {16, 32, 64, 80};
  c.dec_widths = {48, 64, 32, 32};
  c.dec_kernel = 3;
  return c;
}

namespace detail {

inline LayerSpec conv3(std::string name, std::size_t ci, std::size_t co, Triple k, Triple s, Triple p,
                       std::string tap = {}, int block = -1) {
  LayerSpec l;
  l.name = std::move(name);
  l.op = LayerOp::conv3d;
  l.c_in = ci;
  l.c_out = co;
  l.kernel = k;
  l.stride = s;
  l.pad = p;
  l.tap = std::move(tap);
  l.block = block;
  return l;
}

inline LayerSpec conv1(std::string name, std::size_t ci, std::size_t co, std::size_t k, std::size_t pad,
                       std::string tap = {}, bool relu = true) {
  LayerSpec l;
  l.name = std::move(name);
  l.op = LayerOp::conv1d;
  l.c_in = ci;
  l.c_out = co;
  l.kernel = {k, 1, 1};
  l.pad = {pad, 0, 0};
  l.tap = std::move(tap);
  l.relu = relu;
  return l;
}

inline void require_widths(const std::vector<std::size_t>& w, std::size_t n, const char* what) {
  if (w.size() != n) throw ConfigError(std::string(what) + " needs " + std::to_string(n) + " widths");
  for (auto v : w)
    if (v == 0) throw ConfigError(std::string(what) + " widths must be positive");
}

}  // namespace detail

/// Encoder layer list for `cfg` (taps E1, E2 and Mid attached).
inline std::vector<LayerSpec> encoder_layers(const ModelConfig& cfg) {
  using detail::conv3;
  const auto& c = cfg.enc_widths;
  const std::size_t in = cfg.in_channels;
  std::vector<LayerSpec> L;
  switch (cfg.kind) {
    case EncoderKind::C3D:
    case EncoderKind::C3D_small:
      detail::require_widths(c, 4, "C3D encoder");
      L.push_back(conv3("enc.l1", in, c[0], {3, 4, 3}, {1, 2, 1}, {1, 0, 0}));
      L.push_back(conv3("enc.l2", c[0], c[1], {3, 3, 3}, {1, 1, 1}, {1, 0, 0}, "E1"));
      L.push_back(conv3("enc.l3", c[1], c[2], {3, 3, 3}, {1, 1, 1}, {1, 0, 0}, "E2"));
      L.push_back(conv3("enc.l4", c[2], c[3], {3, 3, 3}, {1, 1, 1}, {1, 0, 1}, "Mid"));
      break;
    case EncoderKind::I3D:
      detail::require_widths(c, 8, "I3D encoder");
      L.push_back(conv3("enc.l1", in, c[0], {5, 4, 3}, {1, 2, 1}, {2, 0, 0}));
      for (std::size_t i = 1; i < 8; ++i) {
        const bool l7 = i == 6;
        L.push_back(conv3("enc.l" + std::to_string(i + 1), c[i - 1], c[i], {3, 3, l7 ? 2u : 3u}, {1, 1, 1},
                          {1, 1, l7 ? 0u : 1u}, i == 1 ? "E1" : i == 6 ? "E2" : i == 7 ? "Mid" : ""));
      }
      break;
    case EncoderKind::R2P1D: {
      detail::require_widths(c, 5, "(2+1)D encoder");
      detail::require_widths(cfg.mid_widths, 4, "(2+1)D spatial");
      const auto& m = cfg.mid_widths;
      L.push_back(conv3("enc.b1.s", in, m[0], {1, 4, 3}, {1, 2, 1}, {0, 0, 0}, "", 1));
      L.push_back(conv3("enc.b1.t", m[0], c[0], {3, 1, 1}, {1, 1, 1}, {1, 0, 0}, "", 1));
      L.push_back(conv3("enc.b2.s", c[0], m[1], {1, 3, 3}, {1, 1, 1}, {0, 0, 0}, "", 2));
      L.push_back(conv3("enc.b2.t", m[1], c[1], {5, 1, 1}, {1, 1, 1}, {2, 0, 0}, "E1", 2));
      L.push_back(conv3("enc.b3.s", c[1], m[2], {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, "", 3));
      L.push_back(conv3("enc.b3.t", m[2], c[2], {3, 1, 1}, {1, 1, 1}, {1, 0, 0}, "", 3));
      L.push_back(conv3("enc.b4", c[2], c[3], {3, 3, 3}, {1, 1, 1}, {1, 0, 0}, "E2", 4));
      L.push_back(conv3("enc.b5.s", c[3], m[3], {1, 3, 2}, {1, 1, 1}, {0, 0, 0}, "", 5));
      L.push_back(conv3("enc.b5.t", m[3], c[4], {3, 1, 1}, {1, 1, 1}, {1, 0, 0}, "Mid", 5));
      break;
    }
    case EncoderKind::GRF1D: {
      if (c.empty()) throw ConfigError("GRF-1D encoder needs widths");
      if (cfg.grf_mid_channels == 0) throw ConfigError("GRF-1D encoder needs its output channel count");
      std::size_t prev = in;
      for (std::size_t i = 0; i < c.size(); ++i) {
        L.push_back(detail::conv1("enc.l" + std::to_string(i + 1), prev, c[i], 5, 2, i == 1 ? "E1" : ""));
        prev = c[i];
      }
      L.push_back(detail::conv1("enc.l" + std::to_string(c.size() + 1), prev, cfg.grf_mid_channels, 3, 1, "Mid"));
      if (L.size() >= 3) L[L.size() - 2].tap = L[L.size() - 2].tap.empty() ? "E2" : L[L.size() - 2].tap;
      break;
    }
  }
  return L;
}

/// Shape of one sample after each encoder layer: (c, t, h, w) for 3D kinds, (c, t) for GRF-1D.
inline std::vector<Shape> encoder_shapes(const ModelConfig& cfg, std::size_t t) {
  std::vector<Shape> out;
  const auto layers = encoder_layers(cfg);
  if (cfg.kind == EncoderKind::GRF1D) {
    for (const auto& l : layers) {
      t = detail::conv_out_dim(t, l.kernel[0], 1, l.pad[0], l.name.c_str());
      out.push_back({l.c_out, t});
    }
    return out;
  }
  std::array<std::size_t, 3> d{t, 16, 8};
  for (const auto& l : layers) {
    for (int i = 0; i < 3; ++i) d[i] = detail::conv_out_dim(d[i], l.kernel[i], l.stride[i], l.pad[i], l.name.c_str());
    out.push_back({l.c_out, d[0], d[1], d[2]});
  }
  return out;
}

/// Channels the decoder sees after folding Mid's spatial dims into channels.
inline std::size_t decoder_in_channels(const ModelConfig& cfg) {
  const auto s = encoder_shapes(cfg, cfg.window).back();
  return s.size() == 2 ? s[0] : s[0] * s[2] * s[3];
}

inline std::vector<LayerSpec> decoder_layers(const ModelConfig& cfg) {
  detail::require_widths(cfg.dec_widths, 4, "decoder");
  if (cfg.dec_kernel % 2 == 0) throw ConfigError("decoder kernel must be odd to preserve length");
  std::vector<LayerSpec> L;
  std::size_t prev = decoder_in_channels(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    L.push_back(detail::conv1("dec.l" + std::to_string(i + 1), prev, cfg.dec_widths[i], cfg.dec_kernel,
                              cfg.dec_kernel / 2, i == 0 ? "D1" : i == 2 ? "D2" : ""));
    prev = cfg.dec_widths[i];
  }
  L.push_back(detail::conv1("dec.head", prev, 2, 1, 0, "", false));
  return L;
}

/// Widths of the hidden affine layers; five affine layers in total.
struct DiscriminatorConfig {
  std::size_t mid_len = 0;
  std::vector<std::size_t> hidden{64, 32, 16, 8};

  /// Widths giving ~155M parameters on a 64,000-long Mid.
  static std::vector<std::size_t> full_scale() { return {2400, 512, 256, 128}; }
};

inline std::vector<LayerSpec> discriminator_layers(const DiscriminatorConfig& cfg) {
  if (cfg.mid_len == 0) throw ConfigError("discriminator needs a positive Mid length");
  detail::require_widths(cfg.hidden, 4, "discriminator");
  std::vector<LayerSpec> L;
  std::size_t prev = cfg.mid_len;
  for (std::size_t i = 0; i < 5; ++i) {
    LayerSpec l;
    l.name = "disc.l" + std::to_string(i + 1);
    l.op = LayerOp::linear;
    l.c_in = prev;
    l.c_out = i < 4 ? cfg.hidden[i] : 1;
    l.relu = i < 4;
    L.push_back(l);
    prev = l.c_out;
  }
  return L;
}

struct Accounting {
  std::size_t params = 0;
  double flops = 0;  // 2 x multiply-accumulates for one sample
};

inline Accounting count_params_flops(const ModelConfig& cfg, std::size_t t) {
  Accounting a;
  const auto enc = encoder_layers(cfg);
  const auto shapes = encoder_shapes(cfg, t);
  for (std::size_t i = 0; i < enc.size(); ++i) {
    a.params += enc[i].param_count();
    std::size_t positions = 1;
    for (std::size_t d = 1; d < shapes[i].size(); ++d) positions *= shapes[i][d];
    a.flops += 2.0 * static_cast<double>(enc[i].fan_in() * enc[i].c_out * positions);
  }
  const std::size_t t_mid = shapes.back()[1];
  for (const auto& l : decoder_layers(cfg)) {
    a.params += l.param_count();
    const std::size_t positions = l.name == "dec.head" ? t : t_mid;
    a.flops += 2.0 * static_cast<double>(l.fan_in() * l.c_out * positions);
  }
  return a;
}

inline Accounting count_params_flops(const DiscriminatorConfig& cfg) {
  Accounting a;
  for (const auto& l : discriminator_layers(cfg)) {
    a.params += l.param_count();
    a.flops += 2.0 * static_cast<double>(l.fan_in() * l.c_out);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Built networks

template <typename T>
struct Layer {
  LayerSpec spec;
  Tensor<T> weight;
  Tensor<T> bias;

  Tensor<T> apply(const Tensor<T>& x) const {
    Tensor<T> y;
    switch (spec.op) {
      case LayerOp::conv3d: y = conv3d(x, weight, bias, spec.stride, spec.pad); break;
      case LayerOp::conv1d: y = conv1d(x, weight, bias, spec.stride[0], spec.pad[0]); break;
      case LayerOp::linear: y = linear(x, weight, bias); break;
    }
    return spec.relu ? relu(y) : y;
  }
};

namespace detail {

template <typename T>
std::vector<Layer<T>> instantiate(const std::vector<LayerSpec>& specs, std::mt19937_64& rng) {
  std::vector<Layer<T>> out;
  for (const auto& s : specs) {
    const double bound = std::sqrt(1.0 / static_cast<double>(s.fan_in()));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer<T> l{s, Tensor<T>(s.weight_shape()), Tensor<T>(Shape{s.c_out})};
    for (auto& v : l.weight.data()) v = static_cast<T>(u(rng));
    for (auto& v : l.bias.data()) v = static_cast<T>(u(rng));
    l.weight.set_requires_grad();
    l.bias.set_requires_grad();
    out.push_back(std::move(l));
  }
  return out;
}

template <typename T>
void collect(std::vector<Layer<T>>& layers, std::vector<Tensor<T>>& out) {
  for (auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
}

}  // namespace detail

/// Captured activation with its layout: (b, c, t, h, w) or (b, c, t).
template <typename T>
struct FeatureTap {
  std::string name;
  Tensor<T> value;

  std::size_t batch() const { return value.dim(0); }
  std::size_t channels() const { return value.dim(1); }
  std::size_t time() const { return value.dim(2); }
  bool spatial() const { return value.rank() == 5; }
};

template <typename T>
using TapMap = std::map<std::string, FeatureTap<T>>;

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  TapMap<T> taps;
};

/// Encoder + 1D decoder with named taps.
template <typename T>
class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    if (cfg_.window == 0) throw ConfigError("window must be positive");
    std::mt19937_64 rng(seed);
    encoder_ = detail::instantiate<T>(encoder_layers(cfg_), rng);
    decoder_ = detail::instantiate<T>(decoder_layers(cfg_), rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Layer<T>>& encoder() { return encoder_; }
  std::vector<Layer<T>>& decoder() { return decoder_; }
  const std::vector<Layer<T>>& encoder() const { return encoder_; }
  const std::vector<Layer<T>>& decoder() const { return decoder_; }

  std::vector<Tensor<T>> encoder_parameters() {
    std::vector<Tensor<T>> p;
    detail::collect(encoder_, p);
    return p;
  }
  std::vector<Tensor<T>> decoder_parameters() {
    std::vector<Tensor<T>> p;
    detail::collect(decoder_, p);
    return p;
  }
  std::vector<Tensor<T>> parameters() {
    auto p = encoder_parameters();
    detail::collect(decoder_, p);
    return p;
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto* part : {&encoder_, &decoder_})
      for (const auto& l : *part) n += l.weight.numel() + l.bias.numel();
    return n;
  }

  /// Fresh decoder weights from `seed`; the encoder is untouched.
  void reinit_decoder(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    decoder_ = detail::instantiate<T>(decoder_layers(cfg_), rng);
  }

  Tensor<T> encode(const Tensor<T>& x, TapMap<T>* taps = nullptr,
                   const std::set<std::string>* wanted = nullptr) const {
    const bool grf = cfg_.kind == EncoderKind::GRF1D;
    if (grf ? (x.rank() != 3 || x.dim(1) != cfg_.in_channels)
            : (x.rank() != 5 || x.dim(1) != cfg_.in_channels || x.dim(3) != 16 || x.dim(4) != 8))
      throw ShapeError(kind_name(cfg_.kind) + " encoder got input " + to_string(x.shape()));
    Tensor<T> h = x;
    for (const auto& l : encoder_) {
      h = l.apply(h);
      capture(l.spec.tap, h, taps, wanted);
    }
    return h;
  }

  /// Folds a 5-D Mid (b, c, t, h, w) into (b, c·h·w, t); 3-D input passes through.
  static Tensor<T> decoder_input(const Tensor<T>& mid) {
    if (mid.rank() == 3) return mid;
    if (mid.rank() != 5) throw ShapeError("decoder input must be 3-D or 5-D, got " + to_string(mid.shape()));
    auto p = permute(mid, {0, 1, 3, 4, 2});
    return reshape(p, Shape{mid.dim(0), mid.dim(1) * mid.dim(3) * mid.dim(4), mid.dim(2)});
  }

  Tensor<T> decode(const Tensor<T>& mid, std::size_t target_t, TapMap<T>* taps = nullptr,
                   const std::set<std::string>* wanted = nullptr) const {
    auto h = decoder_input(mid);
    if (h.dim(1) != decoder_[0].spec.c_in)
      throw ShapeError("decoder expects " + std::to_string(decoder_[0].spec.c_in) + " channels, got " +
                       std::to_string(h.dim(1)));
    for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) {
      h = decoder_[i].apply(h);
      capture(decoder_[i].spec.tap, h, taps, wanted);
    }
    if (h.dim(2) != target_t) h = resize_axis(h, 2, target_t);
    return decoder_.back().apply(h);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return decode(encode(x), x.dim(2)); }

  /// Single pass returning the output and the requested activations (no recomputation).
  ForwardResult<T> forward_with_taps(const Tensor<T>& x, const std::vector<std::string>& names) const {
    std::set<std::string> wanted;
    for (const auto& n : names) {
      if (std::find(registered_taps().begin(), registered_taps().end(), n) == registered_taps().end())
        throw ConfigError("unknown tap '" + n + "'");
      wanted.insert(n);
    }
    ForwardResult<T> r;
    auto mid = encode(x, &r.taps, &wanted);
    r.output = decode(mid, x.dim(2), &r.taps, &wanted);
    return r;
  }

  std::string descriptor() const { return cfg_.to_json().dump(); }

  Checkpoint to_checkpoint(const nlohmann::json& extra = {}) const {
    auto arch = cfg_.to_json();
    if (!extra.is_null()) arch["meta"] = extra;
    Checkpoint c;
    c.architecture = arch.dump();
    for (const auto* part : {&encoder_, &decoder_})
      for (const auto& l : *part) {
        c.tensors.push_back({l.spec.name + ".weight", l.weight.template cast<float>()});
        c.tensors.push_back({l.spec.name + ".bias", l.bias.template cast<float>()});
      }
    return c;
  }

  static Model from_checkpoint(const Checkpoint& c) {
    nlohmann::json arch;
    try {
      arch = nlohmann::json::parse(c.architecture);
    } catch (const nlohmann::json::exception&) {
      throw IoError("checkpoint architecture descriptor is not valid JSON");
    }
    Model m(ModelConfig::from_json(arch), 0);
    for (auto* part : {&m.encoder_, &m.decoder_})
      for (auto& l : *part) {
        for (auto [suffix, dst] : {std::pair{".weight", &l.weight}, std::pair{".bias", &l.bias}}) {
          const auto* src = c.find(l.spec.name + suffix);
          if (src == nullptr) throw IoError("checkpoint lacks tensor " + l.spec.name + suffix);
          if (src->shape() != dst->shape())
            throw IoError("checkpoint tensor " + l.spec.name + suffix + " has shape " + to_string(src->shape()) +
                          ", architecture expects " + to_string(dst->shape()));
          *dst = src->template cast<T>();
          dst->set_requires_grad();
        }
      }
    return m;
  }

  /// Deep copy of all parameters (fresh storage).
  Model clone() const {
    Model m = *this;
    for (auto* part : {&m.encoder_, &m.decoder_})
      for (auto& l : *part) {
        l.weight = l.weight.clone().set_requires_grad(l.weight.requires_grad());
        l.bias = l.bias.clone().set_requires_grad(l.bias.requires_grad());
      }
    return m;
  }

 private:
  static void capture(const std::string& tap, const Tensor<T>& h, TapMap<T>* taps,
                      const std::set<std::string>* wanted) {
    if (tap.empty() || taps == nullptr) return;
    if (wanted != nullptr && !wanted->count(tap)) return;
    (*taps)[tap] = FeatureTap<T>{tap, h};
  }

  ModelConfig cfg_;
  std::vector<Layer<T>> encoder_;
  std::vector<Layer<T>> decoder_;
};

template <typename T>
Model<T> build_student(std::size_t window, std::uint64_t seed) {
  return Model<T>(student_config(window), seed);
}

template <typename T>
Model<T> build_teacher(EncoderKind kind, std::size_t window, std::uint64_t seed) {
  return Model<T>(teacher_config(kind, window), seed);
}

/// GRF-1D encoder + decoder whose Mid matches `paired`'s decoder input, so the
/// two encoders can share one decoder.
inline ModelConfig grf_autoencoder_config(const ModelConfig& paired) {
  ModelConfig c;
  c.kind = EncoderKind::GRF1D;
  c.window = paired.window;
  c.enc_widths = {32, 64, 128};
  c.dec_widths = paired.dec_widths;
  c.dec_kernel = paired.dec_kernel;
  c.grf_mid_channels = decoder_in_channels(paired);
  return c;
}

/// Five affine layers with ReLU between them; outputs a logit per sample.
template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    std::mt19937_64 rng(seed);
    layers_ = detail::instantiate<T>(discriminator_layers(cfg_), rng);
  }

  Tensor<T> logits(const Tensor<T>& mid) const {
    auto h = flatten(mid, 1);
    if (h.dim(1) != cfg_.mid_len)
      throw ShapeError("discriminator expects Mid length " + std::to_string(cfg_.mid_len) + ", got " +
                       std::to_string(h.dim(1)));
    for (const auto& l : layers_) h = l.apply(h);
    return h;
  }
  Tensor<T> probability(const Tensor<T>& mid) const { return sigmoid(logits(mid)); }

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> p;
    detail::collect(layers_, p);
    return p;
  }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Layer<T>> layers_;
};

/// 1×1×1 heads producing (μ, log σ²) over a 5-D Mid.
template <typename T>
class VaeHeads {
 public:
  VaeHeads() = default;
  VaeHeads(std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    layers_ = detail::instantiate<T>(
        {detail::conv3("vae.mu", channels, channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}),
         detail::conv3("vae.logvar", channels, channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0})},
        rng);
    for (auto& l : layers_) l.spec.relu = false;
  }
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& mid) const {
    return {layers_[0].apply(mid), layers_[1].apply(mid)};
  }
  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> p;
    detail::collect(layers_, p);
    return p;
  }
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

 private:
  std::vector<Layer<T>> layers_;
};

}  // namespace takd
