#pragma once

#include <span>

#include "qus/nn/layers.hpp"

namespace qus::nn {

/// Input channel configuration for the image models.
enum class Channels { A, AlogA, Both };

inline std::size_t channel_count(Channels c) { return c == Channels::Both ? 2 : 1; }

inline const char* channels_name(Channels c) {
  switch (c) {
    case Channels::A: return "a";
    case Channels::AlogA: return "aloga";
    default: return "both";
  }
}

inline Channels channels_from_name(const std::string& s) {
  if (s == "a") return Channels::A;
  if (s == "aloga") return Channels::AlogA;
  if (s == "both") return Channels::Both;
  throw InvalidArgument("unknown channel configuration '" + s + "'");
}

/// Builds the network input from envelope patches. Channel "a" is the patch
/// min-max normalized to [0, 1]; channel "aloga" is a*log(a) with the log
/// argument floored at 1e-6. Constant patches cannot be normalized.
template <class T>
Tensor<T> make_input(std::span<const EnvelopePatch> patches, Channels channels) {
  if (patches.empty()) throw InvalidArgument("make_input: no patches");
  const int rows = patches[0].rows, cols = patches[0].cols;
  const std::size_t ch = channel_count(channels);
  const std::size_t hw = static_cast<std::size_t>(rows) * cols;
  Tensor<T> x({patches.size(), ch, static_cast<std::size_t>(rows),
               static_cast<std::size_t>(cols)});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = patches[i];
    if (p.rows != rows || p.cols != cols)
      throw InvalidArgument("make_input: mixed patch shapes");
    double lo = p.values[0], hi = p.values[0];
    for (double v : p.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw DegenerateStatistic("make_input: constant patch");
    const double inv = 1.0 / (hi - lo);
    T* base = x.ptr() + i * ch * hw;
    for (std::size_t o = 0; o < hw; ++o) {
      const double a = (p.values[o] - lo) * inv;
      if (channels == Channels::A || channels == Channels::Both)
        base[o] = static_cast<T>(a);
      if (channels == Channels::AlogA || channels == Channels::Both) {
        const double v = a * std::log(std::max(a, 1e-6));
        base[(ch - 1) * hw + o] = static_cast<T>(v);
      }
    }
  }
  return x;
}

template <class T>
std::vector<T> labels_of(std::span<const EnvelopePatch> patches) {
  std::vector<T> y(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].label != Label::LDS && patches[i].label != Label::FDS)
      throw InvalidArgument("labels_of: unlabeled patch");
    y[i] = patches[i].label == Label::FDS ? T(1) : T(0);
  }
  return y;
}

// ---------------------------------------------------------------------------
// MLP over the four summary statistics:
//   4 -> dense 128 -> BN -> tanh -> dense 32 -> BN -> tanh -> dropout ->
//   dense 1 -> sigmoid.
// The 32-d activation after the second tanh is the fusion tap.
// ---------------------------------------------------------------------------

template <class T>
struct MLPModel {
  Dense<T> fc1{4, 128}, fc2{128, 32}, fc3{32, 1};
  BatchNorm<T> bn1{128}, bn2{32};
  Tanh<T> act1, act2;
  Dropout<T> drop;
  Rng rng;
  Tensor<T> probs_cache;

  explicit MLPModel(double dropout_rate, std::uint64_t seed)
      : drop(dropout_rate), rng(seed) {
    init_xavier_uniform(fc1.w, fc1.in, fc1.out, rng);
    init_xavier_uniform(fc2.w, fc2.in, fc2.out, rng);
    init_xavier_uniform(fc3.w, fc3.in, fc3.out, rng);
  }

  static constexpr std::size_t feature_dim = 32;

  Tensor<T> forward_to_features(const Tensor<T>& x, bool train) {
    if (x.shape.size() != 2 || x.dim(1) != 4)
      throw InvalidArgument("mlp: expected a (B, 4) feature input");
    auto h = fc1.forward(x, train);
    h = bn1.forward(h, train);
    h = act1.forward(h, train);
    h = fc2.forward(h, train);
    h = bn2.forward(h, train);
    h = act2.forward(h, train);
    return h;
  }

  Tensor<T> head_forward(const Tensor<T>& feat, bool train) {
    auto h = drop.forward(feat, train, rng);
    h = fc3.forward(h, train);
    auto p = sigmoid(h);
    p.shape = {p.dim(0)};
    if (train) probs_cache = p;
    return p;
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return head_forward(forward_to_features(x, train), train);
  }

  Tensor<T> head_backward(const Tensor<T>& dz) {
    auto d = fc3.backward(dz);
    return drop.backward(d);
  }

  Tensor<T> features_backward(const Tensor<T>& dfeat) {
    auto d = act2.backward(dfeat);
    d = bn2.backward(d);
    d = fc2.backward(d);
    d = act1.backward(d);
    d = bn1.backward(d);
    return fc1.backward(d);
  }

  /// Fused sigmoid+BCE backward; call right after a training forward().
  void backward(std::span<const T> labels) {
    if (probs_cache.numel() != labels.size())
      throw InvalidState("mlp: backward before training forward");
    auto dz = bce_sigmoid_grad(probs_cache, labels);
    dz.shape = {labels.size(), 1};
    features_backward(head_backward(dz));
  }

  std::vector<ParamRef<T>> params() {
    return {
        {"fc1.w", &fc1.w, &fc1.gw},       {"fc1.b", &fc1.b, &fc1.gb},
        {"bn1.gamma", &bn1.gamma, &bn1.ggamma}, {"bn1.beta", &bn1.beta, &bn1.gbeta},
        {"fc2.w", &fc2.w, &fc2.gw},       {"fc2.b", &fc2.b, &fc2.gb},
        {"bn2.gamma", &bn2.gamma, &bn2.ggamma}, {"bn2.beta", &bn2.beta, &bn2.gbeta},
        {"fc3.w", &fc3.w, &fc3.gw},       {"fc3.b", &fc3.b, &fc3.gb},
    };
  }

  std::vector<ParamRef<T>> buffers() {
    return {
        {"bn1.running_mean", &bn1.running_mean, nullptr},
        {"bn1.running_var", &bn1.running_var, nullptr},
        {"bn2.running_mean", &bn2.running_mean, nullptr},
        {"bn2.running_var", &bn2.running_var, nullptr},
    };
  }
};

// ---------------------------------------------------------------------------
// Residual CNN:
//   stem conv(c_in -> 16) + BN + ReLU
//   3 x { [conv-BN-ReLU-conv-BN] + identity skip, ReLU, widening conv,
//         2x2 average pool }, widths 16 -> 32 -> 64 -> 64
//   tail conv(64 -> 64) + BN + ReLU, global average pool -> 64-d tap,
//   head dense 64 -> 32, dropout, dense 32 -> 1, sigmoid.
// ---------------------------------------------------------------------------

template <class T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2, widen;
  BatchNorm<T> bn1, bn2;
  ReLU<T> act1, act2;
  AvgPool2x2<T> pool;

  ResidualBlock(std::size_t width, std::size_t width_out)
      : conv1(width, width), conv2(width, width), widen(width, width_out),
        bn1(width), bn2(width) {}

  void init(Rng& rng) {
    init_he_uniform(conv1.w, conv1.cin * 9, rng);
    init_he_uniform(conv2.w, conv2.cin * 9, rng);
    init_he_uniform(widen.w, widen.cin * 9, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    auto h = conv1.forward(x, train);
    h = bn1.forward(h, train);
    h = act1.forward(h, train);
    h = conv2.forward(h, train);
    h = bn2.forward(h, train);
    for (std::size_t i = 0; i < h.numel(); ++i) h.data[i] += x.data[i];
    h = act2.forward(h, train);
    h = widen.forward(h, train);
    return pool.forward(h, train);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    auto d = pool.backward(dy);
    d = widen.backward(d);
    d = act2.backward(d);
    auto dbranch = bn2.backward(d);
    dbranch = conv2.backward(dbranch);
    dbranch = act1.backward(dbranch);
    dbranch = bn1.backward(dbranch);
    dbranch = conv1.backward(dbranch);
    for (std::size_t i = 0; i < d.numel(); ++i) dbranch.data[i] += d.data[i];
    return dbranch;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".conv1.w", &conv1.w, &conv1.gw});
    out.push_back({prefix + ".conv1.b", &conv1.b, &conv1.gb});
    out.push_back({prefix + ".bn1.gamma", &bn1.gamma, &bn1.ggamma});
    out.push_back({prefix + ".bn1.beta", &bn1.beta, &bn1.gbeta});
    out.push_back({prefix + ".conv2.w", &conv2.w, &conv2.gw});
    out.push_back({prefix + ".conv2.b", &conv2.b, &conv2.gb});
    out.push_back({prefix + ".bn2.gamma", &bn2.gamma, &bn2.ggamma});
    out.push_back({prefix + ".bn2.beta", &bn2.beta, &bn2.gbeta});
    out.push_back({prefix + ".widen.w", &widen.w, &widen.gw});
    out.push_back({prefix + ".widen.b", &widen.b, &widen.gb});
  }

  void collect_buffers(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".bn1.running_mean", &bn1.running_mean, nullptr});
    out.push_back({prefix + ".bn1.running_var", &bn1.running_var, nullptr});
    out.push_back({prefix + ".bn2.running_mean", &bn2.running_mean, nullptr});
    out.push_back({prefix + ".bn2.running_var", &bn2.running_var, nullptr});
  }
};

template <class T>
struct CNNModel {
  Channels channels = Channels::A;
  Conv2d<T> stem_conv;
  BatchNorm<T> stem_bn{16};
  ReLU<T> stem_act;
  ResidualBlock<T> block1{16, 32}, block2{32, 64}, block3{64, 64};
  Conv2d<T> tail_conv{64, 64};
  BatchNorm<T> tail_bn{64};
  ReLU<T> tail_act;
  GlobalAvgPool<T> gap;
  Dense<T> head_fc1{64, 32}, head_fc2{32, 1};
  Dropout<T> drop;
  Rng rng;
  Tensor<T> probs_cache;

  static constexpr std::size_t feature_dim = 64;

  CNNModel(Channels ch, double dropout_rate, std::uint64_t seed)
      : channels(ch), stem_conv(channel_count(ch), 16), drop(dropout_rate), rng(seed) {
    init_he_uniform(stem_conv.w, stem_conv.cin * 9, rng);
    block1.init(rng);
    block2.init(rng);
    block3.init(rng);
    init_he_uniform(tail_conv.w, tail_conv.cin * 9, rng);
    init_xavier_uniform(head_fc1.w, head_fc1.in, head_fc1.out, rng);
    init_xavier_uniform(head_fc2.w, head_fc2.in, head_fc2.out, rng);
  }

  Tensor<T> forward_to_features(const Tensor<T>& x, bool train) {
    if (x.shape.size() != 4 || x.dim(1) != channel_count(channels))
      throw InvalidArgument("cnn: input channel mismatch");
    if (x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0 || x.dim(2) < 8 || x.dim(3) < 8)
      throw InvalidArgument("cnn: spatial dimensions must be multiples of 8");
    auto h = stem_conv.forward(x, train);
    h = stem_bn.forward(h, train);
    h = stem_act.forward(h, train);
    h = block1.forward(h, train);
    h = block2.forward(h, train);
    h = block3.forward(h, train);
    h = tail_conv.forward(h, train);
    h = tail_bn.forward(h, train);
    h = tail_act.forward(h, train);
    return gap.forward(h, train);
  }

  Tensor<T> head_forward(const Tensor<T>& feat, bool train) {
    auto h = head_fc1.forward(feat, train);
    h = drop.forward(h, train, rng);
    h = head_fc2.forward(h, train);
    auto p = sigmoid(h);
    p.shape = {p.dim(0)};
    if (train) probs_cache = p;
    return p;
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return head_forward(forward_to_features(x, train), train);
  }

  Tensor<T> head_backward(const Tensor<T>& dz) {
    auto d = head_fc2.backward(dz);
    d = drop.backward(d);
    return head_fc1.backward(d);
  }

  Tensor<T> features_backward(const Tensor<T>& dfeat) {
    auto d = gap.backward(dfeat);
    d = tail_act.backward(d);
    d = tail_bn.backward(d);
    d = tail_conv.backward(d);
    d = block3.backward(d);
    d = block2.backward(d);
    d = block1.backward(d);
    d = stem_act.backward(d);
    d = stem_bn.backward(d);
    return stem_conv.backward(d);
  }

  void backward(std::span<const T> labels) {
    if (probs_cache.numel() != labels.size())
      throw InvalidState("cnn: backward before training forward");
    auto dz = bce_sigmoid_grad(probs_cache, labels);
    dz.shape = {labels.size(), 1};
    features_backward(head_backward(dz));
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    out.push_back({"stem.conv.w", &stem_conv.w, &stem_conv.gw});
    out.push_back({"stem.conv.b", &stem_conv.b, &stem_conv.gb});
    out.push_back({"stem.bn.gamma", &stem_bn.gamma, &stem_bn.ggamma});
    out.push_back({"stem.bn.beta", &stem_bn.beta, &stem_bn.gbeta});
    block1.collect("block1", out);
    block2.collect("block2", out);
    block3.collect("block3", out);
    out.push_back({"tail.conv.w", &tail_conv.w, &tail_conv.gw});
    out.push_back({"tail.conv.b", &tail_conv.b, &tail_conv.gb});
    out.push_back({"tail.bn.gamma", &tail_bn.gamma, &tail_bn.ggamma});
    out.push_back({"tail.bn.beta", &tail_bn.beta, &tail_bn.gbeta});
    out.push_back({"head.fc1.w", &head_fc1.w, &head_fc1.gw});
    out.push_back({"head.fc1.b", &head_fc1.b, &head_fc1.gb});
    out.push_back({"head.fc2.w", &head_fc2.w, &head_fc2.gw});
    out.push_back({"head.fc2.b", &head_fc2.b, &head_fc2.gb});
    return out;
  }

  std::vector<ParamRef<T>> buffers() {
    std::vector<ParamRef<T>> out;
    out.push_back({"stem.bn.running_mean", &stem_bn.running_mean, nullptr});
    out.push_back({"stem.bn.running_var", &stem_bn.running_var, nullptr});
    block1.collect_buffers("block1", out);
    block2.collect_buffers("block2", out);
    block3.collect_buffers("block3", out);
    out.push_back({"tail.bn.running_mean", &tail_bn.running_mean, nullptr});
    out.push_back({"tail.bn.running_var", &tail_bn.running_var, nullptr});
    return out;
  }
};

// ---------------------------------------------------------------------------
// Fusion: CNN 64-d tap ++ MLP 32-d tap -> dense 96 -> 32, dropout,
// dense 32 -> 1, sigmoid. Branches are frozen by default (run in inference
// mode, receive no gradients); the final dense starts at zero so an
// untrained head outputs exactly 0.5.
// ---------------------------------------------------------------------------

template <class T>
struct FusionModel {
  CNNModel<T> cnn;
  MLPModel<T> mlp;
  Dense<T> head_fc1{96, 32}, head_fc2{32, 1};
  Dropout<T> drop;
  Rng rng;
  bool branches_frozen = true;
  Tensor<T> probs_cache;

  FusionModel(Channels ch, double dropout_rate, std::uint64_t seed)
      : cnn(ch, dropout_rate, splitmix64(seed ^ 0x1)),
        mlp(dropout_rate, splitmix64(seed ^ 0x2)), drop(dropout_rate),
        rng(splitmix64(seed ^ 0x3)) {
    init_xavier_uniform(head_fc1.w, head_fc1.in, head_fc1.out, rng);
    // head_fc2 stays all-zero
  }

  Tensor<T> forward(const Tensor<T>& x_img, const Tensor<T>& x_feat, bool train) {
    if (x_img.dim(0) != x_feat.dim(0))
      throw InvalidArgument("fusion: image/feature batch size mismatch");
    const bool branch_train = train && !branches_frozen;
    auto fc = cnn.forward_to_features(x_img, branch_train);
    auto fm = mlp.forward_to_features(x_feat, branch_train);
    const std::size_t bsz = fc.dim(0);
    Tensor<T> cat({bsz, CNNModel<T>::feature_dim + MLPModel<T>::feature_dim});
    for (std::size_t i = 0; i < bsz; ++i) {
      T* dst = cat.ptr() + i * cat.dim(1);
      std::copy_n(fc.ptr() + i * CNNModel<T>::feature_dim, CNNModel<T>::feature_dim, dst);
      std::copy_n(fm.ptr() + i * MLPModel<T>::feature_dim, MLPModel<T>::feature_dim,
                  dst + CNNModel<T>::feature_dim);
    }
    auto h = head_fc1.forward(cat, train);
    h = drop.forward(h, train, rng);
    h = head_fc2.forward(h, train);
    auto p = sigmoid(h);
    p.shape = {p.dim(0)};
    if (train) probs_cache = p;
    return p;
  }

  void backward(std::span<const T> labels) {
    if (probs_cache.numel() != labels.size())
      throw InvalidState("fusion: backward before training forward");
    auto dz = bce_sigmoid_grad(probs_cache, labels);
    dz.shape = {labels.size(), 1};
    auto d = head_fc2.backward(dz);
    d = drop.backward(d);
    auto dcat = head_fc1.backward(d);
    if (branches_frozen) return;
    const std::size_t bsz = dcat.dim(0);
    Tensor<T> dfc({bsz, CNNModel<T>::feature_dim});
    Tensor<T> dfm({bsz, MLPModel<T>::feature_dim});
    for (std::size_t i = 0; i < bsz; ++i) {
      const T* src = dcat.ptr() + i * dcat.dim(1);
      std::copy_n(src, CNNModel<T>::feature_dim, dfc.ptr() + i * CNNModel<T>::feature_dim);
      std::copy_n(src + CNNModel<T>::feature_dim, MLPModel<T>::feature_dim,
                  dfm.ptr() + i * MLPModel<T>::feature_dim);
    }
    cnn.features_backward(dfc);
    mlp.features_backward(dfm);
  }

  std::vector<ParamRef<T>> head_params() {
    return {
        {"head.fc1.w", &head_fc1.w, &head_fc1.gw},
        {"head.fc1.b", &head_fc1.b, &head_fc1.gb},
        {"head.fc2.w", &head_fc2.w, &head_fc2.gw},
        {"head.fc2.b", &head_fc2.b, &head_fc2.gb},
    };
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& p : cnn.params()) out.push_back({"cnn." + p.name, p.value, p.grad});
    for (auto& p : mlp.params()) out.push_back({"mlp." + p.name, p.value, p.grad});
    for (auto& p : head_params()) out.push_back(p);
    return out;
  }

  std::vector<ParamRef<T>> trainable_params() {
    if (branches_frozen) return head_params();
    return params();
  }

  std::vector<ParamRef<T>> buffers() {
    std::vector<ParamRef<T>> out;
    for (auto& p : cnn.buffers()) out.push_back({"cnn." + p.name, p.value, p.grad});
    for (auto& p : mlp.buffers()) out.push_back({"mlp." + p.name, p.value, p.grad});
    return out;
  }
};

}  // namespace qus::nn
