#pragma once

#include "mfuse/costvol.hpp"
#include "mfuse/imagery.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace mfuse {

/// Dense row-major array. The network uses rank-4 tensors laid out as
/// (channel, disparity, row, column).
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, T fill = T(0));

    const std::vector<int>& shape() const noexcept { return shape_; }
    int dim(std::size_t i) const noexcept { return shape_[i]; }
    std::size_t size() const noexcept { return data_.size(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    T operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Rank-4 accessor.
    T& at(int c, int z, int y, int x) noexcept { return data_[offset(c, z, y, x)]; }
    const T& at(int c, int z, int y, int x) const noexcept { return data_[offset(c, z, y, x)]; }

    /// Throws NumericError naming `where` if any element is not finite.
    void check_finite(const char* where) const;

private:
    std::size_t offset(int c, int z, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(c) * shape_[1] + z) * shape_[2] + y) * shape_[3] + x;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

/// 3x3x3 convolution with padding 1.
struct ConvSpec {
    int in = 0;
    int out = 0;
    int stride = 1;

    std::size_t weight_count() const noexcept { return static_cast<std::size_t>(in) * out * 27; }
    std::size_t param_count() const noexcept { return weight_count() + out; }
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Channel widths of the fixed topology:
///   stem (shared by every input volume): conv 1->S, conv S->S
///   view pooling: mean and max over volumes -> 2S channels
///   encoder conv 2S->T, stride-2 conv T->T, bottleneck conv T->T,
///   nearest x2 upsampling + conv T->T, skip concat 2T -> conv T,
///   head conv T->1 (linear).
struct NetConfig {
    int stem_channels = 4;
    int trunk_channels = 8;

    std::vector<ConvSpec> layers() const;
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

enum class VolumeNormalization { Standardize, None };

template <typename T>
class BasicNetwork {
public:
    enum Layer { Stem1, Stem2, Encoder, Down, Bottleneck, Up, Skip, Head, LayerCount };

    BasicNetwork() : BasicNetwork(NetConfig{}) {}
    explicit BasicNetwork(const NetConfig& cfg);

    const NetConfig& config() const noexcept { return config_; }
    const std::vector<ConvSpec>& layers() const noexcept { return layers_; }

    std::size_t param_count() const noexcept { return params_.size(); }
    std::span<T> params() noexcept { return params_; }
    std::span<const T> params() const noexcept { return params_; }

    /// First weight / first bias of layer l inside params().
    std::size_t weight_offset(int l) const noexcept { return offsets_[l]; }
    std::size_t bias_offset(int l) const noexcept { return offsets_[l] + layers_[l].weight_count(); }

    /// He-normal weights, zero biases. With zero_head the head starts at zero
    /// so the first prediction is the uniform prior.
    void initialize(std::uint64_t seed, bool zero_head = true);

    template <typename U>
    BasicNetwork<U> cast() const {
        BasicNetwork<U> out(config_);
        for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
        return out;
    }

    friend bool operator==(const BasicNetwork&, const BasicNetwork&) = default;

private:
    NetConfig config_;
    std::vector<ConvSpec> layers_;
    std::vector<std::size_t> offsets_;
    std::vector<T> params_;
};

using Network = BasicNetwork<float>;

/// Softmax over disparity per pixel; sums to 1.
template <typename T>
struct ProbVolume {
    int d_min = 0;
    Tensor<T> prob;  // (1, D, H, W)
};

template <typename T>
struct ForwardResult {
    ProbVolume<T> probability;
    DisparityMap disparity;
    std::vector<T> expectation;  // d-hat per pixel at full precision
};

/// Network input: one standardized tensor per cost volume.
template <typename T>
std::vector<Tensor<T>> prepare_inputs(std::span<const CostVolume> volumes, VolumeNormalization norm);

/// Trunk scores (1, D, H, W) before the softmax.
template <typename T>
Tensor<T> network_scores(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs);

/// Disparity regression: p = softmax(-scores) along D and
/// d-hat = sum_k (d_min + k) p_k.
template <typename T>
ForwardResult<T> regress(const Tensor<T>& scores, int d_min);

template <typename T>
ForwardResult<T> forward(const BasicNetwork<T>& net, std::span<const CostVolume> volumes,
                         VolumeNormalization norm = VolumeNormalization::Standardize);

/// Mean over mask of 0.5 x^2 (|x| < 1) or |x| - 0.5, x = pred - gt.
/// Throws InputError on an empty mask or size mismatch.
double smooth_l1(const DisparityMap& pred, const DisparityMap& gt, std::span<const std::uint8_t> mask);

/// mask[i] = 1 where gt is valid.
std::vector<std::uint8_t> valid_mask(const DisparityMap& gt);

template <typename T>
struct LossAndGradient {
    double loss = 0.0;
    std::vector<T> gradient;  // same layout as params()
};

/// Exact reverse-mode gradient of the smooth-L1 loss of forward() w.r.t. every parameter.
template <typename T>
LossAndGradient<T> backward(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs, int d_min,
                            const DisparityMap& gt, std::span<const std::uint8_t> mask);

template <typename T>
LossAndGradient<T> backward(const BasicNetwork<T>& net, std::span<const CostVolume> volumes, const DisparityMap& gt,
                            std::span<const std::uint8_t> mask,
                            VolumeNormalization norm = VolumeNormalization::Standardize);

/// Loss only (no gradient), used by finite differences.
template <typename T>
double network_loss(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs, int d_min, const DisparityMap& gt,
                    std::span<const std::uint8_t> mask);

struct TrainSample {
    std::vector<CostVolume> volumes;
    DisparityMap gt;
    std::vector<std::uint8_t> mask;  // empty: all gt-valid pixels
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
};

/// Central differences (L(w + eps) - L(w - eps)) / 2 eps on `count` random
/// parameters versus backward(). Relative error is
/// |a - n| / max(|a|, |n|, floor); the floor keeps parameters whose gradient
/// is at the level of round-off from dominating.
template <typename T>
GradCheckResult grad_check(const BasicNetwork<T>& net, const TrainSample& sample, double epsilon, std::size_t count,
                           std::uint64_t seed, double floor = 1e-6);

struct TrainConfig {
    double learning_rate = 2e-3;
    int epochs = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t rng_seed = 0;
    VolumeNormalization normalization = VolumeNormalization::Standardize;
    /// Random square crops of this side per step; 0 trains on full samples.
    int crop = 0;
    /// Learning rate decays linearly to lr * final_lr_fraction over training.
    double final_lr_fraction = 1.0;
    NetConfig net;

    void validate() const;
};

struct TrainResult {
    Network net;
    std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Seeded initialization, then per-sample Adam steps in a seeded shuffled
/// order each epoch. Throws NumericError if a loss becomes non-finite.
TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// "epoch,mean_loss" lines.
std::string format_loss_log(std::span<const double> epoch_loss);

/// "MFN1" little-endian file: u32 version, u32 layer count, per layer
/// (u32 tag, u32 in, u32 out, u32 kernel, u32 stride), u32 parameter count,
/// then float32 parameters.
std::vector<std::uint8_t> encode_net(const Network& net);
Network decode_net(std::span<const std::uint8_t> bytes);
void save_net(const Network& net, const std::filesystem::path& path);
Network load_net(const std::filesystem::path& path);

} // namespace mfuse
