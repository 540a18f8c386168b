#include "mfuse/mfusenet.hpp"

#include "mfuse/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <string>

namespace mfuse {

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int e : shape_) {
        if (e < 0) throw InputError("negative tensor extent");
        n *= static_cast<std::size_t>(e);
    }
    data_.assign(n, fill);
}

template <typename T>
void Tensor<T>::check_finite(const char* where) const {
    for (T v : data_)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + where);
}

// ---------------------------------------------------------------------------
// Network parameterization

std::vector<ConvSpec> NetConfig::layers() const {
    const int s = stem_channels;
    const int t = trunk_channels;
    return {
        {1, s, 1},      // stem 1
        {s, s, 1},      // stem 2
        {2 * s, t, 1},  // encoder
        {t, t, 2},      // downsample
        {t, t, 1},      // bottleneck
        {t, t, 1},      // after upsampling
        {2 * t, t, 1},  // skip merge
        {t, 1, 1},      // head
    };
}

template <typename T>
BasicNetwork<T>::BasicNetwork(const NetConfig& cfg) : config_(cfg), layers_(cfg.layers()) {
    if (cfg.stem_channels < 1 || cfg.trunk_channels < 1) throw InputError("network channel widths must be >= 1");
    std::size_t total = 0;
    for (const auto& l : layers_) {
        offsets_.push_back(total);
        total += l.param_count();
    }
    params_.assign(total, T(0));
}

template <typename T>
void BasicNetwork<T>::initialize(std::uint64_t seed, bool zero_head) {
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), T(0));
    for (int l = 0; l < LayerCount; ++l) {
        if (l == Head && zero_head) continue;
        const ConvSpec& spec = layers_[l];
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (27.0 * spec.in)));
        for (std::size_t i = 0; i < spec.weight_count(); ++i) params_[offsets_[l] + i] = static_cast<T>(dist(rng));
    }
}

// ---------------------------------------------------------------------------
// Layer kernels

namespace {

int conv_extent(int n, int stride) { return stride == 1 ? n : (n + stride - 1) / stride; }

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& in, const T* weights, const T* bias, const ConvSpec& s) {
    const int D = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int Do = conv_extent(D, s.stride), Ho = conv_extent(H, s.stride), Wo = conv_extent(W, s.stride);
    Tensor<T> out({s.out, Do, Ho, Wo});
    const std::size_t plane = static_cast<std::size_t>(Do) * Ho * Wo;
    for (int o = 0; o < s.out; ++o) {
        std::fill(out.data() + o * plane, out.data() + (o + 1) * plane, bias[o]);
        for (int i = 0; i < s.in; ++i) {
            const T* w = weights + (static_cast<std::size_t>(o) * s.in + i) * 27;
            for (int kz = 0; kz < 3; ++kz) {
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const T wv = w[kz * 9 + ky * 3 + kx];
                        for (int z = 0; z < Do; ++z) {
                            const int iz = z * s.stride + kz - 1;
                            if (iz < 0 || iz >= D) continue;
                            for (int y = 0; y < Ho; ++y) {
                                const int iy = y * s.stride + ky - 1;
                                if (iy < 0 || iy >= H) continue;
                                const T* irow = &in.at(i, iz, iy, 0);
                                T* orow = &out.at(o, z, y, 0);
                                if (s.stride == 1) {
                                    const int lo = std::max(0, 1 - kx);
                                    const int hi = std::min(Wo, W + 1 - kx);
                                    const T* src = irow + kx - 1;
                                    for (int x = lo; x < hi; ++x) orow[x] += wv * src[x];
                                } else {
                                    for (int x = 0; x < Wo; ++x) {
                                        const int ix = x * s.stride + kx - 1;
                                        if (ix >= 0 && ix < W) orow[x] += wv * irow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates weight/bias gradients into gw/gb; returns the input gradient
// unless want_input is false.
template <typename T>
Tensor<T> conv_backward(const Tensor<T>& in, const Tensor<T>& gout, const T* weights, const ConvSpec& s, T* gw, T* gb,
                        bool want_input = true) {
    const int D = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int Do = gout.dim(1), Ho = gout.dim(2), Wo = gout.dim(3);
    Tensor<T> gin;
    if (want_input) gin = Tensor<T>(in.shape());
    const std::size_t plane = static_cast<std::size_t>(Do) * Ho * Wo;
    for (int o = 0; o < s.out; ++o) {
        double bsum = 0.0;
        const T* g = gout.data() + o * plane;
        for (std::size_t k = 0; k < plane; ++k) bsum += g[k];
        gb[o] += static_cast<T>(bsum);
        for (int i = 0; i < s.in; ++i) {
            const std::size_t wbase = (static_cast<std::size_t>(o) * s.in + i) * 27;
            for (int kz = 0; kz < 3; ++kz) {
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const int kidx = kz * 9 + ky * 3 + kx;
                        const T wv = weights[wbase + kidx];
                        double wsum = 0.0;
                        for (int z = 0; z < Do; ++z) {
                            const int iz = z * s.stride + kz - 1;
                            if (iz < 0 || iz >= D) continue;
                            for (int y = 0; y < Ho; ++y) {
                                const int iy = y * s.stride + ky - 1;
                                if (iy < 0 || iy >= H) continue;
                                const T* irow = &in.at(i, iz, iy, 0);
                                const T* grow = &gout.at(o, z, y, 0);
                                T* girow = want_input ? &gin.at(i, iz, iy, 0) : nullptr;
                                T acc = 0;
                                if (s.stride == 1) {
                                    const int lo = std::max(0, 1 - kx);
                                    const int hi = std::min(Wo, W + 1 - kx);
                                    const T* src = irow + kx - 1;
                                    for (int x = lo; x < hi; ++x) acc += grow[x] * src[x];
                                    if (girow) {
                                        T* dst = girow + kx - 1;
                                        for (int x = lo; x < hi; ++x) dst[x] += wv * grow[x];
                                    }
                                } else {
                                    for (int x = 0; x < Wo; ++x) {
                                        const int ix = x * s.stride + kx - 1;
                                        if (ix < 0 || ix >= W) continue;
                                        acc += grow[x] * irow[ix];
                                        if (girow) girow[ix] += wv * grow[x];
                                    }
                                }
                                wsum += acc;
                            }
                        }
                        gw[wbase + kidx] += static_cast<T>(wsum);
                    }
                }
            }
        }
    }
    return gin;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
    for (T& v : t.values()) v = v > T(0) ? v : T(0);
}

// Gradient through ReLU given its output.
template <typename T>
void relu_backward(const Tensor<T>& out, Tensor<T>& g) {
    const T* o = out.data();
    T* gp = g.data();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(o[i] > T(0))) gp[i] = T(0);
}

// Nearest x2 upsampling cropped to (D, H, W).
template <typename T>
Tensor<T> upsample(const Tensor<T>& in, int D, int H, int W) {
    Tensor<T> out({in.dim(0), D, H, W});
    for (int c = 0; c < in.dim(0); ++c)
        for (int z = 0; z < D; ++z)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) out.at(c, z, y, x) = in.at(c, z / 2, y / 2, x / 2);
    return out;
}

template <typename T>
Tensor<T> upsample_backward(const Tensor<T>& gout, const std::vector<int>& in_shape) {
    Tensor<T> gin(in_shape);
    for (int c = 0; c < gout.dim(0); ++c)
        for (int z = 0; z < gout.dim(1); ++z)
            for (int y = 0; y < gout.dim(2); ++y)
                for (int x = 0; x < gout.dim(3); ++x) gin.at(c, z / 2, y / 2, x / 2) += gout.at(c, z, y, x);
    return gin;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

// Mean and max over views, stacked as [mean channels, max channels].
template <typename T>
Tensor<T> pool_views(const std::vector<Tensor<T>>& feats) {
    const auto& f0 = feats[0];
    const int C = f0.dim(0);
    const std::size_t n = f0.size();
    Tensor<T> out({2 * C, f0.dim(1), f0.dim(2), f0.dim(3)});
    const T inv = T(1) / static_cast<T>(feats.size());
    for (std::size_t i = 0; i < n; ++i) {
        T sum = 0;
        T mx = f0[i];
        for (const auto& f : feats) {
            sum += f[i];
            mx = std::max(mx, f[i]);
        }
        out[i] = sum * inv;
        out[n + i] = mx;
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> pool_views_backward(const std::vector<Tensor<T>>& feats, const Tensor<T>& gout) {
    const std::size_t n = feats[0].size();
    std::vector<Tensor<T>> grads;
    for (const auto& f : feats) grads.emplace_back(f.shape());
    const T inv = T(1) / static_cast<T>(feats.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        for (std::size_t v = 1; v < feats.size(); ++v)
            if (feats[v][i] > feats[arg][i]) arg = v;
        for (auto& g : grads) g[i] = gout[i] * inv;
        grads[arg][i] += gout[n + i];
    }
    return grads;
}

template <typename T>
struct Activations {
    std::vector<Tensor<T>> s1, s2;
    Tensor<T> pooled, e1, dn, bt, upn, u, cat, k, score;
};

template <typename T>
const T* weights_of(const BasicNetwork<T>& net, int l) {
    return net.params().data() + net.weight_offset(l);
}
template <typename T>
const T* bias_of(const BasicNetwork<T>& net, int l) {
    return net.params().data() + net.bias_offset(l);
}

template <typename T>
Activations<T> run_forward(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs) {
    using N = BasicNetwork<T>;
    if (inputs.empty()) throw InputError("network needs at least one cost volume");
    for (const auto& x : inputs) {
        if (x.shape() != inputs[0].shape() || x.shape().size() != 4 || x.dim(0) != 1)
            throw InputError("network inputs must share one (1, D, H, W) shape");
    }
    const auto& L = net.layers();
    auto conv = [&](const Tensor<T>& x, int l) { return conv_forward(x, weights_of(net, l), bias_of(net, l), L[l]); };

    Activations<T> a;
    for (const auto& x : inputs) {
        a.s1.push_back(conv(x, N::Stem1));
        relu_inplace(a.s1.back());
        a.s2.push_back(conv(a.s1.back(), N::Stem2));
        relu_inplace(a.s2.back());
    }
    a.pooled = pool_views(a.s2);
    a.e1 = conv(a.pooled, N::Encoder);
    relu_inplace(a.e1);
    a.dn = conv(a.e1, N::Down);
    relu_inplace(a.dn);
    a.bt = conv(a.dn, N::Bottleneck);
    relu_inplace(a.bt);
    a.upn = upsample(a.bt, a.e1.dim(1), a.e1.dim(2), a.e1.dim(3));
    a.u = conv(a.upn, N::Up);
    relu_inplace(a.u);
    a.cat = concat(a.u, a.e1);
    a.k = conv(a.cat, N::Skip);
    relu_inplace(a.k);
    a.score = conv(a.k, N::Head);
    return a;
}

template <typename T>
double loss_from_expectation(const std::vector<T>& dhat, const DisparityMap& gt, std::span<const std::uint8_t> mask,
                             std::vector<T>* grad) {
    if (mask.size() != gt.size() || dhat.size() != gt.size()) throw InputError("mask / prediction size mismatch");
    std::size_t count = 0;
    for (auto m : mask) count += m ? 1 : 0;
    if (count == 0) throw InputError("smooth L1 loss over an empty mask");
    const auto g = gt.data();
    double sum = 0.0;
    if (grad) grad->assign(dhat.size(), T(0));
    for (std::size_t i = 0; i < dhat.size(); ++i) {
        if (!mask[i]) continue;
        const double x = static_cast<double>(dhat[i]) - g[i];
        const double ax = std::fabs(x);
        sum += ax < 1.0 ? 0.5 * x * x : ax - 0.5;
        if (grad) (*grad)[i] = static_cast<T>((ax < 1.0 ? x : (x > 0 ? 1.0 : -1.0)) / static_cast<double>(count));
    }
    return sum / static_cast<double>(count);
}

} // namespace

// ---------------------------------------------------------------------------
// Forward

template <typename T>
std::vector<Tensor<T>> prepare_inputs(std::span<const CostVolume> volumes, VolumeNormalization norm) {
    if (volumes.empty()) throw InputError("network needs at least one cost volume");
    std::vector<Tensor<T>> out;
    for (const auto& v : volumes) {
        if (!v.same_shape(volumes[0])) throw InputError("network input volumes differ in shape or range");
        const auto c = v.data();
        float max_finite = 0.0f;
        bool any = false;
        for (float x : c) {
            if (!is_sentinel(x)) {
                max_finite = any ? std::max(max_finite, x) : x;
                any = true;
            }
        }
        Tensor<T> t({1, v.depth(), v.height(), v.width()});
        double mean = 0.0, sd = 1.0;
        if (norm == VolumeNormalization::Standardize) {
            double sum = 0.0, sq = 0.0;
            for (float x : c) {
                const double y = is_sentinel(x) ? max_finite : x;
                sum += y;
                sq += y * y;
            }
            const double n = static_cast<double>(c.size());
            mean = sum / n;
            const double var = std::max(0.0, sq / n - mean * mean);
            sd = var > 0 ? std::sqrt(var) : 1.0;
        }
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double y = is_sentinel(c[i]) ? max_finite : c[i];
            t[i] = static_cast<T>((y - mean) / sd);
        }
        out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
Tensor<T> network_scores(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs) {
    return run_forward(net, inputs).score;
}

template <typename T>
ForwardResult<T> regress(const Tensor<T>& scores, int d_min) {
    const int D = scores.dim(1), H = scores.dim(2), W = scores.dim(3);
    ForwardResult<T> r;
    r.probability.d_min = d_min;
    r.probability.prob = Tensor<T>({1, D, H, W});
    r.disparity = DisparityMap(W, H);
    r.expectation.assign(static_cast<std::size_t>(W) * H, T(0));
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    const T* s = scores.data();
    T* p = r.probability.prob.data();
    for (std::size_t px = 0; px < plane; ++px) {
        T mx = -s[px];
        for (int d = 1; d < D; ++d) mx = std::max(mx, -s[d * plane + px]);
        T sum = 0;
        for (int d = 0; d < D; ++d) {
            const T e = std::exp(-s[d * plane + px] - mx);
            p[d * plane + px] = e;
            sum += e;
        }
        T dhat = 0;
        for (int d = 0; d < D; ++d) {
            p[d * plane + px] /= sum;
            dhat += static_cast<T>(d_min + d) * p[d * plane + px];
        }
        r.expectation[px] = dhat;
        r.disparity.data()[px] = static_cast<float>(dhat);
    }
    return r;
}

template <typename T>
ForwardResult<T> forward(const BasicNetwork<T>& net, std::span<const CostVolume> volumes, VolumeNormalization norm) {
    const auto inputs = prepare_inputs<T>(volumes, norm);
    const Tensor<T> scores = network_scores<T>(net, inputs);
    scores.check_finite("network scores");
    return regress(scores, volumes[0].d_min());
}

double smooth_l1(const DisparityMap& pred, const DisparityMap& gt, std::span<const std::uint8_t> mask) {
    if (pred.width() != gt.width() || pred.height() != gt.height()) throw InputError("smooth L1: size mismatch");
    std::vector<double> dhat(pred.data().begin(), pred.data().end());
    return loss_from_expectation<double>(dhat, gt, mask, nullptr);
}

std::vector<std::uint8_t> valid_mask(const DisparityMap& gt) {
    std::vector<std::uint8_t> m(gt.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = DisparityMap::is_valid(gt.data()[i]) ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
double network_loss(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs, int d_min, const DisparityMap& gt,
                    std::span<const std::uint8_t> mask) {
    const auto r = regress(network_scores(net, inputs), d_min);
    return loss_from_expectation<T>(r.expectation, gt, mask, nullptr);
}

template <typename T>
LossAndGradient<T> backward(const BasicNetwork<T>& net, std::span<const Tensor<T>> inputs, int d_min,
                            const DisparityMap& gt, std::span<const std::uint8_t> mask) {
    using N = BasicNetwork<T>;
    const Activations<T> a = run_forward(net, inputs);
    const int D = a.score.dim(1), H = a.score.dim(2), W = a.score.dim(3);
    if (gt.width() != W || gt.height() != H) throw InputError("ground truth does not match the volume size");
    const ForwardResult<T> r = regress(a.score, d_min);

    LossAndGradient<T> out;
    std::vector<T> g_dhat;
    out.loss = loss_from_expectation(r.expectation, gt, mask, &g_dhat);
    out.gradient.assign(net.param_count(), T(0));

    // d-hat = sum_k d_k p_k with p = softmax(-s):
    // dL/ds_k = -p_k (d_k - d-hat) dL/dd-hat
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    Tensor<T> g_score({1, D, H, W});
    const T* p = r.probability.prob.data();
    for (std::size_t px = 0; px < plane; ++px) {
        if (g_dhat[px] == T(0)) continue;
        for (int d = 0; d < D; ++d) {
            const std::size_t i = d * plane + px;
            g_score[i] = -p[i] * (static_cast<T>(d_min + d) - r.expectation[px]) * g_dhat[px];
        }
    }

    const auto& L = net.layers();
    T* grad = out.gradient.data();
    auto back = [&](const Tensor<T>& in, const Tensor<T>& g, int l, bool want_input = true) {
        return conv_backward(in, g, weights_of(net, l), L[l], grad + net.weight_offset(l), grad + net.bias_offset(l),
                             want_input);
    };

    Tensor<T> gk = back(a.k, g_score, N::Head);
    relu_backward(a.k, gk);
    Tensor<T> gcat = back(a.cat, gk, N::Skip);
    Tensor<T> gu({a.u.dim(0), D, H, W});
    Tensor<T> ge1_skip(a.e1.shape());
    std::copy(gcat.data(), gcat.data() + gu.size(), gu.data());
    std::copy(gcat.data() + gu.size(), gcat.data() + gcat.size(), ge1_skip.data());
    relu_backward(a.u, gu);
    Tensor<T> gupn = back(a.upn, gu, N::Up);
    Tensor<T> gbt = upsample_backward(gupn, a.bt.shape());
    relu_backward(a.bt, gbt);
    Tensor<T> gdn = back(a.dn, gbt, N::Bottleneck);
    relu_backward(a.dn, gdn);
    Tensor<T> ge1 = back(a.e1, gdn, N::Down);
    for (std::size_t i = 0; i < ge1.size(); ++i) ge1[i] += ge1_skip[i];
    relu_backward(a.e1, ge1);
    Tensor<T> gpool = back(a.pooled, ge1, N::Encoder);
    auto gs2 = pool_views_backward(a.s2, gpool);
    for (std::size_t v = 0; v < inputs.size(); ++v) {
        relu_backward(a.s2[v], gs2[v]);
        Tensor<T> gs1 = back(a.s1[v], gs2[v], N::Stem2);
        relu_backward(a.s1[v], gs1);
        back(inputs[v], gs1, N::Stem1, false);
    }
    return out;
}

template <typename T>
LossAndGradient<T> backward(const BasicNetwork<T>& net, std::span<const CostVolume> volumes, const DisparityMap& gt,
                            std::span<const std::uint8_t> mask, VolumeNormalization norm) {
    const auto inputs = prepare_inputs<T>(volumes, norm);
    return backward<T>(net, inputs, volumes[0].d_min(), gt, mask);
}

template <typename T>
GradCheckResult grad_check(const BasicNetwork<T>& net, const TrainSample& sample, double epsilon, std::size_t count,
                           std::uint64_t seed, double floor) {
    const auto inputs = prepare_inputs<T>(sample.volumes, VolumeNormalization::Standardize);
    const int d_min = sample.volumes.at(0).d_min();
    const auto mask = sample.mask.empty() ? valid_mask(sample.gt) : sample.mask;
    const auto analytic = backward<T>(net, inputs, d_min, sample.gt, mask);

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, net.param_count() - 1);
    BasicNetwork<T> probe = net;
    GradCheckResult res;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = pick(rng);
        const T saved = probe.params()[i];
        probe.params()[i] = static_cast<T>(saved + epsilon);
        const double lp = network_loss<T>(probe, inputs, d_min, sample.gt, mask);
        probe.params()[i] = static_cast<T>(saved - epsilon);
        const double lm = network_loss<T>(probe, inputs, d_min, sample.gt, mask);
        probe.params()[i] = saved;
        // Use the actually representable step so 32-bit rounding of w +/- eps
        // does not bias the quotient.
        const double step = static_cast<double>(static_cast<T>(saved + epsilon)) -
                            static_cast<double>(static_cast<T>(saved - epsilon));
        const double numeric = (lp - lm) / step;
        const double a = analytic.gradient[i];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
        res.max_relative_error = std::max(res.max_relative_error, std::fabs(a - numeric) / denom);
        ++res.checked;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InputError("learning rate must be > 0");
    if (epochs < 1) throw InputError("epochs must be >= 1");
    if (crop < 0) throw InputError("crop must be >= 0");
    if (!(final_lr_fraction > 0.0) || final_lr_fraction > 1.0) throw InputError("final_lr_fraction must be in (0, 1]");
}

namespace {

template <typename T>
Tensor<T> crop_tensor(const Tensor<T>& t, int x0, int y0, int side) {
    Tensor<T> out({t.dim(0), t.dim(1), side, side});
    for (int c = 0; c < t.dim(0); ++c)
        for (int z = 0; z < t.dim(1); ++z)
            for (int y = 0; y < side; ++y)
                std::copy_n(&t.at(c, z, y0 + y, x0), side, &out.at(c, z, y, 0));
    return out;
}

struct PreparedSample {
    std::vector<Tensor<float>> inputs;
    int d_min = 0;
    const DisparityMap* gt = nullptr;
    std::vector<std::uint8_t> mask;
};

} // namespace

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (dataset.empty()) throw InputError("training set is empty");

    std::vector<PreparedSample> samples;
    for (const auto& s : dataset) {
        PreparedSample p;
        p.inputs = prepare_inputs<float>(s.volumes, cfg.normalization);
        p.d_min = s.volumes.at(0).d_min();
        p.gt = &s.gt;
        p.mask = s.mask.empty() ? valid_mask(s.gt) : s.mask;
        if (s.gt.width() != s.volumes[0].width() || s.gt.height() != s.volumes[0].height())
            throw InputError("training sample ground truth does not match its volumes");
        samples.push_back(std::move(p));
    }

    TrainResult result{Network(cfg.net), {}};
    Network& net = result.net;
    net.initialize(cfg.rng_seed);
    std::mt19937_64 rng(cfg.rng_seed ^ 0x7472616e6full);

    const std::size_t np = net.param_count();
    std::vector<double> m(np, 0.0), v(np, 0.0);
    const long total_steps = static_cast<long>(cfg.epochs) * static_cast<long>(samples.size());
    long step = 0;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_sum = 0.0;
        for (std::size_t idx : order) {
            const PreparedSample& s = samples[idx];
            LossAndGradient<float> lg;
            const int w = s.gt->width();
            const int h = s.gt->height();
            if (cfg.crop > 0 && (cfg.crop < w || cfg.crop < h)) {
                const int side = std::min({cfg.crop, w, h});
                const int x0 = std::uniform_int_distribution<int>(0, w - side)(rng);
                const int y0 = std::uniform_int_distribution<int>(0, h - side)(rng);
                std::vector<Tensor<float>> inputs;
                for (const auto& t : s.inputs) inputs.push_back(crop_tensor(t, x0, y0, side));
                DisparityMap gt(side, side);
                std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side);
                for (int y = 0; y < side; ++y) {
                    for (int x = 0; x < side; ++x) {
                        gt.at(x, y) = s.gt->at(x0 + x, y0 + y);
                        mask[static_cast<std::size_t>(y) * side + x] =
                            s.mask[static_cast<std::size_t>(y0 + y) * w + x0 + x];
                    }
                }
                if (std::none_of(mask.begin(), mask.end(), [](auto b) { return b != 0; })) continue;
                lg = backward<float>(net, inputs, s.d_min, gt, mask);
            } else {
                lg = backward<float>(net, s.inputs, s.d_min, *s.gt, s.mask);
            }
            if (!std::isfinite(lg.loss))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", sample " +
                                   std::to_string(idx));
            epoch_sum += lg.loss;

            ++step;
            const double frac = total_steps > 1 ? static_cast<double>(step - 1) / (total_steps - 1) : 0.0;
            const double lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * frac);
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            auto params = net.params();
            for (std::size_t i = 0; i < np; ++i) {
                const double g = lg.gradient[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_epsilon);
                params[i] = static_cast<float>(params[i] - update);
            }
        }
        const double mean = epoch_sum / static_cast<double>(samples.size());
        result.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    for (float p : net.params())
        if (!std::isfinite(p)) throw NumericError("non-finite network parameter after training");
    return result;
}

std::string format_loss_log(std::span<const double> epoch_loss) {
    std::string out;
    char buf[64];
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e, epoch_loss[e]);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kNetMagic[4] = {'M', 'F', 'N', '1'};
constexpr std::uint32_t kNetVersion = 1;
constexpr std::uint32_t kConv3dTag = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}
    std::uint32_t u32() {
        if (pos_ + 4 > bytes_.size()) throw FormatError("truncated network file");
        const auto* p = bytes_.data() + pos_;
        pos_ += 4;
        return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
               static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_net(const Network& net) {
    std::vector<std::uint8_t> out(kNetMagic, kNetMagic + 4);
    put_u32(out, kNetVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& l : net.layers()) {
        put_u32(out, kConv3dTag);
        put_u32(out, static_cast<std::uint32_t>(l.in));
        put_u32(out, static_cast<std::uint32_t>(l.out));
        put_u32(out, 3);
        put_u32(out, static_cast<std::uint32_t>(l.stride));
    }
    put_u32(out, static_cast<std::uint32_t>(net.param_count()));
    for (float p : net.params()) put_u32(out, std::bit_cast<std::uint32_t>(p));
    return out;
}

Network decode_net(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kNetMagic, 4) != 0) throw FormatError("not an MFN1 network file");
    ByteReader r(bytes.subspan(4));
    const std::uint32_t version = r.u32();
    if (version != kNetVersion) throw FormatError("unsupported network file version " + std::to_string(version));
    const std::uint32_t nlayers = r.u32();
    if (nlayers > 64) throw FormatError("implausible layer count");
    std::vector<ConvSpec> layers;
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        const std::uint32_t tag = r.u32();
        if (tag != kConv3dTag) throw FormatError("unknown layer tag " + std::to_string(tag));
        ConvSpec s;
        s.in = static_cast<int>(r.u32());
        s.out = static_cast<int>(r.u32());
        const std::uint32_t kernel = r.u32();
        s.stride = static_cast<int>(r.u32());
        if (kernel != 3) throw FormatError("unsupported kernel size " + std::to_string(kernel));
        if (s.in < 1 || s.out < 1 || s.in > 4096 || s.out > 4096) throw FormatError("invalid layer channels");
        layers.push_back(s);
    }
    if (layers.size() != static_cast<std::size_t>(BasicNetwork<float>::LayerCount))
        throw FormatError("layer inventory does not match the network topology");
    const NetConfig cfg{layers[0].out, layers[2].out};
    if (cfg.layers() != layers) throw FormatError("layer inventory does not match the network topology");
    Network net(cfg);
    const std::uint32_t count = r.u32();
    if (count != net.param_count()) throw FormatError("parameter count mismatch");
    if (r.remaining() != static_cast<std::size_t>(count) * 4) throw FormatError("network payload size mismatch");
    for (auto& p : net.params()) p = std::bit_cast<float>(r.u32());
    return net;
}

void save_net(const Network& net, const std::filesystem::path& path) { write_file(path, encode_net(net)); }

Network load_net(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_net(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

#define MFUSE_INSTANTIATE(T)                                                                                         \
    template class Tensor<T>;                                                                                        \
    template class BasicNetwork<T>;                                                                                  \
    template std::vector<Tensor<T>> prepare_inputs<T>(std::span<const CostVolume>, VolumeNormalization);             \
    template Tensor<T> network_scores<T>(const BasicNetwork<T>&, std::span<const Tensor<T>>);                        \
    template ForwardResult<T> regress<T>(const Tensor<T>&, int);                                                     \
    template ForwardResult<T> forward<T>(const BasicNetwork<T>&, std::span<const CostVolume>, VolumeNormalization);  \
    template double network_loss<T>(const BasicNetwork<T>&, std::span<const Tensor<T>>, int, const DisparityMap&,    \
                                    std::span<const std::uint8_t>);                                                  \
    template LossAndGradient<T> backward<T>(const BasicNetwork<T>&, std::span<const Tensor<T>>, int,                 \
                                            const DisparityMap&, std::span<const std::uint8_t>);                     \
    template LossAndGradient<T> backward<T>(const BasicNetwork<T>&, std::span<const CostVolume>,                     \
                                            const DisparityMap&, std::span<const std::uint8_t>,                      \
                                            VolumeNormalization);                                                    \
    template GradCheckResult grad_check<T>(const BasicNetwork<T>&, const TrainSample&, double, std::size_t,          \
                                           std::uint64_t, double);

MFUSE_INSTANTIATE(float)
MFUSE_INSTANTIATE(double)

#undef MFUSE_INSTANTIATE

} // namespace mfuse
