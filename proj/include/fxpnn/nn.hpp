// Receiver MLP: C2R front end, dense layers with ReLU on every hidden layer,
// and a linear output layer whose pre-activations are used for hard
// decisions (softmax is only needed for the training loss).
//
// Parameters live in one flat vector. For each layer in order: the weight
// matrix (out x in, row-major, row = output unit), then the bias vector if the
// layer has one.
#pragma once

#include "fxpnn/codebook.hpp"
#include "fxpnn/fxp.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fxpnn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class MlpArchitecture {
public:
    /// `dims` lists the input width followed by each layer's width.
    MlpArchitecture(std::vector<int> dims, std::vector<bool> bias_flags)
        : dims_(std::move(dims)), bias_(std::move(bias_flags))
    {
        if (dims_.size() < 2)
            throw std::invalid_argument("architecture needs an input and at least one layer");
        if (bias_.size() != dims_.size() - 1)
            throw std::invalid_argument("one bias flag per layer required");
        for (int d : dims_)
            if (d < 1)
                throw std::invalid_argument("layer widths must be positive");
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            weight_off_.push_back(off);
            off += static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l + 1]);
            bias_off_.push_back(off);
            if (bias_[l])
                off += static_cast<std::size_t>(dims_[l + 1]);
        }
        num_params_ = off;
    }

    /// C2R(N) -> dense 64 ReLU -> dense 32 ReLU -> dense M (no bias).
    static MlpArchitecture receiver(int channel_uses = 4, int messages = 256)
    {
        return MlpArchitecture({2 * channel_uses, 64, 32, messages}, {true, true, false});
    }

    std::size_t num_layers() const { return dims_.size() - 1; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    int in(std::size_t layer) const { return dims_[layer]; }
    int out(std::size_t layer) const { return dims_[layer + 1]; }
    bool has_bias(std::size_t layer) const { return bias_[layer]; }
    std::size_t weight_offset(std::size_t layer) const { return weight_off_[layer]; }
    std::size_t bias_offset(std::size_t layer) const { return bias_off_[layer]; }
    std::size_t num_params() const { return num_params_; }
    const std::vector<int>& dims() const { return dims_; }
    const std::vector<bool>& bias_flags() const { return bias_; }

    /// true for every parameter index that holds a bias.
    std::vector<bool> bias_mask() const
    {
        std::vector<bool> mask(num_params_, false);
        for (std::size_t l = 0; l < num_layers(); ++l)
            if (bias_[l])
                std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(bias_off_[l]), out(l), true);
        return mask;
    }

    bool operator==(const MlpArchitecture& o) const
    {
        return dims_ == o.dims_ && bias_ == o.bias_;
    }

private:
    std::vector<int> dims_;
    std::vector<bool> bias_;
    std::vector<std::size_t> weight_off_;
    std::vector<std::size_t> bias_off_;
    std::size_t num_params_ = 0;
};

class MlpModel {
public:
    explicit MlpModel(MlpArchitecture arch)
        : arch_(std::move(arch)), params_(arch_.num_params(), 0.0)
    {}

    MlpModel(MlpArchitecture arch, std::vector<double> params)
        : arch_(std::move(arch)), params_(std::move(params))
    {
        if (params_.size() != arch_.num_params())
            throw std::invalid_argument("parameter vector length " + std::to_string(params_.size()) +
                                        " does not match architecture (" +
                                        std::to_string(arch_.num_params()) + ")");
    }

    /// Glorot-uniform weights, zero biases.
    static MlpModel glorot(MlpArchitecture arch, std::uint64_t seed)
    {
        MlpModel m(std::move(arch));
        std::mt19937_64 rng(seed);
        for (std::size_t l = 0; l < m.arch_.num_layers(); ++l) {
            const double limit = std::sqrt(6.0 / (m.arch_.in(l) + m.arch_.out(l)));
            std::uniform_real_distribution<double> dist(-limit, limit);
            auto w = m.weights(l);
            for (double& v : w)
                v = dist(rng);
        }
        return m;
    }

    const MlpArchitecture& arch() const { return arch_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::span<double> weights(std::size_t l)
    {
        return std::span(params_).subspan(arch_.weight_offset(l),
                                          static_cast<std::size_t>(arch_.in(l)) * arch_.out(l));
    }
    std::span<const double> weights(std::size_t l) const
    {
        return std::span(params_).subspan(arch_.weight_offset(l),
                                          static_cast<std::size_t>(arch_.in(l)) * arch_.out(l));
    }
    double weight(std::size_t l, int row, int col) const
    {
        return params_[arch_.weight_offset(l) + static_cast<std::size_t>(row) * arch_.in(l) + col];
    }
    double bias(std::size_t l, int idx) const
    {
        return arch_.has_bias(l) ? params_[arch_.bias_offset(l) + idx] : 0.0;
    }

private:
    MlpArchitecture arch_;
    std::vector<double> params_;
};

/// Interleaves N complex samples as [Re y1, Im y1, ..., Re yN, Im yN].
inline std::vector<double> c2r(std::span<const std::complex<double>> y, std::size_t expected_len)
{
    if (y.size() != expected_len)
        throw std::invalid_argument("c2r: expected " + std::to_string(expected_len) +
                                    " complex samples, got " + std::to_string(y.size()));
    std::vector<double> out;
    out.reserve(2 * y.size());
    for (const auto& s : y) {
        out.push_back(s.real());
        out.push_back(s.imag());
    }
    return out;
}

inline std::vector<double> c2r(std::span<const std::complex<double>> y)
{
    return c2r(y, y.size());
}

namespace detail {

inline Eigen::Map<const RowMatrix> weight_map(const MlpArchitecture& a, std::span<const double> p,
                                              std::size_t l)
{
    return {p.data() + a.weight_offset(l), a.out(l), a.in(l)};
}

inline Eigen::Map<const Eigen::RowVectorXd> bias_map(const MlpArchitecture& a,
                                                     std::span<const double> p, std::size_t l)
{
    return {p.data() + a.bias_offset(l), a.out(l)};
}

}  // namespace detail

/// Logits for a batch of inputs (one row per sample).
inline RowMatrix forward_batch(const MlpArchitecture& arch, std::span<const double> params,
                               const RowMatrix& inputs)
{
    if (inputs.cols() != arch.input_dim())
        throw std::invalid_argument("input width does not match architecture");
    RowMatrix act = inputs;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        RowMatrix z = act * detail::weight_map(arch, params, l).transpose();
        if (arch.has_bias(l))
            z.rowwise() += detail::bias_map(arch, params, l);
        if (l + 1 < arch.num_layers())
            z = z.cwiseMax(0.0);
        act = std::move(z);
    }
    return act;
}

inline std::vector<double> forward_float(const MlpModel& m, std::span<const double> x)
{
    if (x.size() != static_cast<std::size_t>(m.arch().input_dim()))
        throw std::invalid_argument("forward_float: input length mismatch");
    const auto& arch = m.arch();
    Eigen::VectorXd act = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        Eigen::VectorXd z = detail::weight_map(arch, m.params(), l) * act;
        if (arch.has_bias(l))
            z += detail::bias_map(arch, m.params(), l).transpose();
        if (l + 1 < arch.num_layers())
            z = z.cwiseMax(0.0);
        act = std::move(z);
    }
    return {act.data(), act.data() + act.size()};
}

/// Index of the largest logit; ties go to the smaller index.
template <class Range>
std::size_t argmax(const Range& v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < std::size(v); ++i)
        if (v[i] > v[best])
            best = i;
    return best;
}

/// Mean categorical cross-entropy of softmax(logits) over the batch; writes the
/// gradient with respect to every parameter into `grad`.
inline double loss_and_gradient(const MlpArchitecture& arch, std::span<const double> params,
                                const RowMatrix& inputs, std::span<const int> labels,
                                std::span<double> grad)
{
    const auto batch = inputs.rows();
    if (batch == 0 || static_cast<std::size_t>(batch) != labels.size())
        throw std::invalid_argument("loss_and_gradient: batch must be non-empty and labelled");
    if (grad.size() != arch.num_params())
        throw std::invalid_argument("loss_and_gradient: gradient buffer length mismatch");

    const std::size_t layers = arch.num_layers();
    std::vector<RowMatrix> acts(layers + 1);
    acts[0] = inputs;
    for (std::size_t l = 0; l < layers; ++l) {
        RowMatrix z = acts[l] * detail::weight_map(arch, params, l).transpose();
        if (arch.has_bias(l))
            z.rowwise() += detail::bias_map(arch, params, l);
        if (l + 1 < layers)
            z = z.cwiseMax(0.0);
        acts[l + 1] = std::move(z);
    }

    // Softmax cross-entropy, numerically stabilised per row.
    RowMatrix& logits = acts[layers];
    RowMatrix delta(batch, logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= logits.cols())
            throw std::invalid_argument("loss_and_gradient: label out of range");
        const double peak = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - peak).exp();
        const double total = e.sum();
        loss += std::log(total) + peak - logits(i, label);
        delta.row(i) = e / total;
        delta(i, label) -= 1.0;
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    delta *= inv_batch;

    for (std::size_t l = layers; l-- > 0;) {
        Eigen::Map<RowMatrix> gw(grad.data() + arch.weight_offset(l), arch.out(l), arch.in(l));
        gw.noalias() = delta.transpose() * acts[l];
        if (arch.has_bias(l)) {
            Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + arch.bias_offset(l), arch.out(l));
            gb = delta.colwise().sum();
        }
        if (l > 0) {
            RowMatrix back = delta * detail::weight_map(arch, params, l);
            delta = (acts[l].array() > 0.0).select(back, 0.0);
        }
    }
    return loss * inv_batch;
}

inline double loss_and_gradient(const MlpModel& m, const RowMatrix& inputs,
                                std::span<const int> labels, std::span<double> grad)
{
    return loss_and_gradient(m.arch(), m.params(), inputs, labels, grad);
}

/// A weight restricted to {0, +/-2^q}.
struct WeightCode {
    bool zero = true;
    bool negative = false;
    int exponent = 0;

    static WeightCode from_real(double w, int max_exponent)
    {
        if (w == 0.0)
            return {};
        int exp = 0;
        const double mant = std::frexp(std::abs(w), &exp);
        if (mant != 0.5 || std::abs(exp - 1) > max_exponent)
            throw std::invalid_argument("weight " + std::to_string(w) +
                                        " is not in the power-of-two codebook");
        return {false, w < 0.0, exp - 1};
    }

    double to_real() const
    {
        return zero ? 0.0 : (negative ? -1.0 : 1.0) * std::ldexp(1.0, exponent);
    }

    bool operator==(const WeightCode&) const = default;
};

/// Deployment form of the receiver: exponent codes for weights and raw
/// fixed-point integers for biases.
class QuantizedMlpModel {
public:
    QuantizedMlpModel(MlpArchitecture arch, fxp::FixedPointFormat format,
                      std::vector<WeightCode> weights, std::vector<std::int64_t> biases)
        : arch_(std::move(arch)), format_(format), weights_(std::move(weights)),
          biases_(std::move(biases))
    {
        std::size_t nw = 0;
        std::size_t nb = 0;
        for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
            weight_start_.push_back(nw);
            bias_start_.push_back(nb);
            nw += static_cast<std::size_t>(arch_.in(l)) * arch_.out(l);
            if (arch_.has_bias(l))
                nb += static_cast<std::size_t>(arch_.out(l));
        }
        if (weights_.size() != nw || biases_.size() != nb)
            throw std::invalid_argument("quantized model: code counts do not match architecture");
        const int qmax = format_.total_bits() - 2;
        for (const auto& w : weights_)
            if (!w.zero && std::abs(w.exponent) > qmax)
                throw std::invalid_argument("quantized model: weight exponent outside codebook");
        for (auto b : biases_)
            if (b > format_.max_raw() || b < -format_.max_raw())
                throw std::invalid_argument("quantized model: bias outside format range");
    }

    const MlpArchitecture& arch() const { return arch_; }
    const fxp::FixedPointFormat& format() const { return format_; }
    std::span<const WeightCode> weights() const { return weights_; }
    std::span<const std::int64_t> biases() const { return biases_; }

    const WeightCode& weight(std::size_t l, int row, int col) const
    {
        return weights_[weight_start_[l] + static_cast<std::size_t>(row) * arch_.in(l) + col];
    }
    std::int64_t bias_raw(std::size_t l, int idx) const { return biases_[bias_start_[l] + idx]; }

    /// Real-valued model with exactly the same parameter values.
    MlpModel dequantize() const
    {
        MlpModel m(arch_);
        auto p = m.params();
        for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
            for (int r = 0; r < arch_.out(l); ++r)
                for (int c = 0; c < arch_.in(l); ++c)
                    p[arch_.weight_offset(l) + static_cast<std::size_t>(r) * arch_.in(l) + c] =
                        weight(l, r, c).to_real();
            if (arch_.has_bias(l))
                for (int i = 0; i < arch_.out(l); ++i)
                    p[arch_.bias_offset(l) + i] =
                        std::ldexp(static_cast<double>(bias_raw(l, i)), -format_.frac_bits());
        }
        return m;
    }

    bool operator==(const QuantizedMlpModel& o) const
    {
        return arch_ == o.arch_ && format_ == o.format_ && weights_ == o.weights_ &&
               biases_ == o.biases_;
    }

private:
    MlpArchitecture arch_;
    fxp::FixedPointFormat format_;
    std::vector<WeightCode> weights_;
    std::vector<std::int64_t> biases_;
    std::vector<std::size_t> weight_start_;
    std::vector<std::size_t> bias_start_;
};

/// Lossless conversion of codebook-valued parameters into exponent codes.
/// Throws std::invalid_argument if any weight is off the codebook for
/// K = format.total_bits() or any bias is off the format grid.
inline QuantizedMlpModel quantized_from_reals(const MlpArchitecture& arch,
                                              std::span<const double> params,
                                              fxp::FixedPointFormat format)
{
    if (params.size() != arch.num_params())
        throw std::invalid_argument("quantized_from_reals: parameter length mismatch");
    const int qmax = format.total_bits() - 2;
    const BiasQuantizer grid(format);
    std::vector<WeightCode> weights;
    std::vector<std::int64_t> biases;
    weights.reserve(arch.num_params());
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const auto nw = static_cast<std::size_t>(arch.in(l)) * arch.out(l);
        for (std::size_t i = 0; i < nw; ++i)
            weights.push_back(WeightCode::from_real(params[arch.weight_offset(l) + i], qmax));
        if (!arch.has_bias(l))
            continue;
        for (int i = 0; i < arch.out(l); ++i) {
            const double b = params[arch.bias_offset(l) + i];
            if (!grid.contains(b))
                throw std::invalid_argument("bias " + std::to_string(b) +
                                            " is not on the fixed-point grid " + format.to_string());
            biases.push_back(static_cast<std::int64_t>(std::ldexp(b, format.frac_bits())));
        }
    }
    return {arch, format, std::move(weights), std::move(biases)};
}

inline QuantizedMlpModel quantized_from_reals(const MlpModel& m, fxp::FixedPointFormat format)
{
    return quantized_from_reals(m.arch(), m.params(), format);
}

/// Bit-accurate inference on raw fixed-point integers. Every product is a
/// shift (or zeroing) and every accumulation goes through ctx.add_raw: a layer
/// with `in` inputs spends in-1 additions per unit, plus one for the bias.
class FixedPointInference {
public:
    explicit FixedPointInference(const QuantizedMlpModel& model) : model_(&model)
    {
        const auto& arch = model.arch();
        std::size_t widest = static_cast<std::size_t>(arch.input_dim());
        for (std::size_t l = 0; l < arch.num_layers(); ++l)
            widest = std::max(widest, static_cast<std::size_t>(arch.out(l)));
        buf_a_.resize(widest);
        buf_b_.resize(widest);
    }

    /// Writes output_dim() pre-activations into `out`.
    void run(std::span<const std::int64_t> x, fxp::Context& ctx, std::span<std::int64_t> out)
    {
        const auto& arch = model_->arch();
        const std::int64_t max_raw = model_->format().max_raw();
        std::copy(x.begin(), x.end(), buf_a_.begin());
        std::span<std::int64_t> cur(buf_a_);
        std::span<std::int64_t> nxt(buf_b_);
        for (std::size_t l = 0; l < arch.num_layers(); ++l) {
            const int n_in = arch.in(l);
            const bool last = l + 1 == arch.num_layers();
            for (int r = 0; r < arch.out(l); ++r) {
                const WeightCode* w = &model_->weight(l, r, 0);
                std::int64_t acc = product(w[0], cur[0], ctx, max_raw);
                for (int c = 1; c < n_in; ++c)
                    acc = ctx.add_raw(acc, product(w[c], cur[static_cast<std::size_t>(c)], ctx, max_raw),
                                      max_raw);
                if (arch.has_bias(l))
                    acc = ctx.add_raw(acc, model_->bias_raw(l, r), max_raw);
                acc = ctx.saturate(acc, max_raw);
                if (!last && acc < 0)
                    acc = 0;
                nxt[static_cast<std::size_t>(r)] = acc;
            }
            std::swap(cur, nxt);
        }
        std::copy_n(cur.begin(), arch.output_dim(), out.begin());
    }

private:
    static std::int64_t product(const WeightCode& w, std::int64_t x, fxp::Context& ctx,
                                std::int64_t max_raw)
    {
        if (w.zero)
            return 0;
        const std::int64_t shifted = ctx.mul_pow2_raw(x, w.exponent, max_raw);
        return w.negative ? -shifted : shifted;
    }

    const QuantizedMlpModel* model_;
    std::vector<std::int64_t> buf_a_;
    std::vector<std::int64_t> buf_b_;
};

inline std::vector<fxp::FxpValue> forward_fixed(const QuantizedMlpModel& q,
                                                std::span<const fxp::FxpValue> x,
                                                fxp::Context& ctx)
{
    if (x.size() != static_cast<std::size_t>(q.arch().input_dim()))
        throw std::invalid_argument("forward_fixed: input length mismatch");
    std::vector<std::int64_t> raw;
    raw.reserve(x.size());
    for (const auto& v : x) {
        if (!(v.format() == q.format()))
            throw std::invalid_argument("forward_fixed: input format " + v.format().to_string() +
                                        " differs from model format " + q.format().to_string());
        raw.push_back(v.raw());
    }
    std::vector<std::int64_t> out(static_cast<std::size_t>(q.arch().output_dim()));
    FixedPointInference(q).run(raw, ctx, out);
    std::vector<fxp::FxpValue> result;
    result.reserve(out.size());
    for (auto r : out)
        result.emplace_back(r, q.format());
    return result;
}

}  // namespace fxpnn
