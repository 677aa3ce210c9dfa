// Quantization-aware training with the learning-compression (LC) scheme,
// and the direct-compression (DC) baseline.
//
// LC alternates between
//   learning:     psi     <- argmin L(psi) + mu/2 |psi - psi_hat - lambda/mu|^2
//   compression:  psi_hat <- nearest codebook point to psi - lambda/mu
//   multipliers:  lambda  <- lambda - mu (psi - psi_hat)
// with mu growing geometrically, until |psi - psi_hat| is below a tolerance.
#pragma once

#include "fxpnn/adam.hpp"
#include "fxpnn/codebook.hpp"
#include "fxpnn/comm.hpp"
#include "fxpnn/errors.hpp"
#include "fxpnn/model_io.hpp"
#include "fxpnn/nn.hpp"
#include "fxpnn/rng.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fxpnn {

/// A stochastic training objective: evaluates L on its next minibatch at
/// `params` and writes dL/dparams into `grad`.
template <class F>
concept BatchObjective = requires(F f, std::span<const double> p, std::span<double> g) {
    { f(p, g) } -> std::convertible_to<double>;
};

struct LcSchedule {
    double mu0 = 1e-3;
    double mu_factor = 1.4;
    int max_iters = 40;
    /// Stop once |psi - psi_hat|_2 drops below this; <= 0 selects 1e-3 sqrt(P).
    double stop_tol = 0.0;
    int learn_steps_per_iter = 500;
    /// Unconstrained Adam steps run before the first compression.
    int init_steps = 20000;
    AdamConfig adam{};
    /// Learning-step Adam step size is adam.step_size * lr_decay^k at LC iteration k.
    double lr_decay = 0.9;
    int batch_size = 256;
    double train_snr_db = 10.0;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(mu_factor > 1.0))
            throw std::invalid_argument("LC schedule: multiplicative factor must exceed 1");
        if (!(mu0 > 0.0))
            throw std::invalid_argument("LC schedule: mu0 must be positive");
        if (max_iters < 1 || learn_steps_per_iter < 0 || init_steps < 0 || batch_size < 1)
            throw std::invalid_argument("LC schedule: iteration and batch counts must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw std::invalid_argument("LC schedule: lr_decay must be in (0, 1]");
    }

    double tolerance(std::size_t num_params) const
    {
        return stop_tol > 0.0 ? stop_tol : 1e-3 * std::sqrt(static_cast<double>(num_params));
    }
};

/// Elementwise projection of a parameter vector: weights onto the
/// power-of-two codebook, biases onto the fixed-point grid.
class ParameterQuantizer {
public:
    ParameterQuantizer(const MlpArchitecture& arch, PowerOfTwoCodebook weights, BiasQuantizer biases)
        : weights_(std::move(weights)), biases_(std::move(biases)), is_bias_(arch.bias_mask())
    {
        if (weights_.total_bits() != biases_.format().total_bits())
            throw std::invalid_argument("weight codebook K=" + std::to_string(weights_.total_bits()) +
                                        " does not match bias format K=" +
                                        std::to_string(biases_.format().total_bits()));
    }

    const PowerOfTwoCodebook& weight_codebook() const { return weights_; }
    const BiasQuantizer& bias_quantizer() const { return biases_; }
    std::size_t size() const { return is_bias_.size(); }

    double project(std::size_t i, double x) const
    {
        return is_bias_[i] ? biases_.quantize(x) : weights_.quantize(x);
    }

    bool is_member(std::size_t i, double x) const
    {
        return is_bias_[i] ? biases_.contains(x) : weights_.contains(x);
    }

    void project(std::span<const double> in, std::span<double> out) const
    {
        check(in.size());
        for (std::size_t i = 0; i < in.size(); ++i)
            out[i] = project(i, in[i]);
    }

    bool all_members(std::span<const double> v) const
    {
        check(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!is_member(i, v[i]))
                return false;
        return true;
    }

private:
    void check(std::size_t n) const
    {
        if (n != is_bias_.size())
            throw std::invalid_argument("parameter vector length mismatch");
    }

    PowerOfTwoCodebook weights_;
    BiasQuantizer biases_;
    std::vector<bool> is_bias_;
};

/// Direct compression: nearest-codebook rounding of a trained model.
inline QuantizedMlpModel dc_quantize(const MlpModel& m, const PowerOfTwoCodebook& cb,
                                     const BiasQuantizer& bq)
{
    const ParameterQuantizer quant(m.arch(), cb, bq);
    std::vector<double> q(m.params().size());
    quant.project(m.params(), q);
    return quantized_from_reals(m.arch(), q, bq.format());
}

struct LcState {
    std::vector<double> psi;
    std::vector<double> psi_hat;
    std::vector<double> lambda;
    double mu = 0.0;

    std::size_t size() const { return psi.size(); }

    double gap() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < psi.size(); ++i) {
            const double d = psi[i] - psi_hat[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
};

/// Value of L(psi) + mu/2 |psi - psi_hat - lambda/mu|^2 given L(psi), and the
/// penalty gradient mu (psi - psi_hat) - lambda added into `grad`.
inline double add_penalty(const LcState& s, double loss, std::span<double> grad)
{
    double pen = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double r = s.psi[i] - s.psi_hat[i] - s.lambda[i] / s.mu;
        pen += r * r;
        grad[i] += s.mu * r;
    }
    return loss + 0.5 * s.mu * pen;
}

/// Adam steps on the augmented objective. Returns the mean of L over the steps.
template <BatchObjective Objective>
double learning_step(LcState& s, Objective&& loss, int steps, Adam& opt, double step_size)
{
    std::vector<double> grad(s.size());
    double total = 0.0;
    for (int t = 0; t < steps; ++t) {
        const double l = loss(std::span<const double>(s.psi), std::span<double>(grad));
        if (!std::isfinite(l))
            throw TrainingDiverged("training loss became non-finite");
        add_penalty(s, l, grad);
        opt.step(s.psi, grad, step_size);
        total += l;
    }
    return steps > 0 ? total / steps : 0.0;
}

/// psi_hat <- projection of psi - lambda/mu.
inline void compression_step(LcState& s, const ParameterQuantizer& quant)
{
    for (std::size_t i = 0; i < s.size(); ++i)
        s.psi_hat[i] = quant.project(i, s.psi[i] - s.lambda[i] / s.mu);
}

inline void multiplier_update(LcState& s)
{
    for (std::size_t i = 0; i < s.size(); ++i)
        s.lambda[i] -= s.mu * (s.psi[i] - s.psi_hat[i]);
}

/// Plain Adam minimisation of L. Returns the mean loss over the last
/// min(steps, 100) steps.
template <BatchObjective Objective>
double train_unconstrained(std::span<double> params, Objective&& loss, int steps, Adam& opt)
{
    std::vector<double> grad(params.size());
    double tail = 0.0;
    int tail_n = 0;
    for (int t = 0; t < steps; ++t) {
        const double l = loss(std::span<const double>(params.data(), params.size()),
                              std::span<double>(grad));
        if (!std::isfinite(l))
            throw TrainingDiverged("training loss became non-finite at step " + std::to_string(t));
        opt.step(params, grad);
        if (t >= steps - 100) {
            tail += l;
            ++tail_n;
        }
    }
    return tail_n > 0 ? tail / tail_n : 0.0;
}

struct LcTraceRow {
    int iter = 0;
    double mu = 0.0;
    double psi_gap = 0.0;
    double loss = 0.0;
};

inline void write_trace_csv(std::ostream& os, std::span<const LcTraceRow> trace)
{
    os << "iter,mu,psi_gap,loss\n";
    for (const auto& r : trace)
        os << r.iter << ',' << detail::format_double(r.mu) << ',' << detail::format_double(r.psi_gap)
           << ',' << detail::format_double(r.loss) << '\n';
}

struct LcResult {
    QuantizedMlpModel model;
    std::vector<LcTraceRow> trace;
    bool converged = false;
    /// Unquantized parameters at the end of the run.
    std::vector<double> psi;
};

/// Full LC run from `initial`: init_steps of unconstrained training, a DC
/// projection, then LC iterations. On non-convergence the iterate with the
/// smallest gap is returned and `converged` is false.
template <BatchObjective Objective>
LcResult lc_train(const MlpModel& initial, const LcSchedule& sched, Objective&& loss,
                  const PowerOfTwoCodebook& cb, const BiasQuantizer& bq)
{
    sched.validate();
    const ParameterQuantizer quant(initial.arch(), cb, bq);
    const std::size_t n = initial.params().size();
    const double tol = sched.tolerance(n);

    LcState s;
    s.psi.assign(initial.params().begin(), initial.params().end());
    Adam opt(n, sched.adam);
    train_unconstrained(s.psi, loss, sched.init_steps, opt);
    s.psi_hat.resize(n);
    quant.project(s.psi, s.psi_hat);
    s.lambda.assign(n, 0.0);

    std::vector<LcTraceRow> trace;
    std::vector<double> best_hat = s.psi_hat;
    double best_gap = std::numeric_limits<double>::infinity();
    bool converged = false;
    s.mu = sched.mu0;
    for (int k = 0; k < sched.max_iters; ++k) {
        const double lr = sched.adam.step_size * std::pow(sched.lr_decay, k);
        const double mean_loss = learning_step(s, loss, sched.learn_steps_per_iter, opt, lr);
        compression_step(s, quant);
        multiplier_update(s);
        const double gap = s.gap();
        trace.push_back({k + 1, s.mu, gap, mean_loss});
        if (gap < best_gap) {
            best_gap = gap;
            best_hat = s.psi_hat;
        }
        if (gap < tol) {
            converged = true;
            best_hat = s.psi_hat;
            break;
        }
        s.mu *= sched.mu_factor;
    }
    return {quantized_from_reals(initial.arch(), best_hat, bq.format()), std::move(trace), converged,
            std::move(s.psi)};
}

/// Online minibatches for the receiver: uniform messages sent over AWGN at a
/// fixed SNR, passed through the receiver front end. Yields softmax
/// cross-entropy and its gradient for an architecture.
class ReceiverObjective {
public:
    ReceiverObjective(const MlpArchitecture& arch, const Constellation& constellation,
                      double snr_db, int batch_size, std::uint64_t seed, double sigma2 = 1e-8)
        : arch_(arch), constellation_(constellation), channel_(ChannelConfig::at_snr(snr_db, sigma2)),
          rng_(stream_seed(seed, {0x7472616eULL})), inputs_(batch_size, arch.input_dim()),
          labels_(static_cast<std::size_t>(batch_size))
    {
        if (static_cast<std::size_t>(arch.input_dim()) != constellation.dim() ||
            static_cast<std::size_t>(arch.output_dim()) != constellation.messages())
            throw std::invalid_argument("architecture does not match the constellation");
    }

    double operator()(std::span<const double> params, std::span<double> grad)
    {
        next_batch();
        return loss_and_gradient(arch_, params, inputs_, labels_, grad);
    }

    void next_batch()
    {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(constellation_.messages()) - 1);
        std::normal_distribution<double> normal(0.0, 1.0);
        const std::size_t d = constellation_.dim();
        std::vector<double> noise(d);
        std::vector<double> y(d);
        for (Eigen::Index b = 0; b < inputs_.rows(); ++b) {
            const int m = pick(rng_);
            for (double& v : noise)
                v = normal(rng_);
            channel_output(static_cast<std::size_t>(m), constellation_, channel_, noise, y);
            receiver_front_end(y, channel_.es, std::span<double>(inputs_.row(b).data(), d));
            labels_[static_cast<std::size_t>(b)] = m;
        }
    }

    const RowMatrix& inputs() const { return inputs_; }
    std::span<const int> labels() const { return labels_; }

private:
    MlpArchitecture arch_;
    const Constellation& constellation_;
    ChannelConfig channel_;
    std::mt19937_64 rng_;
    RowMatrix inputs_;
    std::vector<int> labels_;
};

}  // namespace fxpnn
