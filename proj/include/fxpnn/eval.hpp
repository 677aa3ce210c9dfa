// Monte-Carlo block-error-rate estimation and the addition-count complexity
// model.
//
// Blocks are simulated in fixed-size chunks. Chunk c draws its messages and
// unit-variance noise from a stream keyed by (seed, c), and the same
// realisations are reused at every SNR and by every receiver. Results
// therefore depend only on (seed, blocks, SNR list), never on the number of
// worker threads.
#pragma once

#include "fxpnn/comm.hpp"
#include "fxpnn/fxp.hpp"
#include "fxpnn/nn.hpp"
#include "fxpnn/rng.hpp"

#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fxpnn {

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;

    bool overlaps(const WilsonInterval& o) const { return lo <= o.hi && o.lo <= hi; }
};

/// Wilson score interval; z = 1.96 gives 95 % coverage.
inline WilsonInterval wilson_interval(std::uint64_t errors, std::uint64_t blocks, double z = 1.959963984540054)
{
    if (blocks == 0)
        return {0.0, 1.0};
    const double n = static_cast<double>(blocks);
    const double p = static_cast<double>(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct BlerPoint {
    double snr_db = 0.0;
    double bler = 0.0;
    std::uint64_t blocks = 0;
    std::uint64_t errors = 0;
    std::string receiver;

    WilsonInterval interval() const { return wilson_interval(errors, blocks); }
};

struct BlerReport {
    std::vector<BlerPoint> points;
    /// Saturation events over the whole run (fixed-point receivers only).
    std::uint64_t saturations = 0;
};

/// A receiver hands out per-thread workers; a worker maps a channel output
/// y (2N reals) at energy es to a 0-based message index.
template <class R>
concept Receiver = requires(const R& r, std::span<const double> y, double es, fxp::Context& ctx) {
    { r.tag() } -> std::convertible_to<std::string>;
    { r.make_worker().detect(y, es, ctx) } -> std::convertible_to<std::size_t>;
};

class MlReceiver {
public:
    explicit MlReceiver(const Constellation& c) : c_(&c) {}
    std::string tag() const { return "ml"; }

    struct Worker {
        const Constellation* c;
        std::size_t detect(std::span<const double> y, double es, fxp::Context&) const
        {
            return ml_detect(y, *c, es);
        }
    };
    Worker make_worker() const { return {c_}; }

private:
    const Constellation* c_;
};

class FloatNnReceiver {
public:
    FloatNnReceiver(const MlpModel& m, std::string tag = "nn-float") : m_(&m), tag_(std::move(tag)) {}
    std::string tag() const { return tag_; }

    class Worker {
    public:
        explicit Worker(const MlpModel& m) : m_(&m), x_(static_cast<std::size_t>(m.arch().input_dim())) {}
        std::size_t detect(std::span<const double> y, double es, fxp::Context&)
        {
            receiver_front_end(y, es, x_);
            return argmax(forward_float(*m_, x_));
        }

    private:
        const MlpModel* m_;
        std::vector<double> x_;
    };
    Worker make_worker() const { return Worker(*m_); }

private:
    const MlpModel* m_;
    std::string tag_;
};

class FixedNnReceiver {
public:
    FixedNnReceiver(const QuantizedMlpModel& q, std::string tag = "nn-fixed") : q_(&q), tag_(std::move(tag)) {}
    std::string tag() const { return tag_; }

    class Worker {
    public:
        explicit Worker(const QuantizedMlpModel& q)
            : q_(&q), engine_(q), x_(static_cast<std::size_t>(q.arch().input_dim())),
              raw_(x_.size()), out_(static_cast<std::size_t>(q.arch().output_dim()))
        {}

        std::size_t detect(std::span<const double> y, double es, fxp::Context& ctx)
        {
            receiver_front_end(y, es, x_);
            for (std::size_t i = 0; i < x_.size(); ++i) {
                bool sat = false;
                raw_[i] = fxp::encode_raw(x_[i], q_->format(), sat);
                if (sat)
                    ctx.count_saturation();
            }
            engine_.run(raw_, ctx, out_);
            return argmax(out_);
        }

    private:
        const QuantizedMlpModel* q_;
        FixedPointInference engine_;
        std::vector<double> x_;
        std::vector<std::int64_t> raw_;
        std::vector<std::int64_t> out_;
    };
    Worker make_worker() const { return Worker(*q_); }

private:
    const QuantizedMlpModel* q_;
    std::string tag_;
};

struct BlerConfig {
    std::vector<double> snr_db;
    std::uint64_t blocks = 100000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    double sigma2 = 1e-8;
    /// Drop the noise term entirely.
    bool noiseless = false;
    std::uint64_t chunk_size = 1000;
    fxp::AccumulateMode accumulate = fxp::AccumulateMode::saturate_each;
};

template <Receiver R>
BlerReport estimate_bler(const R& receiver, const Constellation& c, const BlerConfig& cfg)
{
    if (cfg.blocks < 1)
        throw std::invalid_argument("estimate_bler: blocks must be at least 1");
    if (cfg.snr_db.empty())
        throw std::invalid_argument("estimate_bler: empty SNR list");
    if (cfg.chunk_size < 1)
        throw std::invalid_argument("estimate_bler: chunk size must be at least 1");
    const std::size_t n_snr = cfg.snr_db.size();
    const std::uint64_t n_chunks = (cfg.blocks + cfg.chunk_size - 1) / cfg.chunk_size;
    std::vector<ChannelConfig> channels;
    for (double s : cfg.snr_db)
        channels.push_back(ChannelConfig::at_snr(s, cfg.sigma2));

    std::vector<std::uint64_t> errors(n_chunks * n_snr, 0);
    std::vector<fxp::Context> contexts(std::max(1u, cfg.workers), fxp::Context(cfg.accumulate));
    std::atomic<std::uint64_t> next{0};

    auto work = [&](unsigned wid) {
        auto worker = receiver.make_worker();
        fxp::Context& ctx = contexts[wid];
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> noise(c.dim());
        std::vector<double> y(c.dim());
        for (std::uint64_t chunk; (chunk = next.fetch_add(1)) < n_chunks;) {
            std::mt19937_64 rng(stream_seed(cfg.seed, {chunk}));
            std::uniform_int_distribution<std::size_t> pick(0, c.messages() - 1);
            normal.reset();
            const std::uint64_t first = chunk * cfg.chunk_size;
            const std::uint64_t last = std::min(cfg.blocks, first + cfg.chunk_size);
            for (std::uint64_t b = first; b < last; ++b) {
                const std::size_t m = pick(rng);
                for (double& v : noise)
                    v = cfg.noiseless ? 0.0 : normal(rng);
                for (std::size_t s = 0; s < n_snr; ++s) {
                    channel_output(m, c, channels[s], noise, y);
                    if (worker.detect(y, channels[s].es, ctx) != m)
                        ++errors[chunk * n_snr + s];
                }
            }
        }
    };

    const unsigned n_workers = std::max(1u, cfg.workers);
    if (n_workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < n_workers; ++w)
            pool.emplace_back(work, w);
    }

    BlerReport report;
    for (std::size_t s = 0; s < n_snr; ++s) {
        std::uint64_t e = 0;
        for (std::uint64_t ch = 0; ch < n_chunks; ++ch)
            e += errors[ch * n_snr + s];
        report.points.push_back({cfg.snr_db[s], static_cast<double>(e) / static_cast<double>(cfg.blocks),
                                 cfg.blocks, e, receiver.tag()});
    }
    for (const auto& ctx : contexts)
        report.saturations += ctx.saturations();
    return report;
}

/// SNR grid start, start+step, ... up to stop inclusive (with a small
/// tolerance for accumulated rounding).
inline std::vector<double> snr_grid(double start, double stop, double step)
{
    if (!(step > 0.0))
        throw std::invalid_argument("SNR step must be positive");
    if (stop < start)
        throw std::invalid_argument("SNR stop must not be below start");
    std::vector<double> g;
    for (int i = 0;; ++i) {
        const double v = start + i * step;
        if (v > stop + 1e-9 * step)
            break;
        g.push_back(v);
    }
    return g;
}

inline std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_bler_csv(std::ostream& os, std::span<const BlerPoint> points, bool header = true)
{
    if (header)
        os << "snr,bler,blocks,errors,receiver\n";
    for (const auto& p : points)
        os << format_number(p.snr_db) << ',' << format_number(p.bler) << ',' << p.blocks << ','
           << p.errors << ',' << p.receiver << '\n';
}

enum class ReceiverKind { ml, nn };

struct ComplexityReport {
    ReceiverKind kind = ReceiverKind::ml;
    int k = 0;
    std::uint64_t additions = 0;
    double ratio_vs_ml = 1.0;
};

/// ML: per candidate, 2N subtractions, 2N squarings at K-1 additions each and
/// 2N-1 additions to sum the squares.
inline std::uint64_t ml_additions(std::uint64_t messages, std::uint64_t channel_uses, int k)
{
    const std::uint64_t d = 2 * channel_uses;
    return messages * (d + d * static_cast<std::uint64_t>(k - 1) + (d - 1));
}

/// NN: each unit of a dense layer sums `in` shifted inputs (in-1 additions)
/// plus one for the bias. Shifts are hard-wired and cost nothing.
inline std::uint64_t nn_additions(const MlpArchitecture& arch)
{
    std::uint64_t total = 0;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const auto out = static_cast<std::uint64_t>(arch.out(l));
        total += out * static_cast<std::uint64_t>(arch.in(l) - 1);
        if (arch.has_bias(l))
            total += out;
    }
    return total;
}

inline ComplexityReport count_additions(ReceiverKind kind, const MlpArchitecture& arch,
                                        std::uint64_t messages, std::uint64_t channel_uses, int k)
{
    if (k < 3)
        throw std::invalid_argument("complexity: K must be at least 3");
    const std::uint64_t ml = ml_additions(messages, channel_uses, k);
    const std::uint64_t count = kind == ReceiverKind::ml ? ml : nn_additions(arch);
    return {kind, k, count, static_cast<double>(count) / static_cast<double>(ml)};
}

/// Ratio with four decimals, trailing zeros trimmed to one ("1.0", "0.3445").
inline std::string format_ratio(double r)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", r);
    std::string s = buf;
    while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.')
        s.pop_back();
    return s;
}

inline void write_complexity_csv(std::ostream& os, std::span<const ComplexityReport> rows)
{
    os << "receiver,k,additions,ratio\n";
    for (const auto& r : rows)
        os << (r.kind == ReceiverKind::ml ? "ml" : "nn") << ',' << r.k << ',' << r.additions << ','
           << format_ratio(r.ratio_vs_ml) << '\n';
}

}  // namespace fxpnn
