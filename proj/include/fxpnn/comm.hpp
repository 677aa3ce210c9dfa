// Transmitter constellation, AWGN channel and the maximum-likelihood
// detector. Complex samples are carried as interleaved real pairs (2N reals
// for N channel uses) throughout.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fxpnn/errors.hpp"

namespace fxpnn {

/// M points in 2N real dimensions, stored row-major.
class Constellation {
public:
    Constellation(std::size_t messages, std::size_t channel_uses, std::vector<double> coords)
        : messages_(messages), channel_uses_(channel_uses), coords_(std::move(coords))
    {
        if (messages == 0 || channel_uses == 0)
            throw std::invalid_argument("constellation needs at least one point and one channel use");
        if (coords_.size() != messages * 2 * channel_uses)
            throw std::invalid_argument("constellation coordinate count mismatch");
    }

    std::size_t messages() const { return messages_; }
    std::size_t channel_uses() const { return channel_uses_; }
    std::size_t dim() const { return 2 * channel_uses_; }

    std::span<const double> point(std::size_t m) const
    {
        return std::span(coords_).subspan(m * dim(), dim());
    }
    std::span<const double> coords() const { return coords_; }

    /// Average energy per complex symbol, (1/M) sum_m (1/N) |x_m|^2.
    double energy_per_symbol() const
    {
        double total = 0.0;
        for (double v : coords_)
            total += v * v;
        return total / static_cast<double>(messages_ * channel_uses_);
    }

    /// Copy scaled to unit energy per complex symbol.
    Constellation normalized() const
    {
        const double e = energy_per_symbol();
        if (!(e > 0.0))
            throw std::invalid_argument("cannot normalize a zero-energy constellation");
        const double scale = 1.0 / std::sqrt(e);
        std::vector<double> c = coords_;
        for (double& v : c)
            v *= scale;
        return {messages_, channel_uses_, std::move(c)};
    }

    double min_distance_squared() const
    {
        double best = INFINITY;
        for (std::size_t a = 0; a < messages_; ++a)
            for (std::size_t b = a + 1; b < messages_; ++b) {
                double d = 0.0;
                for (std::size_t k = 0; k < dim(); ++k) {
                    const double t = coords_[a * dim() + k] - coords_[b * dim() + k];
                    d += t * t;
                }
                best = std::min(best, d);
            }
        return best;
    }

private:
    std::size_t messages_;
    std::size_t channel_uses_;
    std::vector<double> coords_;
};

/// Every E8 lattice point with squared norm <= max_norm2, sorted by
/// (squared norm, lexicographic coordinates). E8 = D8 U (D8 + 1/2): all
/// coordinates integers or all half-integers, with an even coordinate sum.
inline std::vector<std::array<double, 8>> e8_points(int max_norm2)
{
    // Work in doubled coordinates c = 2x: all c even or all odd, sum(c) = 0
    // mod 4, and |x|^2 = sum(c^2)/4.
    const int budget = 4 * max_norm2;
    const int cmax = static_cast<int>(std::floor(std::sqrt(static_cast<double>(budget))));
    std::vector<std::array<int, 8>> found;
    std::array<int, 8> c{};
    auto recurse = [&](auto&& self, int pos, int used, int sum) -> void {
        if (pos == 8) {
            if (((sum % 4) + 4) % 4 == 0)
                found.push_back(c);
            return;
        }
        const int parity = pos == 0 ? -1 : (c[0] & 1);
        for (int v = -cmax; v <= cmax; ++v) {
            if (parity >= 0 && (v & 1) != parity)
                continue;
            const int cost = used + v * v;
            if (cost > budget)
                continue;
            c[static_cast<std::size_t>(pos)] = v;
            self(self, pos + 1, cost, sum + v);
        }
    };
    recurse(recurse, 0, 0, 0);

    std::vector<std::array<double, 8>> pts;
    pts.reserve(found.size());
    for (const auto& p : found) {
        std::array<double, 8> x{};
        for (std::size_t i = 0; i < 8; ++i)
            x[i] = 0.5 * p[i];
        pts.push_back(x);
    }
    auto norm2 = [](const std::array<double, 8>& x) {
        double s = 0.0;
        for (double v : x)
            s += v * v;
        return s;
    };
    std::sort(pts.begin(), pts.end(), [&](const auto& a, const auto& b) {
        const double na = norm2(a);
        const double nb = norm2(b);
        if (na != nb)
            return na < nb;
        return a < b;
    });
    return pts;
}

/// Default transmit set: the first M points of E8 in (norm, lexicographic)
/// order, centred on their centroid and scaled to unit energy per symbol.
/// For M = 256 this is the origin, the 240 minimal vectors and the first 15
/// vectors of the second shell.
inline Constellation build_constellation(std::size_t messages = 256, std::size_t channel_uses = 4)
{
    if (channel_uses != 4)
        throw std::invalid_argument("E8 construction needs N = 4 channel uses (8 real dimensions)");
    if (messages < 2)
        throw std::invalid_argument("constellation needs at least two points");
    // Shell sizes of E8 grow fast; norm^2 <= 8 already gives 1+240+2160+6720+17520 points.
    int max_norm2 = 2;
    std::vector<std::array<double, 8>> pts;
    for (;; max_norm2 += 2) {
        pts = e8_points(max_norm2);
        if (pts.size() >= messages)
            break;
        if (max_norm2 >= 8)
            throw std::invalid_argument("E8 construction supports at most " +
                                        std::to_string(pts.size()) + " points");
    }
    std::array<double, 8> centroid{};
    for (std::size_t m = 0; m < messages; ++m)
        for (std::size_t i = 0; i < 8; ++i)
            centroid[i] += pts[m][i];
    for (double& v : centroid)
        v /= static_cast<double>(messages);
    std::vector<double> coords;
    coords.reserve(messages * 8);
    for (std::size_t m = 0; m < messages; ++m)
        for (std::size_t i = 0; i < 8; ++i)
            coords.push_back(pts[m][i] - centroid[i]);
    return Constellation(messages, channel_uses, std::move(coords)).normalized();
}

/// Reads one point per line (2N whitespace-separated decimals, `#` starts a
/// comment) and scales the set to unit energy. Points are otherwise kept
/// verbatim.
inline Constellation read_constellation(std::istream& is)
{
    std::vector<double> coords;
    std::size_t width = 0;
    std::size_t rows = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                throw ParseError(lineno, "not a number: '" + tok + "'");
            }
            if (used != tok.size() || !std::isfinite(v))
                throw ParseError(lineno, "not a finite number: '" + tok + "'");
            row.push_back(v);
        }
        if (row.empty())
            continue;
        if (width == 0) {
            if (row.size() % 2 != 0)
                throw ParseError(lineno, "a point needs an even number of real coordinates");
            width = row.size();
        } else if (row.size() != width) {
            throw ParseError(lineno, "expected " + std::to_string(width) + " coordinates, got " +
                                         std::to_string(row.size()));
        }
        for (std::size_t r = 0; r < rows; ++r)
            if (std::equal(row.begin(), row.end(), coords.begin() + static_cast<std::ptrdiff_t>(r * width)))
                throw ParseError(lineno, "duplicate point (same as point " + std::to_string(r) + ")");
        coords.insert(coords.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows < 2)
        throw ParseError(lineno, "constellation file needs at least two points");
    return Constellation(rows, width / 2, std::move(coords)).normalized();
}

inline Constellation load_constellation(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open constellation file '" + path + "'");
    try {
        return read_constellation(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), e.detail(), path);
    }
}

/// Noise variance 1e-8 per complex symbol (-80 dB); SNR is set through es.
struct ChannelConfig {
    double sigma2 = 1e-8;
    double es = 1e-8;

    static ChannelConfig at_snr(double snr_db, double sigma2 = 1e-8);
};

inline double snr_to_es(double snr_db, double sigma2)
{
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("noise variance must be positive");
    return sigma2 * std::pow(10.0, snr_db / 10.0);
}

inline ChannelConfig ChannelConfig::at_snr(double snr_db, double sigma2)
{
    return {sigma2, snr_to_es(snr_db, sigma2)};
}

/// y = sqrt(es) x_m + sqrt(sigma2/2) n, for a given vector n of unit normals.
inline void channel_output(std::size_t m, const Constellation& c, const ChannelConfig& cfg,
                           std::span<const double> unit_noise, std::span<double> y)
{
    if (m >= c.messages())
        throw std::out_of_range("message index " + std::to_string(m) + " out of range");
    const double amp = std::sqrt(cfg.es);
    const double nstd = std::sqrt(cfg.sigma2 / 2.0);
    const auto x = c.point(m);
    for (std::size_t i = 0; i < c.dim(); ++i)
        y[i] = amp * x[i] + nstd * unit_noise[i];
}

/// Sends message m (0-based) over the AWGN channel.
template <class Rng>
std::vector<double> transmit(std::size_t m, const Constellation& c, const ChannelConfig& cfg, Rng& rng)
{
    if (m >= c.messages())
        throw std::out_of_range("message index " + std::to_string(m) + " out of range");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> noise(c.dim());
    for (double& n : noise)
        n = normal(rng);
    std::vector<double> y(c.dim());
    channel_output(m, c, cfg, noise, y);
    return y;
}

/// Index of the closest scaled constellation point; ties go to the smaller
/// index. Returns the 0-based message index.
inline std::size_t ml_detect(std::span<const double> y, const Constellation& c, double es)
{
    const double amp = std::sqrt(es);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t m = 0; m < c.messages(); ++m) {
        const auto x = c.point(m);
        double d = 0.0;
        for (std::size_t i = 0; i < c.dim(); ++i) {
            const double t = y[i] - amp * x[i];
            d += t * t;
        }
        if (d < best_d) {
            best_d = d;
            best = m;
        }
    }
    return best;
}

/// Receiver gain control: scales y by 1/sqrt(es) so the network always sees
/// a unit-energy constellation plus noise of variance 1/(2 SNR) per real
/// dimension, independent of the absolute power level.
inline void receiver_front_end(std::span<const double> y, double es, std::span<double> out)
{
    const double g = 1.0 / std::sqrt(es);
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = g * y[i];
}

}  // namespace fxpnn
