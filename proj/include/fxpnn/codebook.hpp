// Weight and bias codebooks.
//
// Weights take values in {0} U {+/-2^q : |q| <= K-2}, so every multiplication
// at inference is a shift or a zeroing. Biases live on the fixed-point grid of
// the inference format.
#pragma once

#include "fxpnn/fxp.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace fxpnn {

class PowerOfTwoCodebook {
public:
    explicit PowerOfTwoCodebook(int total_bits) : total_bits_(total_bits)
    {
        if (total_bits < 3)
            throw std::invalid_argument("weight codebook needs K >= 3, got " +
                                        std::to_string(total_bits));
        const int qmax = max_exponent();
        entries_.reserve(static_cast<std::size_t>(4 * total_bits - 5));
        for (int q = qmax; q >= -qmax; --q)
            entries_.push_back(-std::ldexp(1.0, q));
        entries_.push_back(0.0);
        for (int q = -qmax; q <= qmax; ++q)
            entries_.push_back(std::ldexp(1.0, q));
    }

    int total_bits() const { return total_bits_; }
    /// Largest allowed |q|, i.e. K-2.
    int max_exponent() const { return total_bits_ - 2; }
    std::span<const double> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    bool contains(double x) const
    {
        return std::binary_search(entries_.begin(), entries_.end(), x);
    }

    /// Nearest entry; an exact tie goes to the entry of smaller magnitude.
    double quantize(double x) const
    {
        if (!std::isfinite(x))
            throw std::domain_error("cannot quantize a non-finite value");
        const auto hi = std::lower_bound(entries_.begin(), entries_.end(), x);
        if (hi == entries_.begin())
            return *hi;
        if (hi == entries_.end())
            return entries_.back();
        const double upper = *hi;
        const double lower = *(hi - 1);
        const double du = upper - x;
        const double dl = x - lower;
        if (du < dl)
            return upper;
        if (dl < du)
            return lower;
        return std::abs(upper) < std::abs(lower) ? upper : lower;
    }

private:
    int total_bits_;
    std::vector<double> entries_;
};

inline PowerOfTwoCodebook build_weight_codebook(int total_bits)
{
    return PowerOfTwoCodebook(total_bits);
}

inline double quantize_nearest(double x, const PowerOfTwoCodebook& cb)
{
    return cb.quantize(x);
}

/// Quantizer onto the set of values representable in a fixed-point format.
class BiasQuantizer {
public:
    explicit BiasQuantizer(fxp::FixedPointFormat format) : format_(format) {}

    const fxp::FixedPointFormat& format() const { return format_; }

    double quantize(double x) const { return fxp::decode(fxp::encode(x, format_)); }

    bool contains(double x) const
    {
        const double scaled = std::ldexp(x, format_.frac_bits());
        return scaled == std::trunc(scaled) &&
               std::abs(scaled) <= static_cast<double>(format_.max_raw());
    }

private:
    fxp::FixedPointFormat format_;
};

inline double quantize_bias(double x, const BiasQuantizer& bq)
{
    return bq.quantize(x);
}

}  // namespace fxpnn
