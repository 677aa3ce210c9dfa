// Signed fixed-point arithmetic with K_I integer bits, K_F fractional bits
// and one sign bit. Values are stored as a raw integer with an implicit
// scale of 2^-K_F; the raw range is symmetric, +/-(2^(K_I+K_F) - 1).
#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fxpnn::fxp {

class FixedPointFormat {
public:
    FixedPointFormat(int int_bits, int frac_bits)
        : int_bits_(int_bits), frac_bits_(frac_bits)
    {
        if (int_bits < 0 || frac_bits < 0)
            throw std::invalid_argument("fixed-point bit counts must be non-negative");
        if (int_bits + frac_bits < 1)
            throw std::invalid_argument("fixed-point width K must be at least 2");
        if (int_bits + frac_bits > 31)
            throw std::invalid_argument("fixed-point width K must be at most 32");
    }

    int int_bits() const { return int_bits_; }
    int frac_bits() const { return frac_bits_; }
    /// K = K_I + K_F + 1 (sign bit included).
    int total_bits() const { return int_bits_ + frac_bits_ + 1; }

    std::int64_t max_raw() const { return (std::int64_t{1} << (int_bits_ + frac_bits_)) - 1; }
    double step() const { return std::ldexp(1.0, -frac_bits_); }
    double max_value() const { return static_cast<double>(max_raw()) * step(); }

    bool operator==(const FixedPointFormat&) const = default;

    std::string to_string() const
    {
        return "(" + std::to_string(int_bits_) + "," + std::to_string(frac_bits_) + ")";
    }

private:
    int int_bits_;
    int frac_bits_;
};

class FxpValue {
public:
    FxpValue(std::int64_t raw, FixedPointFormat format) : raw_(raw), format_(format)
    {
        if (raw > format.max_raw() || raw < -format.max_raw())
            throw std::out_of_range("raw value " + std::to_string(raw) + " outside format " +
                                    format.to_string());
    }

    std::int64_t raw() const { return raw_; }
    const FixedPointFormat& format() const { return format_; }

    bool operator==(const FxpValue&) const = default;

private:
    std::int64_t raw_;
    FixedPointFormat format_;
};

namespace detail {

inline std::int64_t clamp_raw(std::int64_t raw, std::int64_t max_raw, bool& saturated)
{
    if (raw > max_raw) {
        saturated = true;
        return max_raw;
    }
    if (raw < -max_raw) {
        saturated = true;
        return -max_raw;
    }
    return raw;
}

// Arithmetic shift by q on a raw integer. Right shifts round half away from
// zero on the discarded bits. No range check.
inline std::int64_t shift_raw(std::int64_t raw, int q)
{
    if (q >= 0)
        return raw * (std::int64_t{1} << q);
    const int s = -q;
    const std::int64_t mag = raw < 0 ? -raw : raw;
    const std::int64_t shifted = (mag + (std::int64_t{1} << (s - 1))) >> s;
    return raw < 0 ? -shifted : shifted;
}

}  // namespace detail

/// Nearest representable raw value (round half away from zero), saturated.
inline std::int64_t encode_raw(double x, const FixedPointFormat& fmt, bool& saturated)
{
    if (!std::isfinite(x))
        throw std::domain_error("cannot encode a non-finite value");
    const double scaled = std::ldexp(x, fmt.frac_bits());
    const double limit = static_cast<double>(fmt.max_raw());
    if (scaled > limit) {
        saturated = scaled >= limit + 0.5;
        return fmt.max_raw();
    }
    if (scaled < -limit) {
        saturated = scaled <= -limit - 0.5;
        return -fmt.max_raw();
    }
    return static_cast<std::int64_t>(std::round(scaled));
}

inline FxpValue encode(double x, const FixedPointFormat& fmt)
{
    bool saturated = false;
    return {encode_raw(x, fmt, saturated), fmt};
}

inline double decode(const FxpValue& v)
{
    return std::ldexp(static_cast<double>(v.raw()), -v.format().frac_bits());
}

inline FxpValue relu(const FxpValue& a)
{
    return a.raw() > 0 ? a : FxpValue{0, a.format()};
}

/// Additions either saturate after every operation (a K-bit adder chain) or
/// accumulate in a wide register that is saturated once when read out.
enum class AccumulateMode { saturate_each, wide };

// Per-worker arithmetic state: counts additions and saturation events.
// Never shared between threads.
class Context {
public:
    explicit Context(AccumulateMode mode = AccumulateMode::saturate_each) : mode_(mode) {}

    AccumulateMode mode() const { return mode_; }
    std::uint64_t additions() const { return additions_; }
    std::uint64_t saturations() const { return saturations_; }

    void reset()
    {
        additions_ = 0;
        saturations_ = 0;
    }

    void merge(const Context& other)
    {
        additions_ += other.additions_;
        saturations_ += other.saturations_;
    }

    FxpValue add_sat(const FxpValue& a, const FxpValue& b)
    {
        if (!(a.format() == b.format()))
            throw std::invalid_argument("add_sat: format mismatch " + a.format().to_string() +
                                        " vs " + b.format().to_string());
        ++additions_;
        return {saturate(a.raw() + b.raw(), a.format().max_raw()), a.format()};
    }

    FxpValue mul_pow2(const FxpValue& a, int q)
    {
        const int k = a.format().total_bits();
        if (q >= k - 1 || q <= -(k - 1))
            throw std::invalid_argument("mul_pow2: |q| = " + std::to_string(q < 0 ? -q : q) +
                                        " must be below K-1 = " + std::to_string(k - 1));
        return {mul_pow2_raw(a.raw(), q, a.format().max_raw()), a.format()};
    }

    // Raw-level kernels used by the inference hot path. Callers guarantee
    // operands are in range and |q| < K-1. In wide mode add_raw leaves the
    // sum unclamped; the caller saturates when the accumulator is read out.

    std::int64_t add_raw(std::int64_t a, std::int64_t b, std::int64_t max_raw)
    {
        ++additions_;
        if (mode_ == AccumulateMode::wide)
            return a + b;
        return saturate(a + b, max_raw);
    }

    std::int64_t mul_pow2_raw(std::int64_t a, int q, std::int64_t max_raw)
    {
        return saturate(detail::shift_raw(a, q), max_raw);
    }

    void count_saturation() { ++saturations_; }

    /// Clamps to the symmetric range, counting an event when clamping occurs.
    std::int64_t saturate(std::int64_t raw, std::int64_t max_raw)
    {
        bool hit = false;
        raw = detail::clamp_raw(raw, max_raw, hit);
        saturations_ += hit ? 1 : 0;
        return raw;
    }

private:
    AccumulateMode mode_;
    std::uint64_t additions_ = 0;
    std::uint64_t saturations_ = 0;
};

/// Context-free saturating addition.
inline FxpValue add_sat(const FxpValue& a, const FxpValue& b)
{
    Context ctx;
    return ctx.add_sat(a, b);
}

/// Context-free multiplication by 2^q.
inline FxpValue mul_pow2(const FxpValue& a, int q)
{
    Context ctx;
    return ctx.mul_pow2(a, q);
}

}  // namespace fxpnn::fxp
