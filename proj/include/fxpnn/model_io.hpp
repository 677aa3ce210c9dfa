// Line-oriented model files.
//
//   fxpnn v1
//   arch 8 64 32 256
//   format KI KF                       (quantized models only)
//   flags lc_not_converged             (optional)
//   w <layer> <row> <col> Z | w <layer> <row> <col> <+|-> <q>
//   b <layer> <idx> <raw>
//
// Float models replace the w/b records with `wf <layer> <row> <col> <value>`
// and `bf <layer> <idx> <value>`. Layers, rows and columns are 0-based.
// Every layer except the last carries a bias.
#pragma once

#include "fxpnn/errors.hpp"
#include "fxpnn/nn.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fxpnn {

struct QuantizedModelFile {
    QuantizedMlpModel model;
    bool lc_not_converged = false;
};

using ModelFile = std::variant<MlpModel, QuantizedModelFile>;

namespace detail {

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_header(std::ostream& os, const MlpArchitecture& arch)
{
    os << "fxpnn v1\narch";
    for (int d : arch.dims())
        os << ' ' << d;
    os << '\n';
}

inline MlpArchitecture arch_from_dims(std::vector<int> dims)
{
    std::vector<bool> bias(dims.size() - 1, true);
    bias.back() = false;
    return {std::move(dims), std::move(bias)};
}

}  // namespace detail

inline void write_model(std::ostream& os, const MlpModel& m)
{
    const auto& arch = m.arch();
    detail::write_header(os, arch);
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        for (int r = 0; r < arch.out(l); ++r)
            for (int c = 0; c < arch.in(l); ++c)
                os << "wf " << l << ' ' << r << ' ' << c << ' '
                   << detail::format_double(m.weight(l, r, c)) << '\n';
        if (arch.has_bias(l))
            for (int i = 0; i < arch.out(l); ++i)
                os << "bf " << l << ' ' << i << ' ' << detail::format_double(m.bias(l, i)) << '\n';
    }
}

inline void write_model(std::ostream& os, const QuantizedMlpModel& q, bool lc_not_converged = false)
{
    const auto& arch = q.arch();
    detail::write_header(os, arch);
    os << "format " << q.format().int_bits() << ' ' << q.format().frac_bits() << '\n';
    if (lc_not_converged)
        os << "flags lc_not_converged\n";
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        for (int r = 0; r < arch.out(l); ++r)
            for (int c = 0; c < arch.in(l); ++c) {
                const auto& w = q.weight(l, r, c);
                os << "w " << l << ' ' << r << ' ' << c << ' ';
                if (w.zero)
                    os << "Z\n";
                else
                    os << (w.negative ? '-' : '+') << ' ' << w.exponent << '\n';
            }
        if (arch.has_bias(l))
            for (int i = 0; i < arch.out(l); ++i)
                os << "b " << l << ' ' << i << ' ' << q.bias_raw(l, i) << '\n';
    }
}

inline ModelFile read_model(std::istream& is)
{
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (!line.empty())
                return true;
        }
        return false;
    };

    if (!next() || line != "fxpnn v1")
        throw ParseError(lineno, "expected header 'fxpnn v1'");
    if (!next())
        throw ParseError(lineno, "missing 'arch' line");
    std::vector<int> dims;
    {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag != "arch")
            throw ParseError(lineno, "expected 'arch'");
        int d = 0;
        while (ss >> d)
            dims.push_back(d);
        if (!ss.eof() || dims.size() < 2)
            throw ParseError(lineno, "malformed architecture");
        for (int v : dims)
            if (v < 1)
                throw ParseError(lineno, "layer widths must be positive");
    }
    const MlpArchitecture arch = detail::arch_from_dims(dims);

    std::optional<fxp::FixedPointFormat> format;
    bool not_converged = false;
    std::vector<double> real_params(arch.num_params(), 0.0);
    std::vector<bool> seen(arch.num_params(), false);
    std::vector<WeightCode> codes;
    std::vector<std::int64_t> bias_raw;
    std::vector<std::size_t> code_off;
    std::vector<std::size_t> bias_off;
    bool is_float = false;
    bool is_quant = false;

    auto check_index = [&](std::size_t l, long r, long c) {
        if (l >= arch.num_layers() || r < 0 || r >= arch.out(l) || c < 0 || c >= arch.in(l))
            throw ParseError(lineno, "weight index out of range");
    };
    auto check_bias = [&](std::size_t l, long i) {
        if (l >= arch.num_layers() || !arch.has_bias(l) || i < 0 || i >= arch.out(l))
            throw ParseError(lineno, "bias index out of range");
    };
    auto mark = [&](std::size_t idx) {
        if (seen[idx])
            throw ParseError(lineno, "duplicate record");
        seen[idx] = true;
    };

    while (next()) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "format") {
            int ki = -1;
            int kf = -1;
            if (!(ss >> ki >> kf) || format)
                throw ParseError(lineno, "malformed or repeated 'format' line");
            try {
                format.emplace(ki, kf);
            } catch (const std::invalid_argument& e) {
                throw ParseError(lineno, e.what());
            }
            std::size_t nw = 0;
            std::size_t nb = 0;
            for (std::size_t l = 0; l < arch.num_layers(); ++l) {
                code_off.push_back(nw);
                bias_off.push_back(nb);
                nw += static_cast<std::size_t>(arch.in(l)) * arch.out(l);
                nb += arch.has_bias(l) ? static_cast<std::size_t>(arch.out(l)) : 0;
            }
            codes.resize(nw);
            bias_raw.resize(nb);
        } else if (tag == "flags") {
            std::string flag;
            while (ss >> flag) {
                if (flag != "lc_not_converged")
                    throw ParseError(lineno, "unknown flag '" + flag + "'");
                not_converged = true;
            }
        } else if (tag == "wf" || tag == "bf") {
            if (format)
                throw ParseError(lineno, "float record in a quantized model");
            is_float = true;
            std::size_t l = 0;
            long r = 0;
            long c = 0;
            double v = 0.0;
            if (tag == "wf") {
                if (!(ss >> l >> r >> c >> v))
                    throw ParseError(lineno, "malformed 'wf' record");
                check_index(l, r, c);
                const std::size_t idx = arch.weight_offset(l) + static_cast<std::size_t>(r) * arch.in(l) + c;
                mark(idx);
                real_params[idx] = v;
            } else {
                if (!(ss >> l >> r >> v))
                    throw ParseError(lineno, "malformed 'bf' record");
                check_bias(l, r);
                const std::size_t idx = arch.bias_offset(l) + static_cast<std::size_t>(r);
                mark(idx);
                real_params[idx] = v;
            }
        } else if (tag == "w" || tag == "b") {
            if (!format)
                throw ParseError(lineno, "quantized record before 'format' line");
            is_quant = true;
            std::size_t l = 0;
            long r = 0;
            long c = 0;
            if (tag == "w") {
                std::string sign;
                if (!(ss >> l >> r >> c >> sign))
                    throw ParseError(lineno, "malformed 'w' record");
                check_index(l, r, c);
                mark(arch.weight_offset(l) + static_cast<std::size_t>(r) * arch.in(l) + c);
                WeightCode code;
                if (sign != "Z") {
                    int q = 0;
                    if ((sign != "+" && sign != "-") || !(ss >> q))
                        throw ParseError(lineno, "weight code must be 'Z' or '<+|-> <q>'");
                    if (std::abs(q) > format->total_bits() - 2)
                        throw ParseError(lineno, "weight exponent outside the codebook");
                    code = {false, sign == "-", q};
                }
                codes[code_off[l] + static_cast<std::size_t>(r) * arch.in(l) + c] = code;
            } else {
                std::int64_t raw = 0;
                if (!(ss >> l >> r >> raw))
                    throw ParseError(lineno, "malformed 'b' record");
                check_bias(l, r);
                mark(arch.bias_offset(l) + static_cast<std::size_t>(r));
                if (raw > format->max_raw() || raw < -format->max_raw())
                    throw ParseError(lineno, "bias raw value outside format range");
                bias_raw[bias_off[l] + static_cast<std::size_t>(r)] = raw;
            }
        } else {
            throw ParseError(lineno, "unknown record '" + tag + "'");
        }
        std::string rest;
        if (ss >> rest)
            throw ParseError(lineno, "trailing data");
    }

    if (is_float && is_quant)
        throw ParseError(lineno, "mixed float and quantized records");
    for (bool s : seen)
        if (!s)
            throw ParseError(lineno, "model file is missing parameter records");
    if (format)
        return QuantizedModelFile{QuantizedMlpModel(arch, *format, std::move(codes), std::move(bias_raw)),
                                  not_converged};
    return MlpModel(arch, std::move(real_params));
}

inline ModelFile load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open model file '" + path + "'");
    try {
        return read_model(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), e.detail(), path);
    }
}

}  // namespace fxpnn
