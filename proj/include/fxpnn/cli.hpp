// Command-line front end: train, quantize, eval, complexity.
//
// Options come from the command line, then from a flat key=value file given
// with --config (keys are option names without the leading dashes), then
// from built-in defaults.
#pragma once

#include "fxpnn/codebook.hpp"
#include "fxpnn/comm.hpp"
#include "fxpnn/eval.hpp"
#include "fxpnn/lc.hpp"
#include "fxpnn/model_io.hpp"
#include "fxpnn/nn.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace fxpnn::cli {

enum ExitCode : int {
    ok = 0,
    runtime_error = 1,
    usage_error = 2,
    diverged = 3,
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::string constellation;
    std::string model;
    std::string out;

    // train / quantize
    int init_steps = 20000;
    double step_size = 1e-3;
    int batch_size = 256;
    double train_snr_db = 10.0;

    // quantize
    std::string method = "lc";
    int ki = 5;
    int kf = 8;
    double mu0 = 1e-3;
    double mu_factor = 1.4;
    int lc_iters = 40;
    int lc_steps = 500;
    double lr_decay = 0.9;
    double stop_tol = 0.0;
    std::string trace;

    // eval
    std::string receiver = "ml";
    std::string tag;
    double snr_start = -2.0;
    double snr_stop = 11.0;
    double snr_step = 1.0;
    std::uint64_t blocks = 100000;
    bool wide_accumulator = false;

    // complexity
    int k = 14;
};

namespace detail {

inline std::map<std::string, std::string> read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open config file '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline Constellation constellation_for(const RunConfig& cfg)
{
    return cfg.constellation.empty() ? build_constellation() : load_constellation(cfg.constellation);
}

inline MlpArchitecture receiver_arch(const Constellation& c)
{
    return MlpArchitecture::receiver(static_cast<int>(c.channel_uses()), static_cast<int>(c.messages()));
}

inline void check_arch(const MlpArchitecture& arch, const Constellation& c)
{
    if (static_cast<std::size_t>(arch.input_dim()) != c.dim() ||
        static_cast<std::size_t>(arch.output_dim()) != c.messages())
        throw UsageError("model architecture does not match the constellation");
}

class OutputSink {
public:
    OutputSink(const std::string& path, std::ostream& fallback) : os_(&fallback)
    {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_)
                throw std::runtime_error("cannot open output file '" + path + "'");
            os_ = &file_;
        }
    }
    std::ostream& stream() { return *os_; }

private:
    std::ofstream file_;
    std::ostream* os_;
};

inline void write_file(const std::string& path, const std::string& contents)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open output file '" + path + "'");
    f << contents;
    if (!f)
        throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace detail

inline int cmd_train(const RunConfig& cfg, std::ostream& out)
{
    if (cfg.out.empty())
        throw UsageError("train: --out is required");
    const Constellation c = detail::constellation_for(cfg);
    const MlpArchitecture arch = detail::receiver_arch(c);
    MlpModel model = MlpModel::glorot(arch, stream_seed(cfg.seed, {0x696e6974ULL}));
    ReceiverObjective objective(arch, c, cfg.train_snr_db, cfg.batch_size, cfg.seed);
    Adam opt(arch.num_params(), AdamConfig{cfg.step_size});
    const double loss = train_unconstrained(model.params(), objective, cfg.init_steps, opt);
    std::ostringstream text;
    write_model(text, model);
    detail::write_file(cfg.out, text.str());
    out << "final training loss: " << format_number(loss) << '\n';
    return ok;
}

inline int cmd_quantize(const RunConfig& cfg, std::ostream& out)
{
    if (cfg.out.empty())
        throw UsageError("quantize: --out is required");
    if (cfg.model.empty())
        throw UsageError("quantize: --model is required");
    if (cfg.method != "lc" && cfg.method != "dc")
        throw UsageError("quantize: --method must be lc or dc");
    if (cfg.ki < 0 || cfg.kf < 0 || cfg.ki + cfg.kf + 1 < 3)
        throw UsageError("quantize: need ki, kf >= 0 and ki + kf + 1 >= 3");

    const ModelFile file = load_model(cfg.model);
    const MlpModel input = std::holds_alternative<MlpModel>(file)
                               ? std::get<MlpModel>(file)
                               : std::get<QuantizedModelFile>(file).model.dequantize();
    const fxp::FixedPointFormat format(cfg.ki, cfg.kf);
    const PowerOfTwoCodebook cb(format.total_bits());
    const BiasQuantizer bq(format);

    std::ostringstream text;
    out << "format " << cfg.ki << ' ' << cfg.kf << '\n';
    out << "codebook size: " << cb.size() << '\n';
    if (cfg.method == "dc") {
        write_model(text, dc_quantize(input, cb, bq));
    } else {
        const Constellation c = detail::constellation_for(cfg);
        detail::check_arch(input.arch(), c);
        LcSchedule sched;
        sched.mu0 = cfg.mu0;
        sched.mu_factor = cfg.mu_factor;
        sched.max_iters = cfg.lc_iters;
        sched.learn_steps_per_iter = cfg.lc_steps;
        sched.init_steps = 0;  // the input model is already the unconstrained optimum
        sched.adam.step_size = cfg.step_size;
        sched.lr_decay = cfg.lr_decay;
        sched.stop_tol = cfg.stop_tol;
        sched.batch_size = cfg.batch_size;
        sched.train_snr_db = cfg.train_snr_db;
        sched.seed = cfg.seed;
        try {
            sched.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        ReceiverObjective objective(input.arch(), c, sched.train_snr_db, sched.batch_size, sched.seed);
        const LcResult r = lc_train(input, sched, objective, cb, bq);
        write_model(text, r.model, !r.converged);
        if (!cfg.trace.empty()) {
            std::ostringstream t;
            write_trace_csv(t, r.trace);
            detail::write_file(cfg.trace, t.str());
        }
        out << "lc iterations: " << r.trace.size() << '\n';
        if (!r.trace.empty()) {
            out << "initial gap: " << format_number(r.trace.front().psi_gap) << '\n';
            out << "final gap: " << format_number(r.trace.back().psi_gap) << '\n';
        }
        out << "tolerance: " << format_number(sched.tolerance(input.params().size())) << '\n';
        out << "converged: " << (r.converged ? "yes" : "no (lc_not_converged flag set)") << '\n';
    }
    detail::write_file(cfg.out, text.str());
    return ok;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    const Constellation c = detail::constellation_for(cfg);
    BlerConfig bc;
    try {
        bc.snr_db = snr_grid(cfg.snr_start, cfg.snr_stop, cfg.snr_step);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (cfg.blocks < 1)
        throw UsageError("eval: --blocks must be at least 1");
    bc.blocks = cfg.blocks;
    bc.seed = cfg.seed;
    bc.workers = std::max(1u, cfg.workers);
    const std::string tag = cfg.tag.empty() ? cfg.receiver : cfg.tag;

    BlerReport report;
    if (cfg.receiver == "ml") {
        report = estimate_bler(MlReceiver(c), c, bc);
    } else if (cfg.receiver == "nn-float" || cfg.receiver == "nn-fixed") {
        if (cfg.model.empty())
            throw UsageError("eval: --model is required for " + cfg.receiver);
        const ModelFile file = load_model(cfg.model);
        if (cfg.receiver == "nn-float") {
            const MlpModel m = std::holds_alternative<MlpModel>(file)
                                   ? std::get<MlpModel>(file)
                                   : std::get<QuantizedModelFile>(file).model.dequantize();
            detail::check_arch(m.arch(), c);
            report = estimate_bler(FloatNnReceiver(m, tag), c, bc);
        } else {
            if (!std::holds_alternative<QuantizedModelFile>(file))
                throw UsageError("eval: fixed-point evaluation needs a quantized model");
            const auto& q = std::get<QuantizedModelFile>(file).model;
            detail::check_arch(q.arch(), c);
            if (cfg.wide_accumulator)
                bc.accumulate = fxp::AccumulateMode::wide;
            report = estimate_bler(FixedNnReceiver(q, tag), c, bc);
            err << "saturation events: " << report.saturations << '\n';
        }
    } else {
        throw UsageError("eval: unknown receiver '" + cfg.receiver + "' (ml, nn-float, nn-fixed)");
    }
    detail::OutputSink sink(cfg.out, out);
    write_bler_csv(sink.stream(), report.points);
    return ok;
}

inline int cmd_complexity(const RunConfig& cfg, std::ostream& out)
{
    if (cfg.k < 3)
        throw UsageError("complexity: --k must be at least 3");
    const auto arch = MlpArchitecture::receiver();
    const std::vector<ComplexityReport> rows = {
        count_additions(ReceiverKind::ml, arch, 256, 4, cfg.k),
        count_additions(ReceiverKind::nn, arch, 256, 4, cfg.k),
    };
    detail::OutputSink sink(cfg.out, out);
    write_complexity_csv(sink.stream(), rows);
    return ok;
}

/// Parses argv and runs one subcommand. Never throws; returns an ExitCode.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr)
{
    RunConfig cfg;
    CLI::App app{"Quantized neural-network receiver: training, fixed-point inference and BLER evaluation",
                 "fxpnn"};
    app.require_subcommand(1);
    std::string config_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", cfg.seed, "Master random seed");
        sub->add_option("--config", config_path, "Flat key=value file with option defaults");
    };
    auto add_channel = [&](CLI::App* sub) {
        sub->add_option("--constellation", cfg.constellation, "Constellation file (default: E8 construction)");
    };
    auto add_training = [&](CLI::App* sub) {
        sub->add_option("--lr", cfg.step_size, "Adam step size");
        sub->add_option("--batch", cfg.batch_size, "Minibatch size");
        sub->add_option("--train-snr", cfg.train_snr_db, "Training SNR in dB");
    };

    auto* train = app.add_subcommand("train", "Unconstrained training of a float receiver");
    add_common(train);
    add_channel(train);
    add_training(train);
    train->add_option("--steps", cfg.init_steps, "Adam steps");
    train->add_option("--out", cfg.out, "Output model file");

    auto* quantize = app.add_subcommand("quantize", "Quantize a model with LC or DC");
    add_common(quantize);
    add_channel(quantize);
    add_training(quantize);
    quantize->add_option("--model", cfg.model, "Input model file");
    quantize->add_option("--out", cfg.out, "Output quantized model file");
    quantize->add_option("--method", cfg.method, "lc or dc");
    quantize->add_option("--ki", cfg.ki, "Integer bits K_I");
    quantize->add_option("--kf", cfg.kf, "Fractional bits K_F");
    quantize->add_option("--mu0", cfg.mu0, "Initial LC penalty mu");
    quantize->add_option("--mu-factor", cfg.mu_factor, "Multiplicative mu factor (> 1)");
    quantize->add_option("--lc-iters", cfg.lc_iters, "Maximum LC iterations");
    quantize->add_option("--lc-steps", cfg.lc_steps, "Adam steps per learning step");
    quantize->add_option("--lr-decay", cfg.lr_decay, "Per-iteration decay of the learning-step step size");
    quantize->add_option("--stop-tol", cfg.stop_tol, "Stop when |psi - psi_hat| is below this (0: 1e-3 sqrt(P))");
    quantize->add_option("--trace", cfg.trace, "Write the LC trace CSV here");

    auto* eval = app.add_subcommand("eval", "Monte-Carlo BLER over an SNR grid");
    add_common(eval);
    add_channel(eval);
    eval->add_option("--receiver", cfg.receiver, "ml, nn-float or nn-fixed");
    eval->add_option("--model", cfg.model, "Model file for the NN receivers");
    eval->add_option("--tag", cfg.tag, "Receiver label in the CSV (default: receiver name)");
    eval->add_option("--snr-start", cfg.snr_start, "First SNR in dB");
    eval->add_option("--snr-stop", cfg.snr_stop, "Last SNR in dB");
    eval->add_option("--snr-step", cfg.snr_step, "SNR step in dB");
    eval->add_option("--blocks", cfg.blocks, "Blocks per SNR point");
    eval->add_option("--workers", cfg.workers, "Worker threads (results do not depend on this)");
    eval->add_option("--out", cfg.out, "Output CSV (default: standard output)");
    eval->add_flag("--wide-accumulator", cfg.wide_accumulator, "Fixed point: accumulate each dot product wide, saturate once");

    auto* complexity = app.add_subcommand("complexity", "Addition counts of the ML and NN receivers");
    complexity->add_option("--k", cfg.k, "Total fixed-point width K");
    complexity->add_option("--out", cfg.out, "Output CSV (default: standard output)");

    // Splice config-file values in as ordinary arguments, skipping any
    // option the user gave explicitly.
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        auto cfg_it = std::find(args.begin(), args.end(), "--config");
        if (cfg_it != args.end() && cfg_it + 1 != args.end() && !args.empty()) {
            CLI::App* sub = app.get_subcommand_ptr(args.front()).get();
            for (const auto& [key, value] : detail::read_config_file(*(cfg_it + 1))) {
                const std::string flag = "--" + key;
                if (std::find(args.begin(), args.end(), flag) != args.end())
                    continue;
                const CLI::Option* opt = sub->get_option_no_throw(flag);
                if (opt == nullptr)
                    throw UsageError("config file: unknown key '" + key + "' for " + args.front());
                args.push_back(flag);
                args.push_back(value);
            }
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return usage_error;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    }

    try {
        if (*train)
            return cmd_train(cfg, out);
        if (*quantize)
            return cmd_quantize(cfg, out);
        if (*eval)
            return cmd_eval(cfg, out, err);
        return cmd_complexity(cfg, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const TrainingDiverged& e) {
        err << "error: training diverged: " << e.what() << '\n';
        return diverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return runtime_error;
    }
}

}  // namespace fxpnn::cli
