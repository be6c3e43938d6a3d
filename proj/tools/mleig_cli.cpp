// Batch front-end: adaptive MLMC / NMC estimation of expected information gain.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "mleig/cli.hpp"
#include "mleig/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kNonConvergence = 3, kIoError = 4 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Expected information gain estimation by multilevel Monte Carlo"};
    std::string config_path;
    std::string mode = "estimate";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    unsigned threads = 0;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--mode", mode, "estimate or rate-study")
        ->check(CLI::IsMember({"estimate", "rate-study"}));
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--output-dir", output_dir, "override the configured output directory");
    app.add_option("--threads", threads, "worker threads (0 = hardware concurrency)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot read " << config_path << '\n';
        return kIoError;
    }
    std::stringstream buf;
    buf << in.rdbuf();

    try {
        auto config = mleig::cli::parse_config(buf.str());
        if (seed) config.seed = *seed;
        if (output_dir) config.output_dir = *output_dir;

        if (mode == "rate-study") {
            const auto res = mleig::cli::run_rate_study(config, threads);
            std::cout << "alpha_hat " << res.alpha_hat << "  beta_hat " << res.beta_hat << '\n';
        } else {
            for (const auto& row : mleig::cli::run_estimate(config, threads))
                std::cout << "eps " << row.eps << "  estimate " << row.estimate << "  L " << row.L << "  cost "
                          << row.total_cost << '\n';
        }
    } catch (const mleig::cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const mleig::InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const mleig::NonConvergence& e) {
        std::cerr << "non-convergence: " << e.what() << '\n';
        return kNonConvergence;
    } catch (const mleig::cli::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIoError;
    }
    return kOk;
}
