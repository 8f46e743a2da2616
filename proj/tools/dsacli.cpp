#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dsa/datagen.hpp"
#include "dsa/pipeline.hpp"

namespace {

// exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure
int guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const dsa::datagen::GenerationExhausted& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const dsa::grid::ModelRejected& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const dsa::ssmtl::TopologyMismatch& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        if (what.find("diverged") != std::string::npos ||
            what.find("non-finite") != std::string::npos) {
            std::cerr << "numerical failure: " << what << "\n";
            return 3;
        }
        std::cerr << "data error: " << what << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic security assessment laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> mode_override;
    std::optional<double> epsilon_override;
    std::optional<std::string> out_override;
    app.add_option("--config", config_path, "pipeline config JSON")->required();
    app.add_option("--seed", seed_override, "override the master seed");
    app.add_option("--mode", mode_override, "database generation mode: tds|boundary")
        ->check(CLI::IsMember({"tds", "boundary"}));
    app.add_option("--epsilon", epsilon_override, "FGSM perturbation magnitude");
    app.add_option("--out", out_override, "output directory");
    std::string trace_dir;
    app.add_option("--trace", trace_dir, "dump nominal-OC simulation traces to this directory");

    auto* generate = app.add_subcommand("generate", "build a labeled database");
    auto* train = app.add_subcommand("train", "train SS-MTL, baseline, covariance");
    auto* assess = app.add_subcommand("assess", "classify operating conditions with confidence");
    auto* attack = app.add_subcommand("attack", "FGSM bad-data evaluation");
    auto* calibrate = app.add_subcommand("calibrate-threshold", "similarity threshold calibration");
    auto* benchmark = app.add_subcommand("benchmark", "TDS vs inference speed");
    auto* reproduce = app.add_subcommand("reproduce", "full end-to-end reproduction run");

    std::string oc_file, gate_grid, assess_out = "predictions.jsonl", artifact_dir;
    std::optional<int> contingency;
    assess->add_option("--oc-file", oc_file, "JSON Lines of operating conditions")->required();
    assess->add_option("--artifacts", artifact_dir, "directory with trained artifacts");
    assess->add_option("--contingency", contingency, "contingency index override");
    assess->add_option("--grid", gate_grid, "grid file of the new topology, for the gate");
    assess->add_option("--predictions", assess_out, "output JSONL path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    return guarded([&]() -> int {
        auto cfg = dsa::pipeline::PipelineConfig::load(config_path);
        if (seed_override) cfg.master_seed = *seed_override;
        if (mode_override) cfg.mode = *mode_override;
        if (epsilon_override) cfg.attack.epsilon = *epsilon_override;
        if (out_override) cfg.output_dir = *out_override;
        cfg.trace_dir = trace_dir;

        if (generate->parsed()) return dsa::pipeline::cmd_generate(cfg, cfg.mode);
        if (train->parsed()) return dsa::pipeline::cmd_train(cfg);
        if (assess->parsed()) {
            const std::string dir = artifact_dir.empty() ? cfg.output_dir : artifact_dir;
            return dsa::pipeline::cmd_assess(cfg, dir, oc_file, contingency, gate_grid,
                                             assess_out);
        }
        if (attack->parsed()) return dsa::pipeline::cmd_attack(cfg);
        if (calibrate->parsed()) return dsa::pipeline::cmd_calibrate(cfg);
        if (benchmark->parsed()) return dsa::pipeline::cmd_benchmark(cfg);
        if (reproduce->parsed()) {
            (void)dsa::pipeline::cmd_reproduce(cfg);
            std::cout << "report written to " << cfg.output_dir << "/report\n";
            return 0;
        }
        return 1;
    });
}
