#include "levyspec/errors.hpp"
#include "levyspec/harness.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"levyspec: fractional order of a Levy process by spectral cut-off"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;

    for (const char* mode : {"simulate", "estimate-p", "calibrate-q", "mc-study", "calibrate-cv"}) {
        auto* sub = app.add_subcommand(mode);
        sub->add_option("--config", config_path, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "override the master seed");
        sub->add_option("--threads", threads, "worker threads");
    }
    CLI11_PARSE(app, argc, argv);

    const std::string mode = app.get_subcommands().front()->get_name();
    try {
        nlohmann::json doc;
        {
            std::ifstream in(config_path);
            try {
                in >> doc;
            } catch (const nlohmann::json::exception& e) {
                std::cerr << "levyspec: config is not valid JSON: " << e.what() << "\n";
                return 2;
            }
        }
        if (doc.is_object()) {
            doc["mode"] = mode; // the subcommand decides the mode
            if (seed) doc["seed"] = *seed;
            if (threads) doc["threads"] = *threads;
        }
        const levyspec::ExperimentConfig cfg = levyspec::parse_config(doc);
        const int status = levyspec::run(cfg, out_dir);
        if (status != 0) std::cerr << "levyspec: run failed, see " << out_dir << "/errors.json\n";
        return status;
    } catch (const levyspec::LevyError& e) {
        // Errors raised before run() (config parsing) still leave errors.json.
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        std::ofstream(std::filesystem::path(out_dir) / "errors.json")
            << nlohmann::json{{"mode", mode}, {"code", to_string(e.code())}, {"message", e.what()}}.dump(2) << "\n";
        std::cerr << "levyspec: " << to_string(e.code()) << ": " << e.what() << "\n";
        return e.code() == levyspec::ErrorCode::InvalidConfig ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "levyspec: " << e.what() << "\n";
        return 1;
    }
}
