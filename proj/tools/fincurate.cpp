#include "fincurate/config.hpp"
#include "fincurate/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace fincurate;

int main(int argc, char ** argv) {
    CLI::App app{"corpus curation and model evaluation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("-c,--config", config_path, "pipeline config file (JSON)")->required();

    std::size_t workers = 0;
    app.add_option("-j,--workers", workers, "worker count (overrides run.workers)");

    std::string recipe_path;
    std::vector<CLI::App *> subcommands;
    for (const auto & stage : pipeline::stage_names()) {
        CLI::App * sub = app.add_subcommand(stage, "run the " + stage + " stage");
        if (stage == "validate-recipe") {
            sub->add_option("recipe", recipe_path, "training recipe file (JSON)")->required();
        }
        subcommands.push_back(sub);
    }
    CLI::App * run_all = app.add_subcommand("run", "run the corpus stages in order (ingest..pack)");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = config::PipelineConfig::load(config_path);
        if (workers > 0) {
            cfg.run.workers = workers;
        }
        // env override is deliberately limited to client endpoints
        if (const char * endpoint = std::getenv("FINCURATE_CHAT_ENDPOINT")) {
            cfg.clients.chat.endpoint = endpoint;
        }

        auto print_report = [](const pipeline::StageReport & report) {
            std::printf("%-18s in=%zu out=%zu dropped=%zu (%.1f ms)\n", report.stage.c_str(), report.in, report.out,
                        report.dropped, report.wall_ms);
            for (const auto & [reason, count] : report.reasons) {
                std::printf("    %-28s %zu\n", reason.c_str(), count);
            }
            for (const auto & [metric, value] : report.metrics) {
                std::printf("    %-28s %.6g\n", metric.c_str(), value);
            }
        };

        if (run_all->parsed()) {
            for (const char * stage : {"ingest", "cleanse", "dedup", "taxonomy", "split", "qa-gen", "pack"}) {
                print_report(pipeline::run_stage(stage, cfg));
            }
            return 0;
        }
        for (std::size_t i = 0; i < subcommands.size(); ++i) {
            if (subcommands[i]->parsed()) {
                const std::string & stage = pipeline::stage_names()[i];
                auto report = pipeline::run_stage(stage, cfg, recipe_path);
                print_report(report);
                if (stage == "report") {
                    std::ifstream in(cfg.run.output_dir / "report.txt");
                    std::cout << in.rdbuf();
                }
                if (stage == "validate-recipe" && report.dropped > 0) {
                    std::ifstream in(cfg.run.output_dir / "validate-recipe" / "violations.txt");
                    std::cout << in.rdbuf();
                    return 2;
                }
                return 0;
            }
        }
        return 0;
    } catch (const config_error & e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const client_error & e) {
        std::fprintf(stderr, "client error: %s\n", e.what());
        return 3;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    }
}
