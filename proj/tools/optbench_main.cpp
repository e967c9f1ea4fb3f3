#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optbench/bench.hpp"
#include "optbench/errors.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw optbench::ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"benchmark of first- and second-order optimizers on small networks"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one experiment described by a config file");
    std::string config_path;
    std::vector<std::string> overrides;
    std::string run_out;
    run->add_option("config", config_path, "`key = value` config file")->required();
    run->add_option("--override", overrides, "extra key=value pair applied after the file");
    run->add_option("--out", run_out, "output directory (overrides the config's out_dir)");

    auto* report = app.add_subcommand("report", "aggregate finished run directories");
    std::vector<std::string> run_dirs;
    std::string report_out = "report";
    report->add_option("dirs", run_dirs, "run directories holding metrics.csv and run.json")
        ->required();
    report->add_option("--out", report_out, "where report.csv and report.svg go");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // --help exits cleanly, anything else is a usage error
    }

    try {
        if (run->parsed()) {
            optbench::bench::ExperimentConfig cfg =
                optbench::bench::parse_config(read_file(config_path), overrides);
            if (!run_out.empty()) cfg.out_dir = run_out;
            std::printf("task=%s optimizer=%s lr=%g bs=%lld seed=%llu -> %s\n",
                        optbench::bench::task_name(cfg.task).c_str(),
                        optbench::bench::optimizer_name(cfg.optimizer).c_str(), cfg.lr,
                        static_cast<long long>(cfg.batch_size),
                        static_cast<unsigned long long>(cfg.seed), cfg.out_dir.c_str());
            optbench::bench::RunResult res = optbench::bench::run_experiment(cfg);
            std::printf("%zu records, final loss %.12g\n", res.records.size(), res.final_loss);
            if (res.failed) {
                std::fprintf(stderr, "run failed: %s\n", res.failure_reason.c_str());
                return 2;
            }
        } else if (report->parsed()) {
            optbench::bench::Report rep = optbench::bench::emit_report(run_dirs, report_out);
            std::printf("optimizer  runs  iterations  mean_wall_ms  mean_final_loss\n");
            for (const auto& row : rep.rows)
                std::printf("%-9s %5lld %11lld %13.3f %16.6g\n", row.optimizer.c_str(),
                            static_cast<long long>(row.runs),
                            static_cast<long long>(row.iterations), row.mean_wall_time_ms,
                            row.mean_final_loss);
            std::printf("wrote %s/report.csv and %s/report.svg\n", report_out.c_str(),
                        report_out.c_str());
        }
    } catch (const optbench::ConfigError& e) {
        if (e.line > 0)
            std::fprintf(stderr, "config error (line %d): %s\n", e.line, e.what());
        else
            std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
