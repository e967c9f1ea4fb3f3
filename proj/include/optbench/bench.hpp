#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "optbench/data.hpp"
#include "optbench/nn.hpp"
#include "optbench/optimizers.hpp"
#include "optbench/tensor.hpp"

namespace optbench::bench {

enum class Task { Mnist, Cifar, Cartpole, Flappy };

std::string task_name(Task task);
std::string optimizer_name(const opt::OptimizerKind& kind); // sgd | cg | lbfgs | lm
std::string beta_rule_name(opt::BetaRule rule);

struct ExperimentConfig {
    Task task = Task::Mnist;
    opt::OptimizerKind optimizer = opt::OptimizerKind::sgd();
    double lr = 0.001;
    Index batch_size = 64;
    Index iterations = 0; // classification: optimizer steps; 0 derives from epochs
    Index epochs = 1;
    Index episodes = 50; // reinforcement learning
    Index subset_n = 0;  // 0 = full dataset
    std::uint64_t seed = 42;
    std::string mnist_images = "data/mnist/train-images-idx3-ubyte";
    std::string mnist_labels = "data/mnist/train-labels-idx1-ubyte";
    std::string cifar_file = "data/cifar10/data_batch_1.bin";
    std::string out_dir = "runs/latest";
    double gamma = 0.99;
    Index replay_capacity = 10000;
    Index warmup = 500;
    double eps_start = 1.0;
    double eps_end = 0.05;
};

/// Per-(task, optimizer) hyperparameter presets; every field can be
/// overridden by a config line.
ExperimentConfig default_config(Task task, opt::OptimizerKind::Tag optimizer);

/// Line-oriented `key = value` with # comments. task and optimizer are
/// required; the matching presets fill everything else. Unknown keys,
/// unparsable values, and empty required values raise ConfigError carrying
/// the 1-based line number. overrides are extra `key=value` pairs applied
/// after the file (line number 0 in errors).
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {});

/// The task's network preset: classification heads end in Dense(10), the
/// control tasks in Dense(2).
nn::NetworkSpec task_network(Task task);

struct MetricsRecord {
    Index iter = 0;
    double loss_before = std::numeric_limits<double>::quiet_NaN();
    double loss_after = std::numeric_limits<double>::quiet_NaN();
    double wall_time_ms = 0.0;
    double lambda = std::numeric_limits<double>::quiet_NaN(); // blank unless LM
    double alpha = std::numeric_limits<double>::quiet_NaN();  // blank unless LBFGS
    int accepted = -1;                                        // -1 blank, else 0/1
    double episode_return = std::numeric_limits<double>::quiet_NaN(); // RL only
    double mean_q = std::numeric_limits<double>::quiet_NaN();         // RL only
    bool failure = false; // marker row closing an aborted run
};

/// Fixed, versioned schema. Loss columns print "nan" only on failure
/// marker rows; inapplicable columns are blank.
std::string csv_header();
std::string csv_row(const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

struct RunResult {
    std::vector<MetricsRecord> records;
    nn::NetworkState final_model;
    ExperimentConfig config;
    bool failed = false;
    std::string failure_reason;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    // Classification: softmax cross-entropy of the final model over the
    // training subset. A loss-scale-free yardstick across optimizers (LM
    // trains on one-hot MSE).
    double final_ce = std::numeric_limits<double>::quiet_NaN();
};

/// Run one experiment and write metrics.csv (flushed per row), run.json,
/// curves.svg and checkpoint.bin into config.out_dir. Loss columns are a
/// pure function of (config, seed); timing columns are measurement only.
/// A non-finite loss aborts the run with a failure marker row; the result
/// then carries failed = true instead of throwing.
RunResult run_experiment(const ExperimentConfig& config);

struct ReportRow {
    std::string optimizer;
    Index runs = 0;
    Index iterations = 0; // pooled row count
    double mean_wall_time_ms = 0.0;
    double mean_final_loss = std::numeric_limits<double>::quiet_NaN();
};

struct Report {
    std::vector<ReportRow> rows; // sorted by optimizer name
};

/// Aggregate finished runs: per optimizer, the pooled mean per-iteration
/// wall time and mean final loss. Writes report.csv and report.svg into
/// out_dir (deterministic bytes for identical inputs). A run directory
/// without metrics.csv or run.json raises ReportError naming it.
Report emit_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

/// NetworkState serialization: header, spec string, then the raw flat
/// parameter vector (64-bit little-endian).
void write_checkpoint(const std::string& path, const nn::NetworkState& state);
nn::NetworkState read_checkpoint(const std::string& path);

std::string spec_to_string(const nn::NetworkSpec& spec);
nn::NetworkSpec spec_from_string(const std::string& text);

} // namespace optbench::bench
