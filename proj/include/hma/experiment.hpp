#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hma/config.hpp"
#include "hma/datasets.hpp"
#include "hma/model.hpp"

namespace hma {

struct MetricsRecord {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string ablation;
    std::size_t epoch = 0;
    std::string split;
    double accuracy = 0.0;
    double loss = 0.0;
    double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader = "run_id,seed,ablation,epoch,split,accuracy,loss,wall_ms";

// Accuracy and loss with 6 decimals, wall_ms with 3.
std::string format_metrics_row(const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics_csv(std::istream& is);
// The value a metric takes once written with 6 decimals.
double round_metric(double v);

struct ExperimentData {
    LabeledDataset train;
    std::vector<LabeledDataset> eval_splits;
};

// colored: train = env1 + env2; splits train_env1, train_env2, test_reversed,
// test_gray. blobs: splits train, test.
ExperimentData make_data(const RunConfig& cfg, std::uint64_t run_seed);

std::string make_run_id(Ablation ablation, std::uint64_t seed);

struct TrainedRun {
    HmaModel model;
    TrainState state;
    std::vector<MetricsRecord> records;
};

// Trains one (seed, ablation) pair for cfg.train.epochs, evaluating every
// split after each epoch. Writes metrics.csv (and the checkpoint when
// enabled) into run_dir when it is non-empty.
TrainedRun run_single(const RunConfig& cfg, std::uint64_t seed, Ablation ablation,
                      const std::filesystem::path& run_dir, std::ostream* log = nullptr);

struct SummaryRow {
    std::string ablation;
    std::string split;
    std::size_t runs = 0;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;  // sample std (n - 1); 0 for a single run
    double loss_mean = 0.0;
    double loss_std = 0.0;
};

// Final-epoch statistics per (ablation, split) across seeds, computed from the
// metric values as written to CSV.
std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records);
void print_summary(std::ostream& os, const std::vector<SummaryRow>& rows);
void write_summary_json(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

// Every seed x ablation under cfg.out_dir; returns all records. Throws on
// failure.
std::vector<MetricsRecord> run_experiment(const RunConfig& cfg, std::ostream& log);

// Config with one sweep value applied (p_env values are "p1:p2").
RunConfig apply_sweep_value(const RunConfig& base, const std::string& axis, const std::string& value);

// run_experiment per value into <out>/<axis>=<value>/ and a long-form
// <out>/sweep.csv (axis,value + metrics columns).
std::vector<MetricsRecord> run_sweep(const RunConfig& cfg, std::ostream& log);

}  // namespace hma
