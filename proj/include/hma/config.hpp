#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hma/datasets.hpp"
#include "hma/model.hpp"

namespace hma {

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    std::string task = "colored";  // colored | blobs
    ColoredEnvSpec colored;        // colored.seed is replaced per run
    std::size_t n_classes = 2;     // blobs only
    std::size_t n_per_class = 500;
    std::size_t input_dim = 4;
    double spread = 0.1;
    std::optional<std::uint64_t> seed;  // unset: follow the run seed
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    OptimizerConfig optimizer;
};

struct RunConfig {
    ModelConfig model;
    bool m1_auto = true;  // m1 = 2 * batch_size
    DataConfig data;
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0};
    std::vector<Ablation> ablations{Ablation::kHma};
    std::string out_dir = "runs";
    bool save_checkpoints = true;
    std::string sweep_axis;  // p_env | m1 | m2 | bs
    std::vector<std::string> sweep_values;

    // Fills derived fields (auto m1, input_dim/n_classes from the task) and
    // checks consistency.
    void finalize();
};

// Sections and keys (all optional; defaults as in the structs above):
//   [model]      hidden d1 d2 heads m1 (or "auto") m2 lambda stack_depth
//                write_before_backward shadow_label_embedding share_blocks
//   [data]       task seed n_per_env p1 p2 label_noise semantic_std
//                n_classes n_per_class input_dim spread
//   [train]      epochs batch_size lr momentum
//   [experiment] seeds ablations out save_checkpoints
//   [sweep]      axis values
// Lines are `key = value`; `#` and `;` start comments. Unknown sections or
// keys are errors.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);

// Effective configuration with every key spelled out; parse_config(to_ini(c))
// reproduces c.
std::string to_ini(const RunConfig& config);

}  // namespace hma
