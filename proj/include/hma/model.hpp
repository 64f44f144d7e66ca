#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hma/attention.hpp"
#include "hma/backbone.hpp"
#include "hma/datasets.hpp"
#include "hma/memory.hpp"
#include "hma/optim.hpp"

namespace hma {

// Which stages of the pipeline run:
//   BACKBONE  head([h1 ; e_unknown])
//   PARAM     self-attention over the batch only (same computation as ABD)
//   RMA       real memory read only
//   ABD       attention between datapoints, no slots
//   ABD_SYN   attention between datapoints with synthetic slots
//   ABD_RMA   real memory read, then attention between datapoints
//   HMA       real memory read, then attention with synthetic slots
enum class Ablation { kBackbone, kParam, kRma, kAbd, kAbdSyn, kAbdRma, kHma };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view name);
const std::vector<Ablation>& all_ablations();

struct ModelConfig {
    std::size_t n_classes = 2;
    std::size_t input_dim = 4;
    std::size_t hidden = 64;
    std::size_t d1 = 64;
    std::size_t d2 = 64;
    std::size_t m1 = 128;  // buffer rows; 0 disables the real memory read
    std::size_t m2 = 8;    // slots per class; 0 leaves plain ABD
    std::size_t heads = 4;
    std::size_t stack_depth = 1;  // number of stacked synthetic-memory reads
    float lambda = 0.999f;
    Ablation ablation = Ablation::kHma;
    bool write_before_backward = true;
    bool shadow_label_embedding = false;
    bool share_blocks = false;

    std::size_t width() const { return d1 + d2; }
    bool uses_rma() const;
    bool uses_abd() const;
    std::size_t active_slots_per_class() const;
    void validate() const;
};

class HmaModel {
   public:
    HmaModel(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }

    // Logits [bs, n_classes]. Never reads true labels; the buffer is only
    // consulted when the real memory stage is enabled.
    Tensor forward(const Tensor& x, const RealMemoryBuffer& buffer) const;

    // Trainable tensors, each listed once.
    std::vector<NamedParam> parameters() const;
    // Zeros the projections and feed-forward weights of every attention block.
    void zero_attention_weights();

    Backbone backbone;
    LabelEmbedder embedder;
    MhaBlock rma_block;
    std::vector<MhaBlock> sma_blocks;
    SyntheticMemory synthetic;
    Tensor head_w;  // [d, n_classes]
    Tensor head_b;  // [n_classes]

   private:
    ModelConfig config_;
};

struct OptimizerConfig {
    float learning_rate = 0.01f;
    float momentum = 0.9f;
};

class NonFiniteLoss : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct TrainState {
    TrainState(const HmaModel& model, const OptimizerConfig& opt, std::uint64_t seed);

    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    std::mt19937_64 rng;  // batch shuffling
    SgdMomentum optimizer;
    MomentumEncoder momentum;
    RealMemoryBuffer buffer;
    double epoch_loss_sum = 0.0;
    std::size_t epoch_batches = 0;
};

// Forward, loss, buffer write, backward + SGD, momentum update (write and
// backward swap places when write_before_backward is off). Returns the loss.
float train_step(HmaModel& model, TrainState& state, const Tensor& x, std::span<const int> labels);

// One shuffled pass; returns the mean batch loss.
double train_epoch(HmaModel& model, TrainState& state, const LabeledDataset& data,
                   std::size_t batch_size);

struct EvalMetrics {
    double accuracy = 0.0;
    double loss = 0.0;
    std::size_t count = 0;
};

// Deterministic, side-effect free: consecutive batches in dataset order, no
// buffer writes, no updates. Optionally returns the logits [N, n_classes].
EvalMetrics evaluate(const HmaModel& model, const TrainState& state, const LabeledDataset& data,
                     std::size_t batch_size, std::vector<float>* logits_out = nullptr);

// Accuracy and mean cross-entropy of precomputed logits (argmax ties go to the
// lowest class index).
EvalMetrics metrics_from_logits(std::span<const float> logits, std::span<const int> labels,
                                std::size_t n_classes);

// Writes the HMA1 container at `path` and a text manifest at
// `path` + ".manifest" (config echo, counters, RNG state).
void save_checkpoint(const std::filesystem::path& path, const HmaModel& model,
                     const TrainState& state, const std::string& config_echo = {});
// Restores into a model/state built from the same config.
void load_checkpoint(const std::filesystem::path& path, HmaModel& model, TrainState& state);

}  // namespace hma
