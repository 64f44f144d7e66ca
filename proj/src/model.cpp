#include "hma/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hma/checkpoint.hpp"
#include "hma/ops.hpp"
#include "hma/rng.hpp"

namespace hma {

namespace {

struct AblationName {
    Ablation value;
    std::string_view name;
};

constexpr AblationName kAblationNames[] = {
    {Ablation::kBackbone, "BACKBONE"}, {Ablation::kParam, "PARAM"},     {Ablation::kRma, "RMA"},
    {Ablation::kAbd, "ABD"},           {Ablation::kAbdSyn, "ABD_SYN"},  {Ablation::kAbdRma, "ABD_RMA"},
    {Ablation::kHma, "HMA"},
};

}  // namespace

std::string_view to_string(Ablation a) {
    for (const auto& n : kAblationNames) {
        if (n.value == a) return n.name;
    }
    return "?";
}

Ablation parse_ablation(std::string_view name) {
    std::string norm(name);
    for (auto& c : norm) {
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (c == '+' || c == '-') c = '_';
    }
    if (norm == "ERM") norm = "BACKBONE";
    for (const auto& n : kAblationNames) {
        if (n.name == norm) return n.value;
    }
    throw std::invalid_argument("unknown ablation '" + std::string(name) + "'");
}

const std::vector<Ablation>& all_ablations() {
    static const std::vector<Ablation> all = {Ablation::kBackbone, Ablation::kParam, Ablation::kRma,
                                              Ablation::kAbd,      Ablation::kAbdSyn, Ablation::kAbdRma,
                                              Ablation::kHma};
    return all;
}

bool ModelConfig::uses_rma() const {
    const bool stage = ablation == Ablation::kRma || ablation == Ablation::kAbdRma || ablation == Ablation::kHma;
    return stage && m1 > 0;
}

bool ModelConfig::uses_abd() const {
    return ablation == Ablation::kParam || ablation == Ablation::kAbd || ablation == Ablation::kAbdSyn ||
           ablation == Ablation::kAbdRma || ablation == Ablation::kHma;
}

std::size_t ModelConfig::active_slots_per_class() const {
    return ablation == Ablation::kAbdSyn || ablation == Ablation::kHma ? m2 : 0;
}

void ModelConfig::validate() const {
    if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
    if (input_dim == 0 || hidden == 0 || d1 == 0 || d2 == 0) {
        throw std::invalid_argument("input_dim, hidden, d1 and d2 must be positive");
    }
    if (heads == 0 || width() % heads != 0) {
        throw std::invalid_argument("d1 + d2 = " + std::to_string(width()) +
                                    " is not divisible by heads = " + std::to_string(heads));
    }
    if (stack_depth == 0) throw std::invalid_argument("stack_depth must be >= 1");
    if (!(lambda >= 0.0f && lambda <= 1.0f)) throw std::invalid_argument("lambda must be in [0,1]");
}

HmaModel::HmaModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const std::size_t d = config_.width();
    {
        auto rng = make_rng(seed, "backbone");
        backbone = Backbone(config_.input_dim, config_.hidden, config_.d1, rng);
    }
    {
        auto rng = make_rng(seed, "label_embedder");
        embedder = LabelEmbedder(config_.n_classes, config_.d2, rng);
    }
    {
        auto rng = make_rng(seed, "rma_block");
        rma_block = MhaBlock::create(d, config_.heads, rng);
    }
    for (std::size_t i = 0; i < config_.stack_depth; ++i) {
        if (config_.share_blocks) {
            sma_blocks.push_back(rma_block);
        } else {
            auto rng = make_rng(seed, "sma_block" + std::to_string(i));
            sma_blocks.push_back(MhaBlock::create(d, config_.heads, rng));
        }
    }
    {
        auto rng = make_rng(seed, "synthetic_memory");
        synthetic = SyntheticMemory(config_.n_classes, config_.active_slots_per_class(), config_.d1, rng);
    }
    {
        auto rng = make_rng(seed, "head");
        head_w = glorot_uniform(d, config_.n_classes, rng);
        head_b = Tensor::zeros({config_.n_classes}, true);
    }
}

Tensor HmaModel::forward(const Tensor& x, const RealMemoryBuffer& buffer) const {
    Tensor h1 = backbone.forward(x);
    Tensor c = aggregate_features(h1, embedder);
    if (config_.uses_rma()) c = rma_read(c, buffer, rma_block);
    if (config_.uses_abd()) {
        for (const auto& block : sma_blocks) c = sma_read(c, synthetic, embedder, block);
    }
    return project_logits(c, head_w, head_b);
}

std::vector<NamedParam> HmaModel::parameters() const {
    auto out = backbone.parameters("backbone");
    out.push_back({"emb.table", embedder.table()});
    for (auto& p : rma_block.parameters("rma.block")) out.push_back(std::move(p));
    if (!config_.share_blocks) {
        for (std::size_t i = 0; i < sma_blocks.size(); ++i) {
            for (auto& p : sma_blocks[i].parameters("sma" + std::to_string(i) + ".block")) {
                out.push_back(std::move(p));
            }
        }
    }
    if (!synthetic.empty()) out.push_back({"sma.slots", synthetic.slots()});
    out.push_back({"head.w", head_w});
    out.push_back({"head.b", head_b});
    return out;
}

void HmaModel::zero_attention_weights() {
    rma_block.zero_attention_weights();
    for (auto& b : sma_blocks) b.zero_attention_weights();
}

TrainState::TrainState(const HmaModel& model, const OptimizerConfig& opt, std::uint64_t seed)
    : rng(make_rng(seed, "shuffle")),
      optimizer(opt.learning_rate, opt.momentum),
      momentum(model.backbone, model.embedder, model.config().lambda),
      buffer(model.config().uses_rma() ? model.config().m1 : 0, model.config().width()) {}

float train_step(HmaModel& model, TrainState& state, const Tensor& x, std::span<const int> labels) {
    const auto& cfg = model.config();
    auto params = model.parameters();
    Tape tape;
    float loss_value = 0.0f;
    {
        TapeScope scope(tape);
        Tensor logits = model.forward(x, state.buffer);
        Tensor loss = cross_entropy_with_logits(logits, labels);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
            throw NonFiniteLoss("non-finite loss " + std::to_string(loss_value) + " at step " +
                                std::to_string(state.step) + " (epoch " + std::to_string(state.epoch) + ")");
        }
        if (cfg.uses_rma() && cfg.write_before_backward) {
            rma_write(x, labels, state.momentum, model.embedder, state.buffer, cfg.shadow_label_embedding);
        }
        SgdMomentum::zero_grad(params);
        tape.backward(loss);
    }
    for (const auto& p : params) {
        if (!all_finite(p.tensor.grad())) {
            throw NonFiniteLoss("non-finite gradient for " + p.name + " at step " + std::to_string(state.step));
        }
    }
    state.optimizer.step(params);
    if (cfg.uses_rma() && !cfg.write_before_backward) {
        rma_write(x, labels, state.momentum, model.embedder, state.buffer, cfg.shadow_label_embedding);
    }
    state.momentum.update(model.backbone, model.embedder);
    ++state.step;
    state.epoch_loss_sum += loss_value;
    ++state.epoch_batches;
    return loss_value;
}

double train_epoch(HmaModel& model, TrainState& state, const LabeledDataset& data,
                   std::size_t batch_size) {
    if (data.size() == 0) throw std::invalid_argument("train_epoch: empty dataset");
    if (batch_size == 0) throw std::invalid_argument("train_epoch: batch_size must be positive");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    state.epoch_loss_sum = 0.0;
    state.epoch_batches = 0;
    std::vector<int> labels;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, order.size() - start);
        std::span<const std::size_t> idx(order.data() + start, n);
        labels.clear();
        for (auto i : idx) labels.push_back(data.labels[i]);
        train_step(model, state, data.batch(idx), labels);
    }
    ++state.epoch;
    return state.epoch_loss_sum / static_cast<double>(state.epoch_batches);
}

EvalMetrics metrics_from_logits(std::span<const float> logits, std::span<const int> labels,
                                std::size_t n_classes) {
    if (labels.empty()) throw std::invalid_argument("metrics: empty dataset");
    if (logits.size() != labels.size() * n_classes) throw ShapeError("metrics: logits/labels mismatch");
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const float* row = logits.data() + i * n_classes;
        const auto best = static_cast<std::size_t>(std::max_element(row, row + n_classes) - row);
        if (static_cast<int>(best) == labels[i]) ++correct;
        const double mx = row[best];
        double s = 0.0;
        for (std::size_t j = 0; j < n_classes; ++j) s += std::exp(row[j] - mx);
        loss += mx + std::log(s) - row[labels[i]];
    }
    const double n = static_cast<double>(labels.size());
    return {static_cast<double>(correct) / n, loss / n, labels.size()};
}

EvalMetrics evaluate(const HmaModel& model, const TrainState& state, const LabeledDataset& data,
                     std::size_t batch_size, std::vector<float>* logits_out) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
    const std::size_t n_classes = model.config().n_classes;
    std::vector<float> all;
    all.reserve(data.size() * n_classes);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, data.size() - start);
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), start);
        Tensor logits = model.forward(data.batch(idx), state.buffer);
        all.insert(all.end(), logits.data().begin(), logits.data().end());
    }
    EvalMetrics m = metrics_from_logits(all, data.labels, n_classes);
    if (logits_out != nullptr) *logits_out = std::move(all);
    return m;
}

void save_checkpoint(const std::filesystem::path& path, const HmaModel& model,
                     const TrainState& state, const std::string& config_echo) {
    checkpoint::TensorMap map;
    const auto params = model.parameters();
    for (const auto& p : params) {
        map.emplace(p.name, p.tensor.detach());
        const auto& v = state.optimizer.velocity(p.tensor);
        if (!v.empty()) map.emplace("opt.v." + p.name, Tensor(p.tensor.shape(), v));
    }
    for (const auto& p : state.momentum.parameters("momentum")) map.emplace(p.name, p.tensor.detach());
    if (!state.buffer.empty()) map.emplace("rma.buffer", state.buffer.snapshot());
    map.emplace("rma.count", Tensor::scalar(static_cast<float>(state.buffer.size())));
    checkpoint::save(path, map);

    std::ofstream manifest(path.string() + ".manifest");
    if (!manifest) throw std::runtime_error("cannot write manifest for " + path.string());
    manifest << "step = " << state.step << '\n';
    manifest << "epoch = " << state.epoch << '\n';
    manifest << "rng = " << state.rng << '\n';
    manifest << "[config]\n" << config_echo;
}

namespace {

void copy_into(const checkpoint::TensorMap& map, const std::string& name, Tensor target) {
    auto it = map.find(name);
    if (it == map.end()) throw checkpoint::FormatError("checkpoint is missing '" + name + "'");
    if (it->second.shape() != target.shape()) {
        throw checkpoint::FormatError("checkpoint entry '" + name + "' has shape " +
                                      shape_str(it->second.shape()) + ", model expects " +
                                      shape_str(target.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), target.mutable_data().begin());
}

}  // namespace

void load_checkpoint(const std::filesystem::path& path, HmaModel& model, TrainState& state) {
    const auto map = checkpoint::load(path);
    for (const auto& p : model.parameters()) {
        copy_into(map, p.name, p.tensor);
        auto v = map.find("opt.v." + p.name);
        state.optimizer.set_velocity(p.tensor, v == map.end() ? std::vector<float>{}
                                                              : std::vector<float>(v->second.data().begin(),
                                                                                   v->second.data().end()));
    }
    for (const auto& p : state.momentum.parameters("momentum")) copy_into(map, p.name, p.tensor);

    state.buffer.clear();
    auto count_it = map.find("rma.count");
    const std::size_t count = count_it == map.end() ? 0 : static_cast<std::size_t>(count_it->second.item());
    if (count > 0) {
        auto it = map.find("rma.buffer");
        if (it == map.end() || it->second.dim(0) != count) {
            throw checkpoint::FormatError("rma.buffer does not hold rma.count rows");
        }
        state.buffer.push_rows(it->second);
    }

    std::ifstream manifest(path.string() + ".manifest");
    if (!manifest) throw std::runtime_error("missing manifest for " + path.string());
    std::string line;
    while (std::getline(manifest, line)) {
        if (line == "[config]") break;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        std::istringstream value(line.substr(eq + 3));
        if (key == "step") value >> state.step;
        if (key == "epoch") value >> state.epoch;
        if (key == "rng") value >> state.rng;
        if (!value) throw checkpoint::FormatError("bad manifest value for '" + key + "'");
    }
}

}  // namespace hma
