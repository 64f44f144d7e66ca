// hma: train / eval / sweep / dump-attn driver.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hma/attention.hpp"
#include "hma/config.hpp"
#include "hma/experiment.hpp"
#include "hma/model.hpp"

namespace fs = std::filesystem;
using namespace hma;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string ablation;  // comma separated for train/sweep
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "INI config file (defaults when omitted)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "single seed, replaces the configured seed list");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--ablation", o.ablation, "ablation name(s), comma separated");
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) cfg.seeds = {*o.seed};
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.ablation.empty()) {
        cfg.ablations.clear();
        std::stringstream ss(o.ablation);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (name.empty()) continue;
            try {
                cfg.ablations.push_back(parse_ablation(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        if (cfg.ablations.empty()) throw ConfigError("--ablation: no ablation given");
    }
    cfg.finalize();
    return cfg;
}

struct Loaded {
    HmaModel model;
    TrainState state;
};

// Model for (first seed, first ablation): restored from a checkpoint or
// trained from scratch.
Loaded build_model(const RunConfig& cfg, const std::string& checkpoint) {
    const std::uint64_t seed = cfg.seeds.front();
    const Ablation ablation = cfg.ablations.front();
    if (checkpoint.empty()) {
        auto run = run_single(cfg, seed, ablation, {}, nullptr);
        return Loaded{std::move(run.model), std::move(run.state)};
    }
    ModelConfig mc = cfg.model;
    mc.ablation = ablation;
    HmaModel model(mc, seed);
    TrainState state(model, cfg.train.optimizer, seed);
    load_checkpoint(checkpoint, model, state);
    return Loaded{std::move(model), std::move(state)};
}

std::vector<LabeledDataset> eval_splits(const RunConfig& cfg, const std::string& data_csv) {
    if (data_csv.empty()) return make_data(cfg, cfg.seeds.front()).eval_splits;
    std::ifstream is(data_csv);
    if (!is) throw std::runtime_error("cannot read " + data_csv);
    auto splits = read_csv(is);
    for (const auto& s : splits) s.validate(cfg.model.n_classes);
    return splits;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

int cmd_train(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    run_experiment(cfg, std::cout);
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "summary.json").string() << '\n';
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint, const std::string& data_csv) {
    const RunConfig cfg = resolve(o);
    Loaded loaded = build_model(cfg, checkpoint);
    const std::string id = make_run_id(cfg.ablations.front(), cfg.seeds.front());
    std::ostringstream csv;
    csv << kMetricsHeader << '\n';
    for (const auto& split : eval_splits(cfg, data_csv)) {
        const auto m = evaluate(loaded.model, loaded.state, split, cfg.train.batch_size);
        const MetricsRecord r{id, cfg.seeds.front(), std::string(to_string(cfg.ablations.front())),
                              static_cast<std::size_t>(loaded.state.epoch), split.env, m.accuracy, m.loss, 0.0};
        csv << format_metrics_row(r) << '\n';
    }
    std::cout << csv.str();
    if (!o.out.empty()) write_file(fs::path(cfg.out_dir) / "eval_metrics.csv", csv.str());
    return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& axis, const std::vector<std::string>& values) {
    RunConfig cfg = resolve(o);
    if (!axis.empty()) cfg.sweep_axis = axis;
    if (!values.empty()) cfg.sweep_values = values;
    run_sweep(cfg, std::cout);
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "sweep.csv").string() << '\n';
    return 0;
}

int cmd_dump_attn(const CommonOptions& o, const std::string& checkpoint, const std::string& data_csv,
                  const std::string& split_name, std::size_t max_rows) {
    const RunConfig cfg = resolve(o);
    Loaded loaded = build_model(cfg, checkpoint);
    const auto splits = eval_splits(cfg, data_csv);
    const LabeledDataset* split = &splits.back();
    if (!split_name.empty()) {
        split = nullptr;
        for (const auto& s : splits) {
            if (s.env == split_name) split = &s;
        }
        if (split == nullptr) throw std::runtime_error("no split named '" + split_name + "'");
    }
    // One forward over the leading rows; the batch is what attention sees.
    const std::size_t n = std::min({max_rows, split->size(), cfg.train.batch_size});
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    AttentionRecorder recorder;
    Tensor logits;
    {
        AttentionRecordScope scope(recorder);
        logits = loaded.model.forward(split->batch(idx), loaded.state.buffer);
    }
    const fs::path out = cfg.out_dir;
    std::ostringstream attn;
    recorder.write_csv(attn);
    write_file(out / "attn.csv", attn.str());

    const std::size_t k = loaded.model.config().n_classes;
    std::ostringstream lg;
    lg << "split,index,label";
    for (std::size_t c = 0; c < k; ++c) lg << ",logit" << c;
    lg << '\n' << std::setprecision(9);
    for (std::size_t i = 0; i < n; ++i) {
        lg << split->env << ',' << i << ',' << split->labels[i];
        for (std::size_t c = 0; c < k; ++c) lg << ',' << logits.data()[i * k + c];
        lg << '\n';
    }
    write_file(out / "logits.csv", lg.str());
    std::cout << "wrote " << recorder.rows().size() << " attention rows to " << (out / "attn.csv").string()
              << " and " << n << " logit rows to " << (out / "logits.csv").string() << '\n';
    return 0;
}

int cmd_export_data(const CommonOptions& o, const std::string& path) {
    const RunConfig cfg = resolve(o);
    const auto data = make_data(cfg, cfg.seeds.front());
    std::ostringstream os;
    for (std::size_t i = 0; i < data.eval_splits.size(); ++i) {
        std::ostringstream part;
        write_csv(part, data.eval_splits[i]);
        std::string text = part.str();
        if (i > 0) text = text.substr(text.find('\n') + 1);  // one header
        os << text;
    }
    write_file(path, os.str());
    std::cout << "wrote " << path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous memory augmentation: training and evaluation"};
    app.require_subcommand(1);

    CommonOptions train_o, eval_o, sweep_o, dump_o, export_o;
    std::string eval_ckpt, eval_data, dump_ckpt, dump_data, dump_split, sweep_axis, export_path;
    std::vector<std::string> sweep_values;
    std::size_t dump_rows = 64;

    auto* train = app.add_subcommand("train", "train every seed x ablation and summarize");
    add_common(train, train_o);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on every split");
    add_common(eval, eval_o);
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint written by train")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "dataset CSV (env,label,f0..); default: regenerate from config");

    auto* sweep = app.add_subcommand("sweep", "run the experiment once per axis value");
    add_common(sweep, sweep_o);
    sweep->add_option("--axis", sweep_axis, "p_env | m1 | m2 | bs (overrides [sweep] axis)");
    sweep->add_option("--values", sweep_values, "axis values (overrides [sweep] values)")->delimiter(',');

    auto* dump = app.add_subcommand("dump-attn", "write attention scores and logits for one batch");
    add_common(dump, dump_o);
    dump->add_option("--checkpoint", dump_ckpt, "checkpoint; trains from scratch when omitted")
        ->check(CLI::ExistingFile);
    dump->add_option("--data", dump_data, "dataset CSV; default: regenerate from config");
    dump->add_option("--split", dump_split, "split name (default: last split)");
    dump->add_option("--rows", dump_rows, "rows in the batch (capped by batch_size)")->check(CLI::PositiveNumber);

    auto* exp = app.add_subcommand("export-data", "write the configured evaluation splits as CSV");
    add_common(exp, export_o);
    exp->add_option("--path", export_path, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_o);
        if (*eval) return cmd_eval(eval_o, eval_ckpt, eval_data);
        if (*sweep) return cmd_sweep(sweep_o, sweep_axis, sweep_values);
        if (*dump) return cmd_dump_attn(dump_o, dump_ckpt, dump_data, dump_split, dump_rows);
        if (*exp) return cmd_export_data(export_o, export_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NonFiniteLoss& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
