#include "hma/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace hma {

namespace {

namespace fs = std::filesystem;

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double round_metric(double v) { return std::stod(fixed(v, 6)); }

std::string format_metrics_row(const MetricsRecord& r) {
    std::ostringstream os;
    os << r.run_id << ',' << r.seed << ',' << r.ablation << ',' << r.epoch << ',' << r.split << ','
       << fixed(r.accuracy, 6) << ',' << fixed(r.loss, 6) << ',' << fixed(r.wall_ms, 3);
    return os.str();
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kMetricsHeader) {
        throw std::runtime_error("metrics csv: unexpected header '" + line + "'");
    }
    std::vector<MetricsRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw std::runtime_error("metrics csv: malformed row '" + line + "'");
        MetricsRecord r;
        r.run_id = cells[0];
        r.seed = std::stoull(cells[1]);
        r.ablation = cells[2];
        r.epoch = std::stoul(cells[3]);
        r.split = cells[4];
        r.accuracy = std::stod(cells[5]);
        r.loss = std::stod(cells[6]);
        r.wall_ms = std::stod(cells[7]);
        out.push_back(std::move(r));
    }
    return out;
}

ExperimentData make_data(const RunConfig& cfg, std::uint64_t run_seed) {
    const std::uint64_t seed = cfg.data.seed.value_or(run_seed);
    ExperimentData d;
    if (cfg.data.task == "colored") {
        ColoredEnvSpec spec = cfg.data.colored;
        spec.seed = seed;
        auto s = gen_colored(spec);
        d.train = merge({&s.train_env1, &s.train_env2}, "train");
        d.eval_splits = {std::move(s.train_env1), std::move(s.train_env2), std::move(s.test_reversed),
                         std::move(s.test_gray)};
    } else {
        d.train = gen_blobs(cfg.data.n_classes, cfg.data.n_per_class, cfg.data.input_dim, cfg.data.spread,
                            seed * 2, "train");
        d.eval_splits = {d.train, gen_blobs(cfg.data.n_classes, cfg.data.n_per_class, cfg.data.input_dim,
                                            cfg.data.spread, seed * 2 + 1, "test")};
    }
    d.train.validate(cfg.model.n_classes);
    for (const auto& s : d.eval_splits) s.validate(cfg.model.n_classes);
    return d;
}

std::string make_run_id(Ablation ablation, std::uint64_t seed) {
    return std::string(to_string(ablation)) + "-seed" + std::to_string(seed);
}

TrainedRun run_single(const RunConfig& cfg, std::uint64_t seed, Ablation ablation,
                      const fs::path& run_dir, std::ostream* log) {
    ModelConfig mc = cfg.model;
    mc.ablation = ablation;
    const ExperimentData data = make_data(cfg, seed);
    HmaModel model(mc, seed);
    TrainState state(model, cfg.train.optimizer, seed);
    std::vector<MetricsRecord> records;
    const std::string id = make_run_id(ablation, seed);
    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };
    for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        const double train_loss = train_epoch(model, state, data.train, cfg.train.batch_size);
        for (const auto& split : data.eval_splits) {
            const auto m = evaluate(model, state, split, cfg.train.batch_size);
            records.push_back({id, seed, std::string(to_string(ablation)), epoch, split.env, m.accuracy, m.loss,
                               elapsed_ms()});
        }
        if (log != nullptr) {
            *log << id << " epoch " << epoch << " train_loss " << fixed(train_loss, 6) << '\n';
        }
    }
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        std::ostringstream csv;
        csv << kMetricsHeader << '\n';
        for (const auto& r : records) csv << format_metrics_row(r) << '\n';
        write_text(run_dir / "metrics.csv", csv.str());
        if (cfg.save_checkpoints) save_checkpoint(run_dir / "checkpoint.hma", model, state, to_ini(cfg));
    }
    return TrainedRun{std::move(model), std::move(state), std::move(records)};
}

std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records) {
    std::map<std::string, std::size_t> last_epoch;
    for (const auto& r : records) last_epoch[r.run_id] = std::max(last_epoch[r.run_id], r.epoch);
    // Keep first-seen order of ablations and splits.
    std::vector<std::pair<std::string, std::string>> keys;
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : records) {
        if (r.epoch != last_epoch[r.run_id]) continue;
        const auto key = std::make_pair(r.ablation, r.split);
        if (!groups.count(key)) keys.push_back(key);
        groups[key].first.push_back(round_metric(r.accuracy));
        groups[key].second.push_back(round_metric(r.loss));
    }
    std::vector<SummaryRow> out;
    for (const auto& key : keys) {
        const auto& [acc, loss] = groups[key];
        SummaryRow row{key.first, key.second, acc.size()};
        for (double a : acc) row.accuracy_mean += a;
        for (double l : loss) row.loss_mean += l;
        row.accuracy_mean /= static_cast<double>(acc.size());
        row.loss_mean /= static_cast<double>(loss.size());
        row.accuracy_std = sample_std(acc, row.accuracy_mean);
        row.loss_std = sample_std(loss, row.loss_mean);
        out.push_back(row);
    }
    return out;
}

void print_summary(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << std::left << std::setw(10) << "ablation" << std::setw(15) << "split" << std::setw(6) << "runs"
       << "accuracy (mean +- std)             loss (mean +- std)\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(10) << r.ablation << std::setw(15) << r.split << std::setw(6) << r.runs
           << fixed(r.accuracy_mean, 10) << " +- " << fixed(r.accuracy_std, 10) << "   "
           << fixed(r.loss_mean, 10) << " +- " << fixed(r.loss_std, 10) << '\n';
    }
}

void write_summary_json(const fs::path& path, const std::vector<SummaryRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"ablation", r.ablation},
                     {"split", r.split},
                     {"runs", r.runs},
                     {"accuracy_mean", r.accuracy_mean},
                     {"accuracy_std", r.accuracy_std},
                     {"loss_mean", r.loss_mean},
                     {"loss_std", r.loss_std}});
    }
    write_text(path, nlohmann::json{{"summary", j}}.dump(2) + "\n");
}

std::vector<MetricsRecord> run_experiment(const RunConfig& cfg, std::ostream& log) {
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    write_text(out / "config.ini", to_ini(cfg));
    std::vector<MetricsRecord> all;
    for (auto seed : cfg.seeds) {
        for (auto ablation : cfg.ablations) {
            auto run = run_single(cfg, seed, ablation, out / make_run_id(ablation, seed), nullptr);
            const auto& last = run.records.back();
            log << make_run_id(ablation, seed) << ": epoch " << last.epoch << " done\n";
            all.insert(all.end(), run.records.begin(), run.records.end());
        }
    }
    const auto rows = summarize(all);
    write_summary_json(out / "summary.json", rows);
    print_summary(log, rows);
    return all;
}

RunConfig apply_sweep_value(const RunConfig& base, const std::string& axis, const std::string& value) {
    RunConfig cfg = base;
    auto number = [&](const std::string& v) {
        std::size_t pos = 0;
        double d = 0.0;
        try {
            d = std::stod(v, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != v.size()) throw ConfigError("invalid sweep value '" + v + "' for axis " + axis);
        return d;
    };
    if (axis == "p_env") {
        const auto colon = value.find(':');
        if (colon == std::string::npos) throw ConfigError("p_env sweep values must be p1:p2, got '" + value + "'");
        cfg.data.colored.p1 = number(value.substr(0, colon));
        cfg.data.colored.p2 = number(value.substr(colon + 1));
    } else if (axis == "m1") {
        cfg.model.m1 = static_cast<std::size_t>(number(value));
        cfg.m1_auto = false;
    } else if (axis == "m2") {
        cfg.model.m2 = static_cast<std::size_t>(number(value));
    } else if (axis == "bs") {
        cfg.train.batch_size = static_cast<std::size_t>(number(value));
    } else {
        throw ConfigError("unknown sweep axis '" + axis + "'");
    }
    cfg.sweep_axis.clear();
    cfg.sweep_values.clear();
    cfg.out_dir = (fs::path(base.out_dir) / (axis + "=" + value)).string();
    cfg.finalize();
    return cfg;
}

std::vector<MetricsRecord> run_sweep(const RunConfig& cfg, std::ostream& log) {
    if (cfg.sweep_axis.empty() || cfg.sweep_values.empty()) {
        throw ConfigError("sweep needs [sweep] axis and values");
    }
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    write_text(out / "config.ini", to_ini(cfg));
    std::ostringstream csv;
    csv << "axis,value," << kMetricsHeader << '\n';
    std::vector<MetricsRecord> all;
    for (const auto& value : cfg.sweep_values) {
        log << "== " << cfg.sweep_axis << " = " << value << '\n';
        const RunConfig point = apply_sweep_value(cfg, cfg.sweep_axis, value);
        auto records = run_experiment(point, log);
        for (const auto& r : records) csv << cfg.sweep_axis << ',' << value << ',' << format_metrics_row(r) << '\n';
        all.insert(all.end(), records.begin(), records.end());
    }
    write_text(out / "sweep.csv", csv.str());
    return all;
}

}  // namespace hma
