#include "hma/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace hma {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + v + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean '" + v + "' for " + key);
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["model.hidden"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.hidden = parse_number<std::size_t>(k, v);
        };
        t["model.d1"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.d1 = parse_number<std::size_t>(k, v);
        };
        t["model.d2"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.d2 = parse_number<std::size_t>(k, v);
        };
        t["model.heads"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.heads = parse_number<std::size_t>(k, v);
        };
        t["model.m1"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.m1_auto = v == "auto";
            if (!c.m1_auto) c.model.m1 = parse_number<std::size_t>(k, v);
        };
        t["model.m2"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.m2 = parse_number<std::size_t>(k, v);
        };
        t["model.lambda"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.lambda = static_cast<float>(parse_number<double>(k, v));
        };
        t["model.stack_depth"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.stack_depth = parse_number<std::size_t>(k, v);
        };
        t["model.write_before_backward"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.write_before_backward = parse_bool(k, v);
        };
        t["model.shadow_label_embedding"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.shadow_label_embedding = parse_bool(k, v);
        };
        t["model.share_blocks"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.share_blocks = parse_bool(k, v);
        };
        t["data.task"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v != "colored" && v != "blobs") throw ConfigError("invalid value '" + v + "' for " + k);
            c.data.task = v;
        };
        t["data.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "run") {
                c.data.seed.reset();
            } else {
                c.data.seed = parse_number<std::uint64_t>(k, v);
            }
        };
        t["data.n_per_env"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.colored.n_per_env = parse_number<std::size_t>(k, v);
        };
        t["data.p1"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.colored.p1 = parse_number<double>(k, v);
        };
        t["data.p2"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.colored.p2 = parse_number<double>(k, v);
        };
        t["data.label_noise"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.colored.label_noise = parse_number<double>(k, v);
        };
        t["data.semantic_std"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.colored.semantic_std = parse_number<double>(k, v);
        };
        t["data.n_classes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.n_classes = parse_number<std::size_t>(k, v);
        };
        t["data.n_per_class"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.n_per_class = parse_number<std::size_t>(k, v);
        };
        t["data.input_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.input_dim = parse_number<std::size_t>(k, v);
        };
        t["data.spread"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.data.spread = parse_number<double>(k, v);
        };
        t["train.epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.epochs = parse_number<std::size_t>(k, v);
        };
        t["train.batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.batch_size = parse_number<std::size_t>(k, v);
        };
        t["train.lr"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.optimizer.learning_rate = static_cast<float>(parse_number<double>(k, v));
        };
        t["train.momentum"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.train.optimizer.momentum = static_cast<float>(parse_number<double>(k, v));
        };
        t["experiment.seeds"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.seeds.clear();
            for (const auto& s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, s));
        };
        t["experiment.ablations"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.ablations.clear();
            try {
                for (const auto& s : split_list(v)) c.ablations.push_back(parse_ablation(s));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(k + ": " + e.what());
            }
        };
        t["experiment.out"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
        t["experiment.save_checkpoints"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.save_checkpoints = parse_bool(k, v);
        };
        t["sweep.axis"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v != "p_env" && v != "m1" && v != "m2" && v != "bs") {
                throw ConfigError("invalid value '" + v + "' for " + k + " (p_env, m1, m2 or bs)");
            }
            c.sweep_axis = v;
        };
        t["sweep.values"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.sweep_values = split_list(v);
        };
        return t;
    }();
    return table;
}

}  // namespace

void RunConfig::finalize() {
    if (data.task == "colored") {
        model.input_dim = 4;
        model.n_classes = 2;
    } else {
        model.input_dim = data.input_dim;
        model.n_classes = data.n_classes;
        if (data.n_per_class == 0) throw ConfigError("data.n_per_class must be >= 1");
    }
    if (m1_auto) model.m1 = 2 * train.batch_size;
    if (train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (train.epochs == 0) throw ConfigError("train.epochs must be >= 1");
    if (seeds.empty()) throw ConfigError("experiment.seeds is empty");
    if (ablations.empty()) throw ConfigError("experiment.ablations is empty");
    try {
        model.validate();
        ColoredEnvSpec probe = data.colored;
        probe.validate();
        SgdMomentum check(train.optimizer.learning_rate, train.optimizer.momentum);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

RunConfig parse_config(std::istream& is) {
    RunConfig cfg;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"model", "data", "train", "experiment", "sweep"};
            bool ok = false;
            for (const char* k : known) ok = ok || section == k;
            if (!ok) throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = setters();
        auto it = table.find(key);
        if (section.empty() || it == table.end()) {
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        try {
            it->second(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    cfg.finalize();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    return parse_config(is);
}

std::string to_ini(const RunConfig& c) {
    auto b = [](bool v) { return v ? "true" : "false"; };
    std::ostringstream os;
    os << "[model]\n";
    os << "hidden = " << c.model.hidden << '\n';
    os << "d1 = " << c.model.d1 << '\n';
    os << "d2 = " << c.model.d2 << '\n';
    os << "heads = " << c.model.heads << '\n';
    if (c.m1_auto) {
        os << "m1 = auto\n";
    } else {
        os << "m1 = " << c.model.m1 << '\n';
    }
    os << "m2 = " << c.model.m2 << '\n';
    os << "lambda = " << fmt_double(c.model.lambda) << '\n';
    os << "stack_depth = " << c.model.stack_depth << '\n';
    os << "write_before_backward = " << b(c.model.write_before_backward) << '\n';
    os << "shadow_label_embedding = " << b(c.model.shadow_label_embedding) << '\n';
    os << "share_blocks = " << b(c.model.share_blocks) << '\n';
    os << "\n[data]\n";
    os << "task = " << c.data.task << '\n';
    os << "seed = " << (c.data.seed ? std::to_string(*c.data.seed) : std::string("run")) << '\n';
    os << "n_per_env = " << c.data.colored.n_per_env << '\n';
    os << "p1 = " << fmt_double(c.data.colored.p1) << '\n';
    os << "p2 = " << fmt_double(c.data.colored.p2) << '\n';
    os << "label_noise = " << fmt_double(c.data.colored.label_noise) << '\n';
    os << "semantic_std = " << fmt_double(c.data.colored.semantic_std) << '\n';
    os << "n_classes = " << c.data.n_classes << '\n';
    os << "n_per_class = " << c.data.n_per_class << '\n';
    os << "input_dim = " << c.data.input_dim << '\n';
    os << "spread = " << fmt_double(c.data.spread) << '\n';
    os << "\n[train]\n";
    os << "epochs = " << c.train.epochs << '\n';
    os << "batch_size = " << c.train.batch_size << '\n';
    os << "lr = " << fmt_double(c.train.optimizer.learning_rate) << '\n';
    os << "momentum = " << fmt_double(c.train.optimizer.momentum) << '\n';
    os << "\n[experiment]\n";
    os << "seeds = ";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
    os << "\nablations = ";
    for (std::size_t i = 0; i < c.ablations.size(); ++i) os << (i ? "," : "") << to_string(c.ablations[i]);
    os << "\nout = " << c.out_dir << '\n';
    os << "save_checkpoints = " << b(c.save_checkpoints) << '\n';
    if (!c.sweep_axis.empty()) {
        os << "\n[sweep]\n";
        os << "axis = " << c.sweep_axis << '\n';
        os << "values = ";
        for (std::size_t i = 0; i < c.sweep_values.size(); ++i) os << (i ? "," : "") << c.sweep_values[i];
        os << '\n';
    }
    return os.str();
}

}  // namespace hma
