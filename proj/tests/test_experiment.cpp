#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hma/config.hpp"
#include "hma/experiment.hpp"

using namespace hma;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(const fs::path& out, const std::string& extra = "") {
    std::istringstream is(R"(
[model]
hidden = 8
d1 = 4
d2 = 4
heads = 2
m2 = 2
[data]
n_per_env = 60
[train]
epochs = 2
batch_size = 16
[experiment]
seeds = 0, 1
ablations = HMA, BACKBONE
)" + extra);
    RunConfig c = parse_config(is);
    c.out_dir = out.string();
    c.finalize();
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

// Metrics without the wall-clock column.
std::string strip_wall(const std::vector<MetricsRecord>& records) {
    std::ostringstream os;
    for (auto r : records) {
        r.wall_ms = 0;
        os << format_metrics_row(r) << '\n';
    }
    return os.str();
}

std::vector<MetricsRecord> read_metrics(const fs::path& p) {
    std::ifstream is(p);
    return read_metrics_csv(is);
}

}  // namespace

TEST_CASE("metrics rows use the fixed column layout and 6-decimal accuracy") {
    MetricsRecord r{"HMA-seed3", 3, "HMA", 2, "test_gray", 0.1234567, 0.5, 12.25};
    CHECK(format_metrics_row(r) == "HMA-seed3,3,HMA,2,test_gray,0.123457,0.500000,12.250");
    CHECK(std::string(kMetricsHeader) == "run_id,seed,ablation,epoch,split,accuracy,loss,wall_ms");
    std::istringstream is(std::string(kMetricsHeader) + "\n" + format_metrics_row(r) + "\n");
    const auto back = read_metrics_csv(is);
    REQUIRE(back.size() == 1);
    CHECK(back[0].accuracy == 0.123457);
    std::istringstream bad("run_id,seed\n");
    CHECK_THROWS(read_metrics_csv(bad));
}

TEST_CASE("2 seeds x 2 ablations write 4 checkpoints and 4 metric files") {
    TempDir dir("hma_exp_count");
    const RunConfig cfg = tiny(dir.path);
    std::ostringstream log;
    const auto records = run_experiment(cfg, log);
    std::size_t checkpoints = 0, metrics = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir.path)) {
        checkpoints += e.path().filename() == "checkpoint.hma";
        metrics += e.path().filename() == "metrics.csv";
    }
    CHECK(checkpoints == 4);
    CHECK(metrics == 4);
    CHECK(fs::exists(dir.path / "summary.json"));
    CHECK(fs::exists(dir.path / "config.ini"));
    // One record per (run, epoch, split).
    CHECK(records.size() == 4 * 2 * 4);
    const auto file = read_metrics(dir.path / "HMA-seed1" / "metrics.csv");
    CHECK(file.size() == 2 * 4);
    CHECK(file.front().run_id == "HMA-seed1");
    CHECK(log.str().find("test_reversed") != std::string::npos);
}

TEST_CASE("same config and seed reproduce metrics byte for byte apart from wall clock") {
    TempDir a("hma_exp_det_a"), b("hma_exp_det_b");
    std::ostringstream log;
    const auto ra = run_experiment(tiny(a.path), log);
    const auto rb = run_experiment(tiny(b.path), log);
    CHECK(strip_wall(ra) == strip_wall(rb));
    for (const char* run : {"HMA-seed0", "BACKBONE-seed1"}) {
        CHECK(strip_wall(read_metrics(a.path / run / "metrics.csv")) ==
              strip_wall(read_metrics(b.path / run / "metrics.csv")));
        CHECK(slurp(a.path / run / "checkpoint.hma") == slurp(b.path / run / "checkpoint.hma"));
    }
    CHECK(slurp(a.path / "summary.json") == slurp(b.path / "summary.json"));
}

TEST_CASE("re-running from the echoed config reproduces the results") {
    TempDir a("hma_exp_echo_a"), b("hma_exp_echo_b");
    std::ostringstream log;
    const auto first = run_experiment(tiny(a.path, "[data]\nseed = 5\n"), log);
    RunConfig echoed = load_config(a.path / "config.ini");
    echoed.out_dir = b.path.string();
    const auto second = run_experiment(echoed, log);
    CHECK(strip_wall(first) == strip_wall(second));
}

TEST_CASE("summary statistics are computed from the written values") {
    std::vector<MetricsRecord> recs{
        {"A-seed0", 0, "A", 1, "s", 0.1, 9.0, 0},        {"A-seed0", 0, "A", 2, "s", 0.5, 1.0, 0},
        {"A-seed1", 1, "A", 2, "s", 0.7000004, 2.0, 0},  {"A-seed2", 2, "A", 2, "s", 0.9, 3.0, 0},
        {"B-seed0", 0, "B", 2, "s", 0.25, 0.5, 0},
    };
    const auto rows = summarize(recs);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ablation == "A");
    CHECK(rows[0].runs == 3);
    CHECK(rows[0].accuracy_mean == doctest::Approx((0.5 + 0.7 + 0.9) / 3).epsilon(1e-12));
    CHECK(rows[0].accuracy_std == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(rows[0].loss_mean == doctest::Approx(2.0));
    CHECK(rows[1].runs == 1);
    CHECK(rows[1].accuracy_std == 0.0);
}

TEST_CASE("sweeping m2 over {0,4,8} gives 3 groups and m2 = 0 matches an explicit ABD run") {
    TempDir dir("hma_exp_sweep_m2"), ref("hma_exp_sweep_ref");
    RunConfig cfg = tiny(dir.path, "[sweep]\naxis = m2\nvalues = 0, 4, 8\n");
    cfg.seeds = {3};
    cfg.ablations = {Ablation::kAbdSyn};
    cfg.save_checkpoints = false;
    std::ostringstream log;
    const auto records = run_sweep(cfg, log);
    for (const char* v : {"m2=0", "m2=4", "m2=8"}) CHECK(fs::exists(dir.path / v / "summary.json"));

    // Long-form rows: |axis| x seeds x ablations x epochs x splits.
    std::ifstream is(dir.path / "sweep.csv");
    std::string header, line;
    std::getline(is, header);
    CHECK(header == "axis,value,run_id,seed,ablation,epoch,split,accuracy,loss,wall_ms");
    std::size_t rows = 0;
    while (std::getline(is, line)) rows += !line.empty();
    CHECK(rows == 3 * 1 * 1 * 2 * 4);
    CHECK(records.size() == rows);

    RunConfig abd = tiny(ref.path);
    abd.seeds = {3};
    abd.ablations = {Ablation::kAbd};
    abd.save_checkpoints = false;
    const auto explicit_abd = run_experiment(abd, log);
    const auto m2_zero = read_metrics(dir.path / "m2=0" / "ABD_SYN-seed3" / "metrics.csv");
    REQUIRE(m2_zero.size() == explicit_abd.size());
    for (std::size_t i = 0; i < m2_zero.size(); ++i) {
        CHECK(m2_zero[i].accuracy == round_metric(explicit_abd[i].accuracy));
        CHECK(m2_zero[i].loss == round_metric(explicit_abd[i].loss));
    }
}

TEST_CASE("p_env sweep yields one group per pair, independent of sweep order") {
    TempDir a("hma_exp_penv_a"), b("hma_exp_penv_b");
    RunConfig cfg = tiny(a.path, "[sweep]\naxis = p_env\nvalues = 0.2:0.1, 0:0.02\n");
    cfg.seeds = {0};
    cfg.ablations = {Ablation::kHma};
    cfg.save_checkpoints = false;
    std::ostringstream log;
    run_sweep(cfg, log);
    RunConfig rev = cfg;
    rev.out_dir = b.path.string();
    rev.sweep_values = {"0:0.02", "0.2:0.1"};
    run_sweep(rev, log);
    for (const char* v : {"p_env=0.2:0.1", "p_env=0:0.02"}) {
        const auto p = fs::path(v) / "HMA-seed0" / "metrics.csv";
        CHECK(strip_wall(read_metrics(a.path / p)) == strip_wall(read_metrics(b.path / p)));
    }
    CHECK_THROWS_AS(apply_sweep_value(cfg, "p_env", "0.3"), ConfigError);
    CHECK_THROWS_AS(apply_sweep_value(cfg, "m1", "lots"), ConfigError);
}

TEST_CASE("sweep values apply to the intended fields") {
    const RunConfig base = tiny("/tmp/unused");
    CHECK(apply_sweep_value(base, "m1", "0").model.m1 == 0);
    CHECK_FALSE(apply_sweep_value(base, "m1", "0").model.uses_rma());
    CHECK(apply_sweep_value(base, "bs", "8").model.m1 == 16);  // auto m1 follows the batch size
    const auto p = apply_sweep_value(base, "p_env", "0:0.02");
    CHECK(p.data.colored.p1 == 0.0);
    CHECK(p.data.colored.p2 == 0.02);
    CHECK(apply_sweep_value(base, "m2", "4").out_dir == (fs::path("/tmp/unused") / "m2=4").string());
}
