#include <sstream>

#include "doctest.h"
#include "hma/config.hpp"

using namespace hma;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

}  // namespace

TEST_CASE("empty config yields documented defaults") {
    RunConfig c = parse("");
    c.finalize();
    CHECK(c.data.task == "colored");
    CHECK(c.model.hidden == 64);
    CHECK(c.model.d1 == 64);
    CHECK(c.model.d2 == 64);
    CHECK(c.model.m2 == 8);
    CHECK(c.model.m1 == 2 * c.train.batch_size);
    CHECK(c.model.input_dim == 4);
    CHECK(c.model.n_classes == 2);
    CHECK(c.train.epochs == 50);
    CHECK(c.data.colored.label_noise == 0.25);
    CHECK(c.seeds == std::vector<std::uint64_t>{0});
    CHECK(c.ablations == std::vector<Ablation>{Ablation::kHma});
}

TEST_CASE("sections, comments, lists and auto m1") {
    RunConfig c = parse(R"(
# comment
[model]
d1 = 16      ; trailing comment
heads = 2
m1 = auto
[train]
batch_size = 32
[experiment]
seeds = 1, 2,3
ablations = hma, ERM, abd+syn
out = somewhere
[data]
task = blobs
n_classes = 3
input_dim = 5
)");
    c.finalize();
    CHECK(c.model.d1 == 16);
    CHECK(c.model.m1 == 64);
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(c.ablations == std::vector<Ablation>{Ablation::kHma, Ablation::kBackbone, Ablation::kAbdSyn});
    CHECK(c.out_dir == "somewhere");
    CHECK(c.model.n_classes == 3);
    CHECK(c.model.input_dim == 5);

    RunConfig fixed = parse("[model]\nm1 = 7\n");
    fixed.finalize();
    CHECK(fixed.model.m1 == 7);
    CHECK_FALSE(fixed.m1_auto);
}

TEST_CASE("unknown keys and sections are errors naming the line") {
    auto message = [](const std::string& text) {
        try {
            parse(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("[model]\nd1 = 4\nbogus = 1\n").find("line 3") != std::string::npos);
    CHECK(message("[nowhere]\n").find("line 1") != std::string::npos);
    CHECK(message("d1 = 4\n").find("line 1") != std::string::npos);
    CHECK(message("[model]\nd1 = four\n").find("line 2") != std::string::npos);
    CHECK(message("[model]\nd1\n").find("line 2") != std::string::npos);
    CHECK(message("[experiment]\nablations = XYZ\n") != "no error");
    CHECK(message("[sweep]\naxis = lr\n") != "no error");
}

TEST_CASE("inconsistent settings are config errors") {
    CHECK_THROWS_AS(parse("[model]\nheads = 5\n"), ConfigError);
    CHECK_THROWS_AS(parse("[data]\np1 = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("[train]\nbatch_size = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("[train]\nlr = -1\n"), ConfigError);
    RunConfig c;
    c.seeds.clear();
    CHECK_THROWS_AS(c.finalize(), ConfigError);
}

TEST_CASE("to_ini echoes every field and parses back to the same config") {
    RunConfig c = parse(R"(
[model]
d1 = 12
heads = 4
lambda = 0.995
write_before_backward = false
shadow_label_embedding = true
stack_depth = 2
[data]
p1 = 0.05
seed = 17
[train]
lr = 0.003
epochs = 3
[experiment]
seeds = 4, 5
ablations = RMA, HMA
save_checkpoints = false
[sweep]
axis = p_env
values = 0.2:0.1, 0:0.02
)");
    c.finalize();
    const std::string echo = to_ini(c);
    RunConfig back = parse(echo);
    back.finalize();
    CHECK(to_ini(back) == echo);
    CHECK(back.model.d1 == 12);
    CHECK(back.model.lambda == 0.995f);
    CHECK_FALSE(back.model.write_before_backward);
    CHECK(back.model.shadow_label_embedding);
    CHECK(back.data.seed == std::optional<std::uint64_t>(17));
    CHECK(back.train.optimizer.learning_rate == 0.003f);
    CHECK(back.sweep_values == std::vector<std::string>{"0.2:0.1", "0:0.02"});
    CHECK_FALSE(back.save_checkpoints);
    // Every key is spelled out.
    for (const char* key : {"hidden", "d2", "m1", "m2", "semantic_std", "label_noise", "n_per_env", "momentum",
                            "batch_size", "out", "share_blocks"}) {
        CHECK(echo.find(std::string(key) + " = ") != std::string::npos);
    }
}
