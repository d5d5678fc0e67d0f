#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "unimix/config.hpp"

using namespace unimix;

TEST_CASE("config defaults carry the full-scale training recipe") {
    RunConfig cfg;
    CHECK(cfg.learning_rate == 0.001);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.warmup_epochs == 10);
    CHECK(cfg.stage1_epochs == 10);
    CHECK(cfg.stage2_epochs == 50);
    CHECK(cfg.delta_theta == Catch::Approx(M_PI));
    CHECK(cfg.delta_rho_frac == 0.5);
    CHECK(cfg.delta_z_frac == 0.5);
    CHECK(cfg.delta_i_frac == 0.5);
    CHECK(cfg.rain_rate == 0.5);
    CHECK(cfg.snow_rate == 0.5);
    CHECK(cfg.light_fog_alphas == std::vector<double>{0.005, 0.01, 0.02, 0.03, 0.06});
    CHECK(cfg.dense_fog_alphas == std::vector<double>{0.1, 0.12, 0.15, 0.2});
}

TEST_CASE("config parses sections, comments and lists") {
    std::string text = R"(
# run setup
[run]
seed = 42
out_dir = /tmp/x

[train]
stage1_epochs = 3
learning_rate = 0.01
bridge_labels = ground_truth

[mix]
operator_policy = compose_all
delta_theta = 1.5

[weather]
dense_fog_alphas = 0.1, 0.2
wet_ground = true
)";
    RunConfig cfg = parse_config_text(text);
    CHECK(cfg.seed == 42);
    CHECK(cfg.out_dir == "/tmp/x");
    CHECK(cfg.stage1_epochs == 3);
    CHECK(cfg.learning_rate == 0.01);
    CHECK(cfg.bridge_labels == BridgeLabelSource::ground_truth);
    CHECK(cfg.operator_policy == OperatorPolicy::compose_all);
    CHECK(cfg.delta_theta == 1.5);
    CHECK(cfg.dense_fog_alphas == std::vector<double>{0.1, 0.2});
    CHECK(cfg.wet_ground);
}

TEST_CASE("config rejects unknown keys") {
    CHECK_THROWS_WITH(parse_config_text("[train]\nlerning_rate = 0.1\n"),
                      Catch::Matchers::ContainsSubstring("train.lerning_rate"));
}

TEST_CASE("config validates ranges") {
    CHECK_THROWS_AS(parse_config_text("[train]\nbatch_size = 0\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[train]\nlearning_rate = 0\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[train]\nema_decay = 1.5\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[mix]\ndelta_rho_frac = 0\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[mix]\ndelta_theta = 7\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[train]\nstage2_epochs = -1\n"), std::runtime_error);
}

TEST_CASE("config rejects malformed values") {
    CHECK_THROWS_AS(parse_config_text("[train]\nbatch_size twelve\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[weather]\nwet_ground = maybe\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[mix]\noperator_policy = shuffle\n"), std::runtime_error);
}

TEST_CASE("print_config emits the resolved values") {
    RunConfig cfg;
    cfg.seed = 99;
    std::ostringstream os;
    print_config(cfg, os);
    CHECK(os.str().find("seed=99") != std::string::npos);
    CHECK(os.str().find("lr=0.001") != std::string::npos);
}
