#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "test_util.hpp"
#include "unimix/pipeline.hpp"

using namespace unimix;

namespace {

// Tiny linearly separable two-class world: label = intensity above 0.5.
DomainDataset separable_dataset(std::size_t scans, std::size_t points,
                                std::uint64_t seed, DomainTag tag = DomainTag::source) {
    Rng rng(seed);
    DomainDataset ds;
    ds.tag = tag;
    for (std::size_t s = 0; s < scans; ++s) {
        LabeledScan scan;
        scan.labels.num_classes = 2;
        scan.labels.ignore_id = 255;
        for (std::size_t i = 0; i < points; ++i) {
            bool high = rng.bernoulli(0.5);
            Point p;
            p.x = static_cast<float>(rng.uniform(-10, 10));
            p.y = static_cast<float>(rng.uniform(-10, 10));
            p.z = static_cast<float>(rng.uniform(0, 4));
            p.intensity = static_cast<float>(high ? rng.uniform(0.7, 1.0)
                                                  : rng.uniform(0.0, 0.3));
            scan.cloud.points.push_back(p);
            scan.labels.labels.push_back(high ? 1 : 0);
        }
        ds.samples.push_back(std::move(scan));
    }
    return ds;
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.num_classes = 2;
    cfg.ignore_id = 255;
    cfg.hidden1 = 8;
    cfg.hidden2 = 8;
    cfg.warmup_epochs = 2;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 2;
    cfg.batch_size = 2;
    cfg.learning_rate = 0.05;
    return cfg;
}

RunConfig synth_config() {
    RunConfig cfg;
    cfg.seed = 11;
    cfg.num_classes = 6;
    cfg.ignore_id = 0;
    cfg.warmup_epochs = 2;
    cfg.stage1_epochs = 1;
    cfg.stage2_epochs = 1;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.05;
    return cfg;
}

std::pair<DomainDataset, DomainDataset> small_synth_pair(std::size_t count,
                                                         std::uint64_t seed,
                                                         double points_scale = 0.25) {
    SceneSpec source_spec = default_source_spec();
    SceneSpec target_spec = default_target_spec();
    source_spec.points_scale = points_scale;
    target_spec.points_scale = points_scale;
    Rng rng(seed);
    return generate_domain_pair(source_spec, target_spec, default_target_weather(),
                                count, rng);
}

}  // namespace

TEST_CASE("warmup with zero epochs returns the seeded initialization") {
    DomainDataset source = separable_dataset(4, 50, 1);
    RunConfig cfg = tiny_config();
    cfg.warmup_epochs = 0;
    ModelParams params = warmup(source, cfg);

    Rng init_rng(derive_seed(cfg.seed, "init"));
    ModelParams expected = init_model(FeatureSpec{}.count(), cfg.hidden1, cfg.hidden2,
                                      cfg.num_classes, init_rng);
    CHECK(params == expected);
}

TEST_CASE("warmup loss decreases monotonically on separable data") {
    DomainDataset source = separable_dataset(6, 80, 2);
    RunConfig cfg = tiny_config();
    FeatureSpec spec;
    double prev = 2.0;
    for (int epochs = 1; epochs <= 5; ++epochs) {
        cfg.warmup_epochs = epochs;
        ModelParams params = warmup(source, cfg);
        double total = 0.0;
        for (std::size_t i = 0; i < source.size(); ++i) {
            total += dice_loss(forward(params, featurize(source.cloud(i), spec)),
                               *source.labels_for_training(i))
                         .loss;
        }
        double mean = total / source.size();
        CHECK(mean < prev);
        prev = mean;
    }
}

TEST_CASE("warmup rejects empty and unlabeled datasets") {
    RunConfig cfg = tiny_config();
    CHECK_THROWS_AS(warmup(DomainDataset{}, cfg), std::invalid_argument);
    DomainDataset target = separable_dataset(2, 20, 3, DomainTag::target);
    CHECK_THROWS_AS(warmup(target, cfg), std::invalid_argument);
}

TEST_CASE("stage 1 with zero epochs hands back the warm-up parameters") {
    DomainDataset source = separable_dataset(4, 40, 4);
    RunConfig cfg = tiny_config();
    cfg.stage1_epochs = 0;
    Stage1Result r = train_stage1(source, cfg);
    CHECK(r.student == r.warmup_params);
    CHECK(r.teacher == r.warmup_params);
    CHECK(r.warmup_params == warmup(source, cfg));
    CHECK(r.report.batches.empty());
}

TEST_CASE("stage 1 is bit-reproducible under a fixed seed") {
    DomainDataset source = separable_dataset(6, 60, 5);
    RunConfig cfg = tiny_config();
    Stage1Result a = train_stage1(source, cfg);
    Stage1Result b = train_stage1(source, cfg);
    CHECK(a.student == b.student);
    CHECK(a.teacher == b.teacher);

    std::ostringstream ra, rb;
    serialize_report(a.report, ra);
    serialize_report(b.report, rb);
    CHECK(ra.str() == rb.str());
}

TEST_CASE("stage 1 logs bounded components that sum to the total") {
    DomainDataset source = separable_dataset(6, 60, 6);
    RunConfig cfg = tiny_config();
    Stage1Result r = train_stage1(source, cfg);
    REQUIRE_FALSE(r.report.batches.empty());
    for (const BatchRecord& rec : r.report.batches) {
        CHECK(rec.loss_fwd >= 0.0);
        CHECK(rec.loss_fwd <= 1.0);
        CHECK(rec.loss_rev >= 0.0);
        CHECK(rec.loss_rev <= 1.0);
        CHECK(std::abs(rec.total - (rec.loss_fwd + rec.loss_rev)) < 1e-12);
    }
    CHECK(static_cast<int>(r.report.epoch_mean_loss.size()) == cfg.stage1_epochs);
}

TEST_CASE("stage 1 refuses target-tagged data") {
    DomainDataset target = separable_dataset(4, 40, 7, DomainTag::target);
    RunConfig cfg = tiny_config();
    CHECK_THROWS_AS(train_stage1(target, cfg), std::invalid_argument);
}

TEST_CASE("stage 2 with zero epochs returns its initialization") {
    DomainDataset source = separable_dataset(4, 40, 8);
    DomainDataset target = separable_dataset(4, 40, 9, DomainTag::target);
    RunConfig cfg = tiny_config();
    cfg.stage2_epochs = 0;
    ModelParams init = warmup(source, cfg);
    Stage2Result r = train_stage2(source, target, init, cfg);
    CHECK(r.student == init);
    CHECK(r.teacher == init);
}

TEST_CASE("stage 2 rejects empty target") {
    DomainDataset source = separable_dataset(2, 20, 10);
    RunConfig cfg = tiny_config();
    ModelParams init = warmup(source, cfg);
    CHECK_THROWS_AS(train_stage2(source, DomainDataset{}, init, cfg),
                    std::invalid_argument);
}

TEST_CASE("self-adaptation with a perfect teacher stays at the loss floor") {
    // target drawn from the same separable distribution; init classifies it
    // perfectly, so both stage-2 loss components sit near zero immediately
    DomainDataset source = separable_dataset(6, 60, 11);
    DomainDataset target = separable_dataset(6, 60, 12, DomainTag::target);
    RunConfig cfg = tiny_config();
    cfg.use_bridge = false;  // mix the clear source directly
    cfg.stage2_epochs = 1;
    cfg.learning_rate = 0.001;

    // an exact thresholding classifier over the default features
    ModelParams init;
    Layer l1{Matrix(2, 7), {-0.5, 0.5}};
    l1.weights(0, 3) = 1.0;  // feature 3 = intensity
    l1.weights(1, 3) = -1.0;
    Layer l2{Matrix(2, 2), {0.0, 0.0}};
    l2.weights(0, 0) = 1.0;
    l2.weights(1, 1) = 1.0;
    Layer l3{Matrix(2, 2), {0.0, 0.0}};
    l3.weights(0, 0) = -200.0;
    l3.weights(0, 1) = 200.0;
    l3.weights(1, 0) = 200.0;
    l3.weights(1, 1) = -200.0;
    init.layers = {l1, l2, l3};

    Stage2Result r = train_stage2(source, target, init, cfg);
    for (const BatchRecord& rec : r.report.batches) {
        CHECK(rec.loss_fwd < 0.05);
        CHECK(rec.loss_rev < 0.05);
    }
}

TEST_CASE("pseudo labels drift with the stage-2 teacher across epochs") {
    auto [source, target] = small_synth_pair(8, 101);
    RunConfig cfg = synth_config();
    cfg.stage2_epochs = 1;
    ModelParams init = warmup(source, cfg);
    Stage2Result short_run = train_stage2(source, target, init, cfg);
    cfg.stage2_epochs = 5;
    Stage2Result long_run = train_stage2(source, target, init, cfg);

    FeatureSpec spec;
    LabelArray after_one = pseudo_labels(short_run.teacher, target.cloud(0), spec, 6, 0);
    LabelArray after_five = pseudo_labels(long_run.teacher, target.cloud(0), spec, 6, 0);
    CHECK(after_one.labels != after_five.labels);
}

TEST_CASE("evaluate scores an oracle model at miou 1 and uniform at the tie floor") {
    DomainDataset data = separable_dataset(3, 100, 13);

    // oracle: the hand-built separable classifier from the model tests, here
    // reconstructed over the full default feature set (intensity is index 3)
    ModelParams oracle;
    Layer l1{Matrix(2, 7), {-0.5, 0.5}};
    l1.weights(0, 3) = 1.0;
    l1.weights(1, 3) = -1.0;
    Layer l2{Matrix(2, 2), {0.0, 0.0}};
    l2.weights(0, 0) = 1.0;
    l2.weights(1, 1) = 1.0;
    Layer l3{Matrix(2, 2), {0.0, 0.0}};
    l3.weights(0, 0) = -200.0;
    l3.weights(0, 1) = 200.0;
    l3.weights(1, 0) = 200.0;
    l3.weights(1, 1) = -200.0;
    oracle.layers = {l1, l2, l3};

    EvalResult perfect = evaluate(oracle, data, FeatureSpec{}, 2, 255);
    CHECK(perfect.miou_value.value() == 1.0);

    // zero model: uniform probabilities, ties resolve to class 0
    ModelParams uniform;
    Layer z1{Matrix(4, 7), std::vector<double>(4, 0.0)};
    Layer z2{Matrix(4, 4), std::vector<double>(4, 0.0)};
    Layer z3{Matrix(2, 4), std::vector<double>(2, 0.0)};
    uniform.layers = {z1, z2, z3};
    EvalResult tied = evaluate(uniform, data, FeatureSpec{}, 2, 255);
    // balanced data, everything predicted class 0: IoU(0)=0.5, IoU(1)=0
    CHECK(*tied.per_class_iou[0] == Catch::Approx(0.5).margin(0.03));
    CHECK(*tied.per_class_iou[1] == 0.0);
    CHECK(*tied.miou_value ==
          Catch::Approx((*tied.per_class_iou[0] + *tied.per_class_iou[1]) / 2.0));
}

TEST_CASE("stage-2 teacher starts from the stage-1 student exactly") {
    auto [source, target] = small_synth_pair(6, 102);
    RunConfig cfg = synth_config();
    Stage1Result s1 = train_stage1(source, cfg);
    cfg.stage2_epochs = 0;
    Stage2Result s2 = train_stage2(source, target, s1.student, cfg);
    CHECK(s2.student == s1.student);
    CHECK(s2.teacher == s1.student);
}

TEST_CASE("full pipeline run is deterministic end to end") {
    auto [source, target] = small_synth_pair(6, 103);
    RunConfig cfg = synth_config();
    Stage1Result a1 = train_stage1(source, cfg);
    Stage2Result a2 = train_stage2(source, target, a1.student, cfg);
    Stage1Result b1 = train_stage1(source, cfg);
    Stage2Result b2 = train_stage2(source, target, b1.student, cfg);
    CHECK(a2.student == b2.student);
    std::ostringstream ra, rb;
    serialize_report(a2.report, ra);
    serialize_report(b2.report, rb);
    CHECK(ra.str() == rb.str());
}

TEST_CASE("source-only model degrades on the adverse target") {
    // the domain gap the pipeline is built to close: train on clear source,
    // compare held-out clear-source scans against foggy shifted-target scans
    auto [source, target] = small_synth_pair(16, 104, 0.5);
    DomainDataset train_split, heldout_split;
    train_split.tag = heldout_split.tag = DomainTag::source;
    for (std::size_t i = 0; i < source.size(); ++i) {
        (i < 12 ? train_split : heldout_split).samples.push_back(source.samples[i]);
    }
    RunConfig cfg = synth_config();
    cfg.warmup_epochs = 6;
    ModelParams params = warmup(train_split, cfg);
    EvalResult on_source = evaluate(params, heldout_split, FeatureSpec{}, 6, 0);
    EvalResult on_target = evaluate(params, target, FeatureSpec{}, 6, 0);
    REQUIRE(on_source.miou_value.has_value());
    REQUIRE(on_target.miou_value.has_value());
    CHECK(*on_target.miou_value < *on_source.miou_value);
}

TEST_CASE("stage reports can carry per-epoch evaluation snapshots") {
    auto [source, target] = small_synth_pair(4, 105);
    RunConfig cfg = synth_config();
    cfg.stage2_epochs = 2;
    ModelParams init = warmup(source, cfg);
    Stage2Result r = train_stage2(source, target, init, cfg, FeatureSpec{}, &target);
    REQUIRE(r.report.miou_snapshots.size() == 2);
    for (const auto& [epoch, value] : r.report.miou_snapshots) {
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);
    }
    std::ostringstream os;
    serialize_report(r.report, os);
    CHECK(os.str().find("miou=") != std::string::npos);
}

TEST_CASE("report serialization is stable and excludes wall time") {
    StageReport report;
    report.stage = "stage1";
    report.seed = 5;
    report.epochs = 1;
    report.batches.push_back({0, 0, 0.25, 0.5, 0.75});
    report.epoch_mean_loss.push_back(0.75);
    report.wall_seconds = 123.456;
    std::ostringstream os;
    serialize_report(report, os);
    std::string text = os.str();
    CHECK(text.find("stage=stage1 seed=5 epochs=1") != std::string::npos);
    CHECK(text.find("loss_fwd=0.25") != std::string::npos);
    CHECK(text.find("123.456") == std::string::npos);
}
