// The two-stage teacher-student pipeline: source warm-up, Source-to-Bridge
// stage 1, Bridge-to-Target stage 2, and the DG/UDA evaluation points.
//
// Stage 1 trains the student on both directions of source<->bridge mixing
// (bridge scans regenerated with a fresh weather draw per scan per epoch);
// stage 2 initializes its teacher and student from the stage-1 student and
// trains on bridge<->target mixing with teacher pseudo-labels standing in
// for the unavailable target labels. All sub-seeds derive from the config
// seed by fixed purpose strings, so a full run is reproducible end to end.

#pragma once

#include <chrono>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unimix/cloud.hpp"
#include "unimix/config.hpp"
#include "unimix/metrics.hpp"
#include "unimix/mixing.hpp"
#include "unimix/model.hpp"
#include "unimix/rng.hpp"
#include "unimix/synth.hpp"
#include "unimix/weather.hpp"

namespace unimix {

struct BatchRecord {
    int epoch = 0;
    int batch = 0;
    double loss_fwd = 0.0;  // source->bridge (stage 1) or bridge->target (stage 2)
    double loss_rev = 0.0;
    double total = 0.0;
};

struct StageReport {
    std::string stage;
    std::uint64_t seed = 0;
    int epochs = 0;
    std::vector<BatchRecord> batches;
    std::vector<double> epoch_mean_loss;
    std::vector<std::pair<int, double>> miou_snapshots;
    double wall_seconds = 0.0;  // informational; never serialized

    void check() const {
        if (static_cast<int>(epoch_mean_loss.size()) != epochs)
            throw std::runtime_error("stage report: epoch count mismatch");
        for (const BatchRecord& r : batches)
            if (!std::isfinite(r.total))
                throw std::runtime_error("stage report: non-finite loss");
    }
};

// Line-delimited structured text, one record per batch. Deliberately
// excludes wall time so reruns with the same seed serialize byte-identical.
inline void serialize_report(const StageReport& report, std::ostream& os) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "stage=%s seed=%llu epochs=%d\n",
                  report.stage.c_str(),
                  static_cast<unsigned long long>(report.seed), report.epochs);
    os << buf;
    for (const BatchRecord& r : report.batches) {
        std::snprintf(buf, sizeof(buf),
                      "epoch=%d batch=%d loss_fwd=%.17g loss_rev=%.17g total=%.17g\n",
                      r.epoch, r.batch, r.loss_fwd, r.loss_rev, r.total);
        os << buf;
    }
    for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "epoch=%zu mean_loss=%.17g\n", e,
                      report.epoch_mean_loss[e]);
        os << buf;
    }
    for (const auto& [epoch, value] : report.miou_snapshots) {
        std::snprintf(buf, sizeof(buf), "epoch=%d miou=%.17g\n", epoch, value);
        os << buf;
    }
}

struct EvalResult {
    ConfusionMatrix cm;
    std::vector<std::optional<double>> per_class_iou;
    std::optional<double> miou_value;
};

inline EvalResult evaluate(const ModelParams& model, const DomainDataset& data,
                           const FeatureSpec& spec, std::uint16_t num_classes,
                           std::uint16_t ignore_id) {
    EvalResult out;
    out.cm = ConfusionMatrix(num_classes, ignore_id);
    for (std::size_t i = 0; i < data.size(); ++i) {
        LabelArray pred = pseudo_labels(model, data.cloud(i), spec, num_classes,
                                        static_cast<std::uint16_t>(ignore_id));
        accumulate(out.cm, pred, data.labels_for_eval(i));
    }
    out.per_class_iou = iou(out.cm);
    out.miou_value = miou(out.cm);
    return out;
}

namespace detail {

inline ModelParams zero_like(const ModelParams& params) {
    ModelParams z = params;
    for (Layer& layer : z.layers) {
        std::fill(layer.weights.data.begin(), layer.weights.data.end(), 0.0);
        std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
    }
    return z;
}

inline void add_in_place(ModelParams& acc, const ModelParams& g) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        for (std::size_t k = 0; k < acc.layers[l].weights.data.size(); ++k)
            acc.layers[l].weights.data[k] += g.layers[l].weights.data[k];
        for (std::size_t k = 0; k < acc.layers[l].biases.size(); ++k)
            acc.layers[l].biases[k] += g.layers[l].biases[k];
    }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    return idx;
}

// Applies the configured operator policy bidirectionally. uniform_choice
// draws one kind per call; compose_all chains all three, each step mixing
// the previous step's outputs.
inline MixedPair apply_mix_policy(const PointCloud& cloud_s, const LabelArray& labels_s,
                                  const PointCloud& cloud_t, const LabelArray& labels_t,
                                  OperatorPolicy policy, const MixConfig& cfg,
                                  Rng& rng) {
    auto kind_of = [](OperatorPolicy p) {
        switch (p) {
            case OperatorPolicy::fixed_spatial: return MixKind::spatial;
            case OperatorPolicy::fixed_intensity: return MixKind::intensity;
            case OperatorPolicy::fixed_semantic: return MixKind::semantic;
            default: return MixKind::spatial;
        }
    };
    if (policy == OperatorPolicy::uniform_choice) {
        MixKind kind = static_cast<MixKind>(rng.uniform_int(3));
        return mix_bidirectional(cloud_s, labels_s, cloud_t, labels_t, kind, cfg, rng);
    }
    if (policy == OperatorPolicy::compose_all) {
        MixedPair acc = mix_bidirectional(cloud_s, labels_s, cloud_t, labels_t,
                                          MixKind::spatial, cfg, rng);
        for (MixKind kind : {MixKind::intensity, MixKind::semantic}) {
            acc = mix_bidirectional(acc.cloud_s_to_t, acc.labels_s_to_t,
                                    acc.cloud_t_to_s, acc.labels_t_to_s, kind, cfg,
                                    rng);
        }
        return acc;
    }
    return mix_bidirectional(cloud_s, labels_s, cloud_t, labels_t, kind_of(policy),
                             cfg, rng);
}

struct StepLoss {
    double fwd = 0.0;
    double rev = 0.0;
};

// Loss and gradient of one mixed pair through the student; gradients are
// summed into acc.
inline StepLoss mixed_pair_step(const ModelParams& student, const FeatureSpec& spec,
                                const MixedPair& mixed, ModelParams& acc) {
    StepLoss loss;
    Matrix f_fwd = featurize(mixed.cloud_s_to_t, spec);
    add_in_place(acc, gradient(student, f_fwd, mixed.labels_s_to_t, 1.0, &loss.fwd));

    Matrix f_rev = featurize(mixed.cloud_t_to_s, spec);
    add_in_place(acc, gradient(student, f_rev, mixed.labels_t_to_s, 1.0, &loss.rev));
    return loss;
}

}  // namespace detail

// Source-only training from scratch; returns the parameters used to
// initialize both student and teacher.
inline ModelParams warmup(const DomainDataset& source, const RunConfig& cfg,
                          const FeatureSpec& spec = {}) {
    if (source.size() == 0) throw std::invalid_argument("warmup: empty dataset");
    Rng init_rng(derive_seed(cfg.seed, "init"));
    ModelParams params = init_model(spec.count(), cfg.hidden1, cfg.hidden2,
                                    static_cast<std::size_t>(cfg.num_classes),
                                    init_rng);
    Rng rng(derive_seed(cfg.seed ^ source.shuffle_seed, "warmup"));
    for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
        std::vector<std::size_t> order = detail::shuffled_indices(source.size(), rng);
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            std::size_t end = std::min(order.size(), b + cfg.batch_size);
            ModelParams acc = detail::zero_like(params);
            for (std::size_t k = b; k < end; ++k) {
                std::size_t i = order[k];
                auto labels = source.labels_for_training(i);
                if (!labels)
                    throw std::invalid_argument("warmup: dataset has no training labels");
                Matrix features = featurize(source.cloud(i), spec);
                detail::add_in_place(acc, gradient(params, features, *labels));
            }
            sgd_step(params, acc, cfg.learning_rate / static_cast<double>(end - b));
        }
    }
    return params;
}

struct Stage1Result {
    ModelParams warmup_params;
    ModelParams student;
    ModelParams teacher;
    StageReport report;
};

// Algorithm: per batch item, simulate a bridge scan from the source scan,
// pseudo-label it with the teacher (or take the simulation's own labels,
// per config), mix bidirectionally, and train the student on both mixed
// directions; the teacher follows by EMA.
inline Stage1Result train_stage1(const DomainDataset& source, const RunConfig& cfg,
                                 const FeatureSpec& spec = {},
                                 const DomainDataset* eval_data = nullptr) {
    if (source.size() == 0) throw std::invalid_argument("train_stage1: empty dataset");
    auto t0 = std::chrono::steady_clock::now();
    Stage1Result out;
    out.warmup_params = warmup(source, cfg, spec);
    out.student = out.warmup_params;
    out.teacher = out.warmup_params;
    out.report.stage = "stage1";
    out.report.seed = cfg.seed;
    out.report.epochs = cfg.stage1_epochs;

    const MixConfig mix_cfg = MixConfig::from_config(cfg);
    const BridgeComposition comp = BridgeComposition::from_config(cfg);
    WeatherParams proto = WeatherParams::from_config(cfg, WeatherKind::clear);
    Rng rng(derive_seed(cfg.seed ^ source.shuffle_seed, "stage1"));
    std::vector<BridgeSample> bridge_cache(cfg.regenerate_bridge ? 0 : source.size());
    std::vector<std::uint8_t> cached(source.size(), 0);

    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
        std::vector<std::size_t> order = detail::shuffled_indices(source.size(), rng);
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            std::size_t end = std::min(order.size(), b + cfg.batch_size);
            ModelParams acc = detail::zero_like(out.student);
            double batch_fwd = 0.0, batch_rev = 0.0;
            for (std::size_t k = b; k < end; ++k) {
                std::size_t i = order[k];
                auto labels = source.labels_for_training(i);
                if (!labels)
                    throw std::invalid_argument("train_stage1: dataset has no training labels");

                BridgeSample bridge;
                if (cfg.regenerate_bridge) {
                    Rng scan_rng(derive_seed(cfg.seed, "bridge-s1",
                                             static_cast<std::uint64_t>(epoch) * source.size() + i));
                    bridge = generate_bridge(source.cloud(i), *labels, comp, proto, scan_rng);
                } else {
                    if (!cached[i]) {
                        Rng scan_rng(derive_seed(cfg.seed, "bridge-s1", i));
                        bridge_cache[i] =
                            generate_bridge(source.cloud(i), *labels, comp, proto, scan_rng);
                        cached[i] = 1;
                    }
                    bridge = bridge_cache[i];
                }

                LabelArray bridge_labels =
                    cfg.bridge_labels == BridgeLabelSource::teacher
                        ? pseudo_labels(out.teacher, bridge.cloud, spec,
                                        static_cast<std::uint16_t>(cfg.num_classes),
                                        static_cast<std::uint16_t>(cfg.ignore_id),
                                        cfg.pseudo_label_threshold > 0.0
                                            ? std::optional<double>(cfg.pseudo_label_threshold)
                                            : std::nullopt)
                        : bridge.labels;

                MixedPair mixed = detail::apply_mix_policy(
                    source.cloud(i), *labels, bridge.cloud, bridge_labels,
                    cfg.operator_policy, mix_cfg, rng);
                detail::StepLoss loss =
                    detail::mixed_pair_step(out.student, spec, mixed, acc);
                batch_fwd += loss.fwd;
                batch_rev += loss.rev;
            }
            double inv = 1.0 / static_cast<double>(end - b);
            sgd_step(out.student, acc, cfg.learning_rate * inv);
            ema_update(out.teacher, out.student, cfg.ema_decay);
            BatchRecord rec;
            rec.epoch = epoch;
            rec.batch = static_cast<int>(b / cfg.batch_size);
            rec.loss_fwd = batch_fwd * inv;
            rec.loss_rev = batch_rev * inv;
            rec.total = rec.loss_fwd + rec.loss_rev;
            if (!std::isfinite(rec.total))
                throw std::runtime_error("train_stage1: non-finite loss at epoch " +
                                         std::to_string(epoch));
            out.report.batches.push_back(rec);
            epoch_loss += rec.total;
            ++epoch_batches;
        }
        out.report.epoch_mean_loss.push_back(
            epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0);
        if (eval_data) {
            EvalResult ev = evaluate(out.student, *eval_data, spec,
                                     static_cast<std::uint16_t>(cfg.num_classes),
                                     static_cast<std::uint16_t>(cfg.ignore_id));
            out.report.miou_snapshots.push_back({epoch, ev.miou_value.value_or(0.0)});
        }
    }
    out.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.report.check();
    return out;
}

struct Stage2Result {
    ModelParams student;
    ModelParams teacher;
    StageReport report;
};

// Bridge-to-Target adaptation: the bridge stream re-simulates weather from
// the clear source per epoch (or mixes the clear source directly when
// use_bridge is off); the target stream never exposes labels and is
// supervised by teacher pseudo-labels alone.
inline Stage2Result train_stage2(const DomainDataset& source, const DomainDataset& target,
                                 const ModelParams& init, const RunConfig& cfg,
                                 const FeatureSpec& spec = {},
                                 const DomainDataset* eval_data = nullptr) {
    if (target.size() == 0) throw std::invalid_argument("train_stage2: empty target");
    if (source.size() == 0) throw std::invalid_argument("train_stage2: empty source");
    auto t0 = std::chrono::steady_clock::now();
    Stage2Result out;
    out.student = init;
    out.teacher = init;
    out.report.stage = "stage2";
    out.report.seed = cfg.seed;
    out.report.epochs = cfg.stage2_epochs;

    const MixConfig mix_cfg = MixConfig::from_config(cfg);
    const BridgeComposition comp = BridgeComposition::from_config(cfg);
    WeatherParams proto = WeatherParams::from_config(cfg, WeatherKind::clear);
    Rng rng(derive_seed(cfg.seed ^ source.shuffle_seed ^ target.shuffle_seed, "stage2"));
    std::vector<BridgeSample> bridge_cache(cfg.regenerate_bridge ? 0 : source.size());
    std::vector<std::uint8_t> cached(source.size(), 0);

    const std::size_t steps = std::min(source.size(), target.size());
    for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
        std::vector<std::size_t> source_order = detail::shuffled_indices(source.size(), rng);
        std::vector<std::size_t> target_order = detail::shuffled_indices(target.size(), rng);
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (std::size_t b = 0; b < steps; b += cfg.batch_size) {
            std::size_t end = std::min(steps, b + cfg.batch_size);
            ModelParams acc = detail::zero_like(out.student);
            double batch_fwd = 0.0, batch_rev = 0.0;
            for (std::size_t k = b; k < end; ++k) {
                std::size_t si = source_order[k];
                std::size_t ti = target_order[k];
                auto source_labels = source.labels_for_training(si);
                if (!source_labels)
                    throw std::invalid_argument("train_stage2: source has no labels");

                PointCloud bridge_cloud;
                LabelArray bridge_gt;
                if (cfg.use_bridge) {
                    BridgeSample bridge;
                    if (cfg.regenerate_bridge) {
                        Rng scan_rng(derive_seed(cfg.seed, "bridge-s2",
                                                 static_cast<std::uint64_t>(epoch) * source.size() + si));
                        bridge = generate_bridge(source.cloud(si), *source_labels, comp,
                                                 proto, scan_rng);
                    } else {
                        if (!cached[si]) {
                            Rng scan_rng(derive_seed(cfg.seed, "bridge-s2", si));
                            bridge_cache[si] = generate_bridge(source.cloud(si),
                                                               *source_labels, comp,
                                                               proto, scan_rng);
                            cached[si] = 1;
                        }
                        bridge = bridge_cache[si];
                    }
                    bridge_cloud = std::move(bridge.cloud);
                    bridge_gt = std::move(bridge.labels);
                } else {
                    bridge_cloud = source.cloud(si);
                    bridge_gt = *source_labels;
                }

                LabelArray target_pseudo = pseudo_labels(
                    out.teacher, target.cloud(ti), spec,
                    static_cast<std::uint16_t>(cfg.num_classes),
                    static_cast<std::uint16_t>(cfg.ignore_id),
                    cfg.pseudo_label_threshold > 0.0
                        ? std::optional<double>(cfg.pseudo_label_threshold)
                        : std::nullopt);

                MixedPair mixed = detail::apply_mix_policy(
                    bridge_cloud, bridge_gt, target.cloud(ti), target_pseudo,
                    cfg.operator_policy, mix_cfg, rng);
                detail::StepLoss loss =
                    detail::mixed_pair_step(out.student, spec, mixed, acc);
                batch_fwd += loss.fwd;
                batch_rev += loss.rev;
            }
            double inv = 1.0 / static_cast<double>(end - b);
            sgd_step(out.student, acc, cfg.learning_rate * inv);
            ema_update(out.teacher, out.student, cfg.ema_decay);
            BatchRecord rec;
            rec.epoch = epoch;
            rec.batch = static_cast<int>(b / cfg.batch_size);
            rec.loss_fwd = batch_fwd * inv;
            rec.loss_rev = batch_rev * inv;
            rec.total = rec.loss_fwd + rec.loss_rev;
            if (!std::isfinite(rec.total))
                throw std::runtime_error("train_stage2: non-finite loss at epoch " +
                                         std::to_string(epoch));
            out.report.batches.push_back(rec);
            epoch_loss += rec.total;
            ++epoch_batches;
        }
        out.report.epoch_mean_loss.push_back(
            epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0);
        if (eval_data) {
            EvalResult ev = evaluate(out.student, *eval_data, spec,
                                     static_cast<std::uint16_t>(cfg.num_classes),
                                     static_cast<std::uint16_t>(cfg.ignore_id));
            out.report.miou_snapshots.push_back({epoch, ev.miou_value.value_or(0.0)});
        }
    }
    out.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.report.check();
    return out;
}

}  // namespace unimix
