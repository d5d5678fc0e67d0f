// Deterministic synthetic LiDAR-like scenes: a flat ground disc plus boxes
// (buildings, cars), vertical cylinders (poles) and ellipsoid blobs
// (vegetation), with per-class intensity draws. Two SceneSpec styles plus a
// weather pass give a labeled source/target domain pair with a measurable
// gap, so the full pipeline runs without external datasets.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "unimix/cloud.hpp"
#include "unimix/rng.hpp"
#include "unimix/weather.hpp"

namespace unimix {

// Synthetic class ids; 0 is the ignore id.
enum SynthClass : std::uint16_t {
    synth_ignore = 0,
    synth_ground = 1,
    synth_building = 2,
    synth_pole = 3,
    synth_car = 4,
    synth_vegetation = 5,
};

inline std::vector<std::string> synth_class_names() {
    return {"ignore", "ground", "building", "pole", "car", "vegetation"};
}

struct ObjectRange {
    int lo = 0;
    int hi = 0;  // inclusive
};

struct SceneSpec {
    std::uint16_t num_classes = 6;
    std::uint16_t ignore_id = 0;
    double sensor_range = 25.0;  // m

    // per-class intensity statistics, indexed by SynthClass; means spaced so
    // intensity is the strongest clear-weather cue, and kept well above the
    // target style's -0.15 shift so no class vanishes under it
    std::vector<double> intensity_mean = {0.0, 0.35, 0.60, 0.95, 0.80, 0.45};
    std::vector<double> intensity_sigma = {0.0, 0.05, 0.05, 0.04, 0.04, 0.07};

    ObjectRange buildings{4, 7};
    ObjectRange poles{6, 10};
    ObjectRange cars{5, 8};
    ObjectRange vegetation{5, 8};
    double layout_density = 1.0;  // multiplies object counts

    int ground_points = 900;
    ObjectRange points_per_building{120, 200};
    ObjectRange points_per_pole{30, 60};
    ObjectRange points_per_car{60, 100};
    ObjectRange points_per_vegetation{60, 110};
    double points_scale = 1.0;  // multiplies all point budgets

    std::uint64_t seed = 0;

    void validate() const {
        if (intensity_mean.size() != num_classes || intensity_sigma.size() != num_classes)
            throw std::invalid_argument("scene spec: intensity stats must cover all classes");
        for (double s : intensity_sigma)
            if (s < 0.0) throw std::invalid_argument("scene spec: sigma must be >= 0");
        if (sensor_range <= 0.0)
            throw std::invalid_argument("scene spec: sensor range must be > 0");
    }
};

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline int draw_count(const ObjectRange& r, double scale, Rng& rng) {
    if (r.hi < r.lo) throw std::invalid_argument("scene spec: bad count range");
    int n = r.lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(r.hi - r.lo + 1)));
    return std::max(0, static_cast<int>(std::lround(n * scale)));
}

inline float intensity_draw(const SceneSpec& spec, std::uint16_t cls, Rng& rng) {
    return static_cast<float>(
        clamp01(rng.normal(spec.intensity_mean[cls], spec.intensity_sigma[cls])));
}

inline void add_point(PointCloud& cloud, LabelArray& labels, const SceneSpec& spec,
                      double x, double y, double z, std::uint16_t cls, Rng& rng) {
    double r = std::sqrt(x * x + y * y + z * z);
    if (r > spec.sensor_range) return;  // beyond the sensor limit: no return
    Point p;
    p.x = static_cast<float>(x);
    p.y = static_cast<float>(y);
    p.z = static_cast<float>(z);
    p.intensity = intensity_draw(spec, cls, rng);
    cloud.points.push_back(p);
    labels.labels.push_back(cls);
}

}  // namespace detail

inline std::pair<PointCloud, LabelArray> generate_scene(const SceneSpec& spec, Rng& rng) {
    spec.validate();
    PointCloud cloud;
    LabelArray labels;
    labels.num_classes = spec.num_classes;
    labels.ignore_id = spec.ignore_id;

    // ground disc, uniform in area, mild height ripple
    int n_ground = std::max(0, static_cast<int>(std::lround(spec.ground_points * spec.points_scale)));
    for (int i = 0; i < n_ground; ++i) {
        double r = spec.sensor_range * std::sqrt(rng.uniform01());
        double th = rng.uniform(-M_PI, M_PI);
        double z = rng.uniform(-0.05, 0.05);
        detail::add_point(cloud, labels, spec, r * std::cos(th), r * std::sin(th), z,
                          synth_ground, rng);
    }

    auto object_center = [&](double margin) {
        double r = rng.uniform(4.0, spec.sensor_range - margin);
        double th = rng.uniform(-M_PI, M_PI);
        return std::pair<double, double>{r * std::cos(th), r * std::sin(th)};
    };

    // buildings: tall boxes, points on the surface faces
    int n_buildings = detail::draw_count(spec.buildings, spec.layout_density, rng);
    for (int b = 0; b < n_buildings; ++b) {
        auto [cx, cy] = object_center(6.0);
        double w = rng.uniform(4.0, 9.0), d = rng.uniform(4.0, 9.0);
        double h = rng.uniform(4.0, 10.0);
        int n = detail::draw_count(spec.points_per_building, spec.points_scale, rng);
        for (int i = 0; i < n; ++i) {
            // walls only; roofs are rarely visible to a ground sensor
            double u = rng.uniform01(), v = rng.uniform01();
            int face = static_cast<int>(rng.uniform_int(4));
            double x = cx, y = cy;
            if (face == 0) x += w / 2, y += (v - 0.5) * d;
            else if (face == 1) x -= w / 2, y += (v - 0.5) * d;
            else if (face == 2) y += d / 2, x += (v - 0.5) * w;
            else y -= d / 2, x += (v - 0.5) * w;
            detail::add_point(cloud, labels, spec, x, y, u * h, synth_building, rng);
        }
    }

    // poles: thin vertical cylinders
    int n_poles = detail::draw_count(spec.poles, spec.layout_density, rng);
    for (int b = 0; b < n_poles; ++b) {
        auto [cx, cy] = object_center(2.0);
        double radius = rng.uniform(0.08, 0.2);
        double h = rng.uniform(3.0, 7.0);
        int n = detail::draw_count(spec.points_per_pole, spec.points_scale, rng);
        for (int i = 0; i < n; ++i) {
            double th = rng.uniform(-M_PI, M_PI);
            detail::add_point(cloud, labels, spec, cx + radius * std::cos(th),
                              cy + radius * std::sin(th), rng.uniform01() * h,
                              synth_pole, rng);
        }
    }

    // cars: low boxes
    int n_cars = detail::draw_count(spec.cars, spec.layout_density, rng);
    for (int b = 0; b < n_cars; ++b) {
        auto [cx, cy] = object_center(3.0);
        double w = rng.uniform(1.6, 2.0), d = rng.uniform(3.8, 4.8);
        double h = rng.uniform(1.3, 1.7);
        int n = detail::draw_count(spec.points_per_car, spec.points_scale, rng);
        for (int i = 0; i < n; ++i) {
            double x = cx + (rng.uniform01() - 0.5) * w;
            double y = cy + (rng.uniform01() - 0.5) * d;
            detail::add_point(cloud, labels, spec, x, y, rng.uniform01() * h,
                              synth_car, rng);
        }
    }

    // vegetation: ellipsoid blobs with a raised center
    int n_veg = detail::draw_count(spec.vegetation, spec.layout_density, rng);
    for (int b = 0; b < n_veg; ++b) {
        auto [cx, cy] = object_center(3.0);
        double rx = rng.uniform(1.0, 2.5), rz = rng.uniform(1.0, 3.0);
        double z0 = rng.uniform(1.0, 2.5);
        int n = detail::draw_count(spec.points_per_vegetation, spec.points_scale, rng);
        for (int i = 0; i < n; ++i) {
            double a = rng.normal(0.0, 0.45), b2 = rng.normal(0.0, 0.45);
            double c = rng.normal(0.0, 0.45);
            detail::add_point(cloud, labels, spec, cx + a * rx, cy + b2 * rx,
                              std::max(0.0, z0 + c * rz), synth_vegetation, rng);
        }
    }

    return {std::move(cloud), std::move(labels)};
}

// The default source style: clear weather, the intensity statistics above.
inline SceneSpec default_source_spec() { return SceneSpec{}; }

// The default target style: per-class intensity means shifted by -0.15 and
// doubled building density (the scene-level gap); dense fog alpha = 0.12 is
// applied on top by generate_domain_pair (the weather-level gap).
inline SceneSpec default_target_spec() {
    SceneSpec spec;
    for (std::size_t c = 1; c < spec.intensity_mean.size(); ++c)
        spec.intensity_mean[c] = detail::clamp01(spec.intensity_mean[c] - 0.15);
    spec.layout_density = 1.0;
    spec.buildings.lo *= 2;
    spec.buildings.hi *= 2;
    return spec;
}

inline WeatherParams default_target_weather() {
    WeatherParams w;
    w.kind = WeatherKind::dense_fog;
    w.alpha = 0.12;
    return w;
}

struct LabeledScan {
    PointCloud cloud;
    LabelArray labels;
};

enum class DomainTag { source, bridge, target };

// Ordered samples with a domain tag. Target samples hide their labels from
// the training path; evaluation uses the separate labeled accessor.
struct DomainDataset {
    std::vector<LabeledScan> samples;
    DomainTag tag = DomainTag::source;
    std::uint64_t shuffle_seed = 0;

    std::size_t size() const { return samples.size(); }

    const PointCloud& cloud(std::size_t i) const { return samples[i].cloud; }

    // Labels as visible to training: absent for target-tagged data.
    std::optional<LabelArray> labels_for_training(std::size_t i) const {
        if (tag == DomainTag::target) return std::nullopt;
        return samples[i].labels;
    }

    // Labels for evaluation only.
    const LabelArray& labels_for_eval(std::size_t i) const {
        return samples[i].labels;
    }
};

// Clear source scenes from source_spec; target scenes from target_spec
// passed through the weather simulator, labels retained for evaluation.
inline std::pair<DomainDataset, DomainDataset> generate_domain_pair(
    const SceneSpec& source_spec, const SceneSpec& target_spec,
    const WeatherParams& target_weather, std::size_t count, Rng& rng) {
    DomainDataset source, target;
    source.tag = DomainTag::source;
    target.tag = DomainTag::target;
    std::uint64_t base = rng.next_u64();
    for (std::size_t i = 0; i < count; ++i) {
        Rng scene_rng(derive_seed(base, "source-scene", i));
        auto [sc, sl] = generate_scene(source_spec, scene_rng);
        source.samples.push_back({std::move(sc), std::move(sl)});

        Rng target_rng(derive_seed(base, "target-scene", i));
        auto [tc, tl] = generate_scene(target_spec, target_rng);
        if (target_weather.kind == WeatherKind::clear) {
            target.samples.push_back({std::move(tc), std::move(tl)});
        } else {
            Rng weather_rng(derive_seed(base, "target-weather", i));
            BridgeSample sim;
            if (target_weather.kind == WeatherKind::rain ||
                target_weather.kind == WeatherKind::snow)
                sim = simulate_precipitation(tc, tl, target_weather, weather_rng);
            else
                sim = simulate_fog(tc, tl, target_weather, weather_rng);
            target.samples.push_back({std::move(sim.cloud), std::move(sim.labels)});
        }
    }
    return {std::move(source), std::move(target)};
}

}  // namespace unimix
