// Physically-motivated adverse-weather corruption of clear-weather scans.
//
// The received-power model P_R(R) = C_A * integral over [0, 2R/c] of
// P_T(t) * H(R - c t / 2) dt is evaluated numerically (received_power) and
// backs the closed forms used by the per-point simulators: two-way
// Beer-Lambert attenuation exp(-2 alpha R) for hard returns from solid
// objects, plus one stochastic soft return from airborne scatterers that
// wins when it is stronger than the attenuated hard return.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <vector>

#include "unimix/cloud.hpp"
#include "unimix/config.hpp"
#include "unimix/rng.hpp"

namespace unimix {

struct PulseModel {
    double c_a = 1.0;  // system constant
    double c = 1.0;    // propagation speed; normalized 1 for tests
    std::function<double(double)> pulse;     // P_T as a function of time
    std::function<double(double)> response;  // H as a function of range
    // Discontinuity locations, in time for the pulse and in range for the
    // response; the integrator splits at these so the trapezoidal rule
    // keeps its second-order convergence.
    std::vector<double> pulse_breakpoints;
    std::vector<double> response_breakpoints;

    // Rectangular pulse of amplitude p0 on [0, tau].
    static PulseModel rectangular(double p0, double tau, double c_a = 1.0,
                                  double c = 1.0) {
        if (tau <= 0.0) throw std::invalid_argument("pulse duration must be > 0");
        if (c_a <= 0.0) throw std::invalid_argument("system constant must be > 0");
        PulseModel m;
        m.c_a = c_a;
        m.c = c;
        m.pulse = [p0, tau](double t) { return (t >= 0.0 && t <= tau) ? p0 : 0.0; };
        m.response = [](double) { return 1.0; };
        m.pulse_breakpoints = {tau};
        return m;
    }
};

// Trapezoidal evaluation of the received-power integral, split piecewise at
// the model's breakpoints. `steps` is the total interval budget.
inline double received_power(const PulseModel& model, double range, int steps) {
    if (range <= 0.0) throw std::invalid_argument("received_power: range must be > 0");
    if (steps < 2) throw std::invalid_argument("received_power: steps must be >= 2");
    if (!model.pulse || !model.response)
        throw std::invalid_argument("received_power: pulse model incomplete");

    const double t_end = 2.0 * range / model.c;
    std::vector<double> cuts = {0.0, t_end};
    for (double tb : model.pulse_breakpoints)
        if (tb > 0.0 && tb < t_end) cuts.push_back(tb);
    for (double xb : model.response_breakpoints) {
        double tb = 2.0 * (range - xb) / model.c;
        if (tb > 0.0 && tb < t_end) cuts.push_back(tb);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto integrand = [&](double t) {
        double v = model.pulse(t) * model.response(range - model.c * t / 2.0);
        if (!std::isfinite(v))
            throw std::runtime_error("received_power: non-finite integrand sample");
        return v;
    };

    double total = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        double a = cuts[s], b = cuts[s + 1];
        int n = std::max(1, static_cast<int>(std::lround(steps * (b - a) / t_end)));
        double h = (b - a) / n;
        // Endpoints sit on discontinuities; sample their one-sided limits
        // from just inside the segment.
        double nudge = (b - a) * 1e-9;
        double sum = 0.5 * (integrand(a + nudge) + integrand(b - nudge));
        for (int k = 1; k < n; ++k) sum += integrand(a + k * h);
        total += sum * h;
    }
    return model.c_a * total;
}

enum class WeatherKind { clear, light_fog, dense_fog, rain, snow };

inline const char* to_string(WeatherKind k) {
    switch (k) {
        case WeatherKind::clear: return "clear";
        case WeatherKind::light_fog: return "light_fog";
        case WeatherKind::dense_fog: return "dense_fog";
        case WeatherKind::rain: return "rain";
        case WeatherKind::snow: return "snow";
    }
    return "?";
}

inline WeatherKind weather_kind_from_string(const std::string& s) {
    if (s == "clear") return WeatherKind::clear;
    if (s == "light_fog" || s == "light-fog") return WeatherKind::light_fog;
    if (s == "dense_fog" || s == "dense-fog") return WeatherKind::dense_fog;
    if (s == "rain") return WeatherKind::rain;
    if (s == "snow") return WeatherKind::snow;
    throw std::invalid_argument("unknown weather kind: '" + s + "'");
}

struct WeatherParams {
    WeatherKind kind = WeatherKind::clear;
    double alpha = 0.0;       // attenuation coefficient, 1/m
    double rate = 0.0;        // precipitation rate parameter
    double noise_floor = 0.03;
    double beta_soft = 0.15;  // scattered-return reflectivity
    double r_min = 1.5;       // minimum scatter range, m
    double k_rain = 0.0005;   // per-meter hit-rate scale, rain
    double k_snow = 0.002;    // per-meter hit-rate scale, snow
    bool wet_ground = false;
    double wet_reflectance = 0.6;
    double wet_drop_prob = 0.3;
    std::vector<std::uint16_t> ground_classes = {1};
    bool scatter_keeps_label = false;
    bool remove_lost_points = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (alpha < 0.0) throw std::invalid_argument("weather: alpha must be >= 0");
        if (rate < 0.0) throw std::invalid_argument("weather: rate must be >= 0");
        if (noise_floor < 0.0 || noise_floor >= 1.0)
            throw std::invalid_argument("weather: noise_floor must be in [0,1)");
        if (beta_soft < 0.0 || beta_soft > 1.0)
            throw std::invalid_argument("weather: beta_soft must be in [0,1]");
        if (r_min <= 0.0) throw std::invalid_argument("weather: r_min must be > 0");
    }

    static WeatherParams from_config(const RunConfig& cfg, WeatherKind kind) {
        WeatherParams p;
        p.kind = kind;
        switch (kind) {
            case WeatherKind::clear: p.alpha = 0.0; break;
            case WeatherKind::light_fog: p.alpha = cfg.light_fog_alphas.front(); break;
            case WeatherKind::dense_fog: p.alpha = cfg.dense_fog_alphas.front(); break;
            case WeatherKind::rain: p.alpha = cfg.alpha_rain; p.rate = cfg.rain_rate; break;
            case WeatherKind::snow: p.alpha = cfg.alpha_snow; p.rate = cfg.snow_rate; break;
        }
        p.noise_floor = cfg.noise_floor;
        p.beta_soft = cfg.beta_soft;
        p.r_min = cfg.r_min;
        p.k_rain = cfg.k_rain;
        p.k_snow = cfg.k_snow;
        p.wet_ground = cfg.wet_ground;
        p.wet_reflectance = cfg.wet_reflectance;
        p.wet_drop_prob = cfg.wet_drop_prob;
        p.scatter_keeps_label = cfg.scatter_keeps_label;
        p.remove_lost_points = cfg.remove_lost_points;
        p.seed = cfg.seed;
        return p;
    }
};

enum class Provenance : std::uint8_t { unchanged, attenuated, scattered };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::unchanged: return "unchanged";
        case Provenance::attenuated: return "attenuated";
        case Provenance::scattered: return "scattered";
    }
    return "?";
}

struct BridgeSample {
    PointCloud cloud;
    LabelArray labels;
    WeatherParams weather;  // parameters actually applied
    std::vector<Provenance> provenance;
};

namespace detail {

// Outcome of the hard-vs-soft competition for one beam.
struct BeamReturn {
    bool keep = true;
    bool scattered = false;
    double range_scale = 1.0;  // new_range / old_range when scattered
    float intensity = 0.0f;
};

inline BeamReturn resolve_beam(float intensity, double range, double i_hard,
                               bool has_soft, double r_soft, double i_soft,
                               const WeatherParams& params) {
    BeamReturn out;
    if (has_soft && i_soft > i_hard) {
        out.scattered = true;
        out.range_scale = r_soft / range;
        out.intensity = static_cast<float>(i_soft);
    } else {
        // exp(-0) == 1 exactly, so alpha == 0 reproduces the input bits.
        out.intensity = (i_hard == static_cast<double>(intensity))
                            ? intensity
                            : static_cast<float>(i_hard);
        out.scattered = false;
    }
    if (out.intensity < params.noise_floor && params.remove_lost_points)
        out.keep = false;
    return out;
}

inline void emit_beam(const Point& p, std::uint16_t label, const BeamReturn& r,
                      const WeatherParams& params, BridgeSample& out) {
    if (!r.keep) return;
    Point q = p;
    q.intensity = r.intensity;
    Provenance prov = Provenance::unchanged;
    std::uint16_t out_label = label;
    if (r.scattered) {
        q.x = static_cast<float>(p.x * r.range_scale);
        q.y = static_cast<float>(p.y * r.range_scale);
        q.z = static_cast<float>(p.z * r.range_scale);
        prov = Provenance::scattered;
        if (!params.scatter_keeps_label) out_label = out.labels.ignore_id;
    } else if (q.intensity != p.intensity) {
        prov = Provenance::attenuated;
    }
    out.cloud.points.push_back(q);
    out.labels.labels.push_back(out_label);
    out.provenance.push_back(prov);
}

}  // namespace detail

// Fog: hard return attenuated by the two-way Beer-Lambert closed form,
// one exponential-range soft-return candidate per beam; the stronger wins.
// Intensities are expected pre-normalized to [0,1].
inline BridgeSample simulate_fog(const PointCloud& cloud, const LabelArray& labels,
                                 const WeatherParams& params, Rng& rng) {
    if (params.kind != WeatherKind::light_fog && params.kind != WeatherKind::dense_fog)
        throw std::invalid_argument("simulate_fog: kind must be a fog kind");
    params.validate();
    if (labels.size() != cloud.size())
        throw std::invalid_argument("simulate_fog: labels not aligned");

    BridgeSample out;
    out.weather = params;
    out.labels.num_classes = labels.num_classes;
    out.labels.ignore_id = labels.ignore_id;
    const double alpha = params.alpha;
    if (alpha == 0.0) {  // no disturbance: exact pass-through
        out.cloud = cloud;
        out.labels = labels;
        out.provenance.assign(cloud.size(), Provenance::unchanged);
        return out;
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        const double range = point_range(p);
        const double i_hard = p.intensity * std::exp(-2.0 * alpha * range);
        // One draw per beam regardless of outcome keeps the stream aligned
        // across parameter sweeps with a fixed seed.
        const double u = rng.uniform01();
        bool has_soft = false;
        double r_soft = 0.0, i_soft = 0.0;
        if (alpha > 0.0 && range > params.r_min) {
            const double mean_free = 1.0 / (2.0 * alpha);
            double draw = -mean_free * std::log1p(-u);
            // Candidates at or beyond the hard target are occluded by it;
            // clip only from below so scattered ranges stay strictly inside.
            if (draw < range) {
                r_soft = std::max(draw, params.r_min);
                i_soft = params.beta_soft * std::exp(-2.0 * alpha * r_soft);
                has_soft = true;
            }
        }
        detail::BeamReturn r =
            detail::resolve_beam(p.intensity, range, i_hard, has_soft, r_soft,
                                 i_soft, params);
        detail::emit_beam(p, labels.labels[i], r, params, out);
    }
    return out;
}

// Rain/snow: each beam independently hits an airborne particle with
// probability 1 - exp(-lambda R), lambda = k_kind * rate; hits scatter at a
// uniform range in [r_min, R), misses attenuate with the small alpha_p.
inline BridgeSample simulate_precipitation(const PointCloud& cloud,
                                           const LabelArray& labels,
                                           const WeatherParams& params, Rng& rng) {
    if (params.kind != WeatherKind::rain && params.kind != WeatherKind::snow)
        throw std::invalid_argument("simulate_precipitation: kind must be rain or snow");
    params.validate();
    if (labels.size() != cloud.size())
        throw std::invalid_argument("simulate_precipitation: labels not aligned");

    BridgeSample out;
    out.weather = params;
    out.labels.num_classes = labels.num_classes;
    out.labels.ignore_id = labels.ignore_id;
    const double k = params.kind == WeatherKind::snow ? params.k_snow : params.k_rain;
    const double lambda = k * params.rate;
    const double alpha_p = params.alpha;
    if (lambda == 0.0 && alpha_p == 0.0) {  // no disturbance: exact pass-through
        out.cloud = cloud;
        out.labels = labels;
        out.provenance.assign(cloud.size(), Provenance::unchanged);
        return out;
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        const double range = point_range(p);
        // Two draws per beam regardless of outcome keep the stream aligned
        // across rate sweeps with a fixed seed.
        const double u_hit = rng.uniform01();
        const double u_range = rng.uniform01();
        const double p_hit = lambda > 0.0 ? -std::expm1(-lambda * range) : 0.0;
        detail::BeamReturn r;
        if (u_hit < p_hit && range > params.r_min) {
            // The particle sits in front of the target, so a hit always
            // pre-empts the hard return.
            r.scattered = true;
            double r_soft = params.r_min + u_range * (range - params.r_min);
            r.range_scale = r_soft / range;
            r.intensity = static_cast<float>(params.beta_soft *
                                             std::exp(-2.0 * alpha_p * r_soft));
            r.keep = !(r.intensity < params.noise_floor && params.remove_lost_points);
        } else {
            const double i_hard = p.intensity * std::exp(-2.0 * alpha_p * range);
            r = detail::resolve_beam(p.intensity, range, i_hard, false, 0.0, 0.0,
                                     params);
        }
        detail::emit_beam(p, labels.labels[i], r, params, out);
    }
    return out;
}

// Ground-class points lose intensity to the wet-surface reflectance factor
// and are dropped with probability wet_drop_prob (specular loss).
inline std::pair<PointCloud, LabelArray> wet_ground(const PointCloud& cloud,
                                                    const LabelArray& labels,
                                                    const WeatherParams& params,
                                                    Rng& rng,
                                                    std::vector<Provenance>* provenance = nullptr) {
    if (labels.size() != cloud.size())
        throw std::invalid_argument("wet_ground: labels not aligned");
    if (params.ground_classes.empty()) {
        std::cerr << "warning: wet_ground enabled with empty ground-class set; "
                     "skipping\n";
        return {cloud, labels};
    }
    auto is_ground = [&](std::uint16_t y) {
        return std::find(params.ground_classes.begin(), params.ground_classes.end(),
                         y) != params.ground_classes.end();
    };
    PointCloud out_cloud;
    LabelArray out_labels;
    out_labels.num_classes = labels.num_classes;
    out_labels.ignore_id = labels.ignore_id;
    std::vector<Provenance> out_prov;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Point p = cloud.points[i];
        Provenance prov = provenance ? (*provenance)[i] : Provenance::unchanged;
        if (is_ground(labels.labels[i])) {
            if (rng.uniform01() < params.wet_drop_prob) continue;
            float wetted = static_cast<float>(p.intensity * params.wet_reflectance);
            if (wetted != p.intensity) {
                p.intensity = wetted;
                if (prov == Provenance::unchanged) prov = Provenance::attenuated;
            }
        }
        out_cloud.points.push_back(p);
        out_labels.labels.push_back(labels.labels[i]);
        out_prov.push_back(prov);
    }
    if (provenance) *provenance = std::move(out_prov);
    return {std::move(out_cloud), std::move(out_labels)};
}

// Per-scan composition of the bridge generator: weights over weather kinds
// plus the per-kind coefficient sets to draw from.
struct BridgeComposition {
    double w_clear = 0.0;
    double w_light_fog = 1.0;
    double w_dense_fog = 1.0;
    double w_rain = 1.0;
    double w_snow = 1.0;
    std::vector<double> light_fog_alphas = {0.005, 0.01, 0.02, 0.03, 0.06};
    std::vector<double> dense_fog_alphas = {0.1, 0.12, 0.15, 0.2};
    double rain_rate = 0.5;
    double snow_rate = 0.5;
    double alpha_rain = 0.002;
    double alpha_snow = 0.004;

    static BridgeComposition from_config(const RunConfig& cfg) {
        BridgeComposition c;
        c.w_clear = cfg.w_clear;
        c.w_light_fog = cfg.w_light_fog;
        c.w_dense_fog = cfg.w_dense_fog;
        c.w_rain = cfg.w_rain;
        c.w_snow = cfg.w_snow;
        c.light_fog_alphas = cfg.light_fog_alphas;
        c.dense_fog_alphas = cfg.dense_fog_alphas;
        c.rain_rate = cfg.rain_rate;
        c.snow_rate = cfg.snow_rate;
        c.alpha_rain = cfg.alpha_rain;
        c.alpha_snow = cfg.alpha_snow;
        return c;
    }
};

// Samples one weather kind per scan, draws its coefficient, applies the
// matching simulator, then wet ground if enabled. Labels carry through.
inline BridgeSample generate_bridge(const PointCloud& cloud, const LabelArray& labels,
                                    const BridgeComposition& comp,
                                    const WeatherParams& proto, Rng& rng) {
    const std::vector<double> weights = {comp.w_clear, comp.w_light_fog,
                                         comp.w_dense_fog, comp.w_rain, comp.w_snow};
    std::size_t pick = rng.pick_weighted(weights);  // throws on all-zero

    WeatherParams params = proto;
    params.kind = static_cast<WeatherKind>(pick);
    BridgeSample sample;
    switch (params.kind) {
        case WeatherKind::clear: {
            params.alpha = 0.0;
            params.rate = 0.0;
            sample.cloud = cloud;
            sample.labels = labels;
            sample.weather = params;
            sample.provenance.assign(cloud.size(), Provenance::unchanged);
            break;
        }
        case WeatherKind::light_fog: {
            params.alpha = comp.light_fog_alphas[rng.uniform_int(comp.light_fog_alphas.size())];
            sample = simulate_fog(cloud, labels, params, rng);
            break;
        }
        case WeatherKind::dense_fog: {
            params.alpha = comp.dense_fog_alphas[rng.uniform_int(comp.dense_fog_alphas.size())];
            sample = simulate_fog(cloud, labels, params, rng);
            break;
        }
        case WeatherKind::rain: {
            params.alpha = comp.alpha_rain;
            params.rate = comp.rain_rate;
            sample = simulate_precipitation(cloud, labels, params, rng);
            break;
        }
        case WeatherKind::snow: {
            params.alpha = comp.alpha_snow;
            params.rate = comp.snow_rate;
            sample = simulate_precipitation(cloud, labels, params, rng);
            break;
        }
    }
    if (params.wet_ground && params.kind != WeatherKind::clear) {
        auto [wc, wl] = wet_ground(sample.cloud, sample.labels, params, rng,
                                   &sample.provenance);
        sample.cloud = std::move(wc);
        sample.labels = std::move(wl);
    }
    return sample;
}

}  // namespace unimix
