// The Universal Mixing operator family: spatial, intensity, and semantic
// mask generation over a scan pair, the one-directional mix, and the
// bidirectional form that exchanges the masked regions of both scans.
//
// One box/interval/class draw is shared across the pair, each cloud
// evaluating membership in its own normalized frame, so the bidirectional
// outputs exactly exchange the same region. Interval membership is
// half-open [lo, hi), closing at the top of the axis so a full-range draw
// covers every point.

#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <variant>
#include <vector>

#include "unimix/cloud.hpp"
#include "unimix/config.hpp"
#include "unimix/rng.hpp"

namespace unimix {

enum class MixKind { spatial, intensity, semantic };

inline const char* to_string(MixKind k) {
    switch (k) {
        case MixKind::spatial: return "spatial";
        case MixKind::intensity: return "intensity";
        case MixKind::semantic: return "semantic";
    }
    return "?";
}

// The sampled parameters that produced a mask, for logging/reproduction.
struct SpatialDraw {
    double rho_lo = 0.0;    // in normalized [0,1]
    double theta_lo = 0.0;  // radians
    double z_lo = 0.0;      // in normalized [0,1]
    double rho_len = 1.0;
    double theta_len = 2.0 * M_PI;
    double z_len = 1.0;
};

struct IntensityDraw {
    double i_lo = 0.0;  // in normalized [0,1]
    double i_len = 1.0;
};

struct SemanticDraw {
    std::set<std::uint16_t> classes_a;
    std::set<std::uint16_t> classes_b;
};

struct MixMask {
    MaskBits bits;
    MixKind kind = MixKind::spatial;
    std::variant<SpatialDraw, IntensityDraw, SemanticDraw> drawn;
};

struct MixConfig {
    double delta_rho_frac = 0.5;
    double delta_theta = M_PI;
    double delta_z_frac = 0.5;
    double delta_i_frac = 0.5;
    double class_select_prob = 0.5;

    static MixConfig from_config(const RunConfig& cfg) {
        return MixConfig{cfg.delta_rho_frac, cfg.delta_theta, cfg.delta_z_frac,
                         cfg.delta_i_frac, cfg.class_select_prob};
    }
};

namespace detail {

// Half-open [lo, lo+len), closed at the axis top so len == full range
// selects everything.
inline bool in_interval(double v, double lo, double len, double axis_hi) {
    double hi = lo + len;
    if (v < lo) return false;
    if (v < hi) return true;
    return hi >= axis_hi && v <= hi;
}

inline MaskBits spatial_membership(const PointCloud& cloud, const SpatialDraw& d) {
    CylinderCoords cyl = to_cylinder(cloud);
    NormalizedAxis rho_n = normalize_axis(cyl.rho);
    NormalizedAxis z_n = normalize_axis(cyl.z);
    MaskBits bits(cloud.size(), 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        bool in = in_interval(rho_n.values[i], d.rho_lo, d.rho_len, 1.0) &&
                  in_interval(cyl.theta[i], d.theta_lo, d.theta_len, M_PI) &&
                  in_interval(z_n.values[i], d.z_lo, d.z_len, 1.0);
        bits[i] = in ? 1 : 0;
    }
    return bits;
}

inline MaskBits intensity_membership(const PointCloud& cloud, const IntensityDraw& d) {
    std::vector<double> raw(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) raw[i] = cloud.points[i].intensity;
    NormalizedAxis i_n = normalize_axis(raw);
    MaskBits bits(cloud.size(), 0);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        bits[i] = in_interval(i_n.values[i], d.i_lo, d.i_len, 1.0) ? 1 : 0;
    return bits;
}

inline MaskBits semantic_membership(const LabelArray& labels,
                                    const std::set<std::uint16_t>& classes) {
    MaskBits bits(labels.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::uint16_t y = labels.labels[i];
        bits[i] = (y != labels.ignore_id && classes.count(y)) ? 1 : 0;
    }
    return bits;
}

// Each present non-ignore class joins independently with prob p; re-drawn
// until non-empty whenever any class is present at all.
inline std::set<std::uint16_t> draw_class_set(const LabelArray& labels, double p,
                                              Rng& rng) {
    std::set<std::uint16_t> present(labels.labels.begin(), labels.labels.end());
    present.erase(labels.ignore_id);
    if (present.empty()) return {};
    std::set<std::uint16_t> chosen;
    while (chosen.empty()) {
        for (std::uint16_t c : present)
            if (rng.bernoulli(p)) chosen.insert(c);
    }
    return chosen;
}

}  // namespace detail

// Deterministic variants taking an explicit draw; the public mask ops
// sample the draw and delegate here.
inline std::pair<MixMask, MixMask> spatial_masks_with_draw(const PointCloud& cloud_a,
                                                           const PointCloud& cloud_b,
                                                           const SpatialDraw& d) {
    if (cloud_a.empty() || cloud_b.empty())
        throw std::invalid_argument("spatial_masks: clouds must be non-empty");
    MixMask ma{detail::spatial_membership(cloud_a, d), MixKind::spatial, d};
    MixMask mb{detail::spatial_membership(cloud_b, d), MixKind::spatial, d};
    return {std::move(ma), std::move(mb)};
}

inline std::pair<MixMask, MixMask> spatial_masks(const PointCloud& cloud_a,
                                                 const PointCloud& cloud_b,
                                                 const MixConfig& cfg, Rng& rng) {
    SpatialDraw d;
    d.rho_len = cfg.delta_rho_frac;
    d.theta_len = cfg.delta_theta;
    d.z_len = cfg.delta_z_frac;
    d.rho_lo = rng.uniform(0.0, 1.0 - cfg.delta_rho_frac);
    d.theta_lo = rng.uniform(-M_PI, M_PI - cfg.delta_theta);
    d.z_lo = rng.uniform(0.0, 1.0 - cfg.delta_z_frac);
    return spatial_masks_with_draw(cloud_a, cloud_b, d);
}

inline std::pair<MixMask, MixMask> intensity_masks_with_draw(const PointCloud& cloud_a,
                                                             const PointCloud& cloud_b,
                                                             const IntensityDraw& d) {
    if (cloud_a.empty() || cloud_b.empty())
        throw std::invalid_argument("intensity_masks: clouds must be non-empty");
    MixMask ma{detail::intensity_membership(cloud_a, d), MixKind::intensity, d};
    MixMask mb{detail::intensity_membership(cloud_b, d), MixKind::intensity, d};
    return {std::move(ma), std::move(mb)};
}

inline std::pair<MixMask, MixMask> intensity_masks(const PointCloud& cloud_a,
                                                   const PointCloud& cloud_b,
                                                   const MixConfig& cfg, Rng& rng) {
    IntensityDraw d;
    d.i_len = cfg.delta_i_frac;
    d.i_lo = rng.uniform(0.0, 1.0 - cfg.delta_i_frac);
    return intensity_masks_with_draw(cloud_a, cloud_b, d);
}

inline std::pair<MixMask, MixMask> semantic_masks_with_draw(const LabelArray& labels_a,
                                                            const LabelArray& labels_b,
                                                            const SemanticDraw& d) {
    MixMask ma{detail::semantic_membership(labels_a, d.classes_a), MixKind::semantic, d};
    MixMask mb{detail::semantic_membership(labels_b, d.classes_b), MixKind::semantic, d};
    return {std::move(ma), std::move(mb)};
}

inline std::pair<MixMask, MixMask> semantic_masks(const LabelArray& labels_a,
                                                  const LabelArray& labels_b,
                                                  const MixConfig& cfg, Rng& rng) {
    SemanticDraw d;
    d.classes_a = detail::draw_class_set(labels_a, cfg.class_select_prob, rng);
    d.classes_b = detail::draw_class_set(labels_b, cfg.class_select_prob, rng);
    return semantic_masks_with_draw(labels_a, labels_b, d);
}

// One direction of the mixing operator: the unmasked remainder of S
// concatenated with the masked region of T; labels travel with points.
inline std::pair<PointCloud, LabelArray> mix(const PointCloud& cloud_s,
                                             const LabelArray& labels_s,
                                             const PointCloud& cloud_t,
                                             const LabelArray& labels_t,
                                             const MixMask& mask_s,
                                             const MixMask& mask_t) {
    auto [s_keep, s_keep_labels] = filter_by_mask(cloud_s, labels_s, mask_s.bits, false);
    auto [t_cut, t_cut_labels] = filter_by_mask(cloud_t, labels_t, mask_t.bits, true);
    return concat(s_keep, s_keep_labels, t_cut, t_cut_labels);
}

struct MixedPair {
    PointCloud cloud_s_to_t;
    LabelArray labels_s_to_t;
    PointCloud cloud_t_to_s;
    LabelArray labels_t_to_s;
    MixMask mask_s;
    MixMask mask_t;
};

// Both directions from one shared draw: what leaves S lands in the T->S
// output and vice versa, so the two outputs exactly repartition S and T.
inline MixedPair mix_bidirectional(const PointCloud& cloud_s, const LabelArray& labels_s,
                                   const PointCloud& cloud_t, const LabelArray& labels_t,
                                   MixKind kind, const MixConfig& cfg, Rng& rng) {
    std::pair<MixMask, MixMask> masks;
    switch (kind) {
        case MixKind::spatial:
            masks = spatial_masks(cloud_s, cloud_t, cfg, rng);
            break;
        case MixKind::intensity:
            masks = intensity_masks(cloud_s, cloud_t, cfg, rng);
            break;
        case MixKind::semantic:
            masks = semantic_masks(labels_s, labels_t, cfg, rng);
            break;
    }
    MixedPair out;
    out.mask_s = std::move(masks.first);
    out.mask_t = std::move(masks.second);
    auto [st_cloud, st_labels] =
        mix(cloud_s, labels_s, cloud_t, labels_t, out.mask_s, out.mask_t);
    // Roles swapped: T keeps its unmasked remainder and receives S's region.
    auto [ts_keep, ts_keep_labels] =
        filter_by_mask(cloud_t, labels_t, out.mask_t.bits, false);
    auto [s_cut, s_cut_labels] = filter_by_mask(cloud_s, labels_s, out.mask_s.bits, true);
    auto [ts_cloud, ts_labels] = concat(ts_keep, ts_keep_labels, s_cut, s_cut_labels);
    out.cloud_s_to_t = std::move(st_cloud);
    out.labels_s_to_t = std::move(st_labels);
    out.cloud_t_to_s = std::move(ts_cloud);
    out.labels_t_to_s = std::move(ts_labels);
    return out;
}

}  // namespace unimix
