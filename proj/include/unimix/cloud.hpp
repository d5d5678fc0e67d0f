// Point-cloud value types, coordinate transforms, normalization and
// mask-based filtering/concatenation. Everything here is a pure function
// over immutable inputs.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unimix {

struct Point {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
    float intensity = 0.0f;

    bool operator==(const Point&) const = default;
};

// Range from the sensor origin (3D euclidean norm), in double precision.
inline double point_range(const Point& p) {
    double x = p.x, y = p.y, z = p.z;
    return std::sqrt(x * x + y * y + z * z);
}

struct PointCloud {
    std::vector<Point> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    const Point& operator[](std::size_t i) const { return points[i]; }
    Point& operator[](std::size_t i) { return points[i]; }

    bool operator==(const PointCloud&) const = default;

    // Throws naming the first offending point index.
    void validate() const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const Point& p = points[i];
            if (!std::isfinite(p.x) || !std::isfinite(p.y) ||
                !std::isfinite(p.z) || !std::isfinite(p.intensity)) {
                throw std::runtime_error(
                    "point cloud contains non-finite value at point index " +
                    std::to_string(i));
            }
        }
    }
};

struct LabelArray {
    std::vector<std::uint16_t> labels;
    std::uint16_t num_classes = 0;
    std::uint16_t ignore_id = 0;

    std::size_t size() const { return labels.size(); }
    std::uint16_t operator[](std::size_t i) const { return labels[i]; }

    bool operator==(const LabelArray&) const = default;

    void validate_against(const PointCloud& cloud) const {
        if (labels.size() != cloud.size()) {
            throw std::runtime_error(
                "label array length " + std::to_string(labels.size()) +
                " does not match point cloud length " + std::to_string(cloud.size()));
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= num_classes && labels[i] != ignore_id) {
                throw std::runtime_error("label " + std::to_string(labels[i]) +
                                         " at index " + std::to_string(i) +
                                         " outside [0, num_classes) and not ignore");
            }
        }
    }
};

struct CylinderCoords {
    std::vector<double> rho;    // radial distance to the z-axis, >= 0
    std::vector<double> theta;  // azimuth in [-pi,. pi]
    std::vector<double> z;

    std::size_t size() const { return rho.size(); }
};

// Affine [0,1] normalization that remembers its map so it can be undone.
struct NormalizedAxis {
    std::vector<double> values;
    double min_raw = 0.0;
    double max_raw = 0.0;

    double denormalize(double v) const {
        return min_raw + v * (max_raw - min_raw);
    }
};

// Per-point boolean selection, one byte per point. The drawn parameters
// that produced a mask live with MixMask in mixing.hpp.
using MaskBits = std::vector<std::uint8_t>;

inline CylinderCoords to_cylinder(const PointCloud& cloud) {
    CylinderCoords out;
    out.rho.reserve(cloud.size());
    out.theta.reserve(cloud.size());
    out.z.reserve(cloud.size());
    for (const Point& p : cloud.points) {
        double x = p.x, y = p.y;
        out.rho.push_back(std::sqrt(x * x + y * y));
        // atan2 gives the full-quadrant angle in [-pi, pi]; the origin is
        // pinned to theta = 0 so it lands in a deterministic partition.
        out.theta.push_back((x == 0.0 && y == 0.0) ? 0.0 : std::atan2(y, x));
        out.z.push_back(p.z);
    }
    return out;
}

inline NormalizedAxis normalize_axis(std::span<const double> values) {
    NormalizedAxis out;
    if (values.empty()) return out;
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out.min_raw = lo;
    out.max_raw = hi;
    out.values.reserve(values.size());
    if (lo == hi) {
        out.values.assign(values.size(), 0.0);
        return out;
    }
    double inv = 1.0 / (hi - lo);
    for (double v : values) out.values.push_back((v - lo) * inv);
    return out;
}

// Keeps exactly the points (and their labels, order preserved) where
// mask == keep. Together with keep=false this partitions the cloud.
inline std::pair<PointCloud, LabelArray> filter_by_mask(
    const PointCloud& cloud, const LabelArray& labels, const MaskBits& mask,
    bool keep) {
    if (mask.size() != cloud.size()) {
        throw std::invalid_argument(
            "mask length " + std::to_string(mask.size()) +
            " does not match point cloud length " + std::to_string(cloud.size()));
    }
    if (labels.size() != cloud.size()) {
        throw std::invalid_argument("labels not aligned with point cloud");
    }
    PointCloud out_cloud;
    LabelArray out_labels;
    out_labels.num_classes = labels.num_classes;
    out_labels.ignore_id = labels.ignore_id;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (static_cast<bool>(mask[i]) == keep) {
            out_cloud.points.push_back(cloud.points[i]);
            out_labels.labels.push_back(labels.labels[i]);
        }
    }
    return {std::move(out_cloud), std::move(out_labels)};
}

inline std::pair<PointCloud, LabelArray> concat(
    const PointCloud& cloud_a, const LabelArray& labels_a,
    const PointCloud& cloud_b, const LabelArray& labels_b) {
    if (labels_a.num_classes != labels_b.num_classes ||
        labels_a.ignore_id != labels_b.ignore_id) {
        throw std::invalid_argument("concat: label class spaces differ");
    }
    if (labels_a.size() != cloud_a.size() || labels_b.size() != cloud_b.size()) {
        throw std::invalid_argument("concat: labels not aligned with clouds");
    }
    PointCloud out_cloud;
    out_cloud.points.reserve(cloud_a.size() + cloud_b.size());
    out_cloud.points.insert(out_cloud.points.end(), cloud_a.points.begin(),
                            cloud_a.points.end());
    out_cloud.points.insert(out_cloud.points.end(), cloud_b.points.begin(),
                            cloud_b.points.end());
    LabelArray out_labels;
    out_labels.num_classes = labels_a.num_classes;
    out_labels.ignore_id = labels_a.ignore_id;
    out_labels.labels.reserve(labels_a.size() + labels_b.size());
    out_labels.labels.insert(out_labels.labels.end(), labels_a.labels.begin(),
                             labels_a.labels.end());
    out_labels.labels.insert(out_labels.labels.end(), labels_b.labels.begin(),
                             labels_b.labels.end());
    return {std::move(out_cloud), std::move(out_labels)};
}

}  // namespace unimix
