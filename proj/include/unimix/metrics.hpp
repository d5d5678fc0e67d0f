// Confusion-matrix accumulation and IoU/mIoU computation. Rows are ground
// truth, columns prediction; points whose ground truth is the ignore id
// never enter the matrix. Matrices merge by elementwise sum, so shards
// accumulated concurrently combine deterministically.

#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unimix/cloud.hpp"

namespace unimix {

struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::uint16_t ignore_id = 0;
    std::vector<std::uint64_t> counts;  // row-major gt x pred

    ConfusionMatrix() = default;
    ConfusionMatrix(std::size_t classes, std::uint16_t ignore)
        : num_classes(classes), ignore_id(ignore), counts(classes * classes, 0) {}

    std::uint64_t& at(std::size_t gt, std::size_t pred) {
        return counts[gt * num_classes + pred];
    }
    std::uint64_t at(std::size_t gt, std::size_t pred) const {
        return counts[gt * num_classes + pred];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t c : counts) t += c;
        return t;
    }

    void merge(const ConfusionMatrix& other) {
        if (other.num_classes != num_classes)
            throw std::invalid_argument("confusion matrix merge: size mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    }
};

inline void accumulate(ConfusionMatrix& cm, const LabelArray& pred,
                       const LabelArray& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("accumulate: pred/gt length mismatch");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        std::uint16_t g = gt.labels[i];
        if (g == cm.ignore_id) continue;
        std::uint16_t p = pred.labels[i];
        if (g >= cm.num_classes || p >= cm.num_classes)
            throw std::invalid_argument("accumulate: label outside matrix at index " +
                                        std::to_string(i));
        ++cm.at(g, p);
    }
}

// IoU_c = TP / (TP + FP + FN); classes with zero denominator have no score.
inline std::vector<std::optional<double>> iou(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out(cm.num_classes);
    for (std::size_t c = 0; c < cm.num_classes; ++c) {
        std::uint64_t tp = cm.at(c, c);
        std::uint64_t fp = 0, fn = 0;
        for (std::size_t k = 0; k < cm.num_classes; ++k) {
            if (k == c) continue;
            fp += cm.at(k, c);
            fn += cm.at(c, k);
        }
        std::uint64_t den = tp + fp + fn;
        if (den > 0)
            out[c] = static_cast<double>(tp) / static_cast<double>(den);
    }
    return out;
}

// Mean over scored non-ignore classes. `count_missing_as_zero` switches to
// the convention where unscored classes contribute 0 instead of being
// excluded, for comparability with benchmarks that use it.
inline std::optional<double> miou(const ConfusionMatrix& cm,
                                  bool count_missing_as_zero = false) {
    std::vector<std::optional<double>> per_class = iou(cm);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < cm.num_classes; ++c) {
        if (c == cm.ignore_id) continue;
        if (per_class[c]) {
            sum += *per_class[c];
            ++n;
        } else if (count_missing_as_zero) {
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

// Per-class IoU table plus the mean, one class per line.
inline void print_metric_report(const ConfusionMatrix& cm,
                                const std::vector<std::string>& class_names,
                                std::ostream& os) {
    std::vector<std::optional<double>> per_class = iou(cm);
    os << std::fixed << std::setprecision(4);
    for (std::size_t c = 0; c < cm.num_classes; ++c) {
        if (c == cm.ignore_id) continue;
        std::string name = c < class_names.size() ? class_names[c]
                                                  : "class-" + std::to_string(c);
        os << std::setw(16) << std::left << name << " IoU = ";
        if (per_class[c])
            os << *per_class[c] << "\n";
        else
            os << "n/a\n";
    }
    std::optional<double> mean = miou(cm);
    os << std::setw(16) << std::left << "mIoU" << "     = ";
    if (mean)
        os << *mean << "\n";
    else
        os << "undefined\n";
}

}  // namespace unimix
